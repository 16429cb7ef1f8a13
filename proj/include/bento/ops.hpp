#pragma once

#include <cmath>
#include <thread>

#include "bento/tensor.hpp"

namespace bento {

namespace detail {

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                     " vs " + shape_str(b.shape()));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise ops
// ---------------------------------------------------------------------------

/// a + b. Same shapes, or one side scalar (single element).
inline Tensor add(const Tensor& a, const Tensor& b) {
  const bool a_scalar = a.size() == 1, b_scalar = b.size() == 1;
  if (!a_scalar && !b_scalar) detail::require_same_shape(a, b, "add");
  const Tensor& big = b_scalar ? a : b;
  Tensor out = Tensor::zeros(big.shape());
  auto& o = out.data();
  const auto& da = a.data();
  const auto& db = b.data();
  for (int64_t i = 0; i < out.size(); ++i)
    o[i] = da[a_scalar ? 0 : i] + db[b_scalar ? 0 : i];
  debug_check_finite(out, "add");
  if (recording(a, b)) {
    out.set_requires_grad(true);
    Graph::record("add", [a, b, out, a_scalar, b_scalar]() mutable {
      if (!out.has_grad()) return;
      const auto& go = out.grad();
      if (a.requires_grad()) {
        auto& ga = a.grad_accum();
        for (int64_t i = 0; i < out.size(); ++i) ga[a_scalar ? 0 : i] += go[i];
      }
      if (b.requires_grad()) {
        auto& gb = b.grad_accum();
        for (int64_t i = 0; i < out.size(); ++i) gb[b_scalar ? 0 : i] += go[i];
      }
    });
  }
  return out;
}

/// a - b. Same shapes only.
inline Tensor sub(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "sub");
  Tensor out = Tensor::zeros(a.shape());
  for (int64_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
  debug_check_finite(out, "sub");
  if (recording(a, b)) {
    out.set_requires_grad(true);
    Graph::record("sub", [a, b, out]() mutable {
      if (!out.has_grad()) return;
      const auto& go = out.grad();
      if (a.requires_grad()) {
        auto& ga = a.grad_accum();
        for (int64_t i = 0; i < out.size(); ++i) ga[i] += go[i];
      }
      if (b.requires_grad()) {
        auto& gb = b.grad_accum();
        for (int64_t i = 0; i < out.size(); ++i) gb[i] -= go[i];
      }
    });
  }
  return out;
}

/// a * b elementwise. Same shapes, or one side scalar.
inline Tensor mul(const Tensor& a, const Tensor& b) {
  const bool a_scalar = a.size() == 1, b_scalar = b.size() == 1;
  if (!a_scalar && !b_scalar) detail::require_same_shape(a, b, "mul");
  const Tensor& big = b_scalar ? a : b;
  Tensor out = Tensor::zeros(big.shape());
  for (int64_t i = 0; i < out.size(); ++i)
    out[i] = a[a_scalar ? 0 : i] * b[b_scalar ? 0 : i];
  debug_check_finite(out, "mul");
  if (recording(a, b)) {
    out.set_requires_grad(true);
    Graph::record("mul", [a, b, out, a_scalar, b_scalar]() mutable {
      if (!out.has_grad()) return;
      const auto& go = out.grad();
      if (a.requires_grad()) {
        auto& ga = a.grad_accum();
        for (int64_t i = 0; i < out.size(); ++i)
          ga[a_scalar ? 0 : i] += go[i] * b[b_scalar ? 0 : i];
      }
      if (b.requires_grad()) {
        auto& gb = b.grad_accum();
        for (int64_t i = 0; i < out.size(); ++i)
          gb[b_scalar ? 0 : i] += go[i] * a[a_scalar ? 0 : i];
      }
    });
  }
  return out;
}

/// c * x for a plain constant c.
inline Tensor scale(const Tensor& x, double c) {
  Tensor out = Tensor::zeros(x.shape());
  for (int64_t i = 0; i < out.size(); ++i) out[i] = c * x[i];
  debug_check_finite(out, "scale");
  if (recording(x)) {
    out.set_requires_grad(true);
    Graph::record("scale", [x, out, c]() mutable {
      if (!out.has_grad()) return;
      const auto& go = out.grad();
      auto& gx = x.grad_accum();
      for (int64_t i = 0; i < out.size(); ++i) gx[i] += c * go[i];
    });
  }
  return out;
}

inline Tensor neg(const Tensor& x) { return scale(x, -1.0); }

/// x + c elementwise for a plain constant c.
inline Tensor add_scalar(const Tensor& x, double c) {
  Tensor out = Tensor::zeros(x.shape());
  for (int64_t i = 0; i < out.size(); ++i) out[i] = x[i] + c;
  if (recording(x)) {
    out.set_requires_grad(true);
    Graph::record("add_scalar", [x, out]() mutable {
      if (!out.has_grad()) return;
      const auto& go = out.grad();
      auto& gx = x.grad_accum();
      for (int64_t i = 0; i < out.size(); ++i) gx[i] += go[i];
    });
  }
  return out;
}

/// 1 - x elementwise.
inline Tensor one_minus(const Tensor& x) {
  Tensor out = Tensor::zeros(x.shape());
  for (int64_t i = 0; i < out.size(); ++i) out[i] = 1.0 - x[i];
  if (recording(x)) {
    out.set_requires_grad(true);
    Graph::record("one_minus", [x, out]() mutable {
      if (!out.has_grad()) return;
      const auto& go = out.grad();
      auto& gx = x.grad_accum();
      for (int64_t i = 0; i < out.size(); ++i) gx[i] -= go[i];
    });
  }
  return out;
}

inline Tensor leaky_relu(const Tensor& x, double alpha = 0.2) {
  Tensor out = Tensor::zeros(x.shape());
  for (int64_t i = 0; i < out.size(); ++i) out[i] = x[i] > 0.0 ? x[i] : alpha * x[i];
  debug_check_finite(out, "leaky_relu");
  if (recording(x)) {
    out.set_requires_grad(true);
    Graph::record("leaky_relu", [x, out, alpha]() mutable {
      if (!out.has_grad()) return;
      const auto& go = out.grad();
      auto& gx = x.grad_accum();
      for (int64_t i = 0; i < out.size(); ++i)
        gx[i] += go[i] * (x[i] > 0.0 ? 1.0 : alpha);
    });
  }
  return out;
}

inline Tensor sigmoid(const Tensor& x) {
  Tensor out = Tensor::zeros(x.shape());
  for (int64_t i = 0; i < out.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-x[i]));
  debug_check_finite(out, "sigmoid");
  if (recording(x)) {
    out.set_requires_grad(true);
    Graph::record("sigmoid", [x, out]() mutable {
      if (!out.has_grad()) return;
      const auto& go = out.grad();
      auto& gx = x.grad_accum();
      for (int64_t i = 0; i < out.size(); ++i) gx[i] += go[i] * out[i] * (1.0 - out[i]);
    });
  }
  return out;
}

inline Tensor tanh(const Tensor& x) {
  Tensor out = Tensor::zeros(x.shape());
  for (int64_t i = 0; i < out.size(); ++i) out[i] = std::tanh(x[i]);
  debug_check_finite(out, "tanh");
  if (recording(x)) {
    out.set_requires_grad(true);
    Graph::record("tanh", [x, out]() mutable {
      if (!out.has_grad()) return;
      const auto& go = out.grad();
      auto& gx = x.grad_accum();
      for (int64_t i = 0; i < out.size(); ++i) gx[i] += go[i] * (1.0 - out[i] * out[i]);
    });
  }
  return out;
}

/// ln(max(x, eps)). The clamp keeps adversarial losses finite when a
/// discriminator saturates; the gradient is zero on the clamped branch.
inline Tensor log_clamped(const Tensor& x, double eps = 1e-7) {
  Tensor out = Tensor::zeros(x.shape());
  for (int64_t i = 0; i < out.size(); ++i) out[i] = std::log(x[i] > eps ? x[i] : eps);
  if (recording(x)) {
    out.set_requires_grad(true);
    Graph::record("log_clamped", [x, out, eps]() mutable {
      if (!out.has_grad()) return;
      const auto& go = out.grad();
      auto& gx = x.grad_accum();
      for (int64_t i = 0; i < out.size(); ++i)
        if (x[i] > eps) gx[i] += go[i] / x[i];
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Broadcast ops (the supported patterns: scalar, per-channel, per-position)
// ---------------------------------------------------------------------------

/// x[B,N] + b[N], bias added to every row.
inline Tensor add_bias_rows(const Tensor& x, const Tensor& b) {
  if (x.ndim() != 2 || b.ndim() != 1 || b.dim(0) != x.dim(1))
    throw ShapeError("add_bias_rows: unsupported broadcast " + shape_str(x.shape()) +
                     " + " + shape_str(b.shape()));
  const int B = x.dim(0), N = x.dim(1);
  Tensor out = Tensor::zeros(x.shape());
  for (int i = 0; i < B; ++i)
    for (int j = 0; j < N; ++j) out.at(i, j) = x.at(i, j) + b[j];
  if (recording(x, b)) {
    out.set_requires_grad(true);
    Graph::record("add_bias_rows", [x, b, out, B, N]() mutable {
      if (!out.has_grad()) return;
      const auto& go = out.grad();
      if (x.requires_grad()) {
        auto& gx = x.grad_accum();
        for (int64_t i = 0; i < out.size(); ++i) gx[i] += go[i];
      }
      if (b.requires_grad()) {
        auto& gb = b.grad_accum();
        for (int i = 0; i < B; ++i)
          for (int j = 0; j < N; ++j) gb[j] += go[size_t(i) * N + j];
      }
    });
  }
  return out;
}

/// x[C,H,W] + b[C], one bias per channel.
inline Tensor add_channels(const Tensor& x, const Tensor& b) {
  if (x.ndim() != 3 || b.ndim() != 1 || b.dim(0) != x.dim(0))
    throw ShapeError("add_channels: unsupported broadcast " + shape_str(x.shape()) +
                     " + " + shape_str(b.shape()));
  const int C = x.dim(0);
  const int64_t hw = int64_t(x.dim(1)) * x.dim(2);
  Tensor out = Tensor::zeros(x.shape());
  for (int c = 0; c < C; ++c)
    for (int64_t i = 0; i < hw; ++i) out[c * hw + i] = x[c * hw + i] + b[c];
  if (recording(x, b)) {
    out.set_requires_grad(true);
    Graph::record("add_channels", [x, b, out, C, hw]() mutable {
      if (!out.has_grad()) return;
      const auto& go = out.grad();
      if (x.requires_grad()) {
        auto& gx = x.grad_accum();
        for (int64_t i = 0; i < out.size(); ++i) gx[i] += go[i];
      }
      if (b.requires_grad()) {
        auto& gb = b.grad_accum();
        for (int c = 0; c < C; ++c)
          for (int64_t i = 0; i < hw; ++i) gb[c] += go[c * hw + i];
      }
    });
  }
  return out;
}

/// x[C,H,W] * g[C], one gate per channel.
inline Tensor scale_channels(const Tensor& x, const Tensor& g) {
  if (x.ndim() != 3 || g.ndim() != 1 || g.dim(0) != x.dim(0))
    throw ShapeError("scale_channels: unsupported broadcast " + shape_str(x.shape()) +
                     " * " + shape_str(g.shape()));
  const int C = x.dim(0);
  const int64_t hw = int64_t(x.dim(1)) * x.dim(2);
  Tensor out = Tensor::zeros(x.shape());
  for (int c = 0; c < C; ++c)
    for (int64_t i = 0; i < hw; ++i) out[c * hw + i] = x[c * hw + i] * g[c];
  debug_check_finite(out, "scale_channels");
  if (recording(x, g)) {
    out.set_requires_grad(true);
    Graph::record("scale_channels", [x, g, out, C, hw]() mutable {
      if (!out.has_grad()) return;
      const auto& go = out.grad();
      if (x.requires_grad()) {
        auto& gx = x.grad_accum();
        for (int c = 0; c < C; ++c)
          for (int64_t i = 0; i < hw; ++i) gx[c * hw + i] += go[c * hw + i] * g[c];
      }
      if (g.requires_grad()) {
        auto& gg = g.grad_accum();
        for (int c = 0; c < C; ++c)
          for (int64_t i = 0; i < hw; ++i) gg[c] += go[c * hw + i] * x[c * hw + i];
      }
    });
  }
  return out;
}

/// x[C,H,W] * s[1,H,W] (or s[H,W]), one gate per spatial position.
inline Tensor scale_spatial(const Tensor& x, const Tensor& s) {
  const bool s_ok = (s.ndim() == 3 && s.dim(0) == 1 && s.dim(1) == x.dim(1) &&
                     s.dim(2) == x.dim(2)) ||
                    (s.ndim() == 2 && s.dim(0) == x.dim(1) && s.dim(1) == x.dim(2));
  if (x.ndim() != 3 || !s_ok)
    throw ShapeError("scale_spatial: unsupported broadcast " + shape_str(x.shape()) +
                     " * " + shape_str(s.shape()));
  const int C = x.dim(0);
  const int64_t hw = int64_t(x.dim(1)) * x.dim(2);
  Tensor out = Tensor::zeros(x.shape());
  for (int c = 0; c < C; ++c)
    for (int64_t i = 0; i < hw; ++i) out[c * hw + i] = x[c * hw + i] * s[i];
  debug_check_finite(out, "scale_spatial");
  if (recording(x, s)) {
    out.set_requires_grad(true);
    Graph::record("scale_spatial", [x, s, out, C, hw]() mutable {
      if (!out.has_grad()) return;
      const auto& go = out.grad();
      if (x.requires_grad()) {
        auto& gx = x.grad_accum();
        for (int c = 0; c < C; ++c)
          for (int64_t i = 0; i < hw; ++i) gx[c * hw + i] += go[c * hw + i] * s[i];
      }
      if (s.requires_grad()) {
        auto& gs = s.grad_accum();
        for (int c = 0; c < C; ++c)
          for (int64_t i = 0; i < hw; ++i) gs[i] += go[c * hw + i] * x[c * hw + i];
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Structure ops
// ---------------------------------------------------------------------------

/// Copy with a new shape of equal element count; gradient passes through.
inline Tensor reshape(const Tensor& x, Shape new_shape) {
  if (shape_numel(new_shape) != x.size())
    throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " +
                     shape_str(new_shape));
  Tensor out(std::move(new_shape), x.data());
  if (recording(x)) {
    out.set_requires_grad(true);
    Graph::record("reshape", [x, out]() mutable {
      if (!out.has_grad()) return;
      const auto& go = out.grad();
      auto& gx = x.grad_accum();
      for (int64_t i = 0; i < out.size(); ++i) gx[i] += go[i];
    });
  }
  return out;
}

/// Concatenation of rank-1 tensors into one vector.
inline Tensor concat_vec(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ValueError("concat_vec: empty input list");
  int64_t total = 0;
  for (const auto& p : parts) {
    if (p.ndim() != 1)
      throw ShapeError("concat_vec: rank-1 tensors only, got " + shape_str(p.shape()));
    total += p.size();
  }
  Tensor out = Tensor::zeros({static_cast<int>(total)});
  int64_t off = 0;
  for (const auto& p : parts) {
    for (int64_t i = 0; i < p.size(); ++i) out[off + i] = p[i];
    off += p.size();
  }
  bool rg = false;
  for (const auto& p : parts) rg = rg || p.requires_grad();
  if (Graph::active() && rg) {
    out.set_requires_grad(true);
    Graph::record("concat_vec", [parts, out]() mutable {
      if (!out.has_grad()) return;
      const auto& go = out.grad();
      int64_t off = 0;
      for (auto& p : parts) {
        if (p.requires_grad()) {
          auto& gp = p.grad_accum();
          for (int64_t i = 0; i < p.size(); ++i) gp[i] += go[off + i];
        }
        off += p.size();
      }
    });
  }
  return out;
}

/// x[C,H,W] -> x[c0:c1,H,W].
inline Tensor slice_channels(const Tensor& x, int c0, int c1) {
  if (x.ndim() != 3 || c0 < 0 || c1 > x.dim(0) || c0 >= c1)
    throw ShapeError("slice_channels: invalid range [" + std::to_string(c0) + "," +
                     std::to_string(c1) + ") for " + shape_str(x.shape()));
  const int64_t hw = int64_t(x.dim(1)) * x.dim(2);
  Tensor out = Tensor::zeros({c1 - c0, x.dim(1), x.dim(2)});
  for (int c = c0; c < c1; ++c)
    for (int64_t i = 0; i < hw; ++i) out[(c - c0) * hw + i] = x[c * hw + i];
  if (recording(x)) {
    out.set_requires_grad(true);
    Graph::record("slice_channels", [x, out, c0, c1, hw]() mutable {
      if (!out.has_grad()) return;
      const auto& go = out.grad();
      auto& gx = x.grad_accum();
      for (int c = c0; c < c1; ++c)
        for (int64_t i = 0; i < hw; ++i) gx[c * hw + i] += go[(c - c0) * hw + i];
    });
  }
  return out;
}

/// Row gather: table[V,d] indexed by ids -> [n,d]. Backward scatter-adds.
inline Tensor embedding_rows(const Tensor& table, const std::vector<int>& ids) {
  if (table.ndim() != 2)
    throw ShapeError("embedding_rows: table must be rank 2, got " +
                     shape_str(table.shape()));
  if (ids.empty()) throw ValueError("embedding_rows: empty id list");
  const int V = table.dim(0), d = table.dim(1);
  for (int id : ids)
    if (id < 0 || id >= V)
      throw ValueError("embedding_rows: id " + std::to_string(id) +
                       " outside table of " + std::to_string(V) + " rows");
  Tensor out = Tensor::zeros({static_cast<int>(ids.size()), d});
  for (size_t r = 0; r < ids.size(); ++r)
    for (int j = 0; j < d; ++j) out.at(int(r), j) = table.at(ids[r], j);
  if (recording(table)) {
    out.set_requires_grad(true);
    Graph::record("embedding_rows", [table, out, ids, d]() mutable {
      if (!out.has_grad()) return;
      const auto& go = out.grad();
      auto& gt = table.grad_accum();
      for (size_t r = 0; r < ids.size(); ++r)
        for (int j = 0; j < d; ++j)
          gt[size_t(ids[r]) * d + j] += go[r * d + j];
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Matmul / conv / pooling
// ---------------------------------------------------------------------------

/// Standard matrix product [MxK]*[KxN] -> [MxN].
inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.ndim() != 2 || b.ndim() != 2 || a.dim(1) != b.dim(0))
    throw ShapeError("matmul: inner dimensions disagree: " + shape_str(a.shape()) +
                     " x " + shape_str(b.shape()));
  const int M = a.dim(0), K = a.dim(1), N = b.dim(1);
  Tensor out = Tensor::zeros({M, N});
  for (int i = 0; i < M; ++i)
    for (int k = 0; k < K; ++k) {
      const double av = a.at(i, k);
      for (int j = 0; j < N; ++j) out.at(i, j) += av * b.at(k, j);
    }
  debug_check_finite(out, "matmul");
  if (recording(a, b)) {
    out.set_requires_grad(true);
    Graph::record("matmul", [a, b, out, M, K, N]() mutable {
      if (!out.has_grad()) return;
      const auto& go = out.grad();
      if (a.requires_grad()) {
        auto& ga = a.grad_accum();
        for (int i = 0; i < M; ++i)
          for (int j = 0; j < N; ++j) {
            const double g = go[size_t(i) * N + j];
            for (int k = 0; k < K; ++k) ga[size_t(i) * K + k] += g * b.at(k, j);
          }
      }
      if (b.requires_grad()) {
        auto& gb = b.grad_accum();
        for (int i = 0; i < M; ++i)
          for (int k = 0; k < K; ++k) {
            const double av = a.at(i, k);
            for (int j = 0; j < N; ++j) gb[size_t(k) * N + j] += av * go[size_t(i) * N + j];
          }
      }
    });
  }
  return out;
}

/**
 * 2-D cross-correlation (the usual ML "convolution") with zero padding.
 * input [C_in,H,W], kernel [C_out,C_in,kH,kW] -> [C_out,H',W'] with
 * H' = (H + 2*padding - kH)/stride + 1, which must divide exactly.
 */
inline Tensor conv2d(const Tensor& input, const Tensor& kernel, int stride = 1,
                     int padding = 0) {
  if (input.ndim() != 3 || kernel.ndim() != 4 || kernel.dim(1) != input.dim(0))
    throw ShapeError("conv2d: incompatible shapes " + shape_str(input.shape()) +
                     " and " + shape_str(kernel.shape()));
  if (stride < 1) throw ValueError("conv2d: stride must be >= 1");
  const int Cin = input.dim(0), H = input.dim(1), W = input.dim(2);
  const int Cout = kernel.dim(0), kH = kernel.dim(2), kW = kernel.dim(3);
  if (kH > H + 2 * padding || kW > W + 2 * padding)
    throw ShapeError("conv2d: kernel " + shape_str(kernel.shape()) +
                     " exceeds padded input " + shape_str(input.shape()));
  if ((H + 2 * padding - kH) % stride != 0 || (W + 2 * padding - kW) % stride != 0)
    throw ShapeError("conv2d: non-integral output size for input " +
                     shape_str(input.shape()) + ", kernel " + shape_str(kernel.shape()) +
                     ", stride " + std::to_string(stride) + ", padding " +
                     std::to_string(padding));
  const int Ho = (H + 2 * padding - kH) / stride + 1;
  const int Wo = (W + 2 * padding - kW) / stride + 1;

  Tensor out = Tensor::zeros({Cout, Ho, Wo});
  auto run_rows = [&](int co_begin, int co_end) {
    for (int co = co_begin; co < co_end; ++co)
      for (int ci = 0; ci < Cin; ++ci)
        for (int u = 0; u < kH; ++u)
          for (int v = 0; v < kW; ++v) {
            const double w = kernel.at(co, ci, u, v);
            if (w == 0.0) continue;
            for (int i = 0; i < Ho; ++i) {
              const int y = i * stride - padding + u;
              if (y < 0 || y >= H) continue;
              for (int j = 0; j < Wo; ++j) {
                const int x = j * stride - padding + v;
                if (x < 0 || x >= W) continue;
                out.at(co, i, j) += w * input.at(ci, y, x);
              }
            }
          }
  };
  const int workers = std::min(thread_cap(), Cout);
  if (workers <= 1) {
    run_rows(0, Cout);
  } else {
    // Disjoint output channels per worker keeps results bit-identical.
    std::vector<std::thread> pool;
    const int per = (Cout + workers - 1) / workers;
    for (int w = 0; w < workers; ++w) {
      const int b = w * per, e = std::min(Cout, b + per);
      if (b < e) pool.emplace_back(run_rows, b, e);
    }
    for (auto& t : pool) t.join();
  }
  debug_check_finite(out, "conv2d");

  if (recording(input, kernel)) {
    out.set_requires_grad(true);
    Graph::record("conv2d", [input, kernel, out, stride, padding, Cin, H, W, Cout, kH,
                             kW, Ho, Wo]() mutable {
      if (!out.has_grad()) return;
      const auto& go = out.grad();
      auto gidx = [Wo, Ho](int co, int i, int j) {
        return (size_t(co) * Ho + i) * Wo + j;
      };
      if (input.requires_grad()) {
        auto& gi = input.grad_accum();
        for (int co = 0; co < Cout; ++co)
          for (int ci = 0; ci < Cin; ++ci)
            for (int u = 0; u < kH; ++u)
              for (int v = 0; v < kW; ++v) {
                const double w = kernel.at(co, ci, u, v);
                if (w == 0.0) continue;
                for (int i = 0; i < Ho; ++i) {
                  const int y = i * stride - padding + u;
                  if (y < 0 || y >= H) continue;
                  for (int j = 0; j < Wo; ++j) {
                    const int x = j * stride - padding + v;
                    if (x < 0 || x >= W) continue;
                    gi[(size_t(ci) * H + y) * W + x] += w * go[gidx(co, i, j)];
                  }
                }
              }
      }
      if (kernel.requires_grad()) {
        auto& gk = kernel.grad_accum();
        for (int co = 0; co < Cout; ++co)
          for (int ci = 0; ci < Cin; ++ci)
            for (int u = 0; u < kH; ++u)
              for (int v = 0; v < kW; ++v) {
                double acc = 0.0;
                for (int i = 0; i < Ho; ++i) {
                  const int y = i * stride - padding + u;
                  if (y < 0 || y >= H) continue;
                  for (int j = 0; j < Wo; ++j) {
                    const int x = j * stride - padding + v;
                    if (x < 0 || x >= W) continue;
                    acc += go[gidx(co, i, j)] * input.at(ci, y, x);
                  }
                }
                gk[((size_t(co) * Cin + ci) * kH + u) * kW + v] += acc;
              }
      }
    });
  }
  return out;
}

/// Nearest-neighbour 2x upsampling of [C,H,W].
inline Tensor upsample2x(const Tensor& x) {
  if (x.ndim() != 3)
    throw ShapeError("upsample2x: expected [C,H,W], got " + shape_str(x.shape()));
  const int C = x.dim(0), H = x.dim(1), W = x.dim(2);
  Tensor out = Tensor::zeros({C, 2 * H, 2 * W});
  for (int c = 0; c < C; ++c)
    for (int i = 0; i < 2 * H; ++i)
      for (int j = 0; j < 2 * W; ++j) out.at(c, i, j) = x.at(c, i / 2, j / 2);
  if (recording(x)) {
    out.set_requires_grad(true);
    Graph::record("upsample2x", [x, out, C, H, W]() mutable {
      if (!out.has_grad()) return;
      const auto& go = out.grad();
      auto& gx = x.grad_accum();
      for (int c = 0; c < C; ++c)
        for (int i = 0; i < 2 * H; ++i)
          for (int j = 0; j < 2 * W; ++j)
            gx[(size_t(c) * H + i / 2) * W + j / 2] +=
                go[(size_t(c) * 2 * H + i) * 2 * W + j];
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Reductions and losses
// ---------------------------------------------------------------------------

namespace detail {

inline Tensor reduce_impl(const Tensor& x, std::vector<int> axes, bool mean_flag,
                          const char* op) {
  const int nd = x.ndim();
  if (axes.empty())
    for (int i = 0; i < nd; ++i) axes.push_back(i);
  std::vector<bool> reduced(nd, false);
  for (int a : axes) {
    if (a < 0 || a >= nd)
      throw ValueError(std::string(op) + ": invalid axis " + std::to_string(a) +
                       " for shape " + shape_str(x.shape()));
    if (reduced[a])
      throw ValueError(std::string(op) + ": duplicate axis " + std::to_string(a));
    reduced[a] = true;
  }
  Shape out_shape;
  int64_t count = 1;
  for (int i = 0; i < nd; ++i) {
    if (reduced[i])
      count *= x.dim(i);
    else
      out_shape.push_back(x.dim(i));
  }
  if (out_shape.empty()) out_shape.push_back(1);

  // Strides of x, and the flat output index each input element maps to.
  std::vector<int64_t> strides(nd, 1);
  for (int i = nd - 2; i >= 0; --i) strides[i] = strides[i + 1] * x.dim(i + 1);
  std::vector<int64_t> out_strides;
  {
    std::vector<int64_t> os(out_shape.size(), 1);
    for (int i = int(out_shape.size()) - 2; i >= 0; --i)
      os[i] = os[i + 1] * out_shape[size_t(i) + 1];
    out_strides = std::move(os);
  }
  const double denom = mean_flag ? double(count) : 1.0;

  Tensor out = Tensor::zeros(out_shape);
  for (int64_t flat = 0; flat < x.size(); ++flat) {
    int64_t rem = flat;
    int64_t oflat = 0;
    int oi = 0;
    for (int i = 0; i < nd; ++i) {
      const int ix = int(rem / strides[i]);
      rem %= strides[i];
      if (!reduced[i]) oflat += ix * out_strides[oi++];
    }
    out[oflat] += x[flat] / denom;
  }
  if (recording(x)) {
    out.set_requires_grad(true);
    Graph::record(op, [x, out, strides, out_strides, reduced, nd, denom]() mutable {
      if (!out.has_grad()) return;
      const auto& go = out.grad();
      auto& gx = x.grad_accum();
      for (int64_t flat = 0; flat < x.size(); ++flat) {
        int64_t rem = flat;
        int64_t oflat = 0;
        int oi = 0;
        for (int i = 0; i < nd; ++i) {
          const int ix = int(rem / strides[i]);
          rem %= strides[i];
          if (!reduced[i]) oflat += ix * out_strides[oi++];
        }
        gx[flat] += go[oflat] / denom;
      }
    });
  }
  return out;
}

}  // namespace detail

/// Sum over the listed axes; an empty list reduces all axes to a scalar.
inline Tensor reduce_sum(const Tensor& x, std::vector<int> axes = {}) {
  return detail::reduce_impl(x, std::move(axes), false, "reduce_sum");
}

/// Mean over the listed axes; an empty list reduces all axes to a scalar.
inline Tensor reduce_mean(const Tensor& x, std::vector<int> axes = {}) {
  return detail::reduce_impl(x, std::move(axes), true, "reduce_mean");
}

/// Mean absolute difference (L1) -> scalar.
inline Tensor l1_loss(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "l1_loss");
  double acc = 0.0;
  for (int64_t i = 0; i < a.size(); ++i) acc += std::fabs(a[i] - b[i]);
  const double n = double(a.size());
  Tensor out = Tensor::scalar(acc / n);
  if (recording(a, b)) {
    out.set_requires_grad(true);
    Graph::record("l1_loss", [a, b, out, n]() mutable {
      if (!out.has_grad()) return;
      const double go = out.grad()[0] / n;
      if (a.requires_grad()) {
        auto& ga = a.grad_accum();
        for (int64_t i = 0; i < a.size(); ++i) {
          const double d = a[i] - b[i];
          ga[i] += go * (d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0));
        }
      }
      if (b.requires_grad()) {
        auto& gb = b.grad_accum();
        for (int64_t i = 0; i < a.size(); ++i) {
          const double d = a[i] - b[i];
          gb[i] -= go * (d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0));
        }
      }
    });
  }
  return out;
}

/**
 * Token-level cross-entropy over logits[T,V] against target ids, averaged over
 * rows whose valid flag is set. Stable log-sum-exp forward; softmax-minus-onehot
 * backward.
 */
inline Tensor cross_entropy_rows(const Tensor& logits, const std::vector<int>& targets,
                                 const std::vector<uint8_t>& valid) {
  if (logits.ndim() != 2)
    throw ShapeError("cross_entropy_rows: logits must be [T,V], got " +
                     shape_str(logits.shape()));
  const int T = logits.dim(0), V = logits.dim(1);
  if (int(targets.size()) != T || int(valid.size()) != T)
    throw ShapeError("cross_entropy_rows: " + std::to_string(targets.size()) +
                     " targets / " + std::to_string(valid.size()) + " flags for " +
                     std::to_string(T) + " rows");
  int nv = 0;
  for (int t = 0; t < T; ++t)
    if (valid[t]) {
      if (targets[t] < 0 || targets[t] >= V)
        throw ValueError("cross_entropy_rows: target id out of vocabulary");
      ++nv;
    }
  if (nv == 0) throw ValueError("cross_entropy_rows: no valid rows");

  double acc = 0.0;
  for (int t = 0; t < T; ++t) {
    if (!valid[t]) continue;
    double m = logits.at(t, 0);
    for (int c = 1; c < V; ++c) m = std::max(m, logits.at(t, c));
    double lse = 0.0;
    for (int c = 0; c < V; ++c) lse += std::exp(logits.at(t, c) - m);
    acc += m + std::log(lse) - logits.at(t, targets[t]);
  }
  Tensor out = Tensor::scalar(acc / nv);
  if (recording(logits)) {
    out.set_requires_grad(true);
    Graph::record("cross_entropy_rows", [logits, out, targets, valid, T, V, nv]() mutable {
      if (!out.has_grad()) return;
      const double go = out.grad()[0] / nv;
      auto& gl = logits.grad_accum();
      for (int t = 0; t < T; ++t) {
        if (!valid[t]) continue;
        double m = logits.at(t, 0);
        for (int c = 1; c < V; ++c) m = std::max(m, logits.at(t, c));
        double lse = 0.0;
        for (int c = 0; c < V; ++c) lse += std::exp(logits.at(t, c) - m);
        for (int c = 0; c < V; ++c) {
          const double p = std::exp(logits.at(t, c) - m) / lse;
          gl[size_t(t) * V + c] += go * (p - (c == targets[t] ? 1.0 : 0.0));
        }
      }
    });
  }
  return out;
}

/// -log D for a score that should be 1; -log(1-D) for a score that should be 0.
inline Tensor bce_toward_one(const Tensor& score) {
  return neg(log_clamped(score));
}

inline Tensor bce_toward_zero(const Tensor& score) {
  return neg(log_clamped(one_minus(score)));
}

}  // namespace bento
