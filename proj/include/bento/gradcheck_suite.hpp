#pragma once

#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "bento/gradcheck.hpp"
#include "bento/layout.hpp"
#include "bento/nn.hpp"
#include "bento/ops.hpp"
#include "bento/stn.hpp"
#include "bento/t2i.hpp"

namespace bento::gradcheck {

struct Check {
  std::string module;
  std::string name;
  double tol = 1e-4;
  std::function<GradCheckReport()> run;
};

namespace detail {

inline Tensor rnd(Shape shape, uint64_t seed, double lo = -1.0, double hi = 1.0) {
  Rng rng(seed);
  return Tensor::uniform(std::move(shape), rng, lo, hi);
}

inline void add_tensor_checks(std::vector<Check>& v) {
  v.push_back({"tensor", "add_mul_scale", 1e-4, [] {
    Tensor a = rnd({3, 4}, 101), b = rnd({3, 4}, 102);
    return finite_diff_check("add_mul_scale", {a, b}, [=] {
      return reduce_sum(mul(add(a, b), scale(a, 1.7)));
    });
  }});
  v.push_back({"tensor", "pointwise_nonlinearities", 1e-4, [] {
    Tensor x = rnd({2, 5}, 103, -2.0, 2.0);
    return finite_diff_check("pointwise_nonlinearities", {x}, [=] {
      return reduce_sum(sigmoid(bento::tanh(leaky_relu(x))));
    });
  }});
  v.push_back({"tensor", "log_clamped", 1e-4, [] {
    Tensor x = rnd({12}, 104, -1.5, 1.5);
    return finite_diff_check("log_clamped", {x}, [=] {
      return neg(reduce_sum(log_clamped(sigmoid(x))));
    });
  }});
  v.push_back({"tensor", "affine_scalars", 1e-4, [] {
    Tensor x = rnd({7}, 105);
    return finite_diff_check("affine_scalars", {x}, [=] {
      return reduce_sum(mul(one_minus(x), add_scalar(sub(x, scale(x, 0.25)), 0.4)));
    });
  }});
  v.push_back({"tensor", "reshape_concat", 1e-4, [] {
    Tensor a = rnd({6}, 106), b = rnd({2}, 107);
    return finite_diff_check("reshape_concat", {a, b}, [=] {
      Tensor long_vec = concat_vec({a, b});
      return reduce_sum(mul(reshape(long_vec, {2, 4}), reshape(long_vec, {2, 4})));
    });
  }});
  v.push_back({"tensor", "slice_channels", 1e-4, [] {
    Tensor x = rnd({3, 4, 4}, 108);
    return finite_diff_check("slice_channels", {x}, [=] {
      return reduce_sum(mul(slice_channels(x, 1, 3), slice_channels(x, 1, 3)));
    });
  }});
  v.push_back({"tensor", "reductions", 1e-4, [] {
    Tensor x = rnd({3, 4, 2}, 109);
    return finite_diff_check("reductions", {x}, [=] {
      return add(reduce_sum(mul(reduce_mean(x, {1}), reduce_mean(x, {1}))),
                 reduce_mean(mul(x, x)));
    });
  }});
  v.push_back({"tensor", "matmul", 1e-4, [] {
    Tensor a = rnd({3, 4}, 110), b = rnd({4, 2}, 111);
    return finite_diff_check("matmul", {a, b}, [=] {
      return reduce_sum(mul(matmul(a, b), matmul(a, b)));
    });
  }});
  v.push_back({"tensor", "embedding_rows", 1e-4, [] {
    Tensor table = rnd({5, 4}, 112);
    return finite_diff_check("embedding_rows", {table}, [=] {
      Tensor rows = embedding_rows(table, {0, 2, 2, 4});
      return reduce_sum(mul(rows, rows));
    });
  }});
  v.push_back({"tensor", "broadcast_helpers", 1e-4, [] {
    Tensor x = rnd({3, 4, 4}, 113);
    Tensor cb = rnd({3}, 114);
    Tensor sp = rnd({4, 4}, 115, 0.1, 0.9);
    return finite_diff_check("broadcast_helpers", {x, cb, sp}, [=] {
      Tensor y = scale_spatial(scale_channels(add_channels(x, cb), cb), sp);
      return reduce_sum(mul(y, y));
    });
  }});
  v.push_back({"tensor", "upsample2x", 1e-4, [] {
    Tensor x = rnd({2, 3, 3}, 116);
    return finite_diff_check("upsample2x", {x}, [=] {
      Tensor y = upsample2x(x);
      return reduce_sum(mul(y, y));
    });
  }});
}

inline void add_nn_checks(std::vector<Check>& v) {
  v.push_back({"nn", "linear", 1e-4, [] {
    Rng rng(120);
    nn::Linear l = nn::Linear::make(4, 3, rng);
    Tensor x = rnd({4}, 121);
    Tensor rows = rnd({2, 4}, 122);
    return finite_diff_check("linear", {x, l.w, l.b}, [=] {
      return add(reduce_sum(mul(l.forward_vec(x), l.forward_vec(x))),
                 reduce_sum(l.forward(rows)));
    });
  }});
  v.push_back({"nn", "conv2d_stride_pad", 1e-4, [] {
    Rng rng(123);
    nn::Conv2d c = nn::Conv2d::make(2, 3, 3, 2, 1, rng);
    Tensor x = rnd({2, 5, 5}, 124);
    return finite_diff_check("conv2d_stride_pad", {x, c.k, c.b}, [=] {
      Tensor y = c.forward(x);
      return reduce_sum(mul(y, y));
    });
  }});
  v.push_back({"nn", "channel_attention", 1e-4, [] {
    Rng rng(125);
    nn::ChannelAttention a = nn::ChannelAttention::make(4, rng);
    Tensor x = rnd({4, 6, 6}, 126);
    return finite_diff_check("channel_attention", {x, a.fc1.w, a.fc2.w}, [=] {
      Tensor y = a.forward(x);
      return reduce_sum(mul(y, y));
    });
  }});
  v.push_back({"nn", "spatial_attention", 1e-4, [] {
    Rng rng(127);
    nn::SpatialAttention a = nn::SpatialAttention::make(4, rng);
    Tensor x = rnd({4, 6, 6}, 128);
    return finite_diff_check("spatial_attention", {x, a.conv.k}, [=] {
      Tensor y = a.forward(x);
      return reduce_sum(mul(y, y));
    });
  }});
  v.push_back({"nn", "text_embedder", 1e-4, [] {
    Rng rng(129);
    nn::TextEmbedder e = nn::TextEmbedder::make(9, 6, rng, 3);
    return finite_diff_check("text_embedder", {e.table}, [=] {
      Tensor vec = e.embed({1, 4, 4, 8}).vector;
      return reduce_sum(mul(vec, vec));
    });
  }});
  v.push_back({"nn", "image_encoder", 1e-4, [] {
    Rng rng(130);
    nn::ImageEncoder enc = nn::ImageEncoder::make(8, 8, 8, rng);
    Tensor x = rnd({3, 8, 8}, 131);
    return finite_diff_check("image_encoder", {x, enc.head.w}, [=] {
      Tensor y = enc.forward(x);
      return reduce_sum(mul(y, y));
    }, 1e-5, 3);
  }});
  v.push_back({"nn", "cross_entropy_rows", 1e-4, [] {
    Tensor logits = rnd({3, 7}, 132, -2.0, 2.0);
    return finite_diff_check("cross_entropy_rows", {logits}, [=] {
      return cross_entropy_rows(logits, {1, 4, 6}, {1, 1, 1});
    });
  }});
  v.push_back({"nn", "l1_loss", 1e-4, [] {
    Tensor a = rnd({3, 5}, 133), b = rnd({3, 5}, 134, 0.2, 1.4);
    return finite_diff_check("l1_loss", {a}, [=] { return l1_loss(a, b); });
  }});
}

inline void add_stn_checks(std::vector<Check>& v) {
  v.push_back({"stn", "grid_sample_chain", 1e-4, [] {
    Tensor theta = Tensor::zeros({2, 3});
    theta.data() = {0.83, 0.07, 0.11, -0.05, 0.77, -0.13};
    Tensor img = rnd({2, 7, 7}, 140);
    return finite_diff_check("grid_sample_chain", {theta, img}, [=] {
      Tensor warped = stn::bilinear_sample(img, stn::affine_grid(theta, 6, 6));
      return reduce_sum(mul(warped, warped));
    });
  }});
  v.push_back({"stn", "stn_loss", 1e-4, [] {
    Tensor theta = Tensor::zeros({2, 3});
    theta.data() = {1.04, -0.03, 0.06, 0.02, 0.93, -0.08};
    Tensor img = rnd({4, 6, 6}, 141);
    Tensor target = rnd({4, 6, 6}, 142);
    return finite_diff_check("stn_loss", {theta, img}, [=] {
      Tensor warped = stn::bilinear_sample(img, stn::affine_grid(theta, 6, 6));
      return stn::stn_loss(warped, target);
    });
  }});
}

inline void add_gan_checks(std::vector<Check>& v) {
  v.push_back({"gan", "bce_pair", 1e-4, [] {
    Tensor x = rnd({5}, 150, -2.0, 2.0);
    Tensor y = rnd({5}, 151, -2.0, 2.0);
    return finite_diff_check("bce_pair", {x, y}, [=] {
      return add(reduce_sum(bce_toward_one(sigmoid(x))),
                 reduce_sum(bce_toward_zero(sigmoid(y))));
    });
  }});
  v.push_back({"gan", "layout_gan_terms", 1e-4, [] {
    layout::CompositionConfig cfg;
    cfg.z_dim = 8;
    Rng rng(152);
    auto m = layout::CompositionModels::make(cfg, rng);
    std::vector<LayoutBox> real{{0.3, 0.4, 0.2, 0.25}, {0.6, 0.5, 0.3, 0.2}};
    Tensor f0 = rnd({4}, 153, 0.15, 0.85);
    Tensor f1 = rnd({4}, 154, 0.15, 0.85);
    std::vector<int> cats{0, 1};
    return finite_diff_check("layout_gan_terms", {f0, f1, m.d_head.w}, [=] {
      auto [g_term, d_term] = layout::layout_gan_loss(real, {f0, f1}, cats, m);
      return add(g_term, d_term);
    });
  }});
  v.push_back({"gan", "image_gan_terms", 1e-4, [] {
    layout::CompositionConfig cfg;
    cfg.canvas = 16;
    cfg.z_dim = 8;
    Rng rng(155);
    auto m = layout::CompositionModels::make(cfg, rng);
    Tensor real = rnd({3, 16, 16}, 156, 0.0, 1.0);
    Tensor fake = rnd({3, 16, 16}, 157, 0.0, 1.0);
    return finite_diff_check("image_gan_terms", {fake, m.img_head.w}, [=] {
      auto [g_term, d_term] = layout::image_gan_loss(real, fake, m);
      return add(g_term, d_term);
    }, 1e-5, 7);
  }});
  v.push_back({"gan", "stage_adversarial", 1e-4, [] {
    t2i::StageConfig cfg;
    cfg.num_stages = 1;
    cfg.base_res = 8;
    cfg.z_dim = 8;
    cfg.d_text = 8;
    Rng rng(158);
    auto m = t2i::T2IModels::make(cfg, 11, rng);
    auto emb = m.embedder.embed({4, 5});
    auto mis = m.embedder.embed({6, 7});
    Tensor fake = rnd({3, 8, 8}, 159);
    Tensor real = rnd({3, 8, 8}, 160);
    return finite_diff_check("stage_adversarial", {fake, real}, [=] {
      auto [lg, ld] = t2i::stage_adversarial_losses(fake, real, emb, mis, m, 0);
      return add(lg, ld);
    }, 1e-5, 5);
  }});
  v.push_back({"gan", "cycle_rollout", 1e-4, [] {
    t2i::StageConfig cfg;
    cfg.num_stages = 1;
    cfg.base_res = 8;
    cfg.z_dim = 8;
    cfg.d_text = 8;
    cfg.max_len = 6;
    Rng rng(161);
    auto m = t2i::T2IModels::make(cfg, 11, rng);
    Tensor img = rnd({3, 8, 8}, 162);
    std::vector<int> tokens{4, 8, 5};
    return finite_diff_check("cycle_rollout", {img, m.cap_rnn.w, m.cap_tok_table}, [=] {
      return t2i::cycle_loss(t2i::caption_branch_teacher(img, tokens, m), tokens);
    }, 1e-5, 11);
  }});
}

inline void add_composition_checks(std::vector<Check>& v) {
  v.push_back({"composition", "full_chain", 1e-3, [] {
    layout::CompositionConfig cfg;
    cfg.canvas = 16;
    cfg.z_dim = 8;
    Rng rng(170);
    auto m = layout::CompositionModels::make(cfg, rng);
    {
      Rng wr(171);
      for (auto& w : m.comp_fc.w.data()) w = wr.normal(0.0, 0.02);
    }
    Tensor item0 = rnd({4, 16, 16}, 172, 0.0, 1.0);
    Tensor item1 = rnd({4, 16, 16}, 173, 0.0, 1.0);
    const LayoutBox box0{0.42, 0.38, 0.55, 0.5};
    const LayoutBox box1{0.6, 0.62, 0.45, 0.52};
    Tensor background = rnd({3, 16, 16}, 174, 0.0, 1.0);
    Tensor target = rnd({4, 16, 16}, 175, 0.0, 1.0);
    PlacementOrder order{{0, 1}};
    return finite_diff_check(
        "full_chain", {m.comp_fc.w, m.comp_fc.b, m.comp_c1.k, item0},
        [=] {
          auto [t0, w0] = layout::compose_item(item0, box0, m);
          auto [t1, w1] = layout::compose_item(item1, box1, m);
          (void)t0;
          (void)t1;
          Tensor scene = layout::composite_scene({w0, w1}, order, background);
          auto [g_term, d_term] = layout::image_gan_loss(background, scene, m);
          (void)d_term;
          return add(g_term, stn::stn_loss(w0, target));
        },
        1e-4, 17);
  }});
}

inline void add_corrupt_checks(std::vector<Check>& v) {
  v.push_back({"corrupt", "broken_backward_fixture", 1e-4, [] {
    Tensor x = rnd({6}, 180);
    return finite_diff_check("broken_backward_fixture", {x}, [=] {
      Tensor ghost = Tensor::zeros(x.shape());
      for (int64_t i = 0; i < x.size(); ++i) ghost.data()[size_t(i)] = x[i];
      return reduce_sum(add(x, ghost));
    });
  }});
}

}  // namespace detail

inline const std::vector<Check>& registry() {
  static const std::vector<Check> checks = [] {
    std::vector<Check> v;
    detail::add_tensor_checks(v);
    detail::add_nn_checks(v);
    detail::add_stn_checks(v);
    detail::add_gan_checks(v);
    detail::add_composition_checks(v);
    detail::add_corrupt_checks(v);
    return v;
  }();
  return checks;
}

struct SuiteResult {
  int ran = 0;
  int failed = 0;
  std::vector<std::string> lines;
};

/**
 * Runs the registered checks. `filter` is "all" (every module except the
 * negative-control fixture) or a single module name. The fixture module
 * "corrupt" must be requested explicitly, and is expected to fail.
 */
inline SuiteResult run_checks(const std::string& filter) {
  bool known = filter == "all";
  for (const auto& c : registry())
    if (c.module == filter) known = true;
  if (!known) throw ValueError("gradcheck: unknown module '" + filter + "'");

  SuiteResult out;
  for (const auto& c : registry()) {
    if (filter == "all" ? c.module == "corrupt" : c.module != filter) continue;
    GradCheckReport rep = c.run();
    ++out.ran;
    char buf[200];
    if (rep.ok(c.tol)) {
      std::snprintf(buf, sizeof buf, "ok   %s/%s max_rel=%.3g (%lld probed)",
                    c.module.c_str(), c.name.c_str(), rep.max_rel_err,
                    static_cast<long long>(rep.checked));
    } else {
      ++out.failed;
      std::snprintf(buf, sizeof buf,
                    "FAIL %s/%s max_rel=%.3g at flat index %lld (analytic %.6g, "
                    "numeric %.6g)",
                    c.module.c_str(), c.name.c_str(), rep.max_rel_err,
                    static_cast<long long>(rep.worst_index), rep.worst_analytic,
                    rep.worst_numeric);
    }
    out.lines.emplace_back(buf);
  }
  return out;
}

}  // namespace bento::gradcheck
