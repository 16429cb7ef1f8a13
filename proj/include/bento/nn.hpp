#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include <cmath>

#include "bento/ops.hpp"
#include "bento/optim.hpp"
#include "bento/rng.hpp"

namespace bento::nn {

/// GAN-style init: weights ~ N(0, stddev), biases zero.
inline Tensor weight_init(Shape shape, Rng& rng, double stddev = 0.02) {
  return Tensor::randn(std::move(shape), rng, stddev, true);
}

// ---------------------------------------------------------------------------

struct Linear {
  Tensor w;  // [in, out]
  Tensor b;  // [out]

  static Linear make(int in, int out, Rng& rng, double stddev = 0.02) {
    return {weight_init({in, out}, rng, stddev), Tensor::zeros({out}, true)};
  }

  Tensor forward(const Tensor& x) const {  // [B, in] -> [B, out]
    return add_bias_rows(matmul(x, w), b);
  }

  Tensor forward_vec(const Tensor& x) const {  // [in] -> [out]
    if (x.ndim() != 1)
      throw ShapeError("Linear::forward_vec: expected vector, got " +
                       shape_str(x.shape()));
    return reshape(forward(reshape(x, {1, x.dim(0)})), {b.dim(0)});
  }

  void add_to(ParamSet& ps, const std::string& prefix) const {
    ps.add(prefix + ".w", w);
    ps.add(prefix + ".b", b);
  }
};

struct Conv2d {
  Tensor k;  // [cout, cin, kh, kw]
  Tensor b;  // [cout]
  int stride = 1;
  int pad = 0;

  static Conv2d make(int cin, int cout, int ksize, int stride, int pad, Rng& rng,
                     double stddev = 0.02) {
    return {weight_init({cout, cin, ksize, ksize}, rng, stddev),
            Tensor::zeros({cout}, true), stride, pad};
  }

  Tensor forward(const Tensor& x) const {
    return add_channels(conv2d(x, k, stride, pad), b);
  }

  void add_to(ParamSet& ps, const std::string& prefix) const {
    ps.add(prefix + ".k", k);
    ps.add(prefix + ".b", b);
  }
};

// ---------------------------------------------------------------------------
// Attention gates. Both rescale features by a sigmoid gate, so the output
// never exceeds the input in magnitude.

struct ChannelAttention {
  Linear fc1;  // C -> max(1, C/4)
  Linear fc2;  // max(1, C/4) -> C

  static ChannelAttention make(int channels, Rng& rng) {
    const int mid = std::max(1, channels / 4);
    return {Linear::make(channels, mid, rng), Linear::make(mid, channels, rng)};
  }

  Tensor forward(const Tensor& x) const {  // [C,H,W] -> [C,H,W]
    Tensor pooled = reduce_mean(x, {1, 2});           // [C]
    Tensor h = leaky_relu(fc1.forward_vec(pooled));   // [C/4]
    Tensor gate = sigmoid(fc2.forward_vec(h));        // [C]
    return scale_channels(x, gate);
  }

  void add_to(ParamSet& ps, const std::string& prefix) const {
    fc1.add_to(ps, prefix + ".fc1");
    fc2.add_to(ps, prefix + ".fc2");
  }
};

struct SpatialAttention {
  Conv2d conv;  // C -> 1, 1x1

  static SpatialAttention make(int channels, Rng& rng) {
    return {Conv2d::make(channels, 1, 1, 1, 0, rng)};
  }

  Tensor forward(const Tensor& x) const {  // [C,H,W] -> [C,H,W]
    Tensor gate = sigmoid(conv.forward(x));  // [1,H,W]
    return scale_spatial(x, gate);
  }

  void add_to(ParamSet& ps, const std::string& prefix) const {
    conv.add_to(ps, prefix + ".conv");
  }
};

// ---------------------------------------------------------------------------
// Text embedder: learned token table with mean pooling. Stands in for a
// pretrained sentence encoder; the interface (token ids in, fixed vector out)
// is what the rest of the system depends on.

struct TextEmbedding {
  Tensor vector;            // [d_text]
  std::vector<int> tokens;  // ids after UNK substitution
};

struct TextEmbedder {
  Tensor table;  // [vocab, d_text]
  int unk_id = 0;

  static TextEmbedder make(int vocab, int d_text, Rng& rng, int unk_id) {
    return {weight_init({vocab, d_text}, rng), unk_id};
  }

  int d_text() const { return table.dim(1); }

  TextEmbedding embed(const std::vector<int>& ids) const {
    TextEmbedding out;
    out.tokens = ids;
    for (int& id : out.tokens)
      if (id < 0 || id >= table.dim(0)) id = unk_id;
    if (out.tokens.empty()) {
      out.vector = Tensor::zeros({d_text()});
      return out;
    }
    Tensor rows = embedding_rows(table, out.tokens);  // [n, d]
    out.vector = reduce_mean(rows, {0});              // [d]
    return out;
  }

  void add_to(ParamSet& ps, const std::string& prefix) const {
    ps.add(prefix + ".table", table);
  }
};

// ---------------------------------------------------------------------------
// Image encoder: three strided conv blocks, global average pool, linear head.
// Desk-scale stand-in for a large pretrained CNN.

struct ImageEncoder {
  Conv2d c1, c2, c3;
  Linear head;
  int in_h = 0, in_w = 0;

  static ImageEncoder make(int in_h, int in_w, int d_img, Rng& rng) {
    if (in_h % 8 != 0 || in_w % 8 != 0)
      throw ValueError("ImageEncoder: resolution must be divisible by 8");
    // Fan-in-scaled init: with the 0.02 default the three-layer stack
    // attenuates its input by ~1e-3 and the feature is numerically dead.
    ImageEncoder e;
    e.c1 = Conv2d::make(3, 8, 4, 2, 1, rng, std::sqrt(2.0 / (3 * 16)));
    e.c2 = Conv2d::make(8, 16, 4, 2, 1, rng, std::sqrt(2.0 / (8 * 16)));
    e.c3 = Conv2d::make(16, 24, 4, 2, 1, rng, std::sqrt(2.0 / (16 * 16)));
    e.head = Linear::make(24, d_img, rng, std::sqrt(2.0 / 24));
    e.in_h = in_h;
    e.in_w = in_w;
    return e;
  }

  int d_img() const { return head.b.dim(0); }

  Tensor forward(const Tensor& img) const {  // [3,H,W] -> [d_img]
    if (img.ndim() != 3 || img.dim(0) != 3 || img.dim(1) != in_h || img.dim(2) != in_w)
      throw ShapeError("ImageEncoder: expected [3," + std::to_string(in_h) + "," +
                       std::to_string(in_w) + "], got " + shape_str(img.shape()));
    Tensor h = leaky_relu(c1.forward(img));
    h = leaky_relu(c2.forward(h));
    h = leaky_relu(c3.forward(h));
    Tensor pooled = reduce_mean(h, {1, 2});  // [24]
    return head.forward_vec(pooled);
  }

  void add_to(ParamSet& ps, const std::string& prefix) const {
    c1.add_to(ps, prefix + ".c1");
    c2.add_to(ps, prefix + ".c2");
    c3.add_to(ps, prefix + ".c3");
    head.add_to(ps, prefix + ".head");
  }
};

}  // namespace bento::nn
