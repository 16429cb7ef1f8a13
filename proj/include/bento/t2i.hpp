#pragma once

#include <algorithm>
#include <cmath>
#include <cstring>
#include <string>
#include <utility>
#include <vector>

#include "bento/dataset.hpp"
#include "bento/nn.hpp"
#include "bento/ops.hpp"
#include "bento/optim.hpp"
#include "bento/rng.hpp"
#include "bento/types.hpp"

namespace bento::t2i {

struct StageConfig {
  int num_stages = 4;  // M
  int base_res = 8;
  int z_dim = 64;
  int d_text = 64;
  int max_len = 16;

  int resolution(int m) const { return base_res << m; }
  int final_res() const { return resolution(num_stages - 1); }

  void validate() const {
    if (num_stages < 1) throw ValueError("stage config: need at least one stage");
    if (base_res < 1) throw ValueError("stage config: base resolution must be >= 1");
    // Resolutions double strictly stage to stage; shifting can overflow int.
    if (num_stages > 24) throw ValueError("stage config: too many stages");
  }
};

inline int stage_channels(int m) { return std::max(4, 32 >> m); }

// ---------------------------------------------------------------------------
// Models.

/// One resolution level's discriminator: strided conv stack to a feature
/// vector, then an unconditional head and a text-conditional head.
struct StageDiscriminator {
  std::vector<nn::Conv2d> convs;
  nn::Linear uncond;  // feat -> 1
  nn::Linear cond;    // feat + d_text -> 1
  int res = 0;

  static StageDiscriminator make(int res, int d_text, Rng& rng) {
    StageDiscriminator d;
    d.res = res;
    int ch = 3, r = res;
    int next = 8;
    while (r > 4) {
      d.convs.push_back(nn::Conv2d::make(ch, next, 4, 2, 1, rng));
      ch = next;
      next = std::min(32, next * 2);
      r /= 2;
    }
    if (d.convs.empty()) {
      d.convs.push_back(nn::Conv2d::make(3, 8, 3, 1, 1, rng));
      ch = 8;
    }
    d.uncond = nn::Linear::make(ch, 1, rng);
    d.cond = nn::Linear::make(ch + d_text, 1, rng);
    return d;
  }

  Tensor features(const Tensor& img) const {
    Tensor h = img;
    for (const auto& c : convs) h = leaky_relu(c.forward(h));
    return reduce_mean(h, {1, 2});
  }

  Tensor score_uncond(const Tensor& feat) const {
    return sigmoid(uncond.forward_vec(feat));
  }
  Tensor score_cond(const Tensor& feat, const Tensor& text) const {
    return sigmoid(cond.forward_vec(concat_vec({feat, text})));
  }

  void add_to(ParamSet& ps, const std::string& prefix) const {
    for (size_t i = 0; i < convs.size(); ++i)
      convs[i].add_to(ps, prefix + ".c" + std::to_string(i));
    uncond.add_to(ps, prefix + ".uncond");
    cond.add_to(ps, prefix + ".cond");
  }
};

/**
 * The cyclic text-to-image system: an M-stage generator cascade with
 * attention-gated upsampling, one discriminator per stage, a mean-pooled
 * text embedder, and a recurrent caption branch closing the text loop.
 */
struct T2IModels {
  StageConfig cfg;

  nn::TextEmbedder embedder;
  nn::Linear g0_fc;  // [d_text + z] -> ch0 * base * base
  std::vector<nn::Conv2d> g_conv;             // stage m>=1
  std::vector<nn::ChannelAttention> g_cattn;  // stage m>=1
  std::vector<nn::SpatialAttention> g_sattn;  // stage m>=1
  std::vector<nn::Conv2d> to_rgb;             // per stage, 1x1 -> 3
  std::vector<StageDiscriminator> d;

  nn::ImageEncoder cap_enc;  // final-res image -> d_hid
  Tensor cap_tok_table;      // [vocab, d_tok]
  nn::Linear cap_rnn;        // [d_tok + 2*d_hid] -> d_hid
  nn::Linear cap_out;        // d_hid -> vocab
  bool frozen = false;

  static constexpr int kCapHidden = 48;
  static constexpr int kCapTok = 16;

  int vocab_size() const { return cap_tok_table.dim(0); }

  static T2IModels make(const StageConfig& cfg, int vocab, Rng& rng) {
    cfg.validate();
    T2IModels m;
    m.cfg = cfg;
    m.embedder = nn::TextEmbedder::make(vocab, cfg.d_text, rng, data::kUnkId);
    m.g0_fc = nn::Linear::make(cfg.d_text + cfg.z_dim,
                               stage_channels(0) * cfg.base_res * cfg.base_res, rng);
    for (int s = 0; s < cfg.num_stages; ++s) {
      if (s > 0) {
        m.g_conv.push_back(
            nn::Conv2d::make(stage_channels(s - 1), stage_channels(s), 3, 1, 1, rng));
        m.g_cattn.push_back(nn::ChannelAttention::make(stage_channels(s), rng));
        m.g_sattn.push_back(nn::SpatialAttention::make(stage_channels(s), rng));
      }
      m.to_rgb.push_back(nn::Conv2d::make(stage_channels(s), 3, 1, 1, 0, rng));
      m.d.push_back(StageDiscriminator::make(cfg.resolution(s), cfg.d_text, rng));
    }
    m.cap_enc = nn::ImageEncoder::make(cfg.final_res(), cfg.final_res(), kCapHidden, rng);
    m.cap_tok_table = nn::weight_init({vocab, kCapTok}, rng);
    m.cap_rnn = nn::Linear::make(kCapTok + 2 * kCapHidden, kCapHidden, rng);
    m.cap_out = nn::Linear::make(kCapHidden, vocab, rng);
    return m;
  }

  ParamSet generator_params() const {
    ParamSet ps;
    g0_fc.add_to(ps, "t2i_g.fc0");
    for (size_t i = 0; i < g_conv.size(); ++i) {
      const std::string p = "t2i_g.s" + std::to_string(i + 1);
      g_conv[i].add_to(ps, p + ".conv");
      g_cattn[i].add_to(ps, p + ".cattn");
      g_sattn[i].add_to(ps, p + ".sattn");
    }
    for (size_t i = 0; i < to_rgb.size(); ++i)
      to_rgb[i].add_to(ps, "t2i_g.rgb" + std::to_string(i));
    return ps;
  }
  ParamSet discriminator_params() const {
    ParamSet ps;
    for (size_t i = 0; i < d.size(); ++i)
      d[i].add_to(ps, "t2i_d.m" + std::to_string(i));
    return ps;
  }
  ParamSet caption_params() const {
    ParamSet ps;
    cap_enc.add_to(ps, "cap.enc");
    ps.add("cap.tok", cap_tok_table);
    cap_rnn.add_to(ps, "cap.rnn");
    cap_out.add_to(ps, "cap.out");
    return ps;
  }
  ParamSet embedder_params() const {
    ParamSet ps;
    embedder.add_to(ps, "embed");
    return ps;
  }
  /// Everything Eq.-1 side steps: generators, caption branch, embedder.
  ParamSet g_side_params() const {
    ParamSet ps = generator_params();
    for (const auto& [n, p] : caption_params()) ps.add(n, p);
    for (const auto& [n, p] : embedder_params()) ps.add(n, p);
    return ps;
  }
  ParamSet all_params() const {
    ParamSet ps = g_side_params();
    for (const auto& [n, p] : discriminator_params()) ps.add(n, p);
    return ps;
  }
};

inline uint64_t params_checksum(const T2IModels& m) {
  uint64_t h = 1469598103934665603ull;
  for (const auto& [name, p] : m.all_params())
    for (int64_t i = 0; i < p.size(); ++i) {
      uint64_t bits;
      const double v = p[i];
      std::memcpy(&bits, &v, 8);
      for (int b = 0; b < 8; ++b) {
        h ^= (bits >> (8 * b)) & 0xff;
        h *= 1099511628211ull;
      }
    }
  return h;
}

// ---------------------------------------------------------------------------
// Generation.

namespace detail {

inline void check_compat(const StageConfig& cfg, const T2IModels& m) {
  cfg.validate();
  if (cfg.num_stages != int(m.to_rgb.size()) || cfg.num_stages != int(m.d.size()))
    throw ValueError("t2i: config asks for " + std::to_string(cfg.num_stages) +
                     " stages, models hold " + std::to_string(m.to_rgb.size()));
  if (cfg.d_text != m.embedder.d_text())
    throw ValueError("t2i: config d_text " + std::to_string(cfg.d_text) +
                     " does not match the embedder");
  if (cfg.base_res != m.cfg.base_res)
    throw ValueError("t2i: config base resolution differs from the models");
}

}  // namespace detail

/// All M stage images for one (text, noise) pair, coarse to fine, in [-1,1].
inline std::vector<Tensor> generate_stages(const nn::TextEmbedding& embedding,
                                           const Tensor& noise, const T2IModels& m,
                                           const StageConfig& cfg) {
  detail::check_compat(cfg, m);
  if (embedding.vector.shape() != Shape{cfg.d_text})
    throw ShapeError("generate_stages: embedding must be [" +
                     std::to_string(cfg.d_text) + "], got " +
                     shape_str(embedding.vector.shape()));
  if (noise.shape() != Shape{cfg.z_dim})
    throw ShapeError("generate_stages: noise must be [" + std::to_string(cfg.z_dim) +
                     "], got " + shape_str(noise.shape()));

  std::vector<Tensor> images;
  Tensor x = concat_vec({embedding.vector, noise});
  Tensor h = leaky_relu(m.g0_fc.forward_vec(x));
  h = reshape(h, {stage_channels(0), cfg.base_res, cfg.base_res});
  images.push_back(bento::tanh(m.to_rgb[0].forward(h)));
  for (int s = 1; s < cfg.num_stages; ++s) {
    h = upsample2x(h);
    h = leaky_relu(m.g_conv[size_t(s - 1)].forward(h));
    h = m.g_cattn[size_t(s - 1)].forward(h);
    h = m.g_sattn[size_t(s - 1)].forward(h);
    images.push_back(bento::tanh(m.to_rgb[size_t(s)].forward(h)));
  }
  return images;
}

// ---------------------------------------------------------------------------
// Losses.

/**
 * Per-stage adversarial terms. The discriminator side scores five pairs:
 * real and fake unconditionally, real with its caption, real with a
 * mismatched caption, and fake with its caption; the generator side scores
 * the fake through both heads.
 */
inline std::pair<Tensor, Tensor> stage_adversarial_losses(
    const Tensor& image_m, const Tensor& real_image_m, const nn::TextEmbedding& embedding,
    const nn::TextEmbedding& mismatched, const T2IModels& m, int stage) {
  if (stage < 0 || stage >= int(m.d.size()))
    throw ValueError("stage_adversarial_losses: no stage " + std::to_string(stage));
  const int r = m.cfg.resolution(stage);
  for (const Tensor* img : {&image_m, &real_image_m})
    if (img->shape() != Shape{3, r, r})
      throw ShapeError("stage_adversarial_losses: stage " + std::to_string(stage) +
                       " expects [3," + std::to_string(r) + "," + std::to_string(r) +
                       "], got " + shape_str(img->shape()));

  const StageDiscriminator& d = m.d[size_t(stage)];
  Tensor fr = d.features(real_image_m);
  Tensor ff = d.features(image_m);
  Tensor l_d = bce_toward_one(d.score_uncond(fr));
  l_d = add(l_d, bce_toward_zero(d.score_uncond(ff)));
  l_d = add(l_d, bce_toward_one(d.score_cond(fr, embedding.vector)));
  l_d = add(l_d, bce_toward_zero(d.score_cond(fr, mismatched.vector)));
  l_d = add(l_d, bce_toward_zero(d.score_cond(ff, embedding.vector)));
  Tensor l_g = add(bce_toward_one(d.score_uncond(ff)),
                   bce_toward_one(d.score_cond(ff, embedding.vector)));
  return {l_g, l_d};
}

/// Mean absolute pixel difference; the per-stage identity term.
inline Tensor identity_loss(const Tensor& generated, const Tensor& ground_truth) {
  return l1_loss(generated, ground_truth);
}

/// Box-filter downsampling by an integer factor (plain mean pooling).
inline Tensor box_downsample(const Tensor& img, int factor) {
  if (img.ndim() != 3) throw ShapeError("box_downsample: expected [C,H,W]");
  if (factor < 1 || img.dim(1) % factor != 0 || img.dim(2) % factor != 0)
    throw ValueError("box_downsample: factor " + std::to_string(factor) +
                     " does not divide " + shape_str(img.shape()));
  if (factor == 1) return img;
  const int C = img.dim(0), H = img.dim(1) / factor, W = img.dim(2) / factor;
  Tensor out = Tensor::zeros({C, H, W});
  const double inv = 1.0 / double(factor * factor);
  for (int c = 0; c < C; ++c)
    for (int i = 0; i < H; ++i)
      for (int j = 0; j < W; ++j) {
        double acc = 0.0;
        for (int di = 0; di < factor; ++di)
          for (int dj = 0; dj < factor; ++dj)
            acc += img.at(c, i * factor + di, j * factor + dj);
        out.at(c, i, j) = acc * inv;
      }
  return out;
}

/// Caption targets: tokens, EOS, then padding, clipped to max_len.
inline std::pair<std::vector<int>, std::vector<uint8_t>> caption_targets(
    const std::vector<int>& tokens, int max_len) {
  if (int(tokens.size()) + 1 > max_len)
    throw ValueError("caption: " + std::to_string(tokens.size()) +
                     " tokens exceed max length " + std::to_string(max_len));
  std::vector<int> tgt(size_t(max_len), data::kPadId);
  std::vector<uint8_t> valid(size_t(max_len), 0);
  for (size_t i = 0; i < tokens.size(); ++i) {
    tgt[i] = tokens[i];
    valid[i] = 1;
  }
  tgt[tokens.size()] = data::kEosId;
  valid[tokens.size()] = 1;
  return {tgt, valid};
}

namespace detail {

inline Tensor caption_rollout(const Tensor& image, const T2IModels& m,
                              const std::vector<int>* teacher) {
  // The image code is re-fed at every step: as initial state alone it decays
  // through the tanh recurrences before the item words are emitted.
  Tensor v = bento::tanh(m.cap_enc.forward(image));
  Tensor h = v;
  int prev = data::kBosId;
  std::vector<Tensor> rows;
  for (int t = 0; t < m.cfg.max_len; ++t) {
    Tensor e = reshape(embedding_rows(m.cap_tok_table, {prev}), {T2IModels::kCapTok});
    h = bento::tanh(m.cap_rnn.forward_vec(concat_vec({e, h, v})));
    Tensor logits_t = m.cap_out.forward_vec(h);  // [vocab]
    rows.push_back(logits_t);
    if (teacher) {
      prev = (*teacher)[size_t(t)];
    } else {
      int best = 0;
      for (int v = 1; v < m.vocab_size(); ++v)
        if (logits_t[v] > logits_t[best]) best = v;
      prev = best;
    }
  }
  return reshape(concat_vec(rows), {m.cfg.max_len, m.vocab_size()});
}

}  // namespace detail

/// Greedy caption logits for a final-stage image.
inline Tensor caption_branch(const Tensor& image, const T2IModels& m) {
  NoGradScope ng;
  return detail::caption_rollout(image, m, nullptr);
}

/// Teacher-forced caption logits; differentiable for training.
inline Tensor caption_branch_teacher(const Tensor& image, const std::vector<int>& tokens,
                                     const T2IModels& m) {
  auto [tgt, valid] = caption_targets(tokens, m.cfg.max_len);
  (void)valid;
  return detail::caption_rollout(image, m, &tgt);
}

/// Greedy-decoded token ids, cut at the first end marker.
inline std::vector<int> caption_decode(const Tensor& image, const T2IModels& m) {
  Tensor logits = caption_branch(image, m);
  std::vector<int> out;
  for (int t = 0; t < logits.dim(0); ++t) {
    int best = 0;
    for (int v = 1; v < logits.dim(1); ++v)
      if (logits.at(t, v) > logits.at(t, best)) best = v;
    if (best == data::kEosId) break;
    out.push_back(best);
  }
  return out;
}

/// Masked mean token cross-entropy between predicted logits and the caption.
inline Tensor cycle_loss(const Tensor& predicted_logits,
                         const std::vector<int>& target_caption) {
  if (predicted_logits.ndim() != 2)
    throw ShapeError("cycle_loss: logits must be [T,V], got " +
                     shape_str(predicted_logits.shape()));
  auto [tgt, valid] = caption_targets(target_caption, predicted_logits.dim(0));
  return cross_entropy_rows(predicted_logits, tgt, valid);
}

// ---------------------------------------------------------------------------
// Report and totals.

struct T2ILossReport {
  std::vector<double> l_g_m;
  std::vector<double> l_d_m;
  std::vector<double> l_id_m;
  double l_id = 0.0;  // sum of l_id_m
  double l_cycle = 0.0;
  double l_g_total = 0.0;
  double l_d_total = 0.0;
};

inline T2ILossReport total_t2i_losses(const std::vector<double>& l_g_m,
                                      const std::vector<double>& l_d_m,
                                      const std::vector<double>& l_id_m, double l_cycle,
                                      int num_stages) {
  if (int(l_g_m.size()) != num_stages || int(l_d_m.size()) != num_stages ||
      int(l_id_m.size()) != num_stages)
    throw ValueError("total_t2i_losses: expected " + std::to_string(num_stages) +
                     " stage terms, got " + std::to_string(l_g_m.size()) + "/" +
                     std::to_string(l_d_m.size()) + "/" + std::to_string(l_id_m.size()));
  T2ILossReport r;
  r.l_g_m = l_g_m;
  r.l_d_m = l_d_m;
  r.l_id_m = l_id_m;
  r.l_cycle = l_cycle;
  for (int s = 0; s < num_stages; ++s) {
    r.l_g_total += l_g_m[size_t(s)];
    r.l_g_total += l_id_m[size_t(s)];
    r.l_id += l_id_m[size_t(s)];
    r.l_d_total += l_d_m[size_t(s)];
  }
  r.l_g_total += l_cycle;
  return r;
}

// ---------------------------------------------------------------------------
// Training.

/// One (caption, image) pair; the image is final-stage resolution in [-1,1].
struct T2IExample {
  std::vector<int> tokens;
  Tensor image;
};

/// Weights applied to the optimized generator-side objective; the reported
/// losses stay unweighted so the logged totals keep their exact structure.
struct T2ITrainWeights {
  double w_id = 1.0;
  double w_cycle = 1.0;
};

/**
 * One alternating update: all stage discriminators on the five-term loss,
 * then generators, caption branch, and embedder on the generator-side
 * objective. Mismatched captions rotate within the batch.
 */
inline T2ILossReport train_step_t2i(const std::vector<T2IExample>& batch, T2IModels& m,
                                    Adam& opt_g, Adam& opt_d, Rng& rng,
                                    T2ITrainWeights w = {}) {
  if (m.frozen) throw ValueError("train_step_t2i: models are frozen");
  if (batch.empty()) throw ValueError("train_step_t2i: empty batch");
  const StageConfig& cfg = m.cfg;
  const size_t B = batch.size();
  const double inv_b = 1.0 / double(B);
  const int M = cfg.num_stages;

  for (const auto& ex : batch)
    if (ex.image.shape() != Shape{3, cfg.final_res(), cfg.final_res()})
      throw ShapeError("train_step_t2i: image must be [3," +
                       std::to_string(cfg.final_res()) + "," +
                       std::to_string(cfg.final_res()) + "], got " +
                       shape_str(ex.image.shape()));

  std::vector<Tensor> noises;
  for (size_t i = 0; i < B; ++i) noises.push_back(Tensor::randn({cfg.z_dim}, rng));

  // Ground truth per stage, constants.
  std::vector<std::vector<Tensor>> reals(B);
  for (size_t i = 0; i < B; ++i)
    for (int s = 0; s < M; ++s)
      reals[i].push_back(box_downsample(batch[i].image, cfg.final_res() / cfg.resolution(s)));

  auto drop_all_grads = [&m]() {
    for (const auto& e : m.all_params()) e.second.drop_grad();
  };

  // Discriminator phase.
  std::vector<double> l_d_m(size_t(M), 0.0);
  drop_all_grads();
  {
    Graph g;
    Graph::Scope scope(g);
    std::vector<Tensor> d_acc(static_cast<size_t>(M));
    for (size_t i = 0; i < B; ++i) {
      nn::TextEmbedding emb, mis;
      std::vector<Tensor> fakes;
      {
        NoGradScope ng;
        emb = m.embedder.embed(batch[i].tokens);
        mis = m.embedder.embed(batch[(i + 1) % B].tokens);
        fakes = generate_stages(emb, noises[i], m, cfg);
      }
      for (int s = 0; s < M; ++s) {
        auto [lg, ld] = stage_adversarial_losses(fakes[size_t(s)], reals[i][size_t(s)],
                                                 emb, mis, m, s);
        (void)lg;
        d_acc[size_t(s)] = d_acc[size_t(s)].defined() ? add(d_acc[size_t(s)], ld) : ld;
      }
    }
    Tensor total;
    for (int s = 0; s < M; ++s) {
      d_acc[size_t(s)] = scale(d_acc[size_t(s)], inv_b);
      total = total.defined() ? add(total, d_acc[size_t(s)]) : d_acc[size_t(s)];
    }
    g.backward(total);
    for (int s = 0; s < M; ++s) l_d_m[size_t(s)] = d_acc[size_t(s)].item();
    opt_d.step(m.discriminator_params());
  }

  // Generator phase.
  std::vector<double> l_g_m(size_t(M), 0.0), l_id_m(size_t(M), 0.0);
  double l_cycle = 0.0;
  drop_all_grads();
  {
    Graph g;
    Graph::Scope scope(g);
    std::vector<Tensor> g_acc(static_cast<size_t>(M)), id_acc(static_cast<size_t>(M));
    Tensor cyc_acc;
    for (size_t i = 0; i < B; ++i) {
      nn::TextEmbedding emb = m.embedder.embed(batch[i].tokens);
      nn::TextEmbedding mis;
      {
        NoGradScope ng;
        mis = m.embedder.embed(batch[(i + 1) % B].tokens);
      }
      std::vector<Tensor> fakes = generate_stages(emb, noises[i], m, cfg);
      for (int s = 0; s < M; ++s) {
        const StageDiscriminator& d = m.d[size_t(s)];
        Tensor ff = d.features(fakes[size_t(s)]);
        Tensor lg = add(bce_toward_one(d.score_uncond(ff)),
                        bce_toward_one(d.score_cond(ff, emb.vector)));
        Tensor lid = identity_loss(fakes[size_t(s)], reals[i][size_t(s)]);
        g_acc[size_t(s)] = g_acc[size_t(s)].defined() ? add(g_acc[size_t(s)], lg) : lg;
        id_acc[size_t(s)] =
            id_acc[size_t(s)].defined() ? add(id_acc[size_t(s)], lid) : lid;
      }
      Tensor logits = caption_branch_teacher(fakes[size_t(M - 1)], batch[i].tokens, m);
      Tensor cyc = cycle_loss(logits, batch[i].tokens);
      cyc_acc = cyc_acc.defined() ? add(cyc_acc, cyc) : cyc;
    }
    Tensor total;
    for (int s = 0; s < M; ++s) {
      g_acc[size_t(s)] = scale(g_acc[size_t(s)], inv_b);
      id_acc[size_t(s)] = scale(id_acc[size_t(s)], inv_b);
      Tensor stage_term = add(g_acc[size_t(s)], scale(id_acc[size_t(s)], w.w_id));
      total = total.defined() ? add(total, stage_term) : stage_term;
    }
    cyc_acc = scale(cyc_acc, inv_b);
    total = add(total, scale(cyc_acc, w.w_cycle));
    g.backward(total);
    for (int s = 0; s < M; ++s) {
      l_g_m[size_t(s)] = g_acc[size_t(s)].item();
      l_id_m[size_t(s)] = id_acc[size_t(s)].item();
    }
    l_cycle = cyc_acc.item();
    opt_g.step(m.g_side_params());
  }

  return total_t2i_losses(l_g_m, l_d_m, l_id_m, l_cycle, M);
}

/// Frozen-phase generation; touches no parameter.
inline std::vector<Tensor> infer_t2i(const std::vector<int>& tokens, const Tensor& noise,
                                     const T2IModels& m) {
  if (!m.frozen) throw ValueError("infer_t2i: models must be frozen for inference");
  NoGradScope ng;
  return generate_stages(m.embedder.embed(tokens), noise, m, m.cfg);
}

/// Template class of the greedy-decoded caption for a generated image.
inline int decoded_caption_class(const Tensor& image, const T2IModels& m) {
  return data::caption_class(caption_decode(image, m));
}

}  // namespace bento::t2i
