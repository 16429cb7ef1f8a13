#include "doctest.h"

#include <cmath>
#include <vector>

#include "bento/dataset.hpp"
#include "bento/t2i.hpp"

using namespace bento;

namespace {

t2i::StageConfig small_cfg() {
  t2i::StageConfig c;
  c.num_stages = 2;
  c.base_res = 8;
  c.z_dim = 16;
  c.d_text = 16;
  c.max_len = 16;
  return c;
}

t2i::T2IModels small_models(uint64_t seed) {
  Rng rng(seed);
  return t2i::T2IModels::make(small_cfg(), data::vocab_size(), rng);
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  REQUIRE(a.shape() == b.shape());
  double m = 0.0;
  for (int64_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
  return m;
}

void zero_stage_heads(t2i::T2IModels& m) {
  for (auto& d : m.d) {
    for (auto t : {&d.uncond.w, &d.uncond.b, &d.cond.w, &d.cond.b})
      for (int64_t i = 0; i < t->size(); ++i) t->data()[size_t(i)] = 0.0;
  }
}

// Scene image resized to the generator's final resolution, mapped to [-1,1].
Tensor scene_example_image(int type, uint64_t seed, const t2i::StageConfig& cfg) {
  data::DatasetConfig dc;
  Tensor img = data::render_scene(data::generate_synthetic_scene(type, seed, dc));
  Tensor small = t2i::box_downsample(img, dc.canvas / cfg.final_res());
  return add_scalar(scale(small, 2.0), -1.0);
}

}  // namespace

TEST_SUITE_BEGIN("t2i");

TEST_CASE("stage geometry doubles the resolution each stage") {
  t2i::StageConfig c;
  CHECK(c.num_stages == 4);
  CHECK(c.resolution(0) == 8);
  CHECK(c.resolution(1) == 16);
  CHECK(c.resolution(2) == 32);
  CHECK(c.resolution(3) == 64);
  CHECK(c.final_res() == 64);
  for (int m = 0; m + 1 < c.num_stages; ++m)
    CHECK(c.resolution(m + 1) == 2 * c.resolution(m));

  CHECK(t2i::stage_channels(0) == 32);
  CHECK(t2i::stage_channels(1) == 16);
  CHECK(t2i::stage_channels(2) == 8);
  CHECK(t2i::stage_channels(3) == 4);
  CHECK(t2i::stage_channels(5) == 4);

  t2i::StageConfig bad = c;
  bad.num_stages = 0;
  CHECK_THROWS_AS(bad.validate(), ValueError);
  bad = c;
  bad.base_res = 0;
  CHECK_THROWS_AS(bad.validate(), ValueError);
}

TEST_CASE("generator emits one image per stage in tanh range") {
  auto cfg = small_cfg();
  auto m = small_models(11);
  Rng rng(7);
  auto emb = m.embedder.embed(data::tokenize(data::base_caption(1)));
  Tensor z = Tensor::randn({cfg.z_dim}, rng);

  auto imgs = t2i::generate_stages(emb, z, m, cfg);
  REQUIRE(int(imgs.size()) == cfg.num_stages);
  for (int s = 0; s < cfg.num_stages; ++s) {
    const int r = cfg.resolution(s);
    CHECK(imgs[size_t(s)].shape() == Shape{3, r, r});
    for (int64_t i = 0; i < imgs[size_t(s)].size(); ++i) {
      CHECK(imgs[size_t(s)][i] >= -1.0);
      CHECK(imgs[size_t(s)][i] <= 1.0);
    }
  }

  auto again = t2i::generate_stages(emb, z, m, cfg);
  for (int s = 0; s < cfg.num_stages; ++s)
    CHECK(max_abs_diff(imgs[size_t(s)], again[size_t(s)]) == 0.0);

  Tensor z2 = Tensor::randn({cfg.z_dim}, rng);
  auto other = t2i::generate_stages(emb, z2, m, cfg);
  CHECK(t2i::identity_loss(imgs.back(), other.back()).item() > 0.0);

  auto emb2 = m.embedder.embed(data::tokenize(data::base_caption(3)));
  auto cond = t2i::generate_stages(emb2, z, m, cfg);
  CHECK(t2i::identity_loss(imgs.back(), cond.back()).item() > 0.0);
}

TEST_CASE("generator validates its inputs") {
  auto cfg = small_cfg();
  auto m = small_models(12);
  Rng rng(3);
  auto emb = m.embedder.embed(data::tokenize(data::base_caption(2)));
  Tensor z = Tensor::randn({cfg.z_dim}, rng);

  CHECK_THROWS_AS(t2i::generate_stages(emb, Tensor::zeros({cfg.z_dim + 1}), m, cfg),
                  ShapeError);

  nn::TextEmbedding wide;
  wide.vector = Tensor::zeros({cfg.d_text + 1});
  CHECK_THROWS_AS(t2i::generate_stages(wide, z, m, cfg), ShapeError);

  auto deeper = cfg;
  deeper.num_stages = 3;
  CHECK_THROWS_AS(t2i::generate_stages(emb, z, m, deeper), ValueError);
}

TEST_CASE("zeroed score heads put every stage loss at its coin-flip value") {
  auto cfg = small_cfg();
  auto m = small_models(13);
  zero_stage_heads(m);
  Rng rng(5);
  auto emb = m.embedder.embed(data::tokenize(data::base_caption(1)));
  auto mis = m.embedder.embed(data::tokenize(data::base_caption(2)));
  const double log2 = std::log(2.0);

  for (int s = 0; s < cfg.num_stages; ++s) {
    const int r = cfg.resolution(s);
    Tensor fake = Tensor::uniform({3, r, r}, rng, -1.0, 1.0);
    Tensor real = Tensor::uniform({3, r, r}, rng, -1.0, 1.0);
    auto [lg, ld] = t2i::stage_adversarial_losses(fake, real, emb, mis, m, s);
    CHECK(lg.item() == doctest::Approx(2.0 * log2).epsilon(1e-12));
    CHECK(ld.item() == doctest::Approx(5.0 * log2).epsilon(1e-12));
  }
}

TEST_CASE("adversarial losses match their scoring formula") {
  auto cfg = small_cfg();
  auto m = small_models(14);
  Rng rng(9);
  auto emb = m.embedder.embed(data::tokenize(data::base_caption(3)));
  auto mis = m.embedder.embed(data::tokenize(data::base_caption(1)));

  for (int s = 0; s < cfg.num_stages; ++s) {
    const int r = cfg.resolution(s);
    Tensor fake = Tensor::uniform({3, r, r}, rng, -1.0, 1.0);
    Tensor real = Tensor::uniform({3, r, r}, rng, -1.0, 1.0);

    NoGradScope ng;
    const auto& d = m.d[size_t(s)];
    Tensor fr = d.features(real), ff = d.features(fake);
    const double su_r = d.score_uncond(fr).item();
    const double su_f = d.score_uncond(ff).item();
    const double sc_r = d.score_cond(fr, emb.vector).item();
    const double sc_rm = d.score_cond(fr, mis.vector).item();
    const double sc_f = d.score_cond(ff, emb.vector).item();

    auto [lg, ld] = t2i::stage_adversarial_losses(fake, real, emb, mis, m, s);
    const double want_d = -std::log(su_r) - std::log(1.0 - su_f) - std::log(sc_r) -
                          std::log(1.0 - sc_rm) - std::log(1.0 - sc_f);
    const double want_g = -std::log(su_f) - std::log(sc_f);
    CHECK(ld.item() == doctest::Approx(want_d).epsilon(1e-12));
    CHECK(lg.item() == doctest::Approx(want_g).epsilon(1e-12));
  }
}

TEST_CASE("adversarial losses validate stage and resolution") {
  auto cfg = small_cfg();
  auto m = small_models(15);
  auto emb = m.embedder.embed(data::tokenize(data::base_caption(1)));
  Tensor ok = Tensor::zeros({3, cfg.resolution(0), cfg.resolution(0)});
  Tensor wrong = Tensor::zeros({3, cfg.resolution(1), cfg.resolution(1)});

  CHECK_THROWS_AS(t2i::stage_adversarial_losses(wrong, wrong, emb, emb, m, 0),
                  ShapeError);
  CHECK_THROWS_AS(t2i::stage_adversarial_losses(ok, wrong, emb, emb, m, 0), ShapeError);
  CHECK_THROWS_AS(t2i::stage_adversarial_losses(ok, ok, emb, emb, m, cfg.num_stages),
                  ValueError);
  CHECK_THROWS_AS(t2i::stage_adversarial_losses(ok, ok, emb, emb, m, -1), ValueError);
}

TEST_CASE("identity loss behaves as a metric on images") {
  Rng rng(21);
  Tensor a = Tensor::uniform({3, 8, 8}, rng, -1.0, 1.0);
  Tensor b = Tensor::uniform({3, 8, 8}, rng, -1.0, 1.0);
  Tensor c = Tensor::uniform({3, 8, 8}, rng, -1.0, 1.0);

  CHECK(t2i::identity_loss(a, a).item() == 0.0);
  CHECK(t2i::identity_loss(a, b).item() > 0.0);
  CHECK(t2i::identity_loss(a, b).item() == t2i::identity_loss(b, a).item());
  CHECK(t2i::identity_loss(a, c).item() <=
        t2i::identity_loss(a, b).item() + t2i::identity_loss(b, c).item() + 1e-15);

  Tensor shifted = add_scalar(a, 0.25);
  CHECK(t2i::identity_loss(a, shifted).item() == 0.25);

  double acc = 0.0;
  for (int64_t i = 0; i < a.size(); ++i) acc += std::fabs(a[i] - b[i]);
  CHECK(t2i::identity_loss(a, b).item() == acc / double(a.size()));

  CHECK_THROWS_AS(t2i::identity_loss(a, Tensor::zeros({3, 4, 4})), ShapeError);
}

TEST_CASE("box downsampling averages non-overlapping blocks") {
  Tensor img = Tensor::zeros({1, 4, 4});
  for (int i = 0; i < 16; ++i) img.data()[size_t(i)] = double(i);

  Tensor half = t2i::box_downsample(img, 2);
  REQUIRE(half.shape() == Shape{1, 2, 2});
  CHECK(half.at(0, 0, 0) == (0.0 + 1.0 + 4.0 + 5.0) / 4.0);
  CHECK(half.at(0, 0, 1) == (2.0 + 3.0 + 6.0 + 7.0) / 4.0);
  CHECK(half.at(0, 1, 0) == (8.0 + 9.0 + 12.0 + 13.0) / 4.0);
  CHECK(half.at(0, 1, 1) == (10.0 + 11.0 + 14.0 + 15.0) / 4.0);

  Tensor same = t2i::box_downsample(img, 1);
  CHECK(max_abs_diff(same, img) == 0.0);

  Rng rng(2);
  Tensor rgb = Tensor::uniform({3, 8, 8}, rng, 0.0, 1.0);
  Tensor q = t2i::box_downsample(rgb, 4);
  REQUIRE(q.shape() == Shape{3, 2, 2});
  for (int c = 0; c < 3; ++c) {
    double acc = 0.0;
    for (int y = 0; y < 4; ++y)
      for (int x = 0; x < 4; ++x) acc += rgb.at(c, y, x);
    CHECK(q.at(c, 0, 0) == doctest::Approx(acc / 16.0).epsilon(1e-15));
  }

  CHECK_THROWS_AS(t2i::box_downsample(img, 3), ValueError);
  CHECK_THROWS_AS(t2i::box_downsample(img, 0), ValueError);
  CHECK_THROWS_AS(t2i::box_downsample(Tensor::zeros({4, 4}), 2), ShapeError);
}

TEST_CASE("caption targets append the end marker and pad the tail") {
  auto [tgt, valid] = t2i::caption_targets({5, 7, 9}, 6);
  CHECK(tgt == std::vector<int>{5, 7, 9, data::kEosId, data::kPadId, data::kPadId});
  CHECK(valid == std::vector<uint8_t>{1, 1, 1, 1, 0, 0});

  auto [empty_tgt, empty_valid] = t2i::caption_targets({}, 3);
  CHECK(empty_tgt == std::vector<int>{data::kEosId, data::kPadId, data::kPadId});
  CHECK(empty_valid == std::vector<uint8_t>{1, 0, 0});

  CHECK_NOTHROW(t2i::caption_targets({1, 2, 3, 4, 5}, 6));
  CHECK_THROWS_AS(t2i::caption_targets({1, 2, 3, 4, 5, 6}, 6), ValueError);
}

TEST_CASE("caption branch emits one logits row per step") {
  auto cfg = small_cfg();
  auto m = small_models(16);
  Rng rng(4);
  Tensor img = Tensor::uniform({3, cfg.final_res(), cfg.final_res()}, rng, -1.0, 1.0);

  Tensor logits = t2i::caption_branch(img, m);
  CHECK(logits.shape() == Shape{cfg.max_len, data::vocab_size()});
  Tensor again = t2i::caption_branch(img, m);
  CHECK(max_abs_diff(logits, again) == 0.0);

  auto tokens = data::tokenize(data::base_caption(1));
  Tensor teach = t2i::caption_branch_teacher(img, tokens, m);
  CHECK(teach.shape() == Shape{cfg.max_len, data::vocab_size()});

  auto decoded = t2i::caption_decode(img, m);
  CHECK(int(decoded.size()) <= cfg.max_len);
  for (int id : decoded) CHECK(id != data::kEosId);

  Graph g;
  {
    Graph::Scope scope(g);
    Tensor live = Tensor::uniform({3, cfg.final_res(), cfg.final_res()}, rng, -1.0, 1.0,
                                  true);
    Tensor loss = t2i::cycle_loss(t2i::caption_branch_teacher(live, tokens, m), tokens);
    g.backward(loss);
    CHECK(live.has_grad());
    double mg = 0.0;
    for (double v : live.grad()) mg = std::max(mg, std::fabs(v));
    CHECK(mg > 0.0);
  }
  m.all_params().zero_grads();
}

TEST_CASE("cycle loss scores uniform logits at log vocabulary size") {
  Tensor logits = Tensor::zeros({4, 16});
  std::vector<int> tokens{5, 6, 7};
  CHECK(t2i::cycle_loss(logits, tokens).item() ==
        doctest::Approx(std::log(16.0)).epsilon(1e-12));

  auto [tgt, valid] = t2i::caption_targets(tokens, 4);
  Tensor sharp = Tensor::zeros({4, 16});
  for (int t = 0; t < 4; ++t) sharp.data()[size_t(t) * 16 + size_t(tgt[size_t(t)])] = 60.0;
  CHECK(t2i::cycle_loss(sharp, tokens).item() < 1e-12);
  CHECK(t2i::cycle_loss(sharp, tokens).item() >= 0.0);
  (void)valid;
}

TEST_CASE("cycle loss ignores padded rows and matches a hand oracle") {
  Rng rng(31);
  const int T = 8, V = 16;
  Tensor logits = Tensor::uniform({T, V}, rng, -2.0, 2.0);
  std::vector<int> tokens{4, 9, 2 + 9, 1};

  Tensor noisy = Tensor::zeros({T, V});
  for (int64_t i = 0; i < logits.size(); ++i) noisy.data()[size_t(i)] = logits[i];
  for (int t = int(tokens.size()) + 1; t < T; ++t)
    for (int v = 0; v < V; ++v) noisy.data()[size_t(t) * V + v] = 1e6 * (v % 3);
  CHECK(t2i::cycle_loss(logits, tokens).item() == t2i::cycle_loss(noisy, tokens).item());

  auto [tgt, valid] = t2i::caption_targets(tokens, T);
  double acc = 0.0;
  int nv = 0;
  for (int t = 0; t < T; ++t) {
    if (!valid[size_t(t)]) continue;
    double mx = logits.at(t, 0);
    for (int c = 1; c < V; ++c) mx = std::max(mx, logits.at(t, c));
    double lse = 0.0;
    for (int c = 0; c < V; ++c) lse += std::exp(logits.at(t, c) - mx);
    acc += mx + std::log(lse) - logits.at(t, tgt[size_t(t)]);
    ++nv;
  }
  CHECK(t2i::cycle_loss(logits, tokens).item() == acc / nv);

  CHECK_THROWS_AS(t2i::cycle_loss(Tensor::zeros({4}), tokens), ShapeError);
}

TEST_CASE("loss totals follow the report identities") {
  auto one = t2i::total_t2i_losses({0.5}, {0.25}, {0.2}, 0.3, 1);
  CHECK(one.l_g_total == (0.5 + 0.2) + 0.3);
  CHECK(one.l_d_total == 0.25);
  CHECK(one.l_id == 0.2);
  CHECK(one.l_cycle == 0.3);

  auto zero = t2i::total_t2i_losses({0.0, 0.0}, {0.0, 0.0}, {0.0, 0.0}, 0.0, 2);
  CHECK(zero.l_g_total == 0.0);
  CHECK(zero.l_d_total == 0.0);

  Rng rng(41);
  const int M = 4;
  std::vector<double> lg, ld, lid;
  for (int s = 0; s < M; ++s) {
    lg.push_back(rng.uniform(0.0, 3.0));
    ld.push_back(rng.uniform(0.0, 3.0));
    lid.push_back(rng.uniform(0.0, 1.0));
  }
  const double cyc = rng.uniform(0.0, 4.0);
  auto r = t2i::total_t2i_losses(lg, ld, lid, cyc, M);

  double want_g = 0.0, want_d = 0.0, want_id = 0.0;
  for (int s = 0; s < M; ++s) {
    want_g += lg[size_t(s)];
    want_g += lid[size_t(s)];
    want_id += lid[size_t(s)];
    want_d += ld[size_t(s)];
  }
  want_g += cyc;
  CHECK(r.l_g_total == want_g);
  CHECK(r.l_d_total == want_d);
  CHECK(r.l_id == want_id);

  CHECK_THROWS_AS(t2i::total_t2i_losses({0.1}, {0.1, 0.2}, {0.0}, 0.0, 1), ValueError);
  CHECK_THROWS_AS(t2i::total_t2i_losses(lg, ld, lid, cyc, 3), ValueError);
}

TEST_CASE("one training step updates both sides and reports exact totals") {
  auto cfg = small_cfg();
  auto run = [&](uint64_t model_seed) {
    Rng mr(model_seed);
    auto m = t2i::T2IModels::make(cfg, data::vocab_size(), mr);
    Adam opt_g{AdamConfig{}};
    Adam opt_d{AdamConfig{}};
    Rng rng(99);
    std::vector<t2i::T2IExample> batch;
    for (int type : {1, 2}) {
      t2i::T2IExample ex;
      ex.tokens = data::tokenize(data::base_caption(type));
      ex.image = scene_example_image(type, 5000 + uint64_t(type), cfg);
      batch.push_back(ex);
    }
    auto rep = t2i::train_step_t2i(batch, m, opt_g, opt_d, rng);
    return std::make_pair(t2i::params_checksum(m), rep);
  };

  auto [sum_a, rep] = run(50);
  REQUIRE(int(rep.l_g_m.size()) == cfg.num_stages);
  REQUIRE(int(rep.l_d_m.size()) == cfg.num_stages);
  REQUIRE(int(rep.l_id_m.size()) == cfg.num_stages);
  for (int s = 0; s < cfg.num_stages; ++s) {
    CHECK(std::isfinite(rep.l_g_m[size_t(s)]));
    CHECK(std::isfinite(rep.l_d_m[size_t(s)]));
    CHECK(rep.l_id_m[size_t(s)] >= 0.0);
  }
  CHECK(rep.l_cycle > 0.0);

  double want_g = 0.0, want_d = 0.0, want_id = 0.0;
  for (int s = 0; s < cfg.num_stages; ++s) {
    want_g += rep.l_g_m[size_t(s)];
    want_g += rep.l_id_m[size_t(s)];
    want_id += rep.l_id_m[size_t(s)];
    want_d += rep.l_d_m[size_t(s)];
  }
  want_g += rep.l_cycle;
  CHECK(rep.l_g_total == want_g);
  CHECK(rep.l_d_total == want_d);
  CHECK(rep.l_id == want_id);

  auto [sum_b, rep_b] = run(50);
  CHECK(sum_a == sum_b);
  CHECK(rep.l_g_total == rep_b.l_g_total);
  CHECK(rep.l_d_total == rep_b.l_d_total);
  CHECK(rep.l_cycle == rep_b.l_cycle);

  auto [sum_c, rep_c] = run(51);
  CHECK(sum_a != sum_c);
  (void)rep_c;

  Rng mr(50);
  auto before = t2i::T2IModels::make(cfg, data::vocab_size(), mr);
  CHECK(sum_a != t2i::params_checksum(before));
}

TEST_CASE("training step rejects frozen models and bad batches") {
  auto cfg = small_cfg();
  auto m = small_models(60);
  Adam opt_g{AdamConfig{}};
  Adam opt_d{AdamConfig{}};
  Rng rng(1);

  t2i::T2IExample ex;
  ex.tokens = data::tokenize(data::base_caption(1));
  ex.image = scene_example_image(1, 6000, cfg);

  CHECK_THROWS_AS(t2i::train_step_t2i({}, m, opt_g, opt_d, rng), ValueError);

  t2i::T2IExample bad = ex;
  bad.image = Tensor::zeros({3, cfg.final_res() / 2, cfg.final_res() / 2});
  CHECK_THROWS_AS(t2i::train_step_t2i({bad}, m, opt_g, opt_d, rng), ShapeError);

  m.frozen = true;
  CHECK_THROWS_AS(t2i::train_step_t2i({ex}, m, opt_g, opt_d, rng), ValueError);
}

TEST_CASE("cycle objective reaches the first generator stage") {
  auto cfg = small_cfg();
  auto m = small_models(70);
  Rng rng(8);
  auto tokens = data::tokenize(data::base_caption(2));
  Tensor z = Tensor::randn({cfg.z_dim}, rng);

  Graph g;
  {
    Graph::Scope scope(g);
    auto emb = m.embedder.embed(tokens);
    auto imgs = t2i::generate_stages(emb, z, m, cfg);
    Tensor cyc = t2i::cycle_loss(t2i::caption_branch_teacher(imgs.back(), tokens, m),
                                 tokens);
    g.backward(cyc);
  }

  auto reaches = [](const Tensor& p) {
    if (!p.has_grad()) return false;
    for (double v : p.grad())
      if (v != 0.0) return true;
    return false;
  };
  CHECK(reaches(m.g0_fc.w));
  CHECK(reaches(m.to_rgb.back().k));
  CHECK(reaches(m.cap_rnn.w));
  CHECK(reaches(m.cap_tok_table));
  CHECK(reaches(m.embedder.table));
  m.all_params().zero_grads();
}

TEST_CASE("inference requires frozen models and leaves them untouched") {
  auto cfg = small_cfg();
  auto m = small_models(80);
  Rng rng(17);
  auto tokens = data::tokenize(data::base_caption(3));
  Tensor z = Tensor::randn({cfg.z_dim}, rng);

  CHECK_THROWS_AS(t2i::infer_t2i(tokens, z, m), ValueError);

  m.frozen = true;
  const uint64_t before = t2i::params_checksum(m);
  auto a = t2i::infer_t2i(tokens, z, m);
  auto b = t2i::infer_t2i(tokens, z, m);
  auto c = t2i::infer_t2i(tokens, Tensor::randn({cfg.z_dim}, rng), m);
  CHECK(t2i::params_checksum(m) == before);

  REQUIRE(int(a.size()) == cfg.num_stages);
  CHECK(max_abs_diff(a.back(), b.back()) == 0.0);
  CHECK(t2i::identity_loss(a.back(), c.back()).item() > 0.0);

  const int cls = t2i::decoded_caption_class(a.back(), m);
  CHECK(cls >= 0);
  CHECK(cls <= 3);
}

TEST_SUITE_END();
