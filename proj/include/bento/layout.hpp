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
#include "bento/stn.hpp"
#include "bento/types.hpp"

namespace bento::layout {

struct CompositionConfig {
  int canvas = 64;
  int z_dim = 64;
  int d_cat = 16;
  int d_hidden = 64;
};

/**
 * The composition system's four networks. The layout pair is a recurrent
 * conditional GAN over box sequences; the composition net refines box
 * placements into free affine parameters; the image discriminator judges
 * composited scenes. `category_rank` is a statistics buffer, not a weight:
 * it orders items at inference time.
 */
struct CompositionModels {
  CompositionConfig cfg;

  Tensor g_cat_table;  // [kNumCategories, d_cat]
  nn::Linear g_rnn;    // [d_cat + z + 4 + h] -> h
  nn::Linear g_head;   // h -> 4

  Tensor d_cat_table;
  nn::Linear d_rnn;  // [4 + d_cat + h] -> h
  nn::Linear d_head;  // h -> 1

  nn::Conv2d comp_c1;  // 4 -> 8, stride 2
  nn::Conv2d comp_c2;  // 8 -> 16, stride 2
  nn::Linear comp_fc;  // [16 + 4] -> 6, zero-initialized residual head

  nn::Conv2d img_c1;  // 3 -> 8, stride 2
  nn::Conv2d img_c2;  // 8 -> 16, stride 2
  nn::Conv2d img_c3;  // 16 -> 24, stride 2
  nn::Linear img_head;  // 24 -> 1

  Tensor category_rank;  // [kNumCategories], mean normalized placement index
  bool frozen = false;

  static CompositionModels make(const CompositionConfig& cfg, Rng& rng) {
    CompositionModels m;
    m.cfg = cfg;
    m.g_cat_table = nn::weight_init({kNumCategories, cfg.d_cat}, rng);
    m.g_rnn = nn::Linear::make(cfg.d_cat + cfg.z_dim + 4 + cfg.d_hidden, cfg.d_hidden, rng);
    m.g_head = nn::Linear::make(cfg.d_hidden, 4, rng);
    m.d_cat_table = nn::weight_init({kNumCategories, cfg.d_cat}, rng);
    m.d_rnn = nn::Linear::make(4 + cfg.d_cat + cfg.d_hidden, cfg.d_hidden, rng);
    m.d_head = nn::Linear::make(cfg.d_hidden, 1, rng);
    m.comp_c1 = nn::Conv2d::make(4, 8, 4, 2, 1, rng);
    m.comp_c2 = nn::Conv2d::make(8, 16, 4, 2, 1, rng);
    m.comp_fc = nn::Linear::make(16 + 4, 6, rng);
    for (auto& v : m.comp_fc.w.data()) v = 0.0;  // residual starts at zero
    m.img_c1 = nn::Conv2d::make(3, 8, 4, 2, 1, rng);
    m.img_c2 = nn::Conv2d::make(8, 16, 4, 2, 1, rng);
    m.img_c3 = nn::Conv2d::make(16, 24, 4, 2, 1, rng);
    m.img_head = nn::Linear::make(24, 1, rng);
    m.category_rank = Tensor::full({kNumCategories}, 0.5);
    return m;
  }

  ParamSet layout_g_params() const {
    ParamSet ps;
    ps.add("layout_g.cat", g_cat_table);
    g_rnn.add_to(ps, "layout_g.rnn");
    g_head.add_to(ps, "layout_g.head");
    return ps;
  }
  ParamSet layout_d_params() const {
    ParamSet ps;
    ps.add("layout_d.cat", d_cat_table);
    d_rnn.add_to(ps, "layout_d.rnn");
    d_head.add_to(ps, "layout_d.head");
    return ps;
  }
  ParamSet comp_params() const {
    ParamSet ps;
    comp_c1.add_to(ps, "comp.c1");
    comp_c2.add_to(ps, "comp.c2");
    comp_fc.add_to(ps, "comp.fc");
    return ps;
  }
  ParamSet img_d_params() const {
    ParamSet ps;
    img_c1.add_to(ps, "img_d.c1");
    img_c2.add_to(ps, "img_d.c2");
    img_c3.add_to(ps, "img_d.c3");
    img_head.add_to(ps, "img_d.head");
    return ps;
  }
  ParamSet generator_params() const {
    ParamSet ps = layout_g_params();
    for (const auto& [name, p] : comp_params()) ps.add(name, p);
    return ps;
  }
  ParamSet discriminator_params() const {
    ParamSet ps = layout_d_params();
    for (const auto& [name, p] : img_d_params()) ps.add(name, p);
    return ps;
  }
  ParamSet all_params() const {
    ParamSet ps = generator_params();
    for (const auto& [name, p] : discriminator_params()) ps.add(name, p);
    return ps;
  }
};

inline uint64_t params_checksum(const CompositionModels& m) {
  uint64_t h = 1469598103934665603ull;
  auto mix = [&](const Tensor& t) {
    for (int64_t i = 0; i < t.size(); ++i) {
      uint64_t bits;
      const double v = t[i];
      std::memcpy(&bits, &v, 8);
      for (int b = 0; b < 8; ++b) {
        h ^= (bits >> (8 * b)) & 0xff;
        h *= 1099511628211ull;
      }
    }
  };
  for (const auto& [name, p] : m.all_params()) mix(p);
  mix(m.category_rank);
  return h;
}

struct CompositionLossReport {
  double l_layout = 0.0;
  double l_image = 0.0;
  double l_stn = 0.0;
  double l_total = 0.0;
};

inline CompositionLossReport total_composition_loss(double l_layout, double l_image,
                                                    double l_stn) {
  for (double v : {l_layout, l_image, l_stn})
    if (!std::isfinite(v) || v < 0.0)
      throw ValueError("total_composition_loss: components must be finite and >= 0");
  CompositionLossReport r;
  r.l_layout = l_layout;
  r.l_image = l_image;
  r.l_stn = l_stn;
  r.l_total = l_layout + l_image + l_stn;
  return r;
}

// ---------------------------------------------------------------------------
// Layout GAN.

namespace detail {

inline void check_items(const std::vector<int>& categories, const PlacementOrder& order) {
  const size_t n = categories.size();
  if (n == 0) throw ValueError("layout: empty item list");
  if (order.ids.size() != n)
    throw ValueError("layout: order covers " + std::to_string(order.ids.size()) +
                     " items, categories cover " + std::to_string(n));
  std::vector<bool> seen(n, false);
  for (int id : order.ids) {
    if (id < 0 || id >= int(n) || seen[size_t(id)])
      throw ValueError("layout: order is not a permutation of the item indices");
    seen[size_t(id)] = true;
  }
  for (int c : categories)
    if (c < 0 || c >= kNumCategories)
      throw ValueError("layout: category id out of range: " + std::to_string(c));
}

inline Tensor box_tensor(const LayoutBox& b) {
  Tensor t = Tensor::zeros({4});
  t[0] = b.cx;
  t[1] = b.cy;
  t[2] = b.w;
  t[3] = b.h;
  return t;
}

inline LayoutBox tensor_box(const Tensor& t) {
  if (t.size() != 4) throw ShapeError("box tensor must have 4 values");
  return {t[0], t[1], t[2], t[3]};
}

}  // namespace detail

/**
 * Recurrent box generator. Boxes come out in placement order (entry k
 * belongs to item order.ids[k]); each step folds the previous box and
 * hidden state back in, so later boxes depend on everything already
 * placed. Sigmoid output keeps every coordinate inside (0,1).
 */
inline std::vector<Tensor> layout_generate_t(const std::vector<int>& categories,
                                             const PlacementOrder& order,
                                             const Tensor& noise,
                                             const CompositionModels& m) {
  detail::check_items(categories, order);
  if (noise.shape() != Shape{m.cfg.z_dim})
    throw ShapeError("layout_generate: noise must be [" + std::to_string(m.cfg.z_dim) +
                     "], got " + shape_str(noise.shape()));
  Tensor h = Tensor::zeros({m.cfg.d_hidden});
  Tensor box_prev = Tensor::zeros({4});
  std::vector<Tensor> out;
  for (int id : order.ids) {
    Tensor emb = reshape(embedding_rows(m.g_cat_table, {categories[size_t(id)]}),
                         {m.cfg.d_cat});
    Tensor x = concat_vec({emb, noise, box_prev, h});
    h = bento::tanh(m.g_rnn.forward_vec(x));
    Tensor box = sigmoid(m.g_head.forward_vec(h));
    out.push_back(box);
    box_prev = box;
  }
  return out;
}

inline std::vector<LayoutBox> layout_generate(const std::vector<int>& categories,
                                              const PlacementOrder& order,
                                              const Tensor& noise,
                                              const CompositionModels& m) {
  NoGradScope ng;
  std::vector<LayoutBox> boxes;
  for (const auto& t : layout_generate_t(categories, order, noise, m))
    boxes.push_back(detail::tensor_box(t));
  return boxes;
}

/// Realism score of a box sequence given the categories, in placement order.
inline Tensor layout_discriminate_t(const std::vector<Tensor>& boxes,
                                    const std::vector<int>& categories_in_order,
                                    const CompositionModels& m) {
  if (boxes.empty()) throw ValueError("layout_discriminate: empty box list");
  if (boxes.size() != categories_in_order.size())
    throw ValueError("layout_discriminate: " + std::to_string(boxes.size()) +
                     " boxes vs " + std::to_string(categories_in_order.size()) +
                     " categories");
  for (int c : categories_in_order)
    if (c < 0 || c >= kNumCategories)
      throw ValueError("layout_discriminate: category id out of range");
  Tensor h = Tensor::zeros({m.cfg.d_hidden});
  for (size_t k = 0; k < boxes.size(); ++k) {
    if (boxes[k].shape() != Shape{4})
      throw ShapeError("layout_discriminate: each box must be [4]");
    Tensor emb = reshape(
        embedding_rows(m.d_cat_table, {categories_in_order[k]}), {m.cfg.d_cat});
    Tensor x = concat_vec({boxes[k], emb, h});
    h = bento::tanh(m.d_rnn.forward_vec(x));
  }
  return sigmoid(m.d_head.forward_vec(h));  // [1]
}

inline double layout_discriminate(const std::vector<LayoutBox>& boxes,
                                  const std::vector<int>& categories_in_order,
                                  const CompositionModels& m) {
  NoGradScope ng;
  std::vector<Tensor> ts;
  for (const auto& b : boxes) ts.push_back(detail::box_tensor(b));
  return layout_discriminate_t(ts, categories_in_order, m).item();
}

/// Non-saturating conditional GAN terms over box sequences.
inline std::pair<Tensor, Tensor> layout_gan_loss(const std::vector<LayoutBox>& real,
                                                 const std::vector<Tensor>& fake,
                                                 const std::vector<int>& categories_in_order,
                                                 const CompositionModels& m) {
  std::vector<Tensor> real_t;
  for (const auto& b : real) real_t.push_back(detail::box_tensor(b));
  Tensor d_real = layout_discriminate_t(real_t, categories_in_order, m);
  Tensor d_fake = layout_discriminate_t(fake, categories_in_order, m);
  Tensor d_term = add(bce_toward_one(d_real), bce_toward_zero(d_fake));
  Tensor g_term = bce_toward_one(d_fake);
  return {g_term, d_term};
}

// ---------------------------------------------------------------------------
// Composition net and compositing.

/// Refines the box's affine into full 6-dof theta and transforms the item.
inline std::pair<Tensor, Tensor> compose_item(const Tensor& item_image,
                                              const LayoutBox& box,
                                              const CompositionModels& m) {
  if (item_image.ndim() != 3 || item_image.dim(0) != 4)
    throw ShapeError("compose_item: item image must be [4,H,W], got " +
                     shape_str(item_image.shape()));
  Tensor base = stn::bbox_to_affine(box);
  Tensor x = leaky_relu(m.comp_c1.forward(item_image));
  x = leaky_relu(m.comp_c2.forward(x));
  Tensor feats = reduce_mean(x, {1, 2});  // [16]
  Tensor inp = concat_vec({feats, detail::box_tensor(box)});
  Tensor residual = m.comp_fc.forward_vec(inp);  // [6], zero at init
  Tensor theta = add(base, reshape(residual, {2, 3}));
  Tensor grid = stn::affine_grid(theta, item_image.dim(1), item_image.dim(2));
  Tensor transformed = stn::bilinear_sample(item_image, grid);
  return {theta, transformed};
}

/// Alpha-over compositing in placement order; order ids index the list.
inline Tensor composite_scene(const std::vector<Tensor>& transformed,
                              const PlacementOrder& order, const Tensor& background) {
  if (background.ndim() != 3 || background.dim(0) != 3)
    throw ShapeError("composite_scene: background must be [3,H,W], got " +
                     shape_str(background.shape()));
  if (transformed.empty()) {
    if (!order.ids.empty())
      throw ValueError("composite_scene: order lists items but none were given");
    return background;
  }
  const size_t n = transformed.size();
  if (order.ids.size() != n)
    throw ValueError("composite_scene: order covers " + std::to_string(order.ids.size()) +
                     " items, got " + std::to_string(n));
  std::vector<bool> seen(n, false);
  for (int id : order.ids) {
    if (id < 0 || id >= int(n) || seen[size_t(id)])
      throw ValueError("composite_scene: order is not a permutation of the items");
    seen[size_t(id)] = true;
  }
  const int H = background.dim(1), W = background.dim(2);
  for (const auto& t : transformed)
    if (t.ndim() != 3 || t.dim(0) != 4 || t.dim(1) != H || t.dim(2) != W)
      throw ShapeError("composite_scene: item resolution mismatch: " +
                       shape_str(t.shape()) + " on a " + std::to_string(H) + "x" +
                       std::to_string(W) + " canvas");

  Tensor out = background;
  for (int id : order.ids) {
    const Tensor& item = transformed[size_t(id)];
    Tensor alpha = slice_channels(item, 3, 4);   // [1,H,W]
    Tensor rgb = slice_channels(item, 0, 3);     // [3,H,W]
    out = add(scale_spatial(rgb, alpha), scale_spatial(out, one_minus(alpha)));
  }
  return out;
}

/// Conv discriminator score over a composited scene.
inline Tensor image_discriminate_t(const Tensor& scene, const CompositionModels& m) {
  if (scene.ndim() != 3 || scene.dim(0) != 3)
    throw ShapeError("image_discriminate: expected [3,H,W], got " +
                     shape_str(scene.shape()));
  Tensor x = leaky_relu(m.img_c1.forward(scene));
  x = leaky_relu(m.img_c2.forward(x));
  x = leaky_relu(m.img_c3.forward(x));
  Tensor feats = reduce_mean(x, {1, 2});  // [24]
  return sigmoid(m.img_head.forward_vec(feats));  // [1]
}

inline std::pair<Tensor, Tensor> image_gan_loss(const Tensor& real_scene,
                                                const Tensor& fake_scene,
                                                const CompositionModels& m) {
  if (real_scene.shape() != fake_scene.shape())
    throw ShapeError("image_gan_loss: resolution mismatch: " +
                     shape_str(real_scene.shape()) + " vs " +
                     shape_str(fake_scene.shape()));
  Tensor d_real = image_discriminate_t(real_scene, m);
  Tensor d_fake = image_discriminate_t(fake_scene, m);
  Tensor d_term = add(bce_toward_one(d_real), bce_toward_zero(d_fake));
  Tensor g_term = bce_toward_one(d_fake);
  return {g_term, d_term};
}

// ---------------------------------------------------------------------------
// Training.

namespace detail {

struct SceneView {
  std::vector<int> categories;          // by item index
  PlacementOrder order;                 // indices into `categories`
  std::vector<int> categories_in_order;
  std::vector<LayoutBox> gt_in_order;
};

inline SceneView view_of(const Scene& scene) {
  SceneView v;
  for (const auto& it : scene.items) v.categories.push_back(int(it.category));
  std::vector<size_t> idx(scene.items.size());
  for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::sort(idx.begin(), idx.end(), [&](size_t a, size_t b) {
    return scene.items[a].z < scene.items[b].z;
  });
  for (size_t i : idx) {
    v.order.ids.push_back(int(i));
    v.categories_in_order.push_back(int(scene.items[i].category));
    v.gt_in_order.push_back(scene.items[i].bbox);
  }
  return v;
}

inline Tensor acc_add(const Tensor& acc, const Tensor& term) {
  return acc.defined() ? add(acc, term) : term;
}

}  // namespace detail

/// Mean composition-net placement loss against the annotated targets.
inline Tensor batch_stn_loss(const Scene& scene, const CompositionModels& m) {
  Tensor acc;
  for (const auto& item : scene.items) {
    Tensor target = data::placed_item(item, item.cutout.dim(1), item.cutout.dim(2));
    auto [theta, transformed] = compose_item(item.cutout, item.bbox, m);
    (void)theta;
    Tensor term = stn::stn_loss(transformed, target);
    acc = detail::acc_add(acc, term);
  }
  return scale(acc, 1.0 / double(scene.items.size()));
}

struct TrainWeights {
  double w_layout = 1.0;
  double w_image = 1.0;
  double w_stn = 1.0;
};

/**
 * One alternating GAN update on a batch: discriminators first on real/fake
 * pairs, then generators plus the composition net. The report carries the
 * batch-mean generator-side components; l_total is their plain sum.
 */
inline CompositionLossReport train_step_composition(const std::vector<Scene>& batch,
                                                    CompositionModels& m, Adam& opt_g,
                                                    Adam& opt_d, Rng& rng,
                                                    const TrainWeights& w = {}) {
  if (m.frozen) throw ValueError("train_step_composition: models are frozen");
  if (batch.empty()) throw ValueError("train_step_composition: empty batch");
  const double inv_b = 1.0 / double(batch.size());

  std::vector<Tensor> noises;
  for (size_t i = 0; i < batch.size(); ++i)
    noises.push_back(Tensor::randn({m.cfg.z_dim}, rng));

  // Each phase backpropagates through the other side's parameters too;
  // stale accumulations must not leak across phases.
  auto drop_all_grads = [&m]() {
    for (const auto& e : m.all_params()) e.second.drop_grad();
  };

  // Discriminator phase: fakes are produced outside the tape.
  drop_all_grads();
  {
    Graph g;
    Graph::Scope scope(g);
    Tensor d_acc;
    for (size_t i = 0; i < batch.size(); ++i) {
      const Scene& scene = batch[i];
      auto v = detail::view_of(scene);

      std::vector<Tensor> fake_boxes;
      std::vector<Tensor> fake_items(scene.items.size());
      Tensor fake_img;
      {
        NoGradScope ng;
        fake_boxes = layout_generate_t(v.categories, v.order, noises[i], m);
        for (size_t k = 0; k < v.order.ids.size(); ++k) {
          const int id = v.order.ids[k];
          fake_items[size_t(id)] =
              compose_item(scene.items[size_t(id)].cutout,
                           detail::tensor_box(fake_boxes[k]), m)
                  .second;
        }
        fake_img = composite_scene(fake_items, v.order, scene.background);
      }
      Tensor real_img = data::render_scene(scene);

      auto [g_l, d_l] = layout_gan_loss(v.gt_in_order, fake_boxes,
                                        v.categories_in_order, m);
      (void)g_l;
      auto [g_i, d_i] = image_gan_loss(real_img, fake_img, m);
      (void)g_i;
      d_acc = detail::acc_add(d_acc, add(d_l, d_i));
    }
    Tensor d_loss = scale(d_acc, inv_b);
    g.backward(d_loss);
    opt_d.step(m.discriminator_params());
  }

  // Generator phase: fresh tape, fakes recorded end to end.
  CompositionLossReport report;
  drop_all_grads();
  {
    Graph g;
    Graph::Scope scope(g);
    Tensor layout_acc, image_acc, stn_acc;
    for (size_t i = 0; i < batch.size(); ++i) {
      const Scene& scene = batch[i];
      auto v = detail::view_of(scene);

      std::vector<Tensor> fake_boxes =
          layout_generate_t(v.categories, v.order, noises[i], m);
      Tensor g_layout =
          bce_toward_one(layout_discriminate_t(fake_boxes, v.categories_in_order, m));

      std::vector<Tensor> fake_items(scene.items.size());
      for (size_t k = 0; k < v.order.ids.size(); ++k) {
        const int id = v.order.ids[k];
        LayoutBox box;
        {
          NoGradScope ng;
          box = detail::tensor_box(fake_boxes[k]);
        }
        fake_items[size_t(id)] =
            compose_item(scene.items[size_t(id)].cutout, box, m).second;
      }
      Tensor fake_img = composite_scene(fake_items, v.order, scene.background);
      Tensor g_image = bce_toward_one(image_discriminate_t(fake_img, m));
      Tensor l_stn = batch_stn_loss(scene, m);

      layout_acc = detail::acc_add(layout_acc, g_layout);
      image_acc = detail::acc_add(image_acc, g_image);
      stn_acc = detail::acc_add(stn_acc, l_stn);
    }
    Tensor l_layout = scale(layout_acc, inv_b);
    Tensor l_image = scale(image_acc, inv_b);
    Tensor l_stn = scale(stn_acc, inv_b);
    Tensor g_loss = add(add(scale(reshape(l_layout, {1}), w.w_layout),
                            scale(reshape(l_image, {1}), w.w_image)),
                        scale(reshape(l_stn, {1}), w.w_stn));
    g.backward(g_loss);
    report = total_composition_loss(l_layout.item(), l_image.item(), l_stn.item());
    opt_g.step(m.generator_params());
  }
  return report;
}

/// Composition-net-only step against annotated targets (optional pretraining).
inline double train_step_stn(const std::vector<Scene>& batch, CompositionModels& m,
                             Adam& opt) {
  if (m.frozen) throw ValueError("train_step_stn: models are frozen");
  if (batch.empty()) throw ValueError("train_step_stn: empty batch");
  for (const auto& e : m.comp_params()) e.second.drop_grad();
  Graph g;
  Graph::Scope scope(g);
  Tensor acc;
  for (const Scene& scene : batch) acc = detail::acc_add(acc, batch_stn_loss(scene, m));
  Tensor loss = scale(acc, 1.0 / double(batch.size()));
  g.backward(loss);
  opt.step(m.comp_params());
  return loss.item();
}

/// Mean normalized placement index per category over a scene collection.
inline Tensor fit_category_rank(const std::vector<Scene>& scenes) {
  std::vector<double> sum(kNumCategories, 0.0);
  std::vector<int> cnt(kNumCategories, 0);
  for (const auto& scene : scenes) {
    auto v = detail::view_of(scene);
    const size_t n = v.order.ids.size();
    for (size_t k = 0; k < n; ++k) {
      const int cat = v.categories_in_order[k];
      sum[size_t(cat)] += n > 1 ? double(k) / double(n - 1) : 0.0;
      ++cnt[size_t(cat)];
    }
  }
  Tensor rank = Tensor::full({kNumCategories}, 0.5);
  for (int c = 0; c < kNumCategories; ++c)
    if (cnt[size_t(c)] > 0) rank[c] = sum[size_t(c)] / double(cnt[size_t(c)]);
  return rank;
}

struct InferenceResult {
  std::vector<LayoutBox> boxes;  // in placement order
  PlacementOrder order;          // indices into the input item list
  Tensor image;                  // [3,canvas,canvas]
};

/**
 * Frozen-phase forward pass: order from category statistics, boxes from the
 * layout generator, items transformed and composited. Touches no parameter.
 */
inline InferenceResult infer_composition(const std::vector<Tensor>& item_images,
                                         const std::vector<int>& categories,
                                         const Tensor& noise,
                                         const CompositionModels& m) {
  if (!m.frozen)
    throw ValueError("infer_composition: models must be frozen for inference");
  if (item_images.size() != categories.size())
    throw ValueError("infer_composition: item/category count mismatch");
  NoGradScope ng;

  InferenceResult res;
  const size_t n = item_images.size();
  std::vector<size_t> idx(n);
  for (size_t i = 0; i < n; ++i) idx[i] = i;
  std::sort(idx.begin(), idx.end(), [&](size_t a, size_t b) {
    const double ra = m.category_rank[categories[a]];
    const double rb = m.category_rank[categories[b]];
    return ra != rb ? ra < rb : a < b;
  });
  for (size_t i : idx) res.order.ids.push_back(int(i));

  auto boxes_t = layout_generate_t(categories, res.order, noise, m);
  std::vector<Tensor> transformed(n);
  for (size_t k = 0; k < n; ++k) {
    const int id = res.order.ids[k];
    const LayoutBox box = detail::tensor_box(boxes_t[k]);
    res.boxes.push_back(box);
    transformed[size_t(id)] = compose_item(item_images[size_t(id)], box, m).second;
  }
  const int H = item_images[0].dim(1), W = item_images[0].dim(2);
  Tensor background = Tensor::full({3, H, W}, 0.17);
  res.image = composite_scene(transformed, res.order, background);
  return res;
}

/// Mean over items of the L1 distance between corresponding boxes.
inline double box_distance(const std::vector<LayoutBox>& a,
                           const std::vector<LayoutBox>& b) {
  if (a.size() != b.size()) throw ValueError("box_distance: count mismatch");
  if (a.empty()) throw ValueError("box_distance: empty lists");
  double acc = 0.0;
  for (size_t i = 0; i < a.size(); ++i)
    acc += std::fabs(a[i].cx - b[i].cx) + std::fabs(a[i].cy - b[i].cy) +
           std::fabs(a[i].w - b[i].w) + std::fabs(a[i].h - b[i].h);
  return acc / double(a.size());
}

}  // namespace bento::layout
