#pragma once

#include <json.hpp>

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "bento/image_io.hpp"
#include "bento/rng.hpp"
#include "bento/stn.hpp"
#include "bento/types.hpp"

namespace bento::data {

struct DatasetConfig {
  int canvas = 64;
  int item_canvas = 64;
};

// ---------------------------------------------------------------------------
// Caption protocol.

inline const std::vector<std::string>& vocab() {
  static const std::vector<std::string> v = {
      "[PAD]", "[BOS]", "[EOS]", "[UNK]",
      "place", "put", "arrange", "set", "lay", "placed", "arranged", "laid",
      "on", "atop", "over", "upon",
      "rice", "fried", "chicken", "saltgrilled", "salmon", "and", "tamagoyaki",
      "croquette", "shrimp", "is",
  };
  return v;
}

inline constexpr int kPadId = 0;
inline constexpr int kBosId = 1;
inline constexpr int kEosId = 2;
inline constexpr int kUnkId = 3;

inline int vocab_size() { return int(vocab().size()); }

inline int token_id(const std::string& word) {
  const auto& v = vocab();
  for (int i = 0; i < int(v.size()); ++i)
    if (v[size_t(i)] == word) return i;
  return kUnkId;
}

/// Lowercase, strip punctuation, split on whitespace, map through the vocabulary.
inline std::vector<int> tokenize(const std::string& caption) {
  std::vector<int> ids;
  std::string word;
  auto flush = [&] {
    if (!word.empty()) {
      ids.push_back(token_id(word));
      word.clear();
    }
  };
  for (char ch : caption) {
    const unsigned char c = static_cast<unsigned char>(ch);
    if (std::isalnum(c))
      word.push_back(char(std::tolower(c)));
    else if (std::isspace(c))
      flush();
    // punctuation: dropped, joining the surrounding characters
  }
  flush();
  return ids;
}

inline std::string base_caption(int type) {
  switch (type) {
    case 1: return "Place fried chicken on rice";
    case 2: return "Place salt-grilled salmon and tamagoyaki on rice";
    case 3: return "Place croquette and fried shrimp on rice, fried shrimp is on croquette";
  }
  throw ValueError("base_caption: invalid presentation type " + std::to_string(type));
}

/// Presentation type implied by a caption's category tokens; 0 if none match.
inline int caption_class(const std::vector<int>& tokens) {
  const int chicken = token_id("chicken"), salmon = token_id("salmon"),
            tama = token_id("tamagoyaki"), croq = token_id("croquette"),
            shrimp = token_id("shrimp");
  for (int t : tokens) {
    if (t == chicken) return 1;
    if (t == salmon || t == tama) return 2;
    if (t == croq || t == shrimp) return 3;
  }
  return 0;
}

namespace detail {

inline std::string capitalize(std::string s) {
  if (!s.empty()) s[0] = char(std::toupper(static_cast<unsigned char>(s[0])));
  return s;
}

inline int type_of_base(const std::string& caption) {
  for (int t = 1; t <= 3; ++t)
    if (tokenize(caption) == tokenize(base_caption(t))) return t;
  throw ValueError("expand_captions: caption does not match a known grammar: '" +
                   caption + "'");
}

}  // namespace detail

/**
 * Deterministic paraphrase pool over three sentence patterns, five verbs
 * and four prepositions; type 3 additionally varies the trailing
 * "fried shrimp is ... croquette" clause. The base sentence itself is
 * excluded, duplicates removed, and the pool shuffled under the seed before
 * taking n.
 */
inline std::vector<std::string> expand_captions(const std::string& base, int n,
                                                uint64_t seed) {
  if (n < 0) throw ValueError("expand_captions: negative n");
  const int type = detail::type_of_base(base);
  static const std::array<const char*, 5> verbs = {"place", "put", "arrange", "set",
                                                   "lay"};
  static const std::array<const char*, 5> pasts = {"placed", "put", "arranged", "set",
                                                   "laid"};
  static const std::array<const char*, 4> preps = {"on", "atop", "over", "upon"};
  const std::string items = type == 1   ? "fried chicken"
                            : type == 2 ? "salt-grilled salmon and tamagoyaki"
                                        : "croquette and fried shrimp";

  std::vector<std::string> tails;
  if (type == 3)
    for (const char* p2 : preps)
      tails.push_back(std::string(", fried shrimp is ") + p2 + " croquette");
  else
    tails.push_back("");

  std::vector<std::string> pool;
  for (const std::string& tail : tails) {
    for (const char* v : verbs)
      for (const char* p : preps)
        pool.push_back(detail::capitalize(std::string(v)) + " " + items + " " + p +
                       " rice" + tail);
    for (const char* v : pasts)
      for (const char* p : preps)
        pool.push_back(detail::capitalize(items) + " " + v + " " + p + " rice" + tail);
    for (const char* p : preps)
      for (const char* v : verbs)
        pool.push_back(detail::capitalize(std::string(p)) + " rice, " + v + " " + items +
                       tail);
  }

  // Data cleaning: drop the original and any duplicates, keep first sightings.
  std::vector<std::string> clean;
  for (const auto& s : pool) {
    if (s == base) continue;
    if (std::find(clean.begin(), clean.end(), s) == clean.end()) clean.push_back(s);
  }
  if (n > int(clean.size()))
    throw ValueError("expand_captions: requested " + std::to_string(n) +
                     " paraphrases, grammar yields only " + std::to_string(clean.size()));

  Rng rng(seed);
  for (int i = int(clean.size()) - 1; i > 0; --i)
    std::swap(clean[size_t(i)], clean[size_t(rng.uniform_int(0, i))]);
  clean.resize(size_t(n));
  return clean;
}

/// Seeded k-without-replacement draw from the pool.
inline std::vector<std::string> select_captions(const std::vector<std::string>& pool,
                                                int k, uint64_t seed) {
  if (k < 0 || k > int(pool.size()))
    throw ValueError("select_captions: cannot draw " + std::to_string(k) + " from " +
                     std::to_string(pool.size()));
  std::vector<int> idx(pool.size());
  for (size_t i = 0; i < idx.size(); ++i) idx[i] = int(i);
  Rng rng(seed);
  std::vector<std::string> out;
  for (int i = 0; i < k; ++i) {
    const int j = rng.uniform_int(i, int(idx.size()) - 1);
    std::swap(idx[size_t(i)], idx[size_t(j)]);
    out.push_back(pool[size_t(idx[size_t(i)])]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic scene generation.

namespace detail {

/// Seeded value noise on a 9x9 lattice, bilinear between knots, range [0,1].
struct ValueNoise {
  std::array<double, 81> knots{};

  explicit ValueNoise(Rng& rng) {
    for (auto& k : knots) k = rng.uniform();
  }

  double sample(double u, double v) const {  // u,v in [-1,1]
    const double x = (u + 1.0) * 4.0, y = (v + 1.0) * 4.0;  // [0,8]
    const int x0 = std::min(7, std::max(0, int(std::floor(x))));
    const int y0 = std::min(7, std::max(0, int(std::floor(y))));
    const double fx = std::min(1.0, std::max(0.0, x - x0));
    const double fy = std::min(1.0, std::max(0.0, y - y0));
    auto k = [&](int yy, int xx) { return knots[size_t(yy) * 9 + xx]; };
    return (1 - fy) * ((1 - fx) * k(y0, x0) + fx * k(y0, x0 + 1)) +
           fy * ((1 - fx) * k(y0 + 1, x0) + fx * k(y0 + 1, x0 + 1));
  }
};

struct ItemStyle {
  std::array<double, 3> color;
  double noise_amp;
};

inline ItemStyle style_of(Category c) {
  switch (c) {
    case Category::Rice: return {{0.93, 0.91, 0.85}, 0.10};
    case Category::FriedChicken: return {{0.55, 0.34, 0.13}, 0.22};
    case Category::Salmon: return {{0.91, 0.49, 0.38}, 0.16};
    case Category::Tamagoyaki: return {{0.96, 0.82, 0.31}, 0.12};
    case Category::Croquette: return {{0.79, 0.55, 0.22}, 0.20};
    case Category::FriedShrimp: return {{0.94, 0.47, 0.23}, 0.18};
  }
  throw ValueError("style_of: bad category");
}

/// Shape predicate in box-local coordinates u,v in [-1,1]; phase varies blobs.
inline bool inside_shape(Category c, double u, double v, double phase) {
  const double r2 = u * u + v * v;
  switch (c) {
    case Category::Rice: {
      const double theta = std::atan2(v, u);
      const double r = 0.94 + 0.05 * std::sin(4.0 * theta + phase);
      return r2 <= r * r;
    }
    case Category::FriedChicken: {
      const double theta = std::atan2(v, u);
      const double r = 0.88 + 0.12 * std::sin(3.0 * theta + phase);
      return r2 <= r * r;
    }
    case Category::Salmon:
      return std::fabs(u + 0.3 * v) <= 0.9 && std::fabs(v) <= 0.85;
    case Category::Tamagoyaki:
      return std::fabs(u) <= 0.92 && std::fabs(v) <= 0.88;
    case Category::Croquette:
      return r2 <= 0.93 * 0.93;
    case Category::FriedShrimp:
      return u * u / (0.95 * 0.95) + v * v / (0.85 * 0.85) <= 1.0;
  }
  return false;
}

/// Item cut-out on its own canvas: RGBA, alpha 1 inside the shape.
inline Tensor rasterize_cutout(Category c, int canvas, Rng& rng) {
  const ValueNoise noise(rng);
  const double phase = rng.uniform(0.0, 6.283185307179586);
  const ItemStyle st = style_of(c);
  Tensor img = Tensor::zeros({4, canvas, canvas});
  for (int i = 0; i < canvas; ++i)
    for (int j = 0; j < canvas; ++j) {
      const double u = (2.0 * j + 1.0) / canvas - 1.0;
      const double v = (2.0 * i + 1.0) / canvas - 1.0;
      if (!inside_shape(c, u, v, phase)) continue;
      const double nz = noise.sample(u, v) - 0.5;
      for (int k = 0; k < 3; ++k) {
        double val = st.color[size_t(k)] + st.noise_amp * nz;
        img.at(k, i, j) = val < 0.0 ? 0.0 : (val > 1.0 ? 1.0 : val);
      }
      img.at(3, i, j) = 1.0;
    }
  return img;
}

inline LayoutBox sample_box(Category c, Rng& rng) {
  switch (c) {
    case Category::Rice:
      return {rng.uniform(0.46, 0.54), rng.uniform(0.50, 0.58), rng.uniform(0.70, 0.82),
              rng.uniform(0.48, 0.60)};
    case Category::FriedChicken:
      return {rng.uniform(0.40, 0.60), rng.uniform(0.36, 0.50), rng.uniform(0.30, 0.40),
              rng.uniform(0.26, 0.34)};
    case Category::Salmon:
      return {rng.uniform(0.28, 0.36), rng.uniform(0.40, 0.52), rng.uniform(0.36, 0.44),
              rng.uniform(0.24, 0.30)};
    case Category::Tamagoyaki:
      return {rng.uniform(0.64, 0.72), rng.uniform(0.42, 0.54), rng.uniform(0.20, 0.26),
              rng.uniform(0.18, 0.24)};
    case Category::Croquette:
      return {rng.uniform(0.38, 0.52), rng.uniform(0.38, 0.50), rng.uniform(0.34, 0.44),
              rng.uniform(0.26, 0.34)};
    case Category::FriedShrimp:
      throw ValueError("fried shrimp box is sampled relative to the croquette");
  }
  throw ValueError("sample_box: bad category");
}

inline LayoutBox sample_shrimp_box(const LayoutBox& croquette, Rng& rng) {
  return {croquette.cx + rng.uniform(-0.06, 0.10), croquette.cy + rng.uniform(-0.08, 0.04),
          rng.uniform(0.22, 0.30), rng.uniform(0.16, 0.22)};
}

inline std::vector<Category> type_categories(int type) {
  switch (type) {
    case 1: return {Category::Rice, Category::FriedChicken};
    case 2: return {Category::Rice, Category::Salmon, Category::Tamagoyaki};
    case 3: return {Category::Rice, Category::Croquette, Category::FriedShrimp};
  }
  throw ValueError("invalid presentation type " + std::to_string(type));
}

inline int64_t overlap_pixels(const Mask& a, const Mask& b) {
  int64_t n = 0;
  for (size_t p = 0; p < a.v.size(); ++p)
    if (a.v[p] && b.v[p]) ++n;
  return n;
}

}  // namespace detail

/// Canvas-space RGBA of an item: its cut-out placed into its box by the STN.
inline Tensor placed_item(const FoodItem& item, int canvas_h, int canvas_w) {
  NoGradScope ng;
  Tensor grid = stn::affine_grid(stn::bbox_to_affine(item.bbox), canvas_h, canvas_w);
  return stn::bilinear_sample(item.cutout, grid);
}

inline Mask alpha_to_mask(const Tensor& rgba) {
  Mask m(rgba.dim(1), rgba.dim(2));
  for (int i = 0; i < m.h; ++i)
    for (int j = 0; j < m.w; ++j) m.at(i, j) = rgba.at(3, i, j) >= 0.5 ? 1 : 0;
  return m;
}

/// Alpha-over composite of the scene's items, bottom to top, over background.
inline Tensor render_scene(const Scene& scene) {
  Tensor out = scene.background.detach();
  std::vector<const FoodItem*> by_z;
  for (const auto& it : scene.items) by_z.push_back(&it);
  std::sort(by_z.begin(), by_z.end(),
            [](const FoodItem* a, const FoodItem* b) { return a->z < b->z; });
  for (const FoodItem* it : by_z) {
    Tensor layer = placed_item(*it, scene.canvas_h, scene.canvas_w);
    for (int i = 0; i < scene.canvas_h; ++i)
      for (int j = 0; j < scene.canvas_w; ++j) {
        const double a = layer.at(3, i, j);
        for (int c = 0; c < 3; ++c)
          out.at(c, i, j) = layer.at(c, i, j) * a + out.at(c, i, j) * (1.0 - a);
      }
  }
  return out;
}

/**
 * Procedural scene with exact ground truth. Boxes are resampled until the
 * type's occlusion pattern holds with solid pixel evidence, so the ordering
 * module can recover the z-order exactly on every emitted scene.
 */
inline Scene generate_synthetic_scene(int type, uint64_t seed,
                                      const DatasetConfig& cfg = {}) {
  const auto cats = detail::type_categories(type);
  Rng rng(Rng::derive(seed, 0x5ce9e));

  Scene scene;
  scene.type = type;
  scene.canvas_h = scene.canvas_w = cfg.canvas;

  // Background: dark tray with mild value noise.
  {
    Rng brng(Rng::derive(seed, 0xb9));
    const detail::ValueNoise nz(brng);
    scene.background = Tensor::zeros({3, cfg.canvas, cfg.canvas});
    const std::array<double, 3> base = {0.16, 0.17, 0.19};
    for (int i = 0; i < cfg.canvas; ++i)
      for (int j = 0; j < cfg.canvas; ++j) {
        const double u = (2.0 * j + 1.0) / cfg.canvas - 1.0;
        const double v = (2.0 * i + 1.0) / cfg.canvas - 1.0;
        const double d = 0.06 * (nz.sample(u, v) - 0.5);
        for (int c = 0; c < 3; ++c) scene.background.at(c, i, j) = base[size_t(c)] + d;
      }
  }

  const int64_t min_overlap = 16;
  for (int attempt = 0; attempt < 64; ++attempt) {
    scene.items.clear();
    std::vector<LayoutBox> boxes;
    for (size_t k = 0; k < cats.size(); ++k) {
      if (cats[k] == Category::FriedShrimp)
        boxes.push_back(detail::sample_shrimp_box(boxes[k - 1], rng));
      else
        boxes.push_back(detail::sample_box(cats[k], rng));
    }
    bool boxes_ok = true;
    for (const auto& b : boxes) boxes_ok = boxes_ok && b.valid();
    if (!boxes_ok) continue;

    for (size_t k = 0; k < cats.size(); ++k) {
      FoodItem item;
      item.id = int(k);
      item.category = cats[k];
      item.z = int(k);
      item.bbox = boxes[k];
      Rng irng(Rng::derive(seed, 0x17e3 + k));
      item.cutout = detail::rasterize_cutout(cats[k], cfg.item_canvas, irng);
      item.amodal = alpha_to_mask(placed_item(item, cfg.canvas, cfg.canvas));
      scene.items.push_back(std::move(item));
    }

    // Visible = amodal minus everything placed later.
    for (size_t k = 0; k < scene.items.size(); ++k) {
      Mask vis = scene.items[k].amodal;
      for (size_t j = k + 1; j < scene.items.size(); ++j)
        for (size_t p = 0; p < vis.v.size(); ++p)
          if (scene.items[j].amodal.v[p]) vis.v[p] = 0;
      scene.items[k].visible = std::move(vis);
    }

    // The type's occlusion pattern: every non-base item overlaps the base
    // (rice), and type 3's shrimp overlaps its croquette.
    bool ok = true;
    for (size_t k = 1; k < scene.items.size(); ++k)
      ok = ok && detail::overlap_pixels(scene.items[0].amodal, scene.items[k].amodal) >=
                     min_overlap;
    if (type == 3)
      ok = ok && detail::overlap_pixels(scene.items[1].amodal, scene.items[2].amodal) >=
                     min_overlap;
    if (type == 2) {
      // If salmon and tamagoyaki are disjoint the recovery tie-break must
      // see the salmon as larger; when they overlap the edge decides.
      const auto& salmon = scene.items[1];
      const auto& tama = scene.items[2];
      if (detail::overlap_pixels(salmon.amodal, tama.amodal) == 0)
        ok = ok && salmon.visible.area() > tama.visible.area();
    }
    // Every overlapping pair must leave the upper item visibly on top
    // somewhere in the intersection, or the direction is unrecoverable.
    for (size_t a = 0; a < scene.items.size() && ok; ++a)
      for (size_t b = a + 1; b < scene.items.size() && ok; ++b)
        if (detail::overlap_pixels(scene.items[a].amodal, scene.items[b].amodal) > 0)
          ok = detail::overlap_pixels(scene.items[a].amodal, scene.items[b].visible) >= 8;
    for (const auto& it : scene.items) ok = ok && it.visible.area() > 0;
    if (!ok) continue;

    scene.scene_id = "scene_t" + std::to_string(type) + "_" + std::to_string(seed);
    const std::string base = base_caption(type);
    auto pool = expand_captions(base, 25, Rng::derive(seed, 0xca9));
    auto picked = select_captions(pool, 8, Rng::derive(seed, 0x5e1));
    scene.captions.clear();
    scene.captions.push_back(base);
    for (auto& s : picked) scene.captions.push_back(std::move(s));
    return scene;
  }
  throw ValueError("generate_synthetic_scene: no valid layout after 64 attempts (type " +
                   std::to_string(type) + ", seed " + std::to_string(seed) + ")");
}

// ---------------------------------------------------------------------------
// Annotation files.

inline void validate_scene(const Scene& scene, const std::string& origin) {
  if (scene.type < 1 || scene.type > 3)
    throw DataError(origin + ": invalid presentation type " + std::to_string(scene.type));
  if (scene.captions.empty()) throw DataError(origin + ": scene has no captions");
  if (scene.canvas_h < 1 || scene.canvas_w < 1)
    throw DataError(origin + ": bad canvas size");

  std::vector<Category> want = detail::type_categories(scene.type);
  std::vector<Category> got;
  for (const auto& it : scene.items) got.push_back(it.category);
  std::sort(want.begin(), want.end());
  std::sort(got.begin(), got.end());
  if (want != got)
    throw DataError(origin + ": item categories do not match presentation type " +
                    std::to_string(scene.type));

  std::vector<int> zs;
  for (const auto& it : scene.items) {
    const std::string who = origin + " item " + std::to_string(it.id);
    if (it.amodal.h != scene.canvas_h || it.amodal.w != scene.canvas_w ||
        it.visible.h != scene.canvas_h || it.visible.w != scene.canvas_w)
      throw DataError(who + ": mask resolution differs from canvas");
    if (it.amodal.area() == 0) throw DataError(who + ": empty amodal mask");
    if (!it.visible.subset_of(it.amodal))
      throw DataError(who + ": visible mask not a subset of amodal mask");
    if (!it.bbox.valid()) throw DataError(who + ": invalid bbox");
    if (it.cutout.ndim() != 3 || it.cutout.dim(0) != 4)
      throw DataError(who + ": cutout must be RGBA");
    zs.push_back(it.z);
  }
  std::sort(zs.begin(), zs.end());
  if (std::adjacent_find(zs.begin(), zs.end()) != zs.end())
    throw DataError(origin + ": duplicate z index");
}

/// Writes <id>.json plus a <id>/ directory of PNGs; returns the json path.
inline std::string write_annotation(const Scene& scene, const std::string& dir) {
  namespace fs = std::filesystem;
  validate_scene(scene, scene.scene_id);
  const fs::path root(dir);
  const fs::path assets = root / scene.scene_id;
  std::error_code ec;
  fs::create_directories(assets, ec);
  if (ec) throw IoError("cannot create " + assets.string() + ": " + ec.message());

  nlohmann::json j;
  j["scene_id"] = scene.scene_id;
  j["canvas"] = {scene.canvas_h, scene.canvas_w};
  j["type"] = scene.type;
  j["captions"] = scene.captions;
  const std::string bg_rel = scene.scene_id + "/background.png";
  io::write_png((root / bg_rel).string(), io::tensor_to_image(scene.background));
  j["background"] = bg_rel;

  j["items"] = nlohmann::json::array();
  for (const auto& it : scene.items) {
    const std::string stem = scene.scene_id + "/item" + std::to_string(it.id) + "_";
    const std::string vis = stem + "visible.png";
    const std::string amo = stem + "amodal.png";
    const std::string cut = stem + "cutout.png";
    io::write_png((root / vis).string(), io::mask_to_image(it.visible));
    io::write_png((root / amo).string(), io::mask_to_image(it.amodal));
    io::write_png((root / cut).string(), io::tensor_to_image(it.cutout));
    nlohmann::json ji;
    ji["id"] = it.id;
    ji["category"] = category_name(it.category);
    ji["visible_mask"] = vis;
    ji["amodal_mask"] = amo;
    ji["cutout"] = cut;
    ji["bbox"] = {it.bbox.cx, it.bbox.cy, it.bbox.w, it.bbox.h};
    ji["z"] = it.z;
    j["items"].push_back(std::move(ji));
  }

  const fs::path jpath = root / (scene.scene_id + ".json");
  std::ofstream f(jpath, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open for writing: " + jpath.string());
  f << j.dump(2) << "\n";
  if (!f) throw IoError("short write: " + jpath.string());
  return jpath.string();
}

inline Scene load_annotation(const std::string& json_path) {
  namespace fs = std::filesystem;
  std::ifstream f(json_path, std::ios::binary);
  if (!f) throw IoError("cannot open: " + json_path);
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(json_path + ": " + e.what());
  }

  Scene scene;
  const fs::path root = fs::path(json_path).parent_path();
  try {
    scene.scene_id = j.at("scene_id").get<std::string>();
    scene.canvas_h = j.at("canvas").at(0).get<int>();
    scene.canvas_w = j.at("canvas").at(1).get<int>();
    scene.type = j.at("type").get<int>();
    scene.captions = j.at("captions").get<std::vector<std::string>>();
    if (j.contains("background")) {
      scene.background = io::image_to_tensor(
          io::read_png((root / j.at("background").get<std::string>()).string()));
    } else {
      scene.background = Tensor::full({3, scene.canvas_h, scene.canvas_w}, 0.17);
    }
    for (const auto& ji : j.at("items")) {
      FoodItem it;
      it.id = ji.at("id").get<int>();
      it.category = category_from_name(ji.at("category").get<std::string>());
      it.visible = io::image_to_mask(
          io::read_png((root / ji.at("visible_mask").get<std::string>()).string()));
      it.amodal = io::image_to_mask(
          io::read_png((root / ji.at("amodal_mask").get<std::string>()).string()));
      it.cutout = io::image_to_tensor(
          io::read_png((root / ji.at("cutout").get<std::string>()).string()));
      if (it.cutout.dim(0) != 4)
        throw DataError(json_path + " item " + std::to_string(it.id) +
                        ": cutout is not RGBA");
      const auto& bb = ji.at("bbox");
      it.bbox = {bb.at(0).get<double>(), bb.at(1).get<double>(), bb.at(2).get<double>(),
                 bb.at(3).get<double>()};
      it.z = ji.at("z").get<int>();
      scene.items.push_back(std::move(it));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(json_path + ": " + e.what());
  }
  validate_scene(scene, json_path);
  return scene;
}

/// The generator's ground-truth placement order (ascending z).
inline PlacementOrder truth_order(const Scene& scene) {
  std::vector<const FoodItem*> by_z;
  for (const auto& it : scene.items) by_z.push_back(&it);
  std::sort(by_z.begin(), by_z.end(),
            [](const FoodItem* a, const FoodItem* b) { return a->z < b->z; });
  PlacementOrder o;
  for (const FoodItem* it : by_z) o.ids.push_back(it->id);
  return o;
}

}  // namespace bento::data
