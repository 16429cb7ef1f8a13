#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "bento/tensor.hpp"

namespace bento {

// Food categories of the three presentation types.
enum class Category : int {
  Rice = 0,
  FriedChicken = 1,
  Salmon = 2,
  Tamagoyaki = 3,
  Croquette = 4,
  FriedShrimp = 5,
};

inline constexpr int kNumCategories = 6;

inline const char* category_name(Category c) {
  switch (c) {
    case Category::Rice: return "rice";
    case Category::FriedChicken: return "fried_chicken";
    case Category::Salmon: return "salmon";
    case Category::Tamagoyaki: return "tamagoyaki";
    case Category::Croquette: return "croquette";
    case Category::FriedShrimp: return "fried_shrimp";
  }
  throw ValueError("category_name: unknown category id " +
                   std::to_string(static_cast<int>(c)));
}

inline Category category_from_name(const std::string& name) {
  for (int i = 0; i < kNumCategories; ++i)
    if (name == category_name(static_cast<Category>(i)))
      return static_cast<Category>(i);
  throw DataError("unknown food category '" + name + "'");
}

/// Axis-aligned box: center + size in normalized canvas units [0,1].
struct LayoutBox {
  double cx = 0.5, cy = 0.5, w = 1.0, h = 1.0;

  bool valid() const {
    return cx >= 0.0 && cx <= 1.0 && cy >= 0.0 && cy <= 1.0 && w > 0.0 && w <= 1.0 &&
           h > 0.0 && h <= 1.0;
  }
};

inline double iou(const LayoutBox& a, const LayoutBox& b) {
  const double ax0 = a.cx - a.w / 2, ax1 = a.cx + a.w / 2;
  const double ay0 = a.cy - a.h / 2, ay1 = a.cy + a.h / 2;
  const double bx0 = b.cx - b.w / 2, bx1 = b.cx + b.w / 2;
  const double by0 = b.cy - b.h / 2, by1 = b.cy + b.h / 2;
  const double ix = std::max(0.0, std::min(ax1, bx1) - std::max(ax0, bx0));
  const double iy = std::max(0.0, std::min(ay1, by1) - std::max(ay0, by0));
  const double inter = ix * iy;
  const double uni = a.w * a.h + b.w * b.h - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

/// Binary image mask, row-major, 0 or 1 per pixel.
struct Mask {
  int h = 0, w = 0;
  std::vector<uint8_t> v;

  Mask() = default;
  Mask(int h_, int w_) : h(h_), w(w_), v(size_t(h_) * w_, 0) {}

  uint8_t at(int i, int j) const { return v[size_t(i) * w + j]; }
  uint8_t& at(int i, int j) { return v[size_t(i) * w + j]; }

  int64_t area() const {
    int64_t n = 0;
    for (uint8_t p : v) n += p ? 1 : 0;
    return n;
  }

  bool subset_of(const Mask& other) const {
    if (h != other.h || w != other.w) return false;
    for (size_t i = 0; i < v.size(); ++i)
      if (v[i] && !other.v[i]) return false;
    return true;
  }

  bool operator==(const Mask& o) const { return h == o.h && w == o.w && v == o.v; }
};

struct FoodItem {
  int id = 0;
  Category category = Category::Rice;
  Mask visible;
  Mask amodal;
  Tensor cutout;  // [4,H,W] RGBA in [0,1], item canvas
  LayoutBox bbox;
  int z = 0;
};

struct Scene {
  std::string scene_id;
  int canvas_h = 0, canvas_w = 0;
  Tensor background;  // [3,H,W] in [0,1]
  std::vector<FoodItem> items;
  std::vector<std::string> captions;
  int type = 0;  // presentation type 1..3
};

struct PlacementOrder {
  std::vector<int> ids;  // index 0 = placed first (bottom)
};

struct OcclusionGraph {
  struct Edge {
    int from = 0, to = 0;      // `to` occludes `from`: `to` is placed later
    int64_t evidence = 0;      // pixels supporting the direction
  };
  std::vector<int> ids;
  std::vector<int64_t> visible_areas;  // parallel to ids; feeds the tie-break
  std::vector<Edge> edges;
};

}  // namespace bento
