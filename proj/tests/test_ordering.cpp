#include "doctest.h"

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include "bento/dataset.hpp"
#include "bento/ordering.hpp"
#include "bento/rng.hpp"

using namespace bento;

namespace {

constexpr int kCanvas = 16;

struct Rect {
  int top, left, bottom, right;  // half-open
};

Mask rect_mask(const Rect& r) {
  Mask m(kCanvas, kCanvas);
  for (int i = r.top; i < r.bottom; ++i)
    for (int j = r.left; j < r.right; ++j) m.at(i, j) = 1;
  return m;
}

/// Scene from rectangles; z equals position in the list, visibility derived.
Scene rect_scene(const std::vector<std::pair<int, Rect>>& id_rects) {
  Scene s;
  s.scene_id = "fixture";
  s.canvas_h = s.canvas_w = kCanvas;
  s.type = 1;
  for (size_t k = 0; k < id_rects.size(); ++k) {
    FoodItem it;
    it.id = id_rects[k].first;
    it.z = int(k);
    it.amodal = rect_mask(id_rects[k].second);
    s.items.push_back(std::move(it));
  }
  for (size_t k = 0; k < s.items.size(); ++k) {
    Mask vis = s.items[k].amodal;
    for (size_t j = k + 1; j < s.items.size(); ++j)
      for (size_t p = 0; p < vis.v.size(); ++p)
        if (s.items[j].amodal.v[p]) vis.v[p] = 0;
    s.items[k].visible = std::move(vis);
  }
  return s;
}

}  // namespace

TEST_SUITE("ordering") {

TEST_CASE("disjoint items produce no edges and order by visible area") {
  Scene s = rect_scene({{7, {0, 0, 2, 2}},      // area 4
                        {3, {4, 0, 8, 8}},      // area 32
                        {5, {10, 0, 13, 4}}});  // area 12
  auto g = ordering::build_occlusion_graph(s);
  CHECK(g.edges.empty());
  auto order = ordering::recover_order(g);
  CHECK(order.ids == std::vector<int>{3, 5, 7});
}

TEST_CASE("equal areas break ties by ascending id") {
  Scene s = rect_scene({{9, {0, 0, 2, 2}}, {4, {4, 4, 6, 6}}, {6, {8, 8, 10, 10}}});
  auto order = ordering::recover_order(ordering::build_occlusion_graph(s));
  CHECK(order.ids == std::vector<int>{4, 6, 9});
}

TEST_CASE("one overlap yields one edge with the overlap as evidence") {
  Scene s = rect_scene({{0, {0, 0, 8, 8}}, {1, {4, 4, 12, 12}}});
  auto g = ordering::build_occlusion_graph(s);
  REQUIRE(g.edges.size() == 1);
  CHECK(g.edges[0].from == 0);
  CHECK(g.edges[0].to == 1);
  CHECK(g.edges[0].evidence == 16);  // the 4x4 intersection
  auto order = ordering::recover_order(g);
  CHECK(order.ids == std::vector<int>{0, 1});
}

TEST_CASE("chains recover exactly even against the area tie-break") {
  // Top of the stack has the largest visible area, so the edges alone
  // must carry the order.
  Scene s = rect_scene({{0, {0, 0, 3, 3}},      // mostly hidden below
                        {1, {1, 1, 6, 6}},
                        {2, {2, 2, 12, 12}}});  // huge and on top
  auto order = ordering::recover_order(ordering::build_occlusion_graph(s));
  CHECK(order.ids == std::vector<int>{0, 1, 2});
}

TEST_CASE("recovered order is always a topological order of the graph") {
  Rng rng(2024);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<std::pair<int, Rect>> rects;
    const int n = int(rng.uniform_int(2, 5));
    for (int k = 0; k < n; ++k) {
      const int top = int(rng.uniform_int(0, kCanvas - 4));
      const int left = int(rng.uniform_int(0, kCanvas - 4));
      const int bottom = int(rng.uniform_int(top + 2, kCanvas));
      const int right = int(rng.uniform_int(left + 2, kCanvas));
      rects.push_back({k, {top, left, bottom, right}});
    }
    Scene s = rect_scene(rects);
    auto g = ordering::build_occlusion_graph(s);
    auto order = ordering::recover_order(g);
    REQUIRE(order.ids.size() == size_t(n));
    auto pos = [&](int id) {
      return int(std::find(order.ids.begin(), order.ids.end(), id) - order.ids.begin());
    };
    for (const auto& e : g.edges) CHECK(pos(e.from) < pos(e.to));

    // Determinism: a second run reproduces the order.
    CHECK(ordering::recover_order(g).ids == order.ids);
  }
}

TEST_CASE("synthetic scenes of every type recover their placement order") {
  for (int type = 1; type <= 3; ++type)
    for (uint64_t seed = 0; seed < 4; ++seed) {
      Scene s = data::generate_synthetic_scene(type, 1000 * uint64_t(type) + seed);
      auto order = ordering::recover_order(ordering::build_occlusion_graph(s));
      CHECK(order.ids == data::truth_order(s).ids);
    }
}

TEST_CASE("cyclic evidence raises an error naming the cycle") {
  OcclusionGraph g;
  g.ids = {10, 11, 12};
  g.visible_areas = {5, 5, 5};
  g.edges = {{10, 11, 3}, {11, 12, 3}, {12, 10, 3}};
  CHECK_THROWS_WITH_AS(ordering::recover_order(g), doctest::Contains("cyclic occlusion"),
                       DataError);
  try {
    ordering::recover_order(g);
  } catch (const DataError& e) {
    const std::string msg = e.what();
    for (const char* id : {"10", "11", "12"})
      CHECK(msg.find(id) != std::string::npos);
  }
}

TEST_CASE("malformed graphs and scenes are rejected") {
  OcclusionGraph g;
  g.ids = {0, 1};
  g.visible_areas = {1, 1};
  SUBCASE("unknown id") {
    g.edges = {{0, 9, 1}};
    CHECK_THROWS_AS(ordering::recover_order(g), ValueError);
  }
  SUBCASE("self edge") {
    g.edges = {{1, 1, 1}};
    CHECK_THROWS_AS(ordering::recover_order(g), ValueError);
  }
  SUBCASE("visible exceeding amodal") {
    Scene s = rect_scene({{0, {0, 0, 4, 4}}});
    s.items[0].visible.at(10, 10) = 1;
    CHECK_THROWS_WITH_AS(ordering::build_occlusion_graph(s),
                         doctest::Contains("item 0"), DataError);
  }
  SUBCASE("empty amodal") {
    Scene s = rect_scene({{0, {0, 0, 4, 4}}});
    s.items[0].amodal = Mask(kCanvas, kCanvas);
    s.items[0].visible = Mask(kCanvas, kCanvas);
    CHECK_THROWS_AS(ordering::build_occlusion_graph(s), DataError);
  }
}

TEST_CASE("pair features are antisymmetric and the model complements") {
  Scene s = rect_scene({{0, {0, 0, 8, 8}}, {1, {4, 4, 12, 12}}});
  auto fab = ordering::pair_features(s.items[0], s.items[1]);
  auto fba = ordering::pair_features(s.items[1], s.items[0]);
  for (int k = 0; k < 3; ++k) CHECK(fab[k] == doctest::Approx(-fba[k]).epsilon(1e-15));

  ordering::PairwiseOrderModel m;
  m.w = {0.7, -1.3, 0.4};
  CHECK(m.p_second_on_top(fab) + m.p_second_on_top(fba) == doctest::Approx(1.0).epsilon(1e-15));

  ordering::PairwiseOrderModel untrained;
  CHECK(untrained.p_second_on_top(fab) == 0.5);
}

TEST_CASE("training separates occlusion pairs from synthetic scenes") {
  std::vector<ordering::PairSample> samples;
  for (int type = 1; type <= 3; ++type)
    for (uint64_t seed = 0; seed < 6; ++seed) {
      Scene s = data::generate_synthetic_scene(type, 300 * uint64_t(type) + seed);
      for (size_t a = 0; a < s.items.size(); ++a)
        for (size_t b = a + 1; b < s.items.size(); ++b) {
          const auto& ia = s.items[a];
          const auto& ib = s.items[b];
          samples.push_back({ordering::pair_features(ia, ib), ib.z > ia.z ? 1 : 0});
          samples.push_back({ordering::pair_features(ib, ia), ia.z > ib.z ? 1 : 0});
        }
    }
  REQUIRE(samples.size() >= 60);
  auto model = ordering::train_pairwise_order_model(samples);
  int correct = 0;
  for (const auto& smp : samples)
    if ((model.p_second_on_top(smp.f) > 0.5) == (smp.second_on_top == 1)) ++correct;
  CHECK(correct == int(samples.size()));

  CHECK_THROWS_AS(ordering::train_pairwise_order_model({}), ValueError);
}

TEST_CASE("order metrics score exactness and pairwise agreement") {
  PlacementOrder truth{{3, 1, 4, 2}};

  auto same = ordering::order_metrics(truth, truth);
  CHECK(same.exact);
  CHECK(same.pairwise_accuracy == 1.0);

  PlacementOrder reversed{{2, 4, 1, 3}};
  auto rev = ordering::order_metrics(reversed, truth);
  CHECK_FALSE(rev.exact);
  CHECK(rev.pairwise_accuracy == 0.0);

  PlacementOrder swapped{{3, 4, 1, 2}};  // one adjacent transposition
  auto swp = ordering::order_metrics(swapped, truth);
  CHECK_FALSE(swp.exact);
  CHECK(swp.pairwise_accuracy == doctest::Approx(5.0 / 6.0).epsilon(1e-12));

  PlacementOrder single{{8}};
  auto one = ordering::order_metrics(single, single);
  CHECK(one.exact);
  CHECK(one.pairwise_accuracy == 1.0);

  CHECK_THROWS_AS(ordering::order_metrics(PlacementOrder{{1, 2}}, truth), ValueError);
  CHECK_THROWS_AS(ordering::order_metrics(PlacementOrder{{3, 1, 4, 9}}, truth),
                  ValueError);
}

}
