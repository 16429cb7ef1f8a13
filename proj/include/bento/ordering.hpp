#pragma once

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "bento/tensor.hpp"
#include "bento/types.hpp"

namespace bento::ordering {

/**
 * Occlusion graph from per-item mask pairs. For every pair with amodal
 * overlap, pixels of the overlap that are visible for one item and hidden
 * for the other are evidence that the visible one sits on top.
 */
inline OcclusionGraph build_occlusion_graph(const Scene& scene) {
  for (const auto& it : scene.items) {
    if (it.amodal.area() == 0)
      throw DataError("scene " + scene.scene_id + " item " + std::to_string(it.id) +
                      ": empty amodal mask");
    if (!it.visible.subset_of(it.amodal))
      throw DataError("scene " + scene.scene_id + " item " + std::to_string(it.id) +
                      ": visible mask not a subset of amodal mask");
  }
  OcclusionGraph g;
  for (const auto& it : scene.items) {
    g.ids.push_back(it.id);
    g.visible_areas.push_back(it.visible.area());
  }
  const int n = int(scene.items.size());
  for (int a = 0; a < n; ++a)
    for (int b = a + 1; b < n; ++b) {
      const auto& ia = scene.items[a];
      const auto& ib = scene.items[b];
      int64_t b_over_a = 0, a_over_b = 0;
      for (size_t p = 0; p < ia.amodal.v.size(); ++p) {
        if (!(ia.amodal.v[p] && ib.amodal.v[p])) continue;
        if (ib.visible.v[p] && !ia.visible.v[p]) ++b_over_a;
        if (ia.visible.v[p] && !ib.visible.v[p]) ++a_over_b;
      }
      if (b_over_a > 0) g.edges.push_back({ia.id, ib.id, b_over_a});
      if (a_over_b > 0) g.edges.push_back({ib.id, ia.id, a_over_b});
    }
  return g;
}

/**
 * Topological order of the occlusion graph. Among simultaneously available
 * items the larger visible area goes first (base dishes before toppings),
 * then the smaller id; the tie-break is total, so the order is deterministic.
 * A cycle raises an error naming the items on it.
 */
inline PlacementOrder recover_order(const OcclusionGraph& g) {
  const int n = int(g.ids.size());
  std::vector<int> indeg(n, 0);
  auto index_of = [&](int id) {
    for (int i = 0; i < n; ++i)
      if (g.ids[i] == id) return i;
    throw ValueError("recover_order: edge references unknown id " + std::to_string(id));
  };
  std::vector<std::vector<int>> out(n);
  for (const auto& e : g.edges) {
    const int f = index_of(e.from), t = index_of(e.to);
    if (f == t) throw ValueError("recover_order: self edge on id " + std::to_string(e.from));
    out[f].push_back(t);
    ++indeg[t];
  }

  PlacementOrder order;
  std::vector<bool> done(n, false);
  for (int step = 0; step < n; ++step) {
    int pick = -1;
    for (int i = 0; i < n; ++i) {
      if (done[i] || indeg[i] != 0) continue;
      if (pick == -1 || g.visible_areas[i] > g.visible_areas[pick] ||
          (g.visible_areas[i] == g.visible_areas[pick] && g.ids[i] < g.ids[pick]))
        pick = i;
    }
    if (pick == -1) {
      // Everything left is on a cycle; walk one for the message.
      int cur = 0;
      while (done[cur]) ++cur;
      std::vector<int> path;
      std::vector<int> seen(n, -1);
      while (seen[cur] == -1) {
        seen[cur] = int(path.size());
        path.push_back(cur);
        int next = -1;
        for (int t : out[cur])
          if (!done[t]) {
            next = t;
            break;
          }
        cur = next;
      }
      std::string msg = "cyclic occlusion:";
      for (size_t i = size_t(seen[cur]); i < path.size(); ++i)
        msg += " " + std::to_string(g.ids[path[i]]);
      msg += " -> " + std::to_string(g.ids[cur]);
      throw DataError(msg);
    }
    done[pick] = true;
    order.ids.push_back(g.ids[pick]);
    for (int t : out[pick]) --indeg[t];
  }
  return order;
}

// ---------------------------------------------------------------------------
// Learned pairwise model: logistic regression over antisymmetric pair
// features, p(second on top). No bias term, so swapping the pair negates the
// features and complements the probability by construction.

/// f(a, b): positive components favor "b on top".
inline std::array<double, 3> pair_features(const FoodItem& a, const FoodItem& b) {
  int64_t overlap = 0, vis_a = 0, vis_b = 0;
  for (size_t p = 0; p < a.amodal.v.size(); ++p) {
    if (!(a.amodal.v[p] && b.amodal.v[p])) continue;
    ++overlap;
    if (a.visible.v[p]) ++vis_a;
    if (b.visible.v[p]) ++vis_b;
  }
  const double fa = overlap ? double(vis_a) / overlap : 0.0;
  const double fb = overlap ? double(vis_b) / overlap : 0.0;
  const double area_a = double(a.amodal.area()), area_b = double(b.amodal.area());
  const double va = area_a > 0 ? double(a.visible.area()) / area_a : 0.0;
  const double vb = area_b > 0 ? double(b.visible.area()) / area_b : 0.0;
  return {fb - fa, (area_a - area_b) / (area_a + area_b), vb - va};
}

struct PairSample {
  std::array<double, 3> f;
  int second_on_top;  // 1 if the pair's second item occludes the first
};

struct PairwiseOrderModel {
  std::array<double, 3> w{0.0, 0.0, 0.0};

  double p_second_on_top(const std::array<double, 3>& f) const {
    const double z = w[0] * f[0] + w[1] * f[1] + w[2] * f[2];
    return 1.0 / (1.0 + std::exp(-z));
  }
};

/// Plain-gradient logistic fit; returns the trained model.
inline PairwiseOrderModel train_pairwise_order_model(const std::vector<PairSample>& data,
                                                     int steps = 500, double lr = 1.0) {
  if (data.empty()) throw ValueError("train_pairwise_order_model: empty dataset");
  PairwiseOrderModel m;
  for (int it = 0; it < steps; ++it) {
    std::array<double, 3> grad{0.0, 0.0, 0.0};
    for (const auto& s : data) {
      const double p = m.p_second_on_top(s.f);
      const double d = p - double(s.second_on_top);
      for (int k = 0; k < 3; ++k) grad[k] += d * s.f[k];
    }
    for (int k = 0; k < 3; ++k) m.w[k] -= lr * grad[k] / double(data.size());
  }
  return m;
}

// ---------------------------------------------------------------------------

struct OrderMetrics {
  bool exact = false;
  double pairwise_accuracy = 0.0;
};

inline OrderMetrics order_metrics(const PlacementOrder& pred, const PlacementOrder& truth) {
  if (pred.ids.size() != truth.ids.size())
    throw ValueError("order_metrics: item count mismatch");
  const int n = int(pred.ids.size());
  auto rank = [n](const PlacementOrder& o, int id) {
    for (int i = 0; i < n; ++i)
      if (o.ids[i] == id) return i;
    throw ValueError("order_metrics: item sets differ at id " + std::to_string(id));
  };
  OrderMetrics m;
  m.exact = pred.ids == truth.ids;
  int agree = 0, total = 0;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      const int id_i = truth.ids[i], id_j = truth.ids[j];
      ++total;
      if (rank(pred, id_i) < rank(pred, id_j)) ++agree;
    }
  m.pairwise_accuracy = total ? double(agree) / total : 1.0;
  return m;
}

}  // namespace bento::ordering
