#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "bento/tensor.hpp"

namespace bento {

struct AdamConfig {
  double lr = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/**
 * Adam with bias correction over a ParamSet. Moment buffers are keyed by
 * parameter name so a checkpoint can restore them independently of pointer
 * identity. step() consumes the gradients: every parameter must carry one,
 * and all are dropped afterwards so stale gradients cannot leak into the
 * next phase.
 */
class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  const AdamConfig& config() const { return cfg_; }
  int64_t step_count() const { return t_; }

  void step(const ParamSet& params) {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, double(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, double(t_));
    for (const auto& [name, p] : params) {
      if (!p.has_grad())
        throw ValueError("Adam::step: parameter '" + name + "' has no gradient");
      auto& slot = slots_[name];
      if (slot.m.empty()) {
        slot.m.assign(p.data().size(), 0.0);
        slot.v.assign(p.data().size(), 0.0);
      } else if (slot.m.size() != p.data().size()) {
        throw ValueError("Adam::step: parameter '" + name + "' changed size");
      }
      const auto& g = p.grad();
      auto& w = p.data();
      for (size_t i = 0; i < w.size(); ++i) {
        slot.m[i] = cfg_.beta1 * slot.m[i] + (1.0 - cfg_.beta1) * g[i];
        slot.v[i] = cfg_.beta2 * slot.v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
        const double mhat = slot.m[i] / bc1;
        const double vhat = slot.v[i] / bc2;
        w[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
      }
    }
    for (const auto& e : params) e.second.drop_grad();
  }

  // Moment access for checkpointing.
  struct Slot {
    std::vector<double> m, v;
  };
  const std::unordered_map<std::string, Slot>& slots() const { return slots_; }
  Slot& slot(const std::string& name) { return slots_[name]; }
  void set_step_count(int64_t t) { t_ = t; }

 private:
  AdamConfig cfg_;
  int64_t t_ = 0;
  std::unordered_map<std::string, Slot> slots_;
};

}  // namespace bento
