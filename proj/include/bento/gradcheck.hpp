#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "bento/tensor.hpp"

namespace bento {

struct GradCheckReport {
  std::string name;
  double max_rel_err = 0.0;
  int64_t checked = 0;
  int64_t worst_index = -1;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  bool ok(double tol) const { return max_rel_err < tol; }
};

/**
 * Central-difference check of d(f)/d(inputs). f must rebuild its graph on
 * every call (it is invoked repeatedly with perturbed inputs). Relative
 * error uses max(1,|a|,|n|) in the denominator so tiny gradients are judged
 * on absolute terms.
 *
 * `sample_stride` > 1 probes every k-th element, for chains too large to
 * probe exhaustively.
 */
inline GradCheckReport finite_diff_check(const std::string& name,
                                         std::vector<Tensor> inputs,
                                         const std::function<Tensor()>& f,
                                         double h = 1e-5, int sample_stride = 1) {
  if (inputs.empty()) throw ValueError("finite_diff_check: no inputs");
  if (sample_stride < 1) throw ValueError("finite_diff_check: bad stride");

  for (auto& in : inputs) {
    in.set_requires_grad(true);
    in.drop_grad();
  }
  Graph g;
  {
    Graph::Scope scope(g);
    Tensor loss = f();
    g.backward(loss);
  }

  GradCheckReport rep;
  rep.name = name;
  int64_t base = 0;
  for (auto& in : inputs) {
    if (!in.has_grad())
      throw ValueError("finite_diff_check(" + name + "): input untouched by f");
    const auto grad = in.grad();
    auto& w = in.data();
    for (int64_t i = 0; i < in.size(); i += sample_stride) {
      const double keep = w[size_t(i)];
      double fp, fm;
      {
        NoGradScope ng;
        w[size_t(i)] = keep + h;
        fp = f().item();
        w[size_t(i)] = keep - h;
        fm = f().item();
        w[size_t(i)] = keep;
      }
      const double numeric = (fp - fm) / (2.0 * h);
      const double analytic = grad[size_t(i)];
      const double rel = std::fabs(analytic - numeric) /
                         std::max({1.0, std::fabs(analytic), std::fabs(numeric)});
      ++rep.checked;
      if (rel > rep.max_rel_err) {
        rep.max_rel_err = rel;
        rep.worst_index = base + i;
        rep.worst_analytic = analytic;
        rep.worst_numeric = numeric;
      }
    }
    base += in.size();
  }
  for (auto& in : inputs) {
    in.drop_grad();
    in.set_requires_grad(false);
  }
  return rep;
}

}  // namespace bento
