#pragma once

#include <cassert>
#include <cmath>
#include <functional>
#include <memory>
#include <utility>

#include "bento/common.hpp"
#include "bento/rng.hpp"

namespace bento {

/**
 * Dense n-dimensional tensor of 64-bit floats, row-major, with an optional
 * gradient buffer of the same length. Tensor is a cheap handle: copies share
 * the same storage, which is what lets backward closures keep activations
 * alive and accumulate gradients in place.
 *
 * Training runs in f64 throughout; checkpoints truncate to f32 on save.
 */
class Tensor {
  struct Impl {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;  // empty until first accumulation
    bool requires_grad = false;
  };

 public:
  Tensor() = default;

  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false)
      : p_(std::make_shared<Impl>()) {
    if (static_cast<int64_t>(values.size()) != shape_numel(shape))
      throw ShapeError("tensor: " + std::to_string(values.size()) +
                       " values do not fill shape " + shape_str(shape));
    for (int d : shape)
      if (d <= 0) throw ShapeError("tensor: non-positive dim in " + shape_str(shape));
    p_->shape = std::move(shape);
    p_->data = std::move(values);
    p_->requires_grad = requires_grad;
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    return full(std::move(shape), 0.0, requires_grad);
  }

  static Tensor ones(Shape shape, bool requires_grad = false) {
    return full(std::move(shape), 1.0, requires_grad);
  }

  static Tensor full(Shape shape, double value, bool requires_grad = false) {
    for (int d : shape)
      if (d <= 0) throw ShapeError("tensor: non-positive dim in " + shape_str(shape));
    std::vector<double> v(static_cast<size_t>(shape_numel(shape)), value);
    return Tensor(std::move(shape), std::move(v), requires_grad);
  }

  static Tensor scalar(double value, bool requires_grad = false) {
    return Tensor({1}, {value}, requires_grad);
  }

  static Tensor randn(Shape shape, Rng& rng, double stddev = 1.0,
                      bool requires_grad = false) {
    Tensor t = zeros(std::move(shape), requires_grad);
    for (auto& x : t.data()) x = rng.normal(0.0, stddev);
    return t;
  }

  static Tensor uniform(Shape shape, Rng& rng, double lo, double hi,
                        bool requires_grad = false) {
    Tensor t = zeros(std::move(shape), requires_grad);
    for (auto& x : t.data()) x = rng.uniform(lo, hi);
    return t;
  }

  bool defined() const { return static_cast<bool>(p_); }
  const Shape& shape() const { return p_->shape; }
  int ndim() const { return static_cast<int>(p_->shape.size()); }
  int dim(int i) const { return p_->shape[i]; }
  int64_t size() const { return static_cast<int64_t>(p_->data.size()); }

  bool requires_grad() const { return p_ && p_->requires_grad; }
  void set_requires_grad(bool rg) const { p_->requires_grad = rg; }

  std::vector<double>& data() const { return p_->data; }
  double operator[](int64_t i) const { return p_->data[static_cast<size_t>(i)]; }
  double& operator[](int64_t i) { return p_->data[static_cast<size_t>(i)]; }

  /// Value of a single-element tensor.
  double item() const {
    if (size() != 1)
      throw ShapeError("item: tensor has shape " + shape_str(shape()));
    return p_->data[0];
  }

  // Row-major index helpers.
  double& at(int i, int j) const { return p_->data[size_t(i) * shape()[1] + j]; }
  double& at(int i, int j, int k) const {
    return p_->data[(size_t(i) * shape()[1] + j) * shape()[2] + k];
  }
  double& at(int i, int j, int k, int l) const {
    return p_->data[((size_t(i) * shape()[1] + j) * shape()[2] + k) * shape()[3] + l];
  }

  bool has_grad() const { return p_ && !p_->grad.empty(); }

  std::vector<double>& grad() const {
    if (!has_grad()) throw ValueError("grad: no gradient on this tensor");
    return p_->grad;
  }

  /// Gradient buffer, allocated zero-filled on first use.
  std::vector<double>& grad_accum() const {
    if (p_->grad.empty()) p_->grad.assign(p_->data.size(), 0.0);
    return p_->grad;
  }

  void zero_grad() const { p_->grad.assign(p_->data.size(), 0.0); }
  void drop_grad() const { p_->grad.clear(); }

  /// Deep copy that does not participate in differentiation.
  Tensor detach() const {
    return Tensor(p_->shape, p_->data, false);
  }

  bool same_storage(const Tensor& o) const { return p_ == o.p_; }

 private:
  std::shared_ptr<Impl> p_;
};

/**
 * Recorded operation tape. Ops append one node per recorded operation, so the
 * list is topological by construction; backward seeds the scalar loss with
 * gradient 1 and replays the nodes exactly once in reverse recorded order.
 *
 * A Graph and its tensors belong to one training step; fresh step, fresh
 * graph. With no active graph, ops run forward-only (inference mode).
 */
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  /// Makes `g` (or no graph, for nullptr) the recording target for a scope.
  class Scope {
   public:
    explicit Scope(Graph* g) : prev_(active_) { active_ = g; }
    explicit Scope(Graph& g) : Scope(&g) {}
    ~Scope() { active_ = prev_; }
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;

   private:
    Graph* prev_;
  };

  static Graph* active() { return active_; }

  static void record(const char* op, std::function<void()> fn) {
    active_->nodes_.push_back({op, std::move(fn)});
  }

  size_t node_count() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

  /// Reverse-mode sweep from a scalar loss. Populates grad on every
  /// requires_grad tensor reachable from it; fan-out accumulates additively.
  void backward(const Tensor& loss) {
    if (loss.size() != 1)
      throw ShapeError("backward: loss must be scalar, got shape " +
                       shape_str(loss.shape()));
    loss.zero_grad();
    loss.grad()[0] = 1.0;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) it->fn();
  }

 private:
  struct Node {
    const char* op;
    std::function<void()> fn;
  };
  std::vector<Node> nodes_;
  inline static thread_local Graph* active_ = nullptr;
};

/// Recording suspension: ops inside the scope run forward-only.
class NoGradScope : public Graph::Scope {
 public:
  NoGradScope() : Graph::Scope(nullptr) {}
};

inline bool recording(const Tensor& a) {
  return Graph::active() != nullptr && a.requires_grad();
}

inline bool recording(const Tensor& a, const Tensor& b) {
  return Graph::active() != nullptr && (a.requires_grad() || b.requires_grad());
}

/**
 * Named parameter registry. Names are unique and become the checkpoint keys;
 * iteration order is insertion order, which fixes the optimizer update order
 * and keeps runs bit-reproducible.
 */
class ParamSet {
 public:
  void add(const std::string& name, const Tensor& t) {
    for (const auto& e : entries_)
      if (e.first == name) throw ValueError("param set: duplicate name " + name);
    entries_.emplace_back(name, t);
  }

  size_t size() const { return entries_.size(); }
  const std::pair<std::string, Tensor>& operator[](size_t i) const { return entries_[i]; }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  const Tensor* find(const std::string& name) const {
    for (const auto& e : entries_)
      if (e.first == name) return &e.second;
    return nullptr;
  }

  /// Allocates and zeroes every gradient buffer.
  void zero_grads() const {
    for (const auto& e : entries_) e.second.zero_grad();
  }

  int64_t numel() const {
    int64_t n = 0;
    for (const auto& e : entries_) n += e.second.size();
    return n;
  }

 private:
  std::vector<std::pair<std::string, Tensor>> entries_;
};

// Forward-value sanity scan, active in debug builds only.
inline void debug_check_finite(const Tensor& t, const char* op) {
#ifndef NDEBUG
  for (double v : t.data())
    if (!std::isfinite(v)) throw ValueError(std::string(op) + ": non-finite forward value");
#else
  (void)t;
  (void)op;
#endif
}

}  // namespace bento
