#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace jaa {

using Shape = std::vector<int>;

inline std::int64_t numel(const Shape& s) {
  std::int64_t n = 1;
  for (int d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s);

// Dense N-d tensor of doubles with an optional gradient buffer.
// Tensor is a shared handle: copies alias the same storage, which is what
// parameter registries and backward closures rely on.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
  static Tensor from(Shape shape, std::vector<double> values);

  bool defined() const { return d_ != nullptr; }
  const Shape& shape() const { return d_->shape; }
  int dim(int i) const { return d_->shape[static_cast<size_t>(i)]; }
  int ndim() const { return static_cast<int>(d_->shape.size()); }
  std::int64_t size() const { return static_cast<std::int64_t>(d_->v.size()); }

  double* data() { return d_->v.data(); }
  const double* data() const { return d_->v.data(); }
  std::vector<double>& values() { return d_->v; }
  const std::vector<double>& values() const { return d_->v; }
  double& operator[](std::int64_t i) { return d_->v[static_cast<size_t>(i)]; }
  double operator[](std::int64_t i) const { return d_->v[static_cast<size_t>(i)]; }

  bool requires_grad() const { return d_->requires_grad; }
  void set_requires_grad(bool rg) {
    d_->requires_grad = rg;
    if (rg) ensure_grad();
  }
  void ensure_grad() {
    if (d_->g.size() != d_->v.size()) d_->g.assign(d_->v.size(), 0.0);
  }
  void zero_grad() {
    if (!d_->g.empty()) std::fill(d_->g.begin(), d_->g.end(), 0.0);
  }
  bool has_grad() const { return !d_->g.empty(); }
  double* grad() { return d_->g.data(); }
  const double* grad() const { return d_->g.data(); }
  std::vector<double>& grad_vec() { return d_->g; }

  bool same_storage(const Tensor& o) const { return d_ == o.d_; }

  // Deep copy of values (grad not copied).
  Tensor clone() const;

 private:
  struct Data {
    Shape shape;
    std::vector<double> v;
    std::vector<double> g;
    bool requires_grad = false;
  };
  std::shared_ptr<Data> d_;
};

// Reverse-mode tape. Ops append closures during the forward pass; backward()
// seeds the scalar loss with gradient 1 and replays the closures in reverse.
class Tape {
 public:
  bool enabled = true;

  void record(std::function<void()> fn) { nodes_.push_back(std::move(fn)); }
  size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

  void backward(Tensor& loss);

 private:
  std::vector<std::function<void()>> nodes_;
};

// Toggle for per-op NaN/Inf assertions (enabled in tests).
void set_finite_checks(bool on);
bool finite_checks_enabled();
void check_finite(const Tensor& t, const char* op_name);

[[noreturn]] void fail_shape(const std::string& op, const std::string& detail);

}  // namespace jaa
