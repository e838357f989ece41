#include "jaa/tensor.hpp"

#include <cmath>
#include <sstream>

namespace jaa {

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) os << ",";
    os << s[i];
  }
  os << "]";
  return os.str();
}

Tensor::Tensor(Shape shape, double fill) {
  d_ = std::make_shared<Data>();
  d_->shape = std::move(shape);
  std::int64_t n = numel(d_->shape);
  if (n < 0) throw std::invalid_argument("Tensor: negative dimension in " + shape_str(d_->shape));
  d_->v.assign(static_cast<size_t>(n), fill);
}

Tensor Tensor::from(Shape shape, std::vector<double> values) {
  Tensor t;
  t.d_ = std::make_shared<Data>();
  if (numel(shape) != static_cast<std::int64_t>(values.size()))
    throw std::invalid_argument("Tensor::from: " + shape_str(shape) + " does not match " +
                                std::to_string(values.size()) + " values");
  t.d_->shape = std::move(shape);
  t.d_->v = std::move(values);
  return t;
}

Tensor Tensor::clone() const {
  return Tensor::from(d_->shape, d_->v);
}

void Tape::backward(Tensor& loss) {
  if (loss.size() != 1) throw std::runtime_error("Tape::backward: loss must be scalar");
  if (nodes_.empty()) throw std::runtime_error("Tape::backward: nothing recorded (forward not run?)");
  loss.ensure_grad();
  loss.grad()[0] = 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
}

namespace {
bool g_finite_checks = false;
}

void set_finite_checks(bool on) { g_finite_checks = on; }
bool finite_checks_enabled() { return g_finite_checks; }

void check_finite(const Tensor& t, const char* op_name) {
  if (!g_finite_checks) return;
  for (std::int64_t i = 0; i < t.size(); ++i) {
    if (!std::isfinite(t[i]))
      throw std::runtime_error(std::string(op_name) + ": non-finite value at index " + std::to_string(i));
  }
}

void fail_shape(const std::string& op, const std::string& detail) {
  throw std::invalid_argument(op + ": " + detail);
}

}  // namespace jaa
