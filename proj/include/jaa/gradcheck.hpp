#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "jaa/tensor.hpp"

namespace jaa {

// forward(tape) must rebuild the graph from the current parameter values and
// return a scalar loss. Gradients are compared against central differences;
// the relative error uses a small absolute floor so near-zero gradients are
// judged absolutely.
struct GradCheckResult {
  double max_rel_err = 0.0;
  std::string worst;  // "<param>[i]" of the worst element
  bool ok(double tol) const { return max_rel_err < tol; }
};

inline GradCheckResult gradcheck(const std::function<Tensor(Tape&)>& forward,
                                 std::vector<std::pair<std::string, Tensor>> params,
                                 double h = 1e-5, double floor_denom = 1e-4) {
  for (auto& [name, t] : params) t.set_requires_grad(true);
  Tape tape;
  Tensor loss = forward(tape);
  for (auto& [name, t] : params) t.zero_grad();
  tape.backward(loss);

  std::vector<std::vector<double>> analytic;
  for (auto& [name, t] : params)
    analytic.emplace_back(t.grad(), t.grad() + t.size());

  GradCheckResult r;
  Tape off;
  off.enabled = false;
  for (size_t pi = 0; pi < params.size(); ++pi) {
    Tensor t = params[pi].second;
    for (std::int64_t i = 0; i < t.size(); ++i) {
      const double orig = t[i];
      t[i] = orig + h;
      const double fp = forward(off)[0];
      t[i] = orig - h;
      const double fm = forward(off)[0];
      t[i] = orig;
      const double num = (fp - fm) / (2.0 * h);
      const double ana = analytic[pi][static_cast<size_t>(i)];
      const double denom = std::max({std::abs(num), std::abs(ana), floor_denom});
      const double rel = std::abs(num - ana) / denom;
      if (rel > r.max_rel_err) {
        r.max_rel_err = rel;
        r.worst = params[pi].first + "[" + std::to_string(i) + "]";
      }
    }
  }
  return r;
}

}  // namespace jaa
