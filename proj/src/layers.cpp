#include "jaa/layers.hpp"

#include <cmath>

namespace jaa {

Tensor he_init(Shape shape, int fan_in, std::mt19937_64& rng) {
  Tensor t(shape);
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
  for (std::int64_t i = 0; i < t.size(); ++i) t[i] = dist(rng);
  t.set_requires_grad(true);
  return t;
}

ConvLayer::ConvLayer(int cin, int cout, int kernel, int stride, int pad, bool with_bn,
                     Act activation, std::mt19937_64& rng)
    : has_bn(with_bn), act(activation) {
  spec = ConvSpec{kernel, kernel, stride, pad, cin, cout};
  w = he_init({cout, cin, kernel, kernel}, cin * kernel * kernel, rng);
  b = Tensor({cout}, 0.0);
  b.set_requires_grad(true);
  if (has_bn) bn = BatchNorm(cout);
}

Tensor ConvLayer::forward(Tape& tape, const Tensor& x, bool training) {
  Tensor y = conv2d(tape, x, w, b, spec);
  if (has_bn) y = bn.forward(tape, y, training);
  switch (act) {
    case Act::ReLU: return relu(tape, y);
    case Act::Sigmoid: return sigmoid(tape, y);
    case Act::None: return y;
  }
  return y;
}

void ConvLayer::collect(const std::string& prefix, ParamList& out) {
  out.push_back({prefix + ".w", w, false});
  out.push_back({prefix + ".b", b, false});
  if (has_bn) {
    out.push_back({prefix + ".bn.gamma", bn.gamma, true, false});
    out.push_back({prefix + ".bn.beta", bn.beta, true, false});
    out.push_back({prefix + ".bn.running_mean", bn.running_mean, true, true});
    out.push_back({prefix + ".bn.running_var", bn.running_var, true, true});
  }
}

FCLayer::FCLayer(int in, int out, std::mt19937_64& rng) {
  w = he_init({out, in}, in, rng);
  b = Tensor({out}, 0.0);
  b.set_requires_grad(true);
}

void FCLayer::collect(const std::string& prefix, ParamList& out) {
  out.push_back({prefix + ".w", w, false});
  out.push_back({prefix + ".b", b, false});
}

}  // namespace jaa
