#pragma once

#include <random>
#include <string>
#include <vector>

#include "jaa/ops.hpp"

namespace jaa {

struct ParamEntry {
  std::string name;
  Tensor t;
  bool no_decay = false;  // BN scale/shift are excluded from weight decay
  bool buffer = false;    // checkpointed but not trainable (BN running stats)
};
using ParamList = std::vector<ParamEntry>;

enum class Act { None, ReLU, Sigmoid };

// He fan-in initialization.
Tensor he_init(Shape shape, int fan_in, std::mt19937_64& rng);

// Conv + optional BN + activation.
struct ConvLayer {
  Tensor w, b;
  ConvSpec spec;
  bool has_bn = true;
  BatchNorm bn;
  Act act = Act::ReLU;

  ConvLayer() = default;
  ConvLayer(int cin, int cout, int kernel, int stride, int pad, bool with_bn, Act activation,
            std::mt19937_64& rng);

  Tensor forward(Tape& tape, const Tensor& x, bool training);
  void collect(const std::string& prefix, ParamList& out);
  std::int64_t conv_param_count() const { return w.size() + b.size(); }
};

struct FCLayer {
  Tensor w, b;

  FCLayer() = default;
  FCLayer(int in, int out, std::mt19937_64& rng);
  Tensor forward(Tape& tape, const Tensor& x) { return fully_connected(tape, x, w, b); }
  void collect(const std::string& prefix, ParamList& out);
};

}  // namespace jaa
