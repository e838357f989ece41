#pragma once

#include "jaa/layers.hpp"

namespace jaa {

struct PatchGrid {
  int rows = 8;
  int cols = 8;
};

// Convolution whose filter weights are shared only within each uniform patch.
// w: [rows*cols, Cout, Cin, k, k], b: [rows*cols, Cout]. Each patch is padded
// independently (patch borders behave like image borders), so patch size is
// preserved with 3x3/1/1 filters.
Tensor patchwise_conv(Tape& tape, const Tensor& x, const Tensor& w, const Tensor& b,
                      PatchGrid grid, const ConvSpec& spec);

struct PatchConvLayer {
  Tensor w, b;
  PatchGrid grid;
  ConvSpec spec;
  bool has_bn = true;
  BatchNorm bn;
  Act act = Act::ReLU;

  PatchConvLayer() = default;
  PatchConvLayer(int cin, int cout, PatchGrid g, std::mt19937_64& rng);

  Tensor forward(Tape& tape, const Tensor& x, bool training);
  void collect(const std::string& prefix, ParamList& out);
  std::int64_t conv_param_count() const { return w.size() + b.size(); }
};

// P block: stacked 3x3/1/1 conv + BN + ReLU layers.
struct PlainBlock {
  std::vector<ConvLayer> convs;

  PlainBlock() = default;
  PlainBlock(int cin, int cout, int depth, std::mt19937_64& rng);

  Tensor forward(Tape& tape, const Tensor& x, bool training);
  void collect(const std::string& prefix, ParamList& out);
};

// R block: plain conv to 4*c1 channels, one 8x8 patchwise conv, residual sum.
struct RegionBlock {
  ConvLayer conv1;
  PatchConvLayer patch8;

  RegionBlock() = default;
  RegionBlock(int cin, int c1, std::mt19937_64& rng);

  Tensor forward(Tape& tape, const Tensor& x, bool training);
  void collect(const std::string& prefix, ParamList& out);
  // Conv kernel/bias parameters excluding the first conv layer (BN excluded).
  std::int64_t region_param_count() const;
};

// R_hm block: plain conv to 4*c1, then 8x8 -> 2*c1, 4x4 -> c1, 2x2 -> c1
// patchwise convs; channel concat of the three, residual sum with conv1.
struct HMRBlock {
  ConvLayer conv1;
  PatchConvLayer patch8, patch4, patch2;

  HMRBlock() = default;
  HMRBlock(int cin, int c1, std::mt19937_64& rng);

  Tensor forward(Tape& tape, const Tensor& x, bool training);
  void collect(const std::string& prefix, ParamList& out);
  std::int64_t region_param_count() const;
};

// Hierarchical and multi-scale region module: R_hm(l,l,c) + pool,
// R_hm(l/2,l/2,2c) + pool. Input [N,3,l,l], output [N,8c,l/4,l/4].
struct RegionModule {
  HMRBlock block1, block2;

  RegionModule() = default;
  RegionModule(int l, int c, std::mt19937_64& rng);

  Tensor forward(Tape& tape, const Tensor& x, bool training);
  void collect(const std::string& prefix, ParamList& out);
};

}  // namespace jaa
