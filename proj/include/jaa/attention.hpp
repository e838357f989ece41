#pragma once

#include <array>
#include <string>

#include "jaa/layers.hpp"
#include "jaa/region.hpp"

namespace jaa {

struct LandmarkSet {
  std::vector<double> xy;  // x0,y0,x1,y1,... in input-image pixels
  double inter_ocular = 0.0;

  int count() const { return static_cast<int>(xy.size()) / 2; }
};

// One AU center: a landmark (or landmark-pair midpoint) plus a vertical
// offset in inter-ocular units (positive = down).
struct CenterSpec {
  bool midpoint = false;
  int i = 0;
  int j = 0;
  double dy = 0.0;
};

struct AURule {
  int au_id = 0;
  CenterSpec c1, c2;
};
using RuleTable = std::vector<AURule>;

RuleTable load_rule_table(const std::string& path);
void save_rule_table(const std::string& path, const RuleTable& table);
RuleTable default_rule_table_12au();

// "au <id> <center1> <center2>" single-record form (used by checkpoints).
std::string rule_to_string(const AURule& rule);
AURule rule_from_string(const std::string& text);

// Two centers per AU in attention-grid units (image coords / 4), clamped to
// the (l/4) grid. Landmarks are clamped to image bounds first.
std::vector<std::array<double, 2>> au_centers(const LandmarkSet& lm, const RuleTable& rules,
                                              int l);

// Per-AU (l/4)x(l/4) maps, row-major. centers holds 2 entries per AU.
// Inside a subregion (Chebyshev distance to center <= zeta*(l/4)/2) the
// weight is max(1 - d_manhattan*xi/((l/4)*zeta), 0); overlaps take the max;
// everything else is 0.
std::vector<std::vector<double>> init_attention(
    const std::vector<std::array<double, 2>>& centers, double zeta, double xi, int l);

// Per-AU refinement branch: maps zoomed to l/4+8, then four 3x3/1/0 convs
// back to l/4. The first three carry BN+ReLU, the fourth a sigmoid.
struct AttentionRefiner {
  ConvLayer c1, c2, c3, c4;

  AttentionRefiner() = default;
  AttentionRefiner(int width, std::mt19937_64& rng);

  Tensor forward(Tape& tape, const Tensor& zoomed, bool training);
  void collect(const std::string& prefix, ParamList& out);
};

// Local AU feature branch: three stacks of two 3x3/1/1 convs, each followed
// by max pooling (trailing odd row/col dropped).
struct LocalBranch {
  PlainBlock s1, s2, s3;

  LocalBranch() = default;
  LocalBranch(int channels, std::mt19937_64& rng);

  Tensor forward(Tape& tape, const Tensor& x, bool training);
  void collect(const std::string& prefix, ParamList& out);
};

}  // namespace jaa
