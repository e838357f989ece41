#pragma once

#include <map>

#include "jaa/attention.hpp"
#include "jaa/losses.hpp"
#include "jaa/region.hpp"

namespace jaa {

enum class ModuleId { Region, Align, Global, Attention, Heads };

std::string module_name(ModuleId m);

struct NetConfig {
  int l = 176;
  int c = 8;
  int d = 512;
  int n_align = 49;
  int n_au = 12;
  double zeta = 0.14;
  double xi = 0.56;
  double lambda1 = 0.5;
  double lambda2 = 1e-7;
  double lambda3 = 2.0;
  double dice_eps = 1.0;
  int refine_width = 1;
  int eye_left = 19;   // outer eye-corner landmark indices (inter-ocular pair)
  int eye_right = 28;
  bool use_ground_truth_landmarks = false;
  std::uint64_t seed = 0;
  std::vector<double> au_weights;  // empty -> all ones
  RuleTable rules;                 // empty -> generic synthetic table

  void validate() const;
  std::map<std::string, std::string> to_kv() const;
  static NetConfig from_kv(const std::map<std::string, std::string>& kv);
};

// Synthetic rule table for configs without a real one (toy scales, tests).
RuleTable generic_rule_table(int n_au, int n_align);

struct Batch {
  Tensor images;                    // [N,3,l,l]
  std::vector<double> landmarks;    // N*2*n_align ground truth (optional)
  std::vector<double> labels;       // N*n_au binary (optional)
  std::vector<double> inter_ocular; // N (required with landmarks)

  bool has_truth() const { return !landmarks.empty() && !labels.empty(); }
};

struct ForwardOutput {
  Tape tape;
  Tensor landmarks;  // [N, 2*n_align]
  Tensor au_probs;   // [N, n_au]
  std::vector<Tensor> initial_maps;    // per AU [N,1,s,s], raw Eq-style init
  std::vector<Tensor> initial_removed; // per AU after padding removal (E_r target)
  std::vector<Tensor> refined_maps;    // per AU [N,1,s,s]
  Tensor e_total, e_au, e_align, e_r, e_softmax, e_dice;
  bool has_losses = false;
};

struct NetParam {
  std::string name;
  Tensor t;
  ModuleId module;
  bool no_decay = false;
  bool buffer = false;
};

class Network {
 public:
  static Network build(const NetConfig& cfg);

  ForwardOutput forward(const Batch& batch, bool training);
  void backward(ForwardOutput& out);
  void zero_grads();

  const NetConfig& config() const { return cfg_; }
  void set_lambda1(double v) { cfg_.lambda1 = v; }  // stage-dependent weight
  void set_use_ground_truth_landmarks(bool v) { cfg_.use_ground_truth_landmarks = v; }
  const std::vector<NetParam>& params() const { return params_; }

  // FNV-1a hash over the raw parameter bytes of one module (buffers excluded).
  std::uint64_t module_hash(ModuleId m) const;

  void save_checkpoint(const std::string& path) const;
  static Network load_checkpoint(const std::string& path);

 private:
  Network() = default;

  NetConfig cfg_;
  int side_ = 0;      // l/4
  int out_side_ = 0;  // spatial side after the three head pools

  RegionModule region_;
  PlainBlock align_p1_, align_p2_, align_p3_;
  FCLayer align_fc1_, align_fc2_;
  PlainBlock global_p1_, global_p2_, global_p3_;
  std::vector<AttentionRefiner> refiners_;
  std::vector<LocalBranch> local_branches_;
  FCLayer au_fc1_, au_fc2_;

  std::vector<NetParam> params_;
  void register_params();
};

}  // namespace jaa
