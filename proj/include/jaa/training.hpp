#pragma once

#include <iosfwd>
#include <set>

#include "jaa/dataio.hpp"
#include "jaa/network.hpp"

namespace jaa {

// v <- momentum*v + grad + weight_decay*param; param <- param - lr*v.
void sgd_step(Tensor& param, Tensor& velocity, double lr, double momentum, double weight_decay);

class SGD {
 public:
  explicit SGD(Network& net);

  // Updates every trainable parameter whose module is not frozen.
  void step(double lr, double momentum, double weight_decay,
            const std::set<ModuleId>& frozen = {});

 private:
  Network* net_;
  std::vector<Tensor> velocity_;
};

struct TrainStage {
  std::set<ModuleId> frozen;
  double lambda1 = 0.5;
  int epochs = 1;
  double lr0 = 0.01;
};

struct TrainSchedule {
  std::vector<TrainStage> stages;
  double momentum = 0.9;
  double weight_decay = 0.0005;
  int batch_size = 9;
  double lr_decay_factor = 0.3;
  int lr_decay_every_epochs = 2;
  bool augment = false;
  std::uint64_t seed = 0;
};

// The staged protocol: everything, then alignment alone at lambda1=1, then
// the global/attention/heads group.
TrainSchedule default_schedule();

double stage_lr(const TrainStage& stage, int epoch, const TrainSchedule& sched);

struct Sample {
  Tensor image;  // [3,l,l]
  std::vector<double> landmarks;
  std::vector<double> labels;
  double inter_ocular = 0.0;
  std::string subject;
};

std::vector<Sample> load_samples(const Manifest& manifest, int eye_left, int eye_right);

struct AugmentParams {
  double max_rotate_deg = 15.0;
  double scale_min = 0.9;
  double scale_max = 1.1;
  double max_translate_frac = 0.05;
  double canvas_scale = 200.0 / 176.0;  // enlarged canvas the crop is taken from
  double flip_prob = 0.5;
  std::vector<int> flip_perm;  // landmark index remap under horizontal flip
};

// Whitespace-separated landmark indices, '#' comments. Entry i is the source
// landmark that lands at position i after a horizontal flip.
std::vector<int> load_flip_table(const std::string& path);

// Random similarity transform (rotation, uniform scale, translation) onto an
// enlarged canvas, then a random crop back to the input size and an optional
// horizontal flip. Landmarks follow the same map; a crop that would push a
// landmark outside is re-drawn a few times, then replaced by a center crop.
Sample augment(const Sample& s, const AugmentParams& p, std::mt19937_64& rng);

// Deterministic variant used by tests: fixed angle/scale/translation, no crop
// jitter, explicit flip.
Sample transform_sample(const Sample& s, double angle_deg, double scale, double tx, double ty,
                        bool flip, const std::vector<int>& flip_perm);

struct EpochStats {
  double e_total = 0.0, e_au = 0.0, e_align = 0.0, e_r = 0.0;
  double train_f1 = 0.0;
  int batches = 0;
};

// Runs the staged schedule, logging one line per epoch to `log`. Throws on a
// non-finite loss. Frozen modules are asserted unchanged via parameter hashes.
void run_schedule(Network& net, std::vector<Sample>& data, const TrainSchedule& sched,
                  std::ostream& log, const AugmentParams* aug = nullptr);

// One pass over the data with parameter updates; exposed for tests.
EpochStats run_epoch(Network& net, SGD& opt, std::vector<Sample>& data,
                     const TrainSchedule& sched, const TrainStage& stage, double lr,
                     std::mt19937_64& rng, const AugmentParams* aug);

Batch make_batch(const std::vector<Sample>& data, const std::vector<size_t>& idx);

}  // namespace jaa
