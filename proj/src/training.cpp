#include "jaa/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "jaa/metrics.hpp"

namespace jaa {

void sgd_step(Tensor& param, Tensor& velocity, double lr, double momentum, double weight_decay) {
  if (param.shape() != velocity.shape()) fail_shape("sgd_step", "velocity shape mismatch");
  if (!param.has_grad()) return;
  double* p = param.data();
  double* v = velocity.data();
  const double* g = param.grad();
  for (std::int64_t i = 0; i < param.size(); ++i) {
    v[i] = momentum * v[i] + g[i] + weight_decay * p[i];
    p[i] -= lr * v[i];
  }
}

SGD::SGD(Network& net) : net_(&net) {
  for (const NetParam& p : net.params())
    velocity_.push_back(p.buffer ? Tensor() : Tensor(p.t.shape()));
}

void SGD::step(double lr, double momentum, double weight_decay, const std::set<ModuleId>& frozen) {
  const auto& params = net_->params();
  for (size_t i = 0; i < params.size(); ++i) {
    const NetParam& p = params[i];
    if (p.buffer || frozen.count(p.module)) continue;
    Tensor t = p.t;
    sgd_step(t, velocity_[i], lr, momentum, p.no_decay ? 0.0 : weight_decay);
  }
}

TrainSchedule default_schedule() {
  TrainSchedule s;
  s.stages = {
      {{}, 0.5, 8, 0.01},
      {{ModuleId::Region, ModuleId::Global, ModuleId::Attention, ModuleId::Heads}, 1.0, 2, 0.001},
      {{ModuleId::Region, ModuleId::Align}, 0.5, 2, 0.001},
  };
  return s;
}

double stage_lr(const TrainStage& stage, int epoch, const TrainSchedule& sched) {
  const int k = epoch / std::max(1, sched.lr_decay_every_epochs);
  return stage.lr0 * std::pow(sched.lr_decay_factor, k);
}

std::vector<Sample> load_samples(const Manifest& manifest, int eye_left, int eye_right) {
  std::vector<Sample> out;
  out.reserve(manifest.records.size());
  for (const SampleRecord& r : manifest.records) {
    Sample s;
    s.image = load_image(r.image);
    s.landmarks = r.landmarks;
    s.labels = r.labels;
    s.subject = r.subject;
    s.inter_ocular = inter_ocular_distance(r.landmarks, eye_left, eye_right);
    out.push_back(std::move(s));
  }
  return out;
}

namespace {

double sample_bilinear(const Tensor& img, int ch, double y, double x) {
  const int h = img.dim(1), w = img.dim(2);
  const int x0 = static_cast<int>(std::floor(x)), y0 = static_cast<int>(std::floor(y));
  const double fx = x - x0, fy = y - y0;
  auto at = [&](int yy, int xx) -> double {
    if (yy < 0 || yy >= h || xx < 0 || xx >= w) return 0.0;
    return img[(static_cast<std::int64_t>(ch) * h + yy) * w + xx];
  };
  return (1 - fy) * ((1 - fx) * at(y0, x0) + fx * at(y0, x0 + 1)) +
         fy * ((1 - fx) * at(y0 + 1, x0) + fx * at(y0 + 1, x0 + 1));
}

struct Similarity {
  // out = R*scale*in + t, rotation about the input center onto a canvas.
  double a, b, tx, ty;  // x' = a*x - b*y + tx ; y' = b*x + a*y + ty

  static Similarity make(int in_size, int canvas, double angle_deg, double scale, double shift_x,
                         double shift_y) {
    const double th = angle_deg * M_PI / 180.0;
    Similarity s;
    s.a = scale * std::cos(th);
    s.b = scale * std::sin(th);
    const double cin = (in_size - 1) / 2.0, cc = (canvas - 1) / 2.0;
    s.tx = cc + shift_x - (s.a * cin - s.b * cin);
    s.ty = cc + shift_y - (s.b * cin + s.a * cin);
    return s;
  }

  void apply(double x, double y, double& ox, double& oy) const {
    ox = a * x - b * y + tx;
    oy = b * x + a * y + ty;
  }

  Similarity inverse() const {
    const double det = a * a + b * b;
    Similarity s;
    s.a = a / det;
    s.b = -b / det;
    s.tx = -(s.a * tx - s.b * ty);
    s.ty = -(s.b * tx + s.a * ty);
    return s;
  }
};

Tensor warp_image(const Tensor& img, const Similarity& fwd, int canvas) {
  Tensor out({3, canvas, canvas});
  const Similarity inv = fwd.inverse();
  for (int ch = 0; ch < 3; ++ch)
    for (int y = 0; y < canvas; ++y)
      for (int x = 0; x < canvas; ++x) {
        double sx, sy;
        inv.apply(x, y, sx, sy);
        out[(static_cast<std::int64_t>(ch) * canvas + y) * canvas + x] =
            sample_bilinear(img, ch, sy, sx);
      }
  return out;
}

Sample crop_and_flip(const Tensor& canvas_img, const std::vector<double>& canvas_lm,
                     const Sample& src, int l, int off_x, int off_y, bool flip,
                     const std::vector<int>& flip_perm) {
  Sample out;
  out.labels = src.labels;
  out.subject = src.subject;
  const int canvas = canvas_img.dim(1);
  out.image = Tensor({3, l, l});
  for (int ch = 0; ch < 3; ++ch)
    for (int y = 0; y < l; ++y)
      for (int x = 0; x < l; ++x) {
        const int sx = flip ? off_x + (l - 1 - x) : off_x + x;
        out.image[(static_cast<std::int64_t>(ch) * l + y) * l + x] =
            canvas_img[(static_cast<std::int64_t>(ch) * canvas + (off_y + y)) * canvas + sx];
      }
  const int n = static_cast<int>(canvas_lm.size()) / 2;
  out.landmarks.resize(canvas_lm.size());
  for (int i = 0; i < n; ++i) {
    int src_i = i;
    if (flip && !flip_perm.empty()) {
      if (static_cast<int>(flip_perm.size()) != n)
        throw std::invalid_argument("augment: flip table length != landmark count");
      src_i = flip_perm[static_cast<size_t>(i)];
    }
    double x = canvas_lm[static_cast<size_t>(2 * src_i)] - off_x;
    double y = canvas_lm[static_cast<size_t>(2 * src_i) + 1] - off_y;
    if (flip) x = (l - 1) - x;
    out.landmarks[static_cast<size_t>(2 * i)] = x;
    out.landmarks[static_cast<size_t>(2 * i) + 1] = y;
  }
  out.inter_ocular = src.inter_ocular;  // recomputed by the caller if needed
  return out;
}

}  // namespace

std::vector<int> load_flip_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open flip table: " + path);
  std::vector<int> perm;
  std::string line;
  while (std::getline(in, line)) {
    const auto h = line.find('#');
    if (h != std::string::npos) line = line.substr(0, h);
    std::istringstream ss(line);
    int v;
    while (ss >> v) perm.push_back(v);
  }
  for (size_t i = 0; i < perm.size(); ++i) {
    const int j = perm[i];
    if (j < 0 || j >= static_cast<int>(perm.size()) ||
        perm[static_cast<size_t>(j)] != static_cast<int>(i))
      throw std::invalid_argument("flip table is not a symmetric permutation at entry " +
                                  std::to_string(i));
  }
  return perm;
}

Sample transform_sample(const Sample& s, double angle_deg, double scale, double tx, double ty,
                        bool flip, const std::vector<int>& flip_perm) {
  const int l = s.image.dim(1);
  const Similarity fwd = Similarity::make(l, l, angle_deg, scale, tx, ty);
  const bool identity = angle_deg == 0.0 && scale == 1.0 && tx == 0.0 && ty == 0.0;
  Tensor canvas_img = identity ? s.image : warp_image(s.image, fwd, l);
  std::vector<double> lm(s.landmarks.size());
  for (size_t i = 0; i + 1 < s.landmarks.size(); i += 2)
    fwd.apply(s.landmarks[i], s.landmarks[i + 1], lm[i], lm[i + 1]);
  return crop_and_flip(canvas_img, lm, s, l, 0, 0, flip, flip_perm);
}

Sample augment(const Sample& s, const AugmentParams& p, std::mt19937_64& rng) {
  const int l = s.image.dim(1);
  const int canvas = std::max(l, static_cast<int>(std::lround(l * p.canvas_scale)));
  std::uniform_real_distribution<double> uangle(-p.max_rotate_deg, p.max_rotate_deg);
  std::uniform_real_distribution<double> uscale(p.scale_min, p.scale_max);
  std::uniform_real_distribution<double> ushift(-p.max_translate_frac * l,
                                                p.max_translate_frac * l);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  const Similarity fwd =
      Similarity::make(l, canvas, uangle(rng), uscale(rng), ushift(rng), ushift(rng));
  Tensor canvas_img = warp_image(s.image, fwd, canvas);
  std::vector<double> lm(s.landmarks.size());
  for (size_t i = 0; i + 1 < s.landmarks.size(); i += 2)
    fwd.apply(s.landmarks[i], s.landmarks[i + 1], lm[i], lm[i + 1]);

  const bool flip = u01(rng) < p.flip_prob;
  const int max_off = canvas - l;
  std::uniform_int_distribution<int> uoff(0, max_off);
  int off_x = max_off / 2, off_y = max_off / 2;
  for (int attempt = 0; attempt < 8; ++attempt) {
    const int ox = uoff(rng), oy = uoff(rng);
    bool inside = true;
    for (size_t i = 0; i + 1 < lm.size() && inside; i += 2)
      inside = lm[i] >= ox && lm[i] <= ox + l - 1 && lm[i + 1] >= oy && lm[i + 1] <= oy + l - 1;
    if (inside) {
      off_x = ox;
      off_y = oy;
      break;
    }
  }
  return crop_and_flip(canvas_img, lm, s, l, off_x, off_y, flip, p.flip_perm);
}

Batch make_batch(const std::vector<Sample>& data, const std::vector<size_t>& idx) {
  if (idx.empty()) throw std::invalid_argument("make_batch: empty index list");
  const int l = data[idx[0]].image.dim(1);
  const int N = static_cast<int>(idx.size());
  Batch b;
  b.images = Tensor({N, 3, l, l});
  for (int n = 0; n < N; ++n) {
    const Sample& s = data[idx[static_cast<size_t>(n)]];
    if (s.image.dim(1) != l || s.image.dim(2) != l)
      fail_shape("make_batch", "inconsistent image sizes in one batch");
    std::copy(s.image.data(), s.image.data() + s.image.size(),
              b.images.data() + static_cast<std::int64_t>(n) * 3 * l * l);
    b.landmarks.insert(b.landmarks.end(), s.landmarks.begin(), s.landmarks.end());
    b.labels.insert(b.labels.end(), s.labels.begin(), s.labels.end());
    b.inter_ocular.push_back(s.inter_ocular);
  }
  return b;
}

EpochStats run_epoch(Network& net, SGD& opt, std::vector<Sample>& data,
                     const TrainSchedule& sched, const TrainStage& stage, double lr,
                     std::mt19937_64& rng, const AugmentParams* aug) {
  if (data.empty()) throw std::invalid_argument("run_epoch: empty dataset");
  std::vector<size_t> order(data.size());
  std::iota(order.begin(), order.end(), size_t{0});
  std::shuffle(order.begin(), order.end(), rng);

  EpochStats st;
  const int n_au = net.config().n_au;
  std::vector<double> truth, pred;
  for (size_t pos = 0; pos < order.size(); pos += static_cast<size_t>(sched.batch_size)) {
    std::vector<size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(pos),
                            order.begin() +
                                static_cast<std::ptrdiff_t>(std::min(
                                    pos + static_cast<size_t>(sched.batch_size), order.size())));
    Batch b;
    if (aug && sched.augment) {
      std::vector<Sample> batch_samples;
      batch_samples.reserve(idx.size());
      std::vector<size_t> local;
      for (size_t k = 0; k < idx.size(); ++k) {
        Sample a = augment(data[idx[k]], *aug, rng);
        a.inter_ocular = data[idx[k]].inter_ocular;
        batch_samples.push_back(std::move(a));
        local.push_back(k);
      }
      b = make_batch(batch_samples, local);
    } else {
      b = make_batch(data, idx);
    }

    net.zero_grads();
    ForwardOutput out = net.forward(b, true);
    const double e_total = out.e_total[0];
    if (!std::isfinite(e_total))
      throw std::runtime_error("run_epoch: non-finite loss, aborting (e_total=" +
                               std::to_string(e_total) + ")");
    net.backward(out);
    opt.step(lr, sched.momentum, sched.weight_decay, stage.frozen);

    st.e_total += e_total;
    st.e_au += out.e_au[0];
    st.e_align += out.e_align[0];
    st.e_r += out.e_r[0];
    ++st.batches;
    for (std::int64_t i = 0; i < out.au_probs.size(); ++i)
      pred.push_back(out.au_probs[i] >= 0.5 ? 1.0 : 0.0);
    truth.insert(truth.end(), b.labels.begin(), b.labels.end());
  }
  st.e_total /= st.batches;
  st.e_au /= st.batches;
  st.e_align /= st.batches;
  st.e_r /= st.batches;
  st.train_f1 = f1_frame(truth, pred, n_au).avg;
  return st;
}

void run_schedule(Network& net, std::vector<Sample>& data, const TrainSchedule& sched,
                  std::ostream& log, const AugmentParams* aug) {
  if (data.empty()) throw std::invalid_argument("run_schedule: empty dataset");
  if (sched.stages.empty()) throw std::invalid_argument("run_schedule: no stages");
  SGD opt(net);
  std::mt19937_64 rng(sched.seed);
  for (size_t si = 0; si < sched.stages.size(); ++si) {
    const TrainStage& stage = sched.stages[si];
    net.set_lambda1(stage.lambda1);
    std::map<ModuleId, std::uint64_t> frozen_hashes;
    for (ModuleId m : stage.frozen) frozen_hashes[m] = net.module_hash(m);
    for (int e = 0; e < stage.epochs; ++e) {
      const double lr = stage_lr(stage, e, sched);
      EpochStats st = run_epoch(net, opt, data, sched, stage, lr, rng, aug);
      std::ostringstream line;
      line.precision(10);
      line << "stage=" << si << " epoch=" << e << " lr=" << lr << " e_total=" << st.e_total
           << " e_au=" << st.e_au << " e_align=" << st.e_align << " e_r=" << st.e_r
           << " train_f1=" << st.train_f1;
      log << line.str() << "\n";
    }
    for (const auto& [m, h] : frozen_hashes)
      if (net.module_hash(m) != h)
        throw std::runtime_error("run_schedule: frozen module '" + module_name(m) +
                                 "' changed during stage " + std::to_string(si));
  }
}

}  // namespace jaa
