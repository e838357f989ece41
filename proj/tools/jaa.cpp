#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>

#include <CLI11.hpp>

#include "jaa/config.hpp"
#include "jaa/dataio.hpp"
#include "jaa/gradcheck.hpp"
#include "jaa/metrics.hpp"
#include "jaa/network.hpp"
#include "jaa/training.hpp"

namespace fs = std::filesystem;
using namespace jaa;

namespace {

const std::set<std::string> kKnownKeys = {
    "net.l", "net.c", "net.d", "net.n_align", "net.n_au", "net.zeta", "net.xi", "net.lambda2",
    "net.lambda3", "net.dice_eps", "net.refine_width", "net.eye_left", "net.eye_right",
    "net.use_ground_truth_landmarks", "net.seed",
    "train.batch_size", "train.momentum", "train.weight_decay", "train.lr_decay_factor",
    "train.lr_decay_every_epochs", "train.augment", "train.seed",
    "train.stage0.epochs", "train.stage0.lr", "train.stage0.lambda1",
    "train.stage1.epochs", "train.stage1.lr", "train.stage1.lambda1",
    "train.stage2.epochs", "train.stage2.lr", "train.stage2.lambda1",
    "aug.max_rotate_deg", "aug.scale_min", "aug.scale_max", "aug.max_translate_frac",
    "aug.canvas_scale", "aug.flip_prob",
    "data.manifest", "data.rule_table", "data.flip_table", "data.rates",
};

Config load_config(const std::string& path, const std::vector<std::string>& overrides) {
  Config cfg = path.empty() ? Config() : Config::parse_file(path);
  for (const auto& o : overrides) cfg.apply_override(o);
  cfg.check_known(kKnownKeys);
  return cfg;
}

std::string resolve(const std::string& cfg_path, const std::string& rel) {
  if (rel.empty() || fs::path(rel).is_absolute() || cfg_path.empty()) return rel;
  return (fs::path(cfg_path).parent_path() / rel).string();
}

NetConfig net_config(const Config& cfg, const std::string& cfg_path) {
  NetConfig n;
  n.l = cfg.get_int("net.l", n.l);
  n.c = cfg.get_int("net.c", n.c);
  n.d = cfg.get_int("net.d", n.d);
  n.n_align = cfg.get_int("net.n_align", n.n_align);
  n.n_au = cfg.get_int("net.n_au", n.n_au);
  n.zeta = cfg.get_double("net.zeta", n.zeta);
  n.xi = cfg.get_double("net.xi", n.xi);
  n.lambda2 = cfg.get_double("net.lambda2", n.lambda2);
  n.lambda3 = cfg.get_double("net.lambda3", n.lambda3);
  n.dice_eps = cfg.get_double("net.dice_eps", n.dice_eps);
  n.refine_width = cfg.get_int("net.refine_width", n.refine_width);
  n.eye_left = cfg.get_int("net.eye_left", n.eye_left);
  n.eye_right = cfg.get_int("net.eye_right", n.eye_right);
  n.use_ground_truth_landmarks =
      cfg.get_bool("net.use_ground_truth_landmarks", n.use_ground_truth_landmarks);
  n.seed = static_cast<std::uint64_t>(cfg.get_int("net.seed", 0));
  if (cfg.has("data.rule_table"))
    n.rules = load_rule_table(resolve(cfg_path, cfg.get("data.rule_table", "")));
  if (cfg.has("data.rates")) {
    std::ifstream in(resolve(cfg_path, cfg.get("data.rates", "")));
    if (!in) throw std::runtime_error("cannot open rates file");
    std::vector<double> rates;
    double r;
    while (in >> r) rates.push_back(r);
    n.au_weights = compute_au_weights(rates);
  }
  return n;
}

TrainSchedule schedule_config(const Config& cfg) {
  TrainSchedule s = default_schedule();
  s.batch_size = cfg.get_int("train.batch_size", s.batch_size);
  s.momentum = cfg.get_double("train.momentum", s.momentum);
  s.weight_decay = cfg.get_double("train.weight_decay", s.weight_decay);
  s.lr_decay_factor = cfg.get_double("train.lr_decay_factor", s.lr_decay_factor);
  s.lr_decay_every_epochs = cfg.get_int("train.lr_decay_every_epochs", s.lr_decay_every_epochs);
  s.augment = cfg.get_bool("train.augment", s.augment);
  s.seed = static_cast<std::uint64_t>(cfg.get_int("train.seed", 0));
  for (size_t i = 0; i < s.stages.size(); ++i) {
    const std::string p = "train.stage" + std::to_string(i);
    s.stages[i].epochs = cfg.get_int(p + ".epochs", s.stages[i].epochs);
    s.stages[i].lr0 = cfg.get_double(p + ".lr", s.stages[i].lr0);
    s.stages[i].lambda1 = cfg.get_double(p + ".lambda1", s.stages[i].lambda1);
  }
  return s;
}

AugmentParams aug_config(const Config& cfg, const std::string& cfg_path) {
  AugmentParams p;
  p.max_rotate_deg = cfg.get_double("aug.max_rotate_deg", p.max_rotate_deg);
  p.scale_min = cfg.get_double("aug.scale_min", p.scale_min);
  p.scale_max = cfg.get_double("aug.scale_max", p.scale_max);
  p.max_translate_frac = cfg.get_double("aug.max_translate_frac", p.max_translate_frac);
  p.canvas_scale = cfg.get_double("aug.canvas_scale", p.canvas_scale);
  p.flip_prob = cfg.get_double("aug.flip_prob", p.flip_prob);
  if (cfg.has("data.flip_table"))
    p.flip_perm = load_flip_table(resolve(cfg_path, cfg.get("data.flip_table", "")));
  return p;
}

void write_snapshot(const Config& cfg, const std::string& out_dir) {
  fs::create_directories(out_dir);
  std::ofstream out(fs::path(out_dir) / "effective_config.txt");
  out << cfg.snapshot();
}

int cmd_train(const std::string& cfg_path, const std::vector<std::string>& overrides,
              const std::string& out_dir) {
  Config cfg = load_config(cfg_path, overrides);
  if (!cfg.has("data.manifest")) {
    std::cerr << "train: data.manifest is required\n";
    return 1;
  }
  write_snapshot(cfg, out_dir);
  NetConfig nc = net_config(cfg, cfg_path);
  Network net = Network::build(nc);
  Manifest m = load_manifest(resolve(cfg_path, cfg.get("data.manifest", "")));
  if (m.n_align != nc.n_align || m.n_au != nc.n_au)
    throw std::invalid_argument("manifest landmark/AU counts do not match the network config");
  std::vector<Sample> data = load_samples(m, nc.eye_left, nc.eye_right);
  TrainSchedule sched = schedule_config(cfg);
  AugmentParams aug = aug_config(cfg, cfg_path);
  std::ofstream log(fs::path(out_dir) / "metrics.log");
  run_schedule(net, data, sched, log, sched.augment ? &aug : nullptr);
  net.save_checkpoint((fs::path(out_dir) / "model.ckpt").string());
  std::cout << "wrote " << (fs::path(out_dir) / "model.ckpt").string() << "\n";
  return 0;
}

int cmd_eval(const std::string& cfg_path, const std::vector<std::string>& overrides,
             const std::string& ckpt, const std::string& manifest_path,
             const std::string& out_dir) {
  Config cfg = load_config(cfg_path, overrides);
  Network net = Network::load_checkpoint(ckpt);
  const NetConfig& nc = net.config();
  Manifest m = load_manifest(manifest_path);
  if (m.n_align != nc.n_align || m.n_au != nc.n_au)
    throw std::invalid_argument("manifest landmark/AU counts do not match the checkpoint");
  std::vector<Sample> data = load_samples(m, nc.eye_left, nc.eye_right);

  std::vector<double> truth_lab, pred_lab, truth_lm, pred_lm, d_o;
  const int bs = 8;
  for (size_t pos = 0; pos < data.size(); pos += bs) {
    std::vector<size_t> idx;
    for (size_t i = pos; i < std::min(pos + bs, data.size()); ++i) idx.push_back(i);
    Batch b = make_batch(data, idx);
    ForwardOutput out = net.forward(b, false);
    truth_lab.insert(truth_lab.end(), b.labels.begin(), b.labels.end());
    for (std::int64_t i = 0; i < out.au_probs.size(); ++i)
      pred_lab.push_back(out.au_probs[i] >= 0.5 ? 1.0 : 0.0);
    truth_lm.insert(truth_lm.end(), b.landmarks.begin(), b.landmarks.end());
    pred_lm.insert(pred_lm.end(), out.landmarks.data(),
                   out.landmarks.data() + out.landmarks.size());
    d_o.insert(d_o.end(), b.inter_ocular.begin(), b.inter_ocular.end());
  }
  F1Result f1 = f1_frame(truth_lab, pred_lab, nc.n_au);
  AccuracyResult acc = accuracy(truth_lab, pred_lab, nc.n_au);
  AlignmentResult al = alignment_metrics(truth_lm, pred_lm, nc.n_align, d_o);
  const std::string report = metrics_report(f1, acc, &al);
  std::cout << report;
  if (!out_dir.empty()) {
    write_snapshot(cfg, out_dir);
    std::ofstream out(fs::path(out_dir) / "eval_report.txt");
    out << report;
  }
  return 0;
}

int cmd_gradcheck() {
  // End-to-end toy-scale check over a parameter subsample.
  set_finite_checks(true);
  NetConfig nc;
  nc.l = 32;
  nc.c = 1;
  nc.d = 8;
  nc.n_align = 3;
  nc.n_au = 2;
  nc.eye_left = 0;
  nc.eye_right = 1;
  nc.use_ground_truth_landmarks = true;
  nc.lambda3 = 1.0;  // the backward-only amplification is not a true gradient
  nc.seed = 11;
  Network net = Network::build(nc);

  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Batch b;
  b.images = Tensor({2, 3, 32, 32});
  for (std::int64_t i = 0; i < b.images.size(); ++i) b.images[i] = u(rng);
  for (int n = 0; n < 2; ++n) {
    b.landmarks.insert(b.landmarks.end(), {6.0, 10.0, 24.0, 10.0, 15.0, 22.0});
    b.labels.insert(b.labels.end(), {1.0, 0.0});
    b.inter_ocular.push_back(18.0);
  }

  // forward() owns its tape, so drive the check manually.
  std::vector<std::pair<std::string, Tensor>> tracked;
  for (const NetParam& p : net.params()) {
    if (p.buffer) continue;
    Tensor t = p.t;
    t.set_requires_grad(true);
    tracked.push_back({p.name, t});
  }
  net.zero_grads();
  ForwardOutput out = net.forward(b, true);
  net.backward(out);

  double max_rel = 0.0;
  std::string worst;
  const double h = 1e-6;
  std::mt19937_64 pick(17);
  for (auto& [name, t] : tracked) {
    std::vector<double> grads(t.grad(), t.grad() + t.size());
    const int samples = static_cast<int>(std::min<std::int64_t>(t.size(), 4));
    for (int s = 0; s < samples; ++s) {
      const std::int64_t i =
          static_cast<std::int64_t>(pick() % static_cast<std::uint64_t>(t.size()));
      const double orig = t[i];
      // Probe in training mode: the analytic gradients came from the
      // training-mode graph (batch statistics, not running averages).
      t[i] = orig + h;
      const double fp = net.forward(b, true).e_total[0];
      t[i] = orig - h;
      const double fm = net.forward(b, true).e_total[0];
      t[i] = orig;
      const double num = (fp - fm) / (2 * h);
      const double ana = grads[static_cast<size_t>(i)];
      const double rel = std::abs(num - ana) / std::max({std::abs(num), std::abs(ana), 1e-4});
      if (rel > max_rel) {
        max_rel = rel;
        worst = name + "[" + std::to_string(i) + "]";
      }
    }
  }
  std::cout << "gradcheck: max relative error " << max_rel << " at " << worst << "\n";
  if (max_rel >= 1e-3) {
    std::cerr << "gradcheck FAILED (tolerance 1e-3)\n";
    return 2;
  }
  std::cout << "gradcheck passed\n";
  return 0;
}

int cmd_synth(const std::string& out_dir, int subjects, int frames, std::uint64_t seed,
              int image_size, int n_align, int n_au) {
  SynthConfig sc;
  sc.image_size = image_size;
  sc.n_align = n_align;
  sc.n_au = n_au;
  SynthDataset d = synth_dataset(out_dir, subjects, frames, seed, sc);
  std::cout << "wrote " << d.records.size() << " samples to " << out_dir << "\n";
  std::cout << "rates:";
  for (double r : d.rates) std::cout << " " << r;
  std::cout << "\n";
  return 0;
}

int cmd_attention(const std::string& cfg_path, const std::vector<std::string>& overrides,
                  const std::string& ckpt, const std::string& manifest_path, int index,
                  bool use_gt, const std::string& out_dir) {
  Config cfg = load_config(cfg_path, overrides);
  Network net = Network::load_checkpoint(ckpt);
  net.set_use_ground_truth_landmarks(use_gt);
  const NetConfig& nc = net.config();
  Manifest m = load_manifest(manifest_path);
  if (index < 0 || index >= static_cast<int>(m.records.size()))
    throw std::invalid_argument("sample index out of range");
  std::vector<Sample> data = load_samples(m, nc.eye_left, nc.eye_right);
  fs::create_directories(out_dir);
  write_snapshot(cfg, out_dir);
  Batch b = make_batch(data, {static_cast<size_t>(index)});
  ForwardOutput out = net.forward(b, false);
  const int s = nc.l / 4;
  for (int a = 0; a < nc.n_au; ++a) {
    // Side-by-side panel: initial map | refined map.
    std::vector<double> panel(static_cast<size_t>(s) * (2 * s + 2), 0.0);
    const Tensor& init = out.initial_maps[static_cast<size_t>(a)];
    const Tensor& ref = out.refined_maps[static_cast<size_t>(a)];
    for (int y = 0; y < s; ++y)
      for (int x = 0; x < s; ++x) {
        panel[static_cast<size_t>(y) * (2 * s + 2) + x] =
            init[static_cast<std::int64_t>(y) * s + x];
        panel[static_cast<size_t>(y) * (2 * s + 2) + s + 2 + x] =
            ref[static_cast<std::int64_t>(y) * s + x];
      }
    save_pgm((fs::path(out_dir) / ("au" + std::to_string(a) + ".pgm")).string(), panel, s,
             2 * s + 2);
  }
  std::cout << "wrote " << nc.n_au << " attention panels to " << out_dir << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"joint AU detection and face alignment toolkit"};
  app.require_subcommand(1);

  std::string cfg_path, out_dir = "out", ckpt, manifest_path;
  std::vector<std::string> overrides;
  int threads = 1;
  app.add_option("--threads", threads, "worker thread bound (compute is single-threaded)");

  auto add_common = [&](CLI::App* sc) {
    sc->add_option("--config", cfg_path, "config file");
    sc->add_option("--set", overrides, "override, dotted key=value");
    sc->add_option("--out", out_dir, "output directory");
  };

  CLI::App* train = app.add_subcommand("train", "run the staged training schedule");
  add_common(train);

  CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint on a manifest");
  add_common(eval);
  eval->add_option("--checkpoint", ckpt, "checkpoint path")->required();
  eval->add_option("--manifest", manifest_path, "manifest path")->required();

  CLI::App* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient check");

  int subjects = 8, frames = 8, image_size = 32, n_align = 3, n_au = 2;
  std::uint64_t seed = 0;
  CLI::App* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  synth->add_option("--out", out_dir, "output directory")->required();
  synth->add_option("--subjects", subjects, "number of subjects");
  synth->add_option("--frames", frames, "frames per subject");
  synth->add_option("--seed", seed, "generator seed");
  synth->add_option("--image-size", image_size, "square image side");
  synth->add_option("--n-align", n_align, "landmark count");
  synth->add_option("--n-au", n_au, "AU count");

  int index = 0;
  bool use_gt = false;
  CLI::App* attention = app.add_subcommand("attention", "render initial vs refined AU maps");
  add_common(attention);
  attention->add_option("--checkpoint", ckpt, "checkpoint path")->required();
  attention->add_option("--manifest", manifest_path, "manifest path")->required();
  attention->add_option("--index", index, "sample index in the manifest");
  attention->add_flag("--use-gt-landmarks", use_gt, "seed maps from ground-truth landmarks");

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed()) return cmd_train(cfg_path, overrides, out_dir);
    if (eval->parsed()) return cmd_eval(cfg_path, overrides, ckpt, manifest_path, out_dir);
    if (gradcheck->parsed()) return cmd_gradcheck();
    if (synth->parsed()) return cmd_synth(out_dir, subjects, frames, seed, image_size, n_align,
                                          n_au);
    if (attention->parsed())
      return cmd_attention(cfg_path, overrides, ckpt, manifest_path, index, use_gt, out_dir);
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
