#include "jaa/network.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace jaa {

std::string module_name(ModuleId m) {
  switch (m) {
    case ModuleId::Region: return "region";
    case ModuleId::Align: return "align";
    case ModuleId::Global: return "global";
    case ModuleId::Attention: return "attention";
    case ModuleId::Heads: return "heads";
  }
  return "?";
}

void NetConfig::validate() const {
  if (l < 32 || l % 16 != 0)
    throw std::invalid_argument("NetConfig: l must be >= 32 and divisible by 16");
  if (c < 1 || d < 1 || n_align < 2 || n_au < 1)
    throw std::invalid_argument("NetConfig: c, d, n_align, n_au must be positive (n_align >= 2)");
  if (zeta <= 0.0 || xi < 0.0) throw std::invalid_argument("NetConfig: need zeta > 0, xi >= 0");
  if (lambda1 < 0.0 || lambda2 < 0.0) throw std::invalid_argument("NetConfig: negative lambda");
  if (lambda3 < 1.0) throw std::invalid_argument("NetConfig: lambda3 must be >= 1");
  if (dice_eps <= 0.0) throw std::invalid_argument("NetConfig: dice_eps must be positive");
  if (refine_width < 1) throw std::invalid_argument("NetConfig: refine_width must be >= 1");
  if (eye_left < 0 || eye_left >= n_align || eye_right < 0 || eye_right >= n_align ||
      eye_left == eye_right)
    throw std::invalid_argument("NetConfig: bad eye landmark indices");
  if (!au_weights.empty() && au_weights.size() != static_cast<size_t>(n_au))
    throw std::invalid_argument("NetConfig: au_weights length != n_au");
  if (!rules.empty() && rules.size() != static_cast<size_t>(n_au))
    throw std::invalid_argument("NetConfig: rule table size != n_au");
}

RuleTable generic_rule_table(int n_au, int n_align) {
  RuleTable t;
  for (int a = 0; a < n_au; ++a) {
    AURule r;
    r.au_id = a;
    r.c1 = CenterSpec{false, a % n_align, 0, 0.0};
    r.c2 = CenterSpec{true, (a + 1) % n_align, (a + 2) % n_align, 0.1};
    t.push_back(r);
  }
  return t;
}

std::map<std::string, std::string> NetConfig::to_kv() const {
  std::map<std::string, std::string> kv;
  auto put = [&](const std::string& k, double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    kv[k] = os.str();
  };
  kv["l"] = std::to_string(l);
  kv["c"] = std::to_string(c);
  kv["d"] = std::to_string(d);
  kv["n_align"] = std::to_string(n_align);
  kv["n_au"] = std::to_string(n_au);
  put("zeta", zeta);
  put("xi", xi);
  put("lambda1", lambda1);
  put("lambda2", lambda2);
  put("lambda3", lambda3);
  put("dice_eps", dice_eps);
  kv["refine_width"] = std::to_string(refine_width);
  kv["eye_left"] = std::to_string(eye_left);
  kv["eye_right"] = std::to_string(eye_right);
  kv["use_ground_truth_landmarks"] = use_ground_truth_landmarks ? "1" : "0";
  kv["seed"] = std::to_string(seed);
  if (!au_weights.empty()) {
    std::ostringstream os;
    os.precision(17);
    for (size_t i = 0; i < au_weights.size(); ++i) {
      if (i) os << ",";
      os << au_weights[i];
    }
    kv["au_weights"] = os.str();
  }
  for (size_t i = 0; i < rules.size(); ++i)
    kv["rule" + std::to_string(i)] = rule_to_string(rules[i]);
  return kv;
}

NetConfig NetConfig::from_kv(const std::map<std::string, std::string>& kv) {
  NetConfig c;
  auto geti = [&](const char* k, int& dst) {
    auto it = kv.find(k);
    if (it != kv.end()) dst = std::stoi(it->second);
  };
  auto getd = [&](const char* k, double& dst) {
    auto it = kv.find(k);
    if (it != kv.end()) dst = std::stod(it->second);
  };
  geti("l", c.l);
  geti("c", c.c);
  geti("d", c.d);
  geti("n_align", c.n_align);
  geti("n_au", c.n_au);
  getd("zeta", c.zeta);
  getd("xi", c.xi);
  getd("lambda1", c.lambda1);
  getd("lambda2", c.lambda2);
  getd("lambda3", c.lambda3);
  getd("dice_eps", c.dice_eps);
  geti("refine_width", c.refine_width);
  geti("eye_left", c.eye_left);
  geti("eye_right", c.eye_right);
  if (auto it = kv.find("use_ground_truth_landmarks"); it != kv.end())
    c.use_ground_truth_landmarks = it->second == "1" || it->second == "true";
  if (auto it = kv.find("seed"); it != kv.end()) c.seed = std::stoull(it->second);
  if (auto it = kv.find("au_weights"); it != kv.end()) {
    std::stringstream ss(it->second);
    std::string tok;
    while (std::getline(ss, tok, ',')) c.au_weights.push_back(std::stod(tok));
  }
  for (int i = 0;; ++i) {
    auto it = kv.find("rule" + std::to_string(i));
    if (it == kv.end()) break;
    c.rules.push_back(rule_from_string(it->second));
  }
  return c;
}

Network Network::build(const NetConfig& cfg_in) {
  NetConfig cfg = cfg_in;
  cfg.validate();
  if (cfg.au_weights.empty()) cfg.au_weights.assign(static_cast<size_t>(cfg.n_au), 1.0);
  if (cfg.rules.empty()) cfg.rules = generic_rule_table(cfg.n_au, cfg.n_align);

  Network net;
  net.cfg_ = cfg;
  net.side_ = cfg.l / 4;
  int sp = net.side_;
  for (int i = 0; i < 3; ++i) sp /= 2;
  net.out_side_ = sp;
  if (sp < 1) throw std::invalid_argument("NetConfig: l too small for the head pools");

  std::mt19937_64 rng(cfg.seed);
  const int c = cfg.c;
  net.region_ = RegionModule(cfg.l, c, rng);
  net.align_p1_ = PlainBlock(8 * c, 3 * c, 1, rng);
  net.align_p2_ = PlainBlock(3 * c, 4 * c, 1, rng);
  net.align_p3_ = PlainBlock(4 * c, 5 * c, 1, rng);
  net.align_fc1_ = FCLayer(5 * c * sp * sp, cfg.d, rng);
  net.align_fc2_ = FCLayer(cfg.d, 2 * cfg.n_align, rng);
  net.global_p1_ = PlainBlock(8 * c, 3 * c, 1, rng);
  net.global_p2_ = PlainBlock(3 * c, 4 * c, 1, rng);
  net.global_p3_ = PlainBlock(4 * c, 5 * c, 1, rng);
  for (int a = 0; a < cfg.n_au; ++a) {
    net.refiners_.emplace_back(cfg.refine_width, rng);
    net.local_branches_.emplace_back(8 * c, rng);
  }
  net.au_fc1_ = FCLayer((5 * c + 5 * c + 8 * c) * sp * sp, cfg.d, rng);
  net.au_fc2_ = FCLayer(cfg.d, 2 * cfg.n_au, rng);
  net.register_params();
  return net;
}

void Network::register_params() {
  ParamList list;
  auto add = [&](ParamList& l, ModuleId m) {
    for (ParamEntry& e : l)
      params_.push_back({e.name, e.t, m, e.no_decay, e.buffer});
    l.clear();
  };
  region_.collect("region", list);
  add(list, ModuleId::Region);
  align_p1_.collect("align.p1", list);
  align_p2_.collect("align.p2", list);
  align_p3_.collect("align.p3", list);
  align_fc1_.collect("align.fc1", list);
  align_fc2_.collect("align.fc2", list);
  add(list, ModuleId::Align);
  global_p1_.collect("global.p1", list);
  global_p2_.collect("global.p2", list);
  global_p3_.collect("global.p3", list);
  add(list, ModuleId::Global);
  for (size_t a = 0; a < refiners_.size(); ++a) {
    refiners_[a].collect("attention.refine" + std::to_string(a), list);
    local_branches_[a].collect("attention.local" + std::to_string(a), list);
  }
  add(list, ModuleId::Attention);
  au_fc1_.collect("heads.au_fc1", list);
  au_fc2_.collect("heads.au_fc2", list);
  add(list, ModuleId::Heads);
}

ForwardOutput Network::forward(const Batch& batch, bool training) {
  const int N = batch.images.dim(0);
  if (batch.images.ndim() != 4 || batch.images.dim(1) != 3 || batch.images.dim(2) != cfg_.l ||
      batch.images.dim(3) != cfg_.l)
    fail_shape("Network::forward", "expected images [N,3," + std::to_string(cfg_.l) + "," +
                                       std::to_string(cfg_.l) + "], got " +
                                       shape_str(batch.images.shape()));
  if (batch.has_truth()) {
    if (batch.landmarks.size() != static_cast<size_t>(N) * 2 * cfg_.n_align ||
        batch.labels.size() != static_cast<size_t>(N) * cfg_.n_au ||
        batch.inter_ocular.size() != static_cast<size_t>(N))
      fail_shape("Network::forward", "ground-truth size mismatch");
  }

  ForwardOutput out;
  out.tape.enabled = training;
  Tape& tape = out.tape;
  const int s = side_;

  Tensor pool2 = region_.forward(tape, batch.images, training);

  auto head_convs = [&](PlainBlock& p1, PlainBlock& p2, PlainBlock& p3,
                        const Tensor& in) -> Tensor {
    Tensor y = p1.forward(tape, in, training);
    y = maxpool2(tape, y, true);
    y = p2.forward(tape, y, training);
    y = maxpool2(tape, y, true);
    y = p3.forward(tape, y, training);
    return maxpool2(tape, y, true);
  };
  Tensor align_feat = head_convs(align_p1_, align_p2_, align_p3_, pool2);
  Tensor ah = relu(tape, align_fc1_.forward(tape, flatten(tape, align_feat)));
  out.landmarks = align_fc2_.forward(tape, ah);

  Tensor global_feat = head_convs(global_p1_, global_p2_, global_p3_, pool2);

  // Attention seeding. Predicted landmarks are read as plain values here:
  // the center computation does not carry gradients back into alignment.
  const bool use_gt = cfg_.use_ground_truth_landmarks && !batch.landmarks.empty();
  out.initial_maps.reserve(static_cast<size_t>(cfg_.n_au));
  for (int a = 0; a < cfg_.n_au; ++a) out.initial_maps.emplace_back(Shape{N, 1, s, s});
  for (int n = 0; n < N; ++n) {
    LandmarkSet lm;
    if (use_gt) {
      lm.xy.assign(batch.landmarks.begin() + static_cast<std::int64_t>(n) * 2 * cfg_.n_align,
                   batch.landmarks.begin() + static_cast<std::int64_t>(n + 1) * 2 * cfg_.n_align);
      lm.inter_ocular = batch.inter_ocular[static_cast<size_t>(n)];
    } else {
      lm.xy.assign(out.landmarks.data() + static_cast<std::int64_t>(n) * 2 * cfg_.n_align,
                   out.landmarks.data() + static_cast<std::int64_t>(n + 1) * 2 * cfg_.n_align);
      const double dx = lm.xy[static_cast<size_t>(2 * cfg_.eye_left)] -
                        lm.xy[static_cast<size_t>(2 * cfg_.eye_right)];
      const double dy = lm.xy[static_cast<size_t>(2 * cfg_.eye_left + 1)] -
                        lm.xy[static_cast<size_t>(2 * cfg_.eye_right + 1)];
      lm.inter_ocular = std::max(std::sqrt(dx * dx + dy * dy), 1.0);
    }
    auto centers = au_centers(lm, cfg_.rules, cfg_.l);
    auto maps = init_attention(centers, cfg_.zeta, cfg_.xi, cfg_.l);
    for (int a = 0; a < cfg_.n_au; ++a)
      std::copy(maps[static_cast<size_t>(a)].begin(), maps[static_cast<size_t>(a)].end(),
                out.initial_maps[static_cast<size_t>(a)].data() +
                    static_cast<std::int64_t>(n) * s * s);
  }

  Tensor new_pool2 = padding_removal(tape, pool2, 3);
  const double zoom = static_cast<double>(s + 8) / s;

  std::vector<std::pair<double, Tensor>> er_terms;
  Tensor assembled;
  for (int a = 0; a < cfg_.n_au; ++a) {
    Tensor init_removed = padding_removal(tape, out.initial_maps[static_cast<size_t>(a)], 3);
    out.initial_removed.push_back(init_removed);
    Tensor zoomed = bilinear_resize(tape, init_removed, zoom);
    Tensor refined = refiners_[static_cast<size_t>(a)].forward(tape, zoomed, training);
    out.refined_maps.push_back(refined);
    er_terms.emplace_back(1.0, bce_consistency(tape, init_removed, refined, N));

    Tensor enhanced = scale_grad(tape, refined, cfg_.lambda3);
    Tensor masked = elementwise_mul(tape, new_pool2, enhanced);
    Tensor branch = local_branches_[static_cast<size_t>(a)].forward(tape, masked, training);
    assembled = assembled.defined() ? elementwise_sum(tape, assembled, branch) : branch;
  }

  Tensor cat = concat_channels(tape, {align_feat, global_feat, assembled});
  Tensor h = relu(tape, au_fc1_.forward(tape, flatten(tape, cat)));
  Tensor logits = au_fc2_.forward(tape, h);
  out.au_probs = au_occurrence_probs(tape, logits);

  out.e_r = weighted_sum(tape, er_terms);
  if (batch.has_truth()) {
    out.e_align = align_loss(tape, out.landmarks, batch.landmarks, batch.inter_ocular);
    out.e_softmax = softmax_loss(tape, out.au_probs, batch.labels, cfg_.au_weights);
    out.e_dice = dice_loss(tape, out.au_probs, batch.labels, cfg_.au_weights, cfg_.dice_eps);
    out.e_au = weighted_sum(tape, {{1.0, out.e_softmax}, {1.0, out.e_dice}});
    out.e_total = weighted_sum(
        tape, {{1.0, out.e_au}, {cfg_.lambda1, out.e_align}, {cfg_.lambda2, out.e_r}});
    out.has_losses = true;
  }
  return out;
}

void Network::backward(ForwardOutput& out) {
  if (!out.has_losses)
    throw std::runtime_error("Network::backward: forward was run without ground truth");
  out.tape.backward(out.e_total);
}

void Network::zero_grads() {
  for (NetParam& p : params_)
    if (!p.buffer) p.t.zero_grad();
}

std::uint64_t Network::module_hash(ModuleId m) const {
  std::uint64_t h = 1469598103934665603ull;
  for (const NetParam& p : params_) {
    if (p.module != m || p.buffer) continue;
    const unsigned char* bytes = reinterpret_cast<const unsigned char*>(p.t.data());
    const size_t nb = static_cast<size_t>(p.t.size()) * sizeof(double);
    for (size_t i = 0; i < nb; ++i) {
      h ^= bytes[i];
      h *= 1099511628211ull;
    }
  }
  return h;
}

namespace {

constexpr char kMagic[8] = {'J', 'A', 'A', 'C', 'K', 'P', 'T', '1'};

void write_u32(std::ostream& o, std::uint32_t v) {
  o.write(reinterpret_cast<const char*>(&v), 4);
}
std::uint32_t read_u32(std::istream& i) {
  std::uint32_t v = 0;
  i.read(reinterpret_cast<char*>(&v), 4);
  return v;
}

}  // namespace

void Network::save_checkpoint(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
  out.write(kMagic, 8);
  std::ostringstream cfg_text;
  for (const auto& [k, v] : cfg_.to_kv()) cfg_text << k << "=" << v << "\n";
  const std::string cfg_str = cfg_text.str();
  write_u32(out, static_cast<std::uint32_t>(cfg_str.size()));
  out.write(cfg_str.data(), static_cast<std::streamsize>(cfg_str.size()));
  write_u32(out, static_cast<std::uint32_t>(params_.size()));
  for (const NetParam& p : params_) {
    write_u32(out, static_cast<std::uint32_t>(p.name.size()));
    out.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    write_u32(out, static_cast<std::uint32_t>(p.t.ndim()));
    for (int i = 0; i < p.t.ndim(); ++i) write_u32(out, static_cast<std::uint32_t>(p.t.dim(i)));
    std::vector<float> buf(static_cast<size_t>(p.t.size()));
    for (std::int64_t i = 0; i < p.t.size(); ++i) buf[static_cast<size_t>(i)] =
        static_cast<float>(p.t[i]);
    out.write(reinterpret_cast<const char*>(buf.data()),
              static_cast<std::streamsize>(buf.size() * sizeof(float)));
  }
}

Network Network::load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kMagic, 8) != 0)
    throw std::runtime_error("not a checkpoint file: " + path);
  const std::uint32_t cfg_len = read_u32(in);
  std::string cfg_str(cfg_len, '\0');
  in.read(cfg_str.data(), cfg_len);
  std::map<std::string, std::string> kv;
  std::istringstream ss(cfg_str);
  std::string line;
  while (std::getline(ss, line)) {
    const auto eq = line.find('=');
    if (eq != std::string::npos) kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  Network net = build(NetConfig::from_kv(kv));

  std::map<std::string, Tensor> by_name;
  for (NetParam& p : net.params_) by_name[p.name] = p.t;

  const std::uint32_t n = read_u32(in);
  for (std::uint32_t e = 0; e < n; ++e) {
    const std::uint32_t name_len = read_u32(in);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    const std::uint32_t ndim = read_u32(in);
    Shape shape;
    for (std::uint32_t i = 0; i < ndim; ++i) shape.push_back(static_cast<int>(read_u32(in)));
    auto it = by_name.find(name);
    if (it == by_name.end())
      throw std::runtime_error("checkpoint entry '" + name + "' has no matching parameter");
    if (it->second.shape() != shape)
      throw std::runtime_error("checkpoint entry '" + name + "' shape mismatch");
    std::vector<float> buf(static_cast<size_t>(numel(shape)));
    in.read(reinterpret_cast<char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (!in) throw std::runtime_error("truncated checkpoint: " + path);
    for (size_t i = 0; i < buf.size(); ++i) it->second[static_cast<std::int64_t>(i)] = buf[i];
  }
  return net;
}

}  // namespace jaa
