#include "jaa/attention.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace jaa {

namespace {

CenterSpec parse_center(const std::string& tok, int line_no) {
  CenterSpec c;
  std::vector<std::string> parts;
  std::stringstream ss(tok);
  std::string p;
  while (std::getline(ss, p, ':')) parts.push_back(p);
  try {
    if (parts.size() == 3 && parts[0] == "lm") {
      c.midpoint = false;
      c.i = std::stoi(parts[1]);
      c.dy = std::stod(parts[2]);
      return c;
    }
    if (parts.size() == 4 && parts[0] == "mid") {
      c.midpoint = true;
      c.i = std::stoi(parts[1]);
      c.j = std::stoi(parts[2]);
      c.dy = std::stod(parts[3]);
      return c;
    }
  } catch (const std::exception&) {
  }
  throw std::invalid_argument("rule table line " + std::to_string(line_no) +
                              ": bad center spec '" + tok + "' (want lm:<i>:<dy> or mid:<i>:<j>:<dy>)");
}

std::string center_str(const CenterSpec& c) {
  std::ostringstream os;
  if (c.midpoint)
    os << "mid:" << c.i << ":" << c.j << ":" << c.dy;
  else
    os << "lm:" << c.i << ":" << c.dy;
  return os.str();
}

}  // namespace

RuleTable load_rule_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open rule table: " + path);
  RuleTable table;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto h = line.find('#');
    if (h != std::string::npos) line = line.substr(0, h);
    std::istringstream ss(line);
    std::string kw;
    if (!(ss >> kw)) continue;
    if (kw != "au")
      throw std::invalid_argument("rule table line " + std::to_string(line_no) +
                                  ": expected 'au', got '" + kw + "'");
    AURule r;
    std::string t1, t2;
    if (!(ss >> r.au_id >> t1 >> t2))
      throw std::invalid_argument("rule table line " + std::to_string(line_no) +
                                  ": expected 'au <id> <center> <center>'");
    r.c1 = parse_center(t1, line_no);
    r.c2 = parse_center(t2, line_no);
    table.push_back(r);
  }
  return table;
}

void save_rule_table(const std::string& path, const RuleTable& table) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write rule table: " + path);
  out << "# au <id> <center1> <center2>; center = lm:<i>:<dy> | mid:<i>:<j>:<dy>\n";
  out << "# dy is a vertical offset in inter-ocular units, positive = down\n";
  for (const AURule& r : table)
    out << "au " << r.au_id << " " << center_str(r.c1) << " " << center_str(r.c2) << "\n";
}

// Best-effort center table for the 49-landmark layout (0-4/5-9 brows,
// 10-18 nose, 19-24/25-30 eyes, 31-48 mouth).
RuleTable default_rule_table_12au() {
  auto lm = [](int i, double dy) { return CenterSpec{false, i, 0, dy}; };
  auto mid = [](int i, int j, double dy) { return CenterSpec{true, i, j, dy}; };
  return {
      {1, lm(4, -0.25), lm(5, -0.25)},
      {2, lm(0, -0.25), lm(9, -0.25)},
      {4, lm(2, 0.15), lm(7, 0.15)},
      {6, mid(19, 22, 0.5), mid(25, 28, 0.5)},
      {7, mid(19, 22, 0.0), mid(25, 28, 0.0)},
      {10, lm(32, -0.15), lm(36, -0.15)},
      {12, lm(31, 0.0), lm(37, 0.0)},
      {14, lm(31, 0.1), lm(37, 0.1)},
      {15, lm(31, 0.2), lm(37, 0.2)},
      {17, mid(31, 40, 0.3), mid(37, 40, 0.3)},
      {23, lm(34, 0.0), lm(40, 0.0)},
      {24, mid(34, 40, 0.0), mid(34, 40, 0.0)},
  };
}

std::string rule_to_string(const AURule& rule) {
  std::ostringstream os;
  os.precision(17);
  os << "au " << rule.au_id << " " << center_str(rule.c1) << " " << center_str(rule.c2);
  return os.str();
}

AURule rule_from_string(const std::string& text) {
  std::istringstream ss(text);
  std::string kw, t1, t2;
  AURule r;
  if (!(ss >> kw >> r.au_id >> t1 >> t2) || kw != "au")
    throw std::invalid_argument("bad rule record: " + text);
  r.c1 = parse_center(t1, 0);
  r.c2 = parse_center(t2, 0);
  return r;
}

std::vector<std::array<double, 2>> au_centers(const LandmarkSet& lm, const RuleTable& rules,
                                              int l) {
  const int n = lm.count();
  const double s = l / 4.0;
  auto point = [&](const CenterSpec& c) -> std::array<double, 2> {
    if (c.i < 0 || c.i >= n || (c.midpoint && (c.j < 0 || c.j >= n)))
      throw std::invalid_argument("au_centers: rule references landmark index out of range (" +
                                  std::to_string(c.midpoint ? std::max(c.i, c.j) : c.i) +
                                  " with " + std::to_string(n) + " landmarks)");
    auto get = [&](int idx, int axis) {
      return std::clamp(lm.xy[static_cast<size_t>(2 * idx + axis)], 0.0,
                        static_cast<double>(l - 1));
    };
    double x = get(c.i, 0), y = get(c.i, 1);
    if (c.midpoint) {
      x = 0.5 * (x + get(c.j, 0));
      y = 0.5 * (y + get(c.j, 1));
    }
    y += c.dy * lm.inter_ocular;
    x /= 4.0;
    y /= 4.0;
    x = std::clamp(x, 0.0, s - 1.0);
    y = std::clamp(y, 0.0, s - 1.0);
    return {x, y};
  };
  std::vector<std::array<double, 2>> out;
  out.reserve(rules.size() * 2);
  for (const AURule& r : rules) {
    out.push_back(point(r.c1));
    out.push_back(point(r.c2));
  }
  return out;
}

std::vector<std::vector<double>> init_attention(
    const std::vector<std::array<double, 2>>& centers, double zeta, double xi, int l) {
  if (zeta <= 0.0 || xi < 0.0) throw std::invalid_argument("init_attention: need zeta>0, xi>=0");
  if (centers.size() % 2 != 0)
    throw std::invalid_argument("init_attention: expected 2 centers per AU");
  const int s = l / 4;
  const double width = zeta * s;
  const double half = width / 2.0;
  const size_t n_au = centers.size() / 2;
  std::vector<std::vector<double>> maps(n_au, std::vector<double>(static_cast<size_t>(s) * s, 0.0));
  for (size_t i = 0; i < n_au; ++i) {
    for (int k = 0; k < 2; ++k) {
      const double cx = centers[2 * i + k][0], cy = centers[2 * i + k][1];
      const int x0 = std::max(0, static_cast<int>(std::ceil(cx - half)));
      const int x1 = std::min(s - 1, static_cast<int>(std::floor(cx + half)));
      const int y0 = std::max(0, static_cast<int>(std::ceil(cy - half)));
      const int y1 = std::min(s - 1, static_cast<int>(std::floor(cy + half)));
      for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) {
          const double dx = std::abs(x - cx), dy = std::abs(y - cy);
          if (std::max(dx, dy) > half) continue;
          const double v = std::max(1.0 - (dx + dy) * xi / width, 0.0);
          double& cell = maps[i][static_cast<size_t>(y) * s + x];
          cell = std::max(cell, v);
        }
    }
  }
  return maps;
}

AttentionRefiner::AttentionRefiner(int width, std::mt19937_64& rng)
    : c1(1, width, 3, 1, 0, true, Act::ReLU, rng),
      c2(width, width, 3, 1, 0, true, Act::ReLU, rng),
      c3(width, width, 3, 1, 0, true, Act::ReLU, rng),
      c4(width, 1, 3, 1, 0, false, Act::Sigmoid, rng) {}

Tensor AttentionRefiner::forward(Tape& tape, const Tensor& zoomed, bool training) {
  Tensor y = c1.forward(tape, zoomed, training);
  y = c2.forward(tape, y, training);
  y = c3.forward(tape, y, training);
  return c4.forward(tape, y, training);
}

void AttentionRefiner::collect(const std::string& prefix, ParamList& out) {
  c1.collect(prefix + ".conv1", out);
  c2.collect(prefix + ".conv2", out);
  c3.collect(prefix + ".conv3", out);
  c4.collect(prefix + ".conv4", out);
}

LocalBranch::LocalBranch(int channels, std::mt19937_64& rng)
    : s1(channels, channels, 2, rng), s2(channels, channels, 2, rng),
      s3(channels, channels, 2, rng) {}

Tensor LocalBranch::forward(Tape& tape, const Tensor& x, bool training) {
  Tensor y = s1.forward(tape, x, training);
  y = maxpool2(tape, y, true);
  y = s2.forward(tape, y, training);
  y = maxpool2(tape, y, true);
  y = s3.forward(tape, y, training);
  return maxpool2(tape, y, true);
}

void LocalBranch::collect(const std::string& prefix, ParamList& out) {
  s1.collect(prefix + ".stack1", out);
  s2.collect(prefix + ".stack2", out);
  s3.collect(prefix + ".stack3", out);
}

}  // namespace jaa
