#include "jaa/dataio.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

namespace fs = std::filesystem;

namespace jaa {

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace

Manifest load_manifest(const std::string& path, bool fail_fast, bool check_images) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open manifest: " + path);
  const fs::path base = fs::path(path).parent_path();

  Manifest m;
  std::string line;
  int line_no = 0;
  if (!std::getline(in, line)) return m;  // empty file -> empty manifest
  ++line_no;
  const auto header = split_csv(line);
  int n_lm_cols = 0, n_au_cols = 0;
  if (header.size() < 2 || header[0] != "image" || header[1] != "subject")
    throw std::runtime_error(path + ":1: header must start with image,subject");
  for (size_t i = 2; i < header.size(); ++i) {
    if (header[i].rfind("lm", 0) == 0)
      ++n_lm_cols;
    else if (header[i].rfind("au", 0) == 0)
      ++n_au_cols;
    else
      throw std::runtime_error(path + ":1: unknown column '" + header[i] + "'");
  }
  if (n_lm_cols % 2 != 0)
    throw std::runtime_error(path + ":1: odd number of landmark columns");
  m.n_align = n_lm_cols / 2;
  m.n_au = n_au_cols;

  auto report = [&](int ln, const std::string& msg) {
    if (fail_fast) throw std::runtime_error(path + ":" + std::to_string(ln) + ": " + msg);
    m.errors.push_back({ln, msg});
  };

  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = split_csv(line);
    if (f.size() != header.size()) {
      report(line_no, "expected " + std::to_string(header.size()) + " fields, got " +
                          std::to_string(f.size()));
      continue;
    }
    SampleRecord r;
    r.image = f[0];
    r.subject = f[1];
    bool ok = true;
    try {
      for (int i = 0; i < n_lm_cols; ++i) r.landmarks.push_back(std::stod(f[2 + i]));
      for (int i = 0; i < n_au_cols; ++i) r.labels.push_back(std::stod(f[2 + n_lm_cols + i]));
    } catch (const std::exception&) {
      report(line_no, "non-numeric field");
      ok = false;
    }
    if (ok && check_images && !fs::exists(base / r.image)) {
      report(line_no, "missing image file: " + r.image);
      ok = false;
    }
    if (ok) {
      r.image = (base / r.image).string();
      m.records.push_back(std::move(r));
    }
  }
  return m;
}

void write_manifest(const std::string& path, const std::vector<SampleRecord>& records,
                    int n_align, int n_au) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write manifest: " + path);
  out << "image,subject";
  for (int i = 0; i < n_align; ++i) out << ",lm" << i << "_x,lm" << i << "_y";
  for (int i = 0; i < n_au; ++i) out << ",au" << i;
  out << "\n";
  out.precision(17);
  for (const SampleRecord& r : records) {
    if (r.landmarks.size() != static_cast<size_t>(2 * n_align))
      throw std::invalid_argument("write_manifest: record has " +
                                  std::to_string(r.landmarks.size()) + " coordinates, expected " +
                                  std::to_string(2 * n_align));
    if (r.labels.size() != static_cast<size_t>(n_au))
      throw std::invalid_argument("write_manifest: label count mismatch");
    out << r.image << "," << r.subject;
    for (double v : r.landmarks) out << "," << v;
    for (double v : r.labels) out << "," << v;
    out << "\n";
  }
}

namespace {

void skip_pnm_ws(std::istream& in) {
  for (;;) {
    int c = in.peek();
    if (c == '#') {
      std::string dummy;
      std::getline(in, dummy);
    } else if (std::isspace(c)) {
      in.get();
    } else {
      return;
    }
  }
}

int read_pnm_int(std::istream& in) {
  skip_pnm_ws(in);
  int v;
  if (!(in >> v)) throw std::runtime_error("corrupt PNM header");
  return v;
}

}  // namespace

Tensor load_image(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open image: " + path);
  std::string magic;
  in >> magic;
  const bool ascii = (magic == "P2" || magic == "P3");
  const bool gray = (magic == "P2" || magic == "P5");
  if (magic != "P2" && magic != "P3" && magic != "P5" && magic != "P6")
    throw std::runtime_error("unsupported image format '" + magic + "' in " + path);
  const int w = read_pnm_int(in);
  const int h = read_pnm_int(in);
  const int maxv = read_pnm_int(in);
  if (w <= 0 || h <= 0 || maxv <= 0 || maxv > 255)
    throw std::runtime_error("corrupt PNM header in " + path);
  const int ch = gray ? 1 : 3;
  std::vector<double> pix(static_cast<size_t>(w) * h * ch);
  if (ascii) {
    for (auto& v : pix) v = read_pnm_int(in) / static_cast<double>(maxv);
  } else {
    in.get();  // single whitespace after maxval
    std::vector<unsigned char> raw(pix.size());
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (in.gcount() != static_cast<std::streamsize>(raw.size()))
      throw std::runtime_error("truncated image data in " + path);
    for (size_t i = 0; i < raw.size(); ++i) pix[i] = raw[i] / static_cast<double>(maxv);
  }
  Tensor img({3, h, w});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c)
        img[(static_cast<std::int64_t>(c) * h + y) * w + x] =
            gray ? pix[static_cast<size_t>(y) * w + x]
                 : pix[(static_cast<size_t>(y) * w + x) * 3 + c];
  return img;
}

void save_ppm(const std::string& path, const Tensor& img) {
  if (img.ndim() != 3 || img.dim(0) != 3)
    fail_shape("save_ppm", "expected [3,H,W], got " + shape_str(img.shape()));
  const int h = img.dim(1), w = img.dim(2);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write image: " + path);
  out << "P6\n" << w << " " << h << "\n255\n";
  std::vector<unsigned char> raw(static_cast<size_t>(w) * h * 3);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) {
        const double v = img[(static_cast<std::int64_t>(c) * h + y) * w + x];
        raw[(static_cast<size_t>(y) * w + x) * 3 + c] =
            static_cast<unsigned char>(std::clamp(std::lround(255.0 * v), 0L, 255L));
      }
  out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
}

void save_pgm(const std::string& path, const std::vector<double>& values, int h, int w) {
  if (values.size() != static_cast<size_t>(h) * w)
    fail_shape("save_pgm", "value count does not match " + std::to_string(h) + "x" +
                               std::to_string(w));
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write image: " + path);
  out << "P5\n" << w << " " << h << "\n255\n";
  std::vector<unsigned char> raw(values.size());
  for (size_t i = 0; i < values.size(); ++i)
    raw[i] = static_cast<unsigned char>(std::clamp(std::lround(255.0 * values[i]), 0L, 255L));
  out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
}

double inter_ocular_distance(const std::vector<double>& landmarks, int eye_left, int eye_right) {
  const double dx = landmarks[static_cast<size_t>(2 * eye_left)] -
                    landmarks[static_cast<size_t>(2 * eye_right)];
  const double dy = landmarks[static_cast<size_t>(2 * eye_left + 1)] -
                    landmarks[static_cast<size_t>(2 * eye_right + 1)];
  return std::sqrt(dx * dx + dy * dy);
}

namespace {

void draw_blob(Tensor& img, int channel, double cx, double cy, double radius, double value) {
  const int h = img.dim(1), w = img.dim(2);
  const int x0 = std::max(0, static_cast<int>(cx - 2 * radius));
  const int x1 = std::min(w - 1, static_cast<int>(cx + 2 * radius));
  const int y0 = std::max(0, static_cast<int>(cy - 2 * radius));
  const int y1 = std::min(h - 1, static_cast<int>(cy + 2 * radius));
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) {
      const double d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
      const double g = value * std::exp(-d2 / (2.0 * radius * radius));
      double& px = img[(static_cast<std::int64_t>(channel) * h + y) * w + x];
      px = std::min(1.0, px + g);
    }
}

}  // namespace

SynthDataset synth_dataset(const std::string& dir, int n_subjects, int frames_per_subject,
                           std::uint64_t seed, const SynthConfig& cfg) {
  fs::create_directories(fs::path(dir) / "images");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  const int S = cfg.image_size;
  SynthDataset ds;
  std::vector<double> positives(static_cast<size_t>(cfg.n_au), 0.0);

  // canonical landmark layout: two eyes, then points on a lower arc (mouth)
  std::vector<double> canon(static_cast<size_t>(2 * cfg.n_align));
  canon[static_cast<size_t>(2 * cfg.eye_left)] = 0.30 * S;
  canon[static_cast<size_t>(2 * cfg.eye_left) + 1] = 0.35 * S;
  canon[static_cast<size_t>(2 * cfg.eye_right)] = 0.70 * S;
  canon[static_cast<size_t>(2 * cfg.eye_right) + 1] = 0.35 * S;
  int arc = 0;
  for (int i = 0; i < cfg.n_align; ++i) {
    if (i == cfg.eye_left || i == cfg.eye_right) continue;
    const double t = (arc + 1.0) / (cfg.n_align - 1);
    canon[static_cast<size_t>(2 * i)] = (0.3 + 0.4 * t) * S;
    canon[static_cast<size_t>(2 * i) + 1] = (0.62 + 0.08 * std::sin(3.14159 * t)) * S;
    ++arc;
  }

  for (int s = 0; s < n_subjects; ++s) {
    const double sub_dx = (unit(rng) - 0.5) * 0.06 * S;
    const double sub_dy = (unit(rng) - 0.5) * 0.06 * S;
    const double sub_tone = 0.10 + 0.10 * unit(rng);
    for (int f = 0; f < frames_per_subject; ++f) {
      SampleRecord r;
      r.subject = "s" + std::to_string(s);
      r.image = "images/s" + std::to_string(s) + "_f" + std::to_string(f) + ".ppm";

      r.landmarks.resize(canon.size());
      for (size_t i = 0; i < canon.size(); ++i)
        r.landmarks[i] = std::clamp(
            canon[i] + ((i % 2 == 0) ? sub_dx : sub_dy) + (unit(rng) - 0.5) * 0.04 * S, 1.0,
            S - 2.0);

      r.labels.resize(static_cast<size_t>(cfg.n_au));
      for (int a = 0; a < cfg.n_au; ++a) {
        const double rate = cfg.n_au > 1 ? 0.35 + 0.3 * a / (cfg.n_au - 1) : 0.5;
        r.labels[static_cast<size_t>(a)] = unit(rng) < rate ? 1.0 : 0.0;
        positives[static_cast<size_t>(a)] += r.labels[static_cast<size_t>(a)];
      }

      Tensor img({3, S, S}, 0.0);
      // face backdrop
      draw_blob(img, 0, 0.5 * S, 0.5 * S, 0.35 * S, sub_tone);
      draw_blob(img, 1, 0.5 * S, 0.5 * S, 0.35 * S, sub_tone);
      draw_blob(img, 2, 0.5 * S, 0.5 * S, 0.35 * S, 0.5 * sub_tone);
      // landmark blobs
      for (int i = 0; i < cfg.n_align; ++i)
        draw_blob(img, 1, r.landmarks[static_cast<size_t>(2 * i)],
                  r.landmarks[static_cast<size_t>(2 * i) + 1], 0.03 * S, 0.8);
      // AU indicator blobs along the bottom band; brightness encodes the label
      for (int a = 0; a < cfg.n_au; ++a) {
        const double cx = (a + 0.5) * S / cfg.n_au;
        const double cy = 0.85 * S;
        const double v = r.labels[static_cast<size_t>(a)] > 0.5 ? 0.9 : 0.25;
        draw_blob(img, a % 3, cx, cy, 0.05 * S, v);
      }
      save_ppm((fs::path(dir) / r.image).string(), img);
      ds.records.push_back(std::move(r));
    }
  }

  const double total = static_cast<double>(n_subjects) * frames_per_subject;
  ds.rates.resize(static_cast<size_t>(cfg.n_au));
  for (int a = 0; a < cfg.n_au; ++a) ds.rates[static_cast<size_t>(a)] = positives[static_cast<size_t>(a)] / total;

  write_manifest((fs::path(dir) / "manifest.csv").string(), ds.records, cfg.n_align, cfg.n_au);
  std::ofstream rf(fs::path(dir) / "rates.txt");
  rf.precision(17);
  for (double r : ds.rates) rf << r << "\n";
  return ds;
}

}  // namespace jaa
