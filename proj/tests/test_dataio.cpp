#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "jaa/dataio.hpp"

using namespace jaa;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("manifest round trip") {
  TempDir dir("jaa_manifest_rt");
  std::vector<SampleRecord> recs;
  recs.push_back({"img0.ppm", "s0", {1.5, 2.25, 3, 4}, {1, 0}});
  recs.push_back({"img1.ppm", "s1", {5, 6, 7.125, 8}, {0, 1}});
  const std::string path = (dir.path / "manifest.csv").string();
  write_manifest(path, recs, 2, 2);
  Manifest m = load_manifest(path, true, false);
  REQUIRE(m.records.size() == 2);
  CHECK(m.n_align == 2);
  CHECK(m.n_au == 2);
  CHECK(m.records[0].subject == "s0");
  CHECK(m.records[0].landmarks == recs[0].landmarks);
  CHECK(m.records[1].labels == recs[1].labels);

  SUBCASE("empty manifest loads as empty list") {
    const std::string p2 = (dir.path / "empty.csv").string();
    write_manifest(p2, {}, 2, 2);
    Manifest e = load_manifest(p2, true, false);
    CHECK(e.records.empty());
  }
}

TEST_CASE("manifest validation catches bad records") {
  TempDir dir("jaa_manifest_bad");
  const std::string path = (dir.path / "manifest.csv").string();
  {
    std::ofstream out(path);
    out << "image,subject,lm0_x,lm0_y,lm1_x,lm1_y,au0\n";
    out << "a.ppm,s0,1,2,3,4,1\n";
    out << "b.ppm,s0,1,2,3,1\n";  // 97-of-98 analogue: one coordinate short
  }
  CHECK_THROWS(load_manifest(path, true, false));
  Manifest m = load_manifest(path, false, false);
  CHECK(m.records.size() == 1);
  REQUIRE(m.errors.size() == 1);
  CHECK(m.errors[0].line == 3);

  SUBCASE("missing image file is reported") {
    CHECK_THROWS(load_manifest(path, true, true));
  }
}

TEST_CASE("image save/load round trip and grayscale broadcast") {
  TempDir dir("jaa_img_rt");
  Tensor img({3, 2, 2});
  const double vals[] = {0, 1.0 / 3, 2.0 / 3, 1};
  for (int c = 0; c < 3; ++c)
    for (int i = 0; i < 4; ++i) img[c * 4 + i] = vals[i] * (c == 0 ? 1.0 : 0.5);
  const std::string path = (dir.path / "t.ppm").string();
  save_ppm(path, img);
  Tensor back = load_image(path);
  REQUIRE(back.shape() == img.shape());
  for (std::int64_t i = 0; i < img.size(); ++i)
    CHECK(std::abs(back[i] - std::round(img[i] * 255) / 255.0) < 1e-9);

  const std::string gpath = (dir.path / "g.pgm").string();
  save_pgm(gpath, {0.0, 0.5, 1.0, 0.25}, 2, 2);
  Tensor g = load_image(gpath);
  REQUIRE(g.shape() == Shape{3, 2, 2});
  for (int i = 0; i < 4; ++i) {
    CHECK(g[i] == g[4 + i]);
    CHECK(g[i] == g[8 + i]);
  }

  CHECK_THROWS(load_image((dir.path / "missing.ppm").string()));
}

TEST_CASE("solid red image loads as a ones channel") {
  TempDir dir("jaa_img_red");
  Tensor img({3, 2, 2});
  for (int i = 0; i < 4; ++i) img[i] = 1.0;
  const std::string path = (dir.path / "red.ppm").string();
  save_ppm(path, img);
  Tensor back = load_image(path);
  for (int i = 0; i < 4; ++i) {
    CHECK(back[i] == 1.0);
    CHECK(back[4 + i] == 0.0);
    CHECK(back[8 + i] == 0.0);
  }
}

TEST_CASE("synthetic dataset is deterministic with correct bookkeeping") {
  TempDir dir1("jaa_synth_a");
  TempDir dir2("jaa_synth_b");
  SynthConfig cfg;
  cfg.image_size = 32;
  cfg.n_align = 3;
  cfg.n_au = 2;
  SynthDataset a = synth_dataset(dir1.path.string(), 4, 3, 77, cfg);
  SynthDataset b = synth_dataset(dir2.path.string(), 4, 3, 77, cfg);
  REQUIRE(a.records.size() == 12);
  REQUIRE(a.records.size() == b.records.size());
  for (size_t i = 0; i < a.records.size(); ++i) {
    CHECK(a.records[i].landmarks == b.records[i].landmarks);
    CHECK(a.records[i].labels == b.records[i].labels);
    Tensor ia = load_image((dir1.path / a.records[i].image).string());
    Tensor ib = load_image((dir2.path / b.records[i].image).string());
    REQUIRE(ia.size() == ib.size());
    for (std::int64_t k = 0; k < ia.size(); ++k) REQUIRE(ia[k] == ib[k]);
  }

  // Emitted rates are the empirical label frequencies.
  for (int au = 0; au < cfg.n_au; ++au) {
    double freq = 0;
    for (const auto& r : a.records) freq += r.labels[static_cast<size_t>(au)];
    freq /= static_cast<double>(a.records.size());
    CHECK(a.rates[static_cast<size_t>(au)] == doctest::Approx(freq).epsilon(1e-12));
  }

  // The generated manifest is itself loadable with image checks on.
  Manifest m = load_manifest((dir1.path / "manifest.csv").string(), true, true);
  CHECK(m.records.size() == 12);
  CHECK(m.n_align == 3);
  CHECK(m.n_au == 2);
}

TEST_CASE("pixel linear probe beats chance on the synthetic labels") {
  // Logistic regression on raw pixels, trained on the full set: the AU
  // indicator blobs make this separable well above chance.
  TempDir dir("jaa_synth_probe");
  SynthConfig cfg;
  cfg.image_size = 32;
  cfg.n_align = 3;
  cfg.n_au = 2;
  SynthDataset d = synth_dataset(dir.path.string(), 6, 6, 5, cfg);
  std::vector<Tensor> images;
  for (const auto& r : d.records) images.push_back(load_image((dir.path / r.image).string()));
  const std::int64_t dim = images[0].size();
  for (int au = 0; au < 2; ++au) {
    std::vector<double> w(static_cast<size_t>(dim), 0.0);
    double b = 0;
    for (int it = 0; it < 200; ++it) {
      for (size_t n = 0; n < images.size(); ++n) {
        double z = b;
        for (std::int64_t i = 0; i < dim; ++i) z += w[static_cast<size_t>(i)] * images[n][i];
        const double p = 1.0 / (1.0 + std::exp(-z));
        const double g = p - d.records[n].labels[static_cast<size_t>(au)];
        for (std::int64_t i = 0; i < dim; ++i) w[static_cast<size_t>(i)] -= 0.05 * g * images[n][i];
        b -= 0.05 * g;
      }
    }
    int tp = 0, fp = 0, fn = 0;
    for (size_t n = 0; n < images.size(); ++n) {
      double z = b;
      for (std::int64_t i = 0; i < dim; ++i) z += w[static_cast<size_t>(i)] * images[n][i];
      const int pred = z > 0 ? 1 : 0;
      const int truth = static_cast<int>(d.records[n].labels[static_cast<size_t>(au)]);
      tp += pred && truth;
      fp += pred && !truth;
      fn += !pred && truth;
    }
    const double f1 = tp == 0 ? 0.0 : 2.0 * tp / (2.0 * tp + fp + fn);
    INFO("au ", au, " f1 ", f1);
    CHECK(f1 > 0.8);
  }
}
