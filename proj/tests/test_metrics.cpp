#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <random>

#include "jaa/metrics.hpp"

using namespace jaa;

TEST_CASE("frame F1 hand counts") {
  // Single AU over 4 frames: truth 1100, pred 1010 -> p = r = F1 = 0.5.
  F1Result r = f1_frame({1, 1, 0, 0}, {1, 0, 1, 0}, 1);
  CHECK(r.precision[0] == doctest::Approx(0.5));
  CHECK(r.recall[0] == doctest::Approx(0.5));
  CHECK(r.f1[0] == doctest::Approx(0.5));
  CHECK(r.avg == doctest::Approx(0.5));

  F1Result perfect = f1_frame({1, 0, 1, 1}, {1, 0, 1, 1}, 1);
  CHECK(perfect.f1[0] == doctest::Approx(1.0));

  F1Result none = f1_frame({1, 1, 0, 0}, {0, 0, 0, 0}, 1);
  CHECK(none.f1[0] == 0.0);
  CHECK(none.degenerate[0]);
}

TEST_CASE("accuracy hand counts") {
  AccuracyResult a = accuracy({1, 0, 1, 0}, {1, 0, 1, 0}, 1);
  CHECK(a.accuracy[0] == doctest::Approx(1.0));
  AccuracyResult inv = accuracy({1, 0, 1, 0}, {0, 1, 0, 1}, 1);
  CHECK(inv.accuracy[0] == doctest::Approx(0.0));
  AccuracyResult three = accuracy({1, 0, 1, 0}, {1, 0, 1, 1}, 1);
  CHECK(three.accuracy[0] == doctest::Approx(0.75));
}

TEST_CASE("the two F1 formulations agree on random matrices") {
  std::mt19937_64 rng(0);
  std::bernoulli_distribution coin(0.4);
  for (int trial = 0; trial < 100; ++trial) {
    const int frames = 3 + static_cast<int>(rng() % 30);
    const int n_au = 1 + static_cast<int>(rng() % 5);
    std::vector<double> truth, pred;
    for (int i = 0; i < frames * n_au; ++i) {
      truth.push_back(coin(rng) ? 1.0 : 0.0);
      pred.push_back(coin(rng) ? 1.0 : 0.0);
    }
    F1Result r = f1_frame(truth, pred, n_au);
    for (int a = 0; a < n_au; ++a) {
      int tp = 0, fp = 0, fn = 0;
      for (int f = 0; f < frames; ++f) {
        const bool t = truth[static_cast<size_t>(f) * n_au + a] > 0.5;
        const bool p = pred[static_cast<size_t>(f) * n_au + a] > 0.5;
        tp += t && p;
        fp += !t && p;
        fn += t && !p;
      }
      const double alt = (2 * tp + fp + fn) == 0 ? 0.0 : 2.0 * tp / (2.0 * tp + fp + fn);
      CHECK(r.f1[static_cast<size_t>(a)] == doctest::Approx(alt).epsilon(1e-12));
    }
  }
}

TEST_CASE("metrics are invariant under frame permutation") {
  std::mt19937_64 rng(1);
  std::bernoulli_distribution coin(0.5);
  const int frames = 12, n_au = 3;
  std::vector<double> truth, pred;
  for (int i = 0; i < frames * n_au; ++i) {
    truth.push_back(coin(rng) ? 1.0 : 0.0);
    pred.push_back(coin(rng) ? 1.0 : 0.0);
  }
  std::vector<int> perm(frames);
  for (int i = 0; i < frames; ++i) perm[static_cast<size_t>(i)] = i;
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<double> t2(truth.size()), p2(pred.size());
  for (int f = 0; f < frames; ++f)
    for (int a = 0; a < n_au; ++a) {
      t2[static_cast<size_t>(f) * n_au + a] =
          truth[static_cast<size_t>(perm[static_cast<size_t>(f)]) * n_au + a];
      p2[static_cast<size_t>(f) * n_au + a] =
          pred[static_cast<size_t>(perm[static_cast<size_t>(f)]) * n_au + a];
    }
  CHECK(f1_frame(truth, pred, n_au).avg == doctest::Approx(f1_frame(t2, p2, n_au).avg));
  CHECK(accuracy(truth, pred, n_au).avg == doctest::Approx(accuracy(t2, p2, n_au).avg));
}

TEST_CASE("alignment metrics with the 10% boundary rule") {
  // One landmark, d_o = 10.
  AlignmentResult exact = alignment_metrics({5, 5}, {5, 5}, 1, {10});
  CHECK(exact.mean_error == doctest::Approx(0.0));
  CHECK(exact.failure_rate == doctest::Approx(0.0));

  // Error exactly 0.1*d_o in x: mean error 10%, NOT a failure.
  AlignmentResult edge = alignment_metrics({5, 5}, {6, 5}, 1, {10});
  CHECK(edge.mean_error == doctest::Approx(10.0));
  CHECK(edge.failure_rate == doctest::Approx(0.0));

  // One face at 15% among four perfect faces -> failure rate 20%.
  std::vector<double> truth, pred, d_o;
  for (int f = 0; f < 5; ++f) {
    truth.insert(truth.end(), {5, 5});
    pred.insert(pred.end(), {f == 0 ? 6.5 : 5.0, 5.0});
    d_o.push_back(10);
  }
  AlignmentResult mix = alignment_metrics(truth, pred, 1, d_o);
  CHECK(mix.failure_rate == doctest::Approx(0.2));
  CHECK(mix.per_face_mean_error[0] == doctest::Approx(15.0));

  // Non-positive d_o faces are skipped, not counted.
  AlignmentResult skip = alignment_metrics({5, 5, 5, 5}, {6, 5, 5, 5}, 1, {10, 0});
  CHECK(skip.skipped == 1);
  CHECK(skip.per_face_mean_error.size() == 1);
}

TEST_CASE("subject-exclusive folds") {
  std::vector<std::string> subjects = {"a", "b", "c", "d", "e", "f", "a", "b"};
  FoldSplit s1 = make_folds(subjects, 3, 42);
  FoldSplit s2 = make_folds(subjects, 3, 42);
  CHECK(s1.fold_of == s2.fold_of);
  CHECK(s1.k == 3);
  REQUIRE(s1.fold_of.size() == 6);
  std::vector<int> counts(3, 0);
  for (const auto& [subj, fold] : s1.fold_of) {
    REQUIRE(fold >= 0);
    REQUIRE(fold < 3);
    ++counts[static_cast<size_t>(fold)];
  }
  for (int c : counts) CHECK(c == 2);

  CHECK_THROWS(make_folds({"x", "y"}, 3, 0));
}

TEST_CASE("intensity dichotomization") {
  auto bin = dichotomize({0, 1, 2, 5}, 2.0);
  CHECK(bin == std::vector<double>({0, 0, 1, 1}));
}

TEST_CASE("report contains per-AU rows and machine-readable lines") {
  F1Result f1 = f1_frame({1, 1, 0, 0, 1, 0}, {1, 0, 0, 0, 1, 1}, 2);
  AccuracyResult acc = accuracy({1, 1, 0, 0, 1, 0}, {1, 0, 0, 0, 1, 1}, 2);
  AlignmentResult al = alignment_metrics({5, 5}, {6, 5}, 1, {10});
  std::string rep = metrics_report(f1, acc, &al);
  CHECK(rep.find("Avg") != std::string::npos);
  CHECK(rep.find("f1_avg=") != std::string::npos);
  CHECK(rep.find("mean_error=") != std::string::npos);
}
