#include "jaa/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>

namespace jaa {

F1Result f1_frame(const std::vector<double>& truth, const std::vector<double>& pred, int n_au) {
  if (truth.size() != pred.size() || n_au <= 0 || truth.size() % n_au != 0)
    throw std::invalid_argument("f1_frame: shape mismatch");
  const size_t frames = truth.size() / n_au;
  F1Result r;
  r.precision.assign(static_cast<size_t>(n_au), 0.0);
  r.recall.assign(static_cast<size_t>(n_au), 0.0);
  r.f1.assign(static_cast<size_t>(n_au), 0.0);
  r.degenerate.assign(static_cast<size_t>(n_au), false);
  for (int a = 0; a < n_au; ++a) {
    std::int64_t tp = 0, fp = 0, fn = 0;
    for (size_t f = 0; f < frames; ++f) {
      const bool t = truth[f * n_au + a] > 0.5;
      const bool p = pred[f * n_au + a] > 0.5;
      tp += (t && p);
      fp += (!t && p);
      fn += (t && !p);
    }
    const size_t ai = static_cast<size_t>(a);
    if (tp + fp > 0) r.precision[ai] = static_cast<double>(tp) / (tp + fp);
    if (tp + fn > 0) r.recall[ai] = static_cast<double>(tp) / (tp + fn);
    const double p = r.precision[ai], rc = r.recall[ai];
    if (p + rc > 0.0) {
      r.f1[ai] = 2.0 * p * rc / (p + rc);
    } else {
      r.f1[ai] = 0.0;
      r.degenerate[ai] = true;
    }
    r.avg += r.f1[ai];
  }
  r.avg /= n_au;
  return r;
}

AccuracyResult accuracy(const std::vector<double>& truth, const std::vector<double>& pred,
                        int n_au) {
  if (truth.size() != pred.size() || n_au <= 0 || truth.size() % n_au != 0)
    throw std::invalid_argument("accuracy: shape mismatch");
  const size_t frames = truth.size() / n_au;
  AccuracyResult r;
  r.accuracy.assign(static_cast<size_t>(n_au), 0.0);
  if (frames == 0) return r;
  for (int a = 0; a < n_au; ++a) {
    std::int64_t ok = 0;
    for (size_t f = 0; f < frames; ++f)
      ok += (truth[f * n_au + a] > 0.5) == (pred[f * n_au + a] > 0.5);
    r.accuracy[static_cast<size_t>(a)] = static_cast<double>(ok) / frames;
    r.avg += r.accuracy[static_cast<size_t>(a)];
  }
  r.avg /= n_au;
  return r;
}

AlignmentResult alignment_metrics(const std::vector<double>& truth,
                                  const std::vector<double>& pred, int n_align,
                                  const std::vector<double>& d_o) {
  if (truth.size() != pred.size() || n_align <= 0 ||
      truth.size() != d_o.size() * 2 * static_cast<size_t>(n_align))
    throw std::invalid_argument("alignment_metrics: shape mismatch");
  AlignmentResult r;
  int failures = 0;
  for (size_t f = 0; f < d_o.size(); ++f) {
    if (d_o[f] <= 0.0) {
      ++r.skipped;
      continue;
    }
    double err = 0.0;
    for (int j = 0; j < n_align; ++j) {
      const size_t o = f * 2 * n_align + 2 * j;
      const double dx = truth[o] - pred[o];
      const double dy = truth[o + 1] - pred[o + 1];
      err += std::sqrt(dx * dx + dy * dy);
    }
    const double pct = 100.0 * err / (n_align * d_o[f]);
    r.per_face_mean_error.push_back(pct);
    r.mean_error += pct;
    if (pct > 10.0) ++failures;
  }
  const size_t n = r.per_face_mean_error.size();
  if (n > 0) {
    r.mean_error /= static_cast<double>(n);
    r.failure_rate = static_cast<double>(failures) / static_cast<double>(n);
  }
  return r;
}

FoldSplit make_folds(const std::vector<std::string>& subject_ids, int k, std::uint64_t seed) {
  std::set<std::string> uniq(subject_ids.begin(), subject_ids.end());
  if (k <= 0 || static_cast<size_t>(k) > uniq.size())
    throw std::invalid_argument("make_folds: k=" + std::to_string(k) + " with " +
                                std::to_string(uniq.size()) + " subjects");
  std::vector<std::string> subjects(uniq.begin(), uniq.end());
  std::mt19937_64 rng(seed);
  std::shuffle(subjects.begin(), subjects.end(), rng);
  FoldSplit s;
  s.k = k;
  for (size_t i = 0; i < subjects.size(); ++i)
    s.fold_of[subjects[i]] = static_cast<int>(i % static_cast<size_t>(k));
  return s;
}

std::vector<double> dichotomize(const std::vector<double>& intensities, double threshold) {
  std::vector<double> out(intensities.size());
  for (size_t i = 0; i < intensities.size(); ++i)
    out[i] = intensities[i] >= threshold ? 1.0 : 0.0;
  return out;
}

std::string metrics_report(const F1Result& f1, const AccuracyResult& acc,
                           const AlignmentResult* align) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(1);
  os << "AU    F1-Frame  Accuracy\n";
  for (size_t i = 0; i < f1.f1.size(); ++i)
    os << std::left << std::setw(6) << i << std::setw(10) << 100.0 * f1.f1[i] << std::setw(10)
       << 100.0 * acc.accuracy[i] << (f1.degenerate[i] ? " (degenerate F1)" : "") << "\n";
  os << std::left << std::setw(6) << "Avg" << std::setw(10) << 100.0 * f1.avg << std::setw(10)
     << 100.0 * acc.avg << "\n";
  if (align) {
    os << "Mean Error   " << align->mean_error << "\n";
    os << "Failure Rate " << 100.0 * align->failure_rate << "\n";
  }
  os << std::setprecision(6);
  for (size_t i = 0; i < f1.f1.size(); ++i)
    os << "f1_au" << i << "=" << 100.0 * f1.f1[i] << "\n";
  os << "f1_avg=" << 100.0 * f1.avg << "\n";
  for (size_t i = 0; i < acc.accuracy.size(); ++i)
    os << "acc_au" << i << "=" << 100.0 * acc.accuracy[i] << "\n";
  os << "acc_avg=" << 100.0 * acc.avg << "\n";
  if (align) {
    os << "mean_error=" << align->mean_error << "\n";
    os << "failure_rate=" << 100.0 * align->failure_rate << "\n";
  }
  return os.str();
}

}  // namespace jaa
