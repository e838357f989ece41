#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace jaa {

struct F1Result {
  std::vector<double> precision, recall, f1;
  std::vector<bool> degenerate;  // zero-denominator F1 reported as 0
  double avg = 0.0;
};

struct AccuracyResult {
  std::vector<double> accuracy;
  double avg = 0.0;
};

struct AlignmentResult {
  std::vector<double> per_face_mean_error;  // percent of inter-ocular distance
  double mean_error = 0.0;                  // percent
  double failure_rate = 0.0;                // fraction of faces with error > 10%
  int skipped = 0;                          // faces with non-positive d_o
};

// truth/pred: frames x n_au binary matrices, flat row-major.
F1Result f1_frame(const std::vector<double>& truth, const std::vector<double>& pred, int n_au);
AccuracyResult accuracy(const std::vector<double>& truth, const std::vector<double>& pred,
                        int n_au);

// truth/pred: faces x 2*n_align coordinates, flat; d_o per face.
AlignmentResult alignment_metrics(const std::vector<double>& truth,
                                  const std::vector<double>& pred, int n_align,
                                  const std::vector<double>& d_o);

struct FoldSplit {
  std::map<std::string, int> fold_of;
  int k = 0;
};

FoldSplit make_folds(const std::vector<std::string>& subject_ids, int k, std::uint64_t seed);

std::vector<double> dichotomize(const std::vector<double>& intensities, double threshold);

// Aligned text table plus machine-readable key=value lines (per-AU + Avg).
std::string metrics_report(const F1Result& f1, const AccuracyResult& acc,
                           const AlignmentResult* align);

}  // namespace jaa
