#pragma once

#include <vector>

#include "jaa/tensor.hpp"

namespace jaa {

// w_i = (1/r_i) * n_au / sum_j(1/r_j); mean(w) == 1.
std::vector<double> compute_au_weights(const std::vector<double>& occurrence_rates);

// Single-sample hand-checkable values (truth/pred of length n_au).
double softmax_loss_value(const std::vector<double>& truth, const std::vector<double>& pred,
                          const std::vector<double>& weights);
double dice_loss_value(const std::vector<double>& truth, const std::vector<double>& pred,
                       const std::vector<double>& weights, double eps);
double au_loss_value(const std::vector<double>& truth, const std::vector<double>& pred,
                     const std::vector<double>& weights, double eps);
// truth/pred are 2*n_align coordinate vectors.
double align_loss_value(const std::vector<double>& truth, const std::vector<double>& pred,
                        double inter_ocular);
double total_loss_value(double e_au, double e_align, double e_r, double lambda1, double lambda2);

// ---- differentiable versions (batch-averaged over N) ----

// logits: [N, 2*n_au] with per-AU (absence, occurrence) pairs; output [N, n_au]
// occurrence probabilities via the pairwise softmax.
Tensor au_occurrence_probs(Tape& tape, const Tensor& logits);

// labels: N*n_au flat {0,1}; weights: n_au.
Tensor softmax_loss(Tape& tape, const Tensor& probs, const std::vector<double>& labels,
                    const std::vector<double>& weights);
Tensor dice_loss(Tape& tape, const Tensor& probs, const std::vector<double>& labels,
                 const std::vector<double>& weights, double eps);

// pred: [N, 2*n_align]; truth flat N*2*n_align; d_o per sample.
Tensor align_loss(Tape& tape, const Tensor& pred, const std::vector<double>& truth,
                  const std::vector<double>& d_o);

// Sum over all elements of -[v log vhat + (1-v) log(1-vhat)], divided by
// normalizer. target is treated as constant.
Tensor bce_consistency(Tape& tape, const Tensor& target, const Tensor& vhat, double normalizer);

inline constexpr double kLogClampEps = 1e-12;

}  // namespace jaa
