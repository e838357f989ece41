#include "jaa/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace jaa {

namespace {

double clamp01(double p) { return std::clamp(p, kLogClampEps, 1.0 - kLogClampEps); }

}  // namespace

std::vector<double> compute_au_weights(const std::vector<double>& occurrence_rates) {
  const size_t n = occurrence_rates.size();
  if (n == 0) throw std::invalid_argument("compute_au_weights: empty rate list");
  double inv_sum = 0.0;
  for (double r : occurrence_rates) {
    if (r <= 0.0)
      throw std::invalid_argument(
          "compute_au_weights: occurrence rate must be positive; floor zero rates at "
          "1/#training-frames before calling");
    if (r > 1.0) throw std::invalid_argument("compute_au_weights: rate > 1");
    inv_sum += 1.0 / r;
  }
  std::vector<double> w(n);
  for (size_t i = 0; i < n; ++i)
    w[i] = (1.0 / occurrence_rates[i]) * static_cast<double>(n) / inv_sum;
  return w;
}

double softmax_loss_value(const std::vector<double>& truth, const std::vector<double>& pred,
                          const std::vector<double>& weights) {
  const size_t n = truth.size();
  double acc = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const double p = truth[i], ph = clamp01(pred[i]);
    acc += weights[i] * (p * std::log(ph) + (1.0 - p) * std::log(1.0 - ph));
  }
  return -acc / static_cast<double>(n);
}

double dice_loss_value(const std::vector<double>& truth, const std::vector<double>& pred,
                       const std::vector<double>& weights, double eps) {
  const size_t n = truth.size();
  double acc = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const double p = truth[i], ph = pred[i];
    acc += weights[i] * (1.0 - (2.0 * p * ph + eps) / (p * p + ph * ph + eps));
  }
  return acc / static_cast<double>(n);
}

double au_loss_value(const std::vector<double>& truth, const std::vector<double>& pred,
                     const std::vector<double>& weights, double eps) {
  return softmax_loss_value(truth, pred, weights) + dice_loss_value(truth, pred, weights, eps);
}

double align_loss_value(const std::vector<double>& truth, const std::vector<double>& pred,
                        double inter_ocular) {
  if (inter_ocular <= 0.0) throw std::invalid_argument("align_loss: inter-ocular must be > 0");
  double acc = 0.0;
  for (size_t i = 0; i < truth.size(); ++i) {
    const double d = truth[i] - pred[i];
    acc += d * d;
  }
  return acc / (2.0 * inter_ocular * inter_ocular);
}

double total_loss_value(double e_au, double e_align, double e_r, double lambda1, double lambda2) {
  return e_au + lambda1 * e_align + lambda2 * e_r;
}

Tensor au_occurrence_probs(Tape& tape, const Tensor& logits) {
  if (logits.ndim() != 2 || logits.dim(1) % 2 != 0)
    fail_shape("au_occurrence_probs", "expected [N, 2*n_au] logits, got " +
                                          shape_str(logits.shape()));
  const int N = logits.dim(0), n_au = logits.dim(1) / 2;
  Tensor out({N, n_au});
  for (int n = 0; n < N; ++n)
    for (int i = 0; i < n_au; ++i) {
      const double z_abs = logits[n * 2 * n_au + 2 * i];
      const double z_occ = logits[n * 2 * n_au + 2 * i + 1];
      out[n * n_au + i] = 1.0 / (1.0 + std::exp(z_abs - z_occ));
    }
  check_finite(out, "au_occurrence_probs");
  if (tape.enabled && logits.requires_grad()) {
    out.set_requires_grad(true);
    Tensor lc = logits, oc = out;
    tape.record([lc, oc, N, n_au]() mutable {
      lc.ensure_grad();
      for (int n = 0; n < N; ++n)
        for (int i = 0; i < n_au; ++i) {
          const double p = oc[n * n_au + i];
          const double g = oc.grad()[n * n_au + i] * p * (1.0 - p);
          lc.grad()[n * 2 * n_au + 2 * i + 1] += g;
          lc.grad()[n * 2 * n_au + 2 * i] -= g;
        }
    });
  }
  return out;
}

Tensor softmax_loss(Tape& tape, const Tensor& probs, const std::vector<double>& labels,
                    const std::vector<double>& weights) {
  const int N = probs.dim(0), n_au = probs.dim(1);
  if (labels.size() != static_cast<size_t>(N) * n_au || weights.size() != static_cast<size_t>(n_au))
    fail_shape("softmax_loss", "label/weight length mismatch");
  Tensor out({1});
  double acc = 0.0;
  for (int n = 0; n < N; ++n)
    for (int i = 0; i < n_au; ++i) {
      const double p = labels[static_cast<size_t>(n) * n_au + i];
      const double ph = clamp01(probs[n * n_au + i]);
      acc += weights[static_cast<size_t>(i)] *
             (p * std::log(ph) + (1.0 - p) * std::log(1.0 - ph));
    }
  out[0] = -acc / (static_cast<double>(n_au) * N);
  if (tape.enabled && probs.requires_grad()) {
    out.set_requires_grad(true);
    Tensor pc = probs, oc = out;
    auto lab = labels;
    auto w = weights;
    tape.record([pc, oc, lab, w, N, n_au]() mutable {
      pc.ensure_grad();
      const double scale = oc.grad()[0] / (static_cast<double>(n_au) * N);
      for (int n = 0; n < N; ++n)
        for (int i = 0; i < n_au; ++i) {
          const double p = lab[static_cast<size_t>(n) * n_au + i];
          const double ph = clamp01(pc[n * n_au + i]);
          pc.grad()[n * n_au + i] -=
              scale * w[static_cast<size_t>(i)] * (p / ph - (1.0 - p) / (1.0 - ph));
        }
    });
  }
  return out;
}

Tensor dice_loss(Tape& tape, const Tensor& probs, const std::vector<double>& labels,
                 const std::vector<double>& weights, double eps) {
  if (eps <= 0.0) throw std::invalid_argument("dice_loss: eps must be positive");
  const int N = probs.dim(0), n_au = probs.dim(1);
  if (labels.size() != static_cast<size_t>(N) * n_au || weights.size() != static_cast<size_t>(n_au))
    fail_shape("dice_loss", "label/weight length mismatch");
  Tensor out({1});
  double acc = 0.0;
  for (int n = 0; n < N; ++n)
    for (int i = 0; i < n_au; ++i) {
      const double p = labels[static_cast<size_t>(n) * n_au + i];
      const double ph = probs[n * n_au + i];
      acc += weights[static_cast<size_t>(i)] *
             (1.0 - (2.0 * p * ph + eps) / (p * p + ph * ph + eps));
    }
  out[0] = acc / (static_cast<double>(n_au) * N);
  if (tape.enabled && probs.requires_grad()) {
    out.set_requires_grad(true);
    Tensor pc = probs, oc = out;
    auto lab = labels;
    auto w = weights;
    tape.record([pc, oc, lab, w, eps, N, n_au]() mutable {
      pc.ensure_grad();
      const double scale = oc.grad()[0] / (static_cast<double>(n_au) * N);
      for (int n = 0; n < N; ++n)
        for (int i = 0; i < n_au; ++i) {
          const double p = lab[static_cast<size_t>(n) * n_au + i];
          const double ph = pc[n * n_au + i];
          const double den = p * p + ph * ph + eps;
          const double num = 2.0 * p * ph + eps;
          // d/dph of -(num/den)
          const double d = -(2.0 * p * den - num * 2.0 * ph) / (den * den);
          pc.grad()[n * n_au + i] += scale * w[static_cast<size_t>(i)] * d;
        }
    });
  }
  return out;
}

Tensor align_loss(Tape& tape, const Tensor& pred, const std::vector<double>& truth,
                  const std::vector<double>& d_o) {
  const int N = pred.dim(0), D = pred.dim(1);
  if (truth.size() != static_cast<size_t>(N) * D || d_o.size() != static_cast<size_t>(N))
    fail_shape("align_loss", "truth/d_o length mismatch");
  for (double d : d_o)
    if (d <= 0.0) throw std::invalid_argument("align_loss: inter-ocular must be > 0");
  Tensor out({1});
  double acc = 0.0;
  for (int n = 0; n < N; ++n) {
    double s = 0.0;
    for (int j = 0; j < D; ++j) {
      const double d = truth[static_cast<size_t>(n) * D + j] - pred[n * D + j];
      s += d * d;
    }
    acc += s / (2.0 * d_o[static_cast<size_t>(n)] * d_o[static_cast<size_t>(n)]);
  }
  out[0] = acc / N;
  if (tape.enabled && pred.requires_grad()) {
    out.set_requires_grad(true);
    Tensor pc = pred, oc = out;
    auto tr = truth;
    auto dv = d_o;
    tape.record([pc, oc, tr, dv, N, D]() mutable {
      pc.ensure_grad();
      for (int n = 0; n < N; ++n) {
        const double scale =
            oc.grad()[0] / (N * dv[static_cast<size_t>(n)] * dv[static_cast<size_t>(n)]);
        for (int j = 0; j < D; ++j)
          pc.grad()[n * D + j] += scale * (pc[n * D + j] - tr[static_cast<size_t>(n) * D + j]);
      }
    });
  }
  return out;
}

Tensor bce_consistency(Tape& tape, const Tensor& target, const Tensor& vhat, double normalizer) {
  if (target.shape() != vhat.shape())
    fail_shape("bce_consistency", shape_str(target.shape()) + " vs " + shape_str(vhat.shape()));
  Tensor out({1});
  double acc = 0.0;
  for (std::int64_t i = 0; i < vhat.size(); ++i) {
    const double v = target[i];
    const double vh = clamp01(vhat[i]);
    acc += v * std::log(vh) + (1.0 - v) * std::log(1.0 - vh);
  }
  out[0] = -acc / normalizer;
  if (tape.enabled && vhat.requires_grad()) {
    out.set_requires_grad(true);
    Tensor tc = target, vc = vhat, oc = out;
    tape.record([tc, vc, oc, normalizer]() mutable {
      vc.ensure_grad();
      const double scale = oc.grad()[0] / normalizer;
      for (std::int64_t i = 0; i < vc.size(); ++i) {
        const double v = tc[i];
        const double vh = clamp01(vc[i]);
        vc.grad()[i] -= scale * (v / vh - (1.0 - v) / (1.0 - vh));
      }
    });
  }
  return out;
}

}  // namespace jaa
