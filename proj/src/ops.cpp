#include "jaa/ops.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <memory>

#include "im2col.hpp"

namespace jaa {

namespace {

using detail::col2im_acc;
using detail::im2col;

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRM = Eigen::Map<RowMat>;
using CMapRM = Eigen::Map<const RowMat>;

bool track(const Tape& tape, std::initializer_list<const Tensor*> ins) {
  if (!tape.enabled) return false;
  for (const Tensor* t : ins)
    if (t->requires_grad()) return true;
  return false;
}

void require_4d(const Tensor& x, const char* op) {
  if (x.ndim() != 4) fail_shape(op, "expected 4-d input, got " + shape_str(x.shape()));
}

}  // namespace

int conv_out_size(int in, int kernel, int stride, int padding) {
  return (in + 2 * padding - kernel) / stride + 1;
}

Tensor conv2d(Tape& tape, const Tensor& x, const Tensor& w, const Tensor& b,
              const ConvSpec& spec) {
  require_4d(x, "conv2d");
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  if (C != spec.in_channels)
    fail_shape("conv2d", "input channels " + std::to_string(C) + " != spec.in_channels " +
                             std::to_string(spec.in_channels));
  const Shape expect_w = {spec.out_channels, spec.in_channels, spec.kernel_h, spec.kernel_w};
  if (w.shape() != expect_w)
    fail_shape("conv2d", "weight shape " + shape_str(w.shape()) + " != " + shape_str(expect_w));
  if (b.shape() != Shape{spec.out_channels})
    fail_shape("conv2d", "bias shape " + shape_str(b.shape()) + " != [" +
                             std::to_string(spec.out_channels) + "]");
  const int OH = conv_out_size(H, spec.kernel_h, spec.stride, spec.padding);
  const int OW = conv_out_size(W, spec.kernel_w, spec.stride, spec.padding);
  if (OH <= 0 || OW <= 0)
    fail_shape("conv2d", "non-positive output size for input " + shape_str(x.shape()));

  const int K = C * spec.kernel_h * spec.kernel_w;
  const int M = OH * OW;
  const int Cout = spec.out_channels;

  Tensor out({N, Cout, OH, OW});
  std::vector<double> col(static_cast<size_t>(K) * M);
  CMapRM Wm(w.data(), Cout, K);
  Eigen::Map<const Eigen::VectorXd> bv(b.data(), Cout);
  for (int n = 0; n < N; ++n) {
    im2col(x.data() + static_cast<std::int64_t>(n) * C * H * W, C, H, W, spec.kernel_h,
           spec.kernel_w, spec.stride, spec.padding, OH, OW, col.data());
    CMapRM colm(col.data(), K, M);
    MapRM Y(out.data() + static_cast<std::int64_t>(n) * Cout * M, Cout, M);
    Y.noalias() = Wm * colm;
    Y.colwise() += bv;
  }
  check_finite(out, "conv2d");

  if (track(tape, {&x, &w, &b})) {
    out.set_requires_grad(true);
    Tensor xc = x, wc = w, bc = b, oc = out;
    ConvSpec sp = spec;
    tape.record([xc, wc, bc, oc, sp, N, C, H, W, OH, OW, K, M, Cout]() mutable {
      std::vector<double> col(static_cast<size_t>(K) * M);
      const bool need_x = xc.requires_grad();
      const bool need_w = wc.requires_grad();
      const bool need_b = bc.requires_grad();
      if (need_x) xc.ensure_grad();
      if (need_w) wc.ensure_grad();
      if (need_b) bc.ensure_grad();
      CMapRM Wm(wc.data(), Cout, K);
      for (int n = 0; n < N; ++n) {
        CMapRM dY(oc.grad() + static_cast<std::int64_t>(n) * Cout * M, Cout, M);
        if (need_w || need_x) {
          if (need_w) {
            im2col(xc.data() + static_cast<std::int64_t>(n) * C * H * W, C, H, W, sp.kernel_h,
                   sp.kernel_w, sp.stride, sp.padding, OH, OW, col.data());
            CMapRM colm(col.data(), K, M);
            MapRM dW(wc.grad(), Cout, K);
            dW.noalias() += dY * colm.transpose();
          }
          if (need_x) {
            RowMat dcol = Wm.transpose() * dY;
            col2im_acc(dcol.data(), C, H, W, sp.kernel_h, sp.kernel_w, sp.stride, sp.padding, OH,
                       OW, xc.grad() + static_cast<std::int64_t>(n) * C * H * W);
          }
        }
        if (need_b) {
          Eigen::Map<Eigen::VectorXd> db(bc.grad(), Cout);
          db += dY.rowwise().sum();
        }
      }
    });
  }
  return out;
}

Tensor maxpool2(Tape& tape, const Tensor& x, bool allow_odd) {
  require_4d(x, "maxpool2");
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  if (!allow_odd && (H % 2 != 0 || W % 2 != 0))
    fail_shape("maxpool2", "odd spatial dims " + shape_str(x.shape()));
  const int OH = H / 2, OW = W / 2;
  if (OH < 1 || OW < 1) fail_shape("maxpool2", "input too small " + shape_str(x.shape()));

  Tensor out({N, C, OH, OW});
  auto argmax = std::make_shared<std::vector<std::int64_t>>(static_cast<size_t>(out.size()));
  std::int64_t o = 0;
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      const double* plane = x.data() + (static_cast<std::int64_t>(n) * C + c) * H * W;
      for (int oh = 0; oh < OH; ++oh)
        for (int ow = 0; ow < OW; ++ow, ++o) {
          double best = -1e308;
          std::int64_t besti = 0;
          for (int di = 0; di < 2; ++di)
            for (int dj = 0; dj < 2; ++dj) {
              const std::int64_t idx = static_cast<std::int64_t>(2 * oh + di) * W + (2 * ow + dj);
              if (plane[idx] > best) {
                best = plane[idx];
                besti = idx;
              }
            }
          out[o] = best;
          (*argmax)[static_cast<size_t>(o)] =
              (static_cast<std::int64_t>(n) * C + c) * H * W + besti;
        }
    }
  check_finite(out, "maxpool2");

  if (track(tape, {&x})) {
    out.set_requires_grad(true);
    Tensor xc = x, oc = out;
    tape.record([xc, oc, argmax]() mutable {
      xc.ensure_grad();
      for (std::int64_t i = 0; i < oc.size(); ++i)
        xc.grad()[(*argmax)[static_cast<size_t>(i)]] += oc.grad()[i];
    });
  }
  return out;
}

Tensor relu(Tape& tape, const Tensor& x) {
  Tensor out(x.shape());
  for (std::int64_t i = 0; i < x.size(); ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
  if (track(tape, {&x})) {
    out.set_requires_grad(true);
    Tensor xc = x, oc = out;
    tape.record([xc, oc]() mutable {
      xc.ensure_grad();
      for (std::int64_t i = 0; i < xc.size(); ++i)
        if (xc[i] > 0.0) xc.grad()[i] += oc.grad()[i];
    });
  }
  return out;
}

Tensor sigmoid(Tape& tape, const Tensor& x) {
  Tensor out(x.shape());
  for (std::int64_t i = 0; i < x.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-x[i]));
  check_finite(out, "sigmoid");
  if (track(tape, {&x})) {
    out.set_requires_grad(true);
    Tensor xc = x, oc = out;
    tape.record([xc, oc]() mutable {
      xc.ensure_grad();
      for (std::int64_t i = 0; i < xc.size(); ++i)
        xc.grad()[i] += oc[i] * (1.0 - oc[i]) * oc.grad()[i];
    });
  }
  return out;
}

Tensor fully_connected(Tape& tape, const Tensor& x, const Tensor& w, const Tensor& b) {
  if (x.ndim() != 2) fail_shape("fully_connected", "expected 2-d input, got " + shape_str(x.shape()));
  const int N = x.dim(0), F = x.dim(1);
  if (w.ndim() != 2 || w.dim(1) != F)
    fail_shape("fully_connected", "weight " + shape_str(w.shape()) + " incompatible with input " +
                                      shape_str(x.shape()));
  const int O = w.dim(0);
  if (b.shape() != Shape{O})
    fail_shape("fully_connected", "bias shape " + shape_str(b.shape()));

  Tensor out({N, O});
  CMapRM X(x.data(), N, F), Wm(w.data(), O, F);
  Eigen::Map<const Eigen::VectorXd> bv(b.data(), O);
  MapRM Y(out.data(), N, O);
  Y.noalias() = X * Wm.transpose();
  Y.rowwise() += bv.transpose();
  check_finite(out, "fully_connected");

  if (track(tape, {&x, &w, &b})) {
    out.set_requires_grad(true);
    Tensor xc = x, wc = w, bc = b, oc = out;
    tape.record([xc, wc, bc, oc, N, F, O]() mutable {
      CMapRM dY(oc.grad(), N, O);
      if (wc.requires_grad()) {
        wc.ensure_grad();
        CMapRM X(xc.data(), N, F);
        MapRM dW(wc.grad(), O, F);
        dW.noalias() += dY.transpose() * X;
      }
      if (bc.requires_grad()) {
        bc.ensure_grad();
        Eigen::Map<Eigen::VectorXd> db(bc.grad(), O);
        db += dY.colwise().sum().transpose();
      }
      if (xc.requires_grad()) {
        xc.ensure_grad();
        CMapRM Wm(wc.data(), O, F);
        MapRM dX(xc.grad(), N, F);
        dX.noalias() += dY * Wm;
      }
    });
  }
  return out;
}

Tensor flatten(Tape& tape, const Tensor& x) {
  require_4d(x, "flatten");
  const int N = x.dim(0);
  const int F = static_cast<int>(x.size() / N);
  Tensor out = Tensor::from({N, F}, x.values());
  if (track(tape, {&x})) {
    out.set_requires_grad(true);
    Tensor xc = x, oc = out;
    tape.record([xc, oc]() mutable {
      xc.ensure_grad();
      for (std::int64_t i = 0; i < xc.size(); ++i) xc.grad()[i] += oc.grad()[i];
    });
  }
  return out;
}

Tensor concat_channels(Tape& tape, const std::vector<Tensor>& xs) {
  if (xs.empty()) fail_shape("concat_channels", "empty input list");
  const int N = xs[0].dim(0), H = xs[0].dim(2), W = xs[0].dim(3);
  int Ctot = 0;
  for (const Tensor& t : xs) {
    require_4d(t, "concat_channels");
    if (t.dim(0) != N || t.dim(2) != H || t.dim(3) != W)
      fail_shape("concat_channels", "mismatched shape " + shape_str(t.shape()));
    Ctot += t.dim(1);
  }
  Tensor out({N, Ctot, H, W});
  const std::int64_t hw = static_cast<std::int64_t>(H) * W;
  int coff = 0;
  for (const Tensor& t : xs) {
    const int C = t.dim(1);
    for (int n = 0; n < N; ++n)
      std::copy(t.data() + static_cast<std::int64_t>(n) * C * hw,
                t.data() + static_cast<std::int64_t>(n + 1) * C * hw,
                out.data() + (static_cast<std::int64_t>(n) * Ctot + coff) * hw);
    coff += C;
  }

  bool any = false;
  for (const Tensor& t : xs) any = any || t.requires_grad();
  if (tape.enabled && any) {
    out.set_requires_grad(true);
    std::vector<Tensor> xc = xs;
    Tensor oc = out;
    tape.record([xc, oc, N, Ctot, hw]() mutable {
      int coff = 0;
      for (Tensor& t : xc) {
        const int C = t.dim(1);
        if (t.requires_grad()) {
          t.ensure_grad();
          for (int n = 0; n < N; ++n) {
            const double* src = oc.grad() + (static_cast<std::int64_t>(n) * Ctot + coff) * hw;
            double* dst = t.grad() + static_cast<std::int64_t>(n) * C * hw;
            for (std::int64_t i = 0; i < C * hw; ++i) dst[i] += src[i];
          }
        }
        coff += C;
      }
    });
  }
  return out;
}

Tensor elementwise_mul(Tape& tape, const Tensor& a, const Tensor& b) {
  const bool broadcast = a.shape() != b.shape();
  if (broadcast) {
    if (a.ndim() != 4 || b.ndim() != 4 || b.dim(1) != 1 || a.dim(0) != b.dim(0) ||
        a.dim(2) != b.dim(2) || a.dim(3) != b.dim(3))
      fail_shape("elementwise_mul",
                 shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  Tensor out(a.shape());
  if (!broadcast) {
    for (std::int64_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
  } else {
    const int N = a.dim(0), C = a.dim(1);
    const std::int64_t hw = static_cast<std::int64_t>(a.dim(2)) * a.dim(3);
    for (int n = 0; n < N; ++n)
      for (int c = 0; c < C; ++c) {
        const double* ap = a.data() + (static_cast<std::int64_t>(n) * C + c) * hw;
        const double* bp = b.data() + static_cast<std::int64_t>(n) * hw;
        double* op = out.data() + (static_cast<std::int64_t>(n) * C + c) * hw;
        for (std::int64_t i = 0; i < hw; ++i) op[i] = ap[i] * bp[i];
      }
  }
  if (track(tape, {&a, &b})) {
    out.set_requires_grad(true);
    Tensor ac = a, bc = b, oc = out;
    tape.record([ac, bc, oc, broadcast]() mutable {
      if (!broadcast) {
        if (ac.requires_grad()) {
          ac.ensure_grad();
          for (std::int64_t i = 0; i < ac.size(); ++i) ac.grad()[i] += bc[i] * oc.grad()[i];
        }
        if (bc.requires_grad()) {
          bc.ensure_grad();
          for (std::int64_t i = 0; i < bc.size(); ++i) bc.grad()[i] += ac[i] * oc.grad()[i];
        }
      } else {
        const int N = ac.dim(0), C = ac.dim(1);
        const std::int64_t hw = static_cast<std::int64_t>(ac.dim(2)) * ac.dim(3);
        if (ac.requires_grad()) ac.ensure_grad();
        if (bc.requires_grad()) bc.ensure_grad();
        for (int n = 0; n < N; ++n)
          for (int c = 0; c < C; ++c) {
            const std::int64_t ao = (static_cast<std::int64_t>(n) * C + c) * hw;
            const std::int64_t bo = static_cast<std::int64_t>(n) * hw;
            for (std::int64_t i = 0; i < hw; ++i) {
              if (ac.requires_grad()) ac.grad()[ao + i] += bc[bo + i] * oc.grad()[ao + i];
              if (bc.requires_grad()) bc.grad()[bo + i] += ac[ao + i] * oc.grad()[ao + i];
            }
          }
      }
    });
  }
  return out;
}

Tensor elementwise_sum(Tape& tape, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape())
    fail_shape("elementwise_sum", shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  Tensor out(a.shape());
  for (std::int64_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
  if (track(tape, {&a, &b})) {
    out.set_requires_grad(true);
    Tensor ac = a, bc = b, oc = out;
    tape.record([ac, bc, oc]() mutable {
      if (ac.requires_grad()) {
        ac.ensure_grad();
        for (std::int64_t i = 0; i < ac.size(); ++i) ac.grad()[i] += oc.grad()[i];
      }
      if (bc.requires_grad()) {
        bc.ensure_grad();
        for (std::int64_t i = 0; i < bc.size(); ++i) bc.grad()[i] += oc.grad()[i];
      }
    });
  }
  return out;
}

namespace {
struct Interp {
  std::vector<int> i0, i1;
  std::vector<double> f;  // weight on i1
};

Interp interp_axis(int in, int out) {
  Interp p;
  p.i0.resize(static_cast<size_t>(out));
  p.i1.resize(static_cast<size_t>(out));
  p.f.resize(static_cast<size_t>(out));
  for (int o = 0; o < out; ++o) {
    double s = (o + 0.5) * static_cast<double>(in) / out - 0.5;
    int a = static_cast<int>(std::floor(s));
    double f = s - a;
    if (a < 0) {
      a = 0;
      f = 0.0;
    }
    if (a >= in - 1) {
      a = in - 1;
      f = 0.0;
    }
    p.i0[static_cast<size_t>(o)] = a;
    p.i1[static_cast<size_t>(o)] = std::min(a + 1, in - 1);
    p.f[static_cast<size_t>(o)] = f;
  }
  return p;
}
}  // namespace

Tensor bilinear_resize(Tape& tape, const Tensor& x, double alpha) {
  require_4d(x, "bilinear_resize");
  if (alpha <= 0.0) fail_shape("bilinear_resize", "alpha must be positive");
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int OH = static_cast<int>(std::lround(alpha * H));
  const int OW = static_cast<int>(std::lround(alpha * W));
  if (OH < 1 || OW < 1) fail_shape("bilinear_resize", "output size < 1");

  auto ph = std::make_shared<Interp>(interp_axis(H, OH));
  auto pw = std::make_shared<Interp>(interp_axis(W, OW));
  Tensor out({N, C, OH, OW});
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      const double* src = x.data() + (static_cast<std::int64_t>(n) * C + c) * H * W;
      double* dst = out.data() + (static_cast<std::int64_t>(n) * C + c) * OH * OW;
      for (int oh = 0; oh < OH; ++oh) {
        const int h0 = ph->i0[static_cast<size_t>(oh)], h1 = ph->i1[static_cast<size_t>(oh)];
        const double fh = ph->f[static_cast<size_t>(oh)];
        for (int ow = 0; ow < OW; ++ow) {
          const int w0 = pw->i0[static_cast<size_t>(ow)], w1 = pw->i1[static_cast<size_t>(ow)];
          const double fw = pw->f[static_cast<size_t>(ow)];
          dst[oh * OW + ow] = (1 - fh) * (1 - fw) * src[h0 * W + w0] +
                              (1 - fh) * fw * src[h0 * W + w1] +
                              fh * (1 - fw) * src[h1 * W + w0] + fh * fw * src[h1 * W + w1];
        }
      }
    }

  if (track(tape, {&x})) {
    out.set_requires_grad(true);
    Tensor xc = x, oc = out;
    tape.record([xc, oc, ph, pw, N, C, H, W, OH, OW]() mutable {
      xc.ensure_grad();
      for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
          double* dx = xc.grad() + (static_cast<std::int64_t>(n) * C + c) * H * W;
          const double* dout = oc.grad() + (static_cast<std::int64_t>(n) * C + c) * OH * OW;
          for (int oh = 0; oh < OH; ++oh) {
            const int h0 = ph->i0[static_cast<size_t>(oh)], h1 = ph->i1[static_cast<size_t>(oh)];
            const double fh = ph->f[static_cast<size_t>(oh)];
            for (int ow = 0; ow < OW; ++ow) {
              const int w0 = pw->i0[static_cast<size_t>(ow)], w1 = pw->i1[static_cast<size_t>(ow)];
              const double fw = pw->f[static_cast<size_t>(ow)];
              const double g = dout[oh * OW + ow];
              dx[h0 * W + w0] += (1 - fh) * (1 - fw) * g;
              dx[h0 * W + w1] += (1 - fh) * fw * g;
              dx[h1 * W + w0] += fh * (1 - fw) * g;
              dx[h1 * W + w1] += fh * fw * g;
            }
          }
        }
    });
  }
  return out;
}

Tensor center_crop(Tape& tape, const Tensor& x, double beta) {
  require_4d(x, "center_crop");
  if (beta <= 0.0 || beta > 1.0) fail_shape("center_crop", "beta must be in (0,1]");
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int OH = static_cast<int>(std::lround(beta * H));
  const int OW = static_cast<int>(std::lround(beta * W));
  if (OH < 1 || OW < 1) fail_shape("center_crop", "cropped size < 1");
  const int h0 = (H - OH) / 2, w0 = (W - OW) / 2;

  Tensor out({N, C, OH, OW});
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      const double* src = x.data() + (static_cast<std::int64_t>(n) * C + c) * H * W;
      double* dst = out.data() + (static_cast<std::int64_t>(n) * C + c) * OH * OW;
      for (int oh = 0; oh < OH; ++oh)
        std::copy(src + (h0 + oh) * W + w0, src + (h0 + oh) * W + w0 + OW, dst + oh * OW);
    }

  if (track(tape, {&x})) {
    out.set_requires_grad(true);
    Tensor xc = x, oc = out;
    tape.record([xc, oc, N, C, H, W, OH, OW, h0, w0]() mutable {
      xc.ensure_grad();
      for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
          double* dx = xc.grad() + (static_cast<std::int64_t>(n) * C + c) * H * W;
          const double* dout = oc.grad() + (static_cast<std::int64_t>(n) * C + c) * OH * OW;
          for (int oh = 0; oh < OH; ++oh)
            for (int ow = 0; ow < OW; ++ow) dx[(h0 + oh) * W + w0 + ow] += dout[oh * OW + ow];
        }
    });
  }
  return out;
}

Tensor padding_removal(Tape& tape, const Tensor& x, int pad_cells) {
  require_4d(x, "padding_removal");
  const int H = x.dim(2), W = x.dim(3);
  if (H != W) fail_shape("padding_removal", "expected square map, got " + shape_str(x.shape()));
  if (pad_cells < 0) fail_shape("padding_removal", "pad_cells must be non-negative");
  if (pad_cells == 0) return scale_grad(tape, x, 1.0);
  if (2 * pad_cells >= H) fail_shape("padding_removal", "pad_cells too large for side " +
                                                            std::to_string(H));
  const double alpha = static_cast<double>(H + 2 * pad_cells) / H;
  const double beta = static_cast<double>(H) / (H + 2 * pad_cells);
  Tensor zoomed = bilinear_resize(tape, x, alpha);
  return center_crop(tape, zoomed, beta);
}

Tensor scale_grad(Tape& tape, const Tensor& x, double factor) {
  Tensor out = Tensor::from(x.shape(), x.values());
  if (track(tape, {&x})) {
    out.set_requires_grad(true);
    Tensor xc = x, oc = out;
    tape.record([xc, oc, factor]() mutable {
      xc.ensure_grad();
      for (std::int64_t i = 0; i < xc.size(); ++i) xc.grad()[i] += factor * oc.grad()[i];
    });
  }
  return out;
}

Tensor weighted_sum(Tape& tape, const std::vector<std::pair<double, Tensor>>& terms) {
  Tensor out({1});
  double acc = 0.0;
  bool any = false;
  for (const auto& [w, t] : terms) {
    if (t.size() != 1) fail_shape("weighted_sum", "terms must be scalars");
    acc += w * t[0];
    any = any || t.requires_grad();
  }
  out[0] = acc;
  if (tape.enabled && any) {
    out.set_requires_grad(true);
    auto tc = terms;
    Tensor oc = out;
    tape.record([tc, oc]() mutable {
      for (auto& [w, t] : tc) {
        if (t.requires_grad()) {
          t.ensure_grad();
          t.grad()[0] += w * oc.grad()[0];
        }
      }
    });
  }
  return out;
}

BatchNorm::BatchNorm(int channels) {
  gamma = Tensor({channels}, 1.0);
  beta = Tensor({channels}, 0.0);
  gamma.set_requires_grad(true);
  beta.set_requires_grad(true);
  running_mean = Tensor({channels}, 0.0);
  running_var = Tensor({channels}, 1.0);
}

Tensor BatchNorm::forward(Tape& tape, const Tensor& x, bool training) {
  require_4d(x, "batch_norm");
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  if (gamma.shape() != Shape{C})
    fail_shape("batch_norm", "gamma length " + shape_str(gamma.shape()) + " != channels " +
                                 std::to_string(C));
  const std::int64_t hw = static_cast<std::int64_t>(H) * W;
  const std::int64_t m = static_cast<std::int64_t>(N) * hw;

  Tensor out(x.shape());
  if (!training) {
    for (int c = 0; c < C; ++c) {
      const double inv = 1.0 / std::sqrt(running_var[c] + eps);
      const double mu = running_mean[c];
      const double g = gamma[c], bt = beta[c];
      for (int n = 0; n < N; ++n) {
        const std::int64_t off = (static_cast<std::int64_t>(n) * C + c) * hw;
        for (std::int64_t i = 0; i < hw; ++i)
          out[off + i] = g * (x[off + i] - mu) * inv + bt;
      }
    }
    check_finite(out, "batch_norm");
    if (track(tape, {&x, &gamma, &beta})) {
      out.set_requires_grad(true);
      Tensor xc = x, gc = gamma, bc = beta, oc = out;
      Tensor rm = running_mean.clone(), rv = running_var.clone();
      double e = eps;
      tape.record([xc, gc, bc, oc, rm, rv, e, N, C, hw]() mutable {
        if (xc.requires_grad()) xc.ensure_grad();
        if (gc.requires_grad()) gc.ensure_grad();
        if (bc.requires_grad()) bc.ensure_grad();
        for (int c = 0; c < C; ++c) {
          const double inv = 1.0 / std::sqrt(rv[c] + e);
          const double mu = rm[c];
          for (int n = 0; n < N; ++n) {
            const std::int64_t off = (static_cast<std::int64_t>(n) * C + c) * hw;
            for (std::int64_t i = 0; i < hw; ++i) {
              const double dy = oc.grad()[off + i];
              if (gc.requires_grad()) gc.grad()[c] += dy * (xc[off + i] - mu) * inv;
              if (bc.requires_grad()) bc.grad()[c] += dy;
              if (xc.requires_grad()) xc.grad()[off + i] += dy * gc[c] * inv;
            }
          }
        }
      });
    }
    return out;
  }

  auto mean = std::make_shared<std::vector<double>>(static_cast<size_t>(C), 0.0);
  auto var = std::make_shared<std::vector<double>>(static_cast<size_t>(C), 0.0);
  auto xhat = std::make_shared<std::vector<double>>(static_cast<size_t>(x.size()));
  for (int c = 0; c < C; ++c) {
    double mu = 0.0;
    for (int n = 0; n < N; ++n) {
      const std::int64_t off = (static_cast<std::int64_t>(n) * C + c) * hw;
      for (std::int64_t i = 0; i < hw; ++i) mu += x[off + i];
    }
    mu /= static_cast<double>(m);
    double vv = 0.0;
    for (int n = 0; n < N; ++n) {
      const std::int64_t off = (static_cast<std::int64_t>(n) * C + c) * hw;
      for (std::int64_t i = 0; i < hw; ++i) {
        const double d = x[off + i] - mu;
        vv += d * d;
      }
    }
    vv /= static_cast<double>(m);
    (*mean)[static_cast<size_t>(c)] = mu;
    (*var)[static_cast<size_t>(c)] = vv;
    const double inv = 1.0 / std::sqrt(vv + eps);
    for (int n = 0; n < N; ++n) {
      const std::int64_t off = (static_cast<std::int64_t>(n) * C + c) * hw;
      for (std::int64_t i = 0; i < hw; ++i) {
        const double xh = (x[off + i] - mu) * inv;
        (*xhat)[static_cast<size_t>(off + i)] = xh;
        out[off + i] = gamma[c] * xh + beta[c];
      }
    }
    running_mean[c] =
        momentum * running_mean[c] + (1.0 - momentum) * mu;
    running_var[c] =
        momentum * running_var[c] + (1.0 - momentum) * vv;
  }
  check_finite(out, "batch_norm");

  if (track(tape, {&x, &gamma, &beta})) {
    out.set_requires_grad(true);
    Tensor xc = x, gc = gamma, bc = beta, oc = out;
    double e = eps;
    tape.record([xc, gc, bc, oc, mean, var, xhat, e, N, C, hw, m]() mutable {
      if (xc.requires_grad()) xc.ensure_grad();
      if (gc.requires_grad()) gc.ensure_grad();
      if (bc.requires_grad()) bc.ensure_grad();
      for (int c = 0; c < C; ++c) {
        double sum_dy = 0.0, sum_dy_xh = 0.0;
        for (int n = 0; n < N; ++n) {
          const std::int64_t off = (static_cast<std::int64_t>(n) * C + c) * hw;
          for (std::int64_t i = 0; i < hw; ++i) {
            const double dy = oc.grad()[off + i];
            sum_dy += dy;
            sum_dy_xh += dy * (*xhat)[static_cast<size_t>(off + i)];
          }
        }
        if (gc.requires_grad()) gc.grad()[c] += sum_dy_xh;
        if (bc.requires_grad()) bc.grad()[c] += sum_dy;
        if (xc.requires_grad()) {
          const double inv = 1.0 / std::sqrt((*var)[static_cast<size_t>(c)] + e);
          const double scale = gc[c] * inv;
          const double md = sum_dy / static_cast<double>(m);
          const double mdx = sum_dy_xh / static_cast<double>(m);
          for (int n = 0; n < N; ++n) {
            const std::int64_t off = (static_cast<std::int64_t>(n) * C + c) * hw;
            for (std::int64_t i = 0; i < hw; ++i) {
              const double dy = oc.grad()[off + i];
              xc.grad()[off + i] +=
                  scale * (dy - md - (*xhat)[static_cast<size_t>(off + i)] * mdx);
            }
          }
        }
      }
    });
  }
  return out;
}

}  // namespace jaa
