#include "jaa/region.hpp"

#include <Eigen/Core>

#include "im2col.hpp"

namespace jaa {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRM = Eigen::Map<RowMat>;
using CMapRM = Eigen::Map<const RowMat>;

void copy_patch(const double* x, int C, int H, int W, int h0, int w0, int ph, int pw,
                double* buf) {
  for (int c = 0; c < C; ++c)
    for (int i = 0; i < ph; ++i) {
      const double* src = x + (static_cast<std::int64_t>(c) * H + h0 + i) * W + w0;
      std::copy(src, src + pw, buf + (static_cast<std::int64_t>(c) * ph + i) * pw);
    }
}

void scatter_patch_acc(const double* buf, int C, int H, int W, int h0, int w0, int ph, int pw,
                       double* x) {
  for (int c = 0; c < C; ++c)
    for (int i = 0; i < ph; ++i) {
      double* dst = x + (static_cast<std::int64_t>(c) * H + h0 + i) * W + w0;
      const double* src = buf + (static_cast<std::int64_t>(c) * ph + i) * pw;
      for (int j = 0; j < pw; ++j) dst[j] += src[j];
    }
}

}  // namespace

Tensor patchwise_conv(Tape& tape, const Tensor& x, const Tensor& w, const Tensor& b,
                      PatchGrid grid, const ConvSpec& spec) {
  if (x.ndim() != 4) fail_shape("patchwise_conv", "expected 4-d input");
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int P = grid.rows * grid.cols;
  if (grid.rows < 1 || grid.cols < 1) fail_shape("patchwise_conv", "invalid grid");
  if (H % grid.rows != 0 || W % grid.cols != 0)
    fail_shape("patchwise_conv", "spatial dims " + shape_str(x.shape()) + " not divisible by " +
                                     std::to_string(grid.rows) + "x" + std::to_string(grid.cols) +
                                     " grid");
  if (C != spec.in_channels) fail_shape("patchwise_conv", "channel mismatch");
  const Shape expect_w = {P, spec.out_channels, spec.in_channels, spec.kernel_h, spec.kernel_w};
  if (w.shape() != expect_w)
    fail_shape("patchwise_conv",
               "weight shape " + shape_str(w.shape()) + " != " + shape_str(expect_w));
  if (b.shape() != Shape{P, spec.out_channels}) fail_shape("patchwise_conv", "bias shape");

  const int ph = H / grid.rows, pw = W / grid.cols;
  const int oph = conv_out_size(ph, spec.kernel_h, spec.stride, spec.padding);
  const int opw = conv_out_size(pw, spec.kernel_w, spec.stride, spec.padding);
  if (oph <= 0 || opw <= 0) fail_shape("patchwise_conv", "patch smaller than kernel");
  const int OH = grid.rows * oph, OW = grid.cols * opw;
  const int Cout = spec.out_channels;
  const int K = C * spec.kernel_h * spec.kernel_w;
  const int Mp = oph * opw;

  Tensor out({N, Cout, OH, OW});
  std::vector<double> buf(static_cast<size_t>(C) * ph * pw);
  std::vector<double> col(static_cast<size_t>(K) * Mp);
  std::vector<double> ybuf(static_cast<size_t>(Cout) * Mp);
  for (int n = 0; n < N; ++n) {
    const double* xn = x.data() + static_cast<std::int64_t>(n) * C * H * W;
    double* on = out.data() + static_cast<std::int64_t>(n) * Cout * OH * OW;
    for (int pr = 0; pr < grid.rows; ++pr)
      for (int pc = 0; pc < grid.cols; ++pc) {
        const int p = pr * grid.cols + pc;
        copy_patch(xn, C, H, W, pr * ph, pc * pw, ph, pw, buf.data());
        detail::im2col(buf.data(), C, ph, pw, spec.kernel_h, spec.kernel_w, spec.stride,
                       spec.padding, oph, opw, col.data());
        CMapRM Wp(w.data() + static_cast<std::int64_t>(p) * Cout * K, Cout, K);
        CMapRM colm(col.data(), K, Mp);
        MapRM Y(ybuf.data(), Cout, Mp);
        Y.noalias() = Wp * colm;
        Eigen::Map<const Eigen::VectorXd> bp(b.data() + static_cast<std::int64_t>(p) * Cout, Cout);
        Y.colwise() += bp;
        // ybuf is per-patch [Cout, oph, opw]; scatter into the output patch
        for (int c = 0; c < Cout; ++c)
          for (int i = 0; i < oph; ++i)
            std::copy(ybuf.data() + (static_cast<std::int64_t>(c) * oph + i) * opw,
                      ybuf.data() + (static_cast<std::int64_t>(c) * oph + i + 1) * opw,
                      on + (static_cast<std::int64_t>(c) * OH + pr * oph + i) * OW + pc * opw);
      }
  }
  check_finite(out, "patchwise_conv");

  const bool tracked =
      tape.enabled && (x.requires_grad() || w.requires_grad() || b.requires_grad());
  if (tracked) {
    out.set_requires_grad(true);
    Tensor xc = x, wc = w, bc = b, oc = out;
    ConvSpec sp = spec;
    PatchGrid g = grid;
    tape.record([xc, wc, bc, oc, sp, g, N, C, H, W, ph, pw, oph, opw, OH, OW, K, Mp,
                 Cout]() mutable {
      const bool need_x = xc.requires_grad();
      const bool need_w = wc.requires_grad();
      const bool need_b = bc.requires_grad();
      if (need_x) xc.ensure_grad();
      if (need_w) wc.ensure_grad();
      if (need_b) bc.ensure_grad();
      std::vector<double> buf(static_cast<size_t>(C) * ph * pw);
      std::vector<double> col(static_cast<size_t>(K) * Mp);
      std::vector<double> dy(static_cast<size_t>(Cout) * Mp);
      std::vector<double> dxbuf(static_cast<size_t>(C) * ph * pw);
      for (int n = 0; n < N; ++n) {
        const double* xn = xc.data() + static_cast<std::int64_t>(n) * C * H * W;
        const double* don = oc.grad() + static_cast<std::int64_t>(n) * Cout * OH * OW;
        for (int pr = 0; pr < g.rows; ++pr)
          for (int pc = 0; pc < g.cols; ++pc) {
            const int p = pr * g.cols + pc;
            // gather dY for this patch
            for (int c = 0; c < Cout; ++c)
              for (int i = 0; i < oph; ++i)
                std::copy(don + (static_cast<std::int64_t>(c) * OH + pr * oph + i) * OW + pc * opw,
                          don + (static_cast<std::int64_t>(c) * OH + pr * oph + i) * OW +
                              pc * opw + opw,
                          dy.data() + (static_cast<std::int64_t>(c) * oph + i) * opw);
            CMapRM dY(dy.data(), Cout, Mp);
            if (need_w) {
              copy_patch(xn, C, H, W, pr * ph, pc * pw, ph, pw, buf.data());
              detail::im2col(buf.data(), C, ph, pw, sp.kernel_h, sp.kernel_w, sp.stride,
                             sp.padding, oph, opw, col.data());
              CMapRM colm(col.data(), K, Mp);
              MapRM dW(wc.grad() + static_cast<std::int64_t>(p) * Cout * K, Cout, K);
              dW.noalias() += dY * colm.transpose();
            }
            if (need_b) {
              Eigen::Map<Eigen::VectorXd> db(bc.grad() + static_cast<std::int64_t>(p) * Cout,
                                             Cout);
              db += dY.rowwise().sum();
            }
            if (need_x) {
              CMapRM Wp(wc.data() + static_cast<std::int64_t>(p) * Cout * K, Cout, K);
              RowMat dcol = Wp.transpose() * dY;
              std::fill(dxbuf.begin(), dxbuf.end(), 0.0);
              detail::col2im_acc(dcol.data(), C, ph, pw, sp.kernel_h, sp.kernel_w, sp.stride,
                                 sp.padding, oph, opw, dxbuf.data());
              scatter_patch_acc(dxbuf.data(), C, H, W, pr * ph, pc * pw, ph, pw,
                                xc.grad() + static_cast<std::int64_t>(n) * C * H * W);
            }
          }
      }
    });
  }
  return out;
}

PatchConvLayer::PatchConvLayer(int cin, int cout, PatchGrid g, std::mt19937_64& rng) : grid(g) {
  spec = ConvSpec{3, 3, 1, 1, cin, cout};
  const int P = g.rows * g.cols;
  w = he_init({P, cout, cin, 3, 3}, cin * 9, rng);
  b = Tensor({P, cout}, 0.0);
  b.set_requires_grad(true);
  bn = BatchNorm(cout);
}

Tensor PatchConvLayer::forward(Tape& tape, const Tensor& x, bool training) {
  Tensor y = patchwise_conv(tape, x, w, b, grid, spec);
  if (has_bn) y = bn.forward(tape, y, training);
  switch (act) {
    case Act::ReLU: return relu(tape, y);
    case Act::Sigmoid: return sigmoid(tape, y);
    case Act::None: return y;
  }
  return y;
}

void PatchConvLayer::collect(const std::string& prefix, ParamList& out) {
  out.push_back({prefix + ".w", w, false});
  out.push_back({prefix + ".b", b, false});
  if (has_bn) {
    out.push_back({prefix + ".bn.gamma", bn.gamma, true, false});
    out.push_back({prefix + ".bn.beta", bn.beta, true, false});
    out.push_back({prefix + ".bn.running_mean", bn.running_mean, true, true});
    out.push_back({prefix + ".bn.running_var", bn.running_var, true, true});
  }
}

PlainBlock::PlainBlock(int cin, int cout, int depth, std::mt19937_64& rng) {
  int in = cin;
  for (int i = 0; i < depth; ++i) {
    convs.emplace_back(in, cout, 3, 1, 1, true, Act::ReLU, rng);
    in = cout;
  }
}

Tensor PlainBlock::forward(Tape& tape, const Tensor& x, bool training) {
  Tensor y = x;
  for (ConvLayer& c : convs) y = c.forward(tape, y, training);
  return y;
}

void PlainBlock::collect(const std::string& prefix, ParamList& out) {
  for (size_t i = 0; i < convs.size(); ++i)
    convs[i].collect(prefix + ".conv" + std::to_string(i + 1), out);
}

RegionBlock::RegionBlock(int cin, int c1, std::mt19937_64& rng)
    : conv1(cin, 4 * c1, 3, 1, 1, true, Act::ReLU, rng),
      patch8(4 * c1, 4 * c1, PatchGrid{8, 8}, rng) {}

Tensor RegionBlock::forward(Tape& tape, const Tensor& x, bool training) {
  Tensor base = conv1.forward(tape, x, training);
  Tensor r = patch8.forward(tape, base, training);
  return elementwise_sum(tape, base, r);
}

void RegionBlock::collect(const std::string& prefix, ParamList& out) {
  conv1.collect(prefix + ".conv1", out);
  patch8.collect(prefix + ".patch8", out);
}

std::int64_t RegionBlock::region_param_count() const { return patch8.conv_param_count(); }

HMRBlock::HMRBlock(int cin, int c1, std::mt19937_64& rng)
    : conv1(cin, 4 * c1, 3, 1, 1, true, Act::ReLU, rng),
      patch8(4 * c1, 2 * c1, PatchGrid{8, 8}, rng),
      patch4(2 * c1, c1, PatchGrid{4, 4}, rng),
      patch2(c1, c1, PatchGrid{2, 2}, rng) {}

Tensor HMRBlock::forward(Tape& tape, const Tensor& x, bool training) {
  Tensor base = conv1.forward(tape, x, training);
  Tensor h8 = patch8.forward(tape, base, training);
  Tensor h4 = patch4.forward(tape, h8, training);
  Tensor h2 = patch2.forward(tape, h4, training);
  Tensor cat = concat_channels(tape, {h8, h4, h2});
  return elementwise_sum(tape, base, cat);
}

void HMRBlock::collect(const std::string& prefix, ParamList& out) {
  conv1.collect(prefix + ".conv1", out);
  patch8.collect(prefix + ".patch8", out);
  patch4.collect(prefix + ".patch4", out);
  patch2.collect(prefix + ".patch2", out);
}

std::int64_t HMRBlock::region_param_count() const {
  return patch8.conv_param_count() + patch4.conv_param_count() + patch2.conv_param_count();
}

RegionModule::RegionModule(int l, int c, std::mt19937_64& rng) {
  // Both blocks need their input side divisible by the 8x8 patch grid; the
  // second block runs at l/2.
  if (l % 16 != 0) fail_shape("RegionModule", "l must be divisible by 16");
  block1 = HMRBlock(3, c, rng);
  block2 = HMRBlock(4 * c, 2 * c, rng);
}

Tensor RegionModule::forward(Tape& tape, const Tensor& x, bool training) {
  Tensor y = block1.forward(tape, x, training);
  y = maxpool2(tape, y);
  y = block2.forward(tape, y, training);
  return maxpool2(tape, y);
}

void RegionModule::collect(const std::string& prefix, ParamList& out) {
  block1.collect(prefix + ".hmr1", out);
  block2.collect(prefix + ".hmr2", out);
}

}  // namespace jaa
