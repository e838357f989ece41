#pragma once

#include <algorithm>
#include <cstdint>

namespace jaa::detail {

// col: (C*kh*kw) x (OH*OW), row-major.
inline void im2col(const double* x, int C, int H, int W, int kh, int kw, int stride, int pad,
                   int OH, int OW, double* col) {
  const int M = OH * OW;
  for (int c = 0; c < C; ++c) {
    for (int ki = 0; ki < kh; ++ki) {
      for (int kj = 0; kj < kw; ++kj) {
        double* row = col + (static_cast<std::int64_t>(c) * kh * kw + ki * kw + kj) * M;
        for (int oh = 0; oh < OH; ++oh) {
          const int ih = oh * stride - pad + ki;
          if (ih < 0 || ih >= H) {
            std::fill(row + oh * OW, row + (oh + 1) * OW, 0.0);
            continue;
          }
          const double* src = x + (static_cast<std::int64_t>(c) * H + ih) * W;
          for (int ow = 0; ow < OW; ++ow) {
            const int iw = ow * stride - pad + kj;
            row[oh * OW + ow] = (iw < 0 || iw >= W) ? 0.0 : src[iw];
          }
        }
      }
    }
  }
}

inline void col2im_acc(const double* col, int C, int H, int W, int kh, int kw, int stride,
                       int pad, int OH, int OW, double* dx) {
  const int M = OH * OW;
  for (int c = 0; c < C; ++c) {
    for (int ki = 0; ki < kh; ++ki) {
      for (int kj = 0; kj < kw; ++kj) {
        const double* row = col + (static_cast<std::int64_t>(c) * kh * kw + ki * kw + kj) * M;
        for (int oh = 0; oh < OH; ++oh) {
          const int ih = oh * stride - pad + ki;
          if (ih < 0 || ih >= H) continue;
          double* dst = dx + (static_cast<std::int64_t>(c) * H + ih) * W;
          for (int ow = 0; ow < OW; ++ow) {
            const int iw = ow * stride - pad + kj;
            if (iw >= 0 && iw < W) dst[iw] += row[oh * OW + ow];
          }
        }
      }
    }
  }
}

}  // namespace jaa::detail
