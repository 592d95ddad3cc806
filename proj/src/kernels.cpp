#include "pq/kernels.hpp"

#include <algorithm>
#include <cmath>

namespace pq::kernels {

namespace {

struct Tap {
  int i0, i1;
  double w0, w1;
};

// Half-pixel-center source coordinate for destination index d.
inline Tap tap(int d, int dn, int sn) {
  const double scale = double(sn) / dn;
  double s = (d + 0.5) * scale - 0.5;
  if (s < 0) s = 0;
  if (s > sn - 1) s = sn - 1;
  Tap t;
  t.i0 = int(std::floor(s));
  t.i1 = std::min(t.i0 + 1, sn - 1);
  t.w1 = s - t.i0;
  t.w0 = 1.0 - t.w1;
  return t;
}

}  // namespace

void bilinear_resize(const double* src, int sh, int sw, double* dst, int dh,
                     int dw) {
  std::vector<Tap> tx(dw);
  for (int x = 0; x < dw; ++x) tx[x] = tap(x, dw, sw);
#pragma omp parallel for schedule(static)
  for (int y = 0; y < dh; ++y) {
    const Tap ty = tap(y, dh, sh);
    const double* r0 = src + std::size_t(ty.i0) * sw;
    const double* r1 = src + std::size_t(ty.i1) * sw;
    double* out = dst + std::size_t(y) * dw;
    for (int x = 0; x < dw; ++x) {
      const Tap& t = tx[x];
      out[x] = ty.w0 * (t.w0 * r0[t.i0] + t.w1 * r0[t.i1]) +
               ty.w1 * (t.w0 * r1[t.i0] + t.w1 * r1[t.i1]);
    }
  }
}

void bilinear_resize_adjoint(const double* ddst, int dh, int dw, double* dsrc,
                             int sh, int sw) {
  std::vector<Tap> tx(dw);
  for (int x = 0; x < dw; ++x) tx[x] = tap(x, dw, sw);
  // Overlapping scatter: keep serial (planes are parallelized by callers).
  for (int y = 0; y < dh; ++y) {
    const Tap ty = tap(y, dh, sh);
    double* r0 = dsrc + std::size_t(ty.i0) * sw;
    double* r1 = dsrc + std::size_t(ty.i1) * sw;
    const double* g = ddst + std::size_t(y) * dw;
    for (int x = 0; x < dw; ++x) {
      const Tap& t = tx[x];
      r0[t.i0] += ty.w0 * t.w0 * g[x];
      r0[t.i1] += ty.w0 * t.w1 * g[x];
      r1[t.i0] += ty.w1 * t.w0 * g[x];
      r1[t.i1] += ty.w1 * t.w1 * g[x];
    }
  }
}

}  // namespace pq::kernels
