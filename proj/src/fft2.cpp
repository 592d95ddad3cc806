#include "pq/fft2.hpp"

#include <unsupported/Eigen/FFT>

namespace pq {

namespace {

// Row/column 1D passes. Eigen's FFT objects cache twiddle tables per size and
// are not shareable across threads, hence thread_local.
void fft2_pass(const cplx* src, int h, int w, cplx* dst, bool inverse) {
  thread_local Eigen::FFT<double> engine;
  std::vector<cplx> row(w), rowT(w), col(h), colT(h);
  for (int y = 0; y < h; ++y) {
    std::copy_n(src + std::size_t(y) * w, w, row.data());
    if (inverse)
      engine.inv(rowT.data(), row.data(), w);
    else
      engine.fwd(rowT.data(), row.data(), w);
    std::copy_n(rowT.data(), w, dst + std::size_t(y) * w);
  }
  for (int x = 0; x < w; ++x) {
    for (int y = 0; y < h; ++y) col[y] = dst[std::size_t(y) * w + x];
    if (inverse)
      engine.inv(colT.data(), col.data(), h);
    else
      engine.fwd(colT.data(), col.data(), h);
    for (int y = 0; y < h; ++y) dst[std::size_t(y) * w + x] = colT[y];
  }
}

}  // namespace

void fft2u(const cplx* src, int h, int w, cplx* dst) {
  fft2_pass(src, h, w, dst, false);
  const double s = 1.0 / std::sqrt(double(h) * w);
  for (std::size_t i = 0, n = std::size_t(h) * w; i < n; ++i) dst[i] *= s;
}

void ifft2u(const cplx* src, int h, int w, cplx* dst) {
  // Eigen applies 1/n per 1D inverse (1/(h*w) total); rescale to unitary.
  fft2_pass(src, h, w, dst, true);
  const double s = std::sqrt(double(h) * w);
  for (std::size_t i = 0, n = std::size_t(h) * w; i < n; ++i) dst[i] *= s;
}

std::vector<cplx> fft2u(const std::vector<double>& real, int h, int w) {
  if (real.size() != std::size_t(h) * w) throw DimensionError("fft2u: size mismatch");
  std::vector<cplx> in(real.size()), out(real.size());
  for (std::size_t i = 0; i < real.size(); ++i) in[i] = cplx(real[i], 0.0);
  fft2u(in.data(), h, w, out.data());
  return out;
}

std::vector<double> ifft2u_real(const std::vector<cplx>& spec, int h, int w) {
  if (spec.size() != std::size_t(h) * w) throw DimensionError("ifft2u: size mismatch");
  std::vector<cplx> out(spec.size());
  ifft2u(spec.data(), h, w, out.data());
  std::vector<double> r(spec.size());
  for (std::size_t i = 0; i < r.size(); ++i) r[i] = out[i].real();
  return r;
}

}  // namespace pq
