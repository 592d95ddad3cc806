#pragma once

#include <complex>
#include <vector>

#include "pq/common.hpp"

namespace pq {

using cplx = std::complex<double>;

// 2D complex FFT with unitary scaling (1/sqrt(h*w) both directions), so the
// transform is orthonormal and its adjoint equals its inverse. Not shifted:
// bin (0,0) is DC.
void fft2u(const cplx* src, int h, int w, cplx* dst);
void ifft2u(const cplx* src, int h, int w, cplx* dst);

std::vector<cplx> fft2u(const std::vector<double>& real, int h, int w);
std::vector<double> ifft2u_real(const std::vector<cplx>& spec, int h, int w);

}  // namespace pq
