#pragma once

// Compute kernels used by the tensor ops. Every kernel has an OpenMP-parallel
// version (this namespace) and a serial reference (kernels::serial) used by
// the tests and the kernel benchmark. Both share the same per-row worker so
// results are bitwise identical: parallelism is only over independent outputs,
// accumulation order inside an output never changes.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <vector>

namespace pq::kernels {

namespace detail {

// C row m (+)= sum_k A[m,k] * B[k,:]
template <typename T>
inline void gemm_nn_row(std::size_t m, const T* A, const T* B, T* C,
                        std::size_t N, std::size_t K, bool accumulate) {
  T* c = C + m * N;
  if (!accumulate) std::fill(c, c + N, T(0));
  const T* a = A + m * K;
  for (std::size_t k = 0; k < K; ++k) {
    const T av = a[k];
    if (av == T(0)) continue;
    const T* b = B + k * N;
    for (std::size_t n = 0; n < N; ++n) c[n] += av * b[n];
  }
}

// C[m,n] (+)= dot(A row m, B row n)
template <typename T>
inline void gemm_nt_row(std::size_t m, const T* A, const T* B, T* C,
                        std::size_t N, std::size_t K, bool accumulate) {
  const T* a = A + m * K;
  T* c = C + m * N;
  for (std::size_t n = 0; n < N; ++n) {
    const T* b = B + n * K;
    T acc = 0;
    for (std::size_t k = 0; k < K; ++k) acc += a[k] * b[k];
    c[n] = accumulate ? c[n] + acc : acc;
  }
}

// C row m (+)= sum_k A[k,m] * B[k,:]   (A stored [K,M])
template <typename T>
inline void gemm_tn_row(std::size_t m, const T* A, const T* B, T* C,
                        std::size_t M, std::size_t N, std::size_t K,
                        bool accumulate) {
  T* c = C + m * N;
  if (!accumulate) std::fill(c, c + N, T(0));
  for (std::size_t k = 0; k < K; ++k) {
    const T av = A[k * M + m];
    if (av == T(0)) continue;
    const T* b = B + k * N;
    for (std::size_t n = 0; n < N; ++n) c[n] += av * b[n];
  }
}

// One row of the im2col matrix: row (c,ky,kx), length OH*OW.
template <typename T>
inline void im2col_row(std::size_t row, const T* x, T* xc, int C, int H, int W,
                       int k, int stride, int pad, int OH, int OW) {
  (void)C;
  const int kx = int(row) % k;
  const int ky = (int(row) / k) % k;
  const int c = int(row) / (k * k);
  const T* plane = x + std::size_t(c) * H * W;
  T* out = xc + row * std::size_t(OH) * OW;
  for (int oy = 0; oy < OH; ++oy) {
    const int iy = oy * stride - pad + ky;
    T* orow = out + std::size_t(oy) * OW;
    if (iy < 0 || iy >= H) {
      std::fill(orow, orow + OW, T(0));
      continue;
    }
    const T* irow = plane + std::size_t(iy) * W;
    for (int ox = 0; ox < OW; ++ox) {
      const int ix = ox * stride - pad + kx;
      orow[ox] = (ix >= 0 && ix < W) ? irow[ix] : T(0);
    }
  }
}

template <typename T>
inline void maxpool2_plane(std::size_t p, const T* x, T* y, std::uint32_t* idx,
                           int H, int W, int OH, int OW) {
  const T* plane = x + p * std::size_t(H) * W;
  T* out = y + p * std::size_t(OH) * OW;
  std::uint32_t* ind = idx + p * std::size_t(OH) * OW;
  for (int oy = 0; oy < OH; ++oy) {
    for (int ox = 0; ox < OW; ++ox) {
      // row-major scan, first occurrence wins ties
      std::uint32_t best = std::uint32_t((2 * oy) * W + 2 * ox);
      T bv = plane[best];
      const std::uint32_t c[3] = {std::uint32_t((2 * oy) * W + 2 * ox + 1),
                                  std::uint32_t((2 * oy + 1) * W + 2 * ox),
                                  std::uint32_t((2 * oy + 1) * W + 2 * ox + 1)};
      for (auto cc : c) {
        if (plane[cc] > bv) {
          bv = plane[cc];
          best = cc;
        }
      }
      out[std::size_t(oy) * OW + ox] = bv;
      ind[std::size_t(oy) * OW + ox] = best;
    }
  }
}

template <typename T>
inline void maxpool2_bwd_plane(std::size_t p, const T* dy,
                               const std::uint32_t* idx, T* dx, int H, int W,
                               int OH, int OW) {
  const T* g = dy + p * std::size_t(OH) * OW;
  const std::uint32_t* ind = idx + p * std::size_t(OH) * OW;
  T* out = dx + p * std::size_t(H) * W;
  for (std::size_t i = 0, n = std::size_t(OH) * OW; i < n; ++i) out[ind[i]] += g[i];
}

}  // namespace detail

// ---- serial reference implementations ----
namespace serial {

template <typename T>
void gemm_nn(std::size_t M, std::size_t N, std::size_t K, const T* A,
             const T* B, T* C, bool accumulate = false) {
  for (std::size_t m = 0; m < M; ++m)
    detail::gemm_nn_row(m, A, B, C, N, K, accumulate);
}

template <typename T>
void gemm_nt(std::size_t M, std::size_t N, std::size_t K, const T* A,
             const T* B, T* C, bool accumulate = false) {
  for (std::size_t m = 0; m < M; ++m)
    detail::gemm_nt_row(m, A, B, C, N, K, accumulate);
}

template <typename T>
void gemm_tn(std::size_t M, std::size_t N, std::size_t K, const T* A,
             const T* B, T* C, bool accumulate = false) {
  for (std::size_t m = 0; m < M; ++m)
    detail::gemm_tn_row(m, A, B, C, M, N, K, accumulate);
}

template <typename T>
void im2col(const T* x, int C, int H, int W, int k, int stride, int pad,
            int OH, int OW, T* xc) {
  const std::size_t rows = std::size_t(C) * k * k;
  for (std::size_t r = 0; r < rows; ++r)
    detail::im2col_row(r, x, xc, C, H, W, k, stride, pad, OH, OW);
}

template <typename T>
void maxpool2(const T* x, std::size_t planes, int H, int W, T* y,
              std::uint32_t* idx) {
  const int OH = H / 2, OW = W / 2;
  for (std::size_t p = 0; p < planes; ++p)
    detail::maxpool2_plane(p, x, y, idx, H, W, OH, OW);
}

template <typename T>
void maxpool2_backward(const T* dy, const std::uint32_t* idx,
                       std::size_t planes, int H, int W, T* dx) {
  const int OH = H / 2, OW = W / 2;
  for (std::size_t p = 0; p < planes; ++p)
    detail::maxpool2_bwd_plane(p, dy, idx, dx, H, W, OH, OW);
}

}  // namespace serial

// ---- OpenMP versions ----

template <typename T>
void gemm_nn(std::size_t M, std::size_t N, std::size_t K, const T* A,
             const T* B, T* C, bool accumulate = false) {
#pragma omp parallel for schedule(static)
  for (std::int64_t m = 0; m < std::int64_t(M); ++m)
    detail::gemm_nn_row(std::size_t(m), A, B, C, N, K, accumulate);
}

template <typename T>
void gemm_nt(std::size_t M, std::size_t N, std::size_t K, const T* A,
             const T* B, T* C, bool accumulate = false) {
#pragma omp parallel for schedule(static)
  for (std::int64_t m = 0; m < std::int64_t(M); ++m)
    detail::gemm_nt_row(std::size_t(m), A, B, C, N, K, accumulate);
}

template <typename T>
void gemm_tn(std::size_t M, std::size_t N, std::size_t K, const T* A,
             const T* B, T* C, bool accumulate = false) {
#pragma omp parallel for schedule(static)
  for (std::int64_t m = 0; m < std::int64_t(M); ++m)
    detail::gemm_tn_row(std::size_t(m), A, B, C, M, N, K, accumulate);
}

template <typename T>
void im2col(const T* x, int C, int H, int W, int k, int stride, int pad,
            int OH, int OW, T* xc) {
  const std::size_t rows = std::size_t(C) * k * k;
#pragma omp parallel for schedule(static)
  for (std::int64_t r = 0; r < std::int64_t(rows); ++r)
    detail::im2col_row(std::size_t(r), x, xc, C, H, W, k, stride, pad, OH, OW);
}

// Scatter-add transpose of im2col. Overlapping writes: serial by design;
// callers parallelize over batch items which own disjoint dx buffers.
template <typename T>
void col2im(const T* xc, int C, int H, int W, int k, int stride, int pad,
            int OH, int OW, T* dx) {
  for (int c = 0; c < C; ++c) {
    T* plane = dx + std::size_t(c) * H * W;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const T* row =
            xc + (std::size_t(c) * k * k + std::size_t(ky) * k + kx) *
                     std::size_t(OH) * OW;
        for (int oy = 0; oy < OH; ++oy) {
          const int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= H) continue;
          const T* r = row + std::size_t(oy) * OW;
          T* irow = plane + std::size_t(iy) * W;
          for (int ox = 0; ox < OW; ++ox) {
            const int ix = ox * stride - pad + kx;
            if (ix >= 0 && ix < W) irow[ix] += r[ox];
          }
        }
      }
    }
  }
}

template <typename T>
void maxpool2(const T* x, std::size_t planes, int H, int W, T* y,
              std::uint32_t* idx) {
  const int OH = H / 2, OW = W / 2;
#pragma omp parallel for schedule(static)
  for (std::int64_t p = 0; p < std::int64_t(planes); ++p)
    detail::maxpool2_plane(std::size_t(p), x, y, idx, H, W, OH, OW);
}

template <typename T>
void maxpool2_backward(const T* dy, const std::uint32_t* idx,
                       std::size_t planes, int H, int W, T* dx) {
  const int OH = H / 2, OW = W / 2;
#pragma omp parallel for schedule(static)
  for (std::int64_t p = 0; p < std::int64_t(planes); ++p)
    detail::maxpool2_bwd_plane(std::size_t(p), dy, idx, dx, H, W, OH, OW);
}

// Bilinear resize with half-pixel centers (clamped), double precision; used
// by the pyramid organizer and the augmentation/perturbation code.
void bilinear_resize(const double* src, int sh, int sw, double* dst, int dh,
                     int dw);
// Exact adjoint of bilinear_resize: scatters dst-gradients back to src.
void bilinear_resize_adjoint(const double* ddst, int dh, int dw, double* dsrc,
                             int sh, int sw);

}  // namespace pq::kernels
