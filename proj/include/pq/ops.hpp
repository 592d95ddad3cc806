#pragma once

// Differentiable operations recorded on the active tape. Only the primitives
// the network needs: elementwise math, linear layers, conv/pool, batch norm,
// dropout, the LSTM cell, and the loss heads.

#include <cmath>
#include <cstdio>
#include <utility>

#include "pq/kernels.hpp"
#include "pq/tensor.hpp"

namespace pq::ops {

template <typename T>
inline bool grad_needed(std::initializer_list<const Tensor<T>*> ins) {
  if (!active_tape<T>()) return false;
  for (auto* t : ins)
    if (t->defined() && t->requires_grad()) return true;
  return false;
}

template <typename T>
inline Tensor<T> make_out(std::vector<std::size_t> shape, bool traced) {
  Tensor<T> y = Tensor<T>::zeros(std::move(shape));
  if (traced) {
    y.impl()->requires_grad = true;
    y.impl()->leaf = false;
  }
  return y;
}

template <typename T>
inline void check_same_shape(const Tensor<T>& a, const Tensor<T>& b,
                             const char* what) {
  if (a.shape() != b.shape())
    throw DimensionError(std::string(what) + ": shape mismatch");
}

template <typename T>
inline void accum(std::vector<T>& dst, const T* src, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) dst[i] += src[i];
}

template <typename T>
inline void accum_at(std::vector<T>& dst, std::size_t off, const T* src,
                     std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) dst[off + i] += src[i];
}

// ---- elementwise ----

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  check_same_shape(a, b, "add");
  const bool traced = grad_needed<T>({&a, &b});
  Tensor<T> y = make_out<T>(a.shape(), traced);
  const std::size_t n = a.size();
  const T* pa = a.data().data();
  const T* pb = b.data().data();
  T* py = y.data().data();
  for (std::size_t i = 0; i < n; ++i) py[i] = pa[i] + pb[i];
  if (traced) {
    auto ai = a.impl(), bi = b.impl(), yi = y.impl();
    active_tape<T>()->record(yi, [ai, bi, yi] {
      if (ai->requires_grad) {
        ai->ensure_grad();
        accum(ai->grad, yi->grad.data(), yi->grad.size());
      }
      if (bi->requires_grad) {
        bi->ensure_grad();
        accum(bi->grad, yi->grad.data(), yi->grad.size());
      }
    });
  }
  return y;
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  check_same_shape(a, b, "sub");
  const bool traced = grad_needed<T>({&a, &b});
  Tensor<T> y = make_out<T>(a.shape(), traced);
  for (std::size_t i = 0; i < a.size(); ++i)
    y.data()[i] = a.data()[i] - b.data()[i];
  if (traced) {
    auto ai = a.impl(), bi = b.impl(), yi = y.impl();
    active_tape<T>()->record(yi, [ai, bi, yi] {
      if (ai->requires_grad) {
        ai->ensure_grad();
        accum(ai->grad, yi->grad.data(), yi->grad.size());
      }
      if (bi->requires_grad) {
        bi->ensure_grad();
        for (std::size_t i = 0; i < yi->grad.size(); ++i)
          bi->grad[i] -= yi->grad[i];
      }
    });
  }
  return y;
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  check_same_shape(a, b, "mul");
  const bool traced = grad_needed<T>({&a, &b});
  Tensor<T> y = make_out<T>(a.shape(), traced);
  for (std::size_t i = 0; i < a.size(); ++i)
    y.data()[i] = a.data()[i] * b.data()[i];
  if (traced) {
    auto ai = a.impl(), bi = b.impl(), yi = y.impl();
    active_tape<T>()->record(yi, [ai, bi, yi] {
      if (ai->requires_grad) {
        ai->ensure_grad();
        for (std::size_t i = 0; i < yi->grad.size(); ++i)
          ai->grad[i] += yi->grad[i] * bi->value[i];
      }
      if (bi->requires_grad) {
        bi->ensure_grad();
        for (std::size_t i = 0; i < yi->grad.size(); ++i)
          bi->grad[i] += yi->grad[i] * ai->value[i];
      }
    });
  }
  return y;
}

// y = a*x + b with scalar constants.
template <typename T>
Tensor<T> affine(const Tensor<T>& x, double a, double b) {
  const bool traced = grad_needed<T>({&x});
  Tensor<T> y = make_out<T>(x.shape(), traced);
  for (std::size_t i = 0; i < x.size(); ++i)
    y.data()[i] = T(a) * x.data()[i] + T(b);
  if (traced) {
    auto xi = x.impl();
    auto yi = y.impl();
    active_tape<T>()->record(yi, [xi, yi, a] {
      if (!xi->requires_grad) return;
      xi->ensure_grad();
      for (std::size_t i = 0; i < yi->grad.size(); ++i)
        xi->grad[i] += T(a) * yi->grad[i];
    });
  }
  return y;
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  const bool traced = grad_needed<T>({&x});
  Tensor<T> y = make_out<T>(x.shape(), traced);
  for (std::size_t i = 0; i < x.size(); ++i)
    y.data()[i] = x.data()[i] > T(0) ? x.data()[i] : T(0);
  if (traced) {
    auto xi = x.impl(), yi = y.impl();
    active_tape<T>()->record(yi, [xi, yi] {
      if (!xi->requires_grad) return;
      xi->ensure_grad();
      for (std::size_t i = 0; i < yi->grad.size(); ++i)
        if (yi->value[i] > T(0)) xi->grad[i] += yi->grad[i];
    });
  }
  return y;
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  const bool traced = grad_needed<T>({&x});
  Tensor<T> y = make_out<T>(x.shape(), traced);
  for (std::size_t i = 0; i < x.size(); ++i)
    y.data()[i] = T(1) / (T(1) + std::exp(-x.data()[i]));
  if (traced) {
    auto xi = x.impl(), yi = y.impl();
    active_tape<T>()->record(yi, [xi, yi] {
      if (!xi->requires_grad) return;
      xi->ensure_grad();
      for (std::size_t i = 0; i < yi->grad.size(); ++i) {
        const T s = yi->value[i];
        xi->grad[i] += yi->grad[i] * s * (T(1) - s);
      }
    });
  }
  return y;
}

template <typename T>
Tensor<T> tanh_op(const Tensor<T>& x) {
  const bool traced = grad_needed<T>({&x});
  Tensor<T> y = make_out<T>(x.shape(), traced);
  for (std::size_t i = 0; i < x.size(); ++i) y.data()[i] = std::tanh(x.data()[i]);
  if (traced) {
    auto xi = x.impl(), yi = y.impl();
    active_tape<T>()->record(yi, [xi, yi] {
      if (!xi->requires_grad) return;
      xi->ensure_grad();
      for (std::size_t i = 0; i < yi->grad.size(); ++i) {
        const T t = yi->value[i];
        xi->grad[i] += yi->grad[i] * (T(1) - t * t);
      }
    });
  }
  return y;
}

// ---- reductions ----

template <typename T>
Tensor<T> sum_all(const Tensor<T>& x) {
  const bool traced = grad_needed<T>({&x});
  Tensor<T> y = make_out<T>({1}, traced);
  T acc = 0;
  for (std::size_t i = 0; i < x.size(); ++i) acc += x.data()[i];
  y.data()[0] = acc;
  if (traced) {
    auto xi = x.impl(), yi = y.impl();
    active_tape<T>()->record(yi, [xi, yi] {
      if (!xi->requires_grad) return;
      xi->ensure_grad();
      const T g = yi->grad[0];
      for (std::size_t i = 0; i < xi->grad.size(); ++i) xi->grad[i] += g;
    });
  }
  return y;
}

template <typename T>
Tensor<T> mean_all(const Tensor<T>& x) {
  return affine(sum_all(x), 1.0 / double(x.size()), 0.0);
}

// Eq.-9-style data term: mean over rows of the L1 norm of the residual.
// Target is a constant; subgradient at exact ties is zero.
template <typename T>
Tensor<T> mae(const Tensor<T>& pred, const Tensor<T>& target) {
  check_same_shape(pred, target, "mae");
  if (pred.rank() != 2) throw DimensionError("mae: expected [B,K]");
  for (std::size_t i = 0; i < target.size(); ++i)
    if (std::isnan(double(target.data()[i])))
      throw NumericError("mae: NaN in targets");
  const std::size_t B = pred.dim(0);
  const bool traced = grad_needed<T>({&pred});
  Tensor<T> y = make_out<T>({1}, traced);
  T acc = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const T d = pred.data()[i] - target.data()[i];
    acc += d < T(0) ? -d : d;
  }
  y.data()[0] = acc / T(B);
  if (traced) {
    auto pi = pred.impl(), ti = target.impl(), yi = y.impl();
    active_tape<T>()->record(yi, [pi, ti, yi, B] {
      if (!pi->requires_grad) return;
      pi->ensure_grad();
      const T g = yi->grad[0] / T(B);
      for (std::size_t i = 0; i < pi->grad.size(); ++i) {
        const T d = pi->value[i] - ti->value[i];
        if (d > T(0))
          pi->grad[i] += g;
        else if (d < T(0))
          pi->grad[i] -= g;
      }
    });
  }
  return y;
}

// ---- shape plumbing ----

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, std::vector<std::size_t> shape) {
  if (product(shape) != x.size()) throw DimensionError("reshape: size mismatch");
  const bool traced = grad_needed<T>({&x});
  Tensor<T> y = make_out<T>(std::move(shape), traced);
  y.data() = x.data();
  if (traced) {
    auto xi = x.impl(), yi = y.impl();
    active_tape<T>()->record(yi, [xi, yi] {
      if (!xi->requires_grad) return;
      xi->ensure_grad();
      accum(xi->grad, yi->grad.data(), yi->grad.size());
    });
  }
  return y;
}

template <typename T>
Tensor<T> concat_cols(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(0) != b.dim(0))
    throw DimensionError("concat_cols: expected [B,K1],[B,K2]");
  const std::size_t B = a.dim(0), K1 = a.dim(1), K2 = b.dim(1);
  const bool traced = grad_needed<T>({&a, &b});
  Tensor<T> y = make_out<T>({B, K1 + K2}, traced);
  for (std::size_t r = 0; r < B; ++r) {
    std::copy_n(a.data().data() + r * K1, K1, y.data().data() + r * (K1 + K2));
    std::copy_n(b.data().data() + r * K2, K2,
                y.data().data() + r * (K1 + K2) + K1);
  }
  if (traced) {
    auto ai = a.impl(), bi = b.impl(), yi = y.impl();
    active_tape<T>()->record(yi, [ai, bi, yi, B, K1, K2] {
      for (std::size_t r = 0; r < B; ++r) {
        const T* g = yi->grad.data() + r * (K1 + K2);
        if (ai->requires_grad) {
          ai->ensure_grad();
          accum_at(ai->grad, r * K1, g, K1);
        }
        if (bi->requires_grad) {
          bi->ensure_grad();
          accum_at(bi->grad, r * K2, g + K1, K2);
        }
      }
    });
  }
  return y;
}

template <typename T>
Tensor<T> gather_rows(const Tensor<T>& x, std::vector<std::size_t> idx) {
  if (x.rank() != 2) throw DimensionError("gather_rows: expected [N,K]");
  const std::size_t K = x.dim(1);
  const bool traced = grad_needed<T>({&x});
  Tensor<T> y = make_out<T>({idx.size(), K}, traced);
  for (std::size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] >= x.dim(0)) throw DimensionError("gather_rows: index out of range");
    std::copy_n(x.data().data() + idx[r] * K, K, y.data().data() + r * K);
  }
  if (traced) {
    auto xi = x.impl(), yi = y.impl();
    active_tape<T>()->record(yi, [xi, yi, idx = std::move(idx), K] {
      if (!xi->requires_grad) return;
      xi->ensure_grad();
      for (std::size_t r = 0; r < idx.size(); ++r)
        accum_at(xi->grad, idx[r] * K, yi->grad.data() + r * K, K);
    });
  }
  return y;
}

template <typename T>
Tensor<T> concat_rows(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw DimensionError("concat_rows: empty");
  const std::size_t K = parts[0].dim(1);
  std::size_t rows = 0;
  bool traced = false;
  for (const auto& p : parts) {
    if (p.rank() != 2 || p.dim(1) != K)
      throw DimensionError("concat_rows: column mismatch");
    rows += p.dim(0);
    traced = traced || grad_needed<T>({&p});
  }
  Tensor<T> y = make_out<T>({rows, K}, traced);
  std::size_t off = 0;
  for (const auto& p : parts) {
    std::copy_n(p.data().data(), p.size(), y.data().data() + off);
    off += p.size();
  }
  if (traced) {
    std::vector<std::shared_ptr<TensorImpl<T>>> impls;
    for (const auto& p : parts) impls.push_back(p.impl());
    auto yi = y.impl();
    active_tape<T>()->record(yi, [impls = std::move(impls), yi] {
      std::size_t off = 0;
      for (auto& pi : impls) {
        if (pi->requires_grad) {
          pi->ensure_grad();
          accum(pi->grad, yi->grad.data() + off, pi->value.size());
        }
        off += pi->value.size();
      }
    });
  }
  return y;
}

// ---- linear algebra layers ----

// y[B,M] = x[B,K] * W[M,K]^T (+ bias[M])
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& W, const Tensor<T>& bias) {
  if (x.rank() != 2 || W.rank() != 2 || x.dim(1) != W.dim(1))
    throw DimensionError("linear: shape mismatch");
  const std::size_t B = x.dim(0), K = x.dim(1), M = W.dim(0);
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != M))
    throw DimensionError("linear: bad bias");
  const bool traced = bias.defined() ? grad_needed<T>({&x, &W, &bias})
                                     : grad_needed<T>({&x, &W});
  Tensor<T> y = make_out<T>({B, M}, traced);
  kernels::gemm_nt(B, M, K, x.data().data(), W.data().data(), y.data().data());
  if (bias.defined()) {
    for (std::size_t r = 0; r < B; ++r)
      for (std::size_t m = 0; m < M; ++m) y.data()[r * M + m] += bias.data()[m];
  }
  if (traced) {
    auto xi = x.impl(), wi = W.impl(), yi = y.impl();
    auto bi = bias.defined() ? bias.impl() : nullptr;
    active_tape<T>()->record(yi, [xi, wi, bi, yi, B, K, M] {
      const T* g = yi->grad.data();
      if (xi->requires_grad) {
        xi->ensure_grad();
        kernels::gemm_nn(B, K, M, g, wi->value.data(), xi->grad.data(), true);
      }
      if (wi->requires_grad) {
        wi->ensure_grad();
        kernels::gemm_tn(M, K, B, g, xi->value.data(), wi->grad.data(), true);
      }
      if (bi && bi->requires_grad) {
        bi->ensure_grad();
        for (std::size_t r = 0; r < B; ++r)
          for (std::size_t m = 0; m < M; ++m) bi->grad[m] += g[r * M + m];
      }
    });
  }
  return y;
}

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& W) {
  return linear(x, W, Tensor<T>());
}

// Per-head linear using slice s of a stacked head bank W[S,R,C], b[S,R].
template <typename T>
Tensor<T> head_linear(const Tensor<T>& h, const Tensor<T>& W3,
                      const Tensor<T>& b2, std::size_t s) {
  if (h.rank() != 2 || W3.rank() != 3 || W3.dim(2) != h.dim(1) || s >= W3.dim(0))
    throw DimensionError("head_linear: shape mismatch");
  const std::size_t B = h.dim(0), C = h.dim(1), R = W3.dim(1);
  const bool traced = grad_needed<T>({&h, &W3, &b2});
  Tensor<T> y = make_out<T>({B, R}, traced);
  const T* Wp = W3.data().data() + s * R * C;
  const T* bp = b2.data().data() + s * R;
  kernels::gemm_nt(B, R, C, h.data().data(), Wp, y.data().data());
  for (std::size_t r = 0; r < B; ++r)
    for (std::size_t m = 0; m < R; ++m) y.data()[r * R + m] += bp[m];
  if (traced) {
    auto hi = h.impl(), wi = W3.impl(), bi = b2.impl(), yi = y.impl();
    active_tape<T>()->record(yi, [hi, wi, bi, yi, s, B, C, R] {
      const T* g = yi->grad.data();
      const T* Wp = wi->value.data() + s * R * C;
      if (hi->requires_grad) {
        hi->ensure_grad();
        kernels::gemm_nn(B, C, R, g, Wp, hi->grad.data(), true);
      }
      if (wi->requires_grad) {
        wi->ensure_grad();
        kernels::gemm_tn(R, C, B, g, hi->value.data(),
                         wi->grad.data() + s * R * C, true);
      }
      if (bi->requires_grad) {
        bi->ensure_grad();
        for (std::size_t r = 0; r < B; ++r)
          for (std::size_t m = 0; m < R; ++m) bi->grad[s * R + m] += g[r * R + m];
      }
    });
  }
  return y;
}

// Fixed linear combination of per-stream predictions into the final columns,
// e.g. area averaging across orientation streams.
struct CombineRule {
  std::size_t out_col, stream, col;
  double coeff;
};

template <typename T>
Tensor<T> combine_streams(const std::vector<Tensor<T>>& streams,
                          const std::vector<CombineRule>& rules,
                          std::size_t out_cols) {
  const std::size_t B = streams.at(0).dim(0);
  bool traced = false;
  for (const auto& sTens : streams) {
    if (sTens.rank() != 2 || sTens.dim(0) != B)
      throw DimensionError("combine_streams: stream shape mismatch");
    traced = traced || grad_needed<T>({&sTens});
  }
  Tensor<T> y = make_out<T>({B, out_cols}, traced);
  for (const auto& r : rules) {
    const auto& src = streams.at(r.stream);
    const std::size_t R = src.dim(1);
    for (std::size_t b = 0; b < B; ++b)
      y.data()[b * out_cols + r.out_col] +=
          T(r.coeff) * src.data()[b * R + r.col];
  }
  if (traced) {
    std::vector<std::shared_ptr<TensorImpl<T>>> impls;
    std::vector<std::size_t> widths;
    for (const auto& sTens : streams) {
      impls.push_back(sTens.impl());
      widths.push_back(sTens.dim(1));
    }
    auto yi = y.impl();
    active_tape<T>()->record(
        yi, [impls = std::move(impls), widths = std::move(widths), rules, yi,
             B, out_cols] {
          for (const auto& r : rules) {
            auto& pi = impls[r.stream];
            if (!pi->requires_grad) continue;
            pi->ensure_grad();
            const std::size_t R = widths[r.stream];
            for (std::size_t b = 0; b < B; ++b)
              pi->grad[b * R + r.col] +=
                  T(r.coeff) * yi->grad[b * out_cols + r.out_col];
          }
        });
  }
  return y;
}

// ---- convolution and pooling ----

// Correlation semantics (no kernel flip), zero padding.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias,
                 int stride, int pad) {
  if (x.rank() != 4 || w.rank() != 4)
    throw DimensionError("conv2d: expected [B,C,H,W] input and [Co,Ci,k,k] weight");
  const std::size_t B = x.dim(0), Ci = x.dim(1);
  const int H = int(x.dim(2)), W = int(x.dim(3));
  const std::size_t Co = w.dim(0);
  const int k = int(w.dim(2));
  if (w.dim(1) != Ci) throw DimensionError("conv2d: input channel mismatch");
  if (int(w.dim(3)) != k) throw DimensionError("conv2d: kernel must be square");
  if (k % 2 == 0) throw DimensionError("conv2d: kernel size must be odd");
  if (stride < 1) throw DimensionError("conv2d: stride must be >= 1");
  if (H + 2 * pad < k || W + 2 * pad < k)
    throw DimensionError("conv2d: kernel larger than padded input");
  if (bias.defined() && bias.size() != Co)
    throw DimensionError("conv2d: bad bias");
  const int OH = (H + 2 * pad - k) / stride + 1;
  const int OW = (W + 2 * pad - k) / stride + 1;
  const std::size_t K = Ci * std::size_t(k) * k;
  const std::size_t OHW = std::size_t(OH) * OW;

  const bool traced = bias.defined() ? grad_needed<T>({&x, &w, &bias})
                                     : grad_needed<T>({&x, &w});
  Tensor<T> y = make_out<T>({B, Co, std::size_t(OH), std::size_t(OW)}, traced);

#pragma omp parallel
  {
    std::vector<T> xc(K * OHW);
#pragma omp for schedule(static)
    for (std::int64_t b = 0; b < std::int64_t(B); ++b) {
      kernels::serial::im2col(x.data().data() + b * Ci * H * W, int(Ci), H, W,
                              k, stride, pad, OH, OW, xc.data());
      T* yb = y.data().data() + b * Co * OHW;
      kernels::serial::gemm_nn(Co, OHW, K, w.data().data(), xc.data(), yb);
      if (bias.defined())
        for (std::size_t co = 0; co < Co; ++co) {
          const T bv = bias.data()[co];
          T* row = yb + co * OHW;
          for (std::size_t i = 0; i < OHW; ++i) row[i] += bv;
        }
    }
  }

  if (traced) {
    auto xi = x.impl(), wi = w.impl(), yi = y.impl();
    auto bi = bias.defined() ? bias.impl() : nullptr;
    const int Ci_i = int(Ci);
    active_tape<T>()->record(yi, [xi, wi, bi, yi, B, Ci_i, H, W, Co, k, stride,
                                  pad, OH, OW, K, OHW] {
      // weight grad: serial over items, row-parallel gemm; fixed order.
      if (wi->requires_grad) {
        wi->ensure_grad();
        std::vector<T> xc(K * OHW);
        for (std::size_t b = 0; b < B; ++b) {
          kernels::im2col(xi->value.data() + b * Ci_i * H * W, Ci_i, H, W, k,
                          stride, pad, OH, OW, xc.data());
          kernels::gemm_nt(Co, K, OHW, yi->grad.data() + b * Co * OHW,
                           xc.data(), wi->grad.data(), true);
        }
      }
      if (bi && bi->requires_grad) {
        bi->ensure_grad();
        for (std::size_t b = 0; b < B; ++b)
          for (std::size_t co = 0; co < Co; ++co) {
            const T* row = yi->grad.data() + (b * Co + co) * OHW;
            T acc = 0;
            for (std::size_t i = 0; i < OHW; ++i) acc += row[i];
            bi->grad[co] += acc;
          }
      }
      if (xi->requires_grad) {
        xi->ensure_grad();
#pragma omp parallel
        {
          std::vector<T> dxc(K * OHW);
#pragma omp for schedule(static)
          for (std::int64_t b = 0; b < std::int64_t(B); ++b) {
            kernels::serial::gemm_tn(K, OHW, Co, wi->value.data(),
                                     yi->grad.data() + b * Co * OHW, dxc.data());
            kernels::col2im(dxc.data(), Ci_i, H, W, k, stride, pad, OH, OW,
                            xi->grad.data() + b * Ci_i * H * W);
          }
        }
      }
    });
  }
  return y;
}

// 2x2 max pooling, stride 2; gradient routes to the argmax (first occurrence
// in row-major scan on ties).
template <typename T>
Tensor<T> max_pool2(const Tensor<T>& x) {
  if (x.rank() != 4) throw DimensionError("max_pool2: expected [B,C,H,W]");
  const int H = int(x.dim(2)), W = int(x.dim(3));
  if (H < 2 || W < 2) throw DimensionError("max_pool2: input too small");
  const std::size_t planes = x.dim(0) * x.dim(1);
  const std::size_t OH = H / 2, OW = W / 2;
  const bool traced = grad_needed<T>({&x});
  Tensor<T> y = make_out<T>({x.dim(0), x.dim(1), OH, OW}, traced);
  auto idx = std::make_shared<std::vector<std::uint32_t>>(planes * OH * OW);
  kernels::maxpool2(x.data().data(), planes, H, W, y.data().data(), idx->data());
  if (traced) {
    auto xi = x.impl(), yi = y.impl();
    active_tape<T>()->record(yi, [xi, yi, idx, planes, H, W] {
      if (!xi->requires_grad) return;
      xi->ensure_grad();
      kernels::maxpool2_backward(yi->grad.data(), idx->data(), planes, H, W,
                                 xi->grad.data());
    });
  }
  return y;
}

// Global L2 pooling over the terminal 5x5 map: y = sqrt(sum of squares).
template <typename T>
Tensor<T> l2_pool(const Tensor<T>& x) {
  if (x.rank() != 4 || x.dim(2) != 5 || x.dim(3) != 5)
    throw DimensionError("l2_pool: expected [B,C,5,5]");
  const std::size_t planes = x.dim(0) * x.dim(1);
  const bool traced = grad_needed<T>({&x});
  Tensor<T> y = make_out<T>({x.dim(0), x.dim(1), 1, 1}, traced);
  for (std::size_t p = 0; p < planes; ++p) {
    const T* v = x.data().data() + p * 25;
    T acc = 0;
    for (int i = 0; i < 25; ++i) acc += v[i] * v[i];
    y.data()[p] = std::sqrt(acc);
  }
  if (traced) {
    auto xi = x.impl(), yi = y.impl();
    active_tape<T>()->record(yi, [xi, yi, planes] {
      if (!xi->requires_grad) return;
      xi->ensure_grad();
      for (std::size_t p = 0; p < planes; ++p) {
        const T norm = yi->value[p];
        if (norm == T(0)) continue;  // guarded singularity: gradient 0
        const T g = yi->grad[p] / norm;
        const T* v = xi->value.data() + p * 25;
        T* d = xi->grad.data() + p * 25;
        for (int i = 0; i < 25; ++i) d[i] += g * v[i];
      }
    });
  }
  return y;
}

// ---- batch normalization ----

template <typename T>
struct RunningStats {
  std::vector<T> mean, var;
  long updates = 0;
  bool warned = false;

  explicit RunningStats(std::size_t channels = 0)
      : mean(channels, T(0)), var(channels, T(1)) {}
};

// Per-channel batch normalization, optionally fused with ReLU.
// Train mode uses biased batch statistics (eps 1e-5) and updates running
// stats with momentum 0.1; eval mode uses the running stats.
template <typename T>
Tensor<T> batch_norm(const Tensor<T>& x, const Tensor<T>& gamma,
                     const Tensor<T>& beta, RunningStats<T>& rs, bool train,
                     bool fuse_relu = false, double eps = 1e-5,
                     double momentum = 0.1) {
  if (x.rank() != 4) throw DimensionError("batch_norm: expected [B,C,H,W]");
  const std::size_t B = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
  if (gamma.size() != C || beta.size() != C || rs.mean.size() != C)
    throw DimensionError("batch_norm: channel mismatch");
  const std::size_t m = B * HW;
  if (train && m < 2)
    throw DimensionError("batch_norm: need at least 2 samples per channel in train mode");
  if (!train && rs.updates == 0 && !rs.warned) {
    std::fprintf(stderr,
                 "[pq] warning: batch_norm eval before any running-stat "
                 "update; using init (mean 0, var 1)\n");
    rs.warned = true;
  }

  const bool traced = grad_needed<T>({&x, &gamma, &beta});
  Tensor<T> y = make_out<T>(x.shape(), traced);

  auto mu = std::make_shared<std::vector<T>>(C);
  auto inv = std::make_shared<std::vector<T>>(C);
  if (train) {
#pragma omp parallel for schedule(static)
    for (std::int64_t c = 0; c < std::int64_t(C); ++c) {
      T s = 0;
      for (std::size_t b = 0; b < B; ++b) {
        const T* v = x.data().data() + (b * C + c) * HW;
        for (std::size_t i = 0; i < HW; ++i) s += v[i];
      }
      const T mean = s / T(m);
      T q = 0;
      for (std::size_t b = 0; b < B; ++b) {
        const T* v = x.data().data() + (b * C + c) * HW;
        for (std::size_t i = 0; i < HW; ++i) {
          const T d = v[i] - mean;
          q += d * d;
        }
      }
      const T var = q / T(m);
      (*mu)[c] = mean;
      (*inv)[c] = T(1) / std::sqrt(var + T(eps));
      rs.mean[c] = T(1 - momentum) * rs.mean[c] + T(momentum) * mean;
      rs.var[c] = T(1 - momentum) * rs.var[c] + T(momentum) * var;
    }
    rs.updates++;
  } else {
    for (std::size_t c = 0; c < C; ++c) {
      (*mu)[c] = rs.mean[c];
      (*inv)[c] = T(1) / std::sqrt(rs.var[c] + T(eps));
    }
  }

#pragma omp parallel for schedule(static) collapse(2)
  for (std::int64_t b = 0; b < std::int64_t(B); ++b)
    for (std::int64_t c = 0; c < std::int64_t(C); ++c) {
      const T g = gamma.data()[c], bb = beta.data()[c];
      const T mean = (*mu)[c], is = (*inv)[c];
      const T* v = x.data().data() + (b * C + c) * HW;
      T* o = y.data().data() + (b * C + c) * HW;
      for (std::size_t i = 0; i < HW; ++i) {
        T val = g * ((v[i] - mean) * is) + bb;
        if (fuse_relu && val < T(0)) val = T(0);
        o[i] = val;
      }
    }

  if (traced) {
    auto xi = x.impl(), gi = gamma.impl(), bi = beta.impl(), yi = y.impl();
    active_tape<T>()->record(yi, [xi, gi, bi, yi, mu, inv, B, C, HW, m, train,
                                  fuse_relu] {
      // Effective upstream grad is masked by the ReLU when fused.
      auto up = [&](std::size_t off, std::size_t i) -> T {
        const T g = yi->grad[off + i];
        if (!fuse_relu) return g;
        return yi->value[off + i] > T(0) ? g : T(0);
      };
      const bool need_x = xi->requires_grad;
      if (need_x) xi->ensure_grad();
      if (gi->requires_grad) gi->ensure_grad();
      if (bi->requires_grad) bi->ensure_grad();
#pragma omp parallel for schedule(static)
      for (std::int64_t c = 0; c < std::int64_t(C); ++c) {
        const T mean = (*mu)[c], is = (*inv)[c], gam = gi->value[c];
        T sum_dy = 0, sum_dy_xhat = 0;
        for (std::size_t b = 0; b < B; ++b) {
          const std::size_t off = (b * C + c) * HW;
          for (std::size_t i = 0; i < HW; ++i) {
            const T dy = up(off, i);
            sum_dy += dy;
            sum_dy_xhat += dy * ((xi->value[off + i] - mean) * is);
          }
        }
        if (gi->requires_grad) gi->grad[c] += sum_dy_xhat;
        if (bi->requires_grad) bi->grad[c] += sum_dy;
        if (!need_x) continue;
        if (train) {
          const T k1 = sum_dy / T(m), k2 = sum_dy_xhat / T(m);
          for (std::size_t b = 0; b < B; ++b) {
            const std::size_t off = (b * C + c) * HW;
            for (std::size_t i = 0; i < HW; ++i) {
              const T xhat = (xi->value[off + i] - mean) * is;
              xi->grad[off + i] += gam * is * (up(off, i) - k1 - xhat * k2);
            }
          }
        } else {
          for (std::size_t b = 0; b < B; ++b) {
            const std::size_t off = (b * C + c) * HW;
            for (std::size_t i = 0; i < HW; ++i)
              xi->grad[off + i] += gam * is * up(off, i);
          }
        }
      }
    });
  }
  return y;
}

// Inverted dropout; identity in eval mode.
template <typename T>
Tensor<T> dropout(const Tensor<T>& x, double rate, Rng& rng, bool train) {
  if (!train || rate <= 0.0) return x;
  const T keep = T(1.0 - rate);
  const bool traced = grad_needed<T>({&x});
  Tensor<T> y = make_out<T>(x.shape(), traced);
  auto mask = std::make_shared<std::vector<T>>(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    (*mask)[i] = rng.uniform() < rate ? T(0) : T(1) / keep;
    y.data()[i] = x.data()[i] * (*mask)[i];
  }
  if (traced) {
    auto xi = x.impl(), yi = y.impl();
    active_tape<T>()->record(yi, [xi, yi, mask] {
      if (!xi->requires_grad) return;
      xi->ensure_grad();
      for (std::size_t i = 0; i < yi->grad.size(); ++i)
        xi->grad[i] += yi->grad[i] * (*mask)[i];
    });
  }
  return y;
}

// ---- LSTM cell (gates per the standard formulation on [d; h_prev]) ----

template <typename T>
struct LstmWeights {
  Tensor<T> w_f, w_in, w_out, w_c;  // each [C, 2C]
  Tensor<T> b_f, b_in, b_out, b_c;  // each [C]
};

template <typename T>
struct LstmState {
  Tensor<T> h, c;
};

template <typename T>
LstmState<T> lstm_cell(const Tensor<T>& d, const Tensor<T>& h_prev,
                       const Tensor<T>& c_prev, const LstmWeights<T>& w) {
  check_same_shape(d, h_prev, "lstm_cell");
  check_same_shape(d, c_prev, "lstm_cell");
  const std::size_t C = d.dim(1);
  if (w.w_f.dim(0) != C || w.w_f.dim(1) != 2 * C)
    throw DimensionError("lstm_cell: weight shape must be [C,2C]");
  Tensor<T> z = concat_cols(d, h_prev);
  Tensor<T> f = sigmoid(linear(z, w.w_f, w.b_f));
  Tensor<T> i = sigmoid(linear(z, w.w_in, w.b_in));
  Tensor<T> o = sigmoid(linear(z, w.w_out, w.b_out));
  Tensor<T> ct = tanh_op(linear(z, w.w_c, w.b_c));
  Tensor<T> c = add(mul(f, c_prev), mul(i, ct));
  Tensor<T> h = mul(o, tanh_op(c));
  return {h, c};
}

}  // namespace pq::ops
