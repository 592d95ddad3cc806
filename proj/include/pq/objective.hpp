#pragma once

// Training objective: MAE data term plus a tensor-normal prior over the
// regression-head bank with Kronecker-structured covariance. The Kronecker
// inverse is applied as three mode products; the full covariance is never
// materialized.

#include <vector>

#include "pq/ops.hpp"

namespace pq::objective {

struct CovarianceSet {
  int d_o = 3, d_i = 5, d_c = 100;
  double lambda = 1e-3;
  // row-major factors with precomputed inverses and log-determinants
  std::vector<double> sigma_o, sigma_i, sigma_c;
  std::vector<double> inv_o, inv_i, inv_c;
  double logdet_o = 0, logdet_i = 0, logdet_c = 0;

  // Sum_k (DoDiDc/Dk) * ln|Sigma_k|
  double logdet_penalty() const {
    const double P = double(d_o) * d_i * d_c;
    return P / d_o * logdet_o + P / d_i * logdet_i + P / d_c * logdet_c;
  }
};

CovarianceSet identity_covariances(int d_o, int d_i, int d_c,
                                   double lambda = 1e-3);
// Validates SPD (names the offending factor) and precomputes inverses.
CovarianceSet make_covariances(int d_o, int d_i, int d_c,
                               std::vector<double> sigma_o,
                               std::vector<double> sigma_i,
                               std::vector<double> sigma_c, double lambda);

// Flip-flop maximum-likelihood update from the single observation W
// ([d_o, d_i, d_c], row-major): 5 sweeps, eigenvalue ridge floor 1e-6,
// trace gauge fixed to trace(Sigma_o)=d_o and trace(Sigma_i)=d_i with the
// compensating scale absorbed into Sigma_c. All-zero W yields identities.
CovarianceSet update_covariances(const std::vector<double>& W, int d_o,
                                 int d_i, int d_c, double lambda = 1e-3,
                                 int sweeps = 5);

namespace detail {
// Z = W x1 inv_o x2 inv_i x3 inv_c  (mode products with the factor inverses)
template <typename T>
std::vector<T> kron_inverse_apply(const T* W, const CovarianceSet& cov) {
  const int Do = cov.d_o, Di = cov.d_i, Dc = cov.d_c;
  std::vector<T> a(std::size_t(Do) * Di * Dc), b(a.size());
  // mode-o
  for (int o = 0; o < Do; ++o)
    for (int i = 0; i < Di; ++i)
      for (int c = 0; c < Dc; ++c) {
        T acc = 0;
        for (int o2 = 0; o2 < Do; ++o2)
          acc += T(cov.inv_o[o * Do + o2]) * W[(std::size_t(o2) * Di + i) * Dc + c];
        a[(std::size_t(o) * Di + i) * Dc + c] = acc;
      }
  // mode-i
  for (int o = 0; o < Do; ++o)
    for (int i = 0; i < Di; ++i)
      for (int c = 0; c < Dc; ++c) {
        T acc = 0;
        for (int i2 = 0; i2 < Di; ++i2)
          acc += T(cov.inv_i[i * Di + i2]) * a[(std::size_t(o) * Di + i2) * Dc + c];
        b[(std::size_t(o) * Di + i) * Dc + c] = acc;
      }
  // mode-c
  for (int o = 0; o < Do; ++o)
    for (int i = 0; i < Di; ++i) {
      const T* src = b.data() + (std::size_t(o) * Di + i) * Dc;
      T* dst = a.data() + (std::size_t(o) * Di + i) * Dc;
      for (int c = 0; c < Dc; ++c) {
        T acc = 0;
        for (int c2 = 0; c2 < Dc; ++c2) acc += T(cov.inv_c[c * Dc + c2]) * src[c2];
        dst[c] = acc;
      }
    }
  return a;
}
}  // namespace detail

// Eq.-9 data term; identical to ops::mae, re-exported under the module name.
template <typename T>
Tensor<T> mae_loss(const Tensor<T>& pred, const Tensor<T>& target) {
  return ops::mae(pred, target);
}

// vec(W)' Sigma_lr^-1 vec(W) - logdet penalty, as one tape operation.
// Covariances are constants within a step; gradient w.r.t. W is 2*Z.
template <typename T>
Tensor<T> tn_regularizer(const Tensor<T>& W, const CovarianceSet& cov) {
  if (W.rank() != 3 || int(W.dim(0)) != cov.d_o || int(W.dim(1)) != cov.d_i ||
      int(W.dim(2)) != cov.d_c)
    throw DimensionError("tn_regularizer: head bank does not match covariance dims");
  const bool traced = ops::grad_needed<T>({&W});
  auto Z = std::make_shared<std::vector<T>>(
      detail::kron_inverse_apply(W.data().data(), cov));
  T quad = 0;
  for (std::size_t i = 0; i < W.size(); ++i) quad += W.data()[i] * (*Z)[i];
  Tensor<T> y = ops::make_out<T>({1}, traced);
  y.data()[0] = quad - T(cov.logdet_penalty());
  if (traced) {
    auto wi = W.impl(), yi = y.impl();
    ops::active_tape<T>()->record(yi, [wi, yi, Z] {
      if (!wi->requires_grad) return;
      wi->ensure_grad();
      const T g = yi->grad[0];
      for (std::size_t i = 0; i < wi->grad.size(); ++i)
        wi->grad[i] += T(2) * g * (*Z)[i];
    });
  }
  return y;
}

// l1 + lambda * (quadratic form - logdet penalty)
template <typename T>
Tensor<T> total_loss(const Tensor<T>& pred, const Tensor<T>& target,
                     const Tensor<T>& heads_w, const CovarianceSet& cov) {
  if (cov.lambda < 0) throw ConfigError("total_loss: lambda must be >= 0");
  Tensor<T> l1 = mae_loss(pred, target);
  if (cov.lambda == 0) return l1;
  return ops::add(l1, ops::affine(tn_regularizer(heads_w, cov), cov.lambda, 0.0));
}

}  // namespace pq::objective
