#include "pq/objective.hpp"

#include <Eigen/Dense>

namespace pq::objective {

namespace {

constexpr double kRidgeFloor = 1e-6;

using Mat = Eigen::MatrixXd;

Mat to_eigen(const std::vector<double>& v, int n) {
  Mat m(n, n);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) m(r, c) = v[std::size_t(r) * n + c];
  return m;
}

std::vector<double> from_eigen(const Mat& m) {
  std::vector<double> v(std::size_t(m.rows()) * m.cols());
  for (int r = 0; r < m.rows(); ++r)
    for (int c = 0; c < m.cols(); ++c) v[std::size_t(r) * m.cols() + c] = m(r, c);
  return v;
}

// Clamp eigenvalues at the ridge floor; returns true if anything was clamped.
bool ridge_floor(Mat& s) {
  Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (s + s.transpose()));
  Eigen::VectorXd ev = es.eigenvalues();
  bool clamped = false;
  for (int i = 0; i < ev.size(); ++i)
    if (ev(i) < kRidgeFloor) {
      ev(i) = kRidgeFloor;
      clamped = true;
    }
  if (clamped)
    s = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
  else
    s = 0.5 * (s + s.transpose());
  return clamped;
}

void finalize(CovarianceSet& cov, Mat so, Mat si, Mat sc) {
  // inverses and log-dets via eigendecomposition (factors are SPD here)
  auto inv_logdet = [](const Mat& s, std::vector<double>& inv, double& logdet) {
    Eigen::SelfAdjointEigenSolver<Mat> es(s);
    const Eigen::VectorXd& ev = es.eigenvalues();
    logdet = 0;
    Eigen::VectorXd evi(ev.size());
    for (int i = 0; i < ev.size(); ++i) {
      logdet += std::log(ev(i));
      evi(i) = 1.0 / ev(i);
    }
    inv = from_eigen(es.eigenvectors() * evi.asDiagonal() *
                     es.eigenvectors().transpose());
  };
  cov.sigma_o = from_eigen(so);
  cov.sigma_i = from_eigen(si);
  cov.sigma_c = from_eigen(sc);
  inv_logdet(so, cov.inv_o, cov.logdet_o);
  inv_logdet(si, cov.inv_i, cov.logdet_i);
  inv_logdet(sc, cov.inv_c, cov.logdet_c);
}

}  // namespace

CovarianceSet identity_covariances(int d_o, int d_i, int d_c, double lambda) {
  CovarianceSet cov;
  cov.d_o = d_o;
  cov.d_i = d_i;
  cov.d_c = d_c;
  cov.lambda = lambda;
  finalize(cov, Mat::Identity(d_o, d_o), Mat::Identity(d_i, d_i),
           Mat::Identity(d_c, d_c));
  return cov;
}

CovarianceSet make_covariances(int d_o, int d_i, int d_c,
                               std::vector<double> sigma_o,
                               std::vector<double> sigma_i,
                               std::vector<double> sigma_c, double lambda) {
  auto validate = [](const std::vector<double>& v, int n, const char* name) {
    if (v.size() != std::size_t(n) * n)
      throw DimensionError(std::string("covariance ") + name + ": wrong size");
    Mat m = to_eigen(v, n);
    const double asym = (m - m.transpose()).cwiseAbs().maxCoeff();
    if (asym > 1e-10)
      throw NumericError(std::string("covariance ") + name + ": not symmetric");
    Eigen::SelfAdjointEigenSolver<Mat> es(m);
    if (es.eigenvalues().minCoeff() < kRidgeFloor * (1.0 - 1e-12))
      throw NumericError(std::string("covariance ") + name +
                         ": not positive definite (below ridge floor)");
    return m;
  };
  Mat so = validate(sigma_o, d_o, "sigma_o");
  Mat si = validate(sigma_i, d_i, "sigma_i");
  Mat sc = validate(sigma_c, d_c, "sigma_c");
  CovarianceSet cov;
  cov.d_o = d_o;
  cov.d_i = d_i;
  cov.d_c = d_c;
  cov.lambda = lambda;
  finalize(cov, std::move(so), std::move(si), std::move(sc));
  return cov;
}

CovarianceSet update_covariances(const std::vector<double>& W, int d_o,
                                 int d_i, int d_c, double lambda, int sweeps) {
  const std::size_t n = std::size_t(d_o) * d_i * d_c;
  if (W.size() != n)
    throw DimensionError("update_covariances: W size does not match dims");
  bool all_zero = true;
  for (double v : W)
    if (v != 0.0) {
      all_zero = false;
      break;
    }
  if (all_zero) return identity_covariances(d_o, d_i, d_c, lambda);

  Mat so = Mat::Identity(d_o, d_o), si = Mat::Identity(d_i, d_i),
      sc = Mat::Identity(d_c, d_c);
  auto w_at = [&](int o, int i, int c) {
    return W[(std::size_t(o) * d_i + i) * d_c + c];
  };

  CovarianceSet cur;
  cur.d_o = d_o;
  cur.d_i = d_i;
  cur.d_c = d_c;
  for (int sweep = 0; sweep < sweeps; ++sweep) {
    for (int mode = 0; mode < 3; ++mode) {
      finalize(cur, so, si, sc);
      // Whitened tensor via the other two factor inverses: set this mode's
      // inverse to identity, then Sigma_mode = unfold * unfold' / d_rest.
      CovarianceSet tmp = cur;
      if (mode == 0) tmp.inv_o = from_eigen(Mat::Identity(d_o, d_o));
      if (mode == 1) tmp.inv_i = from_eigen(Mat::Identity(d_i, d_i));
      if (mode == 2) tmp.inv_c = from_eigen(Mat::Identity(d_c, d_c));
      const std::vector<double> Z = detail::kron_inverse_apply(W.data(), tmp);
      auto z_at = [&](int o, int i, int c) {
        return Z[(std::size_t(o) * d_i + i) * d_c + c];
      };
      if (mode == 0) {
        const double norm = double(d_i) * d_c;
        for (int a = 0; a < d_o; ++a)
          for (int b = 0; b < d_o; ++b) {
            double acc = 0;
            for (int i = 0; i < d_i; ++i)
              for (int c = 0; c < d_c; ++c) acc += w_at(a, i, c) * z_at(b, i, c);
            so(a, b) = acc / norm;
          }
        ridge_floor(so);
      } else if (mode == 1) {
        const double norm = double(d_o) * d_c;
        for (int a = 0; a < d_i; ++a)
          for (int b = 0; b < d_i; ++b) {
            double acc = 0;
            for (int o = 0; o < d_o; ++o)
              for (int c = 0; c < d_c; ++c) acc += w_at(o, a, c) * z_at(o, b, c);
            si(a, b) = acc / norm;
          }
        ridge_floor(si);
      } else {
        const double norm = double(d_o) * d_i;
        for (int a = 0; a < d_c; ++a)
          for (int b = 0; b <= a; ++b) {
            double acc = 0;
            for (int o = 0; o < d_o; ++o)
              for (int i = 0; i < d_i; ++i) acc += w_at(o, i, a) * z_at(o, i, b);
            sc(a, b) = acc / norm;
            sc(b, a) = sc(a, b);
          }
        ridge_floor(sc);
      }
    }
  }

  // Trace gauge: trace(so)=d_o, trace(si)=d_i; scale absorbed into sc so the
  // Kronecker product (and hence the objective) is unchanged. Flooring can
  // interact with the rescale, so iterate to a clean fixed point.
  for (int pass = 0; pass < 8; ++pass) {
    bool clamped = ridge_floor(so) | ridge_floor(si) | ridge_floor(sc);
    const double a_o = so.trace() / d_o;
    so /= a_o;
    sc *= a_o;
    const double a_i = si.trace() / d_i;
    si /= a_i;
    sc *= a_i;
    if (!clamped && pass > 0) break;
  }

  CovarianceSet cov;
  cov.d_o = d_o;
  cov.d_i = d_i;
  cov.d_c = d_c;
  cov.lambda = lambda;
  finalize(cov, std::move(so), std::move(si), std::move(sc));
  return cov;
}

}  // namespace pq::objective
