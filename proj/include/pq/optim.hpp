#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "pq/tensor.hpp"

namespace pq {

template <typename T>
struct NamedParam {
  std::string name;
  Tensor<T> t;
};

template <typename T>
struct AdamState {
  long step = 0;
  double lr = 4e-4;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  // keyed by parameter name; first = m, second = v
  std::map<std::string, std::pair<std::vector<T>, std::vector<T>>> moments;
};

// Standard bias-corrected Adam. Aborts (throws) on NaN gradients before
// touching any parameter, naming the offending one.
template <typename T>
void adam_step(std::vector<NamedParam<T>>& params, AdamState<T>& st) {
  if (!(st.beta1 > 0 && st.beta1 < 1 && st.beta2 > 0 && st.beta2 < 1))
    throw ConfigError("adam_step: betas must lie in (0,1)");
  if (!(st.lr > 0)) throw ConfigError("adam_step: lr must be positive");
  for (auto& p : params) {
    if (!p.t.has_grad()) continue;
    for (T g : p.t.grad())
      if (std::isnan(double(g)))
        throw NumericError("adam_step: NaN gradient in parameter '" + p.name + "'");
  }
  st.step++;
  const double bc1 = 1.0 - std::pow(st.beta1, double(st.step));
  const double bc2 = 1.0 - std::pow(st.beta2, double(st.step));
  for (auto& p : params) {
    auto& [m, v] = st.moments[p.name];
    const std::size_t n = p.t.size();
    if (m.size() != n) {
      m.assign(n, T(0));
      v.assign(n, T(0));
    }
    const std::vector<T>* gp = p.t.has_grad() ? &p.t.grad() : nullptr;
    auto& w = p.t.data();
    for (std::size_t i = 0; i < n; ++i) {
      const double g = gp ? double((*gp)[i]) : 0.0;
      m[i] = T(st.beta1 * double(m[i]) + (1.0 - st.beta1) * g);
      v[i] = T(st.beta2 * double(v[i]) + (1.0 - st.beta2) * g * g);
      const double mhat = double(m[i]) / bc1;
      const double vhat = double(v[i]) / bc2;
      w[i] = T(double(w[i]) - st.lr * mhat / (std::sqrt(vhat) + st.eps));
    }
  }
}

struct PlateauPolicy {
  int patience = 5;
  double min_rel_improve = 1e-4;
  int max_decays = 3;
  double factor = 0.12;
};

// Number of decay events implied by a validation-loss history: a decay fires
// after `patience` consecutive evaluations without a relative improvement of
// more than min_rel_improve over the best seen; the first evaluation counts
// as a stall (it establishes the baseline).
inline int plateau_decay_count(const std::vector<double>& history,
                               const PlateauPolicy& pol = {}) {
  double best = 0.0;
  bool have_best = false;
  int stall = 0, decays = 0;
  for (double l : history) {
    const bool improved = have_best && l < best * (1.0 - pol.min_rel_improve);
    if (improved) {
      best = l;
      stall = 0;
      continue;
    }
    if (!have_best) {
      best = l;
      have_best = true;
    }
    if (++stall >= pol.patience && decays < pol.max_decays) {
      decays++;
      stall = 0;
    }
  }
  return decays;
}

// Recomputes the learning rate from the full history (pure given inputs).
template <typename T>
double lr_plateau_decay(AdamState<T>& st, const std::vector<double>& history,
                        double initial_lr, const PlateauPolicy& pol = {}) {
  if (history.empty()) throw ConfigError("lr_plateau_decay: empty history");
  const int d = plateau_decay_count(history, pol);
  st.lr = initial_lr * std::pow(pol.factor, double(d));
  return st.lr;
}

}  // namespace pq
