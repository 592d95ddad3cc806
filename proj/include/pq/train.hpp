#pragma once

// Fold-wise training: Adam on the regularized objective, per-epoch covariance
// re-estimation, plateau learning-rate decay, best-checkpoint retention.

#include <cstdio>
#include <limits>
#include <map>

#include "pq/eval.hpp"
#include "pq/model.hpp"
#include "pq/objective.hpp"
#include "pq/optim.hpp"
#include "pq/phantom.hpp"

namespace pq::train {

struct TrainConfig {
  double lr = 4e-4;
  int batch_slices = 60;  // 3 subjects x 20 frames
  double lambda = 1e-3;
  int epochs = 30;
  std::uint64_t seed = 7;
  bool augmentation = false;
  PlateauPolicy plateau{};
};

struct TrainResult {
  double best_val_mae = std::numeric_limits<double>::infinity();
  int best_epoch = -1;
  std::vector<double> val_history;  // overall normalized val MAE per epoch
  std::vector<double> train_history;
};

template <typename T>
void copy_values(const model::ModelParams<T>& src, model::ModelParams<T>& dst) {
  auto s = const_cast<model::ModelParams<T>&>(src).named_params();
  auto d = dst.named_params();
  for (std::size_t i = 0; i < s.size(); ++i) d[i].t.data() = s[i].t.data();
  for (std::size_t i = 0; i < src.conv.size(); ++i) {
    dst.conv[i].rs.mean = src.conv[i].rs.mean;
    dst.conv[i].rs.var = src.conv[i].rs.var;
    dst.conv[i].rs.updates = src.conv[i].rs.updates;
  }
}

template <typename T>
struct Batch {
  Tensor<T> slices;   // [n*20, H, W]
  Tensor<T> targets;  // [n*20, 11] normalized
};

template <typename T>
Batch<T> make_batch(const std::vector<const phantom::CineSequence*>& subjects) {
  const int H = subjects.at(0)->frames.at(0).h;
  const int W = subjects.at(0)->frames.at(0).w;
  const std::size_t plane = std::size_t(H) * W;
  const std::size_t B = subjects.size() * model::kFrames;
  std::vector<T> x(B * plane), y(B * model::kIndices);
  std::size_t row = 0;
  for (const auto* s : subjects) {
    if (s->frames.size() != model::kFrames)
      throw DimensionError("make_batch: subject without exactly 20 frames");
    for (std::size_t t = 0; t < model::kFrames; ++t, ++row) {
      for (std::size_t i = 0; i < plane; ++i)
        x[row * plane + i] = T(s->frames[t].v[i]);
      const auto norm = phantom::normalize_indices(s->truth[t], H, W, s->spacing);
      for (int i = 0; i < phantom::kIndices; ++i)
        y[row * model::kIndices + i] = T(norm[i]);
    }
  }
  Batch<T> b;
  b.slices = Tensor<T>::from({B, std::size_t(H), std::size_t(W)}, std::move(x));
  b.targets = Tensor<T>::from({B, model::kIndices}, std::move(y));
  return b;
}

// Normalized-unit validation MAE (overall and per family).
template <typename T>
std::array<double, 4> validation_mae(model::ModelParams<T>& m,
                                     const spt::FilterBank& bank,
                                     const std::vector<const phantom::CineSequence*>& val) {
  Rng rng(0);
  double fam[3] = {0, 0, 0};
  std::size_t fam_n[3] = {0, 0, 0};
  for (const auto* s : val) {
    Batch<T> b = make_batch<T>({s});
    Tensor<T> pred = model::sequence_forward(m, bank, b.slices, false, rng);
    for (std::size_t r = 0; r < pred.dim(0); ++r)
      for (int i = 0; i < phantom::kIndices; ++i) {
        const double err = std::abs(double(pred.data()[r * phantom::kIndices + i]) -
                                    double(b.targets.data()[r * phantom::kIndices + i]));
        const int f = phantom::index_family(i);
        fam[f] += err;
        fam_n[f]++;
      }
  }
  std::array<double, 4> out{};
  double tot = 0;
  std::size_t tot_n = 0;
  for (int f = 0; f < 3; ++f) {
    tot += fam[f];
    tot_n += fam_n[f];
    out[f + 1] = fam[f] / double(std::max<std::size_t>(1, fam_n[f]));
  }
  out[0] = tot / double(std::max<std::size_t>(1, tot_n));
  return out;
}

// Trains one fold on `subjects`; the best-validation parameters are restored
// into `m` on return. Throws NumericError on NaN (callers keep the last
// written checkpoint).
template <typename T>
TrainResult train_fold(model::ModelParams<T>& m, objective::CovarianceSet& cov,
                       const spt::FilterBank& bank,
                       const std::vector<phantom::CineSequence>& subjects,
                       const eval::FoldSplit& fold, const TrainConfig& cfg,
                       std::FILE* log = nullptr) {
  if (cfg.batch_slices % model::kFrames != 0)
    throw ConfigError("train: batch_slices must be a multiple of 20 (whole subjects)");
  const int batch_subjects = cfg.batch_slices / model::kFrames;

  std::map<std::uint32_t, const phantom::CineSequence*> by_id;
  for (const auto& s : subjects) by_id[s.id] = &s;
  auto resolve = [&](const std::vector<std::uint32_t>& ids) {
    std::vector<const phantom::CineSequence*> out;
    for (auto id : ids) {
      auto it = by_id.find(id);
      if (it == by_id.end())
        throw ConfigError("train: fold references unknown subject " + std::to_string(id));
      out.push_back(it->second);
    }
    return out;
  };
  const auto train_subj = resolve(fold.train);
  const auto val_subj = resolve(fold.val);

  if (log) {
    std::fprintf(log, "# train lr=%g lambda=%g batch_slices=%d epochs=%d seed=%llu aug=%d\n",
                 cfg.lr, cfg.lambda, cfg.batch_slices, cfg.epochs,
                 (unsigned long long)cfg.seed, int(cfg.augmentation));
    std::fprintf(log, "epoch,train_loss,val_mae,val_areas,val_dims,val_thick,lr\n");
  }

  AdamState<T> adam;
  adam.lr = cfg.lr;
  cov.lambda = cfg.lambda;

  TrainResult res;
  model::ModelParams<T> best = model::build_variant<T>(m.variant, m.width, 0, m.rows, m.cols);
  copy_values(m, best);
  // epochs=0 keeps the initialization as the result
  res.best_val_mae = std::numeric_limits<double>::infinity();

  Rng order_rng(cfg.seed ^ 0x0bafull);
  Rng dropout_rng(cfg.seed ^ 0xd20ull);
  Rng aug_rng(cfg.seed ^ 0xa36ull);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<const phantom::CineSequence*> order = train_subj;
    order_rng.shuffle(order);
    double ep_loss = 0;
    int ep_batches = 0;
    for (std::size_t at = 0; at < order.size(); at += batch_subjects) {
      std::vector<const phantom::CineSequence*> group(
          order.begin() + at,
          order.begin() + std::min(order.size(), at + batch_subjects));
      std::vector<phantom::CineSequence> augmented;
      if (cfg.augmentation) {
        augmented.reserve(group.size());
        for (const auto* s : group)
          augmented.push_back(phantom::augment(*s, aug_rng.next_u64()));
        group.clear();
        for (const auto& s : augmented) group.push_back(&s);
      }
      Batch<T> b = make_batch<T>(group);
      Tape<T> tape;
      TapeScope<T> scope(tape);
      Tensor<T> pred = model::sequence_forward(m, bank, b.slices, true, dropout_rng);
      Tensor<T> loss = objective::total_loss(pred, b.targets, m.heads_w, cov);
      const double lv = double(loss.item());
      if (std::isnan(lv))
        throw NumericError("train: NaN loss at epoch " + std::to_string(epoch));
      m.zero_grads();
      tape.backward(loss);
      auto params = m.named_params();
      adam_step(params, adam);
      ep_loss += lv;
      ep_batches++;
    }
    ep_loss /= std::max(1, ep_batches);
    res.train_history.push_back(ep_loss);

    const auto v = validation_mae(m, bank, val_subj);
    res.val_history.push_back(v[0]);
    if (v[0] < res.best_val_mae) {
      res.best_val_mae = v[0];
      res.best_epoch = epoch;
      copy_values(m, best);
    }
    // covariance re-estimation between epochs (coordinate-descent view)
    {
      std::vector<double> w(m.heads_w.size());
      for (std::size_t i = 0; i < w.size(); ++i) w[i] = double(m.heads_w.data()[i]);
      const auto sh = m.heads_w.shape();
      cov = objective::update_covariances(w, int(sh[0]), int(sh[1]), int(sh[2]),
                                          cfg.lambda);
    }
    lr_plateau_decay(adam, res.val_history, cfg.lr, cfg.plateau);
    if (log) {
      std::fprintf(log, "%d,%.6g,%.6g,%.6g,%.6g,%.6g,%.6g\n", epoch, ep_loss,
                   v[0], v[1], v[2], v[3], adam.lr);
      std::fflush(log);
    }
  }
  if (res.best_epoch >= 0) copy_values(best, m);
  return res;
}

}  // namespace pq::train
