#pragma once

// Metrics (MAE, pooled Pearson, Robustness Ratio), the five-fold protocol,
// and perturbation sweeps producing RobustnessReports with CSV/JSON/SVG
// artifacts.

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "pq/model.hpp"
#include "pq/perturb.hpp"
#include "pq/phantom.hpp"

namespace pq::eval {

struct Moments {
  double mean = 0, stddev = 0;
  std::size_t n = 0;
};

// mean +- population std of |pred - truth| (two-pass)
Moments mae_metric(const std::vector<double>& preds,
                   const std::vector<double>& truth);

// Pooled over all samples; nullopt when either side has zero variance.
std::optional<double> pearson_global(const std::vector<double>& preds,
                                     const std::vector<double>& truth);

struct FoldSplit {
  std::vector<std::uint32_t> train, val, test;
};

// Seeded shuffle into 5 equal groups; per fold the remaining subjects split
// train/val at the 101:15 ratio (floor to val).
std::vector<FoldSplit> crossval_split(std::vector<std::uint32_t> subject_ids,
                                      std::uint64_t seed);

struct ReportRow {
  std::string kind;
  int level = 0;
  std::string index;
  double mae_mean = 0, mae_std = 0;
  double ratio = 1.0;  // R_{i,p}
};

struct FamilyAggregate {
  std::string kind;
  int level = 0;
  std::string family;
  double mean_ratio = 1.0;
};

struct RobustnessReport {
  std::string variant;
  int fold = 0;
  std::uint64_t seed = 0;
  std::string config_hash;
  std::vector<ReportRow> rows;
  std::vector<FamilyAggregate> aggregates;
};

// Elementwise Eq.-12 ratio; MAE(p=0)=0 raises (surfaced, not masked).
double robustness_ratio(double mae_p, double mae_clean);

struct GridEntry {
  perturb::Kind kind = perturb::Kind::None;
  std::vector<int> levels;
  std::vector<double> alphas;  // PGD only
  std::vector<int> iters;      // PGD only
};

std::vector<GridEntry> default_grid();

void write_report_csv(const RobustnessReport& r, const std::string& path);
void write_report_json(const RobustnessReport& r, const std::string& path);
void write_report_svgs(const RobustnessReport& r, const std::string& dir);
RobustnessReport read_report_json(const std::string& path);

// Per-subject eval-mode predictions in physical units, frame-major per
// subject: out[s][t] is an IndexVector.
template <typename T>
std::vector<std::vector<phantom::IndexVector>> predict_sequences(
    model::ModelParams<T>& m, const spt::FilterBank& bank,
    const std::vector<phantom::CineSequence>& subjects) {
  std::vector<std::vector<phantom::IndexVector>> out;
  Rng rng(0);  // eval mode; dropout inactive
  for (const auto& seq : subjects) {
    const int H = seq.frames.at(0).h, W = seq.frames.at(0).w;
    const std::size_t plane = std::size_t(H) * W;
    std::vector<T> x(seq.frames.size() * plane);
    for (std::size_t t = 0; t < seq.frames.size(); ++t)
      for (std::size_t i = 0; i < plane; ++i)
        x[t * plane + i] = T(seq.frames[t].v[i]);
    Tensor<T> input = Tensor<T>::from(
        {seq.frames.size(), std::size_t(H), std::size_t(W)}, std::move(x));
    Tensor<T> pred = model::sequence_forward(m, bank, input, false, rng);
    std::vector<phantom::IndexVector> rows(seq.frames.size());
    for (std::size_t t = 0; t < rows.size(); ++t) {
      phantom::IndexVector norm;
      for (int i = 0; i < phantom::kIndices; ++i)
        norm[i] = double(pred.data()[t * phantom::kIndices + i]);
      rows[t] = phantom::denormalize_indices(norm, H, W, seq.spacing);
    }
    out.push_back(std::move(rows));
  }
  return out;
}

// MAE per index over all (subject, frame) pairs, physical units.
std::vector<Moments> mae_per_index(
    const std::vector<std::vector<phantom::IndexVector>>& preds,
    const std::vector<phantom::CineSequence>& subjects);

std::vector<std::optional<double>> pearson_per_index(
    const std::vector<std::vector<phantom::IndexVector>>& preds,
    const std::vector<phantom::CineSequence>& subjects);

// Evaluates the clean MAE once, then every grid cell; emits rows and family
// aggregates. Deterministic given (model, subjects, grid, seed).
template <typename T>
RobustnessReport sweep(model::ModelParams<T>& m, const spt::FilterBank& bank,
                       const std::vector<phantom::CineSequence>& subjects,
                       const std::vector<GridEntry>& grid, std::uint64_t seed) {
  RobustnessReport rep;
  rep.variant = spt::variant_name(m.variant);
  rep.seed = seed;

  const auto clean_preds = predict_sequences(m, bank, subjects);
  const auto clean = mae_per_index(clean_preds, subjects);
  auto push_rows = [&](const std::string& kind, int level,
                       const std::vector<Moments>& mm) {
    double fam_acc[3] = {0, 0, 0};
    int fam_n[3] = {0, 0, 0};
    for (int i = 0; i < phantom::kIndices; ++i) {
      ReportRow row;
      row.kind = kind;
      row.level = level;
      row.index = phantom::index_name(i);
      row.mae_mean = mm[i].mean;
      row.mae_std = mm[i].stddev;
      row.ratio = robustness_ratio(mm[i].mean, clean[i].mean);
      rep.rows.push_back(row);
      const int f = phantom::index_family(i);
      fam_acc[f] += row.ratio;
      fam_n[f]++;
    }
    for (int f = 0; f < 3; ++f)
      rep.aggregates.push_back(
          {kind, level, phantom::family_name(f), fam_acc[f] / fam_n[f]});
  };
  push_rows("none", 0, clean);

  Rng base(seed);
  for (const auto& entry : grid) {
    if (entry.kind == perturb::Kind::None) continue;
    if (entry.kind == perturb::Kind::PGD) {
      int level = 0;
      for (int it : entry.iters)
        for (double a : entry.alphas) {
          level++;
          std::vector<phantom::CineSequence> pert;
          for (const auto& s : subjects)
            pert.push_back(perturb::pgd_attack(m, bank, s, a, it));
          const auto preds = predict_sequences(m, bank, pert);
          perturb::PerturbationSpec spec;
          spec.kind = perturb::Kind::PGD;
          spec.pgd_alpha = a;
          spec.pgd_iters = it;
          push_rows(spec.label(), level, mae_per_index(preds, subjects));
        }
      continue;
    }
    for (int level : entry.levels) {
      std::vector<phantom::CineSequence> pert;
      for (const auto& s : subjects) {
        perturb::PerturbationSpec spec;
        spec.kind = entry.kind;
        spec.level = level;
        const std::uint64_t salt =
            fnv1a64(std::string(perturb::kind_name(entry.kind)) + "/" +
                    std::to_string(level) + "/" + std::to_string(s.id));
        pert.push_back(perturb::apply_to_sequence(s, spec, base.fork(salt)));
      }
      const auto preds = predict_sequences(m, bank, pert);
      push_rows(perturb::kind_name(entry.kind), level, mae_per_index(preds, subjects));
    }
  }
  return rep;
}

}  // namespace pq::eval
