#pragma once

#include <string>
#include <vector>

#include "pq/eval.hpp"
#include "pq/phantom.hpp"
#include "pq/spt.hpp"
#include "pq/train.hpp"

namespace pq {

// Single declarative experiment config; flags override fields.
struct ExperimentConfig {
  spt::VariantId variant = spt::VariantId::SPT_SC_L;
  double width = 0.25;
  std::string precision = "f32";  // f32 | f64
  std::string dataset;            // path to a PQDS file; empty = generate
  int subjects = 20;
  phantom::PhantomConfig phantom_cfg;
  train::TrainConfig training;
  std::vector<eval::GridEntry> grid;  // empty = default grid
  std::vector<int> folds = {0};
  std::string output_dir = "runs/out";
};

ExperimentConfig config_from_json(const std::string& json_text);
ExperimentConfig load_config(const std::string& path);
std::string config_to_json(const ExperimentConfig& cfg);  // canonical form
std::string config_hash(const ExperimentConfig& cfg);

}  // namespace pq
