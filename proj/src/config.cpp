#include "pq/config.hpp"

#include <cstdlib>
#include <fstream>

#include "json.hpp"

namespace pq {

using nlohmann::json;

namespace {

void parse_grid(const json& j, std::vector<eval::GridEntry>& grid) {
  for (const auto& e : j) {
    eval::GridEntry g;
    g.kind = perturb::parse_kind(e.at("kind").get<std::string>());
    if (e.contains("levels")) g.levels = e["levels"].get<std::vector<int>>();
    if (e.contains("alphas")) g.alphas = e["alphas"].get<std::vector<double>>();
    if (e.contains("iters")) g.iters = e["iters"].get<std::vector<int>>();
    if (g.kind == perturb::Kind::PGD) {
      if (g.alphas.empty() || g.iters.empty())
        throw ConfigError("config: pgd grid entry needs alphas[] and iters[]");
    } else {
      for (int l : g.levels)
        if (l < 1 || l > perturb::kind_levels(g.kind))
          throw ConfigError("config: level out of range for " +
                            std::string(perturb::kind_name(g.kind)));
    }
    grid.push_back(std::move(g));
  }
}

}  // namespace

ExperimentConfig config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("config: invalid JSON: ") + e.what());
  }
  ExperimentConfig cfg;
  if (j.contains("variant")) cfg.variant = spt::parse_variant(j["variant"]);
  cfg.width = j.value("width_multiplier", cfg.width);
  cfg.precision = j.value("precision", cfg.precision);
  if (cfg.precision != "f32" && cfg.precision != "f64")
    throw ConfigError("config: precision must be f32 or f64");
  cfg.dataset = j.value("dataset", cfg.dataset);
  cfg.subjects = j.value("subjects", cfg.subjects);
  if (j.contains("phantom")) {
    const auto& p = j["phantom"];
    auto& pc = cfg.phantom_cfg;
    pc.rows = p.value("rows", pc.rows);
    pc.cols = p.value("cols", pc.cols);
    pc.spacing = p.value("spacing", pc.spacing);
    pc.cavity_radius_ed = p.value("cavity_radius", pc.cavity_radius_ed);
    pc.radius_ejection = p.value("radius_ejection", pc.radius_ejection);
    pc.wall_base = p.value("wall_base", pc.wall_base);
    pc.wall_thickening = p.value("wall_thickening", pc.wall_thickening);
    pc.ellipticity = p.value("ellipticity", pc.ellipticity);
    pc.bias_strength = p.value("bias_strength", pc.bias_strength);
    pc.noise_sigma = p.value("noise_sigma", pc.noise_sigma);
    pc.seed = p.value("seed", pc.seed);
    pc.randomize = p.value("randomize", pc.randomize);
  }
  if (j.contains("training")) {
    const auto& t = j["training"];
    auto& tc = cfg.training;
    tc.lr = t.value("lr", tc.lr);
    tc.batch_slices = t.value("batch", tc.batch_slices);
    tc.lambda = t.value("lambda", tc.lambda);
    tc.epochs = t.value("epochs", tc.epochs);
    tc.seed = t.value("seed", tc.seed);
    tc.augmentation = t.value("augmentation", tc.augmentation);
  }
  if (j.contains("perturbations")) parse_grid(j["perturbations"], cfg.grid);
  if (j.contains("folds")) cfg.folds = j["folds"].get<std::vector<int>>();
  cfg.output_dir = j.value("output_dir", cfg.output_dir);

  if (cfg.training.batch_slices % phantom::kFrames != 0)
    throw ConfigError("config: batch must group whole subjects (multiple of 20 slices)");
  for (int f : cfg.folds)
    if (f < 0 || f > 4) throw ConfigError("config: folds must lie in 0..4");
  // Table-II coupling of the augmentation flag
  if (cfg.variant == spt::VariantId::BaselineAug) cfg.training.augmentation = true;
  if (cfg.variant == spt::VariantId::Baseline) cfg.training.augmentation = false;
  if (const char* s = std::getenv("PQ_SEED")) cfg.training.seed = std::strtoull(s, nullptr, 10);
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("config: cannot open " + path);
  std::string text((std::istreambuf_iterator<char>(f)),
                   std::istreambuf_iterator<char>());
  return config_from_json(text);
}

std::string config_to_json(const ExperimentConfig& cfg) {
  json j;
  j["variant"] = spt::variant_name(cfg.variant);
  j["width_multiplier"] = cfg.width;
  j["precision"] = cfg.precision;
  j["dataset"] = cfg.dataset;
  j["subjects"] = cfg.subjects;
  j["phantom"] = {{"rows", cfg.phantom_cfg.rows},
                  {"cols", cfg.phantom_cfg.cols},
                  {"spacing", cfg.phantom_cfg.spacing},
                  {"cavity_radius", cfg.phantom_cfg.cavity_radius_ed},
                  {"radius_ejection", cfg.phantom_cfg.radius_ejection},
                  {"wall_base", cfg.phantom_cfg.wall_base},
                  {"wall_thickening", cfg.phantom_cfg.wall_thickening},
                  {"ellipticity", cfg.phantom_cfg.ellipticity},
                  {"bias_strength", cfg.phantom_cfg.bias_strength},
                  {"noise_sigma", cfg.phantom_cfg.noise_sigma},
                  {"seed", cfg.phantom_cfg.seed},
                  {"randomize", cfg.phantom_cfg.randomize}};
  j["training"] = {{"lr", cfg.training.lr},
                   {"batch", cfg.training.batch_slices},
                   {"lambda", cfg.training.lambda},
                   {"epochs", cfg.training.epochs},
                   {"seed", cfg.training.seed},
                   {"augmentation", cfg.training.augmentation}};
  json grid = json::array();
  for (const auto& g : cfg.grid) {
    json e;
    e["kind"] = perturb::kind_name(g.kind);
    if (!g.levels.empty()) e["levels"] = g.levels;
    if (!g.alphas.empty()) e["alphas"] = g.alphas;
    if (!g.iters.empty()) e["iters"] = g.iters;
    grid.push_back(std::move(e));
  }
  j["perturbations"] = std::move(grid);
  j["folds"] = cfg.folds;
  j["output_dir"] = cfg.output_dir;
  return j.dump(1);
}

std::string config_hash(const ExperimentConfig& cfg) {
  return hex64(fnv1a64(config_to_json(cfg)));
}

}  // namespace pq
