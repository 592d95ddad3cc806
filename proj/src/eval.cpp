#include "pq/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "json.hpp"

namespace pq::eval {

Moments mae_metric(const std::vector<double>& preds,
                   const std::vector<double>& truth) {
  if (preds.size() != truth.size() || preds.empty())
    throw DimensionError("mae_metric: empty or mismatched inputs");
  Moments m;
  m.n = preds.size();
  double acc = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) acc += std::abs(preds[i] - truth[i]);
  m.mean = acc / double(m.n);
  double q = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const double d = std::abs(preds[i] - truth[i]) - m.mean;
    q += d * d;
  }
  m.stddev = std::sqrt(q / double(m.n));
  return m;
}

std::optional<double> pearson_global(const std::vector<double>& preds,
                                     const std::vector<double>& truth) {
  if (preds.size() != truth.size() || preds.size() < 2)
    throw DimensionError("pearson_global: need at least 2 samples");
  const double n = double(preds.size());
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    ma += preds[i];
    mb += truth[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const double a = preds[i] - ma, b = truth[i] - mb;
    sab += a * b;
    saa += a * a;
    sbb += b * b;
  }
  if (saa == 0.0 || sbb == 0.0) return std::nullopt;
  return sab / std::sqrt(saa * sbb);
}

std::vector<FoldSplit> crossval_split(std::vector<std::uint32_t> ids,
                                      std::uint64_t seed) {
  const std::size_t n = ids.size();
  if (n == 0 || n % 5 != 0)
    throw ConfigError("crossval_split: subject count must be a positive multiple of 5");
  Rng rng(seed ^ 0xf01d5ull);
  rng.shuffle(ids);
  const std::size_t group = n / 5;
  std::vector<FoldSplit> folds(5);
  for (int f = 0; f < 5; ++f) {
    FoldSplit& fs = folds[f];
    std::vector<std::uint32_t> rest;
    for (std::size_t i = 0; i < n; ++i) {
      if (i / group == std::size_t(f))
        fs.test.push_back(ids[i]);
      else
        rest.push_back(ids[i]);
    }
    // 101:15 train/val ratio of the non-test 4/5, scaled (floor to val)
    const std::size_t val = rest.size() * 15 / 116;
    fs.val.assign(rest.end() - val, rest.end());
    fs.train.assign(rest.begin(), rest.end() - val);
  }
  return folds;
}

double robustness_ratio(double mae_p, double mae_clean) {
  if (mae_clean == 0.0)
    throw NumericError("robustness_ratio: clean MAE is zero; ratio undefined");
  return mae_p / mae_clean;
}

std::vector<GridEntry> default_grid() {
  std::vector<GridEntry> g;
  auto levels = [](int n) {
    std::vector<int> v(n);
    for (int i = 0; i < n; ++i) v[i] = i + 1;
    return v;
  };
  g.push_back({perturb::Kind::TranslateH, levels(8), {}, {}});
  g.push_back({perturb::Kind::TranslateV, levels(8), {}, {}});
  g.push_back({perturb::Kind::Rotate, levels(10), {}, {}});
  g.push_back({perturb::Kind::GaussianNoise, levels(5), {}, {}});
  g.push_back({perturb::Kind::ImpulseNoise, levels(5), {}, {}});
  g.push_back({perturb::Kind::RicianNoise, levels(5), {}, {}});
  g.push_back({perturb::Kind::GaussianBlur, levels(5), {}, {}});
  g.push_back({perturb::Kind::Jpeg, levels(5), {}, {}});
  return g;
}

std::vector<Moments> mae_per_index(
    const std::vector<std::vector<phantom::IndexVector>>& preds,
    const std::vector<phantom::CineSequence>& subjects) {
  std::vector<Moments> out(phantom::kIndices);
  for (int i = 0; i < phantom::kIndices; ++i) {
    std::vector<double> p, t;
    for (std::size_t s = 0; s < subjects.size(); ++s)
      for (std::size_t fr = 0; fr < subjects[s].truth.size(); ++fr) {
        p.push_back(preds[s][fr][i]);
        t.push_back(subjects[s].truth[fr][i]);
      }
    out[i] = mae_metric(p, t);
  }
  return out;
}

std::vector<std::optional<double>> pearson_per_index(
    const std::vector<std::vector<phantom::IndexVector>>& preds,
    const std::vector<phantom::CineSequence>& subjects) {
  std::vector<std::optional<double>> out(phantom::kIndices);
  for (int i = 0; i < phantom::kIndices; ++i) {
    std::vector<double> p, t;
    for (std::size_t s = 0; s < subjects.size(); ++s)
      for (std::size_t fr = 0; fr < subjects[s].truth.size(); ++fr) {
        p.push_back(preds[s][fr][i]);
        t.push_back(subjects[s].truth[fr][i]);
      }
    out[i] = pearson_global(p, t);
  }
  return out;
}

namespace {
std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}
}  // namespace

void write_report_csv(const RobustnessReport& r, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("report: cannot write " + path);
  f << "# config=" << r.config_hash << " seed=" << r.seed << "\n";
  f << "variant,fold,kind,level,index,mae_mean,mae_std,R\n";
  for (const auto& row : r.rows)
    f << r.variant << "," << r.fold << "," << row.kind << "," << row.level
      << "," << row.index << "," << fmt(row.mae_mean) << "," << fmt(row.mae_std)
      << "," << fmt(row.ratio) << "\n";
}

void write_report_json(const RobustnessReport& r, const std::string& path) {
  nlohmann::json j;
  j["variant"] = r.variant;
  j["fold"] = r.fold;
  j["seed"] = r.seed;
  j["config_hash"] = r.config_hash;
  j["rows"] = nlohmann::json::array();
  for (const auto& row : r.rows)
    j["rows"].push_back({{"kind", row.kind},
                         {"level", row.level},
                         {"index", row.index},
                         {"mae_mean", row.mae_mean},
                         {"mae_std", row.mae_std},
                         {"R", row.ratio}});
  j["aggregates"] = nlohmann::json::array();
  for (const auto& a : r.aggregates)
    j["aggregates"].push_back({{"kind", a.kind},
                               {"level", a.level},
                               {"family", a.family},
                               {"mean_R", a.mean_ratio}});
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("report: cannot write " + path);
  f << j.dump(1) << "\n";
}

RobustnessReport read_report_json(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("report: cannot open " + path);
  nlohmann::json j;
  f >> j;
  RobustnessReport r;
  r.variant = j.value("variant", "");
  r.fold = j.value("fold", 0);
  r.seed = j.value("seed", std::uint64_t(0));
  r.config_hash = j.value("config_hash", "");
  for (const auto& row : j["rows"])
    r.rows.push_back({row["kind"], row["level"], row["index"], row["mae_mean"],
                      row["mae_std"], row["R"]});
  for (const auto& a : j["aggregates"])
    r.aggregates.push_back({a["kind"], a["level"], a["family"], a["mean_R"]});
  return r;
}

namespace {

const char* kPalette[8] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                           "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};

}  // namespace

void write_report_svgs(const RobustnessReport& r, const std::string& dir) {
  std::filesystem::create_directories(dir);
  // series per kind, level on x, family-mean R on y; dot grows with level
  std::vector<std::string> kinds;
  for (const auto& a : r.aggregates)
    if (a.kind != "none" &&
        std::find(kinds.begin(), kinds.end(), a.kind) == kinds.end())
      kinds.push_back(a.kind);

  for (int fam = 0; fam < 3; ++fam) {
    const std::string family = phantom::family_name(fam);
    const double W = 640, H = 420, ml = 60, mr = 170, mt = 30, mb = 50;
    double rmax = 1.0;
    int lmax = 1;
    for (const auto& a : r.aggregates)
      if (a.family == family && a.kind != "none") {
        rmax = std::max(rmax, a.mean_ratio);
        lmax = std::max(lmax, a.level);
      }
    rmax *= 1.05;
    auto xs = [&](double level) {
      return ml + (W - ml - mr) * (lmax > 1 ? (level - 1) / double(lmax - 1) : 0.5);
    };
    auto ys = [&](double v) { return H - mb - (H - mt - mb) * (v / rmax); };

    std::ofstream f(dir + "/robustness_" + family + ".svg", std::ios::binary);
    if (!f) throw IoError("report: cannot write SVG in " + dir);
    f << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W
      << "\" height=\"" << H << "\" viewBox=\"0 0 " << W << " " << H << "\">\n";
    f << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    f << "<text x=\"" << W / 2 << "\" y=\"18\" text-anchor=\"middle\" "
         "font-family=\"sans-serif\" font-size=\"14\">mean R, "
      << family << " (" << r.variant << ")</text>\n";
    // axes
    f << "<line x1=\"" << ml << "\" y1=\"" << H - mb << "\" x2=\"" << W - mr
      << "\" y2=\"" << H - mb << "\" stroke=\"black\"/>\n";
    f << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml
      << "\" y2=\"" << H - mb << "\" stroke=\"black\"/>\n";
    for (double v = 0; v <= rmax; v += rmax > 4 ? 2.0 : (rmax > 2 ? 1.0 : 0.5)) {
      f << "<line x1=\"" << ml - 4 << "\" y1=\"" << ys(v) << "\" x2=\"" << ml
        << "\" y2=\"" << ys(v) << "\" stroke=\"black\"/>\n";
      f << "<text x=\"" << ml - 8 << "\" y=\"" << ys(v) + 4
        << "\" text-anchor=\"end\" font-family=\"sans-serif\" "
           "font-size=\"11\">"
        << fmt(v) << "</text>\n";
    }
    f << "<text x=\"" << (ml + W - mr) / 2 << "\" y=\"" << H - 14
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
         "font-size=\"12\">perturbation level</text>\n";
    // reference line R = 1
    f << "<line x1=\"" << ml << "\" y1=\"" << ys(1.0) << "\" x2=\"" << W - mr
      << "\" y2=\"" << ys(1.0)
      << "\" stroke=\"#aaaaaa\" stroke-dasharray=\"4 3\"/>\n";

    int ki = 0;
    for (const auto& kind : kinds) {
      const char* color = kPalette[ki % 8];
      std::string pts;
      std::vector<std::pair<int, double>> series;
      for (const auto& a : r.aggregates)
        if (a.family == family && a.kind == kind)
          series.push_back({a.level, a.mean_ratio});
      std::sort(series.begin(), series.end());
      for (const auto& [lv, v] : series)
        pts += fmt(xs(lv)) + "," + fmt(ys(v)) + " ";
      f << "<polyline points=\"" << pts << "\" fill=\"none\" stroke=\"" << color
        << "\" stroke-width=\"1.5\"/>\n";
      for (const auto& [lv, v] : series) {
        // a larger dot represents a severer intensity level
        const double rad = 2.0 + 2.5 * double(lv) / lmax;
        f << "<circle cx=\"" << fmt(xs(lv)) << "\" cy=\"" << fmt(ys(v))
          << "\" r=\"" << fmt(rad) << "\" fill=\"" << color << "\"/>\n";
      }
      const double lx = W - mr + 12, lyy = mt + 16 + 18 * ki;
      f << "<circle cx=\"" << lx << "\" cy=\"" << lyy << "\" r=\"4\" fill=\""
        << color << "\"/>\n";
      f << "<text x=\"" << lx + 10 << "\" y=\"" << lyy + 4
        << "\" font-family=\"sans-serif\" font-size=\"11\">" << kind
        << "</text>\n";
      ki++;
    }
    f << "</svg>\n";
  }
}

}  // namespace pq::eval
