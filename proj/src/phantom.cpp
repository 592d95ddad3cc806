#include "pq/phantom.hpp"

#include <zlib.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>

#include "json.hpp"

namespace pq::phantom {

namespace {

constexpr double kTau = 6.283185307179586476925286766559;

// angles measured counterclockwise with v pointing up (v = cy - row)
inline double wrap_angle(double a) {
  while (a < 0) a += kTau;
  while (a >= kTau) a -= kTau;
  return a;
}

double ellipse_radius(double theta, double a, double b, double tilt) {
  const double c = std::cos(theta - tilt), s = std::sin(theta - tilt);
  return a * b / std::sqrt(b * b * c * c + a * a * s * s);
}

// Simpson quadrature over [lo, hi] with n (even) intervals.
template <typename F>
double simpson(F f, double lo, double hi, int n) {
  const double h = (hi - lo) / n;
  double acc = f(lo) + f(hi);
  for (int i = 1; i < n; ++i) acc += f(lo + i * h) * (i % 2 ? 4.0 : 2.0);
  return acc * h / 3.0;
}

}  // namespace

double FrameGeometry::cavity_radius(double theta) const {
  return ellipse_radius(theta, a_in, b_in, tilt);
}

double FrameGeometry::outer_radius(double theta) const {
  const double base = ellipse_radius(theta, a_out, b_out, tilt);
  return base * (1.0 + mod1_amp * std::cos(theta - mod1_phase) +
                 mod3_amp * std::cos(3.0 * (theta - mod3_phase)));
}

const char* index_name(int i) {
  static const char* names[kIndices] = {"A1", "A2", "D1", "D2", "D3",
                                        "T1", "T2", "T3", "T4", "T5", "T6"};
  return names[i];
}

int index_family(int i) { return i < 2 ? 0 : (i < 5 ? 1 : 2); }

const char* family_name(int f) {
  static const char* names[3] = {"areas", "dimensions", "thicknesses"};
  return names[f];
}

IndexVector analytic_indices(const FrameGeometry& g, double spacing) {
  IndexVector out;
  const double s2 = spacing * spacing;
  const double cavity = M_PI * g.a_in * g.b_in;
  // outer region area by quadrature (exact ellipse only when unmodulated)
  const double outer = simpson(
      [&](double th) {
        const double r = g.outer_radius(th);
        return 0.5 * r * r;
      },
      0.0, kTau, 4096);
  out[0] = (outer - cavity) * s2;  // A1 myocardium
  out[1] = cavity * s2;            // A2 cavity
  for (int i = 0; i < 3; ++i) {
    const double th = M_PI / 6.0 + i * M_PI / 3.0;  // 30/90/150 degrees
    out[2 + i] = (g.cavity_radius(th) + g.cavity_radius(th + M_PI)) * spacing;
  }
  for (int j = 0; j < 6; ++j) {
    const double center = M_PI / 6.0 + j * M_PI / 3.0;
    const double t = simpson(
        [&](double th) { return g.outer_radius(th) - g.cavity_radius(th); },
        center - M_PI / 6.0, center + M_PI / 6.0, 512);
    out[5 + j] = t / (M_PI / 3.0) * spacing;
  }
  return out;
}

namespace {

struct SubjectDraw {
  FrameGeometry base;  // end-diastole geometry
  double efr, thickening, phase_offset;
  double blood, myo, bg;
  double bias_strength, bias_angle, bias_phase;
  double noise_sigma;
};

SubjectDraw draw_subject(const PhantomConfig& cfg, Rng& rng) {
  SubjectDraw d;
  auto jitter = [&](double v, double lo, double hi) {
    return cfg.randomize ? rng.uniform(lo, hi) : v;
  };
  const double r = jitter(cfg.cavity_radius_ed, cfg.cavity_radius_ed - 2.5,
                          cfg.cavity_radius_ed + 2.5);
  const double ell = jitter(cfg.ellipticity, 0.75, 1.0);
  d.base.a_in = r / std::sqrt(ell);
  d.base.b_in = r * std::sqrt(ell);
  const double wall = jitter(cfg.wall_base, cfg.wall_base - 1.2, cfg.wall_base + 1.2);
  d.base.a_out = d.base.a_in + wall;
  d.base.b_out = d.base.b_in + wall;
  d.base.tilt = cfg.randomize ? rng.uniform(0.0, M_PI) : 0.0;
  d.base.mod1_amp = jitter(cfg.mod1_amp, 0.0, cfg.mod1_amp * 1.6);
  d.base.mod3_amp = jitter(cfg.mod3_amp, 0.0, cfg.mod3_amp * 1.6);
  d.base.mod1_phase = cfg.randomize ? rng.uniform(0.0, kTau) : 0.0;
  d.base.mod3_phase = cfg.randomize ? rng.uniform(0.0, kTau) : 0.0;
  d.base.cx = cfg.cols / 2.0 + jitter(0.0, -3.0, 3.0);
  d.base.cy = cfg.rows / 2.0 + jitter(0.0, -3.0, 3.0);
  d.efr = jitter(cfg.radius_ejection, 0.20, 0.45);
  d.thickening = jitter(cfg.wall_thickening, 0.25, 0.45);
  d.phase_offset = cfg.phase_offset + (cfg.randomize ? rng.uniform(-0.05, 0.05) : 0.0);
  d.blood = jitter(cfg.intensity_blood, cfg.intensity_blood - 0.05, cfg.intensity_blood + 0.05);
  d.myo = jitter(cfg.intensity_myo, cfg.intensity_myo - 0.05, cfg.intensity_myo + 0.05);
  d.bg = jitter(cfg.intensity_bg, cfg.intensity_bg - 0.05, cfg.intensity_bg + 0.05);
  d.bias_strength = cfg.bias_strength;
  d.bias_angle = cfg.randomize ? rng.uniform(0.0, kTau) : 0.0;
  d.bias_phase = cfg.randomize ? rng.uniform(0.0, kTau) : 0.0;
  d.noise_sigma = jitter(cfg.noise_sigma, cfg.noise_sigma * 0.7, cfg.noise_sigma * 1.3);
  return d;
}

FrameGeometry frame_geometry(const SubjectDraw& d, int t) {
  const double c = 0.5 * (1.0 - std::cos(kTau * (t / double(kFrames) + d.phase_offset)));
  FrameGeometry g = d.base;
  const double shrink = 1.0 - d.efr * c;
  g.a_in = d.base.a_in * shrink;
  g.b_in = d.base.b_in * shrink;
  const double wall_ed = d.base.a_out - d.base.a_in;
  const double wall = wall_ed * (1.0 + d.thickening * c);
  g.a_out = g.a_in + wall;
  g.b_out = g.b_in + wall;
  return g;
}

void render_frame(const SubjectDraw& d, const FrameGeometry& g, int rows,
                  int cols, Rng& rng, Image& out) {
  out = Image(rows, cols);
  const double freq = M_PI / std::max(rows, cols);
  const double bdx = std::cos(d.bias_angle), bdy = std::sin(d.bias_angle);
  for (int y = 0; y < rows; ++y) {
    for (int x = 0; x < cols; ++x) {
      double acc = 0.0;
      for (int sy = 0; sy < 2; ++sy)
        for (int sx = 0; sx < 2; ++sx) {
          const double px = x + 0.25 + 0.5 * sx;
          const double py = y + 0.25 + 0.5 * sy;
          const double u = px - g.cx, v = g.cy - py;
          const double rho = std::hypot(u, v);
          const double th = std::atan2(v, u);
          double val = d.bg;
          if (rho <= g.cavity_radius(th))
            val = d.blood;
          else if (rho <= g.outer_radius(th))
            val = d.myo;
          acc += val;
        }
      double val = acc / 4.0;
      const double phase = freq * (x * bdx + y * bdy) + d.bias_phase;
      val *= 1.0 + d.bias_strength * std::cos(phase);
      val += rng.normal(0.0, d.noise_sigma);
      out.at(y, x) = std::min(1.0, std::max(0.0, val));
    }
  }
}

}  // namespace

CineSequence generate_subject(const PhantomConfig& cfg, std::uint32_t subject_id) {
  Rng rng = Rng(cfg.seed).fork(subject_id + 1);
  const SubjectDraw d = draw_subject(cfg, rng);

  // field-of-view check at maximum extent (end-diastole)
  double rmax = 0;
  for (int i = 0; i < 360; ++i)
    rmax = std::max(rmax, d.base.outer_radius(i * kTau / 360.0));
  const double cx_off = std::abs(d.base.cx - cfg.cols / 2.0);
  const double cy_off = std::abs(d.base.cy - cfg.rows / 2.0);
  if (rmax + std::max(cx_off, cy_off) > 0.45 * std::min(cfg.rows, cfg.cols))
    throw ConfigError("generate_subject: geometry exits the field of view");

  CineSequence seq;
  seq.id = subject_id;
  seq.spacing = cfg.spacing;
  seq.frames.resize(kFrames);
  seq.truth.resize(kFrames);
  seq.geometry.resize(kFrames);
  for (int t = 0; t < kFrames; ++t) {
    seq.geometry[t] = frame_geometry(d, t);
    if (seq.geometry[t].a_in < 1.5 || seq.geometry[t].b_in < 1.5)
      throw ConfigError("generate_subject: cavity collapses below resolution");
    seq.truth[t] = analytic_indices(seq.geometry[t], cfg.spacing);
    render_frame(d, seq.geometry[t], cfg.rows, cfg.cols, rng, seq.frames[t]);
  }
  return seq;
}

std::vector<CineSequence> generate_dataset(const PhantomConfig& cfg, int subjects) {
  std::vector<CineSequence> out(subjects);
#pragma omp parallel for schedule(dynamic)
  for (int s = 0; s < subjects; ++s) out[s] = generate_subject(cfg, std::uint32_t(s));
  return out;
}

void rasterize_masks(const FrameGeometry& g, int rows, int cols,
                     std::vector<std::uint8_t>& cavity,
                     std::vector<std::uint8_t>& myo) {
  cavity.assign(std::size_t(rows) * cols, 0);
  myo.assign(std::size_t(rows) * cols, 0);
  for (int y = 0; y < rows; ++y)
    for (int x = 0; x < cols; ++x) {
      const double u = x + 0.5 - g.cx, v = g.cy - (y + 0.5);
      const double rho = std::hypot(u, v);
      const double th = std::atan2(v, u);
      if (rho <= g.cavity_radius(th))
        cavity[std::size_t(y) * cols + x] = 1;
      else if (rho <= g.outer_radius(th))
        myo[std::size_t(y) * cols + x] = 1;
    }
}

IndexVector rasterize_indices(const std::vector<std::uint8_t>& cavity,
                              const std::vector<std::uint8_t>& myo, int rows,
                              int cols, double spacing) {
  if (cavity.size() != std::size_t(rows) * cols || myo.size() != cavity.size())
    throw DimensionError("rasterize_indices: mask size mismatch");
  std::size_t n_cav = 0, n_myo = 0;
  double cx = 0, cy = 0;
  for (int y = 0; y < rows; ++y)
    for (int x = 0; x < cols; ++x) {
      const std::size_t i = std::size_t(y) * cols + x;
      if (cavity[i]) {
        n_cav++;
        cx += x + 0.5;
        cy += y + 0.5;
      }
      if (myo[i]) n_myo++;
      if (cavity[i] && myo[i])
        throw DimensionError("rasterize_indices: masks overlap");
    }
  if (n_cav == 0 || n_myo == 0)
    throw DimensionError("rasterize_indices: empty mask");
  cx /= double(n_cav);
  cy /= double(n_cav);

  IndexVector out;
  out[0] = double(n_myo) * spacing * spacing;
  out[1] = double(n_cav) * spacing * spacing;

  const double step = 0.1;
  const double rlim = double(std::max(rows, cols));
  auto inside = [&](const std::vector<std::uint8_t>& m, double px, double py) {
    const int ix = int(std::floor(px)), iy = int(std::floor(py));
    if (ix < 0 || iy < 0 || ix >= cols || iy >= rows) return false;
    return m[std::size_t(iy) * cols + ix] != 0;
  };
  // maximal chord through the cavity centroid
  auto ray_extent = [&](const std::vector<std::uint8_t>& m, double th) {
    const double dx = std::cos(th), dy = -std::sin(th);  // v up = -row
    double r = 0, last_inside = 0;
    for (r = 0; r < rlim; r += step)
      if (inside(m, cx + r * dx, cy + r * dy)) last_inside = r;
    return last_inside;
  };
  for (int i = 0; i < 3; ++i) {
    const double th = M_PI / 6.0 + i * M_PI / 3.0;
    out[2 + i] = (ray_extent(cavity, th) + ray_extent(cavity, th + M_PI) + step) * spacing;
  }
  // mean radial wall extent per 60-degree wedge
  for (int j = 0; j < 6; ++j) {
    const double center = M_PI / 6.0 + j * M_PI / 3.0;
    double acc = 0;
    const int n_rays = 61;
    for (int k = 0; k < n_rays; ++k) {
      const double th = center - M_PI / 6.0 + k * (M_PI / 3.0) / (n_rays - 1);
      const double dx = std::cos(th), dy = -std::sin(th);
      double extent = 0;
      for (double r = 0; r < rlim; r += step)
        if (inside(myo, cx + r * dx, cy + r * dy)) extent += step;
      acc += extent;
    }
    out[5 + j] = acc / n_rays * spacing;
  }
  return out;
}

// ---- dataset container ----

namespace {

constexpr std::uint32_t kDatasetVersion = 1;

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using File = std::unique_ptr<std::FILE, FileCloser>;

template <typename T>
void put(std::FILE* f, const T& v) {
  if (std::fwrite(&v, sizeof(T), 1, f) != 1) throw IoError("dataset: write failed");
}
template <typename T>
T get(std::FILE* f) {
  T v;
  if (std::fread(&v, sizeof(T), 1, f) != 1) throw IoError("dataset: truncated file");
  return v;
}

}  // namespace

std::size_t predicted_file_size(const std::vector<CineSequence>& subjects) {
  std::size_t n = 12;  // magic + version + count
  for (const auto& s : subjects) {
    const std::size_t T = s.frames.size();
    const std::size_t mn = s.frames.empty() ? 0 : s.frames[0].size();
    n += 4 + 4 + 2 + 2 + 2;              // id, spacing, T, M, N
    n += T * mn * 4 + T * kIndices * 4;  // frames + truth
    n += 4;                              // crc
  }
  return n;
}

void save_dataset(const std::vector<CineSequence>& subjects,
                  const std::string& path) {
  File f(std::fopen(path.c_str(), "wb"));
  if (!f) throw IoError("dataset: cannot open for writing: " + path);
  if (std::fwrite("PQDS", 1, 4, f.get()) != 4) throw IoError("dataset: write failed");
  put<std::uint32_t>(f.get(), kDatasetVersion);
  put<std::uint32_t>(f.get(), std::uint32_t(subjects.size()));
  nlohmann::json sidecar;
  sidecar["version"] = kDatasetVersion;
  sidecar["subjects"] = nlohmann::json::array();
  for (const auto& s : subjects) {
    const std::uint16_t T = std::uint16_t(s.frames.size());
    if (T == 0) throw DimensionError("save_dataset: subject without frames");
    const std::uint16_t M = std::uint16_t(s.frames[0].h);
    const std::uint16_t N = std::uint16_t(s.frames[0].w);
    put<std::uint32_t>(f.get(), s.id);
    put<float>(f.get(), float(s.spacing));
    put<std::uint16_t>(f.get(), T);
    put<std::uint16_t>(f.get(), M);
    put<std::uint16_t>(f.get(), N);
    std::vector<float> payload;
    payload.reserve(std::size_t(T) * M * N + std::size_t(T) * kIndices);
    for (const auto& fr : s.frames) {
      if (fr.h != M || fr.w != N)
        throw DimensionError("save_dataset: inconsistent frame sizes");
      for (double v : fr.v) payload.push_back(float(v));
    }
    for (const auto& tv : s.truth)
      for (double v : tv.v) payload.push_back(float(v));
    const auto* bytes = reinterpret_cast<const unsigned char*>(payload.data());
    const std::size_t nbytes = payload.size() * 4;
    if (std::fwrite(bytes, 1, nbytes, f.get()) != nbytes)
      throw IoError("dataset: write failed");
    const auto crc = std::uint32_t(::crc32(0, bytes, uInt(nbytes)));
    put<std::uint32_t>(f.get(), crc);

    nlohmann::json js;
    js["id"] = s.id;
    js["spacing"] = s.spacing;
    js["frames"] = T;
    js["rows"] = M;
    js["cols"] = N;
    if (!s.geometry.empty()) {
      nlohmann::json geo = nlohmann::json::array();
      for (const auto& g : s.geometry)
        geo.push_back({g.cx, g.cy, g.a_in, g.b_in, g.a_out, g.b_out, g.tilt,
                       g.mod1_amp, g.mod1_phase, g.mod3_amp, g.mod3_phase});
      js["geometry"] = std::move(geo);
    }
    sidecar["subjects"].push_back(std::move(js));
  }
  std::ofstream sf(path + ".json");
  if (!sf) throw IoError("dataset: cannot write sidecar for " + path);
  sf << sidecar.dump(1) << "\n";
}

std::vector<CineSequence> load_dataset(const std::string& path) {
  File f(std::fopen(path.c_str(), "rb"));
  if (!f) throw IoError("dataset: cannot open: " + path);
  char magic[4];
  if (std::fread(magic, 1, 4, f.get()) != 4 || std::memcmp(magic, "PQDS", 4) != 0)
    throw IoError("dataset: bad magic in " + path);
  const auto version = get<std::uint32_t>(f.get());
  if (version != kDatasetVersion)
    throw IoError("dataset: unsupported version " + std::to_string(version));
  const auto count = get<std::uint32_t>(f.get());
  std::vector<CineSequence> subjects(count);
  for (auto& s : subjects) {
    s.id = get<std::uint32_t>(f.get());
    s.spacing = double(get<float>(f.get()));
    const auto T = get<std::uint16_t>(f.get());
    const auto M = get<std::uint16_t>(f.get());
    const auto N = get<std::uint16_t>(f.get());
    std::vector<float> payload(std::size_t(T) * M * N + std::size_t(T) * kIndices);
    if (std::fread(payload.data(), 4, payload.size(), f.get()) != payload.size())
      throw IoError("dataset: truncated payload for subject " + std::to_string(s.id));
    const auto stored_crc = get<std::uint32_t>(f.get());
    const auto crc = std::uint32_t(
        ::crc32(0, reinterpret_cast<const unsigned char*>(payload.data()),
                uInt(payload.size() * 4)));
    if (crc != stored_crc)
      throw IoError("dataset: checksum failure for subject " + std::to_string(s.id));
    s.frames.assign(T, Image(M, N));
    std::size_t off = 0;
    for (auto& fr : s.frames)
      for (auto& v : fr.v) v = double(payload[off++]);
    s.truth.resize(T);
    for (auto& tv : s.truth)
      for (auto& v : tv.v) v = double(payload[off++]);
  }
  // geometry from the sidecar, when present
  std::ifstream sf(path + ".json");
  if (sf) {
    nlohmann::json sidecar;
    try {
      sf >> sidecar;
    } catch (...) {
      sidecar = nullptr;
    }
    if (sidecar.is_object() && sidecar.contains("subjects")) {
      const auto& subs = sidecar["subjects"];
      for (std::size_t i = 0; i < subjects.size() && i < subs.size(); ++i) {
        if (!subs[i].contains("geometry")) continue;
        for (const auto& row : subs[i]["geometry"]) {
          FrameGeometry g;
          g.cx = row[0];
          g.cy = row[1];
          g.a_in = row[2];
          g.b_in = row[3];
          g.a_out = row[4];
          g.b_out = row[5];
          g.tilt = row[6];
          g.mod1_amp = row[7];
          g.mod1_phase = row[8];
          g.mod3_amp = row[9];
          g.mod3_phase = row[10];
          subjects[i].geometry.push_back(g);
        }
      }
    }
  }
  return subjects;
}

// ---- augmentation ----

AugmentParams sample_augment_params(const CineSequence& seq, std::uint64_t seed) {
  Rng rng(seed ^ 0x9e3779b9ull);
  AugmentParams p;
  const int rows = seq.frames.at(0).h, cols = seq.frames.at(0).w;
  int max_shift = std::max(1, int(0.10 * std::max(rows, cols)));
  // keep the LV inside the frame when geometry is known
  if (!seq.geometry.empty()) {
    double rmax = 0;
    for (const auto& g : seq.geometry)
      for (int i = 0; i < 360; ++i)
        rmax = std::max(rmax, g.outer_radius(i * kTau / 360.0));
    const double slack = 0.5 * std::min(rows, cols) - rmax - 2.0;
    max_shift = std::max(0, std::min(max_shift, int(slack)));
  }
  p.shift_y = int(rng.uniform_int(2 * max_shift + 1)) - max_shift;
  p.shift_x = int(rng.uniform_int(2 * max_shift + 1)) - max_shift;
  p.rotation = rng.uniform(-15.0, 15.0) * M_PI / 180.0;
  const int max_crop = int(0.10 * std::min(rows, cols));
  p.crop_top = int(rng.uniform_int(max_crop + 1));
  p.crop_bottom = int(rng.uniform_int(max_crop + 1));
  p.crop_left = int(rng.uniform_int(max_crop + 1));
  p.crop_right = int(rng.uniform_int(max_crop + 1));
  p.contrast = rng.uniform(0.8, 1.25);
  return p;
}

CineSequence augment(const CineSequence& seq, const AugmentParams& p) {
  if (std::abs(p.rotation) > 15.0 * M_PI / 180.0 + 1e-12)
    throw ConfigError("augment: rotation exceeds 15 degrees (segment labels)");
  const bool rotates = p.rotation != 0.0;
  if (rotates && seq.geometry.empty())
    throw ConfigError("augment: rotation requires geometry metadata");
  CineSequence out;
  out.id = seq.id;
  out.spacing = seq.spacing;
  const int rows = seq.frames.at(0).h, cols = seq.frames.at(0).w;
  const double cyc = rows / 2.0, cxc = cols / 2.0;
  const double cr = std::cos(p.rotation), sr = std::sin(p.rotation);

  out.frames.reserve(seq.frames.size());
  for (const auto& fr : seq.frames) {
    Image im(rows, cols);
    for (int y = 0; y < rows; ++y)
      for (int x = 0; x < cols; ++x) {
        // invert: output -> (untranslate) -> (unrotate) -> crop window
        const double ty = y - p.shift_y, tx = x - p.shift_x;
        const double u = tx + 0.5 - cxc, v = cyc - (ty + 0.5);
        const double su = cr * u + sr * v, sv = -sr * u + cr * v;
        const double sx = su + cxc - 0.5, sy = cyc - sv - 0.5;
        if (sx < p.crop_left || sx > cols - 1 - p.crop_right ||
            sy < p.crop_top || sy > rows - 1 - p.crop_bottom) {
          im.at(y, x) = 0;
          continue;
        }
        const int x0 = int(std::floor(sx)), y0 = int(std::floor(sy));
        const double fx = sx - x0, fy = sy - y0;
        auto pix = [&](int yy, int xx) -> double {
          if (yy < 0 || xx < 0 || yy >= rows || xx >= cols) return 0.0;
          return fr.at(yy, xx);
        };
        double val = (1 - fy) * ((1 - fx) * pix(y0, x0) + fx * pix(y0, x0 + 1)) +
                     fy * ((1 - fx) * pix(y0 + 1, x0) + fx * pix(y0 + 1, x0 + 1));
        val *= p.contrast;
        im.at(y, x) = std::min(1.0, std::max(0.0, val));
      }
    out.frames.push_back(std::move(im));
  }

  out.truth = seq.truth;
  out.geometry = seq.geometry;
  for (std::size_t t = 0; t < out.geometry.size(); ++t) {
    FrameGeometry& g = out.geometry[t];
    // rotate about image center, then translate
    const double u = g.cx - cxc, v = cyc - g.cy;
    const double ru = cr * u - sr * v, rv = sr * u + cr * v;
    g.cx = ru + cxc + p.shift_x;
    g.cy = cyc - rv + p.shift_y;
    g.tilt += p.rotation;
    g.mod1_phase += p.rotation;
    g.mod3_phase += p.rotation;
    if (rotates && t < out.truth.size()) {
      // areas are rotation-invariant; D/T re-measured from rotated geometry
      const IndexVector re = analytic_indices(g, seq.spacing);
      for (int i = 2; i < kIndices; ++i) out.truth[t][i] = re[i];
    }
  }
  return out;
}

CineSequence augment(const CineSequence& seq, std::uint64_t seed) {
  return augment(seq, sample_augment_params(seq, seed));
}

IndexVector normalize_indices(const IndexVector& physical, int rows, int cols,
                              double spacing) {
  IndexVector out = physical;
  const double a = double(rows) * cols * spacing * spacing;
  const double l = double(std::max(rows, cols)) * spacing;
  out[0] /= a;
  out[1] /= a;
  for (int i = 2; i < kIndices; ++i) out[i] /= l;
  return out;
}

IndexVector denormalize_indices(const IndexVector& normalized, int rows,
                                int cols, double spacing) {
  IndexVector out = normalized;
  const double a = double(rows) * cols * spacing * spacing;
  const double l = double(std::max(rows, cols)) * spacing;
  out[0] *= a;
  out[1] *= a;
  for (int i = 2; i < kIndices; ++i) out[i] *= l;
  return out;
}

}  // namespace pq::phantom
