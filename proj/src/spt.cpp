#include "pq/spt.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "json.hpp"
#include "pq/kernels.hpp"

namespace pq::spt {

namespace {

// cos^2 ramp: 0 for t <= -1, 1 for t >= 0.
double ramp01(double t) {
  if (t <= -1.0) return 0.0;
  if (t >= 0.0) return 1.0;
  const double c = std::cos(M_PI_2 * t);
  return c * c;
}

void polar_grids(int h, int w, std::vector<double>& log2r,
                 std::vector<double>& theta) {
  log2r.resize(std::size_t(h) * w);
  theta.resize(std::size_t(h) * w);
  for (int y = 0; y < h; ++y) {
    const int fy = y <= h / 2 ? y : y - h;
    const double wy = 2.0 * M_PI * fy / h;
    for (int x = 0; x < w; ++x) {
      const int fx = x <= w / 2 ? x : x - w;
      const double wx = 2.0 * M_PI * fx / w;
      const double r = std::hypot(wx, wy);
      const std::size_t i = std::size_t(y) * w + x;
      log2r[i] = r > 0.0 ? std::log2(r / M_PI) : -1e9;
      theta[i] = std::atan2(wy, wx);
    }
  }
}

double factorial(int n) {
  double f = 1.0;
  for (int i = 2; i <= n; ++i) f *= i;
  return f;
}

cplx minus_i_pow(int k) {
  switch (k & 3) {
    case 0: return {1.0, 0.0};
    case 1: return {0.0, -1.0};
    case 2: return {-1.0, 0.0};
    default: return {0.0, 1.0};
  }
}

// Keep the lowest half of the spectrum along each axis (unshifted layout).
inline int crop_src(int i, int n_small, int n_big) {
  return i <= n_small / 2 ? i : i + (n_big - n_small);
}

std::vector<cplx> crop_half(const std::vector<cplx>& big, int h, int w) {
  const int h2 = h / 2, w2 = w / 2;
  std::vector<cplx> out(std::size_t(h2) * w2);
  for (int y = 0; y < h2; ++y) {
    const int sy = crop_src(y, h2, h);
    for (int x = 0; x < w2; ++x)
      out[std::size_t(y) * w2 + x] = big[std::size_t(sy) * w + crop_src(x, w2, w)];
  }
  return out;
}

void pad_accum(const std::vector<cplx>& small, int h2, int w2,
               std::vector<cplx>& big, int h, int w) {
  for (int y = 0; y < h2; ++y) {
    const int sy = crop_src(y, h2, h);
    for (int x = 0; x < w2; ++x)
      big[std::size_t(sy) * w + crop_src(x, w2, w)] += small[std::size_t(y) * w2 + x];
  }
}

std::vector<cplx> apply_mask(const std::vector<cplx>& spec,
                             const std::vector<double>& mask) {
  std::vector<cplx> out(spec.size());
  for (std::size_t i = 0; i < spec.size(); ++i) out[i] = spec[i] * mask[i];
  return out;
}

std::vector<cplx> apply_mask_conj(const std::vector<cplx>& spec,
                                  const std::vector<cplx>& mask) {
  std::vector<cplx> out(spec.size());
  for (std::size_t i = 0; i < spec.size(); ++i)
    out[i] = spec[i] * std::conj(mask[i]);
  return out;
}

}  // namespace

FilterBank build_filter_bank(int rows, int cols, int scales, int orientations,
                             double orientation_offset) {
  if (rows < 16 || cols < 16)
    throw DimensionError("build_filter_bank: image must be at least 16x16");
  if (rows % 2 != 0 || cols % 2 != 0)
    throw DimensionError("build_filter_bank: unsupported odd size (downsampling ambiguity)");
  if (scales < 1) throw ConfigError("build_filter_bank: scales must be >= 1");
  if (orientations < 2)
    throw ConfigError("build_filter_bank: need at least 2 orientations");
  const int div = 1 << scales;
  if (rows % div != 0 || cols % div != 0)
    throw DimensionError("build_filter_bank: unsupported size (not divisible per level)");

  FilterBank bank;
  bank.rows = rows;
  bank.cols = cols;
  bank.scales = scales;
  bank.orientations = orientations;
  bank.orientation_offset = orientation_offset;

  const int K = orientations - 1;
  const double ang_const = std::pow(2.0, 2 * K) * factorial(K) * factorial(K) /
                           (orientations * factorial(2 * K));
  const double ang_amp = std::sqrt(ang_const);
  const cplx rot = minus_i_pow(K);

  std::vector<double> log2r, theta;
  polar_grids(rows, cols, log2r, theta);
  bank.h0.resize(log2r.size());
  bank.l0.resize(log2r.size());
  for (std::size_t i = 0; i < log2r.size(); ++i) {
    const double rmp = ramp01(log2r[i]);
    bank.h0[i] = std::sqrt(rmp);
    bank.l0[i] = std::sqrt(1.0 - rmp);
  }

  int h = rows, w = cols;
  for (int level = 0; level < scales; ++level) {
    FilterBank::Level lv;
    lv.h = h;
    lv.w = w;
    polar_grids(h, w, log2r, theta);
    lv.lo.resize(log2r.size());
    lv.band.assign(orientations, std::vector<cplx>(log2r.size()));
    for (std::size_t i = 0; i < log2r.size(); ++i) {
      const double rmp = ramp01(log2r[i] + 1.0);  // transition pi/4..pi/2
      const double hi = std::sqrt(rmp);
      lv.lo[i] = std::sqrt(1.0 - rmp);
      for (int k = 0; k < orientations; ++k) {
        const double th_k = orientation_offset + k * M_PI / orientations;
        const double g =
            ang_amp * std::pow(std::cos(theta[i] - th_k), double(K));
        lv.band[k][i] = rot * (g * hi);
      }
    }
    bank.levels.push_back(std::move(lv));
    h /= 2;
    w /= 2;
  }
  return bank;
}

Pyramid decompose(const Image& x, const FilterBank& bank, bool keep_highpass) {
  if (x.h != bank.rows || x.w != bank.cols)
    throw DimensionError("decompose: image does not match filter bank dimensions");
  Pyramid p;
  p.rows = bank.rows;
  p.cols = bank.cols;
  p.orientations = bank.orientations;
  p.bands.resize(bank.scales);

  std::vector<cplx> X = fft2u(x.v, x.h, x.w);
  if (keep_highpass) {
    p.has_highpass = true;
    p.highpass.h = x.h;
    p.highpass.w = x.w;
    p.highpass.v = ifft2u_real(apply_mask(X, bank.h0), x.h, x.w);
  }
  std::vector<cplx> L = apply_mask(X, bank.l0);
  int h = bank.rows, w = bank.cols;
  for (int level = 0; level < bank.scales; ++level) {
    const auto& lv = bank.levels[level];
    p.bands[level].resize(bank.orientations);
    for (int k = 0; k < bank.orientations; ++k) {
      std::vector<cplx> bd(L.size());
      for (std::size_t i = 0; i < L.size(); ++i) bd[i] = L[i] * lv.band[k][i];
      Image& im = p.bands[level][k];
      im.h = h;
      im.w = w;
      im.v = ifft2u_real(bd, h, w);
    }
    for (std::size_t i = 0; i < L.size(); ++i) L[i] *= lv.lo[i];
    L = crop_half(L, h, w);
    h /= 2;
    w /= 2;
  }
  p.lowpass.h = h;
  p.lowpass.w = w;
  p.lowpass.v = ifft2u_real(L, h, w);
  return p;
}

Image synthesize(const Pyramid& p, const FilterBank& bank) {
  if (p.rows != bank.rows || p.cols != bank.cols)
    throw DimensionError("synthesize: pyramid does not match filter bank");
  int h = bank.rows >> bank.scales, w = bank.cols >> bank.scales;
  std::vector<cplx> L = fft2u(p.lowpass.v, h, w);
  for (int level = bank.scales - 1; level >= 0; --level) {
    const auto& lv = bank.levels[level];
    std::vector<cplx> full(std::size_t(lv.h) * lv.w, cplx(0.0, 0.0));
    pad_accum(L, h, w, full, lv.h, lv.w);
    for (std::size_t i = 0; i < full.size(); ++i) full[i] *= lv.lo[i];
    for (int k = 0; k < bank.orientations; ++k) {
      const std::vector<cplx> bspec =
          fft2u(p.bands[level][k].v, lv.h, lv.w);
      for (std::size_t i = 0; i < full.size(); ++i)
        full[i] += bspec[i] * std::conj(lv.band[k][i]);
    }
    L = std::move(full);
    h = lv.h;
    w = lv.w;
  }
  std::vector<cplx> X(L.size());
  for (std::size_t i = 0; i < L.size(); ++i) X[i] = L[i] * bank.l0[i];
  if (p.has_highpass) {
    const std::vector<cplx> hspec = fft2u(p.highpass.v, bank.rows, bank.cols);
    for (std::size_t i = 0; i < X.size(); ++i) X[i] += hspec[i] * bank.h0[i];
  }
  Image out(bank.rows, bank.cols);
  out.v = ifft2u_real(X, bank.rows, bank.cols);
  return out;
}

ReconstructResult reconstruct(const Pyramid& p, const FilterBank& bank) {
  ReconstructResult r;
  r.lossy = !p.has_highpass;
  if (r.lossy)
    std::fprintf(stderr,
                 "[pq] note: reconstructing without the highpass subband; "
                 "result is lowpass-limited\n");
  r.image = synthesize(p, bank);
  return r;
}

std::vector<double> steering_weights(double angle, int orientations,
                                     double orientation_offset) {
  const int K = orientations - 1;
  const int n = orientations;
  Eigen::MatrixXd A(n, n);
  Eigen::VectorXd rhs(n);
  int row = 0;
  if (K % 2 == 0) {
    for (int k = 0; k < n; ++k) A(row, k) = 1.0;
    rhs(row) = 1.0;
    row++;
  }
  for (int m = K % 2 == 0 ? 2 : 1; m <= K; m += 2) {
    for (int k = 0; k < n; ++k) {
      const double th_k = orientation_offset + k * M_PI / n;
      A(row, k) = std::cos(m * th_k);
      A(row + 1, k) = std::sin(m * th_k);
    }
    rhs(row) = std::cos(m * angle);
    rhs(row + 1) = std::sin(m * angle);
    row += 2;
  }
  Eigen::VectorXd w = A.partialPivLu().solve(rhs);
  return std::vector<double>(w.data(), w.data() + n);
}

Image steer(const std::vector<Image>& responses, double angle,
            const FilterBank& bank) {
  if (int(responses.size()) != bank.orientations)
    throw DimensionError("steer: need one response per orientation");
  const int h = responses[0].h, w = responses[0].w;
  for (const auto& r : responses)
    if (r.h != h || r.w != w) throw DimensionError("steer: mismatched subband shapes");
  const auto wts = steering_weights(angle, bank.orientations,
                                    bank.orientation_offset);
  Image out(h, w);
  for (std::size_t i = 0; i < out.v.size(); ++i) {
    double acc = 0.0;
    for (int k = 0; k < bank.orientations; ++k) acc += wts[k] * responses[k].v[i];
    out.v[i] = acc;
  }
  return out;
}

double tight_frame_flatness_deviation(const FilterBank& bank) {
  // Total power accumulated from the innermost grid outward.
  int h = bank.rows >> bank.scales, w = bank.cols >> bank.scales;
  std::vector<double> P(std::size_t(h) * w, 1.0);
  for (int level = bank.scales - 1; level >= 0; --level) {
    const auto& lv = bank.levels[level];
    std::vector<double> full(std::size_t(lv.h) * lv.w, 0.0);
    for (int y = 0; y < h; ++y) {
      const int sy = crop_src(y, h, lv.h);
      for (int x = 0; x < w; ++x)
        full[std::size_t(sy) * lv.w + crop_src(x, w, lv.w)] = P[std::size_t(y) * w + x];
    }
    for (std::size_t i = 0; i < full.size(); ++i) {
      double s = lv.lo[i] * lv.lo[i] * full[i];
      for (int k = 0; k < bank.orientations; ++k) s += std::norm(lv.band[k][i]);
      full[i] = s;
    }
    P = std::move(full);
    h = lv.h;
    w = lv.w;
  }
  double dev = 0.0;
  for (std::size_t i = 0; i < P.size(); ++i) {
    const double total = bank.h0[i] * bank.h0[i] + bank.l0[i] * bank.l0[i] * P[i];
    dev = std::max(dev, std::abs(total - 1.0));
  }
  return dev;
}

// ---- variants ----

const char* variant_name(VariantId v) {
  switch (v) {
    case VariantId::Baseline: return "Baseline";
    case VariantId::BaselineAug: return "Baseline-Aug";
    case VariantId::SPT_AC: return "SPT-AC";
    case VariantId::SPT_AC_H: return "SPT-AC-H";
    case VariantId::SPT_AC_L: return "SPT-AC-L";
    case VariantId::SPT_OC_L: return "SPT-OC-L";
    case VariantId::SPT_SC_L: return "SPT-SC-L";
  }
  return "?";
}

VariantId parse_variant(const std::string& name) {
  for (VariantId v :
       {VariantId::Baseline, VariantId::BaselineAug, VariantId::SPT_AC,
        VariantId::SPT_AC_H, VariantId::SPT_AC_L, VariantId::SPT_OC_L,
        VariantId::SPT_SC_L}) {
    if (name == variant_name(v)) return v;
  }
  // tolerate underscores
  std::string alt = name;
  for (auto& c : alt)
    if (c == '_') c = '-';
  for (VariantId v :
       {VariantId::Baseline, VariantId::BaselineAug, VariantId::SPT_AC,
        VariantId::SPT_AC_H, VariantId::SPT_AC_L, VariantId::SPT_OC_L,
        VariantId::SPT_SC_L}) {
    if (alt == variant_name(v)) return v;
  }
  throw ConfigError("unknown variant: " + name);
}

bool variant_uses_spt(VariantId v) {
  return v != VariantId::Baseline && v != VariantId::BaselineAug;
}

bool variant_keeps_highpass(VariantId v) { return v == VariantId::SPT_AC_H; }

int variant_streams(VariantId v) {
  return (v == VariantId::SPT_SC_L || v == VariantId::SPT_OC_L) ? 3 : 1;
}

int variant_channels(VariantId v) {
  switch (v) {
    case VariantId::Baseline:
    case VariantId::BaselineAug: return 1;
    case VariantId::SPT_AC: return 6;
    case VariantId::SPT_AC_H:
    case VariantId::SPT_AC_L: return 7;
    case VariantId::SPT_OC_L:
    case VariantId::SPT_SC_L: return 3;
  }
  return 1;
}

int variant_head_rows(VariantId v) {
  return v == VariantId::SPT_SC_L ? 5 : 11;
}

std::string variant_input_shape(VariantId v, int rows, int cols) {
  const std::string hw = std::to_string(rows) + "\xc3\x97" + std::to_string(cols);
  const std::string c = std::to_string(variant_channels(v));
  if (variant_streams(v) > 1)
    return std::to_string(variant_streams(v)) + "\xc3\x97" + c + "\xc3\x97" + hw;
  return c + "\xc3\x97" + hw;
}

std::string variant_output_shape(VariantId v) {
  return std::to_string(variant_head_rows(v)) + "\xc3\x97" +
         std::to_string(variant_streams(v));
}

namespace {

Image upsampled(const Image& src, int h, int w) {
  if (src.h == h && src.w == w) return src;
  Image out(h, w);
  kernels::bilinear_resize(src.v.data(), src.h, src.w, out.v.data(), h, w);
  return out;
}

void upsample_adjoint_into(const double* grad, int h, int w, Image& dst) {
  if (dst.h == h && dst.w == w) {
    for (std::size_t i = 0; i < dst.v.size(); ++i) dst.v[i] += grad[i];
    return;
  }
  kernels::bilinear_resize_adjoint(grad, h, w, dst.v.data(), dst.h, dst.w);
}

}  // namespace

std::vector<double> organize(const Pyramid& p, VariantId v) {
  if (!variant_uses_spt(v))
    throw ConfigError("organize: variant bypasses the pyramid; organize the slice directly");
  if (int(p.bands.size()) != 2 || p.orientations != 3)
    throw DimensionError("organize: variant requires 2 scales / 3 orientations");
  if (variant_keeps_highpass(v) && !p.has_highpass)
    throw DimensionError("organize: variant needs the highpass subband");
  const int M = p.rows, N = p.cols;
  const std::size_t plane = std::size_t(M) * N;
  const int S = variant_streams(v), C = variant_channels(v);
  std::vector<double> out(std::size_t(S) * C * plane);
  auto dst = [&](int s, int c) { return out.data() + (std::size_t(s) * C + c) * plane; };
  auto put = [&](int s, int c, const Image& im) {
    const Image up = upsampled(im, M, N);
    std::copy(up.v.begin(), up.v.end(), dst(s, c));
  };

  switch (v) {
    case VariantId::SPT_SC_L:
      // per orientation: [lowpass, scale2, scale1]
      for (int i = 0; i < 3; ++i) {
        put(i, 0, p.lowpass);
        put(i, 1, p.bands[1][i]);
        put(i, 2, p.bands[0][i]);
      }
      break;
    case VariantId::SPT_OC_L:
      // per scale (lowpass as the third scale entry): orientations in channels
      for (int k = 0; k < 3; ++k) put(0, k, p.bands[0][k]);
      for (int k = 0; k < 3; ++k) put(1, k, p.bands[1][k]);
      for (int k = 0; k < 3; ++k) put(2, k, p.lowpass);
      break;
    case VariantId::SPT_AC:
    case VariantId::SPT_AC_H:
    case VariantId::SPT_AC_L: {
      int c0 = 0;
      if (v == VariantId::SPT_AC_L) put(0, c0++, p.lowpass);
      for (int k = 0; k < 3; ++k) put(0, c0 + k, p.bands[1][k]);
      for (int k = 0; k < 3; ++k) put(0, c0 + 3 + k, p.bands[0][k]);
      if (v == VariantId::SPT_AC_H) put(0, c0 + 6, p.highpass);
      break;
    }
    default:
      break;
  }
  return out;
}

Image organize_adjoint(const std::vector<double>& grad, VariantId v,
                       const FilterBank& bank) {
  const int M = bank.rows, N = bank.cols;
  const std::size_t plane = std::size_t(M) * N;
  const int S = variant_streams(v), C = variant_channels(v);
  if (grad.size() != std::size_t(S) * C * plane)
    throw DimensionError("organize_adjoint: gradient size mismatch");
  if (!variant_uses_spt(v)) {
    Image g(M, N);
    std::copy(grad.begin(), grad.end(), g.v.begin());
    return g;
  }
  Pyramid gp;
  gp.rows = M;
  gp.cols = N;
  gp.orientations = bank.orientations;
  gp.bands.resize(bank.scales);
  gp.bands[0].assign(3, Image(M, N));
  gp.bands[1].assign(3, Image(M / 2, N / 2));
  gp.lowpass = Image(M / 4, N / 4);
  gp.has_highpass = variant_keeps_highpass(v);
  if (gp.has_highpass) gp.highpass = Image(M, N);

  auto src = [&](int s, int c) { return grad.data() + (std::size_t(s) * C + c) * plane; };
  switch (v) {
    case VariantId::SPT_SC_L:
      for (int i = 0; i < 3; ++i) {
        upsample_adjoint_into(src(i, 0), M, N, gp.lowpass);
        upsample_adjoint_into(src(i, 1), M, N, gp.bands[1][i]);
        upsample_adjoint_into(src(i, 2), M, N, gp.bands[0][i]);
      }
      break;
    case VariantId::SPT_OC_L:
      for (int k = 0; k < 3; ++k) upsample_adjoint_into(src(0, k), M, N, gp.bands[0][k]);
      for (int k = 0; k < 3; ++k) upsample_adjoint_into(src(1, k), M, N, gp.bands[1][k]);
      for (int k = 0; k < 3; ++k) upsample_adjoint_into(src(2, k), M, N, gp.lowpass);
      break;
    case VariantId::SPT_AC:
    case VariantId::SPT_AC_H:
    case VariantId::SPT_AC_L: {
      int c0 = 0;
      if (v == VariantId::SPT_AC_L) upsample_adjoint_into(src(0, c0++), M, N, gp.lowpass);
      for (int k = 0; k < 3; ++k)
        upsample_adjoint_into(src(0, c0 + k), M, N, gp.bands[1][k]);
      for (int k = 0; k < 3; ++k)
        upsample_adjoint_into(src(0, c0 + 3 + k), M, N, gp.bands[0][k]);
      if (v == VariantId::SPT_AC_H)
        upsample_adjoint_into(src(0, c0 + 6), M, N, gp.highpass);
      break;
    }
    default:
      break;
  }
  // analysis adjoint = synthesis (tight frame)
  return synthesize(gp, bank);
}

void dump_pyramid(const Pyramid& p, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  nlohmann::json manifest = nlohmann::json::array();
  auto write_band = [&](const Image& im, const std::string& id, int scale,
                        double orientation_deg) {
    const std::string path = dir + "/" + id + ".raw";
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("dump_pyramid: cannot write " + path);
    for (double d : im.v) {
      const float x = float(d);
      f.write(reinterpret_cast<const char*>(&x), 4);
    }
    manifest.push_back({{"id", id},
                        {"rows", im.h},
                        {"cols", im.w},
                        {"scale", scale},
                        {"orientation_deg", orientation_deg}});
  };
  write_band(p.lowpass, "x0", int(p.bands.size()), -1.0);
  int idx = 1;
  for (int level = int(p.bands.size()) - 1; level >= 0; --level) {
    for (int k = 0; k < int(p.bands[level].size()); ++k) {
      const double deg = 30.0 + 60.0 * k;
      write_band(p.bands[level][k], "x" + std::to_string(idx++), level + 1, deg);
    }
  }
  if (p.has_highpass) write_band(p.highpass, "x" + std::to_string(idx), 0, -1.0);
  std::ofstream mf(dir + "/manifest.json");
  mf << manifest.dump(2) << "\n";
}

}  // namespace pq::spt
