#include "pq/perturb.hpp"

#include <algorithm>
#include <cmath>

namespace pq::perturb {

namespace {

constexpr double kGaussianSigmas[5] = {0.08, 0.12, 0.18, 0.26, 0.38};
constexpr double kImpulseAmounts[5] = {0.03, 0.06, 0.09, 0.17, 0.27};
constexpr double kBlurSigmas[5] = {1, 2, 3, 4, 6};
constexpr int kJpegQualities[5] = {25, 18, 15, 10, 7};

// standard JPEG luminance quantization table
constexpr int kLumaQuant[64] = {
    16, 11, 10, 16, 24,  40,  51,  61,  12, 12, 14, 19, 26,  58,  60,  55,
    14, 13, 16, 24, 40,  57,  69,  56,  14, 17, 22, 29, 51,  87,  80,  62,
    18, 22, 37, 56, 68,  109, 103, 77,  24, 35, 55, 64, 81,  104, 113, 92,
    49, 64, 78, 87, 103, 121, 120, 101, 72, 92, 95, 98, 112, 100, 103, 99};

double clamp01(double v) { return std::min(1.0, std::max(0.0, v)); }

Image translated(const Image& x, int dy, int dx) {
  Image out(x.h, x.w);
  for (int y = 0; y < x.h; ++y)
    for (int xx = 0; xx < x.w; ++xx) {
      const int sy = y - dy, sx = xx - dx;
      out.at(y, xx) = (sy >= 0 && sx >= 0 && sy < x.h && sx < x.w) ? x.at(sy, sx) : 0.0;
    }
  return out;
}

Image rotated(const Image& x, double angle) {
  Image out(x.h, x.w);
  const double cyc = x.h / 2.0, cxc = x.w / 2.0;
  const double c = std::cos(angle), s = std::sin(angle);
  for (int y = 0; y < x.h; ++y)
    for (int xx = 0; xx < x.w; ++xx) {
      const double u = xx + 0.5 - cxc, v = cyc - (y + 0.5);
      const double su = c * u + s * v, sv = -s * u + c * v;
      const double px = su + cxc - 0.5, py = cyc - sv - 0.5;
      if (px < 0 || py < 0 || px > x.w - 1 || py > x.h - 1) {
        out.at(y, xx) = 0.0;
        continue;
      }
      const int x0 = int(std::floor(px)), y0 = int(std::floor(py));
      const double fx = px - x0, fy = py - y0;
      auto pix = [&](int yy, int xc) -> double {
        return (yy < 0 || xc < 0 || yy >= x.h || xc >= x.w) ? 0.0 : x.at(yy, xc);
      };
      out.at(y, xx) = (1 - fy) * ((1 - fx) * pix(y0, x0) + fx * pix(y0, x0 + 1)) +
                      fy * ((1 - fx) * pix(y0 + 1, x0) + fx * pix(y0 + 1, x0 + 1));
    }
  return out;
}

Image gaussian_blurred(const Image& x, double sigma) {
  const int radius = std::max(1, int(std::lround(3.0 * sigma)));
  std::vector<double> k(2 * radius + 1);
  double sum = 0;
  for (int i = -radius; i <= radius; ++i) {
    k[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
    sum += k[i + radius];
  }
  for (auto& v : k) v /= sum;
  // separable, replicate borders
  Image tmp(x.h, x.w), out(x.h, x.w);
  for (int y = 0; y < x.h; ++y)
    for (int xx = 0; xx < x.w; ++xx) {
      double acc = 0;
      for (int i = -radius; i <= radius; ++i)
        acc += k[i + radius] * x.at(y, std::clamp(xx + i, 0, x.w - 1));
      tmp.at(y, xx) = acc;
    }
  for (int y = 0; y < x.h; ++y)
    for (int xx = 0; xx < x.w; ++xx) {
      double acc = 0;
      for (int i = -radius; i <= radius; ++i)
        acc += k[i + radius] * tmp.at(std::clamp(y + i, 0, x.h - 1), xx);
      out.at(y, xx) = clamp01(acc);
    }
  return out;
}

void dct8(const double in[64], double out[64], bool inverse) {
  // orthonormal DCT-II (III when inverse), separable over rows then cols
  static double c[8][8];
  static bool init = false;
  if (!init) {
    for (int k = 0; k < 8; ++k)
      for (int n = 0; n < 8; ++n)
        c[k][n] = std::sqrt(k == 0 ? 1.0 / 8.0 : 2.0 / 8.0) *
                  std::cos(M_PI * (2 * n + 1) * k / 16.0);
    init = true;
  }
  double tmp[64];
  for (int r = 0; r < 8; ++r)
    for (int k = 0; k < 8; ++k) {
      double acc = 0;
      for (int n = 0; n < 8; ++n)
        acc += (inverse ? c[n][k] : c[k][n]) * in[r * 8 + n];
      tmp[r * 8 + k] = acc;
    }
  for (int col = 0; col < 8; ++col)
    for (int k = 0; k < 8; ++k) {
      double acc = 0;
      for (int n = 0; n < 8; ++n)
        acc += (inverse ? c[n][k] : c[k][n]) * tmp[n * 8 + col];
      out[k * 8 + col] = acc;
    }
}

Image jpeg_compressed(const Image& x, int quality) {
  // IJG quality scaling of the luminance table; DCT quantize-dequantize per
  // 8x8 block (entropy coding is lossless and omitted)
  const int scale = quality < 50 ? 5000 / quality : 200 - 2 * quality;
  int q[64];
  for (int i = 0; i < 64; ++i)
    q[i] = std::clamp((kLumaQuant[i] * scale + 50) / 100, 1, 255);
  Image out(x.h, x.w);
  double blk[64], coef[64];
  for (int by = 0; by < x.h; by += 8)
    for (int bx = 0; bx < x.w; bx += 8) {
      for (int y = 0; y < 8; ++y)
        for (int xx = 0; xx < 8; ++xx) {
          const int sy = std::min(by + y, x.h - 1), sx = std::min(bx + xx, x.w - 1);
          blk[y * 8 + xx] = x.at(sy, sx) * 255.0 - 128.0;
        }
      dct8(blk, coef, false);
      // the orthonormal DCT differs from the JPEG convention by 8x
      for (int i = 0; i < 64; ++i)
        coef[i] = std::round(coef[i] * 8.0 / q[i]) * q[i] / 8.0;
      dct8(coef, blk, true);
      for (int y = 0; y < 8 && by + y < x.h; ++y)
        for (int xx = 0; xx < 8 && bx + xx < x.w; ++xx)
          out.at(by + y, bx + xx) = clamp01((blk[y * 8 + xx] + 128.0) / 255.0);
    }
  return out;
}

}  // namespace

const char* kind_name(Kind k) {
  switch (k) {
    case Kind::None: return "none";
    case Kind::TranslateH: return "translate_h";
    case Kind::TranslateV: return "translate_v";
    case Kind::Rotate: return "rotate";
    case Kind::GaussianNoise: return "gaussian_noise";
    case Kind::ImpulseNoise: return "impulse_noise";
    case Kind::RicianNoise: return "rician_noise";
    case Kind::GaussianBlur: return "gaussian_blur";
    case Kind::Jpeg: return "jpeg";
    case Kind::PGD: return "pgd";
  }
  return "?";
}

Kind parse_kind(const std::string& name) {
  for (Kind k : {Kind::None, Kind::TranslateH, Kind::TranslateV, Kind::Rotate,
                 Kind::GaussianNoise, Kind::ImpulseNoise, Kind::RicianNoise,
                 Kind::GaussianBlur, Kind::Jpeg, Kind::PGD})
    if (name == kind_name(k)) return k;
  throw ConfigError("unknown perturbation kind: " + name);
}

int kind_levels(Kind k) {
  switch (k) {
    case Kind::None: return 0;
    case Kind::TranslateH:
    case Kind::TranslateV: return 8;
    case Kind::Rotate: return 10;
    case Kind::PGD: return 16;
    default: return 5;
  }
}

bool kind_is_noise(Kind k) {
  return k == Kind::GaussianNoise || k == Kind::ImpulseNoise ||
         k == Kind::RicianNoise;
}

std::string PerturbationSpec::label() const {
  if (kind == Kind::PGD)
    return std::string(kind_name(kind)) + "_a" + std::to_string(int(pgd_alpha * 255 + 0.5)) +
           "_i" + std::to_string(pgd_iters);
  return std::string(kind_name(kind)) + "_l" + std::to_string(level);
}

double gaussian_sigma(int level) {
  if (level < 1 || level > 5) throw ConfigError("gaussian noise level out of range");
  return kGaussianSigmas[level - 1];
}
double impulse_amount(int level) {
  if (level < 1 || level > 5) throw ConfigError("impulse noise level out of range");
  return kImpulseAmounts[level - 1];
}
double blur_sigma(int level) {
  if (level < 1 || level > 5) throw ConfigError("blur level out of range");
  return kBlurSigmas[level - 1];
}
int jpeg_quality(int level) {
  if (level < 1 || level > 5) throw ConfigError("jpeg level out of range");
  return kJpegQualities[level - 1];
}

Image apply_spatial(const Image& x, Kind kind, int level, Rng& rng) {
  if (level == 0) return x;
  if (level < 0 || level > kind_levels(kind))
    throw ConfigError("apply_spatial: level out of range");
  const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
  switch (kind) {
    case Kind::TranslateH: return translated(x, 0, int(sign) * level);
    case Kind::TranslateV: return translated(x, int(sign) * level, 0);
    case Kind::Rotate: return rotated(x, sign * 3.0 * level * M_PI / 180.0);
    default: throw ConfigError("apply_spatial: not a spatial kind");
  }
}

Image apply_distortion(const Image& x, Kind kind, int level, Rng& rng) {
  if (level == 0) return x;
  if (level < 0 || level > kind_levels(kind))
    throw ConfigError("apply_distortion: level out of range");
  Image out = x;
  for (auto& v : out.v) v = clamp01(v);
  switch (kind) {
    case Kind::GaussianNoise: {
      const double sigma = gaussian_sigma(level);
      for (auto& v : out.v) v = clamp01(v + rng.normal(0.0, sigma));
      return out;
    }
    case Kind::ImpulseNoise: {
      const double amount = impulse_amount(level);
      for (auto& v : out.v)
        if (rng.uniform() < amount) v = rng.uniform() < 0.5 ? 0.0 : 1.0;
      return out;
    }
    case Kind::RicianNoise: {
      const double sigma = gaussian_sigma(level);
      for (auto& v : out.v) {
        const double n1 = rng.normal(0.0, sigma), n2 = rng.normal(0.0, sigma);
        v = clamp01(std::hypot(v + n1, n2));
      }
      return out;
    }
    case Kind::GaussianBlur: return gaussian_blurred(out, blur_sigma(level));
    case Kind::Jpeg: return jpeg_compressed(out, jpeg_quality(level));
    default: throw ConfigError("apply_distortion: not a distortion kind");
  }
}

phantom::CineSequence apply_to_sequence(const phantom::CineSequence& seq,
                                        const PerturbationSpec& spec, Rng rng,
                                        bool per_frame_noise) {
  phantom::CineSequence out = seq;
  if (spec.kind == Kind::None || spec.level == 0) return out;
  if (spec.kind == Kind::PGD)
    throw ConfigError("apply_to_sequence: PGD needs the model (use pgd_attack)");

  switch (spec.kind) {
    case Kind::TranslateH:
    case Kind::TranslateV:
    case Kind::Rotate: {
      // one sampled sign shared by all frames
      Rng shared = rng;
      for (auto& fr : out.frames) {
        Rng r = shared;
        fr = apply_spatial(fr, spec.kind, spec.level, r);
      }
      return out;
    }
    default: {
      if (kind_is_noise(spec.kind) && !per_frame_noise) {
        // one noise realization shared across the subject's frames
        const Rng shared = rng;
        for (auto& fr : out.frames) {
          Rng r = shared;
          fr = apply_distortion(fr, spec.kind, spec.level, r);
        }
      } else {
        for (auto& fr : out.frames)
          fr = apply_distortion(fr, spec.kind, spec.level, rng);
      }
      return out;
    }
  }
}

}  // namespace pq::perturb
