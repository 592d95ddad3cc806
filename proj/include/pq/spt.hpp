#pragma once

// Frequency-domain steerable pyramid: analysis/synthesis filter bank with
// raised-cosine radial transitions and cos^K angular windows, tight by
// construction (synthesis is the exact adjoint of analysis). Subbands are
// real; boundary semantics are circular.

#include <optional>
#include <string>
#include <vector>

#include "pq/common.hpp"
#include "pq/fft2.hpp"

namespace pq::spt {

struct FilterBank {
  int rows = 0, cols = 0;
  int scales = 2;
  int orientations = 3;  // K+1
  double orientation_offset = 0.0;

  std::vector<double> h0, l0;  // top split masks, rows*cols
  struct Level {
    int h = 0, w = 0;                      // grid this level filters on
    std::vector<std::vector<cplx>> band;   // per orientation
    std::vector<double> lo;                // lowpass handed to the next level
  };
  std::vector<Level> levels;  // level 0 = Scale 1 (full resolution)
};

struct Pyramid {
  int rows = 0, cols = 0;
  int orientations = 3;
  Image lowpass;                          // x0, rows>>scales
  std::vector<std::vector<Image>> bands;  // bands[level][k]; level 0 = Scale 1
  bool has_highpass = false;
  Image highpass;  // x7 when kept
};

// Raised-cosine transitions between pi/4 and pi/2 per level (pi/2..pi for the
// top split); angular order K = orientations-1; offset pi/6 lands the three
// orientations on 30/90/150 degrees.
FilterBank build_filter_bank(int rows, int cols, int scales = 2,
                             int orientations = 3,
                             double orientation_offset = M_PI / 6);

Pyramid decompose(const Image& x, const FilterBank& bank, bool keep_highpass);

struct ReconstructResult {
  Image image;
  bool lossy = false;  // set when the highpass band was absent
};
ReconstructResult reconstruct(const Pyramid& p, const FilterBank& bank);

// Synthesis of a single channel set (used for energy bookkeeping): any subband
// may be zeroed by the caller before synthesizing.
Image synthesize(const Pyramid& p, const FilterBank& bank);

// Interpolate responses of one scale to an arbitrary angle; exact for the
// cos^K family.
Image steer(const std::vector<Image>& responses, double angle,
            const FilterBank& bank);
std::vector<double> steering_weights(double angle, int orientations,
                                     double orientation_offset);

// Max deviation from 1 of the total spectral power over all analysis
// channels; ~0 for a tight frame.
double tight_frame_flatness_deviation(const FilterBank& bank);

// ---- subband organization feeding the network ----

enum class VariantId {
  Baseline,
  BaselineAug,
  SPT_AC,
  SPT_AC_H,
  SPT_AC_L,
  SPT_OC_L,
  SPT_SC_L,
};

const char* variant_name(VariantId v);
VariantId parse_variant(const std::string& name);
bool variant_uses_spt(VariantId v);
bool variant_keeps_highpass(VariantId v);
int variant_streams(VariantId v);      // batch-group factor per slice
int variant_channels(VariantId v);     // CNN input channels
int variant_head_rows(VariantId v);    // regression rows per head
std::string variant_input_shape(VariantId v, int rows, int cols);
std::string variant_output_shape(VariantId v);

// Network input for one slice: [streams, channels, rows, cols] (row-major),
// bilinear-upsampled where subband grids are smaller than the slice.
std::vector<double> organize(const Pyramid& p, VariantId v);
// Adjoint of decompose+organize, for gradients w.r.t. the raw slice.
Image organize_adjoint(const std::vector<double>& grad, VariantId v,
                       const FilterBank& bank);

// Debug dump: per-subband raw little-endian f32 grids + JSON manifest.
void dump_pyramid(const Pyramid& p, const std::string& dir);

}  // namespace pq::spt
