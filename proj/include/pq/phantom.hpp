#pragma once

// Synthetic cine phantoms: elliptical myocardial annulus around an elliptical
// cavity, smooth contraction-relaxation over 20 frames, analytic ground truth
// for the 11 indices, plus a rasterization oracle, the dataset container, and
// training-time augmentation.

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "pq/common.hpp"

namespace pq::phantom {

constexpr int kFrames = 20;
constexpr int kIndices = 11;

// Order: A1 (myocardium area), A2 (cavity area), D1..D3, T1..T6.
struct IndexVector {
  std::array<double, kIndices> v{};
  double& operator[](int i) { return v[i]; }
  double operator[](int i) const { return v[i]; }
};

const char* index_name(int i);
// 0 = areas, 1 = dimensions, 2 = thicknesses
int index_family(int i);
const char* family_name(int f);

struct FrameGeometry {
  double cx = 40, cy = 40;
  double a_in = 10, b_in = 10;    // cavity semi-axes, pixels
  double a_out = 15, b_out = 15;  // outer ellipse semi-axes
  double tilt = 0;                // radians
  double mod1_amp = 0, mod1_phase = 0;  // outer-boundary radial modulation
  double mod3_amp = 0, mod3_phase = 0;

  double cavity_radius(double theta) const;
  double outer_radius(double theta) const;
};

struct PhantomConfig {
  int rows = 80, cols = 80;
  double spacing = 1.0;  // mm per pixel
  // geometry (pixels); per-subject jitter applied when randomize is set
  double cavity_radius_ed = 11.0;
  double radius_ejection = 0.32;  // fractional radius reduction at end-systole
  double phase_offset = 0.0;      // fraction of a cycle
  double wall_base = 5.0;
  double wall_thickening = 0.35;
  double ellipticity = 0.85;  // b/a
  double mod1_amp = 0.035, mod3_amp = 0.06;
  // intensities (cine-like contrast: blood > myocardium > background)
  double intensity_blood = 0.85, intensity_myo = 0.50, intensity_bg = 0.15;
  double bias_strength = 0.15;
  double noise_sigma = 0.03;
  std::uint64_t seed = 1;
  bool randomize = true;
};

struct CineSequence {
  std::uint32_t id = 0;
  double spacing = 1.0;
  std::vector<Image> frames;
  std::vector<IndexVector> truth;       // physical units (mm^2 / mm)
  std::vector<FrameGeometry> geometry;  // empty when unknown (foreign data)
};

IndexVector analytic_indices(const FrameGeometry& g, double spacing);

CineSequence generate_subject(const PhantomConfig& cfg, std::uint32_t subject_id);
std::vector<CineSequence> generate_dataset(const PhantomConfig& cfg, int subjects);

void rasterize_masks(const FrameGeometry& g, int rows, int cols,
                     std::vector<std::uint8_t>& cavity,
                     std::vector<std::uint8_t>& myo);
IndexVector rasterize_indices(const std::vector<std::uint8_t>& cavity,
                              const std::vector<std::uint8_t>& myo, int rows,
                              int cols, double spacing);

// Dataset container ("PQDS"): binary file plus a JSON sidecar mirroring the
// metadata (including generator geometry when available).
void save_dataset(const std::vector<CineSequence>& subjects,
                  const std::string& path);
std::vector<CineSequence> load_dataset(const std::string& path);
std::size_t predicted_file_size(const std::vector<CineSequence>& subjects);

struct AugmentParams {
  int shift_y = 0, shift_x = 0;  // pixels
  double rotation = 0;           // radians, |rotation| <= 15 deg
  int crop_top = 0, crop_bottom = 0, crop_left = 0, crop_right = 0;
  double contrast = 1.0;
};

AugmentParams sample_augment_params(const CineSequence& seq, std::uint64_t seed);
CineSequence augment(const CineSequence& seq, const AugmentParams& p);
CineSequence augment(const CineSequence& seq, std::uint64_t seed);

// Normalization used for training targets: areas by rows*cols*spacing^2,
// lengths by max(rows,cols)*spacing. Reports denormalize back.
IndexVector normalize_indices(const IndexVector& physical, int rows, int cols,
                              double spacing);
IndexVector denormalize_indices(const IndexVector& normalized, int rows,
                                int cols, double spacing);

}  // namespace pq::phantom
