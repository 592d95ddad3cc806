#pragma once

// Input perturbations: spatial transformations, image distortions with five
// severity levels (ImageNet-C constants), and unconstrained PGD. A subject's
// 20 frames always receive the same spec and the same sampled realization.

#include <string>
#include <vector>

#include "pq/common.hpp"
#include "pq/model.hpp"
#include "pq/objective.hpp"
#include "pq/phantom.hpp"

namespace pq::perturb {

enum class Kind {
  None,
  TranslateH,
  TranslateV,
  Rotate,
  GaussianNoise,
  ImpulseNoise,
  RicianNoise,
  GaussianBlur,
  Jpeg,
  PGD,
};

const char* kind_name(Kind k);
Kind parse_kind(const std::string& name);
int kind_levels(Kind k);  // ladder length
bool kind_is_noise(Kind k);

struct PerturbationSpec {
  Kind kind = Kind::None;
  int level = 0;  // 1-based within the kind's ladder; None <=> 0
  // PGD parameters (level maps onto the alpha x iters grid)
  double pgd_alpha = 0.0;
  int pgd_iters = 0;

  std::string label() const;
};

// levels: translation 1..8 (pixels), rotation 1..10 (3 deg each)
Image apply_spatial(const Image& x, Kind kind, int level, Rng& rng);

// severity ladders per kind_levels(); input and output in [0,1]
Image apply_distortion(const Image& x, Kind kind, int level, Rng& rng);

double gaussian_sigma(int level);
double impulse_amount(int level);
double blur_sigma(int level);
int jpeg_quality(int level);

// Applies one spec to a whole subject: one realization shared by all frames
// (per_frame_noise draws fresh noise per frame instead).
phantom::CineSequence apply_to_sequence(const phantom::CineSequence& seq,
                                        const PerturbationSpec& spec, Rng rng,
                                        bool per_frame_noise = false);

// Unconstrained PGD: signed-gradient ascent on the sequence MAE with pixel
// range [0,1] as the only projection; one gradient per iteration through the
// full pipeline (pyramid front-end included), all 20 frames jointly.
template <typename T>
phantom::CineSequence pgd_attack(model::ModelParams<T>& m,
                                 const spt::FilterBank& bank,
                                 const phantom::CineSequence& seq, double alpha,
                                 int iters) {
  using model::kFrames;
  if (seq.frames.size() != kFrames)
    throw DimensionError("pgd_attack: need exactly 20 frames");
  const int H = seq.frames[0].h, W = seq.frames[0].w;
  const std::size_t plane = std::size_t(H) * W;

  // frozen model: parameters keep their values, gradients flow to input only
  m.set_requires_grad(false);
  std::vector<T> targets;
  targets.reserve(kFrames * model::kIndices);
  for (const auto& tv : seq.truth) {
    const auto norm = phantom::normalize_indices(tv, H, W, seq.spacing);
    for (double v : norm.v) targets.push_back(T(v));
  }
  Tensor<T> target =
      Tensor<T>::from({kFrames, model::kIndices}, std::move(targets));

  std::vector<T> x(kFrames * plane);
  for (std::size_t t = 0; t < kFrames; ++t)
    for (std::size_t i = 0; i < plane; ++i)
      x[t * plane + i] = T(seq.frames[t].v[i]);

  Rng rng(0);  // eval mode: dropout inactive, rng unused
  for (int it = 0; it < iters && alpha > 0.0; ++it) {
    Tape<T> tape;
    TapeScope<T> scope(tape);
    Tensor<T> input = Tensor<T>::from({kFrames, std::size_t(H), std::size_t(W)}, x, true);
    Tensor<T> pred = model::sequence_forward(m, bank, input, /*train=*/false, rng);
    Tensor<T> loss = objective::mae_loss(pred, target);
    tape.backward(loss);
    const auto& g = input.grad();
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (std::isnan(double(g[i])))
        throw NumericError("pgd_attack: NaN gradient at pixel " + std::to_string(i));
      const T s = g[i] > T(0) ? T(1) : (g[i] < T(0) ? T(-1) : T(0));
      x[i] = std::min(T(1), std::max(T(0), x[i] + T(alpha) * s));
    }
  }
  m.set_requires_grad(true);

  phantom::CineSequence out = seq;
  for (std::size_t t = 0; t < kFrames; ++t)
    for (std::size_t i = 0; i < plane; ++i)
      out.frames[t].v[i] = double(x[t * plane + i]);
  return out;
}

}  // namespace pq::perturb
