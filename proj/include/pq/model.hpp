#pragma once

// Variant construction and the full forward pass: pyramid front-end, shared
// five-layer CNN over streams, shared LSTM over the 20-frame sequence,
// regression heads, area averaging.

#include <array>
#include <string>

#include "pq/checkpoint.hpp"
#include "pq/ops.hpp"
#include "pq/optim.hpp"
#include "pq/spt.hpp"

namespace pq::model {

using spt::VariantId;

constexpr std::size_t kFrames = 20;
constexpr std::size_t kIndices = 11;
constexpr std::size_t kLstmWidth = 100;

template <typename T>
struct ConvLayer {
  Tensor<T> w, b, gamma, beta;
  ops::RunningStats<T> rs;
  int k = 3, stride = 1, pad = 1;
};

template <typename T>
struct ModelParams {
  VariantId variant = VariantId::SPT_SC_L;
  double width = 1.0;
  int rows = 80, cols = 80;
  double dropout_rate = 0.5;

  std::vector<ConvLayer<T>> conv;  // 5 layers
  Tensor<T> fc_w, fc_b;
  ops::LstmWeights<T> lstm;
  Tensor<T> heads_w;  // [streams, head_rows, C]
  Tensor<T> heads_b;  // [streams, head_rows]

  std::vector<NamedParam<T>> named_params() {
    std::vector<NamedParam<T>> out;
    for (std::size_t i = 0; i < conv.size(); ++i) {
      const std::string p = "conv" + std::to_string(i + 1);
      out.push_back({p + ".weight", conv[i].w});
      out.push_back({p + ".bias", conv[i].b});
      out.push_back({p + ".bn.gamma", conv[i].gamma});
      out.push_back({p + ".bn.beta", conv[i].beta});
    }
    out.push_back({"fc.weight", fc_w});
    out.push_back({"fc.bias", fc_b});
    out.push_back({"lstm.w_f", lstm.w_f});
    out.push_back({"lstm.w_in", lstm.w_in});
    out.push_back({"lstm.w_out", lstm.w_out});
    out.push_back({"lstm.w_c", lstm.w_c});
    out.push_back({"lstm.b_f", lstm.b_f});
    out.push_back({"lstm.b_in", lstm.b_in});
    out.push_back({"lstm.b_out", lstm.b_out});
    out.push_back({"lstm.b_c", lstm.b_c});
    out.push_back({"heads.weight", heads_w});
    out.push_back({"heads.bias", heads_b});
    return out;
  }

  void set_requires_grad(bool rg) {
    for (auto& p : named_params()) p.t.set_requires_grad(rg);
  }
  void zero_grads() {
    for (auto& p : named_params()) p.t.zero_grad();
  }
};

inline std::vector<int> conv_widths(double width) {
  const int base[5] = {60, 120, 240, 480, 480};
  std::vector<int> out(5);
  for (int i = 0; i < 5; ++i) out[i] = std::max(1, int(std::lround(base[i] * width)));
  return out;
}

template <typename T>
ModelParams<T> build_variant(VariantId v, double width, std::uint64_t seed,
                             int rows = 80, int cols = 80) {
  if (width <= 0 || width > 1.0)
    throw ConfigError("build_variant: width multiplier must be in (0,1]");
  ModelParams<T> m;
  m.variant = v;
  m.width = width;
  m.rows = rows;
  m.cols = cols;
  Rng rng(seed ^ 0x5157u);

  const auto cw = conv_widths(width);
  const int ks[5] = {7, 5, 5, 3, 3};
  int cin = spt::variant_channels(v);
  for (int i = 0; i < 5; ++i) {
    ConvLayer<T> l;
    l.k = ks[i];
    l.stride = 1;
    l.pad = ks[i] / 2;
    const int cout = cw[i];
    const double std = std::sqrt(2.0 / (double(cin) * ks[i] * ks[i]));
    l.w = Tensor<T>::zeros({std::size_t(cout), std::size_t(cin),
                            std::size_t(ks[i]), std::size_t(ks[i])}, true);
    for (auto& x : l.w.data()) x = T(rng.normal(0.0, std));
    l.b = Tensor<T>::zeros({std::size_t(cout)}, true);
    l.gamma = Tensor<T>::full({std::size_t(cout)}, T(1), true);
    l.beta = Tensor<T>::zeros({std::size_t(cout)}, true);
    l.rs = ops::RunningStats<T>(cout);
    m.conv.push_back(std::move(l));
    cin = cout;
  }
  const int fc_in = cw[4];
  const double fc_std = std::sqrt(2.0 / double(fc_in));
  m.fc_w = Tensor<T>::zeros({kLstmWidth, std::size_t(fc_in)}, true);
  for (auto& x : m.fc_w.data()) x = T(rng.normal(0.0, fc_std));
  m.fc_b = Tensor<T>::zeros({kLstmWidth}, true);

  const double lstm_a = 1.0 / std::sqrt(double(kLstmWidth));
  auto lstm_mat = [&] {
    Tensor<T> w = Tensor<T>::zeros({kLstmWidth, 2 * kLstmWidth}, true);
    for (auto& x : w.data()) x = T(rng.uniform(-lstm_a, lstm_a));
    return w;
  };
  m.lstm.w_f = lstm_mat();
  m.lstm.w_in = lstm_mat();
  m.lstm.w_out = lstm_mat();
  m.lstm.w_c = lstm_mat();
  m.lstm.b_f = Tensor<T>::zeros({kLstmWidth}, true);
  m.lstm.b_in = Tensor<T>::zeros({kLstmWidth}, true);
  m.lstm.b_out = Tensor<T>::zeros({kLstmWidth}, true);
  m.lstm.b_c = Tensor<T>::zeros({kLstmWidth}, true);

  const std::size_t S = std::size_t(spt::variant_streams(v));
  const std::size_t R = std::size_t(spt::variant_head_rows(v));
  m.heads_w = Tensor<T>::zeros({S, R, kLstmWidth}, true);
  for (auto& x : m.heads_w.data()) x = T(rng.uniform(-lstm_a, lstm_a));
  m.heads_b = Tensor<T>::zeros({S, R}, true);
  return m;
}

// Parameter accounting in the Fig.-6 chain order:
// conv1, pool, conv2, pool, conv3, pool, conv4, pool, conv5, l2pool, fc.
struct ParamCounts {
  std::vector<long> chain;
  long cnn_total = 0;
  long lstm = 0;
  long heads = 0;
  long total = 0;
};

template <typename T>
ParamCounts count_params(const ModelParams<T>& m) {
  ParamCounts pc;
  for (const auto& l : m.conv) {
    const long n = long(l.w.size()) + long(l.b.size()) + long(l.gamma.size()) +
                   long(l.beta.size());
    pc.chain.push_back(n);
    pc.chain.push_back(0);  // pooling layer
  }
  pc.chain.push_back(long(m.fc_w.size()) + long(m.fc_b.size()));
  for (long n : pc.chain) pc.cnn_total += n;
  pc.lstm = long(m.lstm.w_f.size()) * 4 + long(m.lstm.b_f.size()) * 4;
  pc.heads = long(m.heads_w.size()) + long(m.heads_b.size());
  pc.total = pc.cnn_total + pc.lstm + pc.heads;
  return pc;
}

// ---- pyramid front-end as a tape operation (constant linear map) ----

template <typename T>
Tensor<T> spt_frontend(const Tensor<T>& slices, const spt::FilterBank& bank,
                       VariantId v) {
  if (slices.rank() != 3) throw DimensionError("spt_frontend: expected [B,H,W]");
  const std::size_t B = slices.dim(0);
  const int H = int(slices.dim(1)), W = int(slices.dim(2));
  if (H != bank.rows || W != bank.cols)
    throw DimensionError("spt_frontend: slice size does not match filter bank");
  const std::size_t S = spt::variant_streams(v), C = spt::variant_channels(v);
  const std::size_t plane = std::size_t(H) * W;
  const bool traced = ops::grad_needed<T>({&slices});
  Tensor<T> y = ops::make_out<T>({B * S, C, std::size_t(H), std::size_t(W)}, traced);

#pragma omp parallel for schedule(static)
  for (std::int64_t b = 0; b < std::int64_t(B); ++b) {
    const T* src = slices.data().data() + std::size_t(b) * plane;
    T* dst = y.data().data() + std::size_t(b) * S * C * plane;
    if (!spt::variant_uses_spt(v)) {
      for (std::size_t i = 0; i < plane; ++i) dst[i] = src[i];
      continue;
    }
    Image im(H, W);
    for (std::size_t i = 0; i < plane; ++i) im.v[i] = double(src[i]);
    const auto pyr = spt::decompose(im, bank, spt::variant_keeps_highpass(v));
    const auto org = spt::organize(pyr, v);
    for (std::size_t i = 0; i < org.size(); ++i) dst[i] = T(org[i]);
  }

  if (traced) {
    auto xi = slices.impl(), yi = y.impl();
    const auto* bankp = &bank;
    ops::active_tape<T>()->record(yi, [xi, yi, bankp, v, B, S, C, plane] {
      if (!xi->requires_grad) return;
      xi->ensure_grad();
#pragma omp parallel for schedule(static)
      for (std::int64_t b = 0; b < std::int64_t(B); ++b) {
        std::vector<double> g(S * C * plane);
        const T* gs = yi->grad.data() + std::size_t(b) * S * C * plane;
        for (std::size_t i = 0; i < g.size(); ++i) g[i] = double(gs[i]);
        const Image gx = spt::organize_adjoint(g, v, *bankp);
        T* dst = xi->grad.data() + std::size_t(b) * plane;
        for (std::size_t i = 0; i < plane; ++i) dst[i] += T(gx.v[i]);
      }
    });
  }
  return y;
}

// ---- CNN ----

template <typename T>
Tensor<T> cnn_forward(ModelParams<T>& m, const Tensor<T>& x, bool train,
                      Rng& rng) {
  if (x.rank() != 4 || int(x.dim(1)) != spt::variant_channels(m.variant))
    throw DimensionError("cnn_forward: input channels do not match variant");
  Tensor<T> h = x;
  for (std::size_t i = 0; i < m.conv.size(); ++i) {
    auto& l = m.conv[i];
    h = ops::conv2d(h, l.w, l.b, l.stride, l.pad);
    h = ops::batch_norm(h, l.gamma, l.beta, l.rs, train, /*fuse_relu=*/true);
    if (i < 4) h = ops::max_pool2(h);
  }
  h = ops::l2_pool(h);
  h = ops::reshape(h, {h.dim(0), h.dim(1)});
  h = ops::linear(h, m.fc_w, m.fc_b);
  h = ops::dropout(h, m.dropout_rate, rng, train);
  return h;  // [B', 100]
}

inline std::vector<ops::CombineRule> combine_rules(VariantId v) {
  std::vector<ops::CombineRule> rules;
  if (v == VariantId::SPT_SC_L) {
    for (std::size_t i = 0; i < 3; ++i) {
      rules.push_back({0, i, 0, 1.0 / 3.0});  // myocardium area, averaged
      rules.push_back({1, i, 1, 1.0 / 3.0});  // cavity area, averaged
      rules.push_back({2 + i, i, 2, 1.0});    // directional dimension i
      rules.push_back({5 + i, i, 3, 1.0});    // wall thickness i
      rules.push_back({8 + i, i, 4, 1.0});    // wall thickness i+3
    }
  } else if (v == VariantId::SPT_OC_L) {
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < kIndices; ++j)
        rules.push_back({j, i, j, 1.0 / 3.0});
  }
  return rules;
}

// Full sequence forward for one or more subjects. `slices` is [B,H,W] with
// B a multiple of 20, subject-major / frame-minor. Returns [B, 11]
// predictions in normalized units.
template <typename T>
Tensor<T> sequence_forward(ModelParams<T>& m, const spt::FilterBank& bank,
                           const Tensor<T>& slices, bool train, Rng& rng) {
  if (slices.rank() != 3) throw DimensionError("sequence_forward: expected [B,H,W]");
  const std::size_t B = slices.dim(0);
  if (B == 0 || B % kFrames != 0)
    throw DimensionError("sequence_forward: need exactly 20 frames per subject");
  const std::size_t n_subj = B / kFrames;
  const std::size_t S = spt::variant_streams(m.variant);

  Tensor<T> organized = spt_frontend(slices, bank, m.variant);
  Tensor<T> feats = cnn_forward(m, organized, train, rng);  // [B*S, 100]

  const std::size_t lanes = n_subj * S;
  Tensor<T> h = Tensor<T>::zeros({lanes, kLstmWidth});
  Tensor<T> c = Tensor<T>::zeros({lanes, kLstmWidth});
  const auto rules = combine_rules(m.variant);

  std::vector<Tensor<T>> per_frame;
  per_frame.reserve(kFrames);
  for (std::size_t t = 0; t < kFrames; ++t) {
    std::vector<std::size_t> idx(lanes);
    for (std::size_t si = 0; si < n_subj; ++si)
      for (std::size_t s = 0; s < S; ++s)
        idx[si * S + s] = (si * kFrames + t) * S + s;
    Tensor<T> d_t = ops::gather_rows(feats, std::move(idx));
    auto st = ops::lstm_cell(d_t, h, c, m.lstm);
    h = st.h;
    c = st.c;

    std::vector<Tensor<T>> streams;
    for (std::size_t s = 0; s < S; ++s) {
      std::vector<std::size_t> lane_idx(n_subj);
      for (std::size_t si = 0; si < n_subj; ++si) lane_idx[si] = si * S + s;
      Tensor<T> hs = S == 1 ? h : ops::gather_rows(h, std::move(lane_idx));
      streams.push_back(ops::head_linear(hs, m.heads_w, m.heads_b, s));
    }
    per_frame.push_back(rules.empty() ? streams[0]
                                      : ops::combine_streams(streams, rules, kIndices));
  }
  Tensor<T> stacked = ops::concat_rows(per_frame);  // rows: t*n_subj + si
  std::vector<std::size_t> perm(B);
  for (std::size_t si = 0; si < n_subj; ++si)
    for (std::size_t t = 0; t < kFrames; ++t)
      perm[si * kFrames + t] = t * n_subj + si;
  return ops::gather_rows(stacked, std::move(perm));
}

// ---- checkpoint plumbing ----

template <typename T>
void collect_blobs(ModelParams<T>& m, NamedBlobs& blobs) {
  for (auto& p : m.named_params()) blobs.emplace_back(p.name, blob_from_tensor(p.t));
  for (std::size_t i = 0; i < m.conv.size(); ++i) {
    const std::string p = "conv" + std::to_string(i + 1) + ".bn.";
    auto& rs = m.conv[i].rs;
    ParamBlob mean, var, upd;
    if constexpr (sizeof(T) == 4) {
      mean = ParamBlob::from_f32({rs.mean.size()}, reinterpret_cast<const float*>(rs.mean.data()));
      var = ParamBlob::from_f32({rs.var.size()}, reinterpret_cast<const float*>(rs.var.data()));
    } else {
      mean = ParamBlob::from_f64({rs.mean.size()}, reinterpret_cast<const double*>(rs.mean.data()));
      var = ParamBlob::from_f64({rs.var.size()}, reinterpret_cast<const double*>(rs.var.data()));
    }
    const double u = double(rs.updates);
    upd = ParamBlob::from_f64({1}, &u);
    blobs.emplace_back(p + "running_mean", std::move(mean));
    blobs.emplace_back(p + "running_var", std::move(var));
    blobs.emplace_back(p + "updates", std::move(upd));
  }
}

template <typename T>
void restore_blobs(ModelParams<T>& m, const NamedBlobs& blobs) {
  auto find = [&](const std::string& name) -> const ParamBlob& {
    for (const auto& [n, b] : blobs)
      if (n == name) return b;
    throw IoError("checkpoint: missing parameter " + name);
  };
  for (auto& p : m.named_params()) tensor_fill_from_blob(p.t, find(p.name));
  for (std::size_t i = 0; i < m.conv.size(); ++i) {
    const std::string p = "conv" + std::to_string(i + 1) + ".bn.";
    auto& rs = m.conv[i].rs;
    const auto mean = find(p + "running_mean").as_f64();
    const auto var = find(p + "running_var").as_f64();
    if (mean.size() != rs.mean.size())
      throw IoError("checkpoint: BN stat size mismatch");
    for (std::size_t j = 0; j < mean.size(); ++j) {
      rs.mean[j] = T(mean[j]);
      rs.var[j] = T(var[j]);
    }
    rs.updates = long(find(p + "updates").as_f64()[0]);
  }
}

}  // namespace pq::model
