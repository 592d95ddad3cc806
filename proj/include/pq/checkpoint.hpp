#pragma once

// Parameter checkpoint container.
// Layout: magic "PQCK", version u32, header-JSON length u32 + bytes, then
// parameter count u32 and per parameter: name length u16, UTF-8 name,
// rank u8, extents u32[rank], precision tag u8 (0=f32, 1=f64), raw
// little-endian values.

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "pq/tensor.hpp"

namespace pq {

struct ParamBlob {
  std::vector<std::size_t> shape;
  int precision = 0;  // 0 = f32, 1 = f64
  std::vector<unsigned char> bytes;

  std::size_t count() const { return product(shape); }
  std::vector<double> as_f64() const;
  std::vector<float> as_f32() const;

  static ParamBlob from_f32(std::vector<std::size_t> shape, const float* v);
  static ParamBlob from_f64(std::vector<std::size_t> shape, const double* v);
};

using NamedBlobs = std::vector<std::pair<std::string, ParamBlob>>;

void save_checkpoint(const std::string& path, const std::string& header_json,
                     const NamedBlobs& params);
// Returns header JSON; fills params in file order.
std::string load_checkpoint(const std::string& path, NamedBlobs& params);

template <typename T>
ParamBlob blob_from_tensor(const Tensor<T>& t) {
  if constexpr (sizeof(T) == 4)
    return ParamBlob::from_f32(t.shape(), reinterpret_cast<const float*>(t.data().data()));
  else
    return ParamBlob::from_f64(t.shape(), reinterpret_cast<const double*>(t.data().data()));
}

template <typename T>
void tensor_fill_from_blob(Tensor<T>& t, const ParamBlob& b) {
  if (t.shape() != b.shape)
    throw DimensionError("checkpoint: shape mismatch while loading parameter");
  const auto v = b.as_f64();
  for (std::size_t i = 0; i < v.size(); ++i) t.data()[i] = T(v[i]);
}

}  // namespace pq
