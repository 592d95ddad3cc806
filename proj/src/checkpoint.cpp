#include "pq/checkpoint.hpp"

#include <cstdio>
#include <cstring>
#include <memory>

namespace pq {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using File = std::unique_ptr<std::FILE, FileCloser>;

template <typename T>
void write_raw(std::FILE* f, const T& v) {
  if (std::fwrite(&v, sizeof(T), 1, f) != 1) throw IoError("checkpoint: write failed");
}

void write_bytes(std::FILE* f, const void* p, std::size_t n) {
  if (n && std::fwrite(p, 1, n, f) != n) throw IoError("checkpoint: write failed");
}

template <typename T>
T read_raw(std::FILE* f) {
  T v;
  if (std::fread(&v, sizeof(T), 1, f) != 1)
    throw IoError("checkpoint: truncated file");
  return v;
}

void read_bytes(std::FILE* f, void* p, std::size_t n) {
  if (n && std::fread(p, 1, n, f) != n) throw IoError("checkpoint: truncated file");
}

constexpr std::uint32_t kVersion = 1;

}  // namespace

std::vector<double> ParamBlob::as_f64() const {
  std::vector<double> out(count());
  if (precision == 1) {
    std::memcpy(out.data(), bytes.data(), out.size() * 8);
  } else {
    const float* p = reinterpret_cast<const float*>(bytes.data());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = double(p[i]);
  }
  return out;
}

std::vector<float> ParamBlob::as_f32() const {
  std::vector<float> out(count());
  if (precision == 0) {
    std::memcpy(out.data(), bytes.data(), out.size() * 4);
  } else {
    const double* p = reinterpret_cast<const double*>(bytes.data());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = float(p[i]);
  }
  return out;
}

ParamBlob ParamBlob::from_f32(std::vector<std::size_t> shape, const float* v) {
  ParamBlob b;
  b.shape = std::move(shape);
  b.precision = 0;
  b.bytes.resize(b.count() * 4);
  std::memcpy(b.bytes.data(), v, b.bytes.size());
  return b;
}

ParamBlob ParamBlob::from_f64(std::vector<std::size_t> shape, const double* v) {
  ParamBlob b;
  b.shape = std::move(shape);
  b.precision = 1;
  b.bytes.resize(b.count() * 8);
  std::memcpy(b.bytes.data(), v, b.bytes.size());
  return b;
}

void save_checkpoint(const std::string& path, const std::string& header_json,
                     const NamedBlobs& params) {
  File f(std::fopen(path.c_str(), "wb"));
  if (!f) throw IoError("checkpoint: cannot open for writing: " + path);
  write_bytes(f.get(), "PQCK", 4);
  write_raw<std::uint32_t>(f.get(), kVersion);
  write_raw<std::uint32_t>(f.get(), std::uint32_t(header_json.size()));
  write_bytes(f.get(), header_json.data(), header_json.size());
  write_raw<std::uint32_t>(f.get(), std::uint32_t(params.size()));
  for (const auto& [name, blob] : params) {
    write_raw<std::uint16_t>(f.get(), std::uint16_t(name.size()));
    write_bytes(f.get(), name.data(), name.size());
    write_raw<std::uint8_t>(f.get(), std::uint8_t(blob.shape.size()));
    for (auto e : blob.shape) write_raw<std::uint32_t>(f.get(), std::uint32_t(e));
    write_raw<std::uint8_t>(f.get(), std::uint8_t(blob.precision));
    write_bytes(f.get(), blob.bytes.data(), blob.bytes.size());
  }
}

std::string load_checkpoint(const std::string& path, NamedBlobs& params) {
  File f(std::fopen(path.c_str(), "rb"));
  if (!f) throw IoError("checkpoint: cannot open: " + path);
  char magic[4];
  read_bytes(f.get(), magic, 4);
  if (std::memcmp(magic, "PQCK", 4) != 0)
    throw IoError("checkpoint: bad magic in " + path);
  const auto version = read_raw<std::uint32_t>(f.get());
  if (version != kVersion)
    throw IoError("checkpoint: unsupported version " + std::to_string(version));
  const auto hlen = read_raw<std::uint32_t>(f.get());
  std::string header(hlen, '\0');
  read_bytes(f.get(), header.data(), hlen);
  const auto count = read_raw<std::uint32_t>(f.get());
  params.clear();
  params.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto nlen = read_raw<std::uint16_t>(f.get());
    std::string name(nlen, '\0');
    read_bytes(f.get(), name.data(), nlen);
    ParamBlob b;
    const auto rank = read_raw<std::uint8_t>(f.get());
    b.shape.resize(rank);
    for (auto& e : b.shape) e = read_raw<std::uint32_t>(f.get());
    b.precision = read_raw<std::uint8_t>(f.get());
    if (b.precision != 0 && b.precision != 1)
      throw IoError("checkpoint: bad precision tag");
    b.bytes.resize(b.count() * (b.precision == 0 ? 4 : 8));
    read_bytes(f.get(), b.bytes.data(), b.bytes.size());
    params.emplace_back(std::move(name), std::move(b));
  }
  return header;
}

}  // namespace pq
