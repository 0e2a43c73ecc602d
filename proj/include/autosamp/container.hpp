#pragma once

// On-disk array container: `<stem>.hdr` is a JSON header holding
// {shape, dtype, byte_order, crc32}; `<stem>.bin` is the raw little-endian
// payload with complex values interleaved as (real, imag).

#include <zlib.h>

#include <bit>
#include <complex>
#include <cstdint>
#include <cstring>
#include <iterator>
#include <filesystem>
#include <fstream>
#include <string>
#include <variant>
#include <vector>

#include "autosamp/numerics.hpp"
#include "json.hpp"

namespace autosamp {

static_assert(std::endian::native == std::endian::little, "container I/O assumes a little-endian host");

enum class DType { c64, c128, f32, f64 };

inline std::string to_string(DType t) {
  switch (t) {
    case DType::c64: return "c64";
    case DType::c128: return "c128";
    case DType::f32: return "f32";
    case DType::f64: return "f64";
  }
  return "?";
}

inline DType dtype_from_string(const std::string& s) {
  if (s == "c64") return DType::c64;
  if (s == "c128") return DType::c128;
  if (s == "f32") return DType::f32;
  if (s == "f64") return DType::f64;
  throw IoError("malformed header: unknown dtype '" + s + "'");
}

/// N-d array of one of the four container dtypes, row-major.
struct Array {
  using Storage = std::variant<std::vector<std::complex<float>>, std::vector<cx>, std::vector<float>, std::vector<double>>;

  std::vector<std::int64_t> shape;
  Storage data;

  DType dtype() const { return static_cast<DType>(data.index()); }

  std::size_t element_count() const {
    return std::visit([](const auto& v) { return v.size(); }, data);
  }

  bool operator==(const Array&) const = default;

  static Array complex(std::vector<std::int64_t> shape, CxVec values) { return {std::move(shape), std::move(values)}; }
  static Array real(std::vector<std::int64_t> shape, std::vector<double> values) { return {std::move(shape), std::move(values)}; }

  static Array from_image(const ComplexImage& img) { return complex({img.height, img.width}, img.data); }

  ComplexImage to_image() const {
    if (shape.size() != 2) throw IoError("array is not 2-D");
    ComplexImage img(static_cast<int>(shape[0]), static_cast<int>(shape[1]));
    img.data = as_complex();
    return img;
  }

  /// Complex view, widening c64 to c128.
  CxVec as_complex() const {
    if (auto* p = std::get_if<CxVec>(&data)) return *p;
    if (auto* p = std::get_if<std::vector<std::complex<float>>>(&data)) return CxVec(p->begin(), p->end());
    throw IoError("array is not complex");
  }

  std::vector<double> as_real() const {
    if (auto* p = std::get_if<std::vector<double>>(&data)) return *p;
    if (auto* p = std::get_if<std::vector<float>>(&data)) return std::vector<double>(p->begin(), p->end());
    throw IoError("array is not real");
  }
};

namespace detail {

inline std::size_t element_bytes(DType t) {
  switch (t) {
    case DType::c64: return 8;
    case DType::c128: return 16;
    case DType::f32: return 4;
    case DType::f64: return 8;
  }
  return 0;
}

/// `foo`, `foo.hdr` and `foo.bin` all name the same container.
inline std::filesystem::path container_stem(const std::filesystem::path& p) {
  auto ext = p.extension();
  if (ext == ".hdr" || ext == ".bin") return p.parent_path() / p.stem();
  return p;
}

inline std::filesystem::path with_suffix(const std::filesystem::path& stem, const char* suffix) {
  return std::filesystem::path(stem.string() + suffix);
}

}  // namespace detail

inline std::uint32_t crc32_of(const void* bytes, std::size_t n) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  const auto* p = static_cast<const Bytef*>(bytes);
  while (n > 0) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(n, 1u << 30));
    crc = ::crc32(crc, p, chunk);
    p += chunk;
    n -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

inline void save_array(const std::filesystem::path& path, const Array& array) {
  std::int64_t expected = 1;
  for (auto d : array.shape) {
    if (d < 0) throw ValidationError("save_array: negative dimension");
    expected *= d;
  }
  if (static_cast<std::size_t>(expected) != array.element_count())
    throw ValidationError("save_array: shape does not match element count");

  const auto stem = detail::container_stem(path);
  if (stem.has_parent_path()) std::filesystem::create_directories(stem.parent_path());

  const auto* bytes = std::visit([](const auto& v) { return reinterpret_cast<const char*>(v.data()); }, array.data);
  const std::size_t nbytes = array.element_count() * detail::element_bytes(array.dtype());

  nlohmann::ordered_json hdr;
  hdr["shape"] = array.shape;
  hdr["dtype"] = to_string(array.dtype());
  hdr["byte_order"] = "little";
  hdr["crc32"] = crc32_of(bytes, nbytes);

  {
    std::ofstream bin(detail::with_suffix(stem, ".bin"), std::ios::binary | std::ios::trunc);
    if (!bin) throw IoError("cannot write " + detail::with_suffix(stem, ".bin").string());
    bin.write(bytes, static_cast<std::streamsize>(nbytes));
    if (!bin) throw IoError("write failed: " + detail::with_suffix(stem, ".bin").string());
  }
  std::ofstream out(detail::with_suffix(stem, ".hdr"), std::ios::trunc);
  if (!out) throw IoError("cannot write " + detail::with_suffix(stem, ".hdr").string());
  out << hdr.dump(2) << '\n';
}

inline Array load_array(const std::filesystem::path& path) {
  const auto stem = detail::container_stem(path);
  const auto hdr_path = detail::with_suffix(stem, ".hdr");
  std::ifstream in(hdr_path);
  if (!in) throw IoError("cannot open " + hdr_path.string());

  Array out;
  std::uint32_t crc = 0;
  DType dtype{};
  try {
    const auto hdr = nlohmann::json::parse(in);
    out.shape = hdr.at("shape").get<std::vector<std::int64_t>>();
    dtype = dtype_from_string(hdr.at("dtype").get<std::string>());
    if (hdr.at("byte_order").get<std::string>() != "little") throw IoError("malformed header: byte_order must be little");
    crc = hdr.at("crc32").get<std::uint32_t>();
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed header " + hdr_path.string() + ": " + e.what());
  }

  std::int64_t count = 1;
  for (auto d : out.shape) {
    if (d < 0) throw IoError("malformed header: negative dimension");
    count *= d;
  }
  const std::size_t nbytes = static_cast<std::size_t>(count) * detail::element_bytes(dtype);

  std::vector<char> payload;
  {
    std::ifstream bin(detail::with_suffix(stem, ".bin"), std::ios::binary);
    if (bin) payload.assign(std::istreambuf_iterator<char>(bin), std::istreambuf_iterator<char>());
  }
  if (payload.size() < nbytes) throw IoError("truncated payload: " + stem.string());
  if (payload.size() > nbytes) throw IoError("payload larger than header shape: " + stem.string());
  if (crc32_of(payload.data(), payload.size()) != crc) throw IoError("checksum mismatch: " + stem.string());

  auto fill = [&](auto& vec) {
    vec.resize(static_cast<std::size_t>(count));
    std::memcpy(vec.data(), payload.data(), nbytes);
  };
  switch (dtype) {
    case DType::c64: { std::vector<std::complex<float>> v; fill(v); out.data = std::move(v); break; }
    case DType::c128: { CxVec v; fill(v); out.data = std::move(v); break; }
    case DType::f32: { std::vector<float> v; fill(v); out.data = std::move(v); break; }
    case DType::f64: { std::vector<double> v; fill(v); out.data = std::move(v); break; }
  }
  return out;
}

}  // namespace autosamp
