#pragma once

// PBT1 tensor container.
//
//   offset 0     "PBT1"
//   offset 4     dtype code: 0 = float32, 1 = uint8, 2 = uint16
//   offset 5     rank r (>= 1)
//   offset 6     r little-endian uint64 dimensions, outermost first
//   offset 6+8r  row-major little-endian payload, no padding

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include "probe3d/error.hpp"

namespace probe3d {

enum class DType : std::uint8_t { float32 = 0, uint8 = 1, uint16 = 2 };

inline std::size_t element_size(DType dtype) {
  switch (dtype) {
    case DType::float32: return 4;
    case DType::uint8: return 1;
    case DType::uint16: return 2;
  }
  return 0;
}

inline const char* to_string(DType dtype) {
  switch (dtype) {
    case DType::float32: return "float32";
    case DType::uint8: return "uint8";
    case DType::uint16: return "uint16";
  }
  return "?";
}

template <typename T>
constexpr DType dtype_of() {
  if constexpr (std::is_same_v<T, float>) return DType::float32;
  else if constexpr (std::is_same_v<T, std::uint8_t>) return DType::uint8;
  else {
    static_assert(std::is_same_v<T, std::uint16_t>, "unsupported tensor element type");
    return DType::uint16;
  }
}

class Tensor {
 public:
  using Shape = std::vector<std::uint64_t>;
  using Storage =
      std::variant<std::vector<float>, std::vector<std::uint8_t>, std::vector<std::uint16_t>>;

  Tensor() = default;

  // Not validated here; validate() (called by write_tensor) checks invariants.
  Tensor(Shape shape, Storage data) : shape_(std::move(shape)), data_(std::move(data)) {}

  template <typename T>
  static Tensor filled(Shape shape, T value) {
    std::uint64_t n = 1;
    for (auto d : shape) n *= d;
    return Tensor(std::move(shape), std::vector<T>(n, value));
  }

  DType dtype() const { return static_cast<DType>(data_.index()); }
  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::uint64_t dim(std::size_t i) const { return shape_.at(i); }

  std::size_t size() const {
    return std::visit([](const auto& v) { return v.size(); }, data_);
  }

  template <typename T>
  std::span<const T> values() const {
    const auto* v = std::get_if<std::vector<T>>(&data_);
    if (!v) throw ValidationError(std::string("tensor holds ") + to_string(dtype()) +
                                  ", not " + to_string(dtype_of<T>()));
    return *v;
  }

  template <typename T>
  std::span<T> values() {
    auto* v = std::get_if<std::vector<T>>(&data_);
    if (!v) throw ValidationError(std::string("tensor holds ") + to_string(dtype()) +
                                  ", not " + to_string(dtype_of<T>()));
    return *v;
  }

  const Storage& storage() const { return data_; }

  void validate() const {
    if (shape_.empty()) throw ValidationError("tensor shape must be non-empty");
    std::uint64_t n = 1;
    for (std::size_t i = 0; i < shape_.size(); ++i) {
      if (shape_[i] == 0)
        throw ValidationError("tensor dimension " + std::to_string(i) + " is zero");
      n *= shape_[i];
    }
    if (shape_.size() > 255) throw ValidationError("tensor rank exceeds 255");
    if (n != size())
      throw ValidationError("tensor shape implies " + std::to_string(n) +
                            " elements but data holds " + std::to_string(size()));
  }

  // Bit-pattern equality (NaN payloads compare equal to themselves).
  friend bool operator==(const Tensor& a, const Tensor& b) {
    if (a.shape_ != b.shape_ || a.data_.index() != b.data_.index() || a.size() != b.size())
      return false;
    return std::visit(
        [&](const auto& va) {
          using V = std::decay_t<decltype(va)>;
          const auto& vb = std::get<V>(b.data_);
          return va.empty() ||
                 std::memcmp(va.data(), vb.data(), va.size() * sizeof(va[0])) == 0;
        },
        a.data_);
  }

 private:
  Shape shape_;
  Storage data_;
};

namespace detail {

template <typename T>
void append_le(std::vector<std::uint8_t>& out, T value) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t,
                               std::conditional_t<sizeof(T) == 4, std::uint32_t,
                                                  std::conditional_t<sizeof(T) == 2,
                                                                     std::uint16_t,
                                                                     std::uint8_t>>>;
  const auto bits = std::bit_cast<U>(value);
  for (std::size_t i = 0; i < sizeof(U); ++i)
    out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
}

template <typename T>
T load_le(const std::uint8_t* p) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t,
                               std::conditional_t<sizeof(T) == 4, std::uint32_t,
                                                  std::conditional_t<sizeof(T) == 2,
                                                                     std::uint16_t,
                                                                     std::uint8_t>>>;
  U bits = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) bits |= static_cast<U>(U(p[i]) << (8 * i));
  return std::bit_cast<T>(bits);
}

template <typename T>
void append_payload(std::vector<std::uint8_t>& out, const std::vector<T>& values) {
  if constexpr (std::endian::native == std::endian::little) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(values.data());
    out.insert(out.end(), p, p + values.size() * sizeof(T));
  } else {
    for (T v : values) append_le(out, v);
  }
}

template <typename T>
std::vector<T> load_payload(const std::uint8_t* p, std::size_t count) {
  std::vector<T> values(count);
  if constexpr (std::endian::native == std::endian::little) {
    if (count) std::memcpy(values.data(), p, count * sizeof(T));
  } else {
    for (std::size_t i = 0; i < count; ++i) values[i] = load_le<T>(p + i * sizeof(T));
  }
  return values;
}

inline constexpr std::uint8_t kMagic[4] = {'P', 'B', 'T', '1'};

}  // namespace detail

inline std::uint64_t encoded_size(const Tensor& t) {
  return 6 + 8 * t.rank() + element_size(t.dtype()) * t.size();
}

inline std::vector<std::uint8_t> encode_tensor(const Tensor& t) {
  t.validate();
  std::vector<std::uint8_t> out;
  out.reserve(encoded_size(t));
  out.insert(out.end(), std::begin(detail::kMagic), std::end(detail::kMagic));
  out.push_back(static_cast<std::uint8_t>(t.dtype()));
  out.push_back(static_cast<std::uint8_t>(t.rank()));
  for (auto d : t.shape()) detail::append_le<std::uint64_t>(out, d);
  std::visit([&](const auto& v) { detail::append_payload(out, v); }, t.storage());
  return out;
}

inline Tensor decode_tensor(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), detail::kMagic, 4) != 0)
    throw FormatError("bad magic, expected \"PBT1\"", 0);
  if (bytes.size() < 6) throw FormatError("truncated header", bytes.size());
  const std::uint8_t code = bytes[4];
  if (code > 2) throw FormatError("unknown dtype code " + std::to_string(code), 4);
  const auto dtype = static_cast<DType>(code);
  const std::size_t rank = bytes[5];
  if (rank == 0) throw FormatError("rank must be at least 1", 5);
  if (bytes.size() < 6 + 8 * rank) throw FormatError("truncated header", bytes.size());

  Tensor::Shape shape(rank);
  std::uint64_t count = 1;
  for (std::size_t i = 0; i < rank; ++i) {
    const std::size_t off = 6 + 8 * i;
    shape[i] = detail::load_le<std::uint64_t>(bytes.data() + off);
    if (shape[i] == 0) throw FormatError("zero dimension", off);
    if (count > UINT64_MAX / shape[i]) throw FormatError("element count overflows", off);
    count *= shape[i];
  }

  const std::size_t header = 6 + 8 * rank;
  const std::uint64_t available = bytes.size() - header;
  const std::size_t esize = element_size(dtype);
  if (count > available / esize)
    throw TruncationError("payload holds " + std::to_string(available) + " bytes, expected " +
                          std::to_string(count * esize));
  if (available != count * esize)
    throw FormatError("trailing bytes after payload", header + count * esize);

  const std::uint8_t* p = bytes.data() + header;
  switch (dtype) {
    case DType::float32: return Tensor(std::move(shape), detail::load_payload<float>(p, count));
    case DType::uint8: return Tensor(std::move(shape), detail::load_payload<std::uint8_t>(p, count));
    case DType::uint16:
      return Tensor(std::move(shape), detail::load_payload<std::uint16_t>(p, count));
  }
  throw FormatError("unknown dtype", 4);
}

inline void write_tensor(const std::filesystem::path& path, const Tensor& t) {
  const auto bytes = encode_tensor(t);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

inline Tensor read_tensor(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  try {
    return decode_tensor(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.reason(), e.offset());
  } catch (const TruncationError& e) {
    throw TruncationError(path.string() + ": " + e.what());
  }
}

}  // namespace probe3d
