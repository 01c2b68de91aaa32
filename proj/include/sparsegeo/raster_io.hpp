#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <string>
#include <string_view>

#include "sparsegeo/detail/text.hpp"
#include "sparsegeo/error.hpp"
#include "sparsegeo/raster.hpp"

namespace sparsegeo {

struct ReadLimits {
  // Payloads larger than this are rejected before any allocation.
  std::size_t max_bytes = std::size_t{1} << 30;
};

namespace detail {

// Cursor over a header made of whitespace-separated tokens with '#' comments,
// as used by the netpbm family and (without comments) by PFM.
class HeaderCursor {
 public:
  HeaderCursor(std::string_view bytes, std::string_view path)
      : bytes_(bytes), path_(path) {}

  std::string_view token() {
    skip_space();
    const auto start = pos_;
    while (pos_ < bytes_.size() && !is_space(bytes_[pos_])) ++pos_;
    if (start == pos_) fail("truncated header");
    return bytes_.substr(start, pos_ - start);
  }

  long long integer() {
    const auto tok = token();
    auto v = parse_int<long long>(tok);
    if (!v) fail("bad integer '" + std::string(tok) + "'");
    return *v;
  }

  // Exactly one whitespace byte separates the header from the payload.
  std::size_t payload_start() {
    if (pos_ >= bytes_.size() || !is_space(bytes_[pos_])) fail("missing header terminator");
    return pos_ + 1;
  }

  [[noreturn]] void fail(const std::string& msg) const {
    throw FormatError(std::string(path_) + ": " + msg);
  }

 private:
  static bool is_space(char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f';
  }
  void skip_space() {
    while (pos_ < bytes_.size()) {
      if (is_space(bytes_[pos_])) {
        ++pos_;
      } else if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else {
        break;
      }
    }
  }

  std::string_view bytes_;
  std::string_view path_;
  std::size_t pos_ = 0;
};

inline void check_dims(const HeaderCursor& cur, long long w, long long h,
                       std::size_t bytes_per_pixel, const ReadLimits& limits) {
  if (w <= 0 || h <= 0) cur.fail("non-positive dimensions");
  if (w > (1 << 30) || h > (1 << 30)) cur.fail("dimensions out of range");
  const auto need = static_cast<unsigned long long>(w) * static_cast<unsigned long long>(h) *
                    bytes_per_pixel;
  if (need > limits.max_bytes) cur.fail("payload exceeds read limit");
}

inline void check_payload(const HeaderCursor& cur, std::size_t have, std::size_t need) {
  if (have != need)
    cur.fail("payload size mismatch: expected " + std::to_string(need) + " bytes, found " +
             std::to_string(have));
}

// Reads either 8-bit netpbm flavour; returns the raw payload offset.
inline std::size_t parse_netpbm(HeaderCursor& cur, std::string_view magic, int& w, int& h,
                                std::size_t channels, const ReadLimits& limits) {
  if (cur.token() != magic) cur.fail("expected magic " + std::string(magic));
  const auto ww = cur.integer();
  const auto hh = cur.integer();
  const auto maxval = cur.integer();
  if (maxval != 255) cur.fail("unsupported maxval " + std::to_string(maxval));
  check_dims(cur, ww, hh, channels, limits);
  w = static_cast<int>(ww);
  h = static_cast<int>(hh);
  return cur.payload_start();
}

}  // namespace detail

// PFM grayscale ("Pf"). Rows are stored bottom-to-top; a negative scale marks
// little-endian samples. NaN bit patterns survive the round trip.
inline DepthMap decode_depth_map(std::string_view bytes, std::string_view path = "<memory>",
                                 const ReadLimits& limits = {}) {
  detail::HeaderCursor cur(bytes, path);
  const auto magic = cur.token();
  if (magic == "PF") cur.fail("color PFM not supported for depth");
  if (magic != "Pf") cur.fail("expected magic Pf");
  const auto w = cur.integer();
  const auto h = cur.integer();
  const auto scale_tok = cur.token();
  const auto scale = detail::parse_double(scale_tok);
  if (!scale || *scale == 0.0) cur.fail("bad scale '" + std::string(scale_tok) + "'");
  detail::check_dims(cur, w, h, 4, limits);
  const auto start = cur.payload_start();
  const auto need = static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * 4;
  detail::check_payload(cur, bytes.size() - start, need);

  const bool file_le = *scale < 0.0;
  const bool host_le = std::endian::native == std::endian::little;
  DepthMap out(static_cast<int>(w), static_cast<int>(h));
  const char* src = bytes.data() + start;
  for (int y = 0; y < out.height(); ++y) {
    const int row = out.height() - 1 - y;
    for (int x = 0; x < out.width(); ++x, src += 4) {
      std::uint32_t bits;
      std::memcpy(&bits, src, 4);
      if (file_le != host_le) bits = __builtin_bswap32(bits);
      out(x, row) = std::bit_cast<float>(bits);
    }
  }
  return out;
}

inline std::string encode_depth_map(const DepthMap& depth) {
  std::string out = "Pf\n" + std::to_string(depth.width()) + " " +
                    std::to_string(depth.height()) + "\n-1.0\n";
  const auto header = out.size();
  out.resize(header + depth.size() * 4);
  char* dst = out.data() + header;
  for (int row = depth.height() - 1; row >= 0; --row) {
    for (int x = 0; x < depth.width(); ++x, dst += 4) {
      auto bits = std::bit_cast<std::uint32_t>(depth(x, row));
      if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap32(bits);
      std::memcpy(dst, &bits, 4);
    }
  }
  return out;
}

inline DepthMap read_depth_map(const std::string& path, const ReadLimits& limits = {}) {
  return decode_depth_map(detail::read_file(path), path, limits);
}
inline void write_depth_map(const DepthMap& depth, const std::string& path) {
  detail::write_file(path, encode_depth_map(depth));
}

// Binary PGM (P5, maxval 255). Bytes above 127 read as set.
inline Mask decode_mask(std::string_view bytes, std::string_view path = "<memory>",
                        const ReadLimits& limits = {}) {
  detail::HeaderCursor cur(bytes, path);
  int w = 0, h = 0;
  const auto start = detail::parse_netpbm(cur, "P5", w, h, 1, limits);
  detail::check_payload(cur, bytes.size() - start, static_cast<std::size_t>(w) * h);
  Mask out(w, h);
  auto dst = out.values();
  for (std::size_t i = 0; i < dst.size(); ++i)
    dst[i] = static_cast<unsigned char>(bytes[start + i]) > 127 ? 1 : 0;
  return out;
}

inline std::string encode_mask(const Mask& mask) {
  std::string out =
      "P5\n" + std::to_string(mask.width()) + " " + std::to_string(mask.height()) + "\n255\n";
  for (auto v : mask.values()) out.push_back(v ? static_cast<char>(255) : '\0');
  return out;
}

inline Mask read_mask(const std::string& path, const ReadLimits& limits = {}) {
  return decode_mask(detail::read_file(path), path, limits);
}
inline void write_mask(const Mask& mask, const std::string& path) {
  detail::write_file(path, encode_mask(mask));
}

// Binary PPM (P6, maxval 255).
inline Image decode_image(std::string_view bytes, std::string_view path = "<memory>",
                          const ReadLimits& limits = {}) {
  detail::HeaderCursor cur(bytes, path);
  int w = 0, h = 0;
  const auto start = detail::parse_netpbm(cur, "P6", w, h, 3, limits);
  detail::check_payload(cur, bytes.size() - start, static_cast<std::size_t>(w) * h * 3);
  Image out(w, h);
  auto dst = out.values();
  for (std::size_t i = 0; i < dst.size(); ++i)
    for (std::size_t c = 0; c < 3; ++c)
      dst[i][c] = static_cast<std::uint8_t>(bytes[start + 3 * i + c]);
  return out;
}

inline std::string encode_image(const Image& img) {
  std::string out =
      "P6\n" + std::to_string(img.width()) + " " + std::to_string(img.height()) + "\n255\n";
  out.reserve(out.size() + img.size() * 3);
  for (const auto& px : img.values())
    for (auto c : px) out.push_back(static_cast<char>(c));
  return out;
}

inline Image read_image(const std::string& path, const ReadLimits& limits = {}) {
  return decode_image(detail::read_file(path), path, limits);
}
inline void write_image(const Image& img, const std::string& path) {
  detail::write_file(path, encode_image(img));
}

namespace detail {
inline constexpr std::string_view kPlyProperties =
    "property float x\nproperty float y\nproperty float z\n"
    "property uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n";
}

// Binary little-endian PLY, 15 bytes per vertex: xyz float32 then rgb uchar.
inline std::string encode_point_cloud(const PointCloud& cloud) {
  if (cloud.positions.size() != cloud.colors.size())
    throw ShapeError("point cloud positions/colors length mismatch");
  std::string out = "ply\nformat binary_little_endian 1.0\nelement vertex " +
                    std::to_string(cloud.size()) + "\n" + std::string(detail::kPlyProperties);
  const auto header = out.size();
  out.resize(header + cloud.size() * 15);
  char* dst = out.data() + header;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    for (int k = 0; k < 3; ++k, dst += 4) {
      auto bits = std::bit_cast<std::uint32_t>(cloud.positions[i][k]);
      if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap32(bits);
      std::memcpy(dst, &bits, 4);
    }
    for (int k = 0; k < 3; ++k) *dst++ = static_cast<char>(cloud.colors[i][static_cast<std::size_t>(k)]);
  }
  return out;
}

// Accepts only the exact layout produced by encode_point_cloud.
inline PointCloud decode_point_cloud(std::string_view bytes, std::string_view path = "<memory>",
                                     const ReadLimits& limits = {}) {
  const std::string_view prefix = "ply\nformat binary_little_endian 1.0\nelement vertex ";
  auto fail = [&](const std::string& m) -> PointCloud {
    throw FormatError(std::string(path) + ": " + m);
  };
  if (bytes.substr(0, prefix.size()) != prefix) return fail("unsupported PLY header");
  const auto eol = bytes.find('\n', prefix.size());
  if (eol == std::string_view::npos) return fail("truncated PLY header");
  const auto n = detail::parse_int<unsigned long long>(
      bytes.substr(prefix.size(), eol - prefix.size()));
  if (!n) return fail("bad vertex count");
  if (*n * 15 > limits.max_bytes) return fail("payload exceeds read limit");
  if (bytes.substr(eol + 1, detail::kPlyProperties.size()) != detail::kPlyProperties)
    return fail("unsupported PLY vertex layout");
  const auto start = eol + 1 + detail::kPlyProperties.size();
  if (bytes.size() - start != *n * 15) return fail("payload size mismatch");
  PointCloud cloud;
  cloud.positions.reserve(*n);
  cloud.colors.reserve(*n);
  const char* src = bytes.data() + start;
  for (unsigned long long i = 0; i < *n; ++i) {
    Eigen::Vector3f p;
    for (int k = 0; k < 3; ++k, src += 4) {
      std::uint32_t bits;
      std::memcpy(&bits, src, 4);
      if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap32(bits);
      p[k] = std::bit_cast<float>(bits);
    }
    Rgb c{static_cast<std::uint8_t>(src[0]), static_cast<std::uint8_t>(src[1]),
          static_cast<std::uint8_t>(src[2])};
    src += 3;
    cloud.push_back(p, c);
  }
  return cloud;
}

inline void write_point_cloud(const PointCloud& cloud, const std::string& path) {
  detail::write_file(path, encode_point_cloud(cloud));
}
inline PointCloud read_point_cloud(const std::string& path, const ReadLimits& limits = {}) {
  return decode_point_cloud(detail::read_file(path), path, limits);
}

}  // namespace sparsegeo
