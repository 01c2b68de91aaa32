#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "sparsegeo/detail/text.hpp"
#include "sparsegeo/error.hpp"
#include "sparsegeo/raster.hpp"
#include "sparsegeo/sfm_model.hpp"

namespace sparsegeo {

struct PixelCoord {
  int x = 0;
  int y = 0;
  friend auto operator<=>(const PixelCoord&, const PixelCoord&) = default;
};

struct Correspondence {
  PixelCoord src;
  PixelCoord dst;
  friend bool operator==(const Correspondence&, const Correspondence&) = default;
};

struct WarpResult {
  Image warped_image;
  DepthMap warped_depth;  // destination-frame depth, 0 where no splat landed
  Mask hole_mask;         // set where a splat landed
  std::vector<Correspondence> correspondences;  // destination row-major
};

struct PosedView {
  CameraPose pose;
  CameraIntrinsics intr;
};

// Forward 3-D warp with nearest-pixel splats. Each valid source pixel is
// lifted with its depth and projected into the target; collisions keep the
// smaller target depth, and on exact ties the earlier source pixel in
// row-major order.
inline WarpResult forward_warp(const Image& source, const DepthMap& source_depth,
                               const PosedView& src_view, const PosedView& dst_view) {
  require_same_shape(source, source_depth, "forward_warp");
  if (!source.same_shape(src_view.intr.width, src_view.intr.height))
    throw ShapeError("forward_warp: source raster does not match its camera");
  const int W = dst_view.intr.width, H = dst_view.intr.height;
  WarpResult out{Image(W, H, Rgb{0, 0, 0}), DepthMap(W, H, 0.0f), Mask(W, H, 0), {}};
  Raster<double> zbuf(W, H, std::numeric_limits<double>::infinity());
  Raster<int> winner(W, H, -1);

  for (int y = 0; y < source.height(); ++y) {
    for (int x = 0; x < source.width(); ++x) {
      const float d = source_depth(x, y);
      if (!valid_depth(d)) continue;
      const auto world = backproject(x, y, d, src_view.pose, src_view.intr);
      const auto proj = project_point(world, dst_view.pose, dst_view.intr);
      if (!proj) continue;
      const int u = nearest_pixel(proj->u), v = nearest_pixel(proj->v);
      if (!zbuf.contains(u, v) || !(proj->depth < zbuf(u, v))) continue;
      zbuf(u, v) = proj->depth;
      winner(u, v) = y * source.width() + x;
    }
  }
  for (int v = 0; v < H; ++v) {
    for (int u = 0; u < W; ++u) {
      const int w = winner(u, v);
      if (w < 0) continue;
      const PixelCoord src{w % source.width(), w / source.width()};
      out.warped_image(u, v) = source(src.x, src.y);
      out.warped_depth(u, v) = static_cast<float>(zbuf(u, v));
      out.hole_mask(u, v) = 1;
      out.correspondences.push_back({src, {u, v}});
    }
  }
  return out;
}

// Supervision support: both depths valid and the rendered depth is not
// meaningfully closer than the warped one.
inline Mask occlusion_mask(const DepthMap& rendered, const DepthMap& warped, double rel_eps) {
  require_same_shape(rendered, warped, "occlusion_mask");
  Mask out(rendered.width(), rendered.height(), 0);
  auto r = rendered.values();
  auto w = warped.values();
  auto m = out.values();
  for (std::size_t i = 0; i < r.size(); ++i) {
    if (!valid_depth(r[i]) || !valid_depth(w[i])) continue;
    const bool occluded = static_cast<double>(r[i]) < static_cast<double>(w[i]) * (1.0 - rel_eps);
    m[i] = occluded ? 0 : 1;
  }
  return out;
}

// Mean absolute color difference in [0, 1] over channels and over pixels in
// both the occlusion mask and the splat mask.
inline double pixel_loss(const Image& rendered, const WarpResult& warp, const Mask& ocl) {
  require_same_shape(rendered, warp.warped_image, "pixel_loss");
  require_same_shape(rendered, ocl, "pixel_loss");
  require_same_shape(rendered, warp.hole_mask, "pixel_loss");
  double sum = 0.0;
  std::size_t n = 0;
  auto a = rendered.values();
  auto b = warp.warped_image.values();
  auto m = ocl.values();
  auto h = warp.hole_mask.values();
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!m[i] || !h[i]) continue;
    for (std::size_t c = 0; c < 3; ++c)
      sum += std::abs(static_cast<int>(a[i][c]) - static_cast<int>(b[i][c])) / 255.0;
    n += 3;
  }
  return n ? sum / static_cast<double>(n) : 0.0;
}

struct CellPair {
  PixelCoord src;  // feature cell in the source map
  PixelCoord dst;  // feature cell in the destination map
  friend bool operator==(const CellPair&, const CellPair&) = default;
};

// Maps pixel correspondences to feature cells (floor division by stride).
// One pair survives per destination cell: the one whose source pixel is
// closest to its source cell's center, ties to the row-major-first source
// pixel. Output is in destination-cell row-major order.
inline std::vector<CellPair> map_correspondences(std::span<const Correspondence> corr, int stride) {
  if (stride < 1) throw ShapeError("stride must be >= 1");
  struct Best {
    CellPair pair;
    double dist2;
    PixelCoord src_pixel;
  };
  auto row_major_less = [](PixelCoord a, PixelCoord b) {
    return a.y != b.y ? a.y < b.y : a.x < b.x;
  };
  std::map<std::pair<int, int>, Best> best;  // keyed (row, col) of destination cell
  const double half = 0.5 * (stride - 1);
  for (const auto& c : corr) {
    const PixelCoord sc{c.src.x / stride, c.src.y / stride};
    const PixelCoord dc{c.dst.x / stride, c.dst.y / stride};
    const double dx = c.src.x - (sc.x * stride + half);
    const double dy = c.src.y - (sc.y * stride + half);
    const double d2 = dx * dx + dy * dy;
    auto [it, inserted] = best.try_emplace({dc.y, dc.x}, Best{{sc, dc}, d2, c.src});
    if (inserted) continue;
    auto& b = it->second;
    if (d2 < b.dist2 || (d2 == b.dist2 && row_major_less(c.src, b.src_pixel)))
      b = Best{{sc, dc}, d2, c.src};
  }
  std::vector<CellPair> out;
  out.reserve(best.size());
  for (const auto& [key, b] : best) out.push_back(b.pair);
  return out;
}

// Channel-major feature grid: value(c, x, y) at c * fh * fw + y * fw + x.
struct FeatureMap {
  int channels = 0;
  int fh = 0;
  int fw = 0;
  int stride = 1;
  std::vector<float> values;

  FeatureMap() = default;
  FeatureMap(int c, int h, int w, int s)
      : channels(c), fh(h), fw(w), stride(s),
        values(static_cast<std::size_t>(c) * static_cast<std::size_t>(h) * static_cast<std::size_t>(w), 0.0f) {}

  // Grid sized to cover an image of the given size.
  static FeatureMap covering(int channels, int width, int height, int stride) {
    return FeatureMap(channels, (height + stride - 1) / stride, (width + stride - 1) / stride, stride);
  }

  bool contains(PixelCoord cell) const { return cell.x >= 0 && cell.y >= 0 && cell.x < fw && cell.y < fh; }
  float& at(int c, int x, int y) {
    return values[(static_cast<std::size_t>(c) * fh + y) * fw + x];
  }
  float at(int c, int x, int y) const {
    return values[(static_cast<std::size_t>(c) * fh + y) * fw + x];
  }
};

// Mean cosine distance (1 - cos) over cell pairs; pairs where either vector has
// norm below 1e-12 are skipped. 0 when no pair contributes.
inline double feature_loss(const FeatureMap& rendered, const FeatureMap& source,
                           std::span<const CellPair> pairs) {
  if (rendered.channels != source.channels)
    throw ShapeError("feature_loss: channel counts differ");
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& p : pairs) {
    if (!rendered.contains(p.dst) || !source.contains(p.src))
      throw ShapeError("feature_loss: cell pair outside feature grid");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (int c = 0; c < source.channels; ++c) {
      const double a = rendered.at(c, p.dst.x, p.dst.y);
      const double b = source.at(c, p.src.x, p.src.y);
      dot += a * b;
      na += a * a;
      nb += b * b;
    }
    na = std::sqrt(na);
    nb = std::sqrt(nb);
    if (na < 1e-12 || nb < 1e-12) continue;
    sum += 1.0 - std::clamp(dot / (na * nb), -1.0, 1.0);
    ++n;
  }
  return n ? sum / static_cast<double>(n) : 0.0;
}

struct LossWeights {
  double lambda_i = 0.8;
  double lambda_pix = 1.0;
  double lambda_feat = 0.04;

  void validate() const {
    if (!(lambda_i >= 0.0 && lambda_i <= 1.0)) throw ConfigError("lambda_i must be in [0, 1]");
  }
};

// `dssim` is a dissimilarity term supplied by the caller (e.g. 1 - SSIM).
inline double total_loss(double l1, double dssim, double l_pix, double l_feat,
                         const LossWeights& w) {
  return w.lambda_i * l1 + (1.0 - w.lambda_i) * dssim + w.lambda_pix * l_pix +
         w.lambda_feat * l_feat;
}

// File format: ASCII line `FMAP channels fh fw stride` then channel-major
// little-endian float32 payload.
inline std::string encode_feature_map(const FeatureMap& f) {
  std::string out = "FMAP " + std::to_string(f.channels) + " " + std::to_string(f.fh) + " " +
                    std::to_string(f.fw) + " " + std::to_string(f.stride) + "\n";
  const auto header = out.size();
  out.resize(header + f.values.size() * 4);
  char* dst = out.data() + header;
  for (float v : f.values) {
    auto bits = std::bit_cast<std::uint32_t>(v);
    if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap32(bits);
    std::memcpy(dst, &bits, 4);
    dst += 4;
  }
  return out;
}

inline FeatureMap decode_feature_map(std::string_view bytes, std::string_view path = "<memory>",
                                     std::size_t max_bytes = std::size_t{1} << 30) {
  auto fail = [&](const std::string& m) -> FeatureMap {
    throw FormatError(std::string(path) + ": " + m);
  };
  const auto eol = bytes.find('\n');
  if (eol == std::string_view::npos) return fail("missing FMAP header");
  const auto tok = detail::split_ws(bytes.substr(0, eol));
  if (tok.size() != 5 || tok[0] != "FMAP") return fail("bad FMAP header");
  int dims[4];
  for (int i = 0; i < 4; ++i) {
    auto v = detail::parse_int<int>(tok[static_cast<std::size_t>(i) + 1]);
    if (!v || *v <= 0) return fail("bad FMAP dimension");
    dims[i] = *v;
  }
  const auto count = static_cast<unsigned long long>(dims[0]) * dims[1] * dims[2];
  if (count * 4 > max_bytes) return fail("payload exceeds read limit");
  if (bytes.size() - eol - 1 != count * 4) return fail("payload size mismatch");
  FeatureMap f(dims[0], dims[1], dims[2], dims[3]);
  const char* src = bytes.data() + eol + 1;
  for (auto& v : f.values) {
    std::uint32_t bits;
    std::memcpy(&bits, src, 4);
    if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap32(bits);
    v = std::bit_cast<float>(bits);
    src += 4;
  }
  return f;
}

inline FeatureMap read_feature_map(const std::string& path) {
  return decode_feature_map(detail::read_file(path), path);
}
inline void write_feature_map(const FeatureMap& f, const std::string& path) {
  detail::write_file(path, encode_feature_map(f));
}

}  // namespace sparsegeo
