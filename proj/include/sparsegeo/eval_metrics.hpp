#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "sparsegeo/detail/text.hpp"
#include "sparsegeo/error.hpp"
#include "sparsegeo/raster.hpp"

namespace sparsegeo {

inline constexpr double kPsnrCap = 99.0;

inline double mse(const Image& a, const Image& b) {
  require_same_shape(a, b, "mse");
  if (a.empty()) throw ShapeError("mse of empty images");
  double sum = 0.0;
  auto av = a.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < av.size(); ++i)
    for (std::size_t c = 0; c < 3; ++c) {
      const double d = (static_cast<double>(av[i][c]) - static_cast<double>(bv[i][c])) / 255.0;
      sum += d * d;
    }
  return sum / (3.0 * static_cast<double>(av.size()));
}

inline double psnr_from_mse(double m) {
  if (m <= 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / m));
}

// Channels scaled to [0, 1]; identical images give the 99 dB cap.
inline double psnr(const Image& a, const Image& b) { return psnr_from_mse(mse(a, b)); }

// Equal-weight RGB average in [0, 1].
inline Raster<double> luma(const Image& img) {
  Raster<double> out(img.width(), img.height());
  auto src = img.values();
  auto dst = out.values();
  for (std::size_t i = 0; i < src.size(); ++i)
    dst[i] = (static_cast<double>(src[i][0]) + src[i][1] + src[i][2]) / (3.0 * 255.0);
  return out;
}

struct SsimParams {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
};

inline std::vector<double> gaussian_kernel_1d(int size, double sigma) {
  std::vector<double> k(static_cast<std::size_t>(size));
  const double c = 0.5 * (size - 1);
  double sum = 0.0;
  for (int i = 0; i < size; ++i) {
    const double x = i - c;
    k[static_cast<std::size_t>(i)] = std::exp(-x * x / (2.0 * sigma * sigma));
    sum += k[static_cast<std::size_t>(i)];
  }
  for (auto& v : k) v /= sum;
  return k;
}

// Mean SSIM over every fully-contained Gaussian window of the luma planes.
inline double ssim(const Raster<double>& a, const Raster<double>& b, const SsimParams& p = {}) {
  require_same_shape(a, b, "ssim");
  if (a.width() < p.window || a.height() < p.window)
    throw TooSmall("ssim needs images of at least " + std::to_string(p.window) + " pixels per side");
  const auto g = gaussian_kernel_1d(p.window, p.sigma);
  const double c1 = p.k1 * p.k1, c2 = p.k2 * p.k2;
  const int ow = a.width() - p.window + 1, oh = a.height() - p.window + 1;

  // Separable filtering of a, b, a^2, b^2, ab: horizontal pass then vertical.
  auto filter = [&](auto&& value) {
    Raster<double> h(ow, a.height());
    for (int y = 0; y < a.height(); ++y)
      for (int x = 0; x < ow; ++x) {
        double s = 0.0;
        for (int k = 0; k < p.window; ++k) s += g[static_cast<std::size_t>(k)] * value(x + k, y);
        h(x, y) = s;
      }
    Raster<double> out(ow, oh);
    for (int y = 0; y < oh; ++y)
      for (int x = 0; x < ow; ++x) {
        double s = 0.0;
        for (int k = 0; k < p.window; ++k) s += g[static_cast<std::size_t>(k)] * h(x, y + k);
        out(x, y) = s;
      }
    return out;
  };
  const auto mu_a = filter([&](int x, int y) { return a(x, y); });
  const auto mu_b = filter([&](int x, int y) { return b(x, y); });
  const auto aa = filter([&](int x, int y) { return a(x, y) * a(x, y); });
  const auto bb = filter([&](int x, int y) { return b(x, y) * b(x, y); });
  const auto ab = filter([&](int x, int y) { return a(x, y) * b(x, y); });

  double total = 0.0;
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      const double ma = mu_a(x, y), mb = mu_b(x, y);
      const double va = aa(x, y) - ma * ma;
      const double vb = bb(x, y) - mb * mb;
      const double cov = ab(x, y) - ma * mb;
      total += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
    }
  return total / (static_cast<double>(ow) * oh);
}

inline double ssim(const Image& a, const Image& b, const SsimParams& p = {}) {
  require_same_shape(a, b, "ssim");
  return ssim(luma(a), luma(b), p);
}

struct MetricPoint {
  double param = 0.0;
  double psnr = 0.0;
  double ssim = 0.0;
};

struct MetricCurve {
  std::vector<MetricPoint> points;

  std::string to_csv() const {
    std::string out = "param,psnr,ssim\n";
    for (const auto& p : points)
      out += detail::fmt_double(p.param) + "," + detail::fmt_double(p.psnr) + "," +
             detail::fmt_double(p.ssim) + "\n";
    return out;
  }
};

// Integer translation; exposed pixels are black.
inline Image shift_image(const Image& img, int dx, int dy) {
  if (std::abs(dx) >= img.width() || std::abs(dy) >= img.height())
    throw ShapeError("shift leaves no overlap");
  Image out(img.width(), img.height(), Rgb{0, 0, 0});
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x)
      if (img.contains(x - dx, y - dy)) out(x, y) = img(x - dx, y - dy);
  return out;
}

inline Image crop(const Image& img, int x0, int y0, int w, int h) {
  Image out(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) out(x, y) = img(x0 + x, y0 + y);
  return out;
}

// PSNR/SSIM of img against its (dx, dy) translate, evaluated on the overlap.
inline MetricPoint shifted_metrics(const Image& img, int dx, int dy) {
  const auto shifted = shift_image(img, dx, dy);
  const int x0 = std::max(0, dx), y0 = std::max(0, dy);
  const int w = img.width() - std::abs(dx), h = img.height() - std::abs(dy);
  const auto a = crop(img, x0, y0, w, h);
  const auto b = crop(shifted, x0, y0, w, h);
  return {0.0, psnr(a, b), ssim(a, b)};
}

inline MetricCurve metric_shift_curve(const Image& img, int max_shift) {
  MetricCurve curve;
  for (int dx = 0; dx <= max_shift; ++dx) {
    auto p = shifted_metrics(img, dx, 0);
    p.param = dx;
    curve.points.push_back(p);
  }
  return curve;
}

// Gaussian blur (sigma = kernel_size / 6, clamp-to-edge sampling) applied only
// within a disc of radius 2 * kernel_size around (cx, cy).
inline Image blur_patch(const Image& img, int cx, int cy, int kernel_size) {
  if (!img.contains(cx, cy)) throw OutOfBounds("blur center outside image");
  if (kernel_size < 3 || kernel_size % 2 == 0)
    throw ShapeError("kernel size must be odd and >= 3");
  const auto g = gaussian_kernel_1d(kernel_size, kernel_size / 6.0);
  const int half = kernel_size / 2;
  const int radius = 2 * kernel_size;
  Image out = img;
  auto clamp_x = [&](int x) { return std::clamp(x, 0, img.width() - 1); };
  auto clamp_y = [&](int y) { return std::clamp(y, 0, img.height() - 1); };
  for (int y = std::max(0, cy - radius); y <= std::min(img.height() - 1, cy + radius); ++y)
    for (int x = std::max(0, cx - radius); x <= std::min(img.width() - 1, cx + radius); ++x) {
      if ((x - cx) * (x - cx) + (y - cy) * (y - cy) > radius * radius) continue;
      double acc[3] = {0, 0, 0};
      for (int j = -half; j <= half; ++j)
        for (int i = -half; i <= half; ++i) {
          const double w = g[static_cast<std::size_t>(j + half)] * g[static_cast<std::size_t>(i + half)];
          const auto& px = img(clamp_x(x + i), clamp_y(y + j));
          for (std::size_t c = 0; c < 3; ++c) acc[c] += w * px[c];
        }
      for (std::size_t c = 0; c < 3; ++c)
        out(x, y)[c] = static_cast<std::uint8_t>(std::clamp(std::lround(acc[c]), 0L, 255L));
    }
  return out;
}

}  // namespace sparsegeo
