#pragma once

#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "sparsegeo/error.hpp"
#include "sparsegeo/raster.hpp"
#include "sparsegeo/semantic_masks.hpp"
#include "sparsegeo/sfm_model.hpp"

namespace sparsegeo {

struct ScaleShift {
  double s = 1.0;
  double t = 0.0;

  double apply(double mono) const { return s * mono + t; }
};

struct DepthSample {
  double u = 0.0;
  double v = 0.0;
  double mono = 0.0;
  double sfm = 0.0;
};

// Least-squares (s, t) minimizing sum (s * mono + t - sfm)^2. Centered sums in
// extended precision keep noiseless data exact to rounding of the inputs.
inline ScaleShift fit_scale_shift(std::span<const DepthSample> samples) {
  const auto n = samples.size();
  if (n < 2) throw DegenerateFit("need at least 2 samples, got " + std::to_string(n));
  long double mean_m = 0.0L, mean_d = 0.0L;
  double max_abs = 0.0;
  for (const auto& s : samples) {
    mean_m += s.mono;
    mean_d += s.sfm;
    max_abs = std::max(max_abs, std::abs(s.mono));
  }
  mean_m /= static_cast<long double>(n);
  mean_d /= static_cast<long double>(n);
  long double sxx = 0.0L, sxy = 0.0L;
  for (const auto& s : samples) {
    const long double dm = s.mono - mean_m;
    sxx += dm * dm;
    sxy += dm * (s.sfm - mean_d);
  }
  const double floor = static_cast<double>(n) * std::pow(1e-12 * std::max(max_abs, 1e-300), 2);
  if (!(sxx > floor)) throw DegenerateFit("monocular depth has zero variance over samples");
  const long double slope = sxy / sxx;
  ScaleShift fit{static_cast<double>(slope), static_cast<double>(mean_d - slope * mean_m)};
  if (!std::isfinite(fit.s) || !std::isfinite(fit.t)) throw DegenerateFit("non-finite fit");
  if (fit.s <= 0.0)
    throw NonPositiveScale("fitted scale " + detail::fmt_double(fit.s) + " <= 0");
  return fit;
}

inline double residual_rms(std::span<const DepthSample> samples, const ScaleShift& fit) {
  if (samples.empty()) return 0.0;
  double ss = 0.0;
  for (const auto& s : samples) {
    const double r = fit.apply(s.mono) - s.sfm;
    ss += r * r;
  }
  return std::sqrt(ss / static_cast<double>(samples.size()));
}

// Pairs each SfM observation with the monocular depth at its nearest pixel,
// skipping invalid pixels and out-of-bounds coordinates.
inline std::vector<DepthSample> collect_samples(const DepthMap& mono,
                                                std::span<const VisiblePoint> vis) {
  std::vector<DepthSample> out;
  out.reserve(vis.size());
  for (const auto& p : vis) {
    const int x = nearest_pixel(p.u), y = nearest_pixel(p.v);
    if (!mono.contains(x, y) || !(p.sfm_depth > 0.0)) continue;
    const float d = mono(x, y);
    if (!valid_depth(d)) continue;
    out.push_back({p.u, p.v, static_cast<double>(d), p.sfm_depth});
  }
  return out;
}

// s * D + t on valid pixels; invalid pixels keep their sentinel. When `region`
// is given, pixels outside it become 0 (invalid).
inline DepthMap apply_scale_shift(const DepthMap& depth, const ScaleShift& fit,
                                  const Mask* region = nullptr) {
  if (region) require_same_shape(depth, *region, "apply_scale_shift");
  DepthMap out(depth.width(), depth.height(), 0.0f);
  auto src = depth.values();
  auto dst = out.values();
  for (std::size_t i = 0; i < src.size(); ++i) {
    if (region && !region->values()[i]) continue;
    dst[i] = valid_depth(src[i]) ? static_cast<float>(fit.apply(src[i])) : src[i];
  }
  return out;
}

struct ImageAlignment {
  DepthMap aligned;
  ScaleShift fit;
  std::size_t n_samples = 0;
  double residual_rms = 0.0;
};

inline ImageAlignment align_image(const DepthMap& depth, std::span<const VisiblePoint> vis) {
  const auto samples = collect_samples(depth, vis);
  ImageAlignment out;
  out.fit = fit_scale_shift(samples);
  out.aligned = apply_scale_shift(depth, out.fit);
  out.n_samples = samples.size();
  out.residual_rms = sparsegeo::residual_rms(samples, out.fit);
  return out;
}

struct MaskFit {
  std::size_t mask_index = 0;
  ScaleShift fit;
  DepthMap fragment;  // aligned depth on the mask's pixels, 0 elsewhere
  std::size_t n_samples = 0;
  double residual_rms = 0.0;
};

struct MaskFailure {
  std::size_t mask_index = 0;
  std::string reason;
};

struct SemanticAlignment {
  std::vector<MaskFit> fits;
  std::vector<MaskFailure> failures;
};

// One independent fit per mask on that mask's supporters. Masks whose fit is
// degenerate or non-positive are reported in `failures` and produce no fragment.
inline SemanticAlignment align_semantic(const DepthMap& depth, const MaskSet& masks,
                                        std::span<const std::vector<VisiblePoint>> supporters) {
  if (supporters.size() != masks.size())
    throw ShapeError("supporter lists do not match mask count");
  SemanticAlignment out;
  for (std::size_t k = 0; k < masks.size(); ++k) {
    require_same_shape(depth, masks.masks[k], "align_semantic");
    const auto samples = collect_samples(depth, supporters[k]);
    try {
      MaskFit f;
      f.mask_index = k;
      f.fit = fit_scale_shift(samples);
      f.fragment = apply_scale_shift(depth, f.fit, &masks.masks[k]);
      f.n_samples = samples.size();
      f.residual_rms = residual_rms(samples, f.fit);
      out.fits.push_back(std::move(f));
    } catch (const DegenerateFit& e) {
      out.failures.push_back({k, e.what()});
    } catch (const NonPositiveScale& e) {
      out.failures.push_back({k, e.what()});
    }
  }
  return out;
}

// Merges successful fragments into one map. Overlaps go to the mask with more
// supporters (ties to the earlier mask); uncovered pixels are 0.
inline DepthMap composite_fragments(const SemanticAlignment& aligned, const MaskSet& masks,
                                    std::span<const std::size_t> supporter_counts, int width,
                                    int height) {
  DepthMap out(width, height, 0.0f);
  MaskSet kept;
  std::vector<std::size_t> counts;
  for (const auto& f : aligned.fits) {
    kept.masks.push_back(masks.masks[f.mask_index]);
    counts.push_back(supporter_counts[f.mask_index]);
  }
  if (kept.masks.empty()) return out;
  const auto owner = mask_ownership(kept, counts);
  require_same_shape(owner, out, "composite_fragments");
  auto ov = owner.values();
  auto dst = out.values();
  for (std::size_t i = 0; i < dst.size(); ++i)
    if (ov[i] >= 0) dst[i] = aligned.fits[static_cast<std::size_t>(ov[i])].fragment.values()[i];
  return out;
}

struct ErrorMap {
  DepthMap error;  // |aligned - reference| where both valid, NaN elsewhere
  double mae = 0.0;
  std::size_t support = 0;
};

inline ErrorMap alignment_error_map(const DepthMap& aligned, const DepthMap& reference) {
  require_same_shape(aligned, reference, "alignment_error_map");
  ErrorMap out;
  out.error = DepthMap(aligned.width(), aligned.height(), std::numeric_limits<float>::quiet_NaN());
  auto a = aligned.values();
  auto r = reference.values();
  auto e = out.error.values();
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!valid_depth(a[i]) || !valid_depth(r[i])) continue;
    const double d = std::abs(static_cast<double>(a[i]) - static_cast<double>(r[i]));
    e[i] = static_cast<float>(d);
    sum += d;
    ++out.support;
  }
  out.mae = out.support ? sum / static_cast<double>(out.support) : 0.0;
  return out;
}

}  // namespace sparsegeo
