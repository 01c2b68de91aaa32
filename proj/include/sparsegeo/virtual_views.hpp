#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Geometry>

#include "sparsegeo/detail/text.hpp"
#include "sparsegeo/error.hpp"
#include "sparsegeo/sfm_model.hpp"

namespace sparsegeo {

struct VirtualView {
  CameraPose pose;
  CameraIntrinsics intr;
  ViewId source_view_id{};
  ViewId neighbor_view_id{};
  double weight = 0.0;
};

// The k camera centers closest to `view` (itself excluded), ascending by
// distance with ties broken by view id.
inline std::vector<ViewId> nearest_views(const ViewRecord& view,
                                         const std::vector<const ViewRecord*>& all_views,
                                         std::size_t k) {
  if (k < 1) throw InsufficientViews("k must be >= 1");
  const Eigen::Vector3d c = view.pose.center();
  std::vector<std::pair<double, ViewId>> cand;
  for (const auto* v : all_views)
    if (v->view_id != view.view_id) cand.emplace_back((v->pose.center() - c).squaredNorm(), v->view_id);
  if (cand.size() < k)
    throw InsufficientViews("requested " + std::to_string(k) + " neighbours, only " +
                            std::to_string(cand.size()) + " other views");
  std::sort(cand.begin(), cand.end());
  std::vector<ViewId> out;
  for (std::size_t i = 0; i < k; ++i) out.push_back(cand[i].second);
  return out;
}

// Shortest-arc spherical interpolation; normalized lerp below 1e-6 rad.
inline Eigen::Quaterniond slerp(const Eigen::Quaterniond& q0, Eigen::Quaterniond q1, double w) {
  if (w == 0.0) return q0;
  double dot = q0.coeffs().dot(q1.coeffs());
  if (dot < 0.0) {
    q1.coeffs() = -q1.coeffs();
    dot = -dot;
  }
  if (w == 1.0) return q1;
  dot = std::min(dot, 1.0);
  const double theta = std::acos(dot);  // half the rotation angle between q0 and q1
  Eigen::Quaterniond out;
  if (theta < 1e-6) {
    out.coeffs() = (1.0 - w) * q0.coeffs() + w * q1.coeffs();
  } else {
    const double sin_theta = std::sin(theta);
    out.coeffs() = (std::sin((1.0 - w) * theta) / sin_theta) * q0.coeffs() +
                   (std::sin(w * theta) / sin_theta) * q1.coeffs();
  }
  return out.normalized();
}

inline double fov_from_focal(double focal, int extent) {
  return 2.0 * std::atan(0.5 * extent / focal);
}
inline double focal_from_fov(double fov, int extent) {
  return 0.5 * extent / std::tan(0.5 * fov);
}

struct PosedCamera {
  const ViewRecord* view = nullptr;
  CameraIntrinsics intr;
};

// Camera between a (w = 0) and b (w = 1): centers lerped in world space,
// rotation slerped, field of view lerped in angle at a's resolution,
// principal point lerped.
inline VirtualView interpolate_view(const PosedCamera& a, const PosedCamera& b, double w) {
  if (!(w >= 0.0 && w <= 1.0)) throw ShapeError("interpolation weight outside [0, 1]");
  VirtualView out;
  out.source_view_id = a.view->view_id;
  out.neighbor_view_id = b.view->view_id;
  out.weight = w;
  if (w == 0.0) {
    out.pose = a.view->pose;
    out.intr = a.intr;
    return out;
  }
  const Eigen::Vector3d ca = a.view->pose.center();
  const Eigen::Vector3d cb = b.view->pose.center();
  const Eigen::Vector3d center = ca + w * (cb - ca);
  const Eigen::Quaterniond rot = slerp(a.view->pose.rotation, b.view->pose.rotation, w);
  out.pose = CameraPose::from_center(rot, center);
  if (w == 1.0) out.pose = b.view->pose;

  const int width = a.intr.width, height = a.intr.height;
  const double hfov_a = fov_from_focal(a.intr.fx, a.intr.width);
  const double hfov_b = fov_from_focal(b.intr.fx, b.intr.width);
  const double vfov_a = fov_from_focal(a.intr.fy, a.intr.height);
  const double vfov_b = fov_from_focal(b.intr.fy, b.intr.height);
  out.intr.width = width;
  out.intr.height = height;
  out.intr.fx = focal_from_fov(hfov_a + w * (hfov_b - hfov_a), width);
  out.intr.fy = focal_from_fov(vfov_a + w * (vfov_b - vfov_a), height);
  out.intr.cx = a.intr.cx + w * (b.intr.cx - a.intr.cx);
  out.intr.cy = a.intr.cy + w * (b.intr.cy - a.intr.cy);
  if (w == 1.0 && b.intr.width == width && b.intr.height == height) out.intr = b.intr;
  return out;
}

struct VirtualViewPlan {
  std::size_t k = 4;
  std::vector<double> weights{0.25, 0.5, 0.75};
  // When set, draws `samples_per_view` weights uniformly per (view, neighbour)
  // pair from this seed instead of using the grid.
  std::optional<std::uint64_t> seed;
  std::size_t samples_per_view = 1;
};

// Batch generation over every view of a reconstruction, in ascending view id,
// then neighbour order, then weight order.
inline std::vector<VirtualView> generate_virtual_views(const SfmReconstruction& recon,
                                                       const VirtualViewPlan& plan) {
  std::vector<const ViewRecord*> views;
  for (const auto& [id, v] : recon.views) views.push_back(&v);
  std::mt19937_64 rng(plan.seed.value_or(0));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<VirtualView> out;
  for (const auto* v : views) {
    for (auto nid : nearest_views(*v, views, plan.k)) {
      const auto& nb = recon.views.at(nid);
      const PosedCamera a{v, recon.camera_of(*v)}, b{&nb, recon.camera_of(nb)};
      if (plan.seed) {
        for (std::size_t s = 0; s < plan.samples_per_view; ++s)
          out.push_back(interpolate_view(a, b, unit(rng)));
      } else {
        for (double w : plan.weights) out.push_back(interpolate_view(a, b, w));
      }
    }
  }
  return out;
}

// Manifest: one line per view,
// `SOURCE NEIGHBOR W QW QX QY QZ CX CY CZ FX FY PX PY WIDTH HEIGHT`
// where C is the camera center and P the principal point.
inline std::string format_virtual_manifest(const std::vector<VirtualView>& views,
                                           std::size_t k) {
  using detail::fmt_double;
  std::string out = "# virtual views k=" + std::to_string(k) + "\n" +
                    "# SOURCE NEIGHBOR W QW QX QY QZ CX CY CZ FX FY PX PY WIDTH HEIGHT\n";
  for (const auto& v : views) {
    const auto& q = v.pose.rotation;
    const Eigen::Vector3d c = v.pose.center();
    out += std::to_string(to_underlying(v.source_view_id)) + " " +
           std::to_string(to_underlying(v.neighbor_view_id)) + " " + fmt_double(v.weight) + " " +
           fmt_double(q.w()) + " " + fmt_double(q.x()) + " " + fmt_double(q.y()) + " " +
           fmt_double(q.z()) + " " + fmt_double(c.x()) + " " + fmt_double(c.y()) + " " +
           fmt_double(c.z()) + " " + fmt_double(v.intr.fx) + " " + fmt_double(v.intr.fy) + " " +
           fmt_double(v.intr.cx) + " " + fmt_double(v.intr.cy) + " " +
           std::to_string(v.intr.width) + " " + std::to_string(v.intr.height) + "\n";
  }
  return out;
}

struct VirtualManifest {
  std::size_t k = 0;
  std::vector<VirtualView> views;
};

inline VirtualManifest parse_virtual_manifest(const std::string& text) {
  VirtualManifest out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind("# virtual views k=", 0) == 0) {
      auto k = detail::parse_int<std::size_t>(detail::trim(line.substr(18)));
      if (!k) throw FormatError("manifest: bad k");
      out.k = *k;
      continue;
    }
    if (line.empty() || line[0] == '#') continue;
    const auto tok = detail::split_ws(line);
    if (tok.size() != 16) throw FormatError("manifest: expected 16 fields");
    std::vector<double> f;
    for (std::size_t i = 2; i < 14; ++i) {
      auto d = detail::parse_double(tok[i]);
      if (!d) throw FormatError("manifest: bad number");
      f.push_back(*d);
    }
    auto src = detail::parse_int<std::uint32_t>(tok[0]);
    auto nb = detail::parse_int<std::uint32_t>(tok[1]);
    auto w = detail::parse_int<int>(tok[14]);
    auto h = detail::parse_int<int>(tok[15]);
    if (!src || !nb || !w || !h) throw FormatError("manifest: bad integer");
    VirtualView v;
    v.source_view_id = ViewId{*src};
    v.neighbor_view_id = ViewId{*nb};
    v.weight = f[0];
    const Eigen::Quaterniond q(f[1], f[2], f[3], f[4]);
    v.pose = CameraPose::from_center(q, {f[5], f[6], f[7]});
    v.intr = {f[8], f[9], f[10], f[11], *w, *h};
    out.views.push_back(v);
  }
  return out;
}

}  // namespace sparsegeo
