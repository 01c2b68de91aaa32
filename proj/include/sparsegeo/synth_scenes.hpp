#pragma once

#include <cmath>
#include <filesystem>
#include <map>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "sparsegeo/coord_align.hpp"
#include "sparsegeo/depth_align.hpp"
#include "sparsegeo/detail/text.hpp"
#include "sparsegeo/error.hpp"
#include "sparsegeo/raster.hpp"
#include "sparsegeo/raster_io.hpp"
#include "sparsegeo/sfm_model.hpp"

namespace sparsegeo::synth {

// Planar rectangle origin + a * edge_u + b * edge_v, a, b in [0, 1].
// edge_u and edge_v must be orthogonal.
struct Quad {
  Eigen::Vector3d origin = Eigen::Vector3d::Zero();
  Eigen::Vector3d edge_u = Eigen::Vector3d::UnitX();
  Eigen::Vector3d edge_v = Eigen::Vector3d::UnitY();
  int region = 0;
  Rgb base{200, 200, 200};
  int checks = 8;  // checkerboard cells along each edge

  Eigen::Vector3d normal() const { return edge_u.cross(edge_v).normalized(); }
};

enum class TrackMode {
  // Observed wherever the point is unoccluded and in frame, at its exact
  // continuous projection.
  TrueVisibility,
  // Each point back-projects a pixel center of one owning view and is observed
  // only there, so monocular samples at that pixel are exact.
  PixelAnchored,
};

struct SceneSpec {
  std::string preset;
  std::uint64_t seed = 0;
  CameraIntrinsics intr{100, 100, 63.5, 63.5, 128, 128};
  std::vector<Quad> quads;
  std::vector<CameraPose> train;
  std::vector<CameraPose> test;
  std::map<int, ScaleShift> region_scale_shift;  // gt = s * mono + t per region
  double mono_noise = 0.0;
  TrackMode tracks = TrackMode::PixelAnchored;
  int points_per_region_per_view = 40;  // PixelAnchored
  int points_per_quad = 300;            // TrueVisibility
  // Reference registration = this similarity applied to all cameras, plus
  // per-camera noise.
  SimilarityTransform reference_transform;
  double reference_rotation_noise_deg = 0.0;
  double reference_center_noise = 0.0;
};

// Camera at `center` looking at `target`, image y axis along world +y.
inline CameraPose look_at(const Eigen::Vector3d& center, const Eigen::Vector3d& target,
                          const Eigen::Vector3d& down = Eigen::Vector3d::UnitY()) {
  const Eigen::Vector3d z = (target - center).normalized();
  const Eigen::Vector3d y = (down - down.dot(z) * z).normalized();
  const Eigen::Vector3d x = y.cross(z);
  Eigen::Matrix3d c2w;
  c2w.col(0) = x;
  c2w.col(1) = y;
  c2w.col(2) = z;
  return CameraPose::from_center(Eigen::Quaterniond(c2w.transpose()), center);
}

struct Hit {
  double t = 0.0;  // ray parameter; equals camera-frame depth for pixel rays
  int quad = -1;
  double a = 0.0, b = 0.0;
};

inline std::optional<Hit> intersect(const Quad& q, const Eigen::Vector3d& origin,
                                    const Eigen::Vector3d& dir) {
  const Eigen::Vector3d n = q.normal();
  const double denom = n.dot(dir);
  if (std::abs(denom) < 1e-15) return std::nullopt;
  const double t = n.dot(q.origin - origin) / denom;
  if (!(t > 0.0)) return std::nullopt;
  const Eigen::Vector3d rel = origin + t * dir - q.origin;
  const double a = rel.dot(q.edge_u) / q.edge_u.squaredNorm();
  const double b = rel.dot(q.edge_v) / q.edge_v.squaredNorm();
  if (a < 0.0 || a > 1.0 || b < 0.0 || b > 1.0) return std::nullopt;
  return Hit{t, -1, a, b};
}

inline std::optional<Hit> cast(const std::vector<Quad>& quads, const Eigen::Vector3d& origin,
                               const Eigen::Vector3d& dir) {
  std::optional<Hit> best;
  for (std::size_t i = 0; i < quads.size(); ++i) {
    auto h = intersect(quads[i], origin, dir);
    if (h && (!best || h->t < best->t)) {
      h->quad = static_cast<int>(i);
      best = h;
    }
  }
  return best;
}

// World direction of the ray through pixel (u, v), scaled so its camera-frame
// z component is 1.
inline Eigen::Vector3d pixel_ray(const CameraPose& pose, const CameraIntrinsics& intr, double u,
                                 double v) {
  const Eigen::Vector3d d((u - intr.cx) / intr.fx, (v - intr.cy) / intr.fy, 1.0);
  return pose.rotation.conjugate() * d;
}

inline Rgb texture(const Quad& q, double a, double b) {
  const int ca = static_cast<int>(std::floor(a * q.checks));
  const int cb = static_cast<int>(std::floor(b * q.checks));
  const double check = ((ca + cb) % 2 == 0) ? 1.0 : 0.55;
  const double wave = 0.85 + 0.15 * std::sin(9.0 * a + 5.0 * b);
  Rgb c;
  for (std::size_t k = 0; k < 3; ++k) {
    const double shade = check * wave * (0.75 + 0.25 * std::cos(3.0 * a * (k + 1)));
    c[k] = static_cast<std::uint8_t>(std::clamp(std::lround(q.base[k] * shade), 0L, 255L));
  }
  return c;
}

struct Render {
  Image image;
  DepthMap depth;      // analytic camera-frame depth, 0 on miss
  Raster<int> labels;  // region label, -1 on miss
};

inline Render render(const SceneSpec& spec, const CameraPose& pose, const CameraIntrinsics& intr) {
  Render r{Image(intr.width, intr.height, Rgb{0, 0, 0}), DepthMap(intr.width, intr.height, 0.0f),
           Raster<int>(intr.width, intr.height, -1)};
  const Eigen::Vector3d c = pose.center();
  for (int y = 0; y < intr.height; ++y)
    for (int x = 0; x < intr.width; ++x) {
      const auto hit = cast(spec.quads, c, pixel_ray(pose, intr, x, y));
      if (!hit) continue;
      const auto& q = spec.quads[static_cast<std::size_t>(hit->quad)];
      r.image(x, y) = texture(q, hit->a, hit->b);
      r.depth(x, y) = static_cast<float>(hit->t);
      r.labels(x, y) = q.region;
    }
  return r;
}

// Monocular-style depth: (gt - t_region) / s_region + N(0, noise).
inline DepthMap corrupt_depth(const SceneSpec& spec, const Render& r, std::mt19937_64& rng) {
  std::normal_distribution<double> noise(0.0, spec.mono_noise > 0 ? spec.mono_noise : 1.0);
  DepthMap out(r.depth.width(), r.depth.height(), 0.0f);
  for (int y = 0; y < out.height(); ++y)
    for (int x = 0; x < out.width(); ++x) {
      const int label = r.labels(x, y);
      if (label < 0) continue;
      const auto it = spec.region_scale_shift.find(label);
      const ScaleShift st = it == spec.region_scale_shift.end() ? ScaleShift{} : it->second;
      double mono = (static_cast<double>(r.depth(x, y)) - st.t) / st.s;
      if (spec.mono_noise > 0) mono += noise(rng);
      out(x, y) = static_cast<float>(mono);
    }
  return out;
}

inline std::string view_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "view_%03zu.ppm", i);
  return buf;
}
inline std::string stem_of(const std::string& image_name) {
  return std::filesystem::path(image_name).stem().string();
}

struct GeneratedScene {
  SfmReconstruction recon;  // training views and their SfM points
  std::vector<Render> renders;
  std::vector<DepthMap> mono;
  SfmReconstruction reference;  // train + test cameras, no points
  std::vector<std::string> train_names;
  std::vector<std::string> test_names;
};

inline bool unoccluded(const SceneSpec& spec, const Eigen::Vector3d& center,
                       const Eigen::Vector3d& point) {
  const Eigen::Vector3d dir = point - center;
  for (const auto& q : spec.quads) {
    const auto h = intersect(q, center, dir);
    if (h && h->t < 1.0 - 1e-9) return false;
  }
  return true;
}

inline bool inside_frame(const Projection& p, const CameraIntrinsics& intr) {
  return p.u >= 0.0 && p.v >= 0.0 && p.u < intr.width - 0.5 && p.v < intr.height - 0.5;
}

inline GeneratedScene build(const SceneSpec& spec) {
  GeneratedScene g;
  std::mt19937_64 rng(spec.seed);
  g.recon.cameras[CameraId{1}] = spec.intr;
  for (std::size_t i = 0; i < spec.train.size(); ++i) {
    ViewRecord v;
    v.view_id = ViewId{static_cast<std::uint32_t>(i + 1)};
    v.image_name = view_name(i);
    v.camera_id = CameraId{1};
    v.pose = spec.train[i];
    g.recon.views[v.view_id] = v;
    g.train_names.push_back(v.image_name);
  }
  for (const auto& [id, v] : g.recon.views) g.renders.push_back(render(spec, v.pose, spec.intr));
  for (const auto& r : g.renders) g.mono.push_back(corrupt_depth(spec, r, rng));

  std::uint64_t next_point = 1;
  auto add_point = [&](const Eigen::Vector3d& pos, const Rgb& color,
                       const std::vector<std::pair<ViewId, Projection>>& seen) {
    SfmPoint p;
    p.point_id = PointId{next_point++};
    p.position = pos;
    p.color = color;
    for (const auto& [vid, proj] : seen) {
      auto& view = g.recon.views.at(vid);
      p.track.push_back({vid, view.observations.size()});
      view.observations.push_back({proj.u, proj.v, p.point_id});
    }
    g.recon.points[p.point_id] = p;
  };

  if (spec.tracks == TrackMode::PixelAnchored) {
    std::uniform_int_distribution<int> px(0, spec.intr.width - 1), py(0, spec.intr.height - 1);
    std::size_t vi = 0;
    for (const auto& [vid, view] : g.recon.views) {
      const auto& r = g.renders[vi++];
      std::map<int, int> want;
      for (const auto& [region, st] : spec.region_scale_shift) want[region] = spec.points_per_region_per_view;
      std::map<std::pair<int, int>, bool> used;
      for (int attempt = 0; attempt < 200000; ++attempt) {
        bool done = true;
        for (const auto& [region, n] : want) done = done && n <= 0;
        if (done) break;
        const int x = px(rng), y = py(rng);
        const int label = r.labels(x, y);
        if (label < 0 || want[label] <= 0 || used[{x, y}]) continue;
        used[{x, y}] = true;
        --want[label];
        const auto pos = backproject(x, y, r.depth(x, y), view.pose, spec.intr);
        add_point(pos, r.image(x, y), {{vid, Projection{double(x), double(y), double(r.depth(x, y))}}});
      }
    }
  } else {
    std::uniform_real_distribution<double> unit(0.02, 0.98);
    for (const auto& q : spec.quads) {
      for (int k = 0; k < spec.points_per_quad; ++k) {
        const double a = unit(rng), b = unit(rng);
        const Eigen::Vector3d pos = q.origin + a * q.edge_u + b * q.edge_v;
        std::vector<std::pair<ViewId, Projection>> seen;
        std::size_t vi = 0;
        for (const auto& [vid, view] : g.recon.views) {
          const auto& r = g.renders[vi++];
          const auto proj = project_point(pos, view.pose, spec.intr);
          if (!proj || !inside_frame(*proj, spec.intr)) continue;
          if (!unoccluded(spec, view.pose.center(), pos)) continue;
          // The observation pixel must show the same surface region.
          if (r.labels(nearest_pixel(proj->u), nearest_pixel(proj->v)) != q.region) continue;
          seen.emplace_back(vid, *proj);
        }
        if (seen.size() >= 2) add_point(pos, texture(q, a, b), seen);
      }
    }
  }

  // Reference registration of every camera in another frame.
  g.reference.cameras = g.recon.cameras;
  std::normal_distribution<double> gauss(0.0, 1.0);
  auto perturb = [&](const CameraPose& pose) {
    CameraPose moved = transform_pose(pose, spec.reference_transform);
    const Eigen::Vector3d rv(gauss(rng), gauss(rng), gauss(rng));
    const Eigen::Vector3d cn(gauss(rng), gauss(rng), gauss(rng));
    const double rad = spec.reference_rotation_noise_deg * std::numbers::pi / 180.0;
    const Eigen::Vector3d axis_angle = rad * rv;
    Eigen::Quaterniond dq = Eigen::Quaterniond::Identity();
    if (axis_angle.norm() > 0) dq = Eigen::AngleAxisd(axis_angle.norm(), axis_angle.normalized());
    return CameraPose::from_center(dq * moved.rotation,
                                   moved.center() + spec.reference_center_noise * cn);
  };
  std::uint32_t rid = 1;
  auto add_ref = [&](const CameraPose& pose, const std::string& name) {
    ViewRecord v;
    v.view_id = ViewId{rid++};
    v.image_name = name;
    v.camera_id = CameraId{1};
    v.pose = perturb(pose);
    g.reference.views[v.view_id] = v;
  };
  for (std::size_t i = 0; i < spec.train.size(); ++i) add_ref(spec.train[i], view_name(i));
  for (std::size_t i = 0; i < spec.test.size(); ++i) {
    const auto name = view_name(spec.train.size() + i);
    g.test_names.push_back(name);
    add_ref(spec.test[i], name);
  }
  return g;
}

// Rectangle spanning x in [x0, x0 + width], |y| <= y_half on the plane
// z = z_at_zero + slope * x.
inline Quad sloped_quad(double x0, double width, double y_half, double z_at_zero, double slope,
                        int region, Rgb base) {
  Quad q;
  q.origin = {x0, -y_half, z_at_zero + slope * x0};
  q.edge_u = Eigen::Vector3d(width, 0.0, slope * width);
  q.edge_v = {0.0, 2.0 * y_half, 0.0};
  q.region = region;
  q.base = base;
  return q;
}

// Two tilted planes meeting at the optical axis column: region 0 on the left
// (z = 5.5 + 0.6 x, depth ~4-5.5) and region 1 on the right (z = 9 + 0.5 x,
// depth ~9-13), seen by one camera at the origin.
inline SceneSpec two_plane_scene(std::uint64_t seed = 1) {
  SceneSpec s;
  s.preset = "two_plane";
  s.seed = seed;
  s.intr = {100, 100, 63.5, 47.5, 128, 96};
  s.quads = {sloped_quad(-6.0, 6.0, 5.0, 5.5, 0.6, 0, {220, 120, 90}),
             sloped_quad(0.0, 12.0, 10.0, 9.0, 0.5, 1, {90, 160, 230})};
  s.train = {CameraPose{}};
  // Monocular ranges of the two regions overlap (about 1.5-2.3 and 1.7-3.1)
  // although their true depths do not, so no single affine map fits both.
  s.region_scale_shift = {{0, {2.0, 1.0}}, {1, {3.0, 4.0}}};
  s.points_per_region_per_view = 60;
  return s;
}

// Four training cameras and two test cameras facing a back wall with two
// tilted panels in front of it (three regions).
inline SceneSpec four_view_scene(std::uint64_t seed = 7) {
  SceneSpec s;
  s.preset = "four_view";
  s.seed = seed;
  s.intr = {110, 110, 63.5, 63.5, 128, 128};
  Quad wall;
  wall.origin = {-40.0, -40.0, 13.0};
  wall.edge_u = Eigen::Vector3d(80.0, 0.0, 8.0);
  wall.edge_v = {0.0, 80.0, 0.0};
  wall.region = 0;
  wall.base = {170, 180, 200};
  wall.checks = 64;
  Quad panel_a;
  panel_a.origin = {-3.2, -2.2, 6.2};
  panel_a.edge_u = Eigen::Vector3d(2.8, 0.0, 1.4);
  panel_a.edge_v = {0.0, 4.0, 0.0};
  panel_a.region = 1;
  panel_a.base = {230, 110, 80};
  Quad panel_b;
  panel_b.origin = {0.6, -1.2, 8.0};
  panel_b.edge_u = Eigen::Vector3d(2.6, 0.0, -1.2);
  panel_b.edge_v = {0.0, 3.4, 0.0};
  panel_b.region = 2;
  panel_b.base = {90, 210, 120};
  s.quads = {wall, panel_a, panel_b};
  const Eigen::Vector3d target(0.0, 0.0, 10.0);
  s.train = {look_at({-1.5, 0.2, 0.0}, target), look_at({-0.5, -0.2, 0.3}, target),
             look_at({0.5, 0.25, -0.2}, target), look_at({1.5, -0.15, 0.1}, target)};
  s.test = {look_at({-1.0, 0.05, 0.15}, target), look_at({1.0, 0.1, 0.0}, target)};
  s.region_scale_shift = {{0, {1.5, 2.0}}, {1, {2.0, 1.0}}, {2, {0.5, -1.0}}};
  s.points_per_region_per_view = 40;
  s.reference_transform.s = 1.7;
  s.reference_transform.R =
      Eigen::AngleAxisd(0.4, Eigen::Vector3d(0.3, 1.0, -0.2).normalized()).toRotationMatrix();
  s.reference_transform.t = {0.5, -2.0, 3.0};
  s.reference_rotation_noise_deg = 0.1;
  s.reference_center_noise = 0.005;
  return s;
}

inline SceneSpec preset(const std::string& name, std::uint64_t seed) {
  if (name == "two_plane") return two_plane_scene(seed);
  if (name == "four_view") return four_view_scene(seed);
  throw ConfigError("unknown synthetic preset '" + name + "'");
}

// Writes a scene directory consumable by the pipeline: sparse/, images/,
// depth/ (monocular), gt_depth/, masks/<stem>/region_<k>.pgm, reference/,
// split.txt, scene.txt and scene.cfg.
inline GeneratedScene generate(const SceneSpec& spec, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  auto g = build(spec);
  for (const auto* sub : {"images", "depth", "gt_depth", "masks"}) fs::create_directories(dir / sub);
  write_reconstruction(g.recon, dir / "sparse");
  write_reconstruction(g.reference, dir / "reference");
  std::size_t vi = 0;
  for (const auto& [id, v] : g.recon.views) {
    const auto stem = stem_of(v.image_name);
    const auto& r = g.renders[vi];
    write_image(r.image, (dir / "images" / v.image_name).string());
    write_depth_map(g.mono[vi], (dir / "depth" / (stem + ".pfm")).string());
    write_depth_map(r.depth, (dir / "gt_depth" / (stem + ".pfm")).string());
    fs::create_directories(dir / "masks" / stem);
    for (const auto& [region, st] : spec.region_scale_shift) {
      Mask m(r.labels.width(), r.labels.height(), 0);
      bool any = false;
      auto lv = r.labels.values();
      auto mv = m.values();
      for (std::size_t i = 0; i < lv.size(); ++i)
        if (lv[i] == region) mv[i] = 1, any = true;
      if (any) write_mask(m, (dir / "masks" / stem / ("region_" + std::to_string(region) + ".pgm")).string());
    }
    ++vi;
  }
  std::string split;
  for (const auto& n : g.train_names) split += "train " + n + "\n";
  for (const auto& n : g.test_names) split += "test " + n + "\n";
  detail::write_file((dir / "split.txt").string(), split);
  detail::write_file((dir / "scene.txt").string(),
                     "preset=" + spec.preset + "\nseed=" + std::to_string(spec.seed) + "\n");
  detail::write_file((dir / "scene.cfg").string(),
                     "# pipeline configuration for a generated synthetic scene\n"
                     "sfm_dir = sparse\n"
                     "images_dir = images\n"
                     "depth_dir = depth\n"
                     "gt_depth_dir = gt_depth\n"
                     "masks_dir = masks\n"
                     "segmenter = regions\n"
                     "output_dir = out\n"
                     "scene_spec = scene.txt\n"
                     "reference_dir = reference\n"
                     "split_file = split.txt\n"
                     "stride = 2\n"
                     "virtual_k = " + std::to_string(std::clamp<std::size_t>(spec.train.size(), 2, 3) - 1) + "\n");
  return g;
}

}  // namespace sparsegeo::synth
