#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "sparsegeo/detail/text.hpp"
#include "sparsegeo/error.hpp"
#include "sparsegeo/raster.hpp"

namespace sparsegeo {

enum class CameraId : std::uint32_t {};
enum class ViewId : std::uint32_t {};
enum class PointId : std::uint64_t {};

template <typename Id>
constexpr auto to_underlying(Id id) {
  return static_cast<std::underlying_type_t<Id>>(id);
}

struct CameraIntrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 1;
  int height = 1;

  bool valid() const {
    return fx > 0 && fy > 0 && width > 0 && height > 0 && cx >= 0 && cx < width && cy >= 0 &&
           cy < height;
  }
  friend bool operator==(const CameraIntrinsics&, const CameraIntrinsics&) = default;
};

// World-to-camera rigid transform: x_cam = R * x_world + t.
struct CameraPose {
  Eigen::Quaterniond rotation = Eigen::Quaterniond::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  Eigen::Matrix3d rotation_matrix() const { return rotation.toRotationMatrix(); }
  Eigen::Vector3d to_camera(const Eigen::Vector3d& world) const {
    return rotation * world + translation;
  }
  Eigen::Vector3d to_world(const Eigen::Vector3d& cam) const {
    return rotation.conjugate() * (cam - translation);
  }
  Eigen::Vector3d center() const { return -(rotation.conjugate() * translation); }

  // Pose whose camera sits at `center` with world-to-camera rotation `rot`.
  static CameraPose from_center(const Eigen::Quaterniond& rot, const Eigen::Vector3d& center) {
    CameraPose p;
    p.rotation = rot.normalized();
    p.translation = -(p.rotation * center);
    return p;
  }
};

inline Eigen::Vector3d camera_center(const CameraPose& pose) { return pose.center(); }

struct Observation {
  double u = 0.0;
  double v = 0.0;
  std::optional<PointId> point_id;  // empty = untriangulated
};

struct ViewRecord {
  ViewId view_id{};
  std::string image_name;
  CameraId camera_id{};
  CameraPose pose;
  std::vector<Observation> observations;
};

struct TrackEntry {
  ViewId view_id{};
  std::size_t observation_index = 0;
  friend bool operator==(const TrackEntry&, const TrackEntry&) = default;
};

struct SfmPoint {
  PointId point_id{};
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  Rgb color{0, 0, 0};
  double error = 0.0;
  std::vector<TrackEntry> track;
};

struct SfmReconstruction {
  std::map<CameraId, CameraIntrinsics> cameras;
  std::map<ViewId, ViewRecord> views;
  std::map<PointId, SfmPoint> points;

  const CameraIntrinsics& camera_of(const ViewRecord& view) const {
    auto it = cameras.find(view.camera_id);
    if (it == cameras.end())
      throw CorruptModel("view " + view.image_name + " references unknown camera");
    return it->second;
  }
  const ViewRecord* find_view(std::string_view image_name) const {
    for (const auto& [id, v] : views)
      if (v.image_name == image_name) return &v;
    return nullptr;
  }
};

struct Projection {
  double u = 0.0;
  double v = 0.0;
  double depth = 0.0;
};

// Pixel-center convention: integer coordinates are pixel centers, so
// (u, v) = (fx * x / z + cx, fy * y / z + cy) with no rounding. Returns
// nullopt when the point is at or behind the image plane.
inline std::optional<Projection> project_point(const Eigen::Vector3d& position,
                                               const CameraPose& pose,
                                               const CameraIntrinsics& intr) {
  const Eigen::Vector3d c = pose.to_camera(position);
  if (!(c.z() > 0.0)) return std::nullopt;
  return Projection{intr.fx * c.x() / c.z() + intr.cx, intr.fy * c.y() / c.z() + intr.cy, c.z()};
}

// Inverse of project_point for a known depth.
inline Eigen::Vector3d backproject(double u, double v, double depth, const CameraPose& pose,
                                   const CameraIntrinsics& intr) {
  const Eigen::Vector3d cam((u - intr.cx) * depth / intr.fx, (v - intr.cy) * depth / intr.fy,
                            depth);
  return pose.to_world(cam);
}

// Nearest pixel to a continuous coordinate under the pixel-center convention.
inline int nearest_pixel(double coord) { return static_cast<int>(std::floor(coord + 0.5)); }

struct VisiblePoint {
  PointId point_id{};
  double u = 0.0;
  double v = 0.0;
  double sfm_depth = 0.0;
};

// One entry per triangulated observation, pixel location as stored and depth
// recomputed from the triangulated position. Points behind the camera and
// repeated point ids are dropped.
inline std::vector<VisiblePoint> visible_points(const ViewRecord& view,
                                                const SfmReconstruction& recon) {
  const auto& intr = recon.camera_of(view);
  std::vector<VisiblePoint> out;
  std::set<PointId> seen;
  for (const auto& obs : view.observations) {
    if (!obs.point_id) continue;
    auto it = recon.points.find(*obs.point_id);
    if (it == recon.points.end()) continue;
    const auto proj = project_point(it->second.position, view.pose, intr);
    if (!proj) continue;
    if (!seen.insert(*obs.point_id).second) continue;
    out.push_back({*obs.point_id, obs.u, obs.v, proj->depth});
  }
  return out;
}

namespace detail {

inline std::vector<std::string> data_lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty() && line.front() == '#') continue;
    out.push_back(line);
  }
  return out;
}

template <typename T>
T field(std::string_view tok, const std::string& ctx) {
  if constexpr (std::is_floating_point_v<T>) {
    auto v = parse_double(tok);
    if (!v) throw CorruptModel(ctx + ": bad number '" + std::string(tok) + "'");
    return static_cast<T>(*v);
  } else {
    auto v = parse_int<T>(tok);
    if (!v) throw CorruptModel(ctx + ": bad integer '" + std::string(tok) + "'");
    return *v;
  }
}

inline std::string read_model_file(const std::filesystem::path& dir, const char* name) {
  const auto path = dir / name;
  if (!std::filesystem::exists(path)) throw IoError("missing " + path.string());
  return read_file(path.string());
}

}  // namespace detail

// Parses a COLMAP sparse text model (cameras.txt, images.txt, points3D.txt).
// Only PINHOLE and SIMPLE_PINHOLE cameras are accepted.
inline SfmReconstruction load_reconstruction(const std::filesystem::path& dir) {
  using detail::field;
  SfmReconstruction recon;

  const auto cam_text = detail::read_model_file(dir, "cameras.txt");
  const auto img_text = detail::read_model_file(dir, "images.txt");
  const auto pts_text = detail::read_model_file(dir, "points3D.txt");

  for (const auto& line : detail::data_lines(cam_text)) {
    const auto tok = detail::split_ws(line);
    if (tok.empty()) continue;
    const std::string ctx = "cameras.txt";
    if (tok.size() < 4) throw CorruptModel(ctx + ": short line");
    const auto id = CameraId{field<std::uint32_t>(tok[0], ctx)};
    CameraIntrinsics intr;
    intr.width = field<int>(tok[2], ctx);
    intr.height = field<int>(tok[3], ctx);
    if (tok[1] == "PINHOLE") {
      if (tok.size() != 8) throw CorruptModel(ctx + ": PINHOLE needs 4 params");
      intr.fx = field<double>(tok[4], ctx);
      intr.fy = field<double>(tok[5], ctx);
      intr.cx = field<double>(tok[6], ctx);
      intr.cy = field<double>(tok[7], ctx);
    } else if (tok[1] == "SIMPLE_PINHOLE") {
      if (tok.size() != 7) throw CorruptModel(ctx + ": SIMPLE_PINHOLE needs 3 params");
      intr.fx = intr.fy = field<double>(tok[4], ctx);
      intr.cx = field<double>(tok[5], ctx);
      intr.cy = field<double>(tok[6], ctx);
    } else {
      throw UnsupportedModel("camera model " + std::string(tok[1]) +
                             " (only PINHOLE and SIMPLE_PINHOLE)");
    }
    if (!intr.valid()) throw CorruptModel(ctx + ": invalid intrinsics for camera " + std::string(tok[0]));
    if (!recon.cameras.emplace(id, intr).second)
      throw CorruptModel(ctx + ": duplicate camera id " + std::string(tok[0]));
  }

  const auto img_lines = detail::data_lines(img_text);
  std::set<std::string> names;
  for (std::size_t i = 0; i < img_lines.size(); ++i) {
    const auto tok = detail::split_ws(img_lines[i]);
    if (tok.empty()) continue;
    const std::string ctx = "images.txt";
    if (tok.size() != 10) throw CorruptModel(ctx + ": expected 10 fields in image header");
    ViewRecord view;
    view.view_id = ViewId{field<std::uint32_t>(tok[0], ctx)};
    const Eigen::Quaterniond q(field<double>(tok[1], ctx), field<double>(tok[2], ctx),
                               field<double>(tok[3], ctx), field<double>(tok[4], ctx));
    if (q.norm() < 1e-12) throw CorruptModel(ctx + ": zero quaternion");
    view.pose.rotation = q.normalized();
    view.pose.translation = {field<double>(tok[5], ctx), field<double>(tok[6], ctx),
                             field<double>(tok[7], ctx)};
    view.camera_id = CameraId{field<std::uint32_t>(tok[8], ctx)};
    view.image_name = std::string(tok[9]);
    auto cam = recon.cameras.find(view.camera_id);
    if (cam == recon.cameras.end())
      throw CorruptModel(ctx + ": image " + view.image_name + " references missing camera " +
                         std::string(tok[8]));
    if (!names.insert(view.image_name).second)
      throw CorruptModel(ctx + ": duplicate image name " + view.image_name);

    const std::string obs_line = i + 1 < img_lines.size() ? img_lines[++i] : std::string{};
    const auto obs = detail::split_ws(obs_line);
    if (obs.size() % 3 != 0) throw CorruptModel(ctx + ": observation triples malformed");
    for (std::size_t k = 0; k < obs.size(); k += 3) {
      Observation o;
      o.u = field<double>(obs[k], ctx);
      o.v = field<double>(obs[k + 1], ctx);
      const auto pid = field<long long>(obs[k + 2], ctx);
      if (pid < -1) throw CorruptModel(ctx + ": bad point id");
      if (pid >= 0) o.point_id = PointId{static_cast<std::uint64_t>(pid)};
      if (!(o.u >= 0 && o.u < cam->second.width && o.v >= 0 && o.v < cam->second.height))
        throw CorruptModel(ctx + ": observation outside image " + view.image_name);
      view.observations.push_back(o);
    }
    if (!recon.views.emplace(view.view_id, std::move(view)).second)
      throw CorruptModel(ctx + ": duplicate image id " + std::string(tok[0]));
  }

  for (const auto& line : detail::data_lines(pts_text)) {
    const auto tok = detail::split_ws(line);
    if (tok.empty()) continue;
    const std::string ctx = "points3D.txt";
    if (tok.size() < 8 || (tok.size() - 8) % 2 != 0)
      throw CorruptModel(ctx + ": malformed point line");
    SfmPoint p;
    p.point_id = PointId{field<std::uint64_t>(tok[0], ctx)};
    p.position = {field<double>(tok[1], ctx), field<double>(tok[2], ctx),
                  field<double>(tok[3], ctx)};
    for (int c = 0; c < 3; ++c) {
      const auto v = field<int>(tok[4 + static_cast<std::size_t>(c)], ctx);
      if (v < 0 || v > 255) throw CorruptModel(ctx + ": color out of range");
      p.color[static_cast<std::size_t>(c)] = static_cast<std::uint8_t>(v);
    }
    p.error = field<double>(tok[7], ctx);
    for (std::size_t k = 8; k < tok.size(); k += 2) {
      p.track.push_back({ViewId{field<std::uint32_t>(tok[k], ctx)},
                         field<std::size_t>(tok[k + 1], ctx)});
    }
    if (!recon.points.emplace(p.point_id, std::move(p)).second)
      throw CorruptModel(ctx + ": duplicate point id " + std::string(tok[0]));
  }

  // Cross-link check in both directions.
  for (const auto& [pid, point] : recon.points) {
    for (const auto& te : point.track) {
      auto v = recon.views.find(te.view_id);
      if (v == recon.views.end())
        throw CorruptModel("point " + std::to_string(to_underlying(pid)) +
                           " track references missing image");
      if (te.observation_index >= v->second.observations.size() ||
          v->second.observations[te.observation_index].point_id != pid)
        throw CorruptModel("point " + std::to_string(to_underlying(pid)) +
                           " track entry does not match observation");
    }
  }
  for (const auto& [vid, view] : recon.views) {
    for (std::size_t k = 0; k < view.observations.size(); ++k) {
      const auto& o = view.observations[k];
      if (!o.point_id) continue;
      auto p = recon.points.find(*o.point_id);
      if (p == recon.points.end())
        throw CorruptModel("image " + view.image_name + " references dangling point " +
                           std::to_string(to_underlying(*o.point_id)));
      const TrackEntry te{vid, k};
      if (std::find(p->second.track.begin(), p->second.track.end(), te) == p->second.track.end())
        throw CorruptModel("image " + view.image_name + " observation missing from track of point " +
                           std::to_string(to_underlying(*o.point_id)));
    }
  }
  return recon;
}

// images.txt body for a list of views (header + observation line each).
inline std::string format_images(const std::vector<const ViewRecord*>& views) {
  using detail::fmt_double;
  std::string out;
  for (const auto* v : views) {
    const auto& q = v->pose.rotation;
    const auto& t = v->pose.translation;
    out += std::to_string(to_underlying(v->view_id)) + " " + fmt_double(q.w()) + " " +
           fmt_double(q.x()) + " " + fmt_double(q.y()) + " " + fmt_double(q.z()) + " " +
           fmt_double(t.x()) + " " + fmt_double(t.y()) + " " + fmt_double(t.z()) + " " +
           std::to_string(to_underlying(v->camera_id)) + " " + v->image_name + "\n";
    std::string obs;
    for (const auto& o : v->observations) {
      if (!obs.empty()) obs += ' ';
      obs += fmt_double(o.u) + " " + fmt_double(o.v) + " " +
             (o.point_id ? std::to_string(to_underlying(*o.point_id)) : std::string("-1"));
    }
    out += obs + "\n";
  }
  return out;
}

inline void write_reconstruction(const SfmReconstruction& recon,
                                 const std::filesystem::path& dir) {
  using detail::fmt_double;
  std::filesystem::create_directories(dir);

  std::string cams = "# Camera list with one line of data per camera:\n"
                     "#   CAMERA_ID, MODEL, WIDTH, HEIGHT, PARAMS[]\n";
  for (const auto& [id, c] : recon.cameras) {
    cams += std::to_string(to_underlying(id)) + " PINHOLE " + std::to_string(c.width) + " " +
            std::to_string(c.height) + " " + fmt_double(c.fx) + " " + fmt_double(c.fy) + " " +
            fmt_double(c.cx) + " " + fmt_double(c.cy) + "\n";
  }
  detail::write_file((dir / "cameras.txt").string(), cams);

  std::vector<const ViewRecord*> views;
  for (const auto& [id, v] : recon.views) views.push_back(&v);
  detail::write_file((dir / "images.txt").string(),
                     "# Image list with two lines of data per image:\n"
                     "#   IMAGE_ID, QW, QX, QY, QZ, TX, TY, TZ, CAMERA_ID, NAME\n"
                     "#   POINTS2D[] as (X, Y, POINT3D_ID)\n" +
                         format_images(views));

  std::string pts = "# 3D point list with one line of data per point:\n"
                    "#   POINT3D_ID, X, Y, Z, R, G, B, ERROR, TRACK[] as (IMAGE_ID, POINT2D_IDX)\n";
  for (const auto& [id, p] : recon.points) {
    pts += std::to_string(to_underlying(id)) + " " + fmt_double(p.position.x()) + " " +
           fmt_double(p.position.y()) + " " + fmt_double(p.position.z()) + " " +
           std::to_string(p.color[0]) + " " + std::to_string(p.color[1]) + " " +
           std::to_string(p.color[2]) + " " + fmt_double(p.error);
    for (const auto& te : p.track)
      pts += " " + std::to_string(to_underlying(te.view_id)) + " " +
             std::to_string(te.observation_index);
    pts += "\n";
  }
  detail::write_file((dir / "points3D.txt").string(), pts);
}

}  // namespace sparsegeo
