#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SVD>

#include "sparsegeo/error.hpp"
#include "sparsegeo/sfm_model.hpp"

namespace sparsegeo {

struct NamedPose {
  std::string name;
  CameraPose pose;
};

struct CameraPointSet {
  double frame_size = 0.0;
  // Four points per camera: center, then center + frame_size * each camera
  // axis expressed in world coordinates.
  std::vector<Eigen::Vector3d> points;
};

inline void require_spread_layout(const std::vector<Eigen::Vector3d>& centers) {
  if (centers.size() < 3)
    throw DegenerateLayout("need at least 3 cameras, got " + std::to_string(centers.size()));
  Eigen::Vector3d mean = Eigen::Vector3d::Zero();
  for (const auto& c : centers) mean += c;
  mean /= static_cast<double>(centers.size());
  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  for (const auto& c : centers) cov += (c - mean) * (c - mean).transpose();
  const Eigen::JacobiSVD<Eigen::Matrix3d> svd(cov);
  const auto sv = svd.singularValues();
  if (!(sv(0) > 0.0) || sv(1) <= 1e-18 * sv(0))
    throw DegenerateLayout("camera centers are coincident or collinear");
}

// Frame size is sqrt(var_x + var_y + var_z) of the camera centers of this set
// (population standard deviation per axis).
inline CameraPointSet camera_point_set(const std::vector<CameraPose>& poses) {
  std::vector<Eigen::Vector3d> centers;
  for (const auto& p : poses) centers.push_back(p.center());
  require_spread_layout(centers);
  Eigen::Vector3d mean = Eigen::Vector3d::Zero();
  for (const auto& c : centers) mean += c;
  mean /= static_cast<double>(centers.size());
  Eigen::Vector3d var = Eigen::Vector3d::Zero();
  for (const auto& c : centers) var += (c - mean).cwiseAbs2();
  var /= static_cast<double>(centers.size());

  CameraPointSet out;
  out.frame_size = std::sqrt(var.sum());
  for (std::size_t i = 0; i < poses.size(); ++i) {
    const Eigen::Matrix3d axes = poses[i].rotation_matrix().transpose();  // camera-to-world
    out.points.push_back(centers[i]);
    for (int k = 0; k < 3; ++k) out.points.push_back(centers[i] + out.frame_size * axes.col(k));
  }
  return out;
}

struct SimilarityTransform {
  double s = 1.0;
  Eigen::Matrix3d R = Eigen::Matrix3d::Identity();
  Eigen::Vector3d t = Eigen::Vector3d::Zero();

  Eigen::Vector3d apply(const Eigen::Vector3d& x) const { return s * (R * x) + t; }
};

// Least-squares similarity with input ~ s * R * ref + t (Umeyama). The
// smallest singular direction is flipped when needed so det(R) = +1.
inline SimilarityTransform fit_similarity(const std::vector<Eigen::Vector3d>& ref,
                                          const std::vector<Eigen::Vector3d>& input) {
  if (ref.size() != input.size()) throw ShapeError("point lists differ in length");
  if (ref.size() < 3) throw DegenerateLayout("need at least 3 correspondences");
  const double n = static_cast<double>(ref.size());
  Eigen::Vector3d mu_a = Eigen::Vector3d::Zero(), mu_b = Eigen::Vector3d::Zero();
  for (std::size_t i = 0; i < ref.size(); ++i) {
    mu_a += ref[i];
    mu_b += input[i];
  }
  mu_a /= n;
  mu_b /= n;
  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  double var_a = 0.0;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    const Eigen::Vector3d a = ref[i] - mu_a;
    cov += (input[i] - mu_b) * a.transpose();
    var_a += a.squaredNorm();
  }
  cov /= n;
  var_a /= n;

  const Eigen::JacobiSVD<Eigen::Matrix3d> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Eigen::Vector3d sv = svd.singularValues();
  if (!(sv(0) > 0.0) || sv(1) <= 1e-12 * sv(0) || !(var_a > 0.0))
    throw DegenerateLayout("cross-covariance is rank deficient");
  Eigen::Vector3d sign = Eigen::Vector3d::Ones();
  if (svd.matrixU().determinant() * svd.matrixV().determinant() < 0.0) sign(2) = -1.0;

  SimilarityTransform out;
  out.R = svd.matrixU() * sign.asDiagonal() * svd.matrixV().transpose();
  out.s = sv.dot(sign) / var_a;
  out.t = mu_b - out.s * out.R * mu_a;
  if (!(out.s > 0.0)) throw DegenerateLayout("non-positive similarity scale");
  return out;
}

// Moves cameras by a world similarity: centers map through it and each
// camera's world-frame axes rotate by R. Intrinsics are untouched.
inline CameraPose transform_pose(const CameraPose& pose, const SimilarityTransform& m) {
  const Eigen::Vector3d center = m.apply(pose.center());
  const Eigen::Matrix3d r = pose.rotation_matrix() * m.R.transpose();
  return CameraPose::from_center(Eigen::Quaterniond(r), center);
}

inline std::vector<NamedPose> apply_to_views(const std::vector<NamedPose>& views,
                                             const SimilarityTransform& m) {
  std::vector<NamedPose> out;
  out.reserve(views.size());
  for (const auto& v : views) out.push_back({v.name, transform_pose(v.pose, m)});
  return out;
}

enum class AlignMode { CameraFrames, CentersOnly };

// Fits the transform taking the reference registration's cameras onto the
// input registration's cameras, matched by position in the two lists.
inline SimilarityTransform align_cameras(const std::vector<CameraPose>& ref,
                                         const std::vector<CameraPose>& input, AlignMode mode) {
  if (ref.size() != input.size()) throw ShapeError("camera lists differ in length");
  if (mode == AlignMode::CameraFrames)
    return fit_similarity(camera_point_set(ref).points, camera_point_set(input).points);
  std::vector<Eigen::Vector3d> a, b;
  for (const auto& p : ref) a.push_back(p.center());
  for (const auto& p : input) b.push_back(p.center());
  require_spread_layout(a);
  return fit_similarity(a, b);
}

// Angle in degrees of the relative rotation between two world-to-camera poses.
inline double rotation_error_deg(const CameraPose& a, const CameraPose& b) {
  const Eigen::Quaterniond d = a.rotation * b.rotation.conjugate();
  const double angle = 2.0 * std::atan2(d.vec().norm(), std::abs(d.w()));
  return angle * 180.0 / std::numbers::pi;
}

struct AlignmentErrors {
  double e_r_median = 0.0;
  double e_r_mean = 0.0;
  double e_t_median = 0.0;
  double e_t_mean = 0.0;
  std::vector<double> e_r;  // per camera, in the order of the first argument
  std::vector<double> e_t;
};

inline double median_of(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const auto mid = v.size() / 2;
  return v.size() % 2 ? v[mid] : 0.5 * (v[mid - 1] + v[mid]);
}

inline double mean_of(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

inline AlignmentErrors alignment_errors(const std::vector<NamedPose>& aligned,
                                        const std::vector<NamedPose>& reference) {
  std::map<std::string, const CameraPose*> by_name;
  for (const auto& v : reference) by_name[v.name] = &v.pose;
  std::set<std::string> names;
  for (const auto& v : aligned) names.insert(v.name);
  if (names.size() != aligned.size() || by_name.size() != reference.size() ||
      names.size() != by_name.size())
    throw NameMismatch("camera sets differ in size or contain duplicates");
  AlignmentErrors out;
  for (const auto& v : aligned) {
    auto it = by_name.find(v.name);
    if (it == by_name.end()) throw NameMismatch("no counterpart for camera " + v.name);
    out.e_r.push_back(rotation_error_deg(v.pose, *it->second));
    out.e_t.push_back((v.pose.center() - it->second->center()).norm());
  }
  out.e_r_median = median_of(out.e_r);
  out.e_r_mean = mean_of(out.e_r);
  out.e_t_median = median_of(out.e_t);
  out.e_t_mean = mean_of(out.e_t);
  return out;
}

// Orders `input` to match `ref` by image name; throws NameMismatch unless the
// two name sets are identical.
inline std::vector<NamedPose> match_by_name(const std::vector<NamedPose>& ref,
                                            const std::vector<NamedPose>& input) {
  std::map<std::string, const NamedPose*> by_name;
  for (const auto& v : input) by_name[v.name] = &v;
  if (by_name.size() != input.size() || input.size() != ref.size())
    throw NameMismatch("train camera sets differ between registrations");
  std::vector<NamedPose> out;
  for (const auto& r : ref) {
    auto it = by_name.find(r.name);
    if (it == by_name.end()) throw NameMismatch("camera " + r.name + " missing from input registration");
    out.push_back(*it->second);
  }
  return out;
}

}  // namespace sparsegeo
