#include <gtest/gtest.h>

#include <random>

#include "sparsegeo/sfm_model.hpp"
#include "test_support.hpp"

using namespace sparsegeo;
using testing_support::TempDir;

namespace {

void write_model(const TempDir& dir, const std::string& cameras, const std::string& images,
                 const std::string& points) {
  dir.write("cameras.txt", cameras);
  dir.write("images.txt", images);
  dir.write("points3D.txt", points);
}

// Two views, three points. Point 1 is seen by both views, point 2 only by
// view 1, point 3 only by view 2. View 1 also has an untriangulated feature.
const char* kCameras =
    "# Camera list\n"
    "1 PINHOLE 640 480 100 100 320 240\n"
    "2 SIMPLE_PINHOLE 640 480 200 320 240\n";
const char* kImages =
    "# Image list\n"
    "1 1 0 0 0 0 0 0 1 a.png\n"
    "320 240 1 340 240 2 10 10 -1\n"
    "2 1 0 0 0 -1 0 0 2 b.png\n"
    "280 240 1 300 260 3\n";
const char* kPoints =
    "1 0 0 5 255 0 0 0.5 1 0 2 0\n"
    "2 1 0 5 0 255 0 0.25 1 1\n"
    "3 1.2 0.1 5 0 0 255 0.1 2 1\n";

}  // namespace

TEST(Projection, OpticalAxisPoint) {
  const CameraIntrinsics intr{100, 100, 320, 240, 640, 480};
  const auto p = project_point({0, 0, 5}, CameraPose{}, intr);
  ASSERT_TRUE(p);
  EXPECT_DOUBLE_EQ(p->u, 320);
  EXPECT_DOUBLE_EQ(p->v, 240);
  EXPECT_DOUBLE_EQ(p->depth, 5);
}

TEST(Projection, LateralPoint) {
  const CameraIntrinsics intr{100, 100, 320, 240, 640, 480};
  const auto p = project_point({1, 0, 5}, CameraPose{}, intr);
  ASSERT_TRUE(p);
  EXPECT_DOUBLE_EQ(p->u, 340);
  EXPECT_DOUBLE_EQ(p->v, 240);
}

TEST(Projection, BehindCameraIsRejected) {
  const CameraIntrinsics intr{100, 100, 320, 240, 640, 480};
  EXPECT_FALSE(project_point({0, 0, -1}, CameraPose{}, intr));
  EXPECT_FALSE(project_point({0, 0, 0}, CameraPose{}, intr));
}

TEST(Projection, NearestPixelUsesCenters) {
  EXPECT_EQ(nearest_pixel(2.49), 2);
  EXPECT_EQ(nearest_pixel(2.5), 3);
  EXPECT_EQ(nearest_pixel(-0.5), 0);
  EXPECT_EQ(nearest_pixel(-0.51), -1);
}

TEST(CameraCenter, IdentityAndTranslation) {
  CameraPose p;
  EXPECT_TRUE(camera_center(p).isZero());
  p.translation = {1, 2, 3};
  EXPECT_TRUE(camera_center(p).isApprox(Eigen::Vector3d(-1, -2, -3)));
}

TEST(CameraCenter, MatchesInverseOfHomogeneousMatrix) {
  CameraPose p;
  p.rotation = Eigen::Quaterniond(Eigen::AngleAxisd(M_PI / 2, Eigen::Vector3d::UnitZ()));
  p.translation = {1, 0, 0};
  Eigen::Matrix4d T = Eigen::Matrix4d::Identity();
  T.topLeftCorner<3, 3>() = p.rotation_matrix();
  T.topRightCorner<3, 1>() = p.translation;
  const Eigen::Vector3d expected = T.inverse().topRightCorner<3, 1>();
  EXPECT_LT((camera_center(p) - expected).norm(), 1e-12);
  EXPECT_LT((camera_center(p) - Eigen::Vector3d(0, 1, 0)).norm(), 1e-12);
}

TEST(CameraPose, FromCenterRoundTrips) {
  const Eigen::Quaterniond q(Eigen::AngleAxisd(0.3, Eigen::Vector3d(1, 2, 3).normalized()));
  const auto p = CameraPose::from_center(q, {4, -1, 2});
  EXPECT_LT((p.center() - Eigen::Vector3d(4, -1, 2)).norm(), 1e-12);
  const Eigen::Vector3d w(0.5, 0.2, 9);
  EXPECT_LT((p.to_world(p.to_camera(w)) - w).norm(), 1e-12);
}

TEST(LoadReconstruction, MinimalModelHasNoPoints) {
  TempDir dir("sfm_min");
  write_model(dir, "1 PINHOLE 4 4 2 2 1.5 1.5\n", "1 1 0 0 0 0 0 0 1 only.png\n\n", "");
  const auto r = load_reconstruction(dir.path());
  EXPECT_EQ(r.cameras.size(), 1u);
  ASSERT_EQ(r.views.size(), 1u);
  EXPECT_TRUE(r.points.empty());
  EXPECT_TRUE(r.views.begin()->second.observations.empty());
}

TEST(LoadReconstruction, TracksAreCrossLinked) {
  TempDir dir("sfm_2v");
  write_model(dir, kCameras, kImages, kPoints);
  const auto r = load_reconstruction(dir.path());
  ASSERT_EQ(r.points.size(), 3u);
  ASSERT_EQ(r.views.size(), 2u);

  // Hand count: point 1 has two track entries, the others one each.
  EXPECT_EQ(r.points.at(PointId{1}).track.size(), 2u);
  EXPECT_EQ(r.points.at(PointId{2}).track.size(), 1u);
  EXPECT_EQ(r.points.at(PointId{3}).track.size(), 1u);

  // Every track entry points back to an observation naming the same point,
  // and every triangulated observation appears in its point's track.
  std::size_t triangulated = 0;
  for (const auto& [vid, view] : r.views)
    for (std::size_t i = 0; i < view.observations.size(); ++i) {
      const auto& obs = view.observations[i];
      if (!obs.point_id) continue;
      ++triangulated;
      const auto& track = r.points.at(*obs.point_id).track;
      EXPECT_NE(std::find(track.begin(), track.end(), TrackEntry{vid, i}), track.end());
    }
  std::size_t entries = 0;
  for (const auto& [pid, pt] : r.points)
    for (const auto& t : pt.track) {
      ++entries;
      EXPECT_EQ(r.views.at(t.view_id).observations.at(t.observation_index).point_id, pid);
    }
  EXPECT_EQ(triangulated, 4u);
  EXPECT_EQ(entries, 4u);

  const auto& cam2 = r.cameras.at(CameraId{2});
  EXPECT_DOUBLE_EQ(cam2.fx, 200);
  EXPECT_DOUBLE_EQ(cam2.fy, 200);
  EXPECT_EQ(r.points.at(PointId{1}).color, (Rgb{255, 0, 0}));
  EXPECT_DOUBLE_EQ(r.points.at(PointId{2}).error, 0.25);
  ASSERT_NE(r.find_view("b.png"), nullptr);
  EXPECT_EQ(r.find_view("b.png")->view_id, ViewId{2});
}

TEST(LoadReconstruction, UnknownCameraIsCorrupt) {
  TempDir dir("sfm_badcam");
  write_model(dir, "1 PINHOLE 4 4 2 2 1.5 1.5\n", "1 1 0 0 0 0 0 0 99 a.png\n\n", "");
  EXPECT_THROW(load_reconstruction(dir.path()), CorruptModel);
}

TEST(LoadReconstruction, DistortedModelIsUnsupported) {
  TempDir dir("sfm_radial");
  write_model(dir, "1 SIMPLE_RADIAL 4 4 2 2 2 0.1\n", "", "");
  EXPECT_THROW(load_reconstruction(dir.path()), UnsupportedModel);
}

TEST(LoadReconstruction, DanglingTrackIsCorrupt) {
  TempDir dir("sfm_dangle");
  write_model(dir, kCameras, kImages, "1 0 0 5 255 0 0 0.5 1 0 2 0 1 7\n2 1 0 5 0 255 0 0.25 1 1\n"
                                      "3 1.2 0.1 5 0 0 255 0.1 2 1\n");
  EXPECT_THROW(load_reconstruction(dir.path()), CorruptModel);
}

TEST(LoadReconstruction, MissingFileIsIoError) {
  TempDir dir("sfm_missing");
  dir.write("cameras.txt", kCameras);
  EXPECT_THROW(load_reconstruction(dir.path()), IoError);
}

TEST(LoadReconstruction, MalformedNumberIsFormatError) {
  TempDir dir("sfm_badnum");
  write_model(dir, "1 PINHOLE 4 4 2 two 1.5 1.5\n", "", "");
  EXPECT_THROW(load_reconstruction(dir.path()), Error);
}

TEST(LoadReconstruction, WriteThenLoadRoundTrips) {
  TempDir a("sfm_rt_a"), b("sfm_rt_b");
  write_model(a, kCameras, kImages, kPoints);
  const auto r1 = load_reconstruction(a.path());
  write_reconstruction(r1, b.path());
  const auto r2 = load_reconstruction(b.path());
  ASSERT_EQ(r1.views.size(), r2.views.size());
  for (const auto& [id, v] : r1.views) {
    const auto& w = r2.views.at(id);
    EXPECT_EQ(v.image_name, w.image_name);
    EXPECT_TRUE(v.pose.rotation.coeffs().isApprox(w.pose.rotation.coeffs()));
    EXPECT_TRUE(v.pose.translation == w.pose.translation);
    EXPECT_EQ(v.observations.size(), w.observations.size());
  }
  ASSERT_EQ(r1.points.size(), r2.points.size());
  for (const auto& [id, p] : r1.points) EXPECT_TRUE(p.position == r2.points.at(id).position);
  EXPECT_EQ(r1.cameras, r2.cameras);
}

TEST(VisiblePoints, EmptyWhenNothingTriangulated) {
  TempDir dir("vis_empty");
  write_model(dir, "1 PINHOLE 4 4 2 2 1.5 1.5\n", "1 1 0 0 0 0 0 0 1 a.png\n1 1 -1\n", "");
  const auto r = load_reconstruction(dir.path());
  EXPECT_TRUE(visible_points(r.views.begin()->second, r).empty());
}

TEST(VisiblePoints, EntriesMatchProjectionOracle) {
  TempDir dir("vis_2v");
  write_model(dir, kCameras, kImages, kPoints);
  const auto r = load_reconstruction(dir.path());
  for (const auto& [id, view] : r.views) {
    const auto vis = visible_points(view, r);
    for (const auto& e : vis) {
      const auto p = project_point(r.points.at(e.point_id).position, view.pose, r.camera_of(view));
      ASSERT_TRUE(p);
      EXPECT_DOUBLE_EQ(e.sfm_depth, p->depth);
    }
  }
  const auto vis1 = visible_points(r.views.at(ViewId{1}), r);
  ASSERT_EQ(vis1.size(), 2u);
  EXPECT_EQ(vis1[0].point_id, PointId{1});
  EXPECT_DOUBLE_EQ(vis1[0].u, 320);
  EXPECT_DOUBLE_EQ(vis1[0].v, 240);
  EXPECT_DOUBLE_EQ(vis1[0].sfm_depth, 5);
}

TEST(VisiblePoints, BehindCameraExcluded) {
  TempDir dir("vis_behind");
  write_model(dir, "1 PINHOLE 640 480 100 100 320 240\n",
              "1 1 0 0 0 0 0 0 1 a.png\n320 240 1 320 240 2\n",
              "1 0 0 5 1 1 1 0 1 0\n2 0 0 -5 1 1 1 0 1 1\n");
  const auto r = load_reconstruction(dir.path());
  const auto vis = visible_points(r.views.begin()->second, r);
  ASSERT_EQ(vis.size(), 1u);
  EXPECT_EQ(vis[0].point_id, PointId{1});
}

TEST(Backproject, PrincipalPoint) {
  const CameraIntrinsics intr{100, 100, 0, 0, 10, 10};
  EXPECT_TRUE(backproject(0, 0, 5, CameraPose{}, intr).isApprox(Eigen::Vector3d(0, 0, 5)));
}

TEST(Backproject, RoundTripThroughProjection) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> U(-1, 1);
  const CameraIntrinsics intr{310.5, 290.25, 319.5, 239.5, 640, 480};
  for (int i = 0; i < 1000; ++i) {
    CameraPose pose;
    pose.rotation = Eigen::Quaterniond(U(rng), U(rng), U(rng), U(rng)).normalized();
    pose.translation = {3 * U(rng), 3 * U(rng), 3 * U(rng)};
    const double u = 320 + 320 * U(rng), v = 240 + 240 * U(rng), d = 0.5 + 50 * (1 + U(rng));
    const auto p = project_point(backproject(u, v, d, pose, intr), pose, intr);
    ASSERT_TRUE(p);
    EXPECT_NEAR(p->u, u, 1e-9);
    EXPECT_NEAR(p->v, v, 1e-9);
    EXPECT_NEAR(p->depth, d, 1e-9);
  }
}
