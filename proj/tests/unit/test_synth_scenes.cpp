#include <gtest/gtest.h>

#include <filesystem>

#include "sparsegeo/densify.hpp"
#include "sparsegeo/depth_align.hpp"
#include "sparsegeo/synth_scenes.hpp"
#include "test_support.hpp"

using namespace sparsegeo;
using testing_support::TempDir;
namespace fs = std::filesystem;

namespace {

std::map<std::string, std::string> snapshot(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) out[fs::relative(e.path(), root).generic_string()] = detail::read_file(e.path().string());
  return out;
}

// Region masks from the render labels, with every visible point of the region
// as supporter.
struct RegionSplit {
  MaskSet masks;
  std::vector<std::vector<VisiblePoint>> supporters;
};
RegionSplit split_by_label(const synth::Render& r, const std::vector<VisiblePoint>& vis, int regions) {
  RegionSplit s;
  s.supporters.resize(regions);
  for (int k = 0; k < regions; ++k) {
    Mask m(r.labels.width(), r.labels.height(), 0);
    for (std::size_t i = 0; i < m.size(); ++i) m.values()[i] = r.labels.values()[i] == k;
    s.masks.masks.push_back(m);
  }
  for (const auto& p : vis) s.supporters[r.labels(nearest_pixel(p.u), nearest_pixel(p.v))].push_back(p);
  return s;
}

}  // namespace

TEST(SynthRender, DepthMatchesAnalyticPlaneIntersection) {
  const auto spec = synth::two_plane_scene();
  const auto r = synth::render(spec, spec.train[0], spec.intr);
  std::size_t hits = 0;
  for (int y = 0; y < spec.intr.height; y += 3)
    for (int x = 0; x < spec.intr.width; x += 3) {
      const int label = r.labels(x, y);
      if (label < 0) continue;
      ++hits;
      // Identity camera: ray (xn, yn, 1) meets z = z0 + slope * X at
      // z = z0 / (1 - slope * xn).
      const double xn = (x - spec.intr.cx) / spec.intr.fx;
      const double z0 = label == 0 ? 5.5 : 9.0, slope = label == 0 ? 0.6 : 0.5;
      EXPECT_NEAR(r.depth(x, y), z0 / (1 - slope * xn), 1e-5);
    }
  EXPECT_GT(hits, 1000u);
}

TEST(SynthRender, BothRegionsVisible) {
  const auto spec = synth::two_plane_scene();
  const auto r = synth::render(spec, spec.train[0], spec.intr);
  std::size_t counts[2] = {0, 0};
  for (int v : r.labels.values())
    if (v >= 0) ++counts[v];
  EXPECT_GT(counts[0], 2000u);
  EXPECT_GT(counts[1], 2000u);
  EXPECT_EQ(counts[0] + counts[1], r.labels.size());
}

TEST(SynthScene, SeedRepetitionIsByteIdentical) {
  TempDir a("synth_a"), b("synth_b");
  synth::generate(synth::four_view_scene(7), a.path());
  synth::generate(synth::four_view_scene(7), b.path());
  const auto sa = snapshot(a.path()), sb = snapshot(b.path());
  EXPECT_EQ(sa.size(), sb.size());
  EXPECT_TRUE(sa == sb);
  EXPECT_TRUE(sa.count("scene.cfg"));
  EXPECT_TRUE(sa.count("sparse/points3D.txt"));
  EXPECT_TRUE(sa.count("masks/view_000/region_2.pgm"));
}

TEST(SynthScene, DifferentSeedsDiffer) {
  const auto a = synth::build(synth::four_view_scene(1)), b = synth::build(synth::four_view_scene(2));
  EXPECT_NE(a.recon.points.begin()->second.position, b.recon.points.begin()->second.position);
}

TEST(SynthScene, PerRegionAlignmentIsExactGlobalIsNot) {
  const auto spec = synth::two_plane_scene();
  const auto g = synth::build(spec);
  const auto& view = g.recon.views.begin()->second;
  const auto vis = visible_points(view, g.recon);
  ASSERT_EQ(vis.size(), 120u);
  const auto split = split_by_label(g.renders[0], vis, 2);
  const auto sem = align_semantic(g.mono[0], split.masks, split.supporters);
  ASSERT_EQ(sem.fits.size(), 2u);
  EXPECT_NEAR(sem.fits[0].fit.s, 2.0, 1e-5);
  EXPECT_NEAR(sem.fits[0].fit.t, 1.0, 1e-5);
  EXPECT_NEAR(sem.fits[1].fit.s, 3.0, 1e-5);
  EXPECT_NEAR(sem.fits[1].fit.t, 4.0, 1e-5);
  const auto merged = composite_fragments(sem, split.masks, std::vector<std::size_t>{60, 60},
                                          spec.intr.width, spec.intr.height);
  EXPECT_LT(alignment_error_map(merged, g.renders[0].depth).mae, 1e-6);
  const auto global = align_image(g.mono[0], vis);
  EXPECT_GT(global.residual_rms, 0.1);
  EXPECT_GT(alignment_error_map(global.aligned, g.renders[0].depth).mae, 0.1);
}

TEST(SynthScene, DenseCloudLiesOnGeneratingPlanes) {
  const auto spec = synth::two_plane_scene();
  const auto g = synth::build(spec);
  const auto& view = g.recon.views.begin()->second;
  const auto vis = visible_points(view, g.recon);
  const auto split = split_by_label(g.renders[0], vis, 2);
  const auto sem = align_semantic(g.mono[0], split.masks, split.supporters);
  AlignedView av{view.view_id,
                 composite_fragments(sem, split.masks, std::vector<std::size_t>{60, 60}, spec.intr.width,
                                     spec.intr.height),
                 split.masks,
                 {60, 60}};
  DensifyParams params;
  params.include_sfm = false;
  const auto cloud = build_dense_cloud(g.recon, {av}, {{view.view_id, g.renders[0].image}}, params);
  ASSERT_EQ(cloud.size(), std::size_t(spec.intr.width) * spec.intr.height);
  double worst = 0;
  for (const auto& p : cloud.positions) {
    const Eigen::Vector3d q = p.cast<double>();
    // Distance to whichever generating plane is closer.
    const double d0 = std::abs(q.z() - 5.5 - 0.6 * q.x()) / std::sqrt(1 + 0.36);
    const double d1 = std::abs(q.z() - 9.0 - 0.5 * q.x()) / std::sqrt(1 + 0.25);
    worst = std::max(worst, std::min(d0, d1));
  }
  EXPECT_LT(worst, 1e-6);
}

TEST(SynthScene, ReferenceRegistrationIsTransformedCopy) {
  auto spec = synth::four_view_scene();
  spec.reference_rotation_noise_deg = 0;
  spec.reference_center_noise = 0;
  const auto g = synth::build(spec);
  ASSERT_EQ(g.reference.views.size(), 6u);
  for (const auto& [id, v] : g.recon.views) {
    const auto* r = g.reference.find_view(v.image_name);
    ASSERT_NE(r, nullptr);
    EXPECT_LT((r->pose.center() - spec.reference_transform.apply(v.pose.center())).norm(), 1e-12);
  }
}

TEST(SynthScene, TrueVisibilityTracksSpanViews) {
  auto spec = synth::four_view_scene();
  spec.tracks = synth::TrackMode::TrueVisibility;
  const auto g = synth::build(spec);
  ASSERT_FALSE(g.recon.points.empty());
  for (const auto& [id, p] : g.recon.points) {
    EXPECT_GE(p.track.size(), 2u);
    for (const auto& t : p.track) {
      const auto& v = g.recon.views.at(t.view_id);
      const auto proj = project_point(p.position, v.pose, spec.intr);
      ASSERT_TRUE(proj);
      EXPECT_DOUBLE_EQ(v.observations.at(t.observation_index).u, proj->u);
    }
  }
}

TEST(SynthScene, UnknownPresetRejected) { EXPECT_THROW(synth::preset("nope", 1), ConfigError); }
