#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <unordered_set>
#include <vector>

#include "sparsegeo/detail/parallel.hpp"
#include "sparsegeo/error.hpp"
#include "sparsegeo/raster.hpp"
#include "sparsegeo/semantic_masks.hpp"
#include "sparsegeo/sfm_model.hpp"

namespace sparsegeo {

struct DensifyParams {
  int stride = 1;
  std::optional<double> voxel;  // downsample cell size, off when empty
  bool include_sfm = true;

  void validate() const {
    if (stride < 1) throw ConfigError("stride must be >= 1");
    if (voxel && !(*voxel > 0.0)) throw ConfigError("voxel must be > 0");
  }
};

inline bool on_stride(int x, int y, int stride) { return x % stride == 0 && y % stride == 0; }

// Lifts every valid, in-region pixel on the stride grid to world space,
// colored with the pixel it came from. Pixels are visited row-major.
inline PointCloud backproject_pixels(const ViewRecord& view, const CameraIntrinsics& intr,
                                     const DepthMap& depth, const Image& image,
                                     const Mask* region = nullptr, int stride = 1) {
  if (!depth.same_shape(intr.width, intr.height) || !image.same_shape(intr.width, intr.height))
    throw ShapeError("depth/image do not match camera " + view.image_name);
  if (region && !region->same_shape(depth)) throw ShapeError("region mask size mismatch");
  PointCloud cloud;
  for (int y = 0; y < depth.height(); y += stride) {
    for (int x = 0; x < depth.width(); x += stride) {
      if (region && !(*region)(x, y)) continue;
      const float d = depth(x, y);
      if (!valid_depth(d)) continue;
      cloud.push_back(backproject(x, y, d, view.pose, intr).cast<float>(), image(x, y));
    }
  }
  return cloud;
}

struct AlignedView {
  ViewId view_id{};
  DepthMap depth;  // aligned, scene units
  MaskSet masks;
  std::vector<std::size_t> supporter_counts;
};

// Keeps the first point (in input order) of every occupied voxel.
inline PointCloud voxel_downsample(const PointCloud& cloud, double voxel) {
  struct Key {
    long long x, y, z;
    bool operator==(const Key&) const = default;
  };
  struct KeyHash {
    std::size_t operator()(const Key& k) const {
      return std::hash<long long>{}(k.x * 73856093LL ^ k.y * 19349663LL ^ k.z * 83492791LL);
    }
  };
  std::unordered_set<Key, KeyHash> seen;
  PointCloud out;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto& p = cloud.positions[i];
    const Key k{static_cast<long long>(std::floor(p.x() / voxel)),
                static_cast<long long>(std::floor(p.y() / voxel)),
                static_cast<long long>(std::floor(p.z() / voxel))};
    if (seen.insert(k).second) out.push_back(p, cloud.colors[i]);
  }
  return out;
}

// Union over views (ascending id) and their masks (set order) of the
// back-projected aligned depth. A pixel covered by several masks is emitted
// once, for its owning mask (see mask_ownership). SfM points and an optional
// external cloud follow when include_sfm is set.
inline PointCloud build_dense_cloud(const SfmReconstruction& recon,
                                    std::vector<AlignedView> views,
                                    const std::map<ViewId, Image>& images,
                                    const DensifyParams& params,
                                    const PointCloud* extra_points = nullptr, int jobs = 1) {
  params.validate();
  std::sort(views.begin(), views.end(),
            [](const AlignedView& a, const AlignedView& b) { return a.view_id < b.view_id; });
  std::vector<PointCloud> per_view(views.size());

  detail::parallel_for(views.size(), jobs, [&](std::size_t vi) {
    const auto& av = views[vi];
    auto vit = recon.views.find(av.view_id);
    if (vit == recon.views.end())
      throw MissingInput("aligned depth for unknown view " + std::to_string(to_underlying(av.view_id)));
    auto iit = images.find(av.view_id);
    if (iit == images.end()) throw MissingInput("image for view " + vit->second.image_name);
    const auto& view = vit->second;
    const auto& intr = recon.camera_of(view);
    if (!av.depth.same_shape(intr.width, intr.height) ||
        !iit->second.same_shape(intr.width, intr.height))
      throw ShapeError("aligned depth/image do not match camera of " + view.image_name);
    const auto owner = mask_ownership(av.masks, av.supporter_counts);
    auto& cloud = per_view[vi];
    for (std::size_t k = 0; k < av.masks.size(); ++k) {
      for (int y = 0; y < av.depth.height(); y += params.stride) {
        for (int x = 0; x < av.depth.width(); x += params.stride) {
          if (owner(x, y) != static_cast<int>(k)) continue;
          const float d = av.depth(x, y);
          if (!valid_depth(d)) continue;
          cloud.push_back(backproject(x, y, d, view.pose, intr).cast<float>(), iit->second(x, y));
        }
      }
    }
  });

  std::map<ViewId, bool> present;
  for (const auto& av : views) present[av.view_id] = true;
  for (const auto& [id, v] : recon.views)
    if (!present.count(id)) throw MissingInput("no aligned depth for view " + v.image_name);

  PointCloud out;
  for (auto& c : per_view) out.append(c);
  if (params.include_sfm) {
    for (const auto& [id, p] : recon.points) out.push_back(p.position.cast<float>(), p.color);
    if (extra_points) out.append(*extra_points);
  }
  if (params.voxel) out = voxel_downsample(out, *params.voxel);
  return out;
}

}  // namespace sparsegeo
