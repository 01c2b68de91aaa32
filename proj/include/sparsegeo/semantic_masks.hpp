#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "sparsegeo/error.hpp"
#include "sparsegeo/raster.hpp"
#include "sparsegeo/raster_io.hpp"
#include "sparsegeo/sfm_model.hpp"

namespace sparsegeo {

struct PromptPoint {
  double u = 0.0;
  double v = 0.0;
};

// Point-prompted segmentation model. Implementations return a mask with the
// prompted image's dimensions.
class Segmenter {
 public:
  virtual ~Segmenter() = default;
  virtual Mask segment(std::span<const PromptPoint> prompts, const Image& image) = 0;
  // Whether segment() may be called from several threads at once.
  virtual bool concurrent_safe() const { return false; }
};

struct MaskParams {
  int th_sfm = 10;
  double th_iou = 0.7;

  void validate() const {
    if (th_sfm < 1) throw ConfigError("th_sfm must be >= 1");
    if (!(th_iou > 0.0 && th_iou <= 1.0)) throw ConfigError("th_iou must be in (0, 1]");
  }
};

struct MaskSet {
  std::vector<Mask> masks;
  std::size_t size() const { return masks.size(); }
};

inline bool mask_contains(const Mask& m, double u, double v) {
  const int x = nearest_pixel(u);
  const int y = nearest_pixel(v);
  return m.contains(x, y) && m(x, y) != 0;
}

// Intersection over union; 0 when both masks are empty.
inline double mask_overlap(const Mask& a, const Mask& b) {
  require_same_shape(a, b, "mask_overlap");
  std::size_t inter = 0, uni = 0;
  const auto av = a.values();
  const auto bv = b.values();
  for (std::size_t i = 0; i < av.size(); ++i) {
    const bool x = av[i] != 0, y = bv[i] != 0;
    inter += x && y;
    uni += x || y;
  }
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

struct AppendResult {
  std::size_t index = 0;  // slot that now holds the mask
  bool merged = false;
};

// Merges into the first mask whose overlap strictly exceeds th_iou, otherwise
// appends.
inline AppendResult append_mask(const Mask& mask, MaskSet& set, double th_iou) {
  for (std::size_t k = 0; k < set.masks.size(); ++k) {
    auto& existing = set.masks[k];
    if (mask_overlap(mask, existing) > th_iou) {
      auto dst = existing.values();
      auto src = mask.values();
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = (dst[i] || src[i]) ? 1 : 0;
      return {k, true};
    }
  }
  set.masks.push_back(mask);
  return {set.masks.size() - 1, false};
}

struct SemanticMasks {
  MaskSet set;
  // supporters[k] are the SfM points that justified mask k; lists are disjoint.
  std::vector<std::vector<VisiblePoint>> supporters;
  std::vector<VisiblePoint> discarded;
  std::size_t iterations = 0;
  std::size_t segmenter_calls = 0;

  std::vector<std::size_t> supporter_counts() const {
    std::vector<std::size_t> n;
    for (const auto& s : supporters) n.push_back(s.size());
    return n;
  }
};

// Descending track length, ties by ascending point id.
inline std::vector<VisiblePoint> order_by_track_length(std::vector<VisiblePoint> vis,
                                                       const SfmReconstruction& recon) {
  auto track_len = [&](PointId id) {
    auto it = recon.points.find(id);
    return it == recon.points.end() ? std::size_t{0} : it->second.track.size();
  };
  std::stable_sort(vis.begin(), vis.end(), [&](const VisiblePoint& a, const VisiblePoint& b) {
    const auto la = track_len(a.point_id), lb = track_len(b.point_id);
    if (la != lb) return la > lb;
    return to_underlying(a.point_id) < to_underlying(b.point_id);
  });
  return vis;
}

// Iterative SfM-prompted mask discovery. Points are consumed in the order given.
//
// Per iteration: prompt with the next remaining point; if the mask encloses
// more than th_sfm remaining points it is kept, else the enclosed points are
// used as a second prompt and the recount decides. Kept masks go through
// append_mask and their enclosed points leave the working set. A mask that
// fails both passes removes only the prompting point, so every iteration
// shrinks the working set.
inline SemanticMasks predict_semantic_masks(std::span<const VisiblePoint> vis, const Image& image,
                                            Segmenter& seg, const MaskParams& params) {
  params.validate();
  SemanticMasks out;
  std::vector<char> alive(vis.size(), 1);
  std::size_t remaining = vis.size();
  std::size_t cursor = 0;

  auto prompt = [&](const std::vector<PromptPoint>& pts) {
    Mask m;
    try {
      ++out.segmenter_calls;
      m = seg.segment(pts, image);
    } catch (const std::exception& e) {
      std::string where;
      for (const auto& p : pts)
        where += (where.empty() ? "" : ",") + detail::fmt_double(p.u) + ":" + detail::fmt_double(p.v);
      throw SegmenterError("prompt [" + where + "]: " + e.what());
    }
    if (!m.same_shape(image))
      throw SegmenterError("segmenter returned mask with wrong dimensions");
    return m;
  };
  auto enclosed = [&](const Mask& m) {
    std::vector<std::size_t> idx;
    for (std::size_t k = 0; k < vis.size(); ++k)
      if (alive[k] && mask_contains(m, vis[k].u, vis[k].v)) idx.push_back(k);
    return idx;
  };
  auto keep = [&](const Mask& m, const std::vector<std::size_t>& idx) {
    const auto r = append_mask(m, out.set, params.th_iou);
    if (!r.merged) out.supporters.emplace_back();
    for (auto k : idx) {
      out.supporters[r.index].push_back(vis[k]);
      alive[k] = 0;
      --remaining;
    }
  };
  const auto threshold = static_cast<std::size_t>(params.th_sfm);

  while (remaining > 0) {
    while (!alive[cursor]) ++cursor;
    const std::size_t i = cursor;
    ++out.iterations;

    Mask m = prompt({{vis[i].u, vis[i].v}});
    auto inside = enclosed(m);
    if (inside.size() > threshold) {
      keep(m, inside);
    } else {
      std::vector<PromptPoint> second;
      for (auto k : inside) second.push_back({vis[k].u, vis[k].v});
      if (second.empty()) second.push_back({vis[i].u, vis[i].v});
      m = prompt(second);
      inside = enclosed(m);
      if (inside.size() > threshold) keep(m, inside);
    }
    // Discard the prompt point if no kept mask consumed it.
    if (alive[i]) {
      out.discarded.push_back(vis[i]);
      alive[i] = 0;
      --remaining;
    }
  }
  return out;
}

// Pixel owner per mask set: the covering mask with the most supporters, ties
// to the earlier mask; -1 where no mask covers the pixel.
inline Raster<int> mask_ownership(const MaskSet& set, std::span<const std::size_t> supporter_counts) {
  if (set.masks.empty()) return {};
  if (supporter_counts.size() != set.masks.size())
    throw ShapeError("supporter counts do not match mask count");
  const auto& first = set.masks.front();
  Raster<int> owner(first.width(), first.height(), -1);
  auto ov = owner.values();
  for (std::size_t k = 0; k < set.masks.size(); ++k) {
    require_same_shape(set.masks[k], first, "mask_ownership");
    auto mv = set.masks[k].values();
    for (std::size_t i = 0; i < mv.size(); ++i) {
      if (!mv[i]) continue;
      if (ov[i] < 0 || supporter_counts[k] > supporter_counts[static_cast<std::size_t>(ov[i])])
        ov[i] = static_cast<int>(k);
    }
  }
  return owner;
}

// Canonical prompt key: points rounded to 3 decimals, sorted, comma-joined.
inline std::string prompt_key(std::span<const PromptPoint> prompts) {
  std::vector<std::pair<double, double>> pts;
  for (const auto& p : prompts) pts.emplace_back(p.u, p.v);
  std::sort(pts.begin(), pts.end());
  std::string key;
  char buf[96];
  for (const auto& [u, v] : pts) {
    std::snprintf(buf, sizeof(buf), "%.3f:%.3f", u, v);
    if (!key.empty()) key += ',';
    key += buf;
  }
  return key;
}

// Serves precomputed masks. The manifest directory holds PGM masks and an
// index.txt with lines `VIEW_ID PROMPT_KEY FILENAME` (see prompt_key).
class OfflineSegmenter final : public Segmenter {
 public:
  using Index = std::map<std::pair<std::uint32_t, std::string>, std::string>;

  static std::shared_ptr<const Index> load_index(const std::filesystem::path& dir) {
    auto index = std::make_shared<Index>();
    const auto text = detail::read_file((dir / "index.txt").string());
    for (const auto& line : detail::data_lines(text)) {
      const auto tok = detail::split_ws(line);
      if (tok.empty()) continue;
      if (tok.size() != 3) throw FormatError("index.txt: expected 3 fields");
      auto id = detail::parse_int<std::uint32_t>(tok[0]);
      if (!id) throw FormatError("index.txt: bad view id");
      (*index)[{*id, std::string(tok[1])}] = (dir / std::string(tok[2])).string();
    }
    return index;
  }

  OfflineSegmenter(std::shared_ptr<const Index> index, ViewId view)
      : index_(std::move(index)), view_(to_underlying(view)) {}

  Mask segment(std::span<const PromptPoint> prompts, const Image& image) override {
    const auto key = prompt_key(prompts);
    auto it = index_->find({view_, key});
    if (it == index_->end())
      throw SegmenterError("no offline mask for view " + std::to_string(view_) + " prompt " + key);
    auto m = read_mask(it->second);
    if (!m.same_shape(image)) throw SegmenterError("offline mask size mismatch: " + it->second);
    return m;
  }
  bool concurrent_safe() const override { return true; }

 private:
  std::shared_ptr<const Index> index_;
  std::uint32_t view_;
};

// Returns the union of the labelled regions hit by the prompts; prompts that
// fall on no region yield just their own pixel.
class RegionSegmenter final : public Segmenter {
 public:
  explicit RegionSegmenter(std::vector<Mask> regions) : regions_(std::move(regions)) {}

  Mask segment(std::span<const PromptPoint> prompts, const Image& image) override {
    Mask out(image.width(), image.height(), 0);
    for (const auto& p : prompts) {
      bool hit = false;
      for (const auto& r : regions_) {
        if (!mask_contains(r, p.u, p.v)) continue;
        hit = true;
        require_same_shape(r, out, "region mask");
        auto dst = out.values();
        auto src = r.values();
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = (dst[i] || src[i]) ? 1 : 0;
      }
      const int x = nearest_pixel(p.u), y = nearest_pixel(p.v);
      if (!hit && out.contains(x, y)) out(x, y) = 1;
    }
    return out;
  }
  bool concurrent_safe() const override { return true; }

 private:
  std::vector<Mask> regions_;
};

}  // namespace sparsegeo
