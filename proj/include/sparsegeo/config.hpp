#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "sparsegeo/densify.hpp"
#include "sparsegeo/detail/text.hpp"
#include "sparsegeo/error.hpp"
#include "sparsegeo/semantic_masks.hpp"
#include "sparsegeo/warp_supervision.hpp"

namespace sparsegeo {

// Flat `key = value` configuration. Relative paths resolve against the
// directory of the config file; command-line overrides resolve against the
// working directory.
struct SceneConfig {
  std::filesystem::path base_dir = ".";

  std::filesystem::path sfm_dir, images_dir, depth_dir, output_dir;
  std::optional<std::filesystem::path> masks_dir, segmenter_manifest, gt_depth_dir, scene_spec,
      reference_dir, split_file, renders_dir, features_dir, warp_depth_dir, mvs_ply,
      eval_pred_dir, eval_gt_dir, curve_image;
  std::string segmenter = "regions";

  MaskParams masks;
  DensifyParams densify;
  std::size_t virtual_k = 4;
  std::vector<double> virtual_weights{0.25, 0.5, 0.75};
  std::string virtual_sampling = "grid";
  std::size_t virtual_samples = 1;
  double rel_eps = 0.01;
  LossWeights loss;
  int feature_stride = 8;
  bool center_only = false;
  int shift_max = 5;
  std::uint64_t seed = 0;

  // Effective key/value pairs after overrides, for provenance.
  std::map<std::string, std::string> entries;
};

namespace detail {

inline const std::set<std::string>& config_keys() {
  static const std::set<std::string> keys = {
      "sfm_dir", "images_dir", "depth_dir", "output_dir", "masks_dir", "segmenter",
      "segmenter_manifest", "gt_depth_dir", "scene_spec", "reference_dir", "split_file",
      "renders_dir", "features_dir", "warp_depth_dir", "mvs_ply", "eval_pred_dir", "eval_gt_dir",
      "curve_image", "th_sfm", "th_iou", "stride", "voxel", "include_sfm", "virtual_k",
      "virtual_weights", "virtual_sampling", "virtual_samples", "rel_eps", "lambda_i",
      "lambda_pix", "lambda_feat", "feature_stride", "center_only", "shift_max", "seed"};
  return keys;
}

inline const std::set<std::string>& path_keys() {
  static const std::set<std::string> keys = {
      "sfm_dir", "images_dir", "depth_dir", "output_dir", "masks_dir", "segmenter_manifest",
      "gt_depth_dir", "scene_spec", "reference_dir", "split_file", "renders_dir", "features_dir",
      "warp_depth_dir", "mvs_ply", "eval_pred_dir", "eval_gt_dir", "curve_image"};
  return keys;
}

}  // namespace detail

inline std::map<std::string, std::string> parse_config_text(const std::string& text) {
  std::map<std::string, std::string> out;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string uncommented = line.substr(0, line.find('#'));
    const auto body = detail::trim(uncommented);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string_view::npos)
      throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    const auto key = std::string(detail::trim(body.substr(0, eq)));
    const auto value = std::string(detail::trim(body.substr(eq + 1)));
    if (!detail::config_keys().count(key))
      throw ConfigError("line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    out[key] = value;
  }
  return out;
}

// `file_entries` are relative to base_dir; `overrides` to the working dir.
inline SceneConfig build_config(const std::filesystem::path& base_dir,
                                std::map<std::string, std::string> file_entries,
                                const std::map<std::string, std::string>& overrides = {}) {
  namespace fs = std::filesystem;
  SceneConfig c;
  c.base_dir = base_dir;
  std::map<std::string, fs::path> paths;
  for (const auto& [k, v] : file_entries)
    if (detail::path_keys().count(k)) paths[k] = base_dir / v;
  for (const auto& [k, v] : overrides) {
    if (!detail::config_keys().count(k)) throw ConfigError("unknown override --" + k);
    file_entries[k] = v;
    if (detail::path_keys().count(k)) paths[k] = fs::absolute(v);
  }
  c.entries = file_entries;
  const auto& e = file_entries;

  auto has = [&](const char* k) { return e.count(k) > 0; };
  auto num = [&](const char* k, double fallback) {
    if (!has(k)) return fallback;
    auto v = detail::parse_double(e.at(k));
    if (!v) throw ConfigError(std::string(k) + ": not a number '" + e.at(k) + "'");
    return *v;
  };
  auto integer = [&](const char* k, long long fallback) {
    if (!has(k)) return fallback;
    auto v = detail::parse_int<long long>(e.at(k));
    if (!v) throw ConfigError(std::string(k) + ": not an integer '" + e.at(k) + "'");
    return *v;
  };
  auto flag = [&](const char* k, bool fallback) {
    if (!has(k)) return fallback;
    const auto& v = e.at(k);
    if (v == "1" || v == "true" || v == "yes") return true;
    if (v == "0" || v == "false" || v == "no") return false;
    throw ConfigError(std::string(k) + ": not a boolean '" + v + "'");
  };
  auto required = [&](const char* k) {
    auto it = paths.find(k);
    if (it == paths.end()) throw ConfigError(std::string("missing required key ") + k);
    return it->second;
  };
  auto optional = [&](const char* k) -> std::optional<fs::path> {
    auto it = paths.find(k);
    if (it == paths.end()) return std::nullopt;
    return it->second;
  };

  c.sfm_dir = required("sfm_dir");
  c.images_dir = required("images_dir");
  c.depth_dir = required("depth_dir");
  c.output_dir = paths.count("output_dir") ? paths["output_dir"] : base_dir / "out";
  c.masks_dir = optional("masks_dir");
  c.segmenter_manifest = optional("segmenter_manifest");
  c.gt_depth_dir = optional("gt_depth_dir");
  c.scene_spec = optional("scene_spec");
  c.reference_dir = optional("reference_dir");
  c.split_file = optional("split_file");
  c.renders_dir = optional("renders_dir");
  c.features_dir = optional("features_dir");
  c.warp_depth_dir = optional("warp_depth_dir");
  c.mvs_ply = optional("mvs_ply");
  c.eval_pred_dir = optional("eval_pred_dir");
  c.eval_gt_dir = optional("eval_gt_dir");
  c.curve_image = optional("curve_image");
  if (has("segmenter")) c.segmenter = e.at("segmenter");
  if (c.segmenter != "regions" && c.segmenter != "offline")
    throw ConfigError("segmenter must be 'regions' or 'offline'");

  c.masks.th_sfm = static_cast<int>(integer("th_sfm", 10));
  c.masks.th_iou = num("th_iou", 0.7);
  c.densify.stride = static_cast<int>(integer("stride", 1));
  if (has("voxel")) c.densify.voxel = num("voxel", 0.0);
  c.densify.include_sfm = flag("include_sfm", true);
  const auto k = integer("virtual_k", 4);
  if (k < 1) throw ConfigError("virtual_k must be >= 1");
  c.virtual_k = static_cast<std::size_t>(k);
  if (has("virtual_weights")) {
    c.virtual_weights.clear();
    for (auto tok : detail::split(e.at("virtual_weights"), ',')) {
      auto w = detail::parse_double(detail::trim(tok));
      if (!w || *w < 0.0 || *w > 1.0) throw ConfigError("virtual_weights: values must be in [0, 1]");
      c.virtual_weights.push_back(*w);
    }
  }
  if (has("virtual_sampling")) c.virtual_sampling = e.at("virtual_sampling");
  if (c.virtual_sampling != "grid" && c.virtual_sampling != "random")
    throw ConfigError("virtual_sampling must be 'grid' or 'random'");
  const auto samples = integer("virtual_samples", 1);
  if (samples < 1) throw ConfigError("virtual_samples must be >= 1");
  c.virtual_samples = static_cast<std::size_t>(samples);
  c.rel_eps = num("rel_eps", 0.01);
  if (!(c.rel_eps >= 0.0 && c.rel_eps < 1.0)) throw ConfigError("rel_eps must be in [0, 1)");
  c.loss.lambda_i = num("lambda_i", 0.8);
  c.loss.lambda_pix = num("lambda_pix", 1.0);
  c.loss.lambda_feat = num("lambda_feat", 0.04);
  c.feature_stride = static_cast<int>(integer("feature_stride", 8));
  if (c.feature_stride < 1) throw ConfigError("feature_stride must be >= 1");
  c.center_only = flag("center_only", false);
  c.shift_max = static_cast<int>(integer("shift_max", 5));
  if (c.shift_max < 0) throw ConfigError("shift_max must be >= 0");
  const auto seed = integer("seed", 0);
  if (seed < 0) throw ConfigError("seed must be >= 0");
  c.seed = static_cast<std::uint64_t>(seed);

  c.masks.validate();
  c.densify.validate();
  c.loss.validate();
  return c;
}

inline SceneConfig load_config(const std::filesystem::path& path,
                               const std::map<std::string, std::string>& overrides = {}) {
  if (!std::filesystem::exists(path)) throw ConfigError("config file not found: " + path.string());
  const auto text = detail::read_file(path.string());
  return build_config(std::filesystem::absolute(path).parent_path(), parse_config_text(text),
                      overrides);
}

}  // namespace sparsegeo
