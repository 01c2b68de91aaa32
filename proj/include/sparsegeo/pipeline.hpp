#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "sparsegeo/config.hpp"
#include "sparsegeo/coord_align.hpp"
#include "sparsegeo/densify.hpp"
#include "sparsegeo/depth_align.hpp"
#include "sparsegeo/detail/parallel.hpp"
#include "sparsegeo/detail/text.hpp"
#include "sparsegeo/error.hpp"
#include "sparsegeo/eval_metrics.hpp"
#include "sparsegeo/raster_io.hpp"
#include "sparsegeo/semantic_masks.hpp"
#include "sparsegeo/sfm_model.hpp"
#include "sparsegeo/synth_scenes.hpp"
#include "sparsegeo/virtual_views.hpp"
#include "sparsegeo/warp_supervision.hpp"

namespace sparsegeo {

inline constexpr const char* kToolVersion = "sparsegeo 0.1.0";

// Exit codes of the command-line stages.
enum class ExitCode : int { Ok = 0, Config = 1, Io = 2, Degenerate = 3 };

inline ExitCode exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return ExitCode::Config;
  if (dynamic_cast<const IoError*>(&e) || dynamic_cast<const MissingInput*>(&e) ||
      dynamic_cast<const FormatError*>(&e) || dynamic_cast<const CorruptModel*>(&e) ||
      dynamic_cast<const UnsupportedModel*>(&e))
    return ExitCode::Io;
  return ExitCode::Degenerate;
}

namespace fs = std::filesystem;

class Pipeline {
 public:
  Pipeline(SceneConfig cfg, int jobs = 1, std::ostream& log = std::cerr)
      : cfg_(std::move(cfg)), jobs_(std::max(1, jobs)), log_(log) {}

  const SceneConfig& config() const { return cfg_; }
  fs::path out(const std::string& rel = {}) const {
    return rel.empty() ? cfg_.output_dir : cfg_.output_dir / rel;
  }

  // ---- stages -----------------------------------------------------------

  void align_depth(bool skip_if_current = false) {
    validate_align();
    const auto recon = load_reconstruction(cfg_.sfm_dir);
    std::vector<fs::path> inputs = model_files(cfg_.sfm_dir);
    for (const auto& [id, v] : recon.views) {
      inputs.push_back(require_file(cfg_.images_dir / v.image_name));
      inputs.push_back(require_file(depth_path(v)));
      if (cfg_.gt_depth_dir) inputs.push_back(require_file(*cfg_.gt_depth_dir / (stem(v) + ".pfm")));
      if (cfg_.segmenter == "regions")
        for (const auto& f : sorted_files(*cfg_.masks_dir / stem(v), ".pgm")) inputs.push_back(f);
    }
    if (cfg_.segmenter == "offline")
      for (const auto& f : sorted_files(*cfg_.segmenter_manifest, "")) inputs.push_back(f);
    if (skip_if_current && current("align-depth", inputs)) return;

    std::shared_ptr<const OfflineSegmenter::Index> offline;
    if (cfg_.segmenter == "offline") offline = OfflineSegmenter::load_index(*cfg_.segmenter_manifest);

    struct ViewResult {
      const ViewRecord* view = nullptr;
      DepthMap aligned;
      MaskSet masks;
      std::vector<std::size_t> supporters;
      std::vector<std::size_t> mask_index;
      std::vector<std::string> rows;
      std::vector<std::string> warnings;
      std::optional<double> mae;
    };
    std::vector<const ViewRecord*> views;
    for (const auto& [id, v] : recon.views) views.push_back(&v);
    std::vector<ViewResult> results(views.size());
    std::mutex seg_mu;

    detail::parallel_for(views.size(), jobs_, [&](std::size_t i) {
      const auto& view = *views[i];
      const auto& intr = recon.camera_of(view);
      auto& r = results[i];
      r.view = &view;
      const auto image = read_image((cfg_.images_dir / view.image_name).string());
      const auto mono = read_depth_map(depth_path(view).string());
      if (!image.same_shape(intr.width, intr.height) || !mono.same_shape(intr.width, intr.height))
        throw ShapeError("image/depth of " + view.image_name + " do not match camera");
      const auto vis = order_by_track_length(visible_points(view, recon), recon);

      std::unique_ptr<Segmenter> seg;
      if (offline) {
        seg = std::make_unique<OfflineSegmenter>(offline, view.view_id);
      } else {
        std::vector<Mask> regions;
        for (const auto& f : sorted_files(*cfg_.masks_dir / stem(view), ".pgm"))
          regions.push_back(read_mask(f.string()));
        seg = std::make_unique<RegionSegmenter>(std::move(regions));
      }
      SemanticMasks sem;
      if (seg->concurrent_safe()) {
        sem = predict_semantic_masks(vis, image, *seg, cfg_.masks);
      } else {
        std::lock_guard lock(seg_mu);
        sem = predict_semantic_masks(vis, image, *seg, cfg_.masks);
      }
      const auto counts = sem.supporter_counts();
      const auto fits = align_semantic(mono, sem.set, sem.supporters);
      for (const auto& f : fits.failures)
        r.warnings.push_back(view.image_name + " mask " + std::to_string(f.mask_index) + ": " + f.reason);
      if (!fits.fits.empty()) {
        r.aligned = composite_fragments(fits, sem.set, counts, intr.width, intr.height);
        for (const auto& f : fits.fits) {
          r.masks.masks.push_back(sem.set.masks[f.mask_index]);
          r.supporters.push_back(counts[f.mask_index]);
          r.mask_index.push_back(f.mask_index);
          r.rows.push_back(report_row(view, static_cast<long long>(f.mask_index), f.fit, f.n_samples,
                                      f.residual_rms));
        }
      } else {
        r.warnings.push_back(view.image_name + ": no semantic mask aligned (" +
                             std::to_string(sem.set.size()) +
                             " found); falling back to image-level alignment");
        const auto img = align_image(mono, vis);
        r.aligned = img.aligned;
        r.masks.masks.push_back(Mask(intr.width, intr.height, 1));
        r.supporters.push_back(vis.size());
        r.mask_index.push_back(0);
        r.rows.push_back(report_row(view, -1, img.fit, img.n_samples, img.residual_rms));
      }
      if (cfg_.gt_depth_dir) {
        const auto gt = read_depth_map((*cfg_.gt_depth_dir / (stem(view) + ".pfm")).string());
        r.mae = alignment_error_map(r.aligned, gt).mae;
      }
    });

    fs::create_directories(out("aligned"));
    std::string report = "# align-depth report\n# th_sfm=" + std::to_string(cfg_.masks.th_sfm) +
                         " th_iou=" + detail::fmt_double(cfg_.masks.th_iou) + "\n" +
                         "# VIEW_ID IMAGE MASK_INDEX S T N_SAMPLES RESIDUAL_RMS"
                         " (MASK_INDEX -1 = image-level fallback)\n";
    for (const auto& r : results) {
      const auto s = stem(*r.view);
      write_depth_map(r.aligned, out("aligned/" + s + ".pfm").string());
      const auto mdir = out("masks/" + s);
      if (fs::exists(mdir)) fs::remove_all(mdir);
      fs::create_directories(mdir);
      std::string listing = "# MASK_INDEX SUPPORTERS\n";
      for (std::size_t k = 0; k < r.masks.size(); ++k) {
        char name[32];
        std::snprintf(name, sizeof(name), "mask_%03zu.pgm", r.mask_index[k]);
        write_mask(r.masks.masks[k], (mdir / name).string());
        listing += std::to_string(r.mask_index[k]) + " " + std::to_string(r.supporters[k]) + "\n";
      }
      detail::write_file((mdir / "masks.txt").string(), listing);
      for (const auto& row : r.rows) report += row;
    }
    for (const auto& r : results) {
      for (const auto& w : r.warnings) {
        report += "# warning " + w + "\n";
        log_ << "warning: " << w << "\n";
      }
      if (r.mae) report += "# mae " + r.view->image_name + " " + detail::fmt_double(*r.mae) + "\n";
    }
    detail::write_file(out("align_report.txt").string(), report);
    stamp("align-depth", inputs);
  }

  void densify(bool skip_if_current = false) {
    require_dir(cfg_.sfm_dir, "sfm_dir");
    require_dir(cfg_.images_dir, "images_dir");
    const auto recon = load_reconstruction(cfg_.sfm_dir);
    std::vector<fs::path> inputs = model_files(cfg_.sfm_dir);
    for (const auto& [id, v] : recon.views) {
      inputs.push_back(require_file(cfg_.images_dir / v.image_name));
      inputs.push_back(require_file(out("aligned/" + stem(v) + ".pfm")));
      const auto listing = require_file(out("masks/" + stem(v) + "/masks.txt"));
      inputs.push_back(listing);
      for (const auto& f : sorted_files(listing.parent_path(), ".pgm")) inputs.push_back(f);
    }
    if (cfg_.mvs_ply) inputs.push_back(require_file(*cfg_.mvs_ply));
    if (skip_if_current && current("densify", inputs)) return;

    std::vector<AlignedView> aligned;
    std::map<ViewId, Image> images;
    for (const auto& [id, v] : recon.views) {
      AlignedView av;
      av.view_id = id;
      av.depth = read_depth_map(out("aligned/" + stem(v) + ".pfm").string());
      const auto mdir = out("masks/" + stem(v));
      for (const auto& line : detail::data_lines(detail::read_file((mdir / "masks.txt").string()))) {
        const auto tok = detail::split_ws(line);
        if (tok.empty()) continue;
        auto idx = detail::parse_int<std::size_t>(tok.at(0));
        auto n = tok.size() > 1 ? detail::parse_int<std::size_t>(tok[1]) : std::nullopt;
        if (!idx || !n) throw FormatError((mdir / "masks.txt").string() + ": bad line");
        char name[32];
        std::snprintf(name, sizeof(name), "mask_%03zu.pgm", *idx);
        av.masks.masks.push_back(read_mask(require_file(mdir / name).string()));
        av.supporter_counts.push_back(*n);
      }
      aligned.push_back(std::move(av));
      images[id] = read_image((cfg_.images_dir / v.image_name).string());
    }
    std::optional<PointCloud> mvs;
    if (cfg_.mvs_ply) mvs = read_point_cloud(cfg_.mvs_ply->string());
    const auto cloud = build_dense_cloud(recon, std::move(aligned), images, cfg_.densify,
                                         mvs ? &*mvs : nullptr, jobs_);
    fs::create_directories(out());
    write_point_cloud(cloud, out("dense.ply").string());
    log_ << "densify: " << cloud.size() << " points\n";
    stamp("densify", inputs);
  }

  void virtual_views(bool skip_if_current = false) {
    require_dir(cfg_.sfm_dir, "sfm_dir");
    const auto inputs = model_files(cfg_.sfm_dir);
    if (skip_if_current && current("virtual-views", inputs)) return;
    const auto recon = load_reconstruction(cfg_.sfm_dir);
    VirtualViewPlan plan;
    plan.k = cfg_.virtual_k;
    plan.weights = cfg_.virtual_weights;
    if (cfg_.virtual_sampling == "random") {
      plan.seed = cfg_.seed;
      plan.samples_per_view = cfg_.virtual_samples;
    }
    const auto views = generate_virtual_views(recon, plan);
    fs::create_directories(out());
    detail::write_file(out("virtual_views.txt").string(), format_virtual_manifest(views, plan.k));
    stamp("virtual-views", inputs);
  }

  // Renders every virtual view of the manifest from the synthetic scene
  // description (image and depth), standing in for the splatting renderer.
  void render_virtual(bool skip_if_current = false) {
    if (!cfg_.scene_spec) throw ConfigError("render needs scene_spec");
    const std::vector<fs::path> inputs = {require_file(*cfg_.scene_spec),
                                          require_file(out("virtual_views.txt"))};
    if (skip_if_current && current("render", inputs)) return;
    const auto spec = load_scene_spec(*cfg_.scene_spec);
    const auto manifest = parse_virtual_manifest(detail::read_file(out("virtual_views.txt").string()));
    fs::create_directories(out("renders"));
    std::vector<synth::Render> renders(manifest.views.size());
    detail::parallel_for(manifest.views.size(), jobs_, [&](std::size_t i) {
      renders[i] = synth::render(spec, manifest.views[i].pose, manifest.views[i].intr);
    });
    for (std::size_t i = 0; i < renders.size(); ++i) {
      write_image(renders[i].image, out("renders/" + virtual_name(i, ".ppm")).string());
      write_depth_map(renders[i].depth, out("renders/" + virtual_name(i, ".pfm")).string());
    }
    stamp("render", inputs);
  }

  void warp(bool skip_if_current = false) {
    require_dir(cfg_.sfm_dir, "sfm_dir");
    require_dir(cfg_.images_dir, "images_dir");
    const auto manifest_path = require_file(out("virtual_views.txt"));
    const auto recon = load_reconstruction(cfg_.sfm_dir);
    const auto manifest = parse_virtual_manifest(detail::read_file(manifest_path.string()));
    const fs::path renders = renders_dir();
    const fs::path depth_dir = cfg_.warp_depth_dir ? *cfg_.warp_depth_dir : out("aligned");

    std::vector<fs::path> inputs = model_files(cfg_.sfm_dir);
    inputs.push_back(manifest_path);
    for (const auto& [id, v] : recon.views) {
      inputs.push_back(require_file(cfg_.images_dir / v.image_name));
      inputs.push_back(require_file(depth_dir / (stem(v) + ".pfm")));
      if (cfg_.features_dir) inputs.push_back(require_file(*cfg_.features_dir / ("train_" + stem(v) + ".fmap")));
    }
    for (std::size_t i = 0; i < manifest.views.size(); ++i) {
      inputs.push_back(require_file(renders / virtual_name(i, ".ppm")));
      inputs.push_back(require_file(renders / virtual_name(i, ".pfm")));
      if (cfg_.features_dir) inputs.push_back(require_file(*cfg_.features_dir / virtual_name(i, ".fmap")));
    }
    if (skip_if_current && current("warp", inputs)) return;

    struct Row {
      std::size_t splats = 0, supervised = 0, pairs = 0;
      double l_pix = 0.0, l_feat = 0.0;
    };
    std::vector<Row> rows(manifest.views.size());
    fs::create_directories(out("warp"));
    detail::parallel_for(manifest.views.size(), jobs_, [&](std::size_t i) {
      const auto& vv = manifest.views[i];
      auto it = recon.views.find(vv.source_view_id);
      if (it == recon.views.end()) throw MissingInput("manifest references unknown view");
      const auto& src = it->second;
      const auto src_image = read_image((cfg_.images_dir / src.image_name).string());
      const auto src_depth = read_depth_map((depth_dir / (stem(src) + ".pfm")).string());
      const auto rendered = read_image((renders / virtual_name(i, ".ppm")).string());
      const auto rendered_depth = read_depth_map((renders / virtual_name(i, ".pfm")).string());
      const auto result = forward_warp(src_image, src_depth, {src.pose, recon.camera_of(src)},
                                       {vv.pose, vv.intr});
      const auto ocl = occlusion_mask(rendered_depth, result.warped_depth, cfg_.rel_eps);
      auto& row = rows[i];
      row.splats = result.correspondences.size();
      Mask support(ocl.width(), ocl.height(), 0);
      for (std::size_t p = 0; p < ocl.size(); ++p)
        support.values()[p] = ocl.values()[p] && result.hole_mask.values()[p];
      row.supervised = count_set(support);
      row.l_pix = pixel_loss(rendered, result, ocl);

      FeatureMap f_src, f_dst;
      if (cfg_.features_dir) {
        f_src = read_feature_map((*cfg_.features_dir / ("train_" + stem(src) + ".fmap")).string());
        f_dst = read_feature_map((*cfg_.features_dir / virtual_name(i, ".fmap")).string());
        if (f_src.stride != f_dst.stride) throw ShapeError("feature maps use different strides");
      } else {
        f_src = cell_color_features(src_image, cfg_.feature_stride);
        f_dst = cell_color_features(rendered, cfg_.feature_stride);
      }
      // Only correspondences the occlusion test keeps feed the feature loss.
      std::vector<Correspondence> kept;
      for (const auto& c : result.correspondences)
        if (ocl(c.dst.x, c.dst.y)) kept.push_back(c);
      const auto pairs = map_correspondences(kept, f_src.stride);
      row.pairs = pairs.size();
      row.l_feat = feature_loss(f_dst, f_src, pairs);

      write_image(result.warped_image, out("warp/" + virtual_name(i, ".ppm")).string());
      write_depth_map(result.warped_depth, out("warp/" + virtual_name(i, ".pfm")).string());
      write_mask(result.hole_mask, out("warp/" + virtual_name(i, "_holes.pgm")).string());
      write_mask(ocl, out("warp/" + virtual_name(i, "_ocl.pgm")).string());
    });

    using detail::fmt_double;
    std::string csv = "# lambda_i=" + fmt_double(cfg_.loss.lambda_i) + " lambda_pix=" +
                      fmt_double(cfg_.loss.lambda_pix) + " lambda_feat=" +
                      fmt_double(cfg_.loss.lambda_feat) + " rel_eps=" + fmt_double(cfg_.rel_eps) + "\n" +
                      "index,source_id,neighbor_id,weight,n_splats,n_supervised,n_cell_pairs,"
                      "l_pix,l_feat,l_geo\n";
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const auto& vv = manifest.views[i];
      const auto& r = rows[i];
      // Photometric terms belong to the trainer; l_geo is the geometric part.
      const double geo = total_loss(0.0, 0.0, r.l_pix, r.l_feat, cfg_.loss);
      csv += std::to_string(i) + "," + std::to_string(to_underlying(vv.source_view_id)) + "," +
             std::to_string(to_underlying(vv.neighbor_view_id)) + "," + fmt_double(vv.weight) + "," +
             std::to_string(r.splats) + "," + std::to_string(r.supervised) + "," +
             std::to_string(r.pairs) + "," + fmt_double(r.l_pix) + "," + fmt_double(r.l_feat) + "," +
             fmt_double(geo) + "\n";
    }
    detail::write_file(out("warp/losses.csv").string(), csv);
    stamp("warp", inputs);
  }

  void coord_align(bool skip_if_current = false) {
    if (!cfg_.reference_dir) throw ConfigError("coord-align needs reference_dir");
    if (!cfg_.split_file) throw ConfigError("coord-align needs split_file");
    require_dir(*cfg_.reference_dir, "reference_dir");
    require_dir(cfg_.sfm_dir, "sfm_dir");
    std::vector<fs::path> inputs = model_files(*cfg_.reference_dir);
    for (const auto& f : model_files(cfg_.sfm_dir)) inputs.push_back(f);
    inputs.push_back(require_file(*cfg_.split_file));
    if (skip_if_current && current("coord-align", inputs)) return;

    const auto reference = load_reconstruction(*cfg_.reference_dir);
    const auto input = load_reconstruction(cfg_.sfm_dir);
    std::vector<std::string> train, test;
    for (const auto& line : detail::data_lines(detail::read_file(cfg_.split_file->string()))) {
      const auto tok = detail::split_ws(line);
      if (tok.empty()) continue;
      if (tok.size() != 2 || (tok[0] != "train" && tok[0] != "test"))
        throw FormatError("split file: expected 'train|test NAME'");
      (tok[0] == "train" ? train : test).emplace_back(tok[1]);
    }
    auto named = [](const SfmReconstruction& r, const std::vector<std::string>& names) {
      std::vector<NamedPose> out;
      for (const auto& n : names) {
        const auto* v = r.find_view(n);
        if (!v) throw NameMismatch("camera " + n + " missing from registration");
        out.push_back({n, v->pose});
      }
      return out;
    };
    const auto ref_train = named(reference, train);
    std::vector<NamedPose> input_all;
    for (const auto& [id, v] : input.views) input_all.push_back({v.image_name, v.pose});
    const auto input_train = match_by_name(ref_train, input_all);
    const auto ref_test = named(reference, test);

    auto poses = [](const std::vector<NamedPose>& v) {
      std::vector<CameraPose> out;
      for (const auto& p : v) out.push_back(p.pose);
      return out;
    };
    const auto frames = align_cameras(poses(ref_train), poses(input_train), AlignMode::CameraFrames);
    const auto centers = align_cameras(poses(ref_train), poses(input_train), AlignMode::CentersOnly);
    const auto& chosen = cfg_.center_only ? centers : frames;
    const auto err_frames = alignment_errors(apply_to_views(ref_train, frames), input_train);
    const auto err_centers = alignment_errors(apply_to_views(ref_train, centers), input_train);

    std::vector<ViewRecord> moved;
    for (const auto& n : test) {
      ViewRecord v = *reference.find_view(n);
      v.pose = transform_pose(v.pose, chosen);
      v.observations.clear();
      moved.push_back(v);
    }
    std::vector<const ViewRecord*> ptrs;
    for (const auto& v : moved) ptrs.push_back(&v);

    using detail::fmt_double;
    std::string report = "# coord-align report\n";
    report += std::string("mode ") + (cfg_.center_only ? "centers_only" : "camera_frames") + "\n";
    report += "frame_size_reference " + fmt_double(camera_point_set(poses(ref_train)).frame_size) + "\n";
    report += "frame_size_input " + fmt_double(camera_point_set(poses(input_train)).frame_size) + "\n";
    report += "scale " + fmt_double(chosen.s) + "\nrotation";
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) report += " " + fmt_double(chosen.R(r, c));
    report += "\ntranslation " + fmt_double(chosen.t.x()) + " " + fmt_double(chosen.t.y()) + " " +
              fmt_double(chosen.t.z()) + "\n";
    report += "# METHOD E_R_MEDIAN E_R_MEAN E_T_MEDIAN E_T_MEAN (degrees, scene units)\n";
    auto err_row = [&](const char* name, const AlignmentErrors& e) {
      return std::string(name) + " " + fmt_double(e.e_r_median) + " " + fmt_double(e.e_r_mean) +
             " " + fmt_double(e.e_t_median) + " " + fmt_double(e.e_t_mean) + "\n";
    };
    report += err_row("centers_only", err_centers);
    report += err_row("camera_frames", err_frames);

    fs::create_directories(out("coord_align"));
    detail::write_file(out("coord_align/test_cameras.txt").string(),
                       "# test cameras in the input registration frame\n" + format_images(ptrs));
    detail::write_file(out("coord_align/report.txt").string(), report);
    stamp("coord-align", inputs);
  }

  void eval(bool skip_if_current = false) {
    const fs::path pred = cfg_.eval_pred_dir ? *cfg_.eval_pred_dir : out("warp");
    const fs::path gt = cfg_.eval_gt_dir ? *cfg_.eval_gt_dir : renders_dir();
    if (!fs::is_directory(gt)) throw MissingInput("missing " + gt.string());
    std::vector<fs::path> inputs;
    const auto gts = sorted_files(gt, ".ppm");
    for (const auto& g : gts) {
      inputs.push_back(g);
      inputs.push_back(require_file(pred / g.filename()));
    }
    fs::path curve_src;
    if (cfg_.curve_image) {
      curve_src = *cfg_.curve_image;
    } else {
      const auto recon = load_reconstruction(cfg_.sfm_dir);
      if (!recon.views.empty()) curve_src = cfg_.images_dir / recon.views.begin()->second.image_name;
    }
    if (!curve_src.empty()) inputs.push_back(require_file(curve_src));
    if (skip_if_current && current("eval", inputs)) return;

    std::vector<std::string> lines(gts.size());
    detail::parallel_for(gts.size(), jobs_, [&](std::size_t i) {
      const auto a = read_image((pred / gts[i].filename()).string());
      const auto b = read_image(gts[i].string());
      lines[i] = gts[i].filename().string() + "," + detail::fmt_double(psnr(a, b)) + "," +
                 detail::fmt_double(ssim(a, b)) + "\n";
    });
    std::string csv = "name,psnr,ssim\n";
    for (const auto& l : lines) csv += l;
    fs::create_directories(out("eval"));
    detail::write_file(out("eval/metrics.csv").string(), csv);
    if (!curve_src.empty()) {
      const auto curve = metric_shift_curve(read_image(curve_src.string()), cfg_.shift_max);
      detail::write_file(out("eval/shift_curve.csv").string(), curve.to_csv());
    }
    stamp("eval", inputs);
  }

  // Chains every stage, skipping those whose stamp matches, and writes a
  // provenance file covering all external inputs.
  void run_all() {
    validate_align();
    if (cfg_.reference_dir && !cfg_.split_file) throw ConfigError("reference_dir needs split_file");
    if (cfg_.reference_dir) require_dir(*cfg_.reference_dir, "reference_dir");
    if (!cfg_.renders_dir && !cfg_.scene_spec)
      throw ConfigError("run-all needs renders_dir or scene_spec for the warp stage");
    align_depth(true);
    densify(true);
    virtual_views(true);
    if (!cfg_.renders_dir) render_virtual(true);
    warp(true);
    if (cfg_.reference_dir) coord_align(true);
    eval(true);

    std::string prov = std::string("tool ") + kToolVersion + "\nconfig " + config_hash() + "\n";
    std::vector<fs::path> inputs = model_files(cfg_.sfm_dir);
    for (const auto& kv : external_inputs_) inputs.push_back(kv);
    std::sort(inputs.begin(), inputs.end());
    inputs.erase(std::unique(inputs.begin(), inputs.end()), inputs.end());
    for (const auto& f : inputs) prov += "input " + label(f) + " " + file_hash(f) + "\n";
    fs::create_directories(out());
    detail::write_file(out("provenance.txt").string(), prov);
  }

  std::string config_hash() const {
    std::string canon;
    for (const auto& [k, v] : cfg_.entries)
      if (k != "output_dir") canon += k + "=" + v + "\n";
    return detail::hex64(detail::fnv1a(canon));
  }

  // Coarse per-cell mean color (centered on mid-gray), used when no feature
  // maps are supplied.
  static FeatureMap cell_color_features(const Image& img, int stride) {
    auto f = FeatureMap::covering(3, img.width(), img.height(), stride);
    for (int cy = 0; cy < f.fh; ++cy)
      for (int cx = 0; cx < f.fw; ++cx) {
        double acc[3] = {0, 0, 0};
        int n = 0;
        for (int y = cy * stride; y < std::min(img.height(), (cy + 1) * stride); ++y)
          for (int x = cx * stride; x < std::min(img.width(), (cx + 1) * stride); ++x, ++n)
            for (std::size_t c = 0; c < 3; ++c) acc[c] += img(x, y)[c] / 255.0;
        for (int c = 0; c < 3; ++c)
          f.at(c, cx, cy) = static_cast<float>(acc[c] / n - 0.5);
      }
    return f;
  }

  static synth::SceneSpec load_scene_spec(const fs::path& path) {
    std::string name;
    std::uint64_t seed = 0;
    for (const auto& line : detail::data_lines(detail::read_file(path.string()))) {
      const auto body = detail::trim(line);
      if (body.empty()) continue;
      const auto eq = body.find('=');
      if (eq == std::string_view::npos) throw ConfigError(path.string() + ": expected key=value");
      const auto key = detail::trim(body.substr(0, eq));
      const auto value = detail::trim(body.substr(eq + 1));
      if (key == "preset") {
        name = std::string(value);
      } else if (key == "seed") {
        auto s = detail::parse_int<std::uint64_t>(value);
        if (!s) throw ConfigError(path.string() + ": bad seed");
        seed = *s;
      } else {
        throw ConfigError(path.string() + ": unknown key " + std::string(key));
      }
    }
    return synth::preset(name, seed);
  }

  static std::string virtual_name(std::size_t i, const char* suffix) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "virtual_%04zu%s", i, suffix);
    return buf;
  }

 private:
  static std::string stem(const ViewRecord& v) { return synth::stem_of(v.image_name); }
  fs::path depth_path(const ViewRecord& v) const { return cfg_.depth_dir / (stem(v) + ".pfm"); }
  fs::path renders_dir() const { return cfg_.renders_dir ? *cfg_.renders_dir : out("renders"); }

  static void require_dir(const fs::path& p, const char* key) {
    if (!fs::is_directory(p)) throw ConfigError(std::string(key) + " does not exist: " + p.string());
  }
  static fs::path require_file(const fs::path& p) {
    if (!fs::is_regular_file(p)) throw MissingInput("missing " + p.string());
    return p;
  }
  static std::vector<fs::path> sorted_files(const fs::path& dir, const std::string& ext) {
    std::vector<fs::path> out;
    if (!fs::is_directory(dir)) return out;
    for (const auto& e : fs::directory_iterator(dir))
      if (e.is_regular_file() && (ext.empty() || e.path().extension() == ext)) out.push_back(e.path());
    std::sort(out.begin(), out.end());
    return out;
  }
  static std::vector<fs::path> model_files(const fs::path& dir) {
    return {require_file(dir / "cameras.txt"), require_file(dir / "images.txt"),
            require_file(dir / "points3D.txt")};
  }

  void validate_align() const {
    require_dir(cfg_.sfm_dir, "sfm_dir");
    require_dir(cfg_.images_dir, "images_dir");
    require_dir(cfg_.depth_dir, "depth_dir");
    if (cfg_.segmenter == "regions") {
      if (!cfg_.masks_dir) throw ConfigError("segmenter=regions needs masks_dir");
      require_dir(*cfg_.masks_dir, "masks_dir");
    } else {
      if (!cfg_.segmenter_manifest) throw ConfigError("segmenter=offline needs segmenter_manifest");
      require_dir(*cfg_.segmenter_manifest, "segmenter_manifest");
    }
    if (cfg_.gt_depth_dir) require_dir(*cfg_.gt_depth_dir, "gt_depth_dir");
  }

  std::string report_row(const ViewRecord& v, long long mask, const ScaleShift& fit,
                         std::size_t n, double rms) const {
    using detail::fmt_double;
    return std::to_string(to_underlying(v.view_id)) + " " + v.image_name + " " +
           std::to_string(mask) + " " + fmt_double(fit.s) + " " + fmt_double(fit.t) + " " +
           std::to_string(n) + " " + fmt_double(rms) + "\n";
  }

  // Stable name for a path: relative to the output dir (prefixed "@out/"),
  // else relative to the config dir, else absolute.
  std::string label(const fs::path& p) const {
    const auto abs = fs::weakly_canonical(fs::absolute(p));
    auto under = [&](const fs::path& root) -> std::optional<std::string> {
      const auto r = fs::weakly_canonical(fs::absolute(root));
      auto rel = abs.lexically_relative(r);
      if (rel.empty() || *rel.begin() == "..") return std::nullopt;
      return rel.generic_string();
    };
    if (auto r = under(cfg_.output_dir)) return "@out/" + *r;
    if (auto r = under(cfg_.base_dir)) return *r;
    return abs.generic_string();
  }
  static std::string file_hash(const fs::path& p) {
    return detail::hex64(detail::fnv1a(detail::read_file(p.string())));
  }

  std::string stamp_text(const std::string& stage, const std::vector<fs::path>& inputs) const {
    std::string s = "stage " + stage + "\ntool " + kToolVersion + "\nconfig " + config_hash() + "\n";
    for (const auto& f : inputs) s += "input " + label(f) + " " + file_hash(f) + "\n";
    return s;
  }
  bool current(const std::string& stage, const std::vector<fs::path>& inputs) {
    const auto path = out(stage + ".done");
    note_inputs(inputs);
    if (!fs::exists(path) || detail::read_file(path.string()) != stamp_text(stage, inputs)) return false;
    log_ << stage << ": up to date\n";
    return true;
  }
  void stamp(const std::string& stage, const std::vector<fs::path>& inputs) {
    note_inputs(inputs);
    stages_run_.push_back(stage);
    fs::create_directories(out());
    detail::write_file(out(stage + ".done").string(), stamp_text(stage, inputs));
  }
  void note_inputs(const std::vector<fs::path>& inputs) {
    for (const auto& f : inputs)
      if (label(f).rfind("@out/", 0) != 0) external_inputs_.push_back(f);
  }

  SceneConfig cfg_;
  int jobs_;
  std::ostream& log_;
  std::vector<std::string> stages_run_;
  std::vector<fs::path> external_inputs_;
};

}  // namespace sparsegeo
