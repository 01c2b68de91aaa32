#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "sparsegeo/pipeline.hpp"

namespace {

// Turns leftover "--key value" tokens into config overrides.
std::map<std::string, std::string> parse_overrides(const std::vector<std::string>& extras) {
  std::map<std::string, std::string> out;
  for (std::size_t i = 0; i < extras.size(); ++i) {
    const auto& tok = extras[i];
    if (tok.rfind("--", 0) != 0 || tok.size() <= 2)
      throw sparsegeo::ConfigError("unexpected argument " + tok);
    auto key = tok.substr(2);
    if (const auto eq = key.find('='); eq != std::string::npos) {
      out[key.substr(0, eq)] = key.substr(eq + 1);
      continue;
    }
    if (i + 1 >= extras.size()) throw sparsegeo::ConfigError("override " + tok + " has no value");
    out[key] = extras[++i];
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sparse-view geometry preprocessing and supervision tool"};
  app.set_version_flag("--version", sparsegeo::kToolVersion);
  app.require_subcommand(1);

  std::string config_path;
  int jobs = 1;
  std::optional<std::uint64_t> seed;
  app.add_option("--config", config_path, "Scene config file (key=value)");
  app.add_option("--jobs", jobs, "Worker threads")->check(CLI::PositiveNumber);
  app.add_option("--seed", seed, "Seed for randomized sampling");

  const std::vector<std::pair<std::string, std::string>> stages = {
      {"align-depth", "Predict semantic masks and align monocular depth per region"},
      {"densify", "Back-project aligned depth into the dense initial cloud"},
      {"virtual-views", "Interpolate virtual cameras between neighbouring views"},
      {"render", "Render virtual views of a synthetic scene"},
      {"warp", "Forward-warp training views into virtual views and score losses"},
      {"coord-align", "Register test cameras into the input frame"},
      {"eval", "Compute PSNR/SSIM and the pixel-shift curve"},
      {"run-all", "Run every stage, skipping up-to-date ones"},
  };
  std::map<std::string, CLI::App*> subs;
  for (const auto& [name, help] : stages) {
    auto* sub = app.add_subcommand(name, help);
    sub->allow_extras();
    subs[name] = sub;
  }

  std::string synth_preset = "four_view", synth_out;
  std::uint64_t synth_seed = 0;
  auto* synth = app.add_subcommand("synth", "Write a synthetic scene directory");
  synth->add_option("--preset", synth_preset, "two_plane | four_view");
  synth->add_option("--scene-seed", synth_seed, "Scene seed");
  synth->add_option("--out", synth_out, "Destination directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) {
      sparsegeo::synth::generate(sparsegeo::synth::preset(synth_preset, synth_seed), synth_out);
      return 0;
    }
    CLI::App* chosen = nullptr;
    for (const auto& [name, sub] : subs)
      if (sub->parsed()) chosen = sub;
    auto overrides = parse_overrides(chosen->remaining());
    if (seed) overrides["seed"] = std::to_string(*seed);
    if (config_path.empty()) throw sparsegeo::ConfigError("--config is required");
    sparsegeo::Pipeline pipe(sparsegeo::load_config(config_path, overrides), jobs);

    const auto name = chosen->get_name();
    if (name == "align-depth") pipe.align_depth();
    else if (name == "densify") pipe.densify();
    else if (name == "virtual-views") pipe.virtual_views();
    else if (name == "render") pipe.render_virtual();
    else if (name == "warp") pipe.warp();
    else if (name == "coord-align") pipe.coord_align();
    else if (name == "eval") pipe.eval();
    else pipe.run_all();
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(sparsegeo::exit_code_for(e));
  }
}
