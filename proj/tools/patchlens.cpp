#include <filesystem>
#include <iostream>

#include <CLI11.hpp>

#include "patchlens/experiment.hpp"
#include "patchlens/kernels.hpp"

namespace fs = std::filesystem;
using namespace patchlens;

int main(int argc, char** argv) {
  CLI::App app{"patchlens: activation patching for neural ranking models"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  std::string matrix_path;
  std::string isa;
  app.add_option("--isa", isa, "kernel variant (scalar, avx2, neon); default: best available");

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "experiment config (JSON)")->required();
    sub->add_option("--out", out_dir, "output directory, overrides output_dir");
  };
  CLI::App* score = app.add_subcommand("score", "score baseline and perturbed inputs");
  CLI::App* patch = app.add_subcommand("patch", "run activation patching and aggregate effects");
  CLI::App* plot = app.add_subcommand("plot", "render aggregate.json as an SVG heatmap");
  CLI::App* hooks = app.add_subcommand("hooks", "list hook names");
  for (CLI::App* sub : {score, patch, plot, hooks}) add_common(sub);
  plot->add_option("--matrix", matrix_path, "matrix JSON to plot (default: <output_dir>/aggregate.json)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (!isa.empty()) {
      bool found = false;
      for (auto candidate : kernels::available_isas()) {
        if (kernels::isa_name(candidate) == isa) {
          kernels::set_active(candidate);
          found = true;
        }
      }
      if (!found) throw ConfigError("--isa: '" + isa + "' is not available on this machine");
    }

    ExperimentConfig config = load_config(config_path);
    if (!out_dir.empty()) config.output_dir = out_dir;

    if (*score) return cmd_score(config, std::cerr);
    if (*patch) return cmd_patch(config, std::cerr);
    if (*hooks) return cmd_hooks(config, std::cout);
    const fs::path matrix = matrix_path.empty() ? config.output_dir / "aggregate.json" : fs::path(matrix_path);
    return cmd_plot(matrix, config.output_dir / "heatmap.svg", std::cerr);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}
