// spatialqa command-line interface.
//
//   spatialqa generate --config run.json [--seed N] [--out DIR]
//   spatialqa eval --gold gold.jsonl --pred pred.jsonl --report report.json
//   spatialqa validate --scene scene.json
//   spatialqa inspect --grid --scene scene.json --out grid.pgm

#include "spatialqa/spatialqa.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

namespace fs = std::filesystem;
using namespace spatialqa;

namespace {

int cmd_generate(const std::string& config_path, std::optional<std::uint64_t> seed,
                 std::optional<std::string> out, unsigned workers) {
  RunConfig config;
  try {
    config = load_config(config_path);
    if (seed) config.seed = *seed;
    if (out) config.output_dir = fs::absolute(*out).string();
    config.validate();
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  try {
    return run_generate(config, std::cerr, workers).exit_code;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}

int cmd_validate(const std::string& scene_path) {
  try {
    const Scene scene = load_scene(scene_path);
    std::cout << scene_path << ": ok (" << scene.objects.size() << " objects, "
              << scene.views.size() << " views)\n";
    return 0;
  } catch (const ValidationError& e) {
    std::cerr << scene_path << ": invalid\n";
    for (const auto& v : e.violations()) std::cerr << "  " << v << '\n';
    return 1;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}

int cmd_inspect(const std::string& scene_path, const std::string& out_path, double resolution,
                std::optional<std::string> support_id) {
  try {
    const Scene scene = load_scene(scene_path);
    OccupancyGrid grid;
    if (support_id) {
      const auto* obj = scene.find_object(*support_id);
      if (!obj) {
        std::cerr << "error: no object '" << *support_id << "' in scene\n";
        return 2;
      }
      const auto supports = support_surfaces(scene, {obj->label});
      const auto it = std::find_if(supports.begin(), supports.end(),
                                   [&](const SupportSurface& s) { return s.object.id == obj->id; });
      grid = build_support_grid(scene, *it, resolution);
    } else {
      double lo = std::numeric_limits<double>::infinity(), hi = -lo;
      for (const auto& o : scene.objects) {
        lo = std::min(lo, o.box.z_min());
        hi = std::max(hi, o.box.z_max());
      }
      grid = build_occupancy(scene, resolution, {lo, hi});
    }
    std::ofstream out(out_path, std::ios::binary);
    if (!out) {
      std::cerr << "error: cannot write " << out_path << '\n';
      return 2;
    }
    write_pgm(grid, out);
    std::cout << "grid " << grid.nx << "x" << grid.ny << " @ " << grid.resolution << " m, "
              << grid.occupied_count() << " occupied cells, band [" << grid.z_band.z_min << ", "
              << grid.z_band.z_max << "] -> " << out_path << '\n';
    for (const auto& w : grid.warnings) std::cerr << "warning: " << w << '\n';
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spatial-reasoning QA generation and scoring"};
  app.require_subcommand(1);
  app.set_version_flag("--version", SPATIALQA_VERSION);

  auto* gen = app.add_subcommand("generate", "Generate QA JSONL from scene files");
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  unsigned workers = 0;
  gen->add_option("--config", config_path, "Run configuration (JSON)")->required()->check(CLI::ExistingFile);
  gen->add_option("--seed", seed, "Override the configured seed");
  gen->add_option("--out", out_dir, "Override the output directory");
  gen->add_option("--workers", workers, "Worker threads (default: SPATIALQA_WORKERS or all cores)");

  auto* ev = app.add_subcommand("eval", "Score predictions against a generated QA file");
  std::string gold, pred, report;
  EvalOptions eval_opts;
  ev->add_option("--gold", gold, "Generated QA JSONL")->required();
  ev->add_option("--pred", pred, "Prediction JSONL")->required();
  ev->add_option("--report", report, "Report JSON path (text table written alongside)")->required();
  ev->add_flag("--any-point", eval_opts.any_point, "Accept a point answer if any point is inside");

  auto* val = app.add_subcommand("validate", "Check a scene file against the schema and invariants");
  std::string scene_path;
  val->add_option("--scene", scene_path, "Scene JSON")->required();

  auto* ins = app.add_subcommand("inspect", "Dump debug artifacts for a scene");
  bool grid_flag = false;
  std::string inspect_scene, pgm_path;
  double resolution = 0.05;
  std::optional<std::string> support_id;
  ins->add_flag("--grid", grid_flag, "Write the top-down occupancy grid as PGM")->required();
  ins->add_option("--scene", inspect_scene, "Scene JSON")->required();
  ins->add_option("--out", pgm_path, "Output PGM path")->required();
  ins->add_option("--resolution", resolution, "Cell size in meters")->check(CLI::PositiveNumber);
  ins->add_option("--support", support_id, "Rasterize the band above this support object");

  CLI11_PARSE(app, argc, argv);

  if (*gen) return cmd_generate(config_path, seed, out_dir, workers);
  if (*ev) return run_eval(gold, pred, report, std::cout, std::cerr, eval_opts);
  if (*val) return cmd_validate(scene_path);
  if (*ins) return cmd_inspect(inspect_scene, pgm_path, resolution, support_id);
  return 1;
}
