#include <iostream>

#include "CLI11.hpp"
#include "commands.hpp"
#include "segtriage/bundle.hpp"
#include "segtriage/stat_model.hpp"

using namespace segtriage;

int main(int argc, char** argv) {
  CLI::App app{"segtriage: uncertainty-based triage of segmentation predictions"};
  app.require_subcommand(1);

  cli::GenOptions gen;
  std::string layout = "stripes";
  std::optional<double> bg_coupling;
  auto* gen_cmd = app.add_subcommand("gen", "Generate a synthetic corpus of .ubnd bundles");
  gen_cmd->add_option("--output,-o", gen.output, "Output directory")->required();
  gen_cmd->add_option("--seed", gen.config.seed, "Random seed")->capture_default_str();
  gen_cmd->add_option("--num-images,-n", gen.config.num_images, "Number of images")->capture_default_str();
  gen_cmd->add_option("--passes,-t", gen.config.passes, "MC-dropout passes T")->capture_default_str();
  gen_cmd->add_option("--classes,-c", gen.config.classes, "Class count C")->capture_default_str();
  gen_cmd->add_option("--height", gen.config.height, "Image height")->capture_default_str();
  gen_cmd->add_option("--width", gen.config.width, "Image width")->capture_default_str();
  gen_cmd->add_option("--layout", layout, "stripes or blobs")->check(CLI::IsMember({"stripes", "blobs"}))->capture_default_str();
  gen_cmd->add_option("--quality-lo", gen.config.quality_lo, "Lower bound of target mean Dice")->capture_default_str();
  gen_cmd->add_option("--quality-hi", gen.config.quality_hi, "Upper bound of target mean Dice")->capture_default_str();
  gen_cmd->add_option("--coupling", gen.config.coupling, "Error/uncertainty coupling in [0,1]")->capture_default_str();
  gen_cmd->add_option("--background-coupling", bg_coupling, "Coupling for background pixels (default: --coupling)");
  gen_cmd->add_option("--spread", gen.config.class_spread, "Per-class quality spread")->capture_default_str();
  gen_cmd->add_option("--noise", gen.config.noise_scale, "Softmax noise scale")->capture_default_str();

  cli::ValidateOptions validate;
  auto* validate_cmd = app.add_subcommand("validate", "Validate .ubnd bundles");
  validate_cmd->add_option("--input,-i", validate.input, "Bundle file or directory")->required();

  cli::ScoreOptions score;
  auto* score_cmd = app.add_subcommand("score", "Compute Dice, class-wise uncertainty and mean entropy per bundle");
  score_cmd->add_option("--input,-i", score.input, "Bundle file or directory")->required();
  score_cmd->add_option("--output,-o", score.output, "Score file (CSV + .json sidecar, or JSON); stdout if omitted");
  score_cmd->add_option("--format", score.format, "csv or json")->check(CLI::IsMember({"csv", "json"}))->capture_default_str();
  score_cmd->add_option("--jobs,-j", score.jobs, "Worker threads (0 = all cores)");

  cli::CorrelateOptions correlate;
  auto* correlate_cmd = app.add_subcommand("correlate", "Pearson correlations of class uncertainty vs class Dice");
  correlate_cmd->add_option("--input,-i", correlate.input, "Score file")->required();
  correlate_cmd->add_option("--output,-o", correlate.output, "Table output (stdout if omitted)");

  cli::FitOptions fit;
  auto* fit_cmd = app.add_subcommand("fit", "Fit the mean-Dice quality model with significance pruning");
  fit_cmd->add_option("--input,-i", fit.input, "Score file")->required();
  fit_cmd->add_option("--output,-o", fit.output, "Model JSON output");
  fit_cmd->add_option("--alpha", fit.alpha, "Significance level")->check(CLI::Range(0.0, 1.0))->capture_default_str();

  cli::SimulateOptions sim;
  auto* sim_cmd = app.add_subcommand("simulate", "Simulate human-in-the-loop triage against random and oracle policies");
  sim_cmd->add_option("--input,-i", sim.input, "Score file")->required();
  sim_cmd->add_option("--output,-o", sim.output, "Curves CSV (stdout if omitted)");
  sim_cmd->add_option("--report", sim.report, "JSON simulation report");
  sim_cmd->add_option("--fit-count", sim.fit_count, "Images used to fit the model")->capture_default_str();
  sim_cmd->add_option("--seed", sim.seed, "Split seed")->capture_default_str();
  sim_cmd->add_option("--alpha", sim.alpha, "Significance level")->check(CLI::Range(0.0, 1.0))->capture_default_str();
  sim_cmd->add_option("--trials", sim.trials, "Monte-Carlo random baseline trials (0 = analytic)")->capture_default_str();

  cli::ServeOptions serve;
  auto* serve_cmd = app.add_subcommand("serve", "Run the triage HTTP service");
  serve_cmd->add_option("--data-dir", serve.data_dir, "Data directory")->envname("SEGTRIAGE_DATA_DIR");
  serve_cmd->add_option("--bind", serve.bind, "host:port")->envname("SEGTRIAGE_BIND")->capture_default_str();
  serve_cmd->add_option("--palette", serve.palette, "Palette JSON file")->envname("SEGTRIAGE_PALETTE");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return cli::kExitUsage;
  }

  try {
    if (*gen_cmd) {
      gen.config.layout = layout_from_string(layout);
      gen.config.background_coupling = bg_coupling;
      return cli::cmd_gen(gen);
    }
    if (*validate_cmd) return cli::cmd_validate(validate);
    if (*score_cmd) return cli::cmd_score(score);
    if (*correlate_cmd) return cli::cmd_correlate(correlate);
    if (*fit_cmd) return cli::cmd_fit(fit);
    if (*sim_cmd) return cli::cmd_simulate(sim);
    if (*serve_cmd) return cli::cmd_serve(serve);
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return cli::kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return cli::kExitValidation;
  }
  return cli::kExitUsage;
}
