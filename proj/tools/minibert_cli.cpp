// minibert: train, ensemble and benchmark miniature BERT-style classifiers.

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "minibert/experiment.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Miniature BERT ensemble text-classification toolkit"};
  app.require_subcommand(1);

  std::string config_path;
  std::string output_dir;
  std::size_t epochs = 0;
  std::size_t batch_size = 0;
  minibert::RunOptions run_options;
  auto* run = app.add_subcommand("run", "Train every variant in a config and write a report");
  run->add_option("config", config_path, "Experiment config (JSON)")->required();
  auto* out_opt = run->add_option("--output-dir", output_dir, "Override output_dir");
  auto* epochs_opt = run->add_option("--epochs", epochs, "Override train.epochs");
  auto* batch_opt = run->add_option("--batch-size", batch_size, "Override train.batch_size");
  run->add_flag("--parallel-members", run_options.parallel_members,
                "Train ensemble members concurrently");
  run->add_flag("--include-optional", run_options.include_optional,
                "Also run variants marked optional");
  run->add_flag("-q,--quiet", run_options.quiet, "Suppress per-epoch progress lines");

  std::string checkpoint_path;
  std::string corpus_path;
  auto* eval = app.add_subcommand("eval", "Evaluate a saved checkpoint on a CSV corpus");
  eval->add_option("checkpoint", checkpoint_path, "Checkpoint directory")->required();
  eval->add_option("corpus", corpus_path, "CSV corpus with header text,label")->required();

  std::vector<std::string> counts;
  double minutes = 0.0;
  auto* metrics = app.add_subcommand("metrics", "Metrics from binary confusion-matrix counts");
  metrics->add_option("counts", counts, "tn fp fn tp")->expected(4);
  auto* minutes_opt = metrics->add_option("--minutes", minutes, "Training minutes for accuracy per minute");

  std::string spec_path;
  std::string out_csv;
  auto* gen = app.add_subcommand("gen-synthetic", "Write a synthetic labeled corpus as CSV");
  gen->add_option("spec", spec_path, "Synthetic spec config (JSON)")->required();
  gen->add_option("out", out_csv, "Output CSV path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return minibert::kExitUsage;
  }

  if (*run) {
    if (*out_opt) run_options.output_dir = output_dir;
    if (*epochs_opt) run_options.epochs = epochs;
    if (*batch_opt) run_options.batch_size = batch_size;
    return minibert::cmd_run(config_path, run_options, std::cout, std::cerr);
  }
  if (*eval) return minibert::cmd_eval(checkpoint_path, corpus_path, std::cout, std::cerr);
  if (*metrics) {
    std::optional<double> m;
    if (*minutes_opt) m = minutes;
    return minibert::cmd_metrics(counts, m, std::cout, std::cerr);
  }
  return minibert::cmd_gen_synthetic(spec_path, out_csv, std::cout, std::cerr);
}
