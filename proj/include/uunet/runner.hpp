#pragma once

#include <string>
#include <vector>

#include "uunet/config.hpp"
#include "uunet/metrics.hpp"

namespace uunet {

struct RunArtifacts {
  std::string loss_curve_csv;
  std::string metrics_csv;
  std::string checkpoint;
  std::string snapshot;
  metrics::MetricReport report;
  double stability = 0.0;
  double train_seconds = 0.0;
  std::vector<EpochRecord> records;
};

// Build the configured model and data, train, evaluate, and write
// loss_curve.csv, metrics.csv, checkpoint.bin and config.snapshot.toml into
// cfg.output_dir.
RunArtifacts run_experiment(const ExperimentConfig& cfg, bool resume = false);

// Runs the generator over the evaluation set (no training mode, mean-latent
// sampling is seeded per sample) and scores outputs against the targets.
metrics::MetricReport evaluate_model(UUNetModel& model,
                                     const data::Dataset& eval_set,
                                     std::uint64_t seed);

data::Dataset build_train_dataset(const ExperimentConfig& cfg);
data::Dataset build_eval_dataset(const ExperimentConfig& cfg);

struct ResultsRow {
  std::string model;
  double mse = 0.0;
  double psnr = 0.0;
  double ssim = 0.0;
  double stability = 0.0;
  double train_seconds = 0.0;
  int runs = 0;
};

// Merge metrics.csv files from run directories, averaging repeated runs of
// the same model name; rows come back sorted by model name.
std::vector<ResultsRow> compare_runs(const std::vector<std::string>& dirs);
void write_results_csv(const std::string& path,
                       const std::vector<ResultsRow>& rows);
std::string format_results_table(const std::vector<ResultsRow>& rows);

void write_metrics_csv(const std::string& path, const std::string& model,
                       const metrics::MetricReport& report, double stability,
                       double train_seconds);

}  // namespace uunet
