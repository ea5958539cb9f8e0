#include "uunet/runner.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "uunet/rng.hpp"

namespace uunet {

namespace fs = std::filesystem;

data::Dataset build_train_dataset(const ExperimentConfig& cfg) {
  if (cfg.data_source == "synthetic") {
    data::SyntheticTaskConfig s;
    s.task = data::synthetic_task_from_string(cfg.task);
    s.n_samples = cfg.n_samples;
    s.size = cfg.image_size;
    s.channels = cfg.image_channels;
    s.seed = cfg.seed;
    return data::make_synthetic(s);
  }
  const int size = cfg.data_size > 0 ? cfg.data_size : cfg.image_size;
  return data::load_paired_dir(cfg.data_path, data::Split::train, size);
}

data::Dataset build_eval_dataset(const ExperimentConfig& cfg) {
  if (cfg.data_source == "synthetic") {
    data::SyntheticTaskConfig s;
    s.task = data::synthetic_task_from_string(cfg.task);
    s.n_samples = cfg.n_eval;
    s.size = cfg.image_size;
    s.channels = cfg.image_channels;
    s.seed = derive_seed(cfg.seed, "eval_data");
    return data::make_synthetic(s);
  }
  const int size = cfg.data_size > 0 ? cfg.data_size : cfg.image_size;
  return data::load_paired_dir(cfg.data_path, data::Split::val, size);
}

metrics::MetricReport evaluate_model(UUNetModel& model,
                                     const data::Dataset& eval_set,
                                     std::uint64_t seed) {
  std::vector<Tensor> outs;
  std::vector<Tensor> targets;
  outs.reserve(eval_set.samples.size());
  for (size_t i = 0; i < eval_set.samples.size(); ++i) {
    const data::PairedSample& s = eval_set.samples[i];
    auto g = model.generate(data::to_model_space(s.input_image),
                            derive_seed(seed, "eval", i), /*training=*/false);
    outs.push_back(data::from_model_space(g.y));
    targets.push_back(s.target_image);
  }
  return metrics::evaluate_images(outs, targets);
}

void write_metrics_csv(const std::string& path, const std::string& model,
                       const metrics::MetricReport& report, double stability,
                       double train_seconds) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (f == nullptr) throw std::runtime_error("cannot write " + path);
  std::fprintf(f, "model,mse,psnr,ssim,stability,train_seconds\n");
  std::fprintf(f, "%s,%.12g,%.12g,%.12g,%.12g,%.3f\n", model.c_str(),
               report.mse, report.psnr, report.ssim, stability, train_seconds);
  std::fclose(f);
}

RunArtifacts run_experiment(const ExperimentConfig& cfg, bool resume) {
  cfg.validate();
  fs::create_directories(cfg.output_dir);

  data::Dataset train_set = build_train_dataset(cfg);
  data::Dataset eval_set = build_eval_dataset(cfg);
  if (train_set.image_shape().c != cfg.image_channels) {
    throw ConfigError("model.image_channels",
                      "dataset provides " +
                          std::to_string(train_set.image_shape().c) +
                          " channels");
  }

  UUNetModel model =
      UUNetModel::wire(cfg.gen_cfg(), cfg.dis_cfg(), cfg.topo, cfg.wire_opts());

  TrainConfig tc = cfg.train_cfg();
  tc.checkpoint_path = (fs::path(cfg.output_dir) / "checkpoint.bin").string();
  if (resume) {
    if (!fs::exists(tc.checkpoint_path)) {
      throw std::runtime_error("--resume requested but no checkpoint at " +
                               tc.checkpoint_path);
    }
    tc.resume_from = tc.checkpoint_path;
  }

  const auto t0 = std::chrono::steady_clock::now();
  TrainResult result = train(model, train_set, tc, cfg.loss);
  const double train_seconds =
      tc.record_wall_time
          ? std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                          t0)
                .count()
          : 0.0;

  RunArtifacts a;
  a.records = result.records;
  a.train_seconds = train_seconds;
  a.loss_curve_csv = (fs::path(cfg.output_dir) / "loss_curve.csv").string();
  a.metrics_csv = (fs::path(cfg.output_dir) / "metrics.csv").string();
  a.checkpoint = tc.checkpoint_path;
  a.snapshot = (fs::path(cfg.output_dir) / "config.snapshot.toml").string();

  write_loss_curve_csv(a.loss_curve_csv, result.records);

  a.report = evaluate_model(model, eval_set, cfg.seed);
  if (result.records.size() >= 2) {
    std::vector<double> curve;
    curve.reserve(result.records.size());
    for (const EpochRecord& r : result.records) {
      curve.push_back(r.losses.total_g);
    }
    a.stability = metrics::stability(curve).value;
  }
  write_metrics_csv(a.metrics_csv, cfg.effective_name(), a.report, a.stability,
                    train_seconds);

  std::ofstream snap(a.snapshot, std::ios::trunc);
  if (!snap) throw std::runtime_error("cannot write " + a.snapshot);
  snap << cfg.to_toml();
  snap.close();
  return a;
}

// --- compare -----------------------------------------------------------------

namespace {

struct MetricsRow {
  std::string model;
  double v[5];  // mse, psnr, ssim, stability, train_seconds
};

bool read_metrics_csv(const std::string& path, MetricsRow& row) {
  std::ifstream in(path);
  if (!in) return false;
  std::string header, line;
  if (!std::getline(in, header) || !std::getline(in, line)) return false;
  std::istringstream ss(line);
  std::string field;
  if (!std::getline(ss, row.model, ',')) return false;
  for (int i = 0; i < 5; ++i) {
    if (!std::getline(ss, field, ',')) return false;
    row.v[i] = std::strtod(field.c_str(), nullptr);
  }
  return true;
}

}  // namespace

std::vector<ResultsRow> compare_runs(const std::vector<std::string>& dirs) {
  std::map<std::string, std::vector<MetricsRow>> groups;
  for (const std::string& dir : dirs) {
    const std::string path = (fs::path(dir) / "metrics.csv").string();
    MetricsRow row;
    if (!read_metrics_csv(path, row)) {
      std::fprintf(stderr, "compare: skipping %s (no readable metrics.csv)\n",
                   dir.c_str());
      continue;
    }
    groups[row.model].push_back(row);
  }
  std::vector<ResultsRow> rows;
  for (auto& [model, entries] : groups) {
    // fixed accumulation order regardless of input order
    std::sort(entries.begin(), entries.end(),
              [](const MetricsRow& a, const MetricsRow& b) {
                for (int i = 0; i < 5; ++i) {
                  if (a.v[i] != b.v[i]) return a.v[i] < b.v[i];
                }
                return false;
              });
    ResultsRow r;
    r.model = model;
    r.runs = static_cast<int>(entries.size());
    for (const MetricsRow& e : entries) {
      r.mse += e.v[0];
      r.psnr += e.v[1];
      r.ssim += e.v[2];
      r.stability += e.v[3];
      r.train_seconds += e.v[4];
    }
    const double inv = 1.0 / r.runs;
    r.mse *= inv;
    r.psnr *= inv;
    r.ssim *= inv;
    r.stability *= inv;
    r.train_seconds *= inv;
    rows.push_back(std::move(r));
  }
  return rows;  // std::map iteration is already sorted by model name
}

void write_results_csv(const std::string& path,
                       const std::vector<ResultsRow>& rows) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (f == nullptr) throw std::runtime_error("cannot write " + path);
  std::fprintf(f, "model,mse,psnr,ssim,stability,train_seconds,runs\n");
  for (const ResultsRow& r : rows) {
    std::fprintf(f, "%s,%.12g,%.12g,%.12g,%.12g,%.3f,%d\n", r.model.c_str(),
                 r.mse, r.psnr, r.ssim, r.stability, r.train_seconds, r.runs);
  }
  std::fclose(f);
}

std::string format_results_table(const std::vector<ResultsRow>& rows) {
  std::ostringstream o;
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%-20s %8s %8s %8s %10s %10s %5s\n", "model",
                "mse", "psnr", "ssim", "stability", "train_s", "runs");
  o << buf;
  for (const ResultsRow& r : rows) {
    std::snprintf(buf, sizeof(buf), "%-20s %8.4f %8.3f %8.4f %10.5f %10.2f %5d\n",
                  r.model.c_str(), r.mse, r.psnr, r.ssim, r.stability,
                  r.train_seconds, r.runs);
    o << buf;
  }
  return o.str();
}

}  // namespace uunet
