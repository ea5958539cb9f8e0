#include <cstdio>
#include <cstdlib>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "uunet/config.hpp"
#include "uunet/datasets.hpp"
#include "uunet/runner.hpp"

namespace {

int cmd_run(const std::string& config_path, bool resume) {
  uunet::ExperimentConfig cfg;
  try {
    cfg = uunet::ExperimentConfig::load(config_path);
    if (const char* env = std::getenv("UUNET_SEED")) {
      cfg.seed = std::strtoull(env, nullptr, 10);
    }
  } catch (const uunet::ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  try {
    uunet::RunArtifacts a = uunet::run_experiment(cfg, resume);
    std::printf("run complete: %s\n", cfg.effective_name().c_str());
    std::printf("  mse=%.6f psnr=%.3f ssim=%.4f stability=%.5f train_s=%.2f\n",
                a.report.mse, a.report.psnr, a.report.ssim, a.stability,
                a.train_seconds);
    std::printf("  artifacts in %s\n", cfg.output_dir.c_str());
    return 0;
  } catch (const uunet::ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const uunet::TrainAbort& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}

int cmd_compare(const std::vector<std::string>& dirs,
                const std::string& out) {
  try {
    const auto rows = uunet::compare_runs(dirs);
    std::fputs(uunet::format_results_table(rows).c_str(), stdout);
    if (!out.empty()) {
      uunet::write_results_csv(out, rows);
      std::printf("wrote %s\n", out.c_str());
    }
    return 0;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}

int cmd_variants() {
  for (const uunet::VariantPreset& p : uunet::variant_presets()) {
    std::printf("%-16s variant=%-4s triple_concat=%-5s tail=%-5s "
                "coupled_update=%-5s vae=%s\n",
                p.name.c_str(),
                uunet::variant_to_string(p.topo.variant).c_str(),
                p.topo.triple_concat ? "true" : "false",
                p.topo.tail_enabled ? "true" : "false",
                p.topo.coupled_update ? "true" : "false",
                p.vae ? "true" : "false");
  }
  return 0;
}

int cmd_synth(const std::string& task, int n, int size, int channels,
              std::uint64_t seed, const std::string& out) {
  try {
    uunet::data::SyntheticTaskConfig cfg;
    cfg.task = uunet::data::synthetic_task_from_string(task);
    cfg.n_samples = n;
    cfg.size = size;
    cfg.channels = channels;
    cfg.seed = seed;
    uunet::data::Dataset ds = uunet::data::make_synthetic(cfg);
    uunet::data::save_paired_dir(ds, out);
    std::printf("wrote %d AB-concatenated pairs to %s\n", ds.size(),
                out.c_str());
    return 0;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"UU-Net GAN experiment runner"};
  app.require_subcommand(1);

  std::string config_path;
  bool resume = false;
  CLI::App* run = app.add_subcommand("run", "train and evaluate one config");
  run->add_option("config", config_path, "experiment config file")->required();
  run->add_flag("--resume", resume, "resume from the output dir checkpoint");

  std::vector<std::string> dirs;
  std::string compare_out;
  CLI::App* compare =
      app.add_subcommand("compare", "merge metrics from run directories");
  compare->add_option("dirs", dirs, "run directories");
  compare->add_option("--out", compare_out, "also write merged CSV here");

  CLI::App* variants =
      app.add_subcommand("variants", "list the topology family presets");

  std::string task = "invert";
  int n = 64, size = 64, channels = 3;
  std::uint64_t seed = 0;
  std::string synth_out;
  CLI::App* synth =
      app.add_subcommand("synth", "export a synthetic paired dataset");
  synth->add_option("--task", task, "invert|channel_swap|edge_from_blob");
  synth->add_option("--n", n, "number of samples");
  synth->add_option("--size", size, "image size (H = W)");
  synth->add_option("--channels", channels, "image channels");
  synth->add_option("--seed", seed, "generation seed");
  synth->add_option("--out", synth_out, "output directory")->required();

  CLI11_PARSE(app, argc, argv);

  if (run->parsed()) return cmd_run(config_path, resume);
  if (compare->parsed()) return cmd_compare(dirs, compare_out);
  if (variants->parsed()) return cmd_variants();
  if (synth->parsed()) return cmd_synth(task, n, size, channels, seed, synth_out);
  return 1;
}
