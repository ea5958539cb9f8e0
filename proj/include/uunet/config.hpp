#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "uunet/trainer.hpp"

namespace uunet {

struct ConfigError : std::runtime_error {
  std::string key;
  ConfigError(const std::string& key_, const std::string& msg)
      : std::runtime_error("config: " + key_ + ": " + msg), key(key_) {}
};

// Full experiment description, loadable from a TOML-style key/value file
// with [section] headers. Unknown keys are rejected by name.
struct ExperimentConfig {
  std::string model_name;  // empty = derived from topology flags
  std::string output_dir = "runs/out";

  // [model]
  int image_channels = 3;
  int image_size = 32;
  int depth = 3;
  int gen_base_channels = 16;
  int dis_base_channels = 16;
  int dis_feature_channels = 16;  // discriminator decoder output channels
  std::string activation = "relu";
  std::string norm = "none";  // none | batch
  std::int64_t param_cap = 50'000'000;

  // [topology]
  TopologyConfig topo;

  // [latent]
  bool vae = false;
  int latent_dim = 64;

  // [loss]
  LossConfig loss;

  // [coupling]
  bool include_adversarial = false;
  double coupling_scale = 1.0;

  // [train]
  int epochs = 200;
  int batch_size = 8;
  double lr_g = 2e-4;
  double lr_d = 2e-4;
  double adam_beta1 = 0.5;
  double adam_beta2 = 0.999;
  std::uint64_t seed = 42;
  int d_steps_per_g_step = 1;
  int checkpoint_every = 0;
  std::string timing = "wall";  // wall | none

  // [data]
  std::string data_source = "synthetic";  // synthetic | paired_dir
  std::string task = "invert";
  int n_samples = 64;
  int n_eval = 16;
  int data_size = 0;  // paired_dir resize target; 0 = image_size
  std::string data_path;

  static ExperimentConfig load(const std::string& path);
  static ExperimentConfig from_string(const std::string& text);

  // Canonical snapshot with every key resolved; parsing it back yields an
  // identical config.
  std::string to_toml() const;

  // Identity hash for checkpoint compatibility: covers the model, topology,
  // losses, optimizer settings, seed and data definition, but not the run
  // length or output plumbing, so a resumed run may extend epochs.
  std::uint64_t digest() const;

  void validate() const;
  std::string effective_name() const;

  UNetConfig gen_cfg() const;
  UNetConfig dis_cfg() const;
  WireOptions wire_opts() const;
  TrainConfig train_cfg() const;
};

struct VariantPreset {
  std::string name;
  TopologyConfig topo;
  bool vae = false;
};

// The named family members: {none, v1, v2, v3, v4, v4_triple}, each with and
// without VAE heads and with and without the tail module.
const std::vector<VariantPreset>& variant_presets();
const VariantPreset* find_preset(const std::string& name);

}  // namespace uunet
