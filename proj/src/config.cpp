#include "uunet/config.hpp"

#include <cctype>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "uunet/rng.hpp"

namespace uunet {

namespace {

struct KeyValue {
  std::string key;  // "section.name" (top-level keys have no dot)
  std::string value;
  int line = 0;
};

std::string trim(const std::string& s) {
  size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

std::vector<KeyValue> parse_lines(const std::string& text) {
  std::vector<KeyValue> out;
  std::istringstream in(text);
  std::string line;
  std::string section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    // strip comments outside quotes
    bool in_quote = false;
    for (size_t i = 0; i < line.size(); ++i) {
      if (line[i] == '"') in_quote = !in_quote;
      if (line[i] == '#' && !in_quote) {
        line = line.substr(0, i);
        break;
      }
    }
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') {
        throw ConfigError("line " + std::to_string(lineno),
                          "malformed section header");
      }
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(lineno),
                        "expected key = value");
    }
    KeyValue kv;
    kv.key = trim(line.substr(0, eq));
    if (!section.empty()) kv.key = section + "." + kv.key;
    kv.value = trim(line.substr(eq + 1));
    kv.line = lineno;
    out.push_back(std::move(kv));
  }
  return out;
}

std::string parse_string(const KeyValue& kv) {
  const std::string& v = kv.value;
  if (v.size() >= 2 && v.front() == '"' && v.back() == '"') {
    return v.substr(1, v.size() - 2);
  }
  return v;
}

bool parse_bool(const KeyValue& kv) {
  if (kv.value == "true") return true;
  if (kv.value == "false") return false;
  throw ConfigError(kv.key, "expected true or false, got '" + kv.value + "'");
}

std::int64_t parse_int(const KeyValue& kv) {
  char* end = nullptr;
  const long long v = std::strtoll(kv.value.c_str(), &end, 10);
  if (end == kv.value.c_str() || *end != '\0') {
    throw ConfigError(kv.key, "expected integer, got '" + kv.value + "'");
  }
  return v;
}

double parse_double(const KeyValue& kv) {
  char* end = nullptr;
  const double v = std::strtod(kv.value.c_str(), &end);
  if (end == kv.value.c_str() || *end != '\0') {
    throw ConfigError(kv.key, "expected number, got '" + kv.value + "'");
  }
  return v;
}

void apply_key(ExperimentConfig& c, const KeyValue& kv) {
  const std::string& k = kv.key;
  try {
    if (k == "model_name") { c.model_name = parse_string(kv); return; }
    if (k == "output_dir") { c.output_dir = parse_string(kv); return; }

    if (k == "model.image_channels") { c.image_channels = static_cast<int>(parse_int(kv)); return; }
    if (k == "model.image_size") { c.image_size = static_cast<int>(parse_int(kv)); return; }
    if (k == "model.depth") { c.depth = static_cast<int>(parse_int(kv)); return; }
    if (k == "model.gen_base_channels") { c.gen_base_channels = static_cast<int>(parse_int(kv)); return; }
    if (k == "model.dis_base_channels") { c.dis_base_channels = static_cast<int>(parse_int(kv)); return; }
    if (k == "model.dis_feature_channels") { c.dis_feature_channels = static_cast<int>(parse_int(kv)); return; }
    if (k == "model.activation") { c.activation = parse_string(kv); return; }
    if (k == "model.norm") { c.norm = parse_string(kv); return; }
    if (k == "model.param_cap") { c.param_cap = parse_int(kv); return; }

    if (k == "topology.preset") return;  // handled before the key sweep
    if (k == "topology.variant") { c.topo.variant = variant_from_string(parse_string(kv)); return; }
    if (k == "topology.triple_concat") { c.topo.triple_concat = parse_bool(kv); return; }
    if (k == "topology.tail") { c.topo.tail_enabled = parse_bool(kv); return; }
    if (k == "topology.coupled_update") { c.topo.coupled_update = parse_bool(kv); return; }

    if (k == "latent.vae") { c.vae = parse_bool(kv); return; }
    if (k == "latent.dim") { c.latent_dim = static_cast<int>(parse_int(kv)); return; }

    if (k == "loss.lambda_re") { c.loss.weights.lambda_re = parse_double(kv); return; }
    if (k == "loss.lambda_gkl") { c.loss.weights.lambda_gkl = parse_double(kv); return; }
    if (k == "loss.lambda_dis") { c.loss.weights.lambda_dis = parse_double(kv); return; }
    if (k == "loss.lambda_ckl") { c.loss.weights.lambda_ckl = parse_double(kv); return; }
    if (k == "loss.alpha") { c.loss.alpha = parse_double(kv); return; }
    if (k == "loss.beta") { c.loss.beta = parse_double(kv); return; }
    if (k == "loss.ckl_side") { c.loss.ckl_side = ckl_side_from_string(parse_string(kv)); return; }
    if (k == "loss.dis_kl_mode") { c.loss.dis_kl_mode = dis_kl_mode_from_string(parse_string(kv)); return; }

    if (k == "coupling.include_adversarial") { c.include_adversarial = parse_bool(kv); return; }
    if (k == "coupling.scale") { c.coupling_scale = parse_double(kv); return; }

    if (k == "train.epochs") { c.epochs = static_cast<int>(parse_int(kv)); return; }
    if (k == "train.batch_size") { c.batch_size = static_cast<int>(parse_int(kv)); return; }
    if (k == "train.lr_g") { c.lr_g = parse_double(kv); return; }
    if (k == "train.lr_d") { c.lr_d = parse_double(kv); return; }
    if (k == "train.adam_beta1") { c.adam_beta1 = parse_double(kv); return; }
    if (k == "train.adam_beta2") { c.adam_beta2 = parse_double(kv); return; }
    if (k == "train.seed") { c.seed = static_cast<std::uint64_t>(parse_int(kv)); return; }
    if (k == "train.d_steps_per_g_step") { c.d_steps_per_g_step = static_cast<int>(parse_int(kv)); return; }
    if (k == "train.checkpoint_every") { c.checkpoint_every = static_cast<int>(parse_int(kv)); return; }
    if (k == "train.timing") { c.timing = parse_string(kv); return; }

    if (k == "data.source") { c.data_source = parse_string(kv); return; }
    if (k == "data.task") { c.task = parse_string(kv); return; }
    if (k == "data.n_samples") { c.n_samples = static_cast<int>(parse_int(kv)); return; }
    if (k == "data.n_eval") { c.n_eval = static_cast<int>(parse_int(kv)); return; }
    if (k == "data.size") { c.data_size = static_cast<int>(parse_int(kv)); return; }
    if (k == "data.path") { c.data_path = parse_string(kv); return; }
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(k, e.what());
  }
  throw ConfigError(k, "unknown key");
}

}  // namespace

ExperimentConfig ExperimentConfig::from_string(const std::string& text) {
  ExperimentConfig c;
  const std::vector<KeyValue> kvs = parse_lines(text);
  // preset first (wherever it appears), explicit keys override in file order
  for (const KeyValue& kv : kvs) {
    if (kv.key == "topology.preset") {
      const std::string name = parse_string(kv);
      if (name.empty()) continue;
      const VariantPreset* p = find_preset(name);
      if (p == nullptr) {
        throw ConfigError("topology.preset", "unknown preset '" + name + "'");
      }
      c.topo = p->topo;
      c.vae = p->vae;
      if (c.model_name.empty()) c.model_name = p->name;
    }
  }
  for (const KeyValue& kv : kvs) apply_key(c, kv);
  c.validate();
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("file", "cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return from_string(ss.str());
}

void ExperimentConfig::validate() const {
  auto bad = [](const std::string& key, const std::string& msg) {
    throw ConfigError(key, msg);
  };
  if (image_channels < 1) bad("model.image_channels", "must be >= 1");
  if (image_size < 1) bad("model.image_size", "must be >= 1");
  if (depth < 1) bad("model.depth", "must be >= 1");
  if (image_size % (1 << depth) != 0) {
    bad("model.image_size", "must be divisible by 2^depth = " +
                                std::to_string(1 << depth));
  }
  if (gen_base_channels < 1) bad("model.gen_base_channels", "must be >= 1");
  if (dis_base_channels < 1) bad("model.dis_base_channels", "must be >= 1");
  if (dis_feature_channels < 1) bad("model.dis_feature_channels", "must be >= 1");
  try {
    activation_from_string(activation);
  } catch (const std::exception& e) {
    bad("model.activation", e.what());
  }
  if (norm != "none" && norm != "batch") {
    bad("model.norm", "expected none|batch, got '" + norm + "'");
  }
  try {
    topo.validate();
  } catch (const std::exception& e) {
    bad("topology", e.what());
  }
  if (vae && latent_dim < 1) bad("latent.dim", "must be >= 1");
  try {
    loss.validate();
  } catch (const std::exception& e) {
    bad("loss", e.what());
  }
  if (coupling_scale < 0.0) bad("coupling.scale", "must be >= 0");
  if (epochs < 1) bad("train.epochs", "must be >= 1");
  if (batch_size < 1) bad("train.batch_size", "must be >= 1");
  if (lr_g <= 0.0) bad("train.lr_g", "must be > 0");
  if (lr_d <= 0.0) bad("train.lr_d", "must be > 0");
  if (d_steps_per_g_step < 1) bad("train.d_steps_per_g_step", "must be >= 1");
  if (checkpoint_every < 0) bad("train.checkpoint_every", "must be >= 0");
  if (timing != "wall" && timing != "none") {
    bad("train.timing", "expected wall|none, got '" + timing + "'");
  }
  if (data_source != "synthetic" && data_source != "paired_dir") {
    bad("data.source", "expected synthetic|paired_dir, got '" + data_source +
                           "'");
  }
  if (data_source == "synthetic") {
    try {
      data::synthetic_task_from_string(task);
    } catch (const std::exception& e) {
      bad("data.task", e.what());
    }
    if (n_samples < 1) bad("data.n_samples", "must be >= 1");
    if (n_eval < 1) bad("data.n_eval", "must be >= 1");
  } else if (data_path.empty()) {
    bad("data.path", "required when data.source = paired_dir");
  }
}

std::string ExperimentConfig::effective_name() const {
  if (!model_name.empty()) return model_name;
  std::string n = variant_to_string(topo.variant);
  if (topo.triple_concat) n += "_triple";
  if (vae) n += "_vae";
  if (!topo.tail_enabled) n += "_notail";
  return n;
}

namespace {

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

std::string ExperimentConfig::to_toml() const {
  std::ostringstream o;
  o << "model_name = \"" << effective_name() << "\"\n";
  o << "output_dir = \"" << output_dir << "\"\n\n";
  o << "[model]\n";
  o << "image_channels = " << image_channels << "\n";
  o << "image_size = " << image_size << "\n";
  o << "depth = " << depth << "\n";
  o << "gen_base_channels = " << gen_base_channels << "\n";
  o << "dis_base_channels = " << dis_base_channels << "\n";
  o << "dis_feature_channels = " << dis_feature_channels << "\n";
  o << "activation = \"" << activation << "\"\n";
  o << "norm = \"" << norm << "\"\n";
  o << "param_cap = " << param_cap << "\n\n";
  o << "[topology]\n";
  o << "variant = \"" << variant_to_string(topo.variant) << "\"\n";
  o << "triple_concat = " << (topo.triple_concat ? "true" : "false") << "\n";
  o << "tail = " << (topo.tail_enabled ? "true" : "false") << "\n";
  o << "coupled_update = " << (topo.coupled_update ? "true" : "false")
    << "\n\n";
  o << "[latent]\n";
  o << "vae = " << (vae ? "true" : "false") << "\n";
  o << "dim = " << latent_dim << "\n\n";
  o << "[loss]\n";
  o << "lambda_re = " << fmt_double(loss.weights.lambda_re) << "\n";
  o << "lambda_gkl = " << fmt_double(loss.weights.lambda_gkl) << "\n";
  o << "lambda_dis = " << fmt_double(loss.weights.lambda_dis) << "\n";
  o << "lambda_ckl = " << fmt_double(loss.weights.lambda_ckl) << "\n";
  o << "alpha = " << fmt_double(loss.alpha) << "\n";
  o << "beta = " << fmt_double(loss.beta) << "\n";
  o << "ckl_side = \"" << ckl_side_to_string(loss.ckl_side) << "\"\n";
  o << "dis_kl_mode = \"" << dis_kl_mode_to_string(loss.dis_kl_mode)
    << "\"\n\n";
  o << "[coupling]\n";
  o << "include_adversarial = " << (include_adversarial ? "true" : "false")
    << "\n";
  o << "scale = " << fmt_double(coupling_scale) << "\n\n";
  o << "[train]\n";
  o << "epochs = " << epochs << "\n";
  o << "batch_size = " << batch_size << "\n";
  o << "lr_g = " << fmt_double(lr_g) << "\n";
  o << "lr_d = " << fmt_double(lr_d) << "\n";
  o << "adam_beta1 = " << fmt_double(adam_beta1) << "\n";
  o << "adam_beta2 = " << fmt_double(adam_beta2) << "\n";
  o << "seed = " << seed << "\n";
  o << "d_steps_per_g_step = " << d_steps_per_g_step << "\n";
  o << "checkpoint_every = " << checkpoint_every << "\n";
  o << "timing = \"" << timing << "\"\n\n";
  o << "[data]\n";
  o << "source = \"" << data_source << "\"\n";
  o << "task = \"" << task << "\"\n";
  o << "n_samples = " << n_samples << "\n";
  o << "n_eval = " << n_eval << "\n";
  o << "size = " << data_size << "\n";
  o << "path = \"" << data_path << "\"\n";
  return o.str();
}

std::uint64_t ExperimentConfig::digest() const {
  std::ostringstream o;
  o << image_channels << '|' << image_size << '|' << depth << '|'
    << gen_base_channels << '|' << dis_base_channels << '|'
    << dis_feature_channels << '|' << activation << '|' << norm << '|'
    << variant_to_string(topo.variant) << '|' << topo.triple_concat << '|'
    << topo.tail_enabled << '|' << topo.coupled_update << '|' << vae << '|'
    << latent_dim << '|' << fmt_double(loss.weights.lambda_re) << '|'
    << fmt_double(loss.weights.lambda_gkl) << '|'
    << fmt_double(loss.weights.lambda_dis) << '|'
    << fmt_double(loss.weights.lambda_ckl) << '|' << fmt_double(loss.alpha)
    << '|' << fmt_double(loss.beta) << '|'
    << ckl_side_to_string(loss.ckl_side) << '|'
    << dis_kl_mode_to_string(loss.dis_kl_mode) << '|' << include_adversarial
    << '|' << fmt_double(coupling_scale) << '|' << batch_size << '|'
    << fmt_double(lr_g) << '|' << fmt_double(lr_d) << '|'
    << fmt_double(adam_beta1) << '|' << fmt_double(adam_beta2) << '|' << seed
    << '|' << d_steps_per_g_step << '|' << data_source << '|' << task << '|'
    << n_samples << '|' << n_eval << '|' << data_size << '|' << data_path;
  return hash_tag(o.str());
}

UNetConfig ExperimentConfig::gen_cfg() const {
  UNetConfig u;
  u.in_channels = image_channels;
  u.out_channels = image_channels;
  u.base_channels = gen_base_channels;
  u.depth = depth;
  u.image_h = image_size;
  u.image_w = image_size;
  u.activation = activation_from_string(activation);
  u.batch_norm = norm == "batch";
  u.param_cap = param_cap;
  return u;
}

UNetConfig ExperimentConfig::dis_cfg() const {
  UNetConfig u = gen_cfg();
  u.base_channels = dis_base_channels;
  u.out_channels = dis_feature_channels;
  return u;
}

WireOptions ExperimentConfig::wire_opts() const {
  WireOptions w;
  w.vae = vae;
  w.latent_dim = latent_dim;
  w.seed = seed;
  return w;
}

TrainConfig ExperimentConfig::train_cfg() const {
  TrainConfig t;
  t.epochs = epochs;
  t.batch_size = batch_size;
  t.lr_g = lr_g;
  t.lr_d = lr_d;
  t.adam_beta1 = adam_beta1;
  t.adam_beta2 = adam_beta2;
  t.seed = seed;
  t.d_steps_per_g_step = d_steps_per_g_step;
  t.coupling_scale = coupling_scale;
  t.include_adversarial = include_adversarial;
  t.checkpoint_every = checkpoint_every;
  t.config_digest = digest();
  t.record_wall_time = timing == "wall";
  return t;
}

const std::vector<VariantPreset>& variant_presets() {
  static const std::vector<VariantPreset> presets = [] {
    std::vector<VariantPreset> out;
    struct Base {
      const char* name;
      Variant variant;
      bool triple;
    };
    const Base bases[] = {
        {"none", Variant::none, false},
        {"v1", Variant::v1_encoder_encoder, false},
        {"v2", Variant::v2_latent_only, false},
        {"v3", Variant::v3_decoder_decoder, false},
        {"v4", Variant::v4_full, false},
        {"v4_triple", Variant::v4_full, true},
    };
    for (const Base& b : bases) {
      for (const bool vae : {false, true}) {
        for (const bool tail : {true, false}) {
          VariantPreset p;
          p.name = b.name;
          if (vae) p.name += "_vae";
          if (!tail) p.name += "_notail";
          p.topo.variant = b.variant;
          p.topo.triple_concat = b.triple;
          p.topo.tail_enabled = tail;
          p.topo.coupled_update = b.variant != Variant::none;
          p.vae = vae;
          out.push_back(std::move(p));
        }
      }
    }
    return out;
  }();
  return presets;
}

const VariantPreset* find_preset(const std::string& name) {
  for (const VariantPreset& p : variant_presets()) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

}  // namespace uunet
