#include "gsfuse/config.hpp"

#include <fstream>
#include <algorithm>
#include <functional>
#include <vector>

#include "gsfuse/errors.hpp"

namespace gsfuse {

using nlohmann::json;
using nlohmann::ordered_json;

RunConfig RunConfig::paper() {
  RunConfig c;
  c.scenario.lookback = 35;
  c.scenario.horizon = 35;
  return c;
}

RunConfig RunConfig::desk() {
  RunConfig c;
  c.model = ModelConfig::desk();
  // Short schedules on small widths: a larger step and every 8th stage-1 window.
  c.train.adam.lr = 3e-3;
  c.train.stage1_stride = 8;
  return c;
}

ModelConfig RunConfig::model_config() const {
  ModelConfig m = model;
  m.horizon = scenario.horizon;
  m.d_x = scenario.d_x;
  m.d_y = scenario.d_y;
  m.vocab_size = scenario.vocab_size;
  return m;
}

datagen::ScenarioConfig RunConfig::scenario_config() const {
  datagen::ScenarioConfig s = scenario;
  s.seed = mix_seed(seed, 0x73636e);
  return s;
}

train::TrainConfig RunConfig::train_config() const {
  train::TrainConfig t = train;
  t.seed = seed;
  return t;
}

std::uint64_t RunConfig::init_seed() const { return seed; }

void RunConfig::validate() const {
  scenario_config().validate();
  model_config().validate();
  train_config().validate();
}

namespace {

// Pulls every listed key out of one JSON section and rejects anything else.
class Section {
 public:
  Section(const json& j, std::string name) : j_(j), name_(std::move(name)) {
    if (!j_.is_object()) throw ConfigError("config: section '" + name_ + "' must be an object");
  }

  template <typename T>
  void get(const std::string& key, T& out) {
    keys_.push_back(key);
    pending_.push_back([this, key, &out] {
      try {
        out = j_.at(key).get<T>();
      } catch (const json::exception&) {
        throw ConfigError("config: '" + name_ + "." + key + "' has the wrong type");
      }
    });
  }

  void finish() {
    for (const auto& [key, _] : j_.items()) {
      if (std::find(keys_.begin(), keys_.end(), key) == keys_.end()) {
        throw ConfigError("config: unknown key '" + name_ + "." + key + "'; valid keys: " + valid());
      }
    }
    for (const auto& key : keys_) {
      if (!j_.contains(key)) throw ConfigError("config: missing key '" + name_ + "." + key + "'; valid keys: " + valid());
    }
    for (auto& f : pending_) f();
  }

 private:
  std::string valid() const {
    std::string out;
    for (const auto& k : keys_) out += (out.empty() ? "" : ", ") + k;
    return out;
  }

  const json& j_;
  std::string name_;
  std::vector<std::string> keys_;
  std::vector<std::function<void()>> pending_;
};

void model_fields(Section& s, ModelConfig& m, bool shapes) {
  s.get("fusion_dim", m.fusion_dim);
  if (shapes) {
    s.get("vocab_size", m.vocab_size);
    s.get("d_x", m.d_x);
    s.get("d_y", m.d_y);
    s.get("horizon", m.horizon);
  }
  s.get("d_raw_text", m.d_raw_text);
  s.get("d_raw_ts", m.d_raw_ts);
  s.get("projection_depth", m.projection_depth);
  s.get("align_heads", m.align_heads);
  s.get("tau_ctr", m.tau_ctr);
  s.get("tau_al", m.tau_al);
  s.get("tau_nce", m.tau_nce);
  s.get("k_top", m.k_top);
  s.get("tau_gate", m.gate.tau_gate);
  s.get("gamma", m.gate.gamma);
  s.get("epsilon", m.gate.epsilon);
  s.get("clip_c", m.gate.clip_c);
  s.get("dec_layers", m.dec_layers);
  s.get("dec_heads", m.dec_heads);
  s.get("d_dec", m.d_dec);
  s.get("k_reg", m.k_reg);
  s.get("anchor_last_value", m.anchor_last_value);
  s.get("gate_init_openness", m.gate_init_openness);
  s.get("cross_attention_zero_init", m.cross_attention_zero_init);
}

ordered_json model_json(const ModelConfig& m, bool shapes) {
  ordered_json j;
  j["fusion_dim"] = m.fusion_dim;
  if (shapes) {
    j["vocab_size"] = m.vocab_size;
    j["d_x"] = m.d_x;
    j["d_y"] = m.d_y;
    j["horizon"] = m.horizon;
  }
  j["d_raw_text"] = m.d_raw_text;
  j["d_raw_ts"] = m.d_raw_ts;
  j["projection_depth"] = m.projection_depth;
  j["align_heads"] = m.align_heads;
  j["tau_ctr"] = m.tau_ctr;
  j["tau_al"] = m.tau_al;
  j["tau_nce"] = m.tau_nce;
  j["k_top"] = m.k_top;
  j["tau_gate"] = m.gate.tau_gate;
  j["gamma"] = m.gate.gamma;
  j["epsilon"] = m.gate.epsilon;
  j["clip_c"] = m.gate.clip_c;
  j["dec_layers"] = m.dec_layers;
  j["dec_heads"] = m.dec_heads;
  j["d_dec"] = m.d_dec;
  j["k_reg"] = m.k_reg;
  j["anchor_last_value"] = m.anchor_last_value;
  j["gate_init_openness"] = m.gate_init_openness;
  j["cross_attention_zero_init"] = m.cross_attention_zero_init;
  return j;
}

}  // namespace

ordered_json to_json(const ModelConfig& config) { return model_json(config, true); }

ModelConfig model_config_from_json(const json& j) {
  ModelConfig m;
  Section s(j, "model");
  model_fields(s, m, true);
  s.finish();
  return m;
}

ordered_json to_json(const RunConfig& c) {
  ordered_json j;
  j["seed"] = c.seed;
  auto& sc = j["scenario"];
  sc["num_events"] = c.scenario.num_events;
  sc["lookback"] = c.scenario.lookback;
  sc["horizon"] = c.scenario.horizon;
  sc["d_x"] = c.scenario.d_x;
  sc["d_y"] = c.scenario.d_y;
  sc["vocab_size"] = c.scenario.vocab_size;
  sc["script_len_min"] = c.scenario.script_len_min;
  sc["script_len_max"] = c.scenario.script_len_max;
  sc["signal_tokens"] = c.scenario.signal_tokens;
  sc["rho_signal"] = c.scenario.rho_signal;
  sc["kappa"] = c.scenario.kappa;
  sc["sigma_noise"] = c.scenario.sigma_noise;
  sc["mean_reversion"] = c.scenario.mean_reversion;
  sc["base_level"] = c.scenario.base_level;
  j["model"] = model_json(c.model, false);
  auto& t = j["train"];
  t["epochs_ts_only"] = c.train.epochs_ts_only;
  t["epochs_text_only"] = c.train.epochs_text_only;
  t["epochs_multimodal"] = c.train.epochs_multimodal;
  t["batch_size"] = c.train.batch_size;
  t["learning_rate"] = c.train.adam.lr;
  t["beta1"] = c.train.adam.beta1;
  t["beta2"] = c.train.adam.beta2;
  t["adam_eps"] = c.train.adam.eps;
  t["lambda_align"] = c.train.lambda_align;
  t["lambda_gate"] = c.train.lambda_gate;
  t["grad_clip"] = c.train.grad_clip;
  t["stage1_stride"] = c.train.stage1_stride;
  t["train_restricted_branch"] = c.train.train_restricted_branch;
  return j;
}

RunConfig run_config_from_json(const json& j) {
  RunConfig c;
  Section top(j, "<root>");
  top.get("seed", c.seed);
  json scenario, model, train;
  top.get("scenario", scenario);
  top.get("model", model);
  top.get("train", train);
  top.finish();

  Section sc(scenario, "scenario");
  sc.get("num_events", c.scenario.num_events);
  sc.get("lookback", c.scenario.lookback);
  sc.get("horizon", c.scenario.horizon);
  sc.get("d_x", c.scenario.d_x);
  sc.get("d_y", c.scenario.d_y);
  sc.get("vocab_size", c.scenario.vocab_size);
  sc.get("script_len_min", c.scenario.script_len_min);
  sc.get("script_len_max", c.scenario.script_len_max);
  sc.get("signal_tokens", c.scenario.signal_tokens);
  sc.get("rho_signal", c.scenario.rho_signal);
  sc.get("kappa", c.scenario.kappa);
  sc.get("sigma_noise", c.scenario.sigma_noise);
  sc.get("mean_reversion", c.scenario.mean_reversion);
  sc.get("base_level", c.scenario.base_level);
  sc.finish();

  Section m(model, "model");
  model_fields(m, c.model, false);
  m.finish();

  Section t(train, "train");
  t.get("epochs_ts_only", c.train.epochs_ts_only);
  t.get("epochs_text_only", c.train.epochs_text_only);
  t.get("epochs_multimodal", c.train.epochs_multimodal);
  t.get("batch_size", c.train.batch_size);
  t.get("learning_rate", c.train.adam.lr);
  t.get("beta1", c.train.adam.beta1);
  t.get("beta2", c.train.adam.beta2);
  t.get("adam_eps", c.train.adam.eps);
  t.get("lambda_align", c.train.lambda_align);
  t.get("lambda_gate", c.train.lambda_gate);
  t.get("grad_clip", c.train.grad_clip);
  t.get("stage1_stride", c.train.stage1_stride);
  t.get("train_restricted_branch", c.train.train_restricted_branch);
  t.finish();

  c.validate();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config: " + path.string() + " is not valid JSON: " + e.what());
  }
  return run_config_from_json(j);
}

void save_run_config(const RunConfig& config, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("config: cannot write " + path.string());
  out << to_json(config).dump(2) << '\n';
}

}  // namespace gsfuse
