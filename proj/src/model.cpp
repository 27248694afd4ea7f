#include "gsfuse/model.hpp"

#include <algorithm>
#include <cmath>

#include "gsfuse/errors.hpp"
#include "gsfuse/ops.hpp"
#include "gsfuse/rng.hpp"

namespace gsfuse {

ModelConfig ModelConfig::paper() { return ModelConfig{}; }

ModelConfig ModelConfig::desk() {
  ModelConfig c;
  c.fusion_dim = 32;
  c.horizon = 16;
  c.align_heads = 8;
  c.dec_layers = 2;
  c.dec_heads = 4;
  c.d_dec = 32;
  return c;
}

void ModelConfig::validate() const {
  if (fusion_dim == 0) throw ConfigError("model: fusion_dim F must be positive");
  if (align_heads == 0 || fusion_dim % align_heads != 0) {
    throw ConfigError("model: fusion_dim " + std::to_string(fusion_dim) + " not divisible by align_heads " +
                      std::to_string(align_heads));
  }
  if (projection_depth == 0) throw ConfigError("model: projection_depth must be >= 1");
  if (!(tau_ctr > 0.0 && tau_al > 0.0 && tau_nce > 0.0)) throw ConfigError("model: temperatures must be positive");
  if (!(gate_init_openness > 0.0 && gate_init_openness < 1.0)) {
    throw ConfigError("model: gate_init_openness must lie in (0, 1)");
  }
  if (k_top == 0) throw ConfigError("model: k_top must be >= 1");
  if (vocab_size == 0 || d_raw_text == 0 || d_raw_ts == 0 || d_x == 0 || d_y == 0) {
    throw ConfigError("model: dims must be positive");
  }
  gate.validate();
  decoder().validate();
}

encoders::SurrogateConfig ModelConfig::surrogate() const {
  encoders::SurrogateConfig s;
  s.vocab_size = vocab_size;
  s.d_raw_text = d_raw_text;
  s.d_raw_ts = d_raw_ts;
  s.d_x = d_x;
  return s;
}

decoder::DecoderConfig ModelConfig::decoder() const {
  decoder::DecoderConfig d;
  d.input_dim = fusion_dim;
  d.layers = dec_layers;
  d.n_head = dec_heads;
  d.d_dec = d_dec;
  d.k_reg = k_reg;
  d.horizon = horizon;
  d.d_y = d_y;
  return d;
}

namespace {

std::vector<std::size_t> projection_dims(std::size_t in, std::size_t f, std::size_t depth) {
  std::vector<std::size_t> dims{in};
  for (std::size_t i = 0; i < depth; ++i) dims.push_back(f);
  return dims;
}

}  // namespace

GsFuseModel::GsFuseModel(const ModelConfig& config, std::uint64_t init_seed)
    : config_(config), text_surrogate_(config.surrogate()), ts_surrogate_(config.surrogate()) {
  config_.validate();
  using nn::ParamGroup;
  const std::size_t f = config_.fusion_dim;
  Rng rng(mix_seed(init_seed, 0x1417));
  text_proj_ = nn::Mlp::create(params_, "phi_text", ParamGroup::TextProjection,
                               projection_dims(config_.d_raw_text, f, config_.projection_depth), rng);
  ts_proj_ = nn::Mlp::create(params_, "phi_ts", ParamGroup::TsProjection,
                             projection_dims(config_.d_raw_ts, f, config_.projection_depth), rng);
  ts_to_text_ = nn::MultiHeadAttention::create(params_, "align.ca_ts_to_text", ParamGroup::Alignment, f,
                                               config_.align_heads, rng);
  text_to_ts_ = nn::MultiHeadAttention::create(params_, "align.ca_text_to_ts", ParamGroup::Alignment, f,
                                               config_.align_heads, rng);
  if (config_.cross_attention_zero_init) {
    for (const auto* mha : {&ts_to_text_, &text_to_ts_}) {
      for (auto& w : params_[mha->output().weight()].value.data()) w = 0.0;
    }
  }
  align_text_ = nn::Linear::create(params_, "align.phi_e", ParamGroup::Alignment, f, f, rng);
  align_ts_ = nn::Linear::create(params_, "align.phi_x", ParamGroup::Alignment, f, f, rng);
  {
    const double bound = std::sqrt(1.0 / static_cast<double>(f));
    Tensor w({f});
    for (auto& v : w.data()) v = rng.uniform(-bound, bound);
    salience_ = params_.add("align.salience_w", ParamGroup::Alignment, std::move(w));
  }
  gate_ = nn::Mlp::create(params_, "psi_gate", ParamGroup::Gate, {2 * f, f, 2 * f}, rng);
  {
    const auto& last = gate_.layers().back();
    for (auto& w : params_[last.weight()].value.data()) w = 0.0;
    const double p = config_.gate_init_openness;
    const double half_gap = 0.5 * config_.gate.tau_gate * std::log(p / (1.0 - p));
    auto bias = params_[*last.bias()].value.data();
    for (std::size_t i = 0; i < f; ++i) {
      bias[i] = half_gap;
      bias[f + i] = -half_gap;
    }
  }
  decoder_ = decoder::Decoder::create(params_, config_.decoder(), rng);
}

EncodedInstance GsFuseModel::encode_series(const MarketWindow& window, const FutureSegment& target) const {
  if (target.horizon() != config_.horizon || target.dim() != config_.d_y) {
    throw DataError("target shape " + shape_string(target.values.shape()) + " does not match the model horizon/d_y [" +
                    std::to_string(config_.horizon) + "x" + std::to_string(config_.d_y) + "]");
  }
  if (window.length() == 0) throw DataError("empty look-back window");
  EncodedInstance e;
  e.ts_raw = ts_surrogate_.encode(window);
  const auto last = window.values.row(window.length() - 1);
  e.last_observed = Tensor::vector(std::vector<double>(last.begin(), last.end()));
  e.anchor = Tensor({config_.d_y});
  if (config_.anchor_last_value && config_.d_y == config_.d_x) {
    std::copy(last.begin(), last.end(), e.anchor.data().begin());
  }
  e.target_levels = target.values;
  e.target = target.values;
  for (std::size_t h = 0; h < e.target.rows(); ++h) {
    auto row = e.target.row(h);
    for (std::size_t k = 0; k < row.size(); ++k) row[k] -= e.anchor[k];
  }
  return e;
}

Tensor GsFuseModel::to_levels(const Tensor& forecast, const EncodedInstance& inst) const {
  Tensor out = forecast;
  for (std::size_t h = 0; h < out.rows(); ++h) {
    auto row = out.row(h);
    for (std::size_t k = 0; k < row.size(); ++k) row[k] += inst.anchor[k];
  }
  return out;
}

EncodedInstance GsFuseModel::encode(const AlignedInstance& inst) const {
  EncodedInstance e;
  try {
    e = encode_series(inst.window, inst.target);
  } catch (const DataError& err) {
    throw DataError("instance " + std::to_string(inst.id) + ": " + err.what());
  }
  e.id = inst.id;
  e.category = inst.script.category;
  e.tokens = inst.script.token_ids;
  e.text_raw = text_surrogate_.encode(inst.script);
  e.text_informative = inst.text_informative;
  return e;
}

std::vector<EncodedInstance> GsFuseModel::encode_all(const Dataset& data) const {
  std::vector<EncodedInstance> out;
  out.reserve(data.size());
  for (const auto& inst : data) out.push_back(encode(inst));
  return out;
}

Var GsFuseModel::project_text(nn::Binder& b, const Tensor& raw) const {
  return text_proj_.forward(b, b.tape().constant(raw));
}

Var GsFuseModel::project_ts(nn::Binder& b, const Tensor& raw) const {
  return ts_proj_.forward(b, b.tape().constant(raw));
}

Var GsFuseModel::align_text(nn::Binder& b, Var hidden_text) const {
  return ops::l2_normalize_rows(align_text_.forward(b, hidden_text));
}

Var GsFuseModel::align_ts(nn::Binder& b, Var hidden_ts) const {
  return ops::l2_normalize_rows(align_ts_.forward(b, hidden_ts));
}

InstanceTrace GsFuseModel::forward_instance(nn::Binder& b, const EncodedInstance& inst, bool keep_attention) const {
  InstanceTrace tr;
  tr.hidden_text = project_text(b, inst.text_raw);
  tr.hidden_ts = project_ts(b, inst.ts_raw);
  const auto inter = alignment::bidirectional_interleave(b, ts_to_text_, text_to_ts_, tr.hidden_text, tr.hidden_ts,
                                                         keep_attention ? &tr.text_attention : nullptr);
  tr.attended_text = inter.text;
  tr.attended_ts = inter.ts;
  tr.t = alignment::pool(inter.text);
  tr.s_attended = alignment::pool(inter.ts);
  // The restricted decode and the gate's series operand must not see the
  // script, so they use the series pooled before cross-attention.
  tr.s = alignment::pool(tr.hidden_ts);
  tr.z_text = align_text(b, tr.hidden_text);
  tr.z_ts = align_ts(b, tr.hidden_ts);
  tr.salience = alignment::salience_and_anchors(tr.hidden_text, b(salience_), config_.k_top);
  tr.gate = fusion::gate_weights(b, gate_, tr.t, tr.s, config_.gate);
  tr.fused = fusion::fuse(tr.t, tr.s, tr.gate.text, tr.gate.ts);
  tr.utility = fusion::granger_utility(b, decoder_, tr.fused, tr.s, inst.target);
  return tr;
}

}  // namespace gsfuse
