#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "gsfuse/alignment.hpp"
#include "gsfuse/data.hpp"
#include "gsfuse/decoder.hpp"
#include "gsfuse/encoders.hpp"
#include "gsfuse/fusion.hpp"
#include "gsfuse/nn.hpp"

namespace gsfuse {

/// Architecture hyperparameters. Defaults follow the published table; desk()
/// shrinks the widths for single-core runs.
struct ModelConfig {
  std::size_t fusion_dim = 1024;  // F
  std::size_t vocab_size = 64;
  std::size_t d_raw_text = 64;
  std::size_t d_raw_ts = 32;
  std::size_t d_x = 1;
  std::size_t d_y = 1;
  std::size_t horizon = 35;
  std::size_t projection_depth = 2;
  std::size_t align_heads = 8;
  double tau_ctr = 0.1;
  double tau_al = 0.2;
  double tau_nce = 0.07;
  std::size_t k_top = 256;
  fusion::GateConfig gate;
  std::size_t dec_layers = 3;
  std::size_t dec_heads = 16;
  std::size_t d_dec = 1024;
  std::size_t k_reg = 2;
  /// Decode the horizon relative to the last observed value (d_y = d_x only);
  /// forecasts are shifted back before evaluation.
  bool anchor_last_value = true;
  /// Openness of the gate before joint training. The last psi_gate layer starts
  /// at zero weights with biases giving this alpha for every feature; 0.5 is
  /// the symmetric zero-logit start.
  double gate_init_openness = 0.5;
  /// Start both cross-attention output projections at zero, so the joint stage
  /// begins from the pooled embeddings the earlier stages trained on.
  bool cross_attention_zero_init = true;

  static ModelConfig paper();
  static ModelConfig desk();
  void validate() const;
  encoders::SurrogateConfig surrogate() const;
  decoder::DecoderConfig decoder() const;
};

/// Frozen surrogate features of one instance plus what evaluation needs.
struct EncodedInstance {
  std::int64_t id = 0;
  EventCategory category = EventCategory::Fomc;
  std::vector<int> tokens;
  Tensor text_raw;  // m x d_raw_text
  Tensor ts_raw;    // L x d_raw_ts
  Tensor target;    // H x d_y, relative to `anchor` when anchoring is on
  Tensor anchor;    // d_y offset added back to forecasts (zeros without anchoring)
  Tensor target_levels;  // H x d_y as observed
  Tensor last_observed;  // d_x values at the release time
  std::optional<bool> text_informative;
};

/// Everything one multimodal forward pass produces for a single instance.
struct InstanceTrace {
  Var hidden_text, hidden_ts;      // H^E, H^X
  Var attended_text, attended_ts;  // after bidirectional cross-attention
  Var t;                           // pooled cross-attended text
  Var s_attended;                  // pooled cross-attended series (contrastive pair of t)
  Var s;                           // pooled series before cross-attention: text-free
  Var z_text, z_ts;                // unit-row alignment space
  alignment::SalienceProfile salience;
  fusion::GateWeights gate;
  Var fused;
  fusion::GrangerUtility utility;
  std::vector<double> text_attention;  // per-head maps of text queries over steps
};

class GsFuseModel {
 public:
  GsFuseModel(const ModelConfig& config, std::uint64_t init_seed);

  const ModelConfig& config() const { return config_; }
  nn::ParamStore& params() { return params_; }
  const nn::ParamStore& params() const { return params_; }

  EncodedInstance encode(const AlignedInstance& inst) const;
  std::vector<EncodedInstance> encode_all(const Dataset& data) const;
  /// Series-only example (no script), e.g. a stage-1 sliding window.
  EncodedInstance encode_series(const MarketWindow& window, const FutureSegment& target) const;
  /// Forecast in model space -> forecast in observed levels.
  Tensor to_levels(const Tensor& forecast, const EncodedInstance& inst) const;

  /// phi_text: surrogate rows -> m x F.
  Var project_text(nn::Binder& b, const Tensor& raw) const;
  /// phi_ts: surrogate rows -> L x F.
  Var project_ts(nn::Binder& b, const Tensor& raw) const;
  /// Unit-norm rows of the alignment projections.
  Var align_text(nn::Binder& b, Var hidden_text) const;
  Var align_ts(nn::Binder& b, Var hidden_ts) const;

  InstanceTrace forward_instance(nn::Binder& b, const EncodedInstance& inst, bool keep_attention = false) const;

  const decoder::Decoder& decoder() const { return decoder_; }
  const nn::Mlp& gate_mlp() const { return gate_; }
  const nn::MultiHeadAttention& ts_to_text() const { return ts_to_text_; }
  const nn::MultiHeadAttention& text_to_ts() const { return text_to_ts_; }
  nn::ParamRef salience_scorer() const { return salience_; }
  const nn::Mlp& text_projection() const { return text_proj_; }
  const nn::Mlp& ts_projection() const { return ts_proj_; }

 private:
  ModelConfig config_;
  nn::ParamStore params_;
  encoders::TextSurrogate text_surrogate_;
  encoders::TsSurrogate ts_surrogate_;
  nn::Mlp text_proj_, ts_proj_;
  nn::MultiHeadAttention ts_to_text_, text_to_ts_;
  nn::Linear align_text_, align_ts_;
  nn::ParamRef salience_;
  nn::Mlp gate_;
  decoder::Decoder decoder_;
};

}  // namespace gsfuse
