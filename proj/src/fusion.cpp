#include "gsfuse/fusion.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "gsfuse/errors.hpp"
#include "gsfuse/ops.hpp"

namespace gsfuse::fusion {

void GateConfig::validate() const {
  if (!(tau_gate > 0.0)) throw ConfigError("gate: tau_gate must be positive");
  if (!(epsilon > 0.0)) throw ConfigError("gate: epsilon must be positive");
  if (!(clip_c > 0.0)) throw ConfigError("gate: clipping threshold c must be positive");
  if (!(gamma > 0.0)) throw ConfigError("gate: gamma must be positive");
}

double sigmoid(double x) { return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); }

GateWeights gate_weights(nn::Binder& b, const nn::Mlp& psi, Var t, Var s, const GateConfig& config) {
  const std::size_t f = t.size();
  if (s.size() != f) throw DimensionError("gate: embeddings of different lengths");
  if (psi.in_dim() != 2 * f || psi.out_dim() != 2 * f) {
    throw DimensionError("gate: psi_gate must map 2F -> 2F for F = " + std::to_string(f));
  }
  const std::array<Var, 2> parts = {ops::detach(t), ops::detach(s)};
  Var logits = psi.forward(b, ops::hconcat(parts));
  Var a_text = ops::slice(logits, 0, f);
  Var a_ts = ops::slice(logits, f, f);
  // Two-way softmax per feature equals a sigmoid of the scaled logit gap.
  Var alpha_text = ops::sigmoid(ops::scale(ops::sub(a_text, a_ts), 1.0 / config.tau_gate));
  Var alpha_ts = ops::add_scalar(ops::scale(alpha_text, -1.0), 1.0);
  return GateWeights{alpha_text, alpha_ts, ops::mean(alpha_text)};
}

Var fuse(Var t, Var s, Var alpha_text, Var alpha_ts) {
  if (t.shape() != s.shape() || alpha_text.shape() != t.shape() || alpha_ts.shape() != t.shape()) {
    throw DimensionError("fuse: operands must share shape " + shape_string(t.shape()));
  }
  return ops::add(ops::mul(alpha_text, t), ops::mul(alpha_ts, s));
}

GrangerUtility granger_utility(nn::Binder& b, const decoder::Decoder& dec, Var z, Var s, const Tensor& target) {
  const auto& cfg = dec.config();
  if (target.rows() != cfg.horizon || target.cols() != cfg.d_y) {
    throw DimensionError("granger utility: target " + shape_string(target.shape()) + " but decoder emits [" +
                         std::to_string(cfg.horizon) + "x" + std::to_string(cfg.d_y) + "]");
  }
  GrangerUtility out;
  Var y = b.tape().constant(target);
  out.forecast_full = dec.forward(b, z);
  out.forecast_ts = dec.forward(b, s);
  out.loss_full = ops::mse(out.forecast_full, y);
  out.loss_ts = ops::mse(out.forecast_ts, y);
  out.delta = b.tape().stop(Tensor::scalar(out.loss_ts.item() - out.loss_full.item())).item();
  return out;
}

Responsibility responsibility(std::span<const double> deltas, const GateConfig& config) {
  if (deltas.empty()) throw ConfigError("responsibility: empty batch");
  Responsibility out;
  double mean_abs = 0.0;
  for (double d : deltas) mean_abs += std::abs(d);
  mean_abs /= static_cast<double>(deltas.size());
  out.s_delta = std::max(mean_abs, config.epsilon);
  out.tau_gc = out.s_delta / config.gamma;
  out.r.reserve(deltas.size());
  for (double d : deltas) out.r.push_back(sigmoid(std::clamp(d / out.tau_gc, -config.clip_c, config.clip_c)));
  return out;
}

Var gate_loss(std::span<const Var> openness, std::span<const double> r) {
  if (openness.size() != r.size()) throw DimensionError("gate loss: openness and target batches differ in length");
  if (openness.empty()) throw ConfigError("gate loss: empty batch");
  Var alpha = ops::vconcat(openness);
  Var target = alpha.tape().constant(Tensor({r.size(), 1}, std::vector<double>(r.begin(), r.end())));
  return ops::mse(alpha, target);
}

}  // namespace gsfuse::fusion
