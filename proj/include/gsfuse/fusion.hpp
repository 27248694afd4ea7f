#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "gsfuse/decoder.hpp"
#include "gsfuse/nn.hpp"
#include "gsfuse/tape.hpp"

namespace gsfuse::fusion {

struct GateConfig {
  double tau_gate = 1.0;
  double gamma = 1.0;
  double epsilon = 1e-6;
  double clip_c = 6.0;

  void validate() const;
};

struct GateWeights {
  Var text;      // alpha^E, rank-1 length F, entries in (0, 1)
  Var ts;        // alpha^X = 1 - alpha^E
  Var openness;  // scalar mean of alpha^E
};

/// psi_gate([t; s]) -> (a^E, a^X); alpha^E_f = exp(a^E_f/tau) / (exp(a^E_f/tau) + exp(a^X_f/tau)).
/// The gate reads detached copies of t and s, so gate supervision reaches psi_gate only.
GateWeights gate_weights(nn::Binder& b, const nn::Mlp& psi, Var t, Var s, const GateConfig& config);

/// Feature-wise convex combination alpha^E * t + alpha^X * s.
Var fuse(Var t, Var s, Var alpha_text, Var alpha_ts);

struct GrangerUtility {
  Var loss_full;  // MSE of the fused forecast
  Var loss_ts;    // MSE of the restricted forecast
  Var forecast_full;
  Var forecast_ts;
  double delta = 0.0;  // loss_ts - loss_full, detached
};

/// Decodes the fused context and the series-only context with the same decoder.
GrangerUtility granger_utility(nn::Binder& b, const decoder::Decoder& dec, Var z, Var s, const Tensor& target);

struct Responsibility {
  std::vector<double> r;
  double s_delta = 0.0;  // max(mean |delta|, epsilon)
  double tau_gc = 0.0;   // s_delta / gamma
};

/// r_i = sigmoid(clip(delta_i / tau_gc, -c, c)) with tau_gc from the batch scale.
Responsibility responsibility(std::span<const double> deltas, const GateConfig& config);

/// Mean squared gap between openness and the constant targets.
Var gate_loss(std::span<const Var> openness, std::span<const double> r);

double sigmoid(double x);

}  // namespace gsfuse::fusion
