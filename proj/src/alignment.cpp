#include "gsfuse/alignment.hpp"

#include <algorithm>
#include <numeric>

#include "gsfuse/errors.hpp"
#include "gsfuse/ops.hpp"

namespace gsfuse::alignment {

Interleaved bidirectional_interleave(nn::Binder& b, const nn::MultiHeadAttention& ts_to_text,
                                     const nn::MultiHeadAttention& text_to_ts, Var text, Var ts,
                                     std::vector<double>* text_weights, std::vector<double>* ts_weights) {
  if (text.cols() != ts.cols()) {
    throw DimensionError("interleave: text " + shape_string(text.shape()) + " and series " +
                         shape_string(ts.shape()) + " differ in feature dim");
  }
  return Interleaved{nn::cross_attention(b, ts_to_text, text, ts, text_weights),
                     nn::cross_attention(b, text_to_ts, ts, text, ts_weights)};
}

Var pool(Var seq) { return ops::mean_rows(seq); }

Var instance_contrastive_loss(std::span<const Var> s, std::span<const Var> t, double tau) {
  if (s.size() != t.size()) throw DimensionError("instance contrastive loss: batch sizes differ");
  if (s.size() < 2) throw ConfigError("instance contrastive loss needs at least 2 instances for negatives");
  if (!(tau > 0.0)) throw ConfigError("instance contrastive loss: temperature must be positive");
  const std::size_t n = s.size();
  Var s_hat = ops::l2_normalize_rows(ops::vconcat(s));
  Var t_hat = ops::l2_normalize_rows(ops::vconcat(t));
  Var logits = ops::scale(ops::matmul_nt(s_hat, t_hat), 1.0 / tau);  // row i: <s_i, t_k>
  Var log_probs = ops::log_softmax_rows(logits);
  std::vector<Var> diag;
  diag.reserve(n);
  for (std::size_t i = 0; i < n; ++i) diag.push_back(ops::element(log_probs, i * n + i));
  return ops::scale(ops::sum(ops::vconcat(diag)), -1.0 / static_cast<double>(n));
}

TokenStepMaps token_step_similarity(Var z_text, Var z_ts, double tau_al) {
  if (!(tau_al > 0.0)) throw ConfigError("token-step similarity: temperature must be positive");
  Var sim = ops::scale(ops::matmul_nt(z_text, z_ts), 1.0 / tau_al);
  return TokenStepMaps{sim, ops::softmax(sim, 1)};
}

Var soft_positive(Var transport, Var z_ts) { return ops::matmul(transport, z_ts); }

std::vector<std::size_t> top_k_indices(std::span<const double> values, std::size_t k) {
  std::vector<std::size_t> idx(values.size());
  std::iota(idx.begin(), idx.end(), 0);
  k = std::min(k, idx.size());
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(),
                    [&](std::size_t a, std::size_t b) { return values[a] > values[b] || (values[a] == values[b] && a < b); });
  idx.resize(k);
  return idx;
}

SalienceProfile salience_and_anchors(Var hidden_text, Var scorer, std::size_t k_top) {
  if (scorer.size() != hidden_text.cols()) {
    throw DimensionError("salience scorer of length " + std::to_string(scorer.size()) + " vs hidden dim " +
                         std::to_string(hidden_text.cols()));
  }
  Var logits = ops::reshape(ops::matmul(hidden_text, ops::reshape(scorer, {scorer.size(), 1})), {hidden_text.rows()});
  SalienceProfile profile;
  profile.scores = ops::softmax(logits, 0);
  profile.anchors = top_k_indices(profile.scores.value().data(), k_top);
  return profile;
}

Var token_contrastive_loss(std::span<const TokenAlignmentInput> batch, double tau_al, double tau_nce) {
  const std::size_t n = batch.size();
  if (n < 2) throw ConfigError("token contrastive loss needs at least 2 instances for cross-sample negatives");
  if (!(tau_nce > 0.0)) throw ConfigError("token contrastive loss: temperature must be positive");
  std::vector<Var> per_instance;
  per_instance.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& inst = batch[i];
    const auto& anchors = inst.salience.anchors;
    if (anchors.empty()) throw ConfigError("token contrastive loss: instance without anchors");
    std::vector<Var> others;
    for (std::size_t k = 0; k < n; ++k) {
      if (k != i) others.push_back(batch[k].z_ts);
    }
    Var negatives = ops::vconcat(others);
    const TokenStepMaps maps = token_step_similarity(inst.z_text, inst.z_ts, tau_al);
    Var z_anchor = ops::gather_rows(inst.z_text, anchors);
    Var positives = ops::gather_rows(soft_positive(maps.transport, inst.z_ts), anchors);
    Var pos_logit = ops::scale(ops::rowdot(z_anchor, positives), 1.0 / tau_nce);
    Var neg_logits = ops::scale(ops::matmul_nt(z_anchor, negatives), 1.0 / tau_nce);
    const std::array<Var, 2> cols = {pos_logit, neg_logits};
    Var log_probs = ops::log_softmax_rows(ops::hconcat(cols));
    const std::size_t width = log_probs.cols();
    std::vector<Var> terms;
    terms.reserve(anchors.size());
    for (std::size_t a = 0; a < anchors.size(); ++a) {
      terms.push_back(ops::mul(ops::element(inst.salience.scores, anchors[a]), ops::element(log_probs, a * width)));
    }
    per_instance.push_back(ops::sum(ops::vconcat(terms)));
  }
  return ops::scale(ops::sum(ops::vconcat(per_instance)), -1.0 / static_cast<double>(n));
}

AlignmentLosses alignment_loss(std::span<const Var> s, std::span<const Var> t,
                               std::span<const TokenAlignmentInput> tokens, double tau_ctr, double tau_al,
                               double tau_nce) {
  AlignmentLosses out;
  out.ctr = instance_contrastive_loss(s, t, tau_ctr);
  out.tok = token_contrastive_loss(tokens, tau_al, tau_nce);
  out.total = ops::add(out.ctr, out.tok);
  return out;
}

}  // namespace gsfuse::alignment
