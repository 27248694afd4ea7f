#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "gsfuse/nn.hpp"
#include "gsfuse/tape.hpp"

namespace gsfuse::alignment {

/// Cross-attended sequences: text queries over steps, step queries over tokens.
struct Interleaved {
  Var text;  // m x F
  Var ts;    // L x F
};

/// text~ = CA(Q=text, K=V=ts), ts~ = CA(Q=ts, K=V=text); each with its own weights.
Interleaved bidirectional_interleave(nn::Binder& b, const nn::MultiHeadAttention& ts_to_text,
                                     const nn::MultiHeadAttention& text_to_ts, Var text, Var ts,
                                     std::vector<double>* text_weights = nullptr,
                                     std::vector<double>* ts_weights = nullptr);

/// Arithmetic mean over rows.
Var pool(Var seq);

/// InfoNCE over in-batch negatives: for each i the positive is t_i, every other
/// t_k is a negative; embeddings are l2-normalized first. Needs N >= 2.
Var instance_contrastive_loss(std::span<const Var> s, std::span<const Var> t, double tau);

struct TokenStepMaps {
  Var similarity;  // S = Z^E (Z^X)^T / tau_al, m x L
  Var transport;   // row-wise softmax of S
};

TokenStepMaps token_step_similarity(Var z_text, Var z_ts, double tau_al);

/// Row j is sum_l P(j, l) Z^X_l.
Var soft_positive(Var transport, Var z_ts);

struct SalienceProfile {
  Var scores;                        // softmax over tokens of w^T h_j, rank-1 length m
  std::vector<std::size_t> anchors;  // top-K indices, descending score, ties to lower index
};

/// Indices of the k largest values; ties go to the lower index. Returns min(k, n) entries.
std::vector<std::size_t> top_k_indices(std::span<const double> values, std::size_t k);

SalienceProfile salience_and_anchors(Var hidden_text, Var scorer, std::size_t k_top);

/// One instance's inputs to the token-level loss.
struct TokenAlignmentInput {
  Var z_text;  // unit rows, m x F
  Var z_ts;    // unit rows, L x F
  SalienceProfile salience;
};

/// Salience-weighted InfoNCE: each anchor token's positive is its soft positive,
/// negatives are all steps of all other instances in the batch. Needs N >= 2.
Var token_contrastive_loss(std::span<const TokenAlignmentInput> batch, double tau_al, double tau_nce);

struct AlignmentLosses {
  Var ctr, tok, total;
};

AlignmentLosses alignment_loss(std::span<const Var> s, std::span<const Var> t,
                               std::span<const TokenAlignmentInput> tokens, double tau_ctr, double tau_al,
                               double tau_nce);

}  // namespace gsfuse::alignment
