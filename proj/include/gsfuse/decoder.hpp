#pragma once

#include <cstddef>
#include <vector>

#include "gsfuse/nn.hpp"
#include "gsfuse/rng.hpp"

namespace gsfuse::decoder {

struct DecoderConfig {
  std::size_t input_dim = 1024;  // F
  std::size_t layers = 3;        // L_dec
  std::size_t n_head = 16;
  std::size_t d_dec = 1024;
  std::size_t k_reg = 2;
  std::size_t horizon = 35;  // H
  std::size_t d_y = 1;
  std::size_t ff_multiplier = 4;

  void validate() const;
};

/// Maps a context vector to an H x d_y forecast:
/// D[h] = W_in z + PE(h), Hs = blocks(D), y_h = W_out MLP_reg(Hs[h]) + b_out.
class Decoder {
 public:
  Decoder() = default;
  static Decoder create(nn::ParamStore& store, const DecoderConfig& config, Rng& rng);

  /// [H x d_dec]; rows differ only by their positional code.
  Var expand_context(nn::Binder& b, Var z) const;
  /// Stack of unmasked post-norm blocks; shape preserved.
  Var decode(nn::Binder& b, Var expanded) const;
  /// Shared per-step head; [H x d_y].
  Var regress(nn::Binder& b, Var hidden) const;
  Var forward(nn::Binder& b, Var z) const;

  const DecoderConfig& config() const { return config_; }
  const nn::Linear& input_projection() const { return w_in_; }
  const std::vector<nn::Linear>& head_layers() const { return reg_; }
  const nn::Linear& output_layer() const { return w_out_; }

 private:
  DecoderConfig config_;
  nn::Linear w_in_;
  std::vector<nn::DecoderBlock> blocks_;
  std::vector<nn::Linear> reg_;
  nn::Linear w_out_;
  Tensor positions_;  // H x d_dec
};

}  // namespace gsfuse::decoder
