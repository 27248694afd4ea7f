#include "gsfuse/decoder.hpp"

#include <algorithm>

#include "gsfuse/errors.hpp"
#include "gsfuse/ops.hpp"

namespace gsfuse::decoder {

void DecoderConfig::validate() const {
  if (layers == 0) throw ConfigError("decoder: L_dec must be >= 1");
  if (k_reg == 0) throw ConfigError("decoder: K_reg must be >= 1");
  if (n_head == 0 || d_dec % n_head != 0) {
    throw ConfigError("decoder: d_dec " + std::to_string(d_dec) + " not divisible by n_head " + std::to_string(n_head));
  }
  if (horizon == 0) throw ConfigError("decoder: horizon must be >= 1");
  if (input_dim == 0 || d_y == 0 || ff_multiplier == 0) throw ConfigError("decoder: dims must be positive");
}

Decoder Decoder::create(nn::ParamStore& store, const DecoderConfig& config, Rng& rng) {
  config.validate();
  using nn::ParamGroup;
  Decoder dec;
  dec.config_ = config;
  dec.w_in_ = nn::Linear::create(store, "decoder.w_in", ParamGroup::Decoder, config.input_dim, config.d_dec, rng, false);
  for (std::size_t l = 0; l < config.layers; ++l) {
    dec.blocks_.push_back(nn::DecoderBlock::create(store, "decoder.block" + std::to_string(l), ParamGroup::Decoder,
                                                   config.d_dec, config.n_head,
                                                   config.ff_multiplier * config.d_dec, rng));
  }
  for (std::size_t k = 0; k < config.k_reg; ++k) {
    dec.reg_.push_back(nn::Linear::create(store, "head.mlp" + std::to_string(k), ParamGroup::Head, config.d_dec,
                                          config.d_dec, rng));
  }
  dec.w_out_ = nn::Linear::create(store, "head.out", ParamGroup::Head, config.d_dec, config.d_y, rng);
  dec.positions_ = Tensor({config.horizon, config.d_dec});
  for (std::size_t h = 0; h < config.horizon; ++h) {
    const Tensor pe = nn::positional_encoding(h + 1, config.d_dec);
    std::copy(pe.data().begin(), pe.data().end(), dec.positions_.row(h).begin());
  }
  return dec;
}

Var Decoder::expand_context(nn::Binder& b, Var z) const {
  if (z.size() != config_.input_dim) {
    throw DimensionError("decoder: context of shape " + shape_string(z.shape()) + " but input dim is " +
                         std::to_string(config_.input_dim));
  }
  Var projected = w_in_.forward(b, ops::reshape(z, {config_.input_dim}));
  return ops::add_row(b.tape().constant(positions_), projected);
}

Var Decoder::decode(nn::Binder& b, Var expanded) const {
  for (const auto& block : blocks_) expanded = block.forward(b, expanded);
  return expanded;
}

Var Decoder::regress(nn::Binder& b, Var hidden) const {
  for (const auto& layer : reg_) hidden = ops::gelu(layer.forward(b, hidden));
  return w_out_.forward(b, hidden);
}

Var Decoder::forward(nn::Binder& b, Var z) const { return regress(b, decode(b, expand_context(b, z))); }

}  // namespace gsfuse::decoder
