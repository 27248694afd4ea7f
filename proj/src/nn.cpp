#include "gsfuse/nn.hpp"

#include <cmath>

#include "gsfuse/errors.hpp"
#include "gsfuse/ops.hpp"

namespace gsfuse::nn {

namespace {
constexpr std::array<std::string_view, kParamGroupCount> kGroupNames = {
    "ts_projection", "text_projection", "alignment", "gate", "decoder", "head"};
}

std::string_view group_name(ParamGroup group) { return kGroupNames[static_cast<std::size_t>(group)]; }

ParamGroup group_from_name(std::string_view name) {
  for (std::size_t i = 0; i < kGroupNames.size(); ++i) {
    if (kGroupNames[i] == name) return static_cast<ParamGroup>(i);
  }
  throw DataError("unknown parameter group '" + std::string(name) + "'");
}

GroupSet GroupSet::all() {
  GroupSet s;
  for (std::size_t i = 0; i < kParamGroupCount; ++i) s.insert(static_cast<ParamGroup>(i));
  return s;
}

ParamRef ParamStore::add(std::string name, ParamGroup group, Tensor init) {
  if (find(name)) throw ConfigError("duplicate parameter name '" + name + "'");
  params_.push_back(Parameter{std::move(name), group, std::move(init)});
  return ParamRef{params_.size() - 1};
}

std::optional<ParamRef> ParamStore::find(std::string_view name) const {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (params_[i].name == name) return ParamRef{i};
  }
  return std::nullopt;
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

Binder::Binder(Tape& tape, const ParamStore& store, GroupSet trainable)
    : tape_(tape), store_(store), trainable_(trainable), bound_(store.size()) {}

Var Binder::operator()(ParamRef ref) {
  auto& slot = bound_.at(ref.index);
  if (!slot) {
    const auto& p = store_[ref];
    slot = tape_.leaf(p.value, trainable_.contains(p.group));
  }
  return *slot;
}

std::vector<Tensor> Binder::gradients() const {
  std::vector<Tensor> grads;
  grads.reserve(store_.size());
  for (std::size_t i = 0; i < store_.size(); ++i) {
    if (bound_[i]) {
      grads.push_back(tape_.grad(*bound_[i]));
    } else {
      grads.push_back(Tensor::zeros_like(store_.at(i).value));
    }
  }
  return grads;
}

bool Binder::received_gradient(ParamRef ref) const {
  const auto& slot = bound_.at(ref.index);
  if (!slot || !tape_.has_grad(*slot)) return false;
  for (double g : tape_.grad_view(slot->id())) {
    if (g != 0.0) return true;
  }
  return false;
}

Linear Linear::create(ParamStore& store, const std::string& name, ParamGroup group, std::size_t in, std::size_t out,
                      Rng& rng, bool bias) {
  if (in == 0 || out == 0) throw ConfigError("linear layer '" + name + "' needs positive dims");
  Linear layer;
  layer.in_ = in;
  layer.out_ = out;
  const double bound = std::sqrt(1.0 / static_cast<double>(in));
  Tensor w({out, in});
  for (auto& v : w.data()) v = rng.uniform(-bound, bound);
  layer.weight_ = store.add(name + ".weight", group, std::move(w));
  if (bias) layer.bias_ = store.add(name + ".bias", group, Tensor({out}));
  return layer;
}

Var Linear::forward(Binder& b, Var x) const {
  if (x.cols() != in_) {
    throw DimensionError("linear: input " + shape_string(x.shape()) + " does not match in_dim " + std::to_string(in_));
  }
  return ops::linear(x, b(weight_), bias_ ? b(*bias_) : Var{});
}

Mlp Mlp::create(ParamStore& store, const std::string& name, ParamGroup group, const std::vector<std::size_t>& dims,
                Rng& rng) {
  if (dims.size() < 2) throw ConfigError("mlp '" + name + "' needs at least input and output dims");
  Mlp mlp;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    mlp.layers_.push_back(Linear::create(store, name + "." + std::to_string(i), group, dims[i], dims[i + 1], rng));
  }
  return mlp;
}

Var Mlp::forward(Binder& b, Var x) const {
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    x = layers_[i].forward(b, x);
    if (i + 1 < layers_.size()) x = ops::gelu(x);
  }
  return x;
}

LayerNorm LayerNorm::create(ParamStore& store, const std::string& name, ParamGroup group, std::size_t dim) {
  LayerNorm ln;
  ln.gain_ = store.add(name + ".gain", group, Tensor({dim}, std::vector<double>(dim, 1.0)));
  ln.bias_ = store.add(name + ".bias", group, Tensor({dim}));
  return ln;
}

Var LayerNorm::forward(Binder& b, Var x) const { return ops::layernorm(x, b(gain_), b(bias_)); }

MultiHeadAttention MultiHeadAttention::create(ParamStore& store, const std::string& name, ParamGroup group,
                                              std::size_t dim, std::size_t n_head, Rng& rng) {
  if (n_head == 0 || dim % n_head != 0) {
    throw ConfigError("attention '" + name + "': dim " + std::to_string(dim) + " not divisible by " +
                      std::to_string(n_head) + " heads");
  }
  MultiHeadAttention mha;
  mha.dim_ = dim;
  mha.n_head_ = n_head;
  mha.q_ = Linear::create(store, name + ".q", group, dim, dim, rng);
  mha.k_ = Linear::create(store, name + ".k", group, dim, dim, rng);
  mha.v_ = Linear::create(store, name + ".v", group, dim, dim, rng);
  mha.o_ = Linear::create(store, name + ".o", group, dim, dim, rng);
  return mha;
}

Var MultiHeadAttention::forward(Binder& b, Var queries, Var keys_values, std::vector<double>* weights) const {
  if (queries.cols() != dim_ || keys_values.cols() != dim_) {
    throw DimensionError("attention: feature dims " + shape_string(queries.shape()) + " and " +
                         shape_string(keys_values.shape()) + " must both be " + std::to_string(dim_));
  }
  Var q = q_.forward(b, queries);
  Var k = k_.forward(b, keys_values);
  Var v = v_.forward(b, keys_values);
  return o_.forward(b, ops::attention(q, k, v, n_head_, weights));
}

Var cross_attention(Binder& b, const MultiHeadAttention& mha, Var q_seq, Var kv_seq, std::vector<double>* weights) {
  return ops::add(q_seq, mha.forward(b, q_seq, kv_seq, weights));
}

DecoderBlock DecoderBlock::create(ParamStore& store, const std::string& name, ParamGroup group, std::size_t dim,
                                  std::size_t n_head, std::size_t ff_dim, Rng& rng) {
  DecoderBlock block;
  block.self_attn_ = MultiHeadAttention::create(store, name + ".attn", group, dim, n_head, rng);
  block.norm1_ = LayerNorm::create(store, name + ".ln1", group, dim);
  block.feed_forward_ = Mlp::create(store, name + ".ff", group, {dim, ff_dim, dim}, rng);
  block.norm2_ = LayerNorm::create(store, name + ".ln2", group, dim);
  return block;
}

Var DecoderBlock::forward(Binder& b, Var x) const {
  Var x1 = norm1_.forward(b, ops::add(x, self_attn_.forward(b, x, x)));
  return norm2_.forward(b, ops::add(x1, feed_forward_.forward(b, x1)));
}

Tensor positional_encoding(std::size_t h, std::size_t dim) {
  Tensor pe({dim});
  for (std::size_t i = 0; i < dim; ++i) {
    const std::size_t pair = i / 2;
    const double freq = std::pow(10000.0, -2.0 * static_cast<double>(pair) / static_cast<double>(dim));
    const double angle = static_cast<double>(h) * freq;
    pe[i] = (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
  }
  return pe;
}

}  // namespace gsfuse::nn
