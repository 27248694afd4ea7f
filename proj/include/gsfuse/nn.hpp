#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "gsfuse/rng.hpp"
#include "gsfuse/tape.hpp"
#include "gsfuse/tensor.hpp"

namespace gsfuse::nn {

/// Parameter groups; training stages freeze or update whole groups.
enum class ParamGroup : std::uint8_t {
  TsProjection,
  TextProjection,
  Alignment,
  Gate,
  Decoder,
  Head,
};
inline constexpr std::size_t kParamGroupCount = 6;

std::string_view group_name(ParamGroup group);
ParamGroup group_from_name(std::string_view name);

class GroupSet {
 public:
  GroupSet() = default;
  GroupSet(std::initializer_list<ParamGroup> groups) {
    for (auto g : groups) insert(g);
  }
  static GroupSet all();
  static GroupSet none() { return {}; }

  void insert(ParamGroup g) { bits_ |= bit(g); }
  bool contains(ParamGroup g) const { return (bits_ & bit(g)) != 0; }
  friend bool operator==(GroupSet, GroupSet) = default;

 private:
  static std::uint32_t bit(ParamGroup g) { return 1u << static_cast<unsigned>(g); }
  std::uint32_t bits_ = 0;
};

struct Parameter {
  std::string name;
  ParamGroup group;
  Tensor value;
};

struct ParamRef {
  std::size_t index = 0;
};

/// Owns every trainable tensor of a model in registration order.
class ParamStore {
 public:
  ParamRef add(std::string name, ParamGroup group, Tensor init);

  Parameter& operator[](ParamRef ref) { return params_[ref.index]; }
  const Parameter& operator[](ParamRef ref) const { return params_[ref.index]; }
  Parameter& at(std::size_t i) { return params_[i]; }
  const Parameter& at(std::size_t i) const { return params_[i]; }
  std::size_t size() const { return params_.size(); }
  std::optional<ParamRef> find(std::string_view name) const;
  std::size_t scalar_count() const;

  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

 private:
  std::vector<Parameter> params_;
};

/// Binds parameters to leaves of one tape on first use. Parameters outside the
/// trainable set enter as constants so no gradient is computed for them.
class Binder {
 public:
  Binder(Tape& tape, const ParamStore& store, GroupSet trainable = GroupSet::all());

  Var operator()(ParamRef ref);
  Tape& tape() { return tape_; }
  const ParamStore& store() const { return store_; }

  /// Gradient of every parameter after tape.backward(); zeros when unbound or frozen.
  std::vector<Tensor> gradients() const;
  /// Whether any gradient reached the parameter.
  bool received_gradient(ParamRef ref) const;

 private:
  Tape& tape_;
  const ParamStore& store_;
  GroupSet trainable_;
  std::vector<std::optional<Var>> bound_;
};

/// Affine map y = x W^T + b with W [out x in]. Weights start uniform in
/// +-sqrt(1/in), biases at zero.
class Linear {
 public:
  Linear() = default;
  static Linear create(ParamStore& store, const std::string& name, ParamGroup group, std::size_t in,
                       std::size_t out, Rng& rng, bool bias = true);

  Var forward(Binder& b, Var x) const;
  std::size_t in_dim() const { return in_; }
  std::size_t out_dim() const { return out_; }
  ParamRef weight() const { return weight_; }
  std::optional<ParamRef> bias() const { return bias_; }

 private:
  ParamRef weight_;
  std::optional<ParamRef> bias_;
  std::size_t in_ = 0, out_ = 0;
};

/// Affine layers alternating with GELU; the last layer is affine only.
class Mlp {
 public:
  Mlp() = default;
  /// dims = {in, hidden..., out}; at least two entries.
  static Mlp create(ParamStore& store, const std::string& name, ParamGroup group, const std::vector<std::size_t>& dims,
                    Rng& rng);

  Var forward(Binder& b, Var x) const;
  const std::vector<Linear>& layers() const { return layers_; }
  std::size_t in_dim() const { return layers_.front().in_dim(); }
  std::size_t out_dim() const { return layers_.back().out_dim(); }

 private:
  std::vector<Linear> layers_;
};

class LayerNorm {
 public:
  LayerNorm() = default;
  static LayerNorm create(ParamStore& store, const std::string& name, ParamGroup group, std::size_t dim);
  Var forward(Binder& b, Var x) const;

 private:
  ParamRef gain_, bias_;
};

/// Multi-head attention with query/key/value/output projections.
class MultiHeadAttention {
 public:
  MultiHeadAttention() = default;
  static MultiHeadAttention create(ParamStore& store, const std::string& name, ParamGroup group, std::size_t dim,
                                   std::size_t n_head, Rng& rng);

  /// Attended values for each query row (no residual). `weights` receives the
  /// per-head maps as in ops::attention.
  Var forward(Binder& b, Var queries, Var keys_values, std::vector<double>* weights = nullptr) const;
  std::size_t dim() const { return dim_; }
  std::size_t n_head() const { return n_head_; }
  const Linear& output() const { return o_; }

 private:
  Linear q_, k_, v_, o_;
  std::size_t dim_ = 0, n_head_ = 1;
};

/// q_seq + MHA(q_seq, kv_seq): every output row is the query plus a convex
/// combination of projected values.
Var cross_attention(Binder& b, const MultiHeadAttention& mha, Var q_seq, Var kv_seq,
                    std::vector<double>* weights = nullptr);

/// Post-norm block: x1 = LN(x + SelfAttn(x)); out = LN(x1 + FF(x1)). Unmasked.
class DecoderBlock {
 public:
  DecoderBlock() = default;
  static DecoderBlock create(ParamStore& store, const std::string& name, ParamGroup group, std::size_t dim,
                             std::size_t n_head, std::size_t ff_dim, Rng& rng);

  Var forward(Binder& b, Var x) const;

 private:
  MultiHeadAttention self_attn_;
  LayerNorm norm1_, norm2_;
  Mlp feed_forward_;
};

/// Sinusoidal code for horizon index h: PE[2k] = sin(h / 10000^(2k/d)),
/// PE[2k+1] = cos(h / 10000^(2k/d)).
Tensor positional_encoding(std::size_t h, std::size_t dim);

}  // namespace gsfuse::nn
