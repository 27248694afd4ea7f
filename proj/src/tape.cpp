#include "gsfuse/tape.hpp"

#include "gsfuse/errors.hpp"

namespace gsfuse {

const Tensor& Var::value() const { return tape_->value(id_); }

bool Var::requires_grad() const { return tape_->requires_grad(id_); }

Var Tape::constant(Tensor value) { return leaf(std::move(value), false); }

Tensor Tape::stop(Tensor value) {
  if (replay_) {
    if (replay_pos_ >= replay_->size()) throw Error("tape: more stop-gradient points than recorded");
    value = (*replay_)[replay_pos_++];
  }
  stops_.push_back(value);
  return value;
}

void Tape::replay_stops(std::vector<Tensor> values) {
  replay_ = std::move(values);
  replay_pos_ = 0;
}

Var Tape::leaf(Tensor value, bool requires_grad) {
  nodes_.push_back(Node{std::move(value), {}, {}, requires_grad});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Tensor value, std::initializer_list<Var> parents, BackwardFn backward) {
  return record(std::move(value), std::span<const Var>(parents.begin(), parents.size()), std::move(backward));
}

Var Tape::record(Tensor value, std::span<const Var> parents, BackwardFn backward) {
  bool needs = false;
  for (const auto& p : parents) {
    if (p.tape_ != this) throw ConfigError("operands recorded on different tapes");
    needs = needs || nodes_[p.id_].requires_grad;
  }
  nodes_.push_back(Node{std::move(value), {}, needs ? std::move(backward) : BackwardFn{}, needs});
  return Var(this, nodes_.size() - 1);
}

std::span<double> Tape::grad_buffer(std::size_t id) {
  auto& node = nodes_[id];
  if (!node.requires_grad) return {};
  if (node.grad.empty()) node.grad.assign(node.value.size(), 0.0);
  return node.grad;
}

void Tape::backward(Var root) {
  if (root.tape_ != this) throw ConfigError("backward root belongs to another tape");
  if (root.size() != 1) throw DimensionError("backward root must be a scalar, got " + shape_string(root.shape()));
  for (auto& node : nodes_) node.grad.clear();
  visits_ = 0;
  auto seed = grad_buffer(root.id_);
  if (seed.empty()) return;
  seed[0] = 1.0;
  for (std::size_t id = root.id_ + 1; id-- > 0;) {
    auto& node = nodes_[id];
    if (!node.backward || node.grad.empty()) continue;
    node.backward(*this, id);
    ++visits_;
  }
}

Tensor Tape::grad(Var v) const {
  const auto& node = nodes_[v.id_];
  if (node.grad.empty()) return Tensor(node.value.shape());
  return Tensor(node.value.shape(), node.grad);
}

bool Tape::has_grad(Var v) const { return !nodes_[v.id_].grad.empty(); }

}  // namespace gsfuse
