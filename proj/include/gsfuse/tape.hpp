#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <span>
#include <optional>
#include <vector>

#include "gsfuse/tensor.hpp"

namespace gsfuse {

class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  std::size_t size() const { return value().size(); }
  double item() const { return value().item(); }
  bool requires_grad() const;
  bool valid() const { return tape_ != nullptr; }
  std::size_t id() const { return id_; }
  Tape& tape() const { return *tape_; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Ordered record of primitive applications. Nodes are appended in creation
/// order, so walking ids backwards is a reverse topological order; backward()
/// visits each node at most once and accumulates in that fixed order.
class Tape {
 public:
  /// Pushes gradient from the node `self` into its parents.
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  Var leaf(Tensor value, bool requires_grad = true);
  /// Records a derived value. The node requires grad iff any parent does;
  /// otherwise `backward` is dropped.
  Var record(Tensor value, std::initializer_list<Var> parents, BackwardFn backward);
  Var record(Tensor value, std::span<const Var> parents, BackwardFn backward);

  /// Seeds d(root)/d(root) = 1 and runs the reverse sweep. Root must be a scalar.
  void backward(Var root);

  /// Gradient accumulated for a node; zeros if nothing reached it.
  Tensor grad(Var v) const;
  bool has_grad(Var v) const;

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  /// Gradient buffer of a node, allocated on first use. Empty span when the node
  /// does not require grad.
  std::span<double> grad_buffer(std::size_t id);
  std::span<const double> grad_view(std::size_t id) const { return nodes_[id].grad; }

  std::size_t size() const { return nodes_.size(); }
  /// Number of backward closures executed by the last backward() call.
  std::size_t last_backward_visits() const { return visits_; }

  /// Value of a stop-gradient point. Each call is logged in order; once
  /// replay_stops() is set, the logged value of the same point comes back
  /// instead, so finite-difference probes see the analytic pass's constants.
  Tensor stop(Tensor value);
  const std::vector<Tensor>& stops() const { return stops_; }
  void replay_stops(std::vector<Tensor> values);

 private:
  struct Node {
    Tensor value;
    std::vector<double> grad;
    BackwardFn backward;
    bool requires_grad = false;
  };

  std::deque<Node> nodes_;  // stable addresses: values stay valid while the tape grows
  std::size_t visits_ = 0;
  std::vector<Tensor> stops_;
  std::optional<std::vector<Tensor>> replay_;
  std::size_t replay_pos_ = 0;
};

}  // namespace gsfuse
