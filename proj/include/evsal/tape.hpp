#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "evsal/tensor.hpp"

namespace evsal {

/// Trainable tensor with its gradient and AdamW moment state.
struct Parameter {
  Parameter() = default;
  Parameter(std::string name, Tensor value);

  std::string name;
  Tensor value;
  Tensor grad;
  Tensor first_moment;
  Tensor second_moment;
  std::int64_t step = 0;
  bool trainable = true;

  void zero_grad();
};

class Tape;

/// Handle to a value recorded on a Tape.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t dim(std::size_t axis) const { return value().dim(axis); }
  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// What a backward rule sees: the incoming gradient, the forward values, and
/// one gradient slot per input (nullptr when that input needs no gradient).
struct BackwardContext {
  const Tensor& grad_out;
  const Tensor& output;
  std::vector<const Tensor*> inputs;
  std::vector<Tensor*> grads;

  const Tensor& in(std::size_t i) const { return *inputs[i]; }
  Tensor* grad(std::size_t i) const { return grads[i]; }
};

using BackwardFn = std::function<void(const BackwardContext&)>;

/// Linear record of forward operations; backward() replays it in reverse.
/// Nodes are only linked to their inputs when some input needs a gradient,
/// so a tape with gradients disabled is a plain forward evaluator.
class Tape {
 public:
  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  /// Leaf whose gradient can be read back with grad().
  Var leaf(Tensor value);
  /// Leaf bound to a parameter; backward() adds into parameter.grad.
  Var param(Parameter& parameter);

  Var record(Tensor value, const std::vector<Var>& inputs, BackwardFn backward);

  /// Reverse accumulation from a scalar loss recorded on this tape.
  void backward(const Var& loss);

  /// Gradient of the last backward() pass with respect to v (zeros if v
  /// received none).
  Tensor grad(const Var& v) const;

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }

  /// Folds a branch decision of a non-smooth op (which side of a kink each
  /// element took) into a running hash. Two evaluations with different
  /// signatures lie on different smooth pieces.
  void note_branch(std::uint64_t decision);
  std::uint64_t branch_signature() const { return branches_; }

  bool grad_enabled() const { return grad_enabled_; }
  bool requires_grad(const Var& v) const { return nodes_[v.id()].requires_grad; }
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    Parameter* parameter = nullptr;
    bool requires_grad = false;
    bool has_grad = false;
  };

  Tensor& grad_slot(Node& node);

  void check_owned(const Var& v) const;

  std::deque<Node> nodes_;
  bool grad_enabled_;
  std::uint64_t branches_ = 0;
};

void zero_grads(std::span<Parameter* const> params);

}  // namespace evsal
