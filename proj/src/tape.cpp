#include "evsal/tape.hpp"

#include "evsal/error.hpp"
#include "evsal/kernels.hpp"

namespace evsal {

Parameter::Parameter(std::string n, Tensor v)
    : name(std::move(n)),
      value(std::move(v)),
      grad(value.shape()),
      first_moment(value.shape()),
      second_moment(value.shape()) {}

void Parameter::zero_grad() {
  if (grad.shape() != value.shape()) {
    grad = Tensor(value.shape());
  } else {
    grad.fill(0.0);
  }
}

void zero_grads(std::span<Parameter* const> params) {
  for (Parameter* p : params) p->zero_grad();
}

const Tensor& Var::value() const {
  if (!tape_) throw Error(ErrorKind::DetachedNode, "empty variable handle");
  return tape_->value(id_);
}

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, {}, {}, nullptr, false, false});
  return Var(this, nodes_.size() - 1);
}

Var Tape::leaf(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, {}, {}, nullptr, grad_enabled_, false});
  return Var(this, nodes_.size() - 1);
}

Var Tape::param(Parameter& parameter) {
  const bool track = grad_enabled_ && parameter.trainable;
  nodes_.push_back(Node{parameter.value, {}, {}, {}, track ? &parameter : nullptr, track, false});
  return Var(this, nodes_.size() - 1);
}

void Tape::check_owned(const Var& v) const {
  if (v.tape() != this || v.id() >= nodes_.size()) {
    throw Error(ErrorKind::DetachedNode, "variable does not belong to this tape");
  }
}

void Tape::note_branch(std::uint64_t decision) {
  branches_ ^= decision + 0x9e3779b97f4a7c15ULL + (branches_ << 6) + (branches_ >> 2);
}

Var Tape::record(Tensor value, const std::vector<Var>& inputs, BackwardFn backward) {
  bool needs = false;
  for (const Var& in : inputs) {
    check_owned(in);
    needs = needs || nodes_[in.id()].requires_grad;
  }
  Node node{std::move(value), {}, {}, {}, nullptr, false, false};
  if (grad_enabled_ && needs) {
    node.requires_grad = true;
    node.backward = std::move(backward);
    node.inputs.reserve(inputs.size());
    for (const Var& in : inputs) node.inputs.push_back(in.id());
  }
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Tensor& Tape::grad_slot(Node& node) {
  if (!node.has_grad) {
    node.grad = Tensor(node.value.shape());
    node.has_grad = true;
  }
  return node.grad;
}

void Tape::backward(const Var& loss) {
  check_owned(loss);
  const Node& root = nodes_[loss.id()];
  if (root.value.numel() != 1) {
    throw Error(ErrorKind::NotScalarLoss, "loss has shape " + shape_string(root.value.shape()));
  }
  for (Node& n : nodes_) {
    n.grad = Tensor();
    n.has_grad = false;
  }
  if (!root.requires_grad) return;

  grad_slot(nodes_[loss.id()]).fill(1.0);
  for (std::size_t id = loss.id() + 1; id-- > 0;) {
    Node& node = nodes_[id];
    if (!node.requires_grad || !node.has_grad) continue;
    if (node.backward) {
      BackwardContext ctx{node.grad, node.value, {}, {}};
      ctx.inputs.reserve(node.inputs.size());
      ctx.grads.reserve(node.inputs.size());
      for (std::size_t in : node.inputs) {
        Node& src = nodes_[in];
        ctx.inputs.push_back(&src.value);
        ctx.grads.push_back(src.requires_grad ? &grad_slot(src) : nullptr);
      }
      node.backward(ctx);
    }
    if (node.parameter) {
      Parameter& p = *node.parameter;
      if (p.grad.shape() != p.value.shape()) p.grad = Tensor(p.value.shape());
      kernels::add(p.grad.ptr(), node.grad.ptr(), p.grad.ptr(), p.grad.numel());
    }
  }
}

Tensor Tape::grad(const Var& v) const {
  check_owned(v);
  const Node& n = nodes_[v.id()];
  return n.has_grad ? n.grad : Tensor(n.value.shape());
}

}  // namespace evsal
