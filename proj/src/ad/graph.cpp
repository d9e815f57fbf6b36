#include "chronoalign/ad/graph.hpp"

#include <algorithm>
#include <stdexcept>

namespace chronoalign::ad {

Var Graph::constant(Tensor value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Graph::param(Parameter& p) {
  if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return Var(this, it->second);
  Node n;
  n.value = p.value;
  n.param = &p;
  n.requires_grad = record_;
  nodes_.push_back(std::move(n));
  const int id = static_cast<int>(nodes_.size()) - 1;
  param_nodes_.emplace(&p, id);
  return Var(this, id);
}

Tensor& Graph::grad(int id) {
  Node& n = nodes_[id];
  if (n.grad.empty() && !n.value.empty()) n.grad = Tensor(n.value.rows(), n.value.cols());
  return n.grad;
}

Var Graph::emit(Tensor value, const std::vector<int>& inputs, BackwardFn fn) {
  Node n;
  n.value = std::move(value);
  if (record_) {
    for (int in : inputs) {
      if (nodes_[in].requires_grad) {
        n.requires_grad = true;
        break;
      }
    }
    if (n.requires_grad) {
      n.inputs = inputs;
      n.backward = std::move(fn);
    }
  }
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

std::vector<int> Graph::topological_from(int root) const {
  std::vector<int> order;
  std::vector<char> state(nodes_.size(), 0);  // 0 new, 1 open, 2 done
  std::vector<std::pair<int, std::size_t>> stack{{root, 0}};
  state[root] = 1;
  while (!stack.empty()) {
    auto& [id, next] = stack.back();
    const auto& inputs = nodes_[id].inputs;
    if (next < inputs.size()) {
      const int child = inputs[next++];
      if (state[child] == 0 && nodes_[child].requires_grad) {
        state[child] = 1;
        stack.emplace_back(child, 0);
      }
      continue;
    }
    state[id] = 2;
    order.push_back(id);
    stack.pop_back();
  }
  std::reverse(order.begin(), order.end());
  return order;
}

void Graph::backward(Var loss, double seed, BackwardOrder order, bool accumulate_params) {
  if (loss.graph() != this) throw std::invalid_argument("backward: loss belongs to another graph");
  if (!record_) throw std::logic_error("backward: graph was built without recording");
  const Tensor& lv = value(loss.id());
  if (lv.rows() != 1 || lv.cols() != 1) throw std::invalid_argument("backward: loss must be 1x1");

  for (auto& n : nodes_) n.grad = Tensor();
  visits_.assign(nodes_.size(), 0);
  grad(loss.id())[0] = seed;

  auto visit = [&](int id) {
    Node& n = nodes_[id];
    if (!n.requires_grad || n.grad.empty() || !n.backward) return;
    ++visits_[id];
    n.backward(*this, id);
  };

  if (order == BackwardOrder::kReverseCreation) {
    for (int id = loss.id(); id >= 0; --id) visit(id);
  } else {
    for (int id : topological_from(loss.id())) visit(id);
  }

  if (!accumulate_params) return;
  for (auto& n : nodes_) {
    if (n.param == nullptr || n.grad.empty()) continue;
    Tensor& acc = n.param->grad;
    if (!acc.same_shape(n.grad)) acc = Tensor(n.grad.rows(), n.grad.cols());
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += n.grad[i];
  }
}

const Tensor* Graph::param_grad(const Parameter& p) const {
  auto it = param_nodes_.find(const_cast<Parameter*>(&p));
  if (it == param_nodes_.end()) return nullptr;
  const Tensor& g = nodes_[it->second].grad;
  return g.empty() ? nullptr : &g;
}

}  // namespace chronoalign::ad
