#pragma once

#include <deque>
#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "chronoalign/ad/tensor.hpp"

namespace chronoalign::ad {

/// A learnable array plus its gradient accumulator.
struct Parameter {
  Parameter() = default;
  Parameter(std::string n, int rows, int cols) : name(std::move(n)), value(rows, cols), grad(rows, cols) {}

  std::string name;
  Tensor value;
  Tensor grad;

  void zero_grad() { grad = Tensor(value.rows(), value.cols()); }
};

class Graph;

/// Handle to a node of a Graph. Cheap to copy; only valid while the graph lives.
class Var {
 public:
  Var() = default;
  Var(Graph* g, int id) : graph_(g), id_(id) {}

  Graph* graph() const { return graph_; }
  int id() const { return id_; }
  bool valid() const { return graph_ != nullptr; }
  const Tensor& value() const;
  int rows() const { return value().rows(); }
  int cols() const { return value().cols(); }

 private:
  Graph* graph_ = nullptr;
  int id_ = -1;
};

enum class BackwardOrder {
  kReverseCreation,  // walk node ids from the loss down to zero
  kTopological,      // explicit depth-first post-order from the loss
};

/// Tape of tensor operations. Nodes are appended in creation order, which is
/// always a valid topological order because an op can only consume earlier
/// nodes. A graph is single-threaded; separate graphs may run concurrently as
/// long as they only read the shared Parameters.
class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, int self)>;

  /// With record == false no backward closures are kept (inference mode).
  explicit Graph(bool record = true) : record_(record) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Tensor value);
  /// Each Parameter maps to exactly one node per graph.
  Var param(Parameter& p);

  const Tensor& value(int id) const { return nodes_[id].value; }
  bool needs_grad(int id) const { return nodes_[id].requires_grad; }
  /// Gradient buffer of a node, zero-allocated on first access.
  Tensor& grad(int id);
  const Tensor& grad(Var v) { return grad(v.id()); }

  bool recording() const { return record_; }
  std::size_t size() const { return nodes_.size(); }

  /// Appends a node. The closure is dropped when not recording or when no
  /// input requires a gradient.
  Var emit(Tensor value, const std::vector<int>& inputs, BackwardFn fn);

  /// Seeds d(loss)/d(loss) = seed and propagates. With accumulate_params the
  /// parameter gradients are added into Parameter::grad; otherwise they stay
  /// on the graph (see param_grad). loss must be 1 x 1.
  void backward(Var loss, double seed = 1.0, BackwardOrder order = BackwardOrder::kReverseCreation,
                bool accumulate_params = true);

  /// Gradient of a parameter from the last backward(); null if unused.
  const Tensor* param_grad(const Parameter& p) const;

  /// How many times each node's backward closure ran during the last backward().
  const std::vector<int>& visit_counts() const { return visits_; }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    std::vector<int> inputs;
    BackwardFn backward;
    Parameter* param = nullptr;
    bool requires_grad = false;
  };

  std::vector<int> topological_from(int root) const;

  bool record_;
  std::deque<Node> nodes_;
  std::unordered_map<Parameter*, int> param_nodes_;
  std::vector<int> visits_;
};

inline const Tensor& Var::value() const { return graph_->value(id_); }

}  // namespace chronoalign::ad
