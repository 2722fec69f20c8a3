#pragma once

#include <functional>
#include <string>
#include <vector>

#include "spade/tensor.hpp"

namespace spade {

// A learnable tensor with a persistent gradient buffer. Parameters outlive
// the per-batch graphs that reference them.
struct Parameter {
  std::string name;
  Tensor tensor;

  Parameter() = default;
  Parameter(std::string n, Tensor t);

  void zero_grad();
  void accumulate_grad(const std::vector<double>& g);
  int size() const { return tensor.size(); }
};

enum class OpKind {
  Leaf,
  Matmul,
  Transpose,
  Add,
  AddBias,
  Mul,
  Scale,
  Relu,
  Conv1dCausal,
  SoftmaxMasked,
  ConcatRows,
  SliceRows,
  GatherCols,
  TileCols,
  Sum,
  Pinball,
};

struct TensorRef {
  int id = -1;
};

// Reverse-mode tape. Nodes are appended in evaluation order; backward walks
// them exactly once in reverse insertion order. One graph per forward pass,
// single-threaded.
class Graph {
 public:
  struct Node {
    OpKind op = OpKind::Leaf;
    std::vector<int> inputs;
    Tensor value;
    std::vector<double> grad;  // lazily sized, same length as value.values
    std::function<void(Graph&, const Node&)> backward;
    Parameter* bound = nullptr;
  };

  TensorRef constant(Tensor t);
  TensorRef input(Tensor t, bool requires_grad);
  TensorRef param(Parameter& p);

  TensorRef matmul(TensorRef a, TensorRef b);
  TensorRef transpose(TensorRef a);
  TensorRef add(TensorRef a, TensorRef b);
  TensorRef add_bias(TensorRef a, TensorRef bias);  // [m x n] + [m x 1]
  TensorRef mul(TensorRef a, TensorRef b);
  TensorRef scale(TensorRef a, double c);
  TensorRef relu(TensorRef a);
  TensorRef conv1d_causal(TensorRef x, TensorRef kernel, int dilation);
  TensorRef softmax_masked(TensorRef logits, TensorRef mask);
  TensorRef concat_rows(const std::vector<TensorRef>& parts);
  TensorRef slice_rows(TensorRef a, int begin, int count);
  TensorRef gather_cols(TensorRef a, std::vector<int> indices);
  TensorRef tile_cols(TensorRef a, int n);  // [m x 1] -> [m x n]
  TensorRef sum(TensorRef a);               // -> [1]
  // Elementwise pinball loss. pred is [k x n], targets [1 x n] (broadcast
  // over the k quantile rows), quantiles has length k. Targets never
  // receive gradients. At pred == target the gradient takes the
  // over-forecast branch (1 - q) so training stays deterministic.
  TensorRef pinball(TensorRef pred, TensorRef targets, std::vector<double> quantiles);

  // Populates gradients of every requires_grad node reachable from loss,
  // accumulating into bound Parameters. loss must be scalar.
  void backward(TensorRef loss);

  const Tensor& value(TensorRef r) const { return node(r).value; }
  const std::vector<double>& grad(TensorRef r) const { return node(r).grad; }
  std::size_t size() const { return nodes_.size(); }

  const Node& node(TensorRef r) const;

 private:
  Node& mutable_node(int id) { return nodes_[static_cast<std::size_t>(id)]; }
  TensorRef push(Node n);
  std::vector<double>& grad_buffer(int id);
  bool needs_grad(TensorRef r) const;

  std::vector<Node> nodes_;
};

}  // namespace spade
