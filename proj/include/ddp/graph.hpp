#pragma once

#include <map>
#include <string>
#include <vector>

#include "ddp/tensor.hpp"

namespace ddp {

// name -> gradient tensor, shape equal to the parameter's shape
using GradientMap = std::map<std::string, Tensor>;

enum class OpKind {
  Input,
  Param,
  MatMul,
  Transpose,
  Add,          // elementwise, or [n,m] + [1,m] row broadcast
  Mul,          // elementwise (also used for dropout-mask multiply)
  Concat,       // variadic along axis 0 or 1
  Tanh,
  Sigmoid,
  LeakyRelu,
  RowSoftmax,
  GatherRows,
  AppendOnes,   // [r,c] -> [r,c+1], last column constant 1
  Reshape,
  CrossEntropy, // logits [n,k] + target indices -> per-row loss [n,1]
  BlockRowDot,  // big [n, L*K] x small [n, K] -> [n, L]
  SumAll,       // -> [1,1]
  Scale,
};

// Recorded computation trace with eager forward evaluation and
// reverse-mode backward. Single-owner, single-threaded.
class Tape {
 public:
  using Id = int;

  Id input(Tensor value);
  Id param(const std::string& name, const Tensor& value);

  Id matmul(Id a, Id b);
  Id transpose(Id a);
  Id add(Id a, Id b);
  Id mul(Id a, Id b);
  Id concat(const std::vector<Id>& parts, int axis);
  Id tanh_(Id a);
  Id sigmoid(Id a);
  Id leaky_relu(Id a, double slope = 0.1);
  Id row_softmax(Id a);
  Id gather_rows(Id a, std::vector<int> indices);
  Id append_ones(Id a);
  Id reshape(Id a, std::vector<int> new_shape);
  Id cross_entropy(Id logits, std::vector<int> targets);
  Id block_row_dot(Id big, Id small, int blocks);
  Id sum_all(Id a);
  Id scale(Id a, double factor);

  const Tensor& value(Id id) const { return nodes_[id].value; }
  Tensor& param_value(Id id);  // mutable, for perturbation during grad_check

  // d(loss)/d(param) for every registered parameter; loss must be scalar.
  GradientMap backward(Id loss) const;

  // Max relative error between backward gradients and central finite
  // differences over every parameter coordinate. The perturbed losses are
  // evaluated in extended precision so the (L+ - L-) cancellation keeps
  // meaning on near-zero gradient coordinates; intended for small
  // configurations.
  double grad_check(Id loss, double epsilon);

  void recompute();

  std::size_t node_count() const { return nodes_.size(); }
  const std::vector<std::pair<std::string, Id>>& params() const { return params_; }

 private:
  struct Node {
    OpKind kind;
    std::vector<Id> inputs;
    Tensor value;
    std::string name;           // Param only
    int axis = 0;               // Concat
    int blocks = 0;             // BlockRowDot
    double alpha = 0.0;         // LeakyRelu slope / Scale factor
    std::vector<int> indices;   // GatherRows / CrossEntropy targets
    std::vector<int> new_shape; // Reshape
  };

  Id push(Node n);
  void compute(Node& n) const;
  void check_finite(const Node& n) const;
  long double eval_scalar_ld(Id loss) const;

  std::vector<Node> nodes_;
  std::vector<std::pair<std::string, Id>> params_;
};

}  // namespace ddp
