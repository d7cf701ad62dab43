#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "htr/tensor.hpp"

namespace htr {

/// Named model tensor. Non-trainable parameters (batchnorm running
/// statistics) are bound as constants and never receive gradients.
struct Parameter {
  std::string name;
  Tensor value;
  bool trainable = true;
};

class Graph;

/// Handle to a node of a Graph.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  Graph& graph() const { return *graph_; }
  int id() const { return id_; }
  bool valid() const { return graph_ != nullptr; }

 private:
  friend class Graph;
  Var(Graph* g, int id) : graph_(g), id_(id) {}

  Graph* graph_ = nullptr;
  int id_ = -1;
};

/// Tape of recorded ops for reverse-mode differentiation. Nodes are appended
/// in evaluation order, so the tape is always topologically sorted.
class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, const Tensor& grad_out)>;

  /// With `with_grad == false` no backward closures are kept (inference).
  explicit Graph(bool with_grad = true) : with_grad_(with_grad) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Tensor value);
  /// Binds a model parameter as a leaf. Binding the same parameter twice
  /// yields the same node.
  Var parameter(const Parameter& p);
  /// Appends an op result. `backward` must accumulate into the gradients of
  /// `inputs` through grad_target().
  Var record(Tensor value, std::span<const Var> inputs, BackwardFn backward, const char* op);

  /// Reverse sweep from a scalar loss. Throws ContractError otherwise.
  void backward(Var loss);

  const Tensor& value(Var v) const { return nodes_[static_cast<std::size_t>(v.id_)].value; }
  bool requires_grad(Var v) const { return nodes_[static_cast<std::size_t>(v.id_)].requires_grad; }
  /// Gradient slot of `v`, allocated on first use; nullptr if `v` needs none.
  Tensor* grad_target(Var v);
  /// Gradient of `v` after backward (zeros when unreached).
  Tensor grad(Var v) const;
  /// Gradient with respect to a bound parameter; zeros when the parameter was
  /// never bound or is unreachable from the loss.
  Tensor gradient(const Parameter& p) const;

  bool with_grad() const { return with_grad_; }
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool has_grad = false;
    bool requires_grad = false;
    BackwardFn backward;
    const char* op = "";
    const Parameter* param = nullptr;
  };

  Var push(Node node);

  bool with_grad_;
  std::vector<Node> nodes_;
};

inline const Tensor& Var::value() const { return graph_->value(*this); }

// Elementwise and structural ops. Broadcasting is limited to scalar-tensor;
// anything else goes through an explicit op (add_bias, reshape, ...).
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
Var add_scalar(Var a, double s);
inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator*(Var a, double s) { return scale(a, s); }
inline Var operator*(double s, Var a) { return scale(a, s); }

/// (m x k) * (k x n). Throws ShapeError naming both shapes on mismatch.
Var matmul(Var a, Var b);
/// Adds a vector of size shape.back() to every row.
Var add_bias(Var x, Var bias);
/// Right-multiplies the last axis: (..., k) * (k x n) -> (..., n).
Var matmul_last(Var x, Var w);

Var sum(Var a);
Var mean(Var a);
Var relu(Var a);
Var sigmoid(Var a);
Var tanh(Var a);

/// Row-wise softmax over the last axis, stabilized by the row maximum.
Var softmax_rows(Var x);
Var log_softmax_rows(Var x);

Var reshape(Var a, Shape shape);
Var transpose(Var a);
/// Reorders axes: result axis i is input axis perm[i].
Var permute(Var a, std::vector<int> perm);
Var concat_last(Var a, Var b);
/// Slice `index` of the leading axis (rank drops by one).
Var select(Var a, Index index);

/// Mean softmax cross-entropy of logits (batch x classes) against targets.
Var cross_entropy_logits(Var logits, std::span<const int> targets);

// Plain-tensor helpers shared by layers and tests.
RowMatrixXd softmax_rows(const Eigen::Ref<const RowMatrixXd>& x);
RowMatrixXd log_softmax_rows(const Eigen::Ref<const RowMatrixXd>& x);
Tensor permute(const Tensor& t, std::span<const int> perm);

}  // namespace htr
