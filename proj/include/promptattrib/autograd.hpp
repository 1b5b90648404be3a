#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "promptattrib/tensor.hpp"

namespace promptattrib {

// A named trainable matrix with an accumulated gradient.
struct Parameter {
  Parameter() = default;
  Parameter(std::string n, Matrix v, bool is_trainable = true)
      : name(std::move(n)), value(std::move(v)), grad(value.rows(), value.cols()),
        trainable(is_trainable) {}

  std::string name;
  Matrix value;
  Matrix grad;
  bool trainable = true;

  void zero_grad() { grad = Matrix(value.rows(), value.cols()); }
};

class Tape;

// Handle to a node on a Tape.
struct Var {
  Tape* tape = nullptr;
  std::uint32_t id = 0;

  const Matrix& value() const;
  bool requires_grad() const;
};

// Reverse-mode automatic differentiation over whole matrices. A tape records
// one computation; backward() seeds d(loss)/d(loss) = 1 and walks it in
// reverse, accumulating into Parameter::grad for parameter leaves.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::uint32_t self)>;

  Var constant(Matrix value);
  // Leaf holding a gradient of its own (read back with grad()).
  Var variable(Matrix value);
  // Leaf bound to a Parameter; requires grad iff the parameter is trainable.
  Var parameter(Parameter& p);

  Var push(Matrix value, bool requires_grad, BackwardFn backward);

  const Matrix& value(std::uint32_t id) const { return nodes_[id].value; }
  const Matrix& value(Var v) const { return nodes_[v.id].value; }
  bool requires_grad(std::uint32_t id) const { return nodes_[id].requires_grad; }
  bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }

  // Gradient accumulated for a node; zero-filled when nothing flowed into it.
  Matrix grad(Var v) const;
  // Mutable gradient buffer, allocated on first use.
  Matrix& grad_buffer(std::uint32_t id);

  void backward(Var loss);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    BackwardFn backward;
    Parameter* parameter = nullptr;
  };
  std::vector<Node> nodes_;
};

// Reference to row `row` of node `source`; used to assemble sequences from
// embedding tables and injected vectors.
struct RowRef {
  Var source;
  std::size_t row = 0;
};

namespace ag {

Var matmul(Var a, Var b);
// a * b^T
Var matmul_bt(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
// Elementwise product with a constant matrix (dropout masks).
Var mul_const(Var a, const Matrix& c);
// a + broadcast(row) where row is 1 x cols(a).
Var add_row(Var a, Var row);
Var scale(Var a, double s);
Var tanh(Var a);
Var sigmoid(Var a);
Var gelu(Var a);
Var softmax_rows(Var a);
Var layer_norm(Var x, Var gamma, Var beta, double eps = 1e-5);
Var pick_rows(std::span<const RowRef> rows);
Var row(Var a, std::size_t r);
Var concat_cols(Var a, Var b);
Var slice_cols(Var a, std::size_t begin, std::size_t end);
// log(max(x, eps)) elementwise; zero gradient where clamped.
Var log_clamped(Var a, double eps);
Var sum(Var a);
// Euclidean norm of all elements, as a 1x1 node. Subgradient 0 at the origin.
Var norm2(Var a);
Var element(Var a, std::size_t r, std::size_t c);
// Scalar sum of 1x1 nodes (empty list is invalid).
Var add_scalars(std::span<const Var> terms);
// Given a 1 x V logit row and disjoint id groups, softmax restricted to the
// union of the groups, then summed per group: 1 x G probabilities.
Var group_probs(Var logits, const std::vector<std::vector<std::uint32_t>>& groups);

}  // namespace ag

}  // namespace promptattrib
