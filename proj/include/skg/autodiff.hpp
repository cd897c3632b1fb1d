#pragma once

// Taped reverse-mode differentiation over Tensor values.
//
// A Tape records every traced operation in execution order. Nodes are never
// removed, so node ids are topologically sorted by construction and backward()
// is a single reverse sweep. The tape is rebuilt for each forward pass.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "skg/kernels.hpp"
#include "skg/tensor.hpp"

namespace skg {

struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;

  Parameter(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)), grad(value.shape()) {}
};

// Ordered collection of named parameters. Insertion order is the canonical
// order for checkpoints, gradient checks and update sweeps.
class ParamStore {
 public:
  Parameter& add(std::string name, Tensor value);
  Parameter& at(const std::string& name);
  const Parameter& at(const std::string& name) const;
  Parameter* find(const std::string& name);
  const Parameter* find(const std::string& name) const;

  std::size_t size() const { return params_.size(); }
  std::size_t scalar_count() const;
  void zero_grad();

  Parameter& operator[](std::size_t i) { return *params_[i]; }
  const Parameter& operator[](std::size_t i) const { return *params_[i]; }

  ParamStore clone() const;

 private:
  // unique_ptr keeps Parameter addresses stable while tapes point at them.
  std::vector<std::unique_ptr<Parameter>> params_;
  std::map<std::string, std::size_t> index_;
};

// value <- value - lr * grad for every parameter, then grads are zeroed.
// Throws TrainingError naming the first parameter with a non-finite gradient,
// in which case no parameter is modified.
void sgd_step(ParamStore& params, double lr);

enum class Op {
  Leaf,
  MatMul,
  Linear,
  AddBias,
  Add,
  Mul,
  Relu,
  Sigmoid,
  Softmax,
  Sparse,
  ConcatCols,
  Sum,
  SquaredNorm,
  ScaleBy,
  Pick,
  CrossEntropy,
  BinaryCrossEntropy,
};

const char* op_name(Op op);
std::optional<Op> op_from_name(const std::string& name);

using NodeId = std::size_t;

class Tape;

// Handle to a traced value.
struct Var {
  Tape* tape = nullptr;
  NodeId id = 0;

  const Tensor& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  // Leaf bound to a parameter; one node per parameter per tape.
  Var param(Parameter& p);

  // Parameter leaves read the parameter's current value.
  const Tensor& value(NodeId id) const {
    const Node& n = nodes_.at(id);
    return n.param && n.value.empty() ? n.param->value : n.value;
  }
  std::size_t size() const { return nodes_.size(); }
  Op op(NodeId id) const { return nodes_.at(id).op; }
  const std::vector<NodeId>& inputs(NodeId id) const { return nodes_.at(id).inputs; }

  // Accumulates d(loss)/d(param) into every reachable Parameter::grad.
  // May be called repeatedly; each call adds the full gradient again.
  void backward(Var loss) const;

  // Test hook: multiplies every input gradient produced by the backward rule of
  // `op` by `scale`.
  void inject_fault(Op op, double scale) { fault_ = Fault{op, scale}; }

 private:
  friend Var matmul(Var, Var);
  friend Var linear(Var, Var);
  friend Var add_bias(Var, Var);
  friend Var add(Var, Var);
  friend Var mul(Var, Var);
  friend Var relu(Var);
  friend Var sigmoid(Var);
  friend Var softmax(Var);
  friend Var sparse_rows(std::shared_ptr<const SparseRows>, Var);
  friend Var concat_cols(const std::vector<Var>&);
  friend Var sum(Var);
  friend Var squared_norm(Var);
  friend Var scale_by(Var, Var);
  friend Var pick(Var, std::size_t);
  friend Var cross_entropy(Var, const Tensor&);
  friend Var binary_cross_entropy(Var, const Tensor&);

  struct Node {
    Op op = Op::Leaf;
    std::vector<NodeId> inputs;
    Tensor value;
    Parameter* param = nullptr;
    bool needs_grad = false;
    std::shared_ptr<const SparseRows> sparse;
    std::shared_ptr<const SparseRows> sparse_t;
    Tensor target;
    std::size_t index = 0;
  };
  struct Fault {
    Op op;
    double scale;
  };

  Var push(Node node);
  void apply_rule(const Node& node, const Tensor& g, std::vector<Tensor>& adj) const;

  std::vector<Node> nodes_;
  std::map<const Parameter*, NodeId> param_nodes_;
  std::optional<Fault> fault_;
};

// Traced operations. All tensors on the tape are viewed as matrices.
Var matmul(Var a, Var b);                 // [m x k] * [k x n]
Var linear(Var x, Var w);                 // x[n x in] * w[out x in]^T
Var add_bias(Var x, Var b);               // x[n x d] + b[1 x d] broadcast over rows
Var add(Var a, Var b);
Var mul(Var a, Var b);                    // elementwise
Var relu(Var x);
Var sigmoid(Var x);
Var softmax(Var x);                       // per row, max-subtracted
Var sparse_rows(std::shared_ptr<const SparseRows> s, Var x);
Var concat_cols(const std::vector<Var>& parts);
Var sum(Var x);                           // -> [1 x 1]
Var squared_norm(Var x);                  // sum of squares -> [1 x 1]
Var scale_by(Var x, Var s);               // s is [1 x 1]
Var pick(Var x, std::size_t flat_index);  // -> [1 x 1]
// -sum_c t_c * log(p_c + 1e-12); p and t of equal shape.
Var cross_entropy(Var probs, const Tensor& target);
// -sum_c [y_c log(p_c + 1e-12) + (1 - y_c) log(1 - p_c + 1e-12)]
Var binary_cross_entropy(Var probs, const Tensor& target);

inline constexpr double kLogEpsilon = 1e-12;

// log(p + 1e-12), capped at log 1 = 0 so a loss term is never negative.
inline double guarded_log(double p) { return std::log(std::min(p + kLogEpsilon, 1.0)); }
// d/dp of guarded_log.
inline double guarded_log_slope(double p) { return p + kLogEpsilon < 1.0 ? 1.0 / (p + kLogEpsilon) : 0.0; }

}  // namespace skg
