#include "skg/autodiff.hpp"

#include <algorithm>
#include <cmath>

#include "skg/errors.hpp"

namespace skg {

// ---------------------------------------------------------------- ParamStore

Parameter& ParamStore::add(std::string name, Tensor value) {
  if (index_.count(name)) throw ConfigError("duplicate parameter name '" + name + "'");
  index_.emplace(name, params_.size());
  params_.push_back(std::make_unique<Parameter>(std::move(name), std::move(value)));
  return *params_.back();
}

Parameter* ParamStore::find(const std::string& name) {
  auto it = index_.find(name);
  return it == index_.end() ? nullptr : params_[it->second].get();
}

const Parameter* ParamStore::find(const std::string& name) const {
  auto it = index_.find(name);
  return it == index_.end() ? nullptr : params_[it->second].get();
}

Parameter& ParamStore::at(const std::string& name) {
  if (auto* p = find(name)) return *p;
  throw ConfigError("no parameter named '" + name + "'");
}

const Parameter& ParamStore::at(const std::string& name) const {
  if (const auto* p = find(name)) return *p;
  throw ConfigError("no parameter named '" + name + "'");
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p->value.size();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& p : params_) p->grad.fill(0.0);
}

ParamStore ParamStore::clone() const {
  ParamStore out;
  for (const auto& p : params_) out.add(p->name, p->value).grad = p->grad;
  return out;
}

void sgd_step(ParamStore& params, double lr) {
  for (std::size_t i = 0; i < params.size(); ++i)
    if (!params[i].grad.all_finite())
      throw TrainingError("non-finite gradient in parameter '" + params[i].name + "'");
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter& p = params[i];
    for (std::size_t k = 0; k < p.value.size(); ++k) p.value[k] -= lr * p.grad[k];
    p.grad.fill(0.0);
  }
}

// ---------------------------------------------------------------- op names

namespace {
constexpr std::pair<Op, const char*> kOpNames[] = {
    {Op::Leaf, "leaf"},
    {Op::MatMul, "matmul"},
    {Op::Linear, "linear"},
    {Op::AddBias, "add_bias"},
    {Op::Add, "add"},
    {Op::Mul, "mul"},
    {Op::Relu, "relu"},
    {Op::Sigmoid, "sigmoid"},
    {Op::Softmax, "softmax"},
    {Op::Sparse, "sparse"},
    {Op::ConcatCols, "concat"},
    {Op::Sum, "sum"},
    {Op::SquaredNorm, "squared_norm"},
    {Op::ScaleBy, "scale_by"},
    {Op::Pick, "pick"},
    {Op::CrossEntropy, "cross_entropy"},
    {Op::BinaryCrossEntropy, "binary_cross_entropy"},
};
}  // namespace

const char* op_name(Op op) {
  for (const auto& [o, n] : kOpNames)
    if (o == op) return n;
  return "?";
}

std::optional<Op> op_from_name(const std::string& name) {
  for (const auto& [o, n] : kOpNames)
    if (name == n) return o;
  return std::nullopt;
}

// ---------------------------------------------------------------- Tape

namespace {

Tensor as_matrix(Tensor t) {
  if (t.rank() == 1) return t.reshaped({1, t.size()});
  if (t.rank() != 2) throw DimensionError("tape values must be rank 1 or 2, got " + shape_string(t.shape()));
  return t;
}

void require_same_tape(Var a, Var b) {
  if (a.tape == nullptr || a.tape != b.tape) throw DomainError("operands recorded on different tapes");
}

void require_same_shape(const char* what, const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw DimensionError(std::string(what) + ": " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
}

void add_into(Tensor& dst, const Tensor& src, double scale) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += scale * src[i];
}

}  // namespace

const Tensor& Var::value() const { return tape->value(id); }

Var Tape::push(Node node) {
  node.needs_grad = node.param != nullptr;
  for (NodeId id : node.inputs) node.needs_grad = node.needs_grad || nodes_[id].needs_grad;
  nodes_.push_back(std::move(node));
  return Var{this, nodes_.size() - 1};
}

Var Tape::constant(Tensor value) {
  Node n;
  n.value = as_matrix(std::move(value));
  return push(std::move(n));
}

Var Tape::param(Parameter& p) {
  if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return Var{this, it->second};
  Node n;
  // Rank-2 parameters are read in place; others get a matrix-shaped copy.
  if (p.value.rank() != 2) n.value = as_matrix(p.value);
  n.param = &p;
  Var v = push(std::move(n));
  param_nodes_.emplace(&p, v.id);
  return v;
}

void Tape::backward(Var loss) const {
  if (loss.tape != this) throw DomainError("backward: loss recorded on a different tape");
  const Tensor& lv = value(loss.id);
  if (lv.size() != 1) throw DomainError("backward: loss must be scalar, got " + shape_string(lv.shape()));

  std::vector<Tensor> adj(nodes_.size());
  adj[loss.id] = Tensor(lv.shape(), 1.0);
  for (std::size_t k = loss.id + 1; k-- > 0;) {
    if (adj[k].empty()) continue;
    const Node& node = nodes_[k];
    if (!node.needs_grad) continue;
    if (node.op == Op::Leaf) {
      if (node.param) add_into(node.param->grad, adj[k], 1.0);
      continue;
    }
    apply_rule(node, adj[k], adj);
  }
}

void Tape::apply_rule(const Node& node, const Tensor& g, std::vector<Tensor>& adj) const {
  const double scale = (fault_ && fault_->op == node.op) ? fault_->scale : 1.0;
  auto accumulate = [&](NodeId id, const Tensor& contribution) {
    if (!nodes_[id].needs_grad) return;
    Tensor& slot = adj[id];
    if (slot.empty()) {
      slot = Tensor(value(id).shape());
    }
    add_into(slot, contribution, scale);
  };
  auto needs = [&](NodeId id) { return nodes_[id].needs_grad; };
  // Weight gradients of in-place parameters go straight into Parameter::grad.
  auto direct_grad = [&](NodeId id) -> Tensor* {
    const Node& n = nodes_[id];
    return (n.op == Op::Leaf && n.param && n.value.empty() && scale == 1.0) ? &n.param->grad : nullptr;
  };
  const auto& in = node.inputs;
  const Tensor& y = node.value;

  switch (node.op) {
    case Op::Leaf:
      break;
    case Op::MatMul: {
      const Tensor& a = value(in[0]);
      const Tensor& b = value(in[1]);
      const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
      if (needs(in[0])) {
        Tensor ga({m, k});
        kernels::linear(g.values(), b.values(), ga.values(), m, n, k);
        accumulate(in[0], ga);
      }
      if (needs(in[1])) {
        Tensor gb({k, n});
        kernels::linear_weight_grad(a.values(), g.values(), gb.values(), m, n, k);
        accumulate(in[1], gb);
      }
      break;
    }
    case Op::Linear: {
      const Tensor& x = value(in[0]);
      const Tensor& w = value(in[1]);
      const std::size_t rows = x.rows(), in_dim = x.cols(), out_dim = w.rows();
      if (needs(in[0])) {
        Tensor gx({rows, in_dim});
        kernels::matmul(g.values(), w.values(), gx.values(), rows, out_dim, in_dim);
        accumulate(in[0], gx);
      }
      if (Tensor* direct = direct_grad(in[1])) {
        kernels::linear_weight_grad(g.values(), x.values(), direct->values(), rows, in_dim, out_dim);
      } else if (needs(in[1])) {
        Tensor gw({out_dim, in_dim});
        kernels::linear_weight_grad(g.values(), x.values(), gw.values(), rows, in_dim, out_dim);
        accumulate(in[1], gw);
      }
      break;
    }
    case Op::AddBias: {
      Tensor gb({1, g.cols()});
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t c = 0; c < g.cols(); ++c) gb[c] += g(r, c);
      accumulate(in[0], g);
      accumulate(in[1], gb);
      break;
    }
    case Op::Add:
      accumulate(in[0], g);
      accumulate(in[1], g);
      break;
    case Op::Mul: {
      const Tensor& a = value(in[0]);
      const Tensor& b = value(in[1]);
      Tensor ga = g, gb = g;
      for (std::size_t i = 0; i < g.size(); ++i) {
        ga[i] *= b[i];
        gb[i] *= a[i];
      }
      accumulate(in[0], ga);
      accumulate(in[1], gb);
      break;
    }
    case Op::Relu: {
      Tensor gx = g;
      for (std::size_t i = 0; i < g.size(); ++i)
        if (!(y[i] > 0.0)) gx[i] = 0.0;
      accumulate(in[0], gx);
      break;
    }
    case Op::Sigmoid: {
      Tensor gx = g;
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] *= y[i] * (1.0 - y[i]);
      accumulate(in[0], gx);
      break;
    }
    case Op::Softmax: {
      Tensor gx = g;
      for (std::size_t r = 0; r < y.rows(); ++r) {
        double dotp = 0.0;
        for (std::size_t c = 0; c < y.cols(); ++c) dotp += g(r, c) * y(r, c);
        for (std::size_t c = 0; c < y.cols(); ++c) gx(r, c) = y(r, c) * (g(r, c) - dotp);
      }
      accumulate(in[0], gx);
      break;
    }
    case Op::Sparse: {
      const Tensor& x = value(in[0]);
      Tensor gx(x.shape());
      kernels::spmm_transpose(*node.sparse_t, g.values(), gx.values(), x.cols());
      accumulate(in[0], gx);
      break;
    }
    case Op::ConcatCols: {
      std::size_t offset = 0;
      for (NodeId id : in) {
        const Tensor& part = value(id);
        Tensor gp(part.shape());
        for (std::size_t r = 0; r < part.rows(); ++r)
          for (std::size_t c = 0; c < part.cols(); ++c) gp(r, c) = g(r, offset + c);
        offset += part.cols();
        accumulate(id, gp);
      }
      break;
    }
    case Op::Sum: {
      const Tensor& x = value(in[0]);
      accumulate(in[0], Tensor(x.shape(), g[0]));
      break;
    }
    case Op::SquaredNorm: {
      Tensor gx = value(in[0]);
      for (double& v : gx.values()) v *= 2.0 * g[0];
      accumulate(in[0], gx);
      break;
    }
    case Op::ScaleBy: {
      const Tensor& x = value(in[0]);
      const double s = value(in[1])[0];
      Tensor gx = g;
      double gs = 0.0;
      for (std::size_t i = 0; i < g.size(); ++i) {
        gx[i] *= s;
        gs += g[i] * x[i];
      }
      accumulate(in[0], gx);
      accumulate(in[1], Tensor::scalar(gs));
      break;
    }
    case Op::Pick: {
      Tensor gx(value(in[0]).shape());
      gx[node.index] = g[0];
      accumulate(in[0], gx);
      break;
    }
    case Op::CrossEntropy: {
      const Tensor& p = value(in[0]);
      Tensor gp(p.shape());
      for (std::size_t i = 0; i < p.size(); ++i) gp[i] = -g[0] * node.target[i] * guarded_log_slope(p[i]);
      accumulate(in[0], gp);
      break;
    }
    case Op::BinaryCrossEntropy: {
      const Tensor& p = value(in[0]);
      const Tensor& t = node.target;
      Tensor gp(p.shape());
      for (std::size_t i = 0; i < p.size(); ++i)
        gp[i] = -g[0] * (t[i] * guarded_log_slope(p[i]) - (1.0 - t[i]) * guarded_log_slope(1.0 - p[i]));
      accumulate(in[0], gp);
      break;
    }
  }
}

// ---------------------------------------------------------------- ops

Var matmul(Var a, Var b) {
  require_same_tape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.cols() != bv.rows())
    throw DimensionError("matmul: " + shape_string(av.shape()) + " * " + shape_string(bv.shape()));
  Tape::Node n;
  n.op = Op::MatMul;
  n.inputs = {a.id, b.id};
  n.value = Tensor({av.rows(), bv.cols()});
  kernels::matmul(av.values(), bv.values(), n.value.values(), av.rows(), av.cols(), bv.cols());
  return a.tape->push(std::move(n));
}

Var linear(Var x, Var w) {
  require_same_tape(x, w);
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  if (xv.cols() != wv.cols())
    throw DimensionError("linear: input " + shape_string(xv.shape()) + " vs weight " + shape_string(wv.shape()));
  Tape::Node n;
  n.op = Op::Linear;
  n.inputs = {x.id, w.id};
  n.value = Tensor({xv.rows(), wv.rows()});
  kernels::linear(xv.values(), wv.values(), n.value.values(), xv.rows(), xv.cols(), wv.rows());
  return x.tape->push(std::move(n));
}

Var add_bias(Var x, Var b) {
  require_same_tape(x, b);
  const Tensor& xv = x.value();
  const Tensor& bv = b.value();
  if (bv.rows() != 1 || bv.cols() != xv.cols())
    throw DimensionError("add_bias: " + shape_string(xv.shape()) + " + " + shape_string(bv.shape()));
  Tape::Node n;
  n.op = Op::AddBias;
  n.inputs = {x.id, b.id};
  n.value = xv;
  for (std::size_t r = 0; r < xv.rows(); ++r)
    for (std::size_t c = 0; c < xv.cols(); ++c) n.value(r, c) += bv[c];
  return x.tape->push(std::move(n));
}

Var add(Var a, Var b) {
  require_same_tape(a, b);
  require_same_shape("add", a.value(), b.value());
  Tape::Node n;
  n.op = Op::Add;
  n.inputs = {a.id, b.id};
  n.value = a.value();
  add_into(n.value, b.value(), 1.0);
  return a.tape->push(std::move(n));
}

Var mul(Var a, Var b) {
  require_same_tape(a, b);
  require_same_shape("mul", a.value(), b.value());
  Tape::Node n;
  n.op = Op::Mul;
  n.inputs = {a.id, b.id};
  n.value = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < bv.size(); ++i) n.value[i] *= bv[i];
  return a.tape->push(std::move(n));
}

Var relu(Var x) {
  Tape::Node n;
  n.op = Op::Relu;
  n.inputs = {x.id};
  n.value = relu(x.value());
  return x.tape->push(std::move(n));
}

Var sigmoid(Var x) {
  Tape::Node n;
  n.op = Op::Sigmoid;
  n.inputs = {x.id};
  n.value = sigmoid(x.value());
  return x.tape->push(std::move(n));
}

Var softmax(Var x) {
  Tape::Node n;
  n.op = Op::Softmax;
  n.inputs = {x.id};
  n.value = softmax(x.value());
  return x.tape->push(std::move(n));
}

Var sparse_rows(std::shared_ptr<const SparseRows> s, Var x) {
  const Tensor& xv = x.value();
  if (!s || !s->valid() || s->in_rows != xv.rows())
    throw DimensionError("sparse_rows: operator does not match input " + shape_string(xv.shape()));
  Tape::Node n;
  n.op = Op::Sparse;
  n.inputs = {x.id};
  n.value = Tensor({s->out_rows, xv.cols()});
  kernels::spmm(*s, xv.values(), n.value.values(), xv.cols());
  n.sparse_t = std::make_shared<const SparseRows>(s->transposed());
  n.sparse = std::move(s);
  return x.tape->push(std::move(n));
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw DomainError("concat of zero tensors");
  const std::size_t rows = parts.front().value().rows();
  std::size_t cols = 0;
  for (const Var& p : parts) {
    require_same_tape(parts.front(), p);
    if (p.value().rows() != rows)
      throw DimensionError("concat: row counts differ (" + shape_string(parts.front().value().shape()) + " vs " +
                           shape_string(p.value().shape()) + ")");
    cols += p.value().cols();
  }
  Tape::Node n;
  n.op = Op::ConcatCols;
  n.value = Tensor({rows, cols});
  std::size_t offset = 0;
  for (const Var& p : parts) {
    const Tensor& v = p.value();
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < v.cols(); ++c) n.value(r, offset + c) = v(r, c);
    offset += v.cols();
    n.inputs.push_back(p.id);
  }
  return parts.front().tape->push(std::move(n));
}

Var sum(Var x) {
  double s = 0.0;
  for (double v : x.value().values()) s += v;
  Tape::Node n;
  n.op = Op::Sum;
  n.inputs = {x.id};
  n.value = Tensor::scalar(s);
  return x.tape->push(std::move(n));
}

Var squared_norm(Var x) {
  double s = 0.0;
  for (double v : x.value().values()) s += v * v;
  Tape::Node n;
  n.op = Op::SquaredNorm;
  n.inputs = {x.id};
  n.value = Tensor::scalar(s);
  return x.tape->push(std::move(n));
}

Var scale_by(Var x, Var s) {
  require_same_tape(x, s);
  if (s.value().size() != 1) throw DimensionError("scale_by: scale must be 1x1, got " + shape_string(s.value().shape()));
  Tape::Node n;
  n.op = Op::ScaleBy;
  n.inputs = {x.id, s.id};
  n.value = x.value();
  const double k = s.value()[0];
  for (double& v : n.value.values()) v *= k;
  return x.tape->push(std::move(n));
}

Var pick(Var x, std::size_t flat_index) {
  if (flat_index >= x.value().size())
    throw DimensionError("pick: index " + std::to_string(flat_index) + " outside " + shape_string(x.value().shape()));
  Tape::Node n;
  n.op = Op::Pick;
  n.inputs = {x.id};
  n.index = flat_index;
  n.value = Tensor::scalar(x.value()[flat_index]);
  return x.tape->push(std::move(n));
}

Var cross_entropy(Var probs, const Tensor& target) {
  const Tensor& p = probs.value();
  if (p.size() != target.size())
    throw DimensionError("cross_entropy: " + shape_string(p.shape()) + " vs target " + shape_string(target.shape()));
  double loss = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) loss -= target[i] * guarded_log(p[i]);
  Tape::Node n;
  n.op = Op::CrossEntropy;
  n.inputs = {probs.id};
  n.target = target;
  n.value = Tensor::scalar(loss);
  return probs.tape->push(std::move(n));
}

Var binary_cross_entropy(Var probs, const Tensor& target) {
  const Tensor& p = probs.value();
  if (p.size() != target.size())
    throw DimensionError("binary_cross_entropy: " + shape_string(p.shape()) + " vs target " +
                         shape_string(target.shape()));
  double loss = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i)
    loss -= target[i] * guarded_log(p[i]) + (1.0 - target[i]) * guarded_log(1.0 - p[i]);
  Tape::Node n;
  n.op = Op::BinaryCrossEntropy;
  n.inputs = {probs.id};
  n.target = target;
  n.value = Tensor::scalar(loss);
  return probs.tape->push(std::move(n));
}

}  // namespace skg
