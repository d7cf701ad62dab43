#include "htr/autodiff.hpp"

#include <algorithm>
#include <cmath>

namespace htr {
namespace {

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(op) + ": shapes " + to_string(a.shape()) + " and " +
                     to_string(b.shape()) + " differ");
  }
}

void accumulate(Graph& g, Var v, const Tensor::Vector& delta) {
  if (Tensor* t = g.grad_target(v)) t->flat() += delta;
}

double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Var Graph::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Graph::constant(Tensor value) {
  Node n;
  n.value = std::move(value);
  n.op = "constant";
  return push(std::move(n));
}

Var Graph::parameter(const Parameter& p) {
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (nodes_[i].param == &p) return Var(this, static_cast<int>(i));
  }
  Node n;
  n.value = p.value;
  n.param = &p;
  n.requires_grad = with_grad_ && p.trainable;
  n.op = "parameter";
  return push(std::move(n));
}

Var Graph::record(Tensor value, std::span<const Var> inputs, BackwardFn backward,
                  const char* op) {
  Node n;
  n.value = std::move(value);
  n.op = op;
  if (with_grad_) {
    n.requires_grad = std::any_of(inputs.begin(), inputs.end(),
                                  [this](Var v) { return requires_grad(v); });
    if (n.requires_grad) n.backward = std::move(backward);
  }
  return push(std::move(n));
}

Tensor* Graph::grad_target(Var v) {
  Node& n = nodes_[static_cast<std::size_t>(v.id_)];
  if (!n.requires_grad) return nullptr;
  if (!n.has_grad) {
    n.grad = Tensor(n.value.shape());
    n.has_grad = true;
  }
  return &n.grad;
}

Tensor Graph::grad(Var v) const {
  const Node& n = nodes_[static_cast<std::size_t>(v.id_)];
  return n.has_grad ? n.grad : Tensor(n.value.shape());
}

Tensor Graph::gradient(const Parameter& p) const {
  for (const Node& n : nodes_) {
    if (n.param == &p) return n.has_grad ? n.grad : Tensor(p.value.shape());
  }
  return Tensor(p.value.shape());
}

void Graph::backward(Var loss) {
  if (loss.graph_ != this) throw ContractError("backward: loss belongs to another graph");
  if (value(loss).size() != 1) {
    throw ContractError("backward: loss must be scalar, got " + to_string(value(loss).shape()));
  }
  if (!with_grad_) throw ContractError("backward: graph was built without gradients");
  if (Tensor* g = grad_target(loss)) g->fill(1.0);
  for (int id = loss.id_; id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.has_grad && n.backward) n.backward(*this, n.grad);
  }
}

Var add(Var a, Var b) {
  require_same_shape("add", a.value(), b.value());
  Tensor out = a.value();
  out.flat() += b.value().flat();
  const Var in[] = {a, b};
  return a.graph().record(std::move(out), in, [a, b](Graph& g, const Tensor& go) {
    accumulate(g, a, go.flat());
    accumulate(g, b, go.flat());
  }, "add");
}

Var sub(Var a, Var b) {
  require_same_shape("sub", a.value(), b.value());
  Tensor out = a.value();
  out.flat() -= b.value().flat();
  const Var in[] = {a, b};
  return a.graph().record(std::move(out), in, [a, b](Graph& g, const Tensor& go) {
    accumulate(g, a, go.flat());
    accumulate(g, b, -go.flat());
  }, "sub");
}

Var mul(Var a, Var b) {
  require_same_shape("mul", a.value(), b.value());
  Tensor out = a.value();
  out.flat().array() *= b.value().flat().array();
  const Var in[] = {a, b};
  return a.graph().record(std::move(out), in, [a, b](Graph& g, const Tensor& go) {
    accumulate(g, a, (go.flat().array() * b.value().flat().array()).matrix());
    accumulate(g, b, (go.flat().array() * a.value().flat().array()).matrix());
  }, "mul");
}

Var scale(Var a, double s) {
  Tensor out = a.value();
  out.flat() *= s;
  const Var in[] = {a};
  return a.graph().record(std::move(out), in, [a, s](Graph& g, const Tensor& go) {
    accumulate(g, a, go.flat() * s);
  }, "scale");
}

Var add_scalar(Var a, double s) {
  Tensor out = a.value();
  out.flat().array() += s;
  const Var in[] = {a};
  return a.graph().record(std::move(out), in, [a](Graph& g, const Tensor& go) {
    accumulate(g, a, go.flat());
  }, "add_scalar");
}

Var matmul(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rank() != 2 || bv.rank() != 2 || av.dim(1) != bv.dim(0)) {
    throw ShapeError("matmul: incompatible shapes " + to_string(av.shape()) + " and " +
                     to_string(bv.shape()));
  }
  Tensor out(Shape{av.dim(0), bv.dim(1)});
  out.matrix().noalias() = av.matrix() * bv.matrix();
  const Var in[] = {a, b};
  return a.graph().record(std::move(out), in, [a, b](Graph& g, const Tensor& go) {
    if (Tensor* ga = g.grad_target(a)) ga->matrix().noalias() += go.matrix() * b.value().matrix().transpose();
    if (Tensor* gb = g.grad_target(b)) gb->matrix().noalias() += a.value().matrix().transpose() * go.matrix();
  }, "matmul");
}

Var matmul_last(Var x, Var w) {
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  if (xv.rank() < 1 || wv.rank() != 2 || xv.shape().back() != wv.dim(0)) {
    throw ShapeError("matmul_last: incompatible shapes " + to_string(xv.shape()) + " and " +
                     to_string(wv.shape()));
  }
  Shape out_shape = xv.shape();
  out_shape.back() = wv.dim(1);
  Tensor out(out_shape);
  out.matrix().noalias() = xv.matrix() * wv.matrix();
  const Var in[] = {x, w};
  return x.graph().record(std::move(out), in, [x, w](Graph& g, const Tensor& go) {
    if (Tensor* gx = g.grad_target(x)) gx->matrix().noalias() += go.matrix() * w.value().matrix().transpose();
    if (Tensor* gw = g.grad_target(w)) gw->matrix().noalias() += x.value().matrix().transpose() * go.matrix();
  }, "matmul_last");
}

Var add_bias(Var x, Var bias) {
  const Tensor& xv = x.value();
  const Tensor& bv = bias.value();
  if (xv.rank() < 1 || bv.rank() != 1 || bv.dim(0) != xv.shape().back()) {
    throw ShapeError("add_bias: bias " + to_string(bv.shape()) + " does not match " +
                     to_string(xv.shape()));
  }
  Tensor out = xv;
  out.matrix().rowwise() += bv.flat().transpose();
  const Var in[] = {x, bias};
  return x.graph().record(std::move(out), in, [x, bias](Graph& g, const Tensor& go) {
    accumulate(g, x, go.flat());
    if (Tensor* gb = g.grad_target(bias)) gb->flat() += go.matrix().colwise().sum().transpose();
  }, "add_bias");
}

Var sum(Var a) {
  Tensor out = Tensor::scalar(a.value().flat().sum());
  const Var in[] = {a};
  return a.graph().record(std::move(out), in, [a](Graph& g, const Tensor& go) {
    if (Tensor* ga = g.grad_target(a)) ga->flat().array() += go.item();
  }, "sum");
}

Var mean(Var a) {
  const double n = static_cast<double>(std::max<Index>(a.value().size(), 1));
  return scale(sum(a), 1.0 / n);
}

Var relu(Var a) {
  Tensor out = a.value();
  out.flat() = out.flat().cwiseMax(0.0);
  const Var in[] = {a};
  return a.graph().record(std::move(out), in, [a](Graph& g, const Tensor& go) {
    accumulate(g, a, (a.value().flat().array() > 0.0).select(go.flat(), 0.0));
  }, "relu");
}

Var sigmoid(Var a) {
  Tensor out = a.value();
  out.flat() = out.flat().unaryExpr(&stable_sigmoid);
  const Tensor y = out;
  const Var in[] = {a};
  return a.graph().record(std::move(out), in, [a, y](Graph& g, const Tensor& go) {
    accumulate(g, a, (go.flat().array() * y.flat().array() * (1.0 - y.flat().array())).matrix());
  }, "sigmoid");
}

Var tanh(Var a) {
  Tensor out = a.value();
  out.flat() = out.flat().array().tanh().matrix();
  const Tensor y = out;
  const Var in[] = {a};
  return a.graph().record(std::move(out), in, [a, y](Graph& g, const Tensor& go) {
    accumulate(g, a, (go.flat().array() * (1.0 - y.flat().array().square())).matrix());
  }, "tanh");
}

RowMatrixXd softmax_rows(const Eigen::Ref<const RowMatrixXd>& x) {
  RowMatrixXd y = x.colwise() - x.rowwise().maxCoeff();
  y = y.array().exp().matrix();
  y.array().colwise() /= y.rowwise().sum().array();
  return y;
}

RowMatrixXd log_softmax_rows(const Eigen::Ref<const RowMatrixXd>& x) {
  RowMatrixXd y = x.colwise() - x.rowwise().maxCoeff();
  const Eigen::VectorXd lse = y.array().exp().rowwise().sum().log();
  y.colwise() -= lse;
  return y;
}

Var softmax_rows(Var x) {
  Tensor out(x.value().shape());
  out.matrix() = softmax_rows(x.value().matrix());
  const Tensor y = out;
  const Var in[] = {x};
  return x.graph().record(std::move(out), in, [x, y](Graph& g, const Tensor& go) {
    if (Tensor* gx = g.grad_target(x)) {
      const auto ym = y.matrix();
      const auto gm = go.matrix();
      const Eigen::VectorXd dot = (ym.array() * gm.array()).rowwise().sum();
      gx->matrix().array() += ym.array() * (gm.colwise() - dot).array();
    }
  }, "softmax_rows");
}

Var log_softmax_rows(Var x) {
  Tensor out(x.value().shape());
  out.matrix() = log_softmax_rows(x.value().matrix());
  const Tensor y = out;
  const Var in[] = {x};
  return x.graph().record(std::move(out), in, [x, y](Graph& g, const Tensor& go) {
    if (Tensor* gx = g.grad_target(x)) {
      const auto gm = go.matrix();
      const Eigen::VectorXd total = gm.rowwise().sum();
      gx->matrix().array() +=
          gm.array() - y.matrix().array().exp().colwise() * total.array();
    }
  }, "log_softmax_rows");
}

Var reshape(Var a, Shape shape) {
  Tensor out = a.value().reshaped(std::move(shape));
  const Var in[] = {a};
  return a.graph().record(std::move(out), in, [a](Graph& g, const Tensor& go) {
    accumulate(g, a, go.flat());
  }, "reshape");
}

Var transpose(Var a) {
  const Tensor& av = a.value();
  if (av.rank() != 2) throw ShapeError("transpose: expected rank 2, got " + to_string(av.shape()));
  Tensor out(Shape{av.dim(1), av.dim(0)});
  out.matrix() = av.matrix().transpose();
  const Var in[] = {a};
  return a.graph().record(std::move(out), in, [a](Graph& g, const Tensor& go) {
    if (Tensor* ga = g.grad_target(a)) ga->matrix() += go.matrix().transpose();
  }, "transpose");
}

Tensor permute(const Tensor& t, std::span<const int> perm) {
  const auto rank = static_cast<std::size_t>(t.rank());
  if (perm.size() != rank) throw ShapeError("permute: permutation rank mismatch");
  Shape out_shape(rank);
  std::vector<Index> in_strides(rank, 1);
  for (std::size_t i = rank; i-- > 1;) in_strides[i - 1] = in_strides[i] * t.shape()[i];
  std::vector<Index> strides(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    out_shape[i] = t.shape()[static_cast<std::size_t>(perm[i])];
    strides[i] = in_strides[static_cast<std::size_t>(perm[i])];
  }
  Tensor out(out_shape);
  std::vector<Index> counter(rank, 0);
  Index src = 0;
  for (Index k = 0; k < out.size(); ++k) {
    out[k] = t[src];
    for (std::size_t ax = rank; ax-- > 0;) {
      src += strides[ax];
      if (++counter[ax] < out_shape[ax]) break;
      src -= strides[ax] * out_shape[ax];
      counter[ax] = 0;
    }
  }
  return out;
}

Var permute(Var a, std::vector<int> perm) {
  Tensor out = permute(a.value(), perm);
  std::vector<int> inverse(perm.size());
  for (std::size_t i = 0; i < perm.size(); ++i) inverse[static_cast<std::size_t>(perm[i])] = static_cast<int>(i);
  const Var in[] = {a};
  return a.graph().record(std::move(out), in, [a, inverse](Graph& g, const Tensor& go) {
    accumulate(g, a, permute(go, inverse).flat());
  }, "permute");
}

Var concat_last(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  Shape sa = av.shape();
  Shape sb = bv.shape();
  if (sa.size() != sb.size() || sa.empty() ||
      !std::equal(sa.begin(), sa.end() - 1, sb.begin())) {
    throw ShapeError("concat_last: shapes " + to_string(sa) + " and " + to_string(sb) +
                     " differ outside the last axis");
  }
  const Index na = sa.back();
  const Index nb = sb.back();
  Shape so = sa;
  so.back() = na + nb;
  Tensor out(so);
  auto om = out.matrix();
  om.leftCols(na) = av.matrix();
  om.rightCols(nb) = bv.matrix();
  const Var in[] = {a, b};
  return a.graph().record(std::move(out), in, [a, b, na, nb](Graph& g, const Tensor& go) {
    if (Tensor* ga = g.grad_target(a)) ga->matrix() += go.matrix().leftCols(na);
    if (Tensor* gb = g.grad_target(b)) gb->matrix() += go.matrix().rightCols(nb);
  }, "concat_last");
}

Var select(Var a, Index index) {
  const Tensor& av = a.value();
  if (av.rank() < 1 || index < 0 || index >= av.dim(0)) {
    throw ShapeError("select: index " + std::to_string(index) + " out of range for " +
                     to_string(av.shape()));
  }
  Shape so(av.shape().begin() + 1, av.shape().end());
  const Index stride = num_elements(so);
  Tensor out(so);
  out.flat() = av.flat().segment(index * stride, stride);
  const Var in[] = {a};
  return a.graph().record(std::move(out), in, [a, index, stride](Graph& g, const Tensor& go) {
    if (Tensor* ga = g.grad_target(a)) ga->flat().segment(index * stride, stride) += go.flat();
  }, "select");
}

Var cross_entropy_logits(Var logits, std::span<const int> targets) {
  const Tensor& lv = logits.value();
  if (lv.rank() != 2 || lv.dim(0) != static_cast<Index>(targets.size())) {
    throw ShapeError("cross_entropy_logits: logits " + to_string(lv.shape()) + " vs " +
                     std::to_string(targets.size()) + " targets");
  }
  const RowMatrixXd logp = log_softmax_rows(lv.matrix());
  double loss = 0;
  for (Index i = 0; i < logp.rows(); ++i) {
    const int t = targets[static_cast<std::size_t>(i)];
    if (t < 0 || t >= logp.cols()) throw ContractError("cross_entropy_logits: target out of range");
    loss -= logp(i, t);
  }
  const double n = static_cast<double>(logp.rows());
  std::vector<int> tg(targets.begin(), targets.end());
  const Var in[] = {logits};
  return logits.graph().record(Tensor::scalar(loss / n), in,
                               [logits, logp, tg, n](Graph& g, const Tensor& go) {
    if (Tensor* gl = g.grad_target(logits)) {
      RowMatrixXd d = logp.array().exp();
      for (Index i = 0; i < d.rows(); ++i) d(i, tg[static_cast<std::size_t>(i)]) -= 1.0;
      gl->matrix() += d * (go.item() / n);
    }
  }, "cross_entropy");
}

}  // namespace htr
