#include "efagg/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace efagg::nn {

using detail::NodeData;

namespace {

Node make_node(Tensor val, std::vector<Node> parents,
               std::function<void(NodeData&)> backprop) {
  Node n;
  n.p = std::make_shared<NodeData>();
  n.p->val = std::move(val);
  for (auto& par : parents) {
    if (par.p->requires_grad) n.p->requires_grad = true;
    n.p->parents.push_back(par.p);
  }
  if (n.p->requires_grad) n.p->backprop = std::move(backprop);
  return n;
}

void ensure_grad(NodeData& d) {
  if (d.grad.rows != d.val.rows || d.grad.cols != d.val.cols) {
    d.grad = Tensor(d.val.rows, d.val.cols, 0.0);
  }
}

void check_broadcast(const Tensor& a, const Tensor& b, const char* op) {
  bool rows_ok = a.rows == b.rows || a.rows == 1 || b.rows == 1;
  bool cols_ok = a.cols == b.cols || a.cols == 1 || b.cols == 1;
  if (!rows_ok || !cols_ok)
    throw std::invalid_argument(std::string(op) + ": incompatible shapes " +
                                a.shape_str() + " vs " + b.shape_str());
}

// Generic broadcasting binary op. dfa/dfb give the partials as functions of
// (a, b, out) values.
template <class F, class DA, class DB>
Node binary(const Node& a, const Node& b, const char* name, F f, DA dfa, DB dfb) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  check_broadcast(av, bv, name);
  int R = std::max(av.rows, bv.rows);
  int C = std::max(av.cols, bv.cols);
  Tensor out(R, C);
  const int ar = av.rows == 1 ? 0 : 1, ac = av.cols == 1 ? 0 : 1;
  const int br = bv.rows == 1 ? 0 : 1, bc = bv.cols == 1 ? 0 : 1;
  for (int i = 0; i < R; ++i) {
    const double* pa = av.v.data() + size_t(i * ar) * av.cols;
    const double* pb = bv.v.data() + size_t(i * br) * bv.cols;
    double* po = out.v.data() + size_t(i) * C;
    for (int j = 0; j < C; ++j) po[j] = f(pa[j * ac], pb[j * bc]);
  }
  NodeData* pa = a.p.get();
  NodeData* pb = b.p.get();
  return make_node(std::move(out), {a, b}, [=](NodeData& self) {
    const Tensor& o = self.val;
    const Tensor& g = self.grad;
    if (pa->requires_grad) {
      ensure_grad(*pa);
      for (int i = 0; i < o.rows; ++i)
        for (int j = 0; j < o.cols; ++j) {
          double x = pa->val((i * ar), (j * ac));
          double y = pb->val((i * br), (j * bc));
          pa->grad((i * ar), (j * ac)) += dfa(x, y, o(i, j)) * g(i, j);
        }
    }
    if (pb->requires_grad) {
      ensure_grad(*pb);
      for (int i = 0; i < o.rows; ++i)
        for (int j = 0; j < o.cols; ++j) {
          double x = pa->val((i * ar), (j * ac));
          double y = pb->val((i * br), (j * bc));
          pb->grad((i * br), (j * bc)) += dfb(x, y, o(i, j)) * g(i, j);
        }
    }
  });
}

template <class F, class D>
Node unary(const Node& a, const char* /*name*/, F f, D dfdx) {
  const Tensor& av = a.value();
  Tensor out(av.rows, av.cols);
  for (int i = 0; i < av.size(); ++i) out.v[size_t(i)] = f(av.v[size_t(i)]);
  NodeData* pa = a.p.get();
  return make_node(std::move(out), {a}, [=](NodeData& self) {
    if (!pa->requires_grad) return;
    ensure_grad(*pa);
    for (int i = 0; i < self.val.size(); ++i)
      pa->grad.v[size_t(i)] += dfdx(pa->val.v[size_t(i)], self.val.v[size_t(i)]) * self.grad.v[size_t(i)];
  });
}

double stable_softplus(double x) {
  return std::log1p(std::exp(-std::abs(x))) + std::max(x, 0.0);
}

double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Node Node::leaf(Tensor value, bool requires_grad) {
  Node n;
  n.p = std::make_shared<NodeData>();
  n.p->val = std::move(value);
  n.p->requires_grad = requires_grad;
  return n;
}

double Node::item() const {
  if (!p->val.is_scalar())
    throw std::invalid_argument("Node::item: not a scalar, shape " + p->val.shape_str());
  return p->val.v[0];
}

void Node::zero_grad() {
  if (p) p->grad = Tensor(p->val.rows, p->val.cols, 0.0);
}

Node operator+(const Node& a, const Node& b) {
  return binary(a, b, "add", [](double x, double y) { return x + y; },
                [](double, double, double) { return 1.0; },
                [](double, double, double) { return 1.0; });
}

Node operator-(const Node& a, const Node& b) {
  return binary(a, b, "sub", [](double x, double y) { return x - y; },
                [](double, double, double) { return 1.0; },
                [](double, double, double) { return -1.0; });
}

Node operator*(const Node& a, const Node& b) {
  return binary(a, b, "mul", [](double x, double y) { return x * y; },
                [](double, double y, double) { return y; },
                [](double x, double, double) { return x; });
}

Node operator/(const Node& a, const Node& b) {
  return binary(a, b, "div", [](double x, double y) { return x / y; },
                [](double, double y, double) { return 1.0 / y; },
                [](double, double y, double o) { return -o / y; });
}

Node operator-(const Node& a) {
  return unary(a, "neg", [](double x) { return -x; },
               [](double, double) { return -1.0; });
}

Node operator+(const Node& a, double b) { return a + Node::scalar(b); }
Node operator+(double a, const Node& b) { return Node::scalar(a) + b; }
Node operator-(const Node& a, double b) { return a - Node::scalar(b); }
Node operator-(double a, const Node& b) { return Node::scalar(a) - b; }
Node operator*(const Node& a, double b) { return a * Node::scalar(b); }
Node operator*(double a, const Node& b) { return Node::scalar(a) * b; }
Node operator/(const Node& a, double b) { return a / Node::scalar(b); }
Node operator/(double a, const Node& b) { return Node::scalar(a) / b; }

Node matmul(const Node& a, const Node& b) {
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  if (A.cols != B.rows)
    throw std::invalid_argument("matmul: inner dims " + A.shape_str() + " vs " + B.shape_str());
  Tensor out(A.rows, B.cols, 0.0);
  const int R = A.rows, K = A.cols, C = B.cols;
  for (int i = 0; i < R; ++i) {
    const double* arow = A.v.data() + size_t(i) * K;
    double* orow = out.v.data() + size_t(i) * C;
    for (int k = 0; k < K; ++k) {
      const double av = arow[k];
      const double* brow = B.v.data() + size_t(k) * C;
      for (int j = 0; j < C; ++j) orow[j] += av * brow[j];
    }
  }
  NodeData* pa = a.p.get();
  NodeData* pb = b.p.get();
  return make_node(std::move(out), {a, b}, [=](NodeData& self) {
    const Tensor& g = self.grad;
    if (pa->requires_grad) {
      ensure_grad(*pa);
      // gA = g . B^T
      for (int i = 0; i < R; ++i)
        for (int k = 0; k < K; ++k) {
          double s = 0.0;
          const double* grow = g.v.data() + size_t(i) * C;
          const double* brow = pb->val.v.data() + size_t(k) * C;
          for (int j = 0; j < C; ++j) s += grow[j] * brow[j];
          pa->grad.v[size_t(i) * K + k] += s;
        }
    }
    if (pb->requires_grad) {
      ensure_grad(*pb);
      // gB = A^T . g
      for (int i = 0; i < R; ++i) {
        const double* arow = pa->val.v.data() + size_t(i) * K;
        const double* grow = g.v.data() + size_t(i) * C;
        for (int k = 0; k < K; ++k) {
          const double av = arow[k];
          double* brow = pb->grad.v.data() + size_t(k) * C;
          for (int j = 0; j < C; ++j) brow[j] += av * grow[j];
        }
      }
    }
  });
}

Node relu(const Node& x) {
  return unary(x, "relu", [](double v) { return v > 0 ? v : 0.0; },
               [](double v, double) { return v > 0 ? 1.0 : 0.0; });
}

Node exp(const Node& x) {
  return unary(x, "exp", [](double v) { return std::exp(v); },
               [](double, double o) { return o; });
}

Node log(const Node& x) {
  return unary(x, "log", [](double v) { return std::log(v); },
               [](double v, double) { return 1.0 / v; });
}

Node sqrt(const Node& x) {
  return unary(x, "sqrt", [](double v) { return std::sqrt(v); },
               [](double, double o) { return 0.5 / o; });
}

Node square(const Node& x) {
  return unary(x, "square", [](double v) { return v * v; },
               [](double v, double) { return 2.0 * v; });
}

Node sigmoid(const Node& x) {
  return unary(x, "sigmoid", stable_sigmoid,
               [](double, double o) { return o * (1.0 - o); });
}

Node softplus(const Node& x) {
  return unary(x, "softplus", stable_softplus,
               [](double v, double) { return stable_sigmoid(v); });
}

Node clamp_min(const Node& x, double lo) {
  return unary(x, "clamp_min", [lo](double v) { return v > lo ? v : lo; },
               [lo](double v, double) { return v > lo ? 1.0 : 0.0; });
}

Node sum_all(const Node& x) {
  const Tensor& xv = x.value();
  double s = 0.0;
  for (double t : xv.v) s += t;
  NodeData* px = x.p.get();
  return make_node(Tensor::scalar(s), {x}, [=](NodeData& self) {
    if (!px->requires_grad) return;
    ensure_grad(*px);
    double g = self.grad.v[0];
    for (double& t : px->grad.v) t += g;
  });
}

Node sum_over_rows(const Node& x) {
  const Tensor& xv = x.value();
  Tensor out(1, xv.cols, 0.0);
  for (int j = 0; j < xv.cols; ++j)
    out.v[size_t(j)] = stable_sum(xv.v.data() + j, xv.rows, xv.cols);
  NodeData* px = x.p.get();
  return make_node(std::move(out), {x}, [=](NodeData& self) {
    if (!px->requires_grad) return;
    ensure_grad(*px);
    for (int i = 0; i < px->val.rows; ++i)
      for (int j = 0; j < px->val.cols; ++j)
        px->grad(i, j) += self.grad.v[size_t(j)];
  });
}

Node sum_over_cols(const Node& x) {
  const Tensor& xv = x.value();
  Tensor out(xv.rows, 1, 0.0);
  for (int i = 0; i < xv.rows; ++i) {
    double s = 0.0;
    const double* row = xv.v.data() + size_t(i) * xv.cols;
    for (int j = 0; j < xv.cols; ++j) s += row[j];
    out.v[size_t(i)] = s;
  }
  NodeData* px = x.p.get();
  return make_node(std::move(out), {x}, [=](NodeData& self) {
    if (!px->requires_grad) return;
    ensure_grad(*px);
    for (int i = 0; i < px->val.rows; ++i)
      for (int j = 0; j < px->val.cols; ++j)
        px->grad(i, j) += self.grad.v[size_t(i)];
  });
}

Node mean_over_rows(const Node& x) {
  if (x.rows() == 0) throw std::invalid_argument("mean_over_rows: empty input");
  return sum_over_rows(x) * (1.0 / x.rows());
}

Node concat_rows(const Node& a, const Node& b) {
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  if (A.rows == 0) return b;
  if (B.rows == 0) return a;
  if (A.cols != B.cols)
    throw std::invalid_argument("concat_rows: column mismatch " + A.shape_str() + " vs " + B.shape_str());
  Tensor out(A.rows + B.rows, A.cols);
  std::copy(A.v.begin(), A.v.end(), out.v.begin());
  std::copy(B.v.begin(), B.v.end(), out.v.begin() + A.v.size());
  NodeData* pa = a.p.get();
  NodeData* pb = b.p.get();
  return make_node(std::move(out), {a, b}, [=](NodeData& self) {
    size_t na = pa->val.v.size();
    if (pa->requires_grad) {
      ensure_grad(*pa);
      for (size_t i = 0; i < na; ++i) pa->grad.v[i] += self.grad.v[i];
    }
    if (pb->requires_grad) {
      ensure_grad(*pb);
      for (size_t i = 0; i < pb->val.v.size(); ++i) pb->grad.v[i] += self.grad.v[na + i];
    }
  });
}

Node concat_cols(const Node& a, const Node& b) {
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  if (A.rows != B.rows)
    throw std::invalid_argument("concat_cols: row mismatch " + A.shape_str() + " vs " + B.shape_str());
  Tensor out(A.rows, A.cols + B.cols);
  for (int i = 0; i < A.rows; ++i) {
    std::copy_n(A.v.begin() + size_t(i) * A.cols, A.cols, out.v.begin() + size_t(i) * out.cols);
    std::copy_n(B.v.begin() + size_t(i) * B.cols, B.cols,
                out.v.begin() + size_t(i) * out.cols + A.cols);
  }
  NodeData* pa = a.p.get();
  NodeData* pb = b.p.get();
  return make_node(std::move(out), {a, b}, [=](NodeData& self) {
    int ac = pa->val.cols, oc = self.val.cols;
    if (pa->requires_grad) {
      ensure_grad(*pa);
      for (int i = 0; i < self.val.rows; ++i)
        for (int j = 0; j < ac; ++j) pa->grad(i, j) += self.grad.v[size_t(i) * oc + j];
    }
    if (pb->requires_grad) {
      ensure_grad(*pb);
      for (int i = 0; i < self.val.rows; ++i)
        for (int j = 0; j < pb->val.cols; ++j)
          pb->grad(i, j) += self.grad.v[size_t(i) * oc + ac + j];
    }
  });
}

Node repeat_rows(const Node& x, int n) {
  const Tensor& X = x.value();
  if (X.rows != 1) throw std::invalid_argument("repeat_rows: input must be 1xC");
  Tensor out(n, X.cols);
  for (int i = 0; i < n; ++i)
    std::copy(X.v.begin(), X.v.end(), out.v.begin() + size_t(i) * X.cols);
  NodeData* px = x.p.get();
  return make_node(std::move(out), {x}, [=](NodeData& self) {
    if (!px->requires_grad) return;
    ensure_grad(*px);
    for (int i = 0; i < self.val.rows; ++i)
      for (int j = 0; j < self.val.cols; ++j)
        px->grad.v[size_t(j)] += self.grad(i, j);
  });
}

Node slice_cols(const Node& x, int c0, int c1) {
  const Tensor& X = x.value();
  if (c0 < 0 || c1 > X.cols || c0 >= c1)
    throw std::invalid_argument("slice_cols: bad range");
  Tensor out(X.rows, c1 - c0);
  for (int i = 0; i < X.rows; ++i)
    std::copy_n(X.v.begin() + size_t(i) * X.cols + c0, c1 - c0,
                out.v.begin() + size_t(i) * out.cols);
  NodeData* px = x.p.get();
  return make_node(std::move(out), {x}, [=](NodeData& self) {
    if (!px->requires_grad) return;
    ensure_grad(*px);
    for (int i = 0; i < self.val.rows; ++i)
      for (int j = 0; j < self.val.cols; ++j)
        px->grad(i, c0 + j) += self.grad(i, j);
  });
}

Node detach(const Node& x) { return Node::leaf(x.value(), false); }

Node logsumexp(const std::vector<Node>& scalars) {
  if (scalars.empty()) throw std::invalid_argument("logsumexp: empty input");
  double m = scalars[0].item();
  for (const auto& s : scalars) m = std::max(m, s.item());
  Node acc;
  for (const auto& s : scalars) {
    Node e = exp(s - m);
    acc = acc ? (acc + e) : e;
  }
  return log(acc) + m;
}

void backward(const Node& loss) {
  if (!loss.p) throw std::invalid_argument("backward: null node");
  if (!loss.value().is_scalar())
    throw std::invalid_argument("backward: loss must be scalar, got " + loss.value().shape_str());
  if (!loss.p->requires_grad) return;  // nothing reachable wants gradients

  // Iterative post-order DFS over the requires_grad subgraph.
  std::vector<NodeData*> topo;
  std::unordered_set<NodeData*> visited;
  std::vector<std::pair<NodeData*, size_t>> stack;
  stack.emplace_back(loss.p.get(), 0);
  visited.insert(loss.p.get());
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      NodeData* par = node->parents[idx++].get();
      if (par->requires_grad && !visited.count(par)) {
        visited.insert(par);
        stack.emplace_back(par, 0);
      }
    } else {
      topo.push_back(node);
      stack.pop_back();
    }
  }

  for (NodeData* n : topo) {
    ensure_grad(*n);
    std::fill(n->grad.v.begin(), n->grad.v.end(), 0.0);
  }
  loss.p->grad.v[0] = 1.0;
  for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
    if ((*it)->backprop) (*it)->backprop(**it);
  }
}

}  // namespace efagg::nn
