#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "efagg/tensor.hpp"

namespace efagg::nn {

namespace detail {
struct NodeData {
  Tensor val;
  Tensor grad;  // allocated on demand by backward()
  bool requires_grad = false;
  std::vector<std::shared_ptr<NodeData>> parents;
  std::function<void(NodeData&)> backprop;  // pushes this->grad into parents
};
}  // namespace detail

// Handle to a node of the computation graph. Nodes are immutable once built;
// the graph is retained by child-to-parent ownership and freed when the last
// handle to the result goes out of scope.
class Node {
 public:
  Node() = default;

  static Node leaf(Tensor value, bool requires_grad = false);
  static Node scalar(double x) { return leaf(Tensor::scalar(x)); }
  static Node row(const std::vector<double>& x) { return leaf(Tensor::row(x)); }
  static Node column(const std::vector<double>& x) { return leaf(Tensor::column(x)); }

  const Tensor& value() const { return p->val; }
  Tensor& value_mut() { return p->val; }  // in-place parameter updates
  const Tensor& grad() const { return p->grad; }
  bool requires_grad() const { return p && p->requires_grad; }
  int rows() const { return p->val.rows; }
  int cols() const { return p->val.cols; }
  double item() const;  // value of a 1x1 node
  void zero_grad();

  explicit operator bool() const { return bool(p); }

  std::shared_ptr<detail::NodeData> p;
};

// Elementwise binary ops with broadcasting over a size-1 row or column axis.
Node operator+(const Node& a, const Node& b);
Node operator-(const Node& a, const Node& b);
Node operator*(const Node& a, const Node& b);
Node operator/(const Node& a, const Node& b);
Node operator-(const Node& a);

Node operator+(const Node& a, double b);
Node operator+(double a, const Node& b);
Node operator-(const Node& a, double b);
Node operator-(double a, const Node& b);
Node operator*(const Node& a, double b);
Node operator*(double a, const Node& b);
Node operator/(const Node& a, double b);
Node operator/(double a, const Node& b);

Node matmul(const Node& a, const Node& b);

Node relu(const Node& x);
Node exp(const Node& x);
Node log(const Node& x);
Node sqrt(const Node& x);
Node square(const Node& x);
Node sigmoid(const Node& x);
Node softplus(const Node& x);
Node clamp_min(const Node& x, double lo);

Node sum_all(const Node& x);        // -> 1x1
Node sum_over_rows(const Node& x);  // RxC -> 1xC, order-canonical sums
Node sum_over_cols(const Node& x);  // RxC -> Rx1
Node mean_over_rows(const Node& x);

Node concat_rows(const Node& a, const Node& b);
Node concat_cols(const Node& a, const Node& b);
Node repeat_rows(const Node& x, int n);           // 1xC -> nxC
Node slice_cols(const Node& x, int c0, int c1);   // columns [c0, c1)
Node detach(const Node& x);

// log(sum_k exp(x_k)) over 1x1 nodes, stabilised by the detached max.
Node logsumexp(const std::vector<Node>& scalars);

// Reverse pass from a scalar loss: zeroes grads of the reachable subgraph,
// seeds d(loss)/d(loss) = 1 and accumulates into every parameter leaf.
void backward(const Node& loss);

}  // namespace efagg::nn
