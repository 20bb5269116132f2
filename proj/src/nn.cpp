#include "efagg/nn.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace efagg::nn {

Node ParamStore::add(const std::string& name, Tensor init) {
  for (auto& [n, _] : params_)
    if (n == name) throw std::invalid_argument("ParamStore: duplicate name " + name);
  Node node = Node::leaf(std::move(init), /*requires_grad=*/true);
  params_.emplace_back(name, node);
  return node;
}

Node ParamStore::get(const std::string& name) const {
  for (auto& [n, node] : params_)
    if (n == name) return node;
  throw std::invalid_argument("ParamStore: unknown name " + name);
}

void ParamStore::zero_grads() {
  for (auto& [_, node] : params_) node.zero_grad();
}

long ParamStore::scalar_count() const {
  long c = 0;
  for (auto& [_, node] : params_) c += node.value().size();
  return c;
}

Mlp Mlp::create(ParamStore& store, const std::string& name,
                const std::vector<int>& widths, Rng& rng) {
  if (widths.size() < 2) throw std::invalid_argument("Mlp: need at least in/out widths");
  Mlp mlp;
  mlp.widths = widths;
  for (size_t l = 0; l + 1 < widths.size(); ++l) {
    int fan_in = widths[l], fan_out = widths[l + 1];
    double bound = std::sqrt(6.0 / fan_in);
    Tensor w(fan_in, fan_out);
    for (double& x : w.v) x = rng.uniform(-bound, bound);
    mlp.weights.push_back(store.add(name + ".w" + std::to_string(l), std::move(w)));
    mlp.biases.push_back(store.add(name + ".b" + std::to_string(l), Tensor(1, fan_out, 0.0)));
  }
  return mlp;
}

Node Mlp::forward(const Node& x) const {
  if (x.cols() != widths.front())
    throw std::invalid_argument("Mlp::forward: input width " + std::to_string(x.cols()) +
                                ", expected " + std::to_string(widths.front()));
  Node h = x;
  for (size_t l = 0; l < weights.size(); ++l) {
    h = matmul(h, weights[l]) + biases[l];
    if (l + 1 < weights.size()) h = relu(h);
  }
  return h;
}

long Mlp::param_count() const {
  long c = 0;
  for (size_t l = 0; l + 1 < widths.size(); ++l)
    c += long(widths[l]) * widths[l + 1] + widths[l + 1];
  return c;
}

Node bounded_softplus(const Node& x, double lower) {
  if (lower <= 0) throw std::invalid_argument("bounded_softplus: lower must be > 0");
  return lower + (1.0 - lower) * softplus(x);
}

Node bounded_sigmoid(const Node& x, double lower) {
  if (lower <= 0 || lower >= 1)
    throw std::invalid_argument("bounded_sigmoid: lower must be in (0,1)");
  return lower + (1.0 - lower) * sigmoid(x);
}

Adam::Adam(const ParamStore& store, AdamConfig cfg) : cfg_(cfg) {
  for (auto& [_, node] : store.entries()) {
    m_.emplace_back(node.value().rows, node.value().cols, 0.0);
    v_.emplace_back(node.value().rows, node.value().cols, 0.0);
  }
}

double Adam::current_lr() const {
  double frac = cfg_.horizon > 0 ? double(t_) / double(cfg_.horizon) : 0.0;
  if (frac > 1.0) frac = 1.0;
  return cfg_.lr0 * 0.5 * (1.0 + std::cos(std::numbers::pi * frac));
}

void Adam::step(ParamStore& store) {
  auto& entries = store.entries();
  if (entries.size() != m_.size())
    throw std::invalid_argument("Adam: parameter store changed size");
  const double lr = current_lr();
  const long t1 = t_ + 1;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, double(t1));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, double(t1));
  for (size_t p = 0; p < entries.size(); ++p) {
    Node& node = entries[p].second;
    const Tensor& g = node.grad();
    if (g.size() != node.value().size()) continue;  // never touched by backward
    Tensor& val = node.value_mut();
    for (int i = 0; i < val.size(); ++i) {
      double gi = g.v[size_t(i)];
      double& mi = m_[p].v[size_t(i)];
      double& vi = v_[p].v[size_t(i)];
      mi = cfg_.beta1 * mi + (1.0 - cfg_.beta1) * gi;
      vi = cfg_.beta2 * vi + (1.0 - cfg_.beta2) * gi * gi;
      val.v[size_t(i)] -= lr * (mi / bc1) / (std::sqrt(vi / bc2) + cfg_.eps);
    }
  }
  ++t_;
}

}  // namespace efagg::nn
