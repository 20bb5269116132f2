#pragma once

#include <string>
#include <vector>

#include "efagg/autodiff.hpp"
#include "efagg/rng.hpp"

namespace efagg::nn {

// Ordered, named collection of trainable leaf nodes. Iteration order is
// insertion order so that optimizer updates are reproducible.
class ParamStore {
 public:
  Node add(const std::string& name, Tensor init);
  Node get(const std::string& name) const;
  void zero_grads();
  size_t count() const { return params_.size(); }
  long scalar_count() const;

  const std::vector<std::pair<std::string, Node>>& entries() const { return params_; }
  std::vector<std::pair<std::string, Node>>& entries() { return params_; }

 private:
  std::vector<std::pair<std::string, Node>> params_;
};

// Dense MLP with ReLU on hidden layers and a linear output layer.
// Parameter count: sum_l (w_l * w_{l+1} + w_{l+1}) over consecutive widths.
struct Mlp {
  std::vector<Node> weights;  // in x out
  std::vector<Node> biases;   // 1 x out
  std::vector<int> widths;

  // He-style fan-in-scaled uniform init, U(+-sqrt(6/fan_in)); biases zero.
  static Mlp create(ParamStore& store, const std::string& name,
                    const std::vector<int>& widths, Rng& rng);

  Node forward(const Node& x) const;
  int in_dim() const { return widths.front(); }
  int out_dim() const { return widths.back(); }
  long param_count() const;
};

// lower + (1 - lower) * softplus(x); strictly greater than `lower`.
Node bounded_softplus(const Node& x, double lower);
// lower + (1 - lower) * sigmoid(x); output in (lower, 1).
Node bounded_sigmoid(const Node& x, double lower);

struct AdamConfig {
  double lr0 = 5e-4;
  long horizon = 100000;  // cosine annealing period, lr(T) ~ 0
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam with cosine-annealed learning rate lr(t) = lr0 * 0.5 * (1 + cos(pi t / T)).
class Adam {
 public:
  Adam(const ParamStore& store, AdamConfig cfg);
  double current_lr() const;  // lr applied by the next step()
  long steps_taken() const { return t_; }
  void step(ParamStore& store);

 private:
  AdamConfig cfg_;
  long t_ = 0;
  std::vector<Tensor> m_, v_;
};

}  // namespace efagg::nn
