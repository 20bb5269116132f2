#pragma once

#include <optional>
#include <vector>

#include "efagg/autodiff.hpp"
#include "efagg/ef.hpp"

namespace efagg::agg {

using ef::Vec;

// Per-point Gaussian factor moments (m_i, V_i), one row per context point.
// Empty sets are allowed; the posterior then equals the prior.
struct FactorSet {
  std::vector<Vec> means;
  std::vector<Vec> vars;

  FactorSet() = default;
  FactorSet(std::vector<Vec> means_in, std::vector<Vec> vars_in);
  int count() const { return int(means.size()); }
  int dim() const { return means.empty() ? 0 : int(means[0].size()); }
};

struct RobustPrior {
  double a0 = 1.0;  // latent precision shape
  double b0 = 1.0;  // latent precision rate
  double c0 = 1.0;  // per-factor precision shape and rate

  RobustPrior() = default;
  RobustPrior(double a0_in, double b0_in, double c0_in);
};

// Mean-field state q(z) q(alpha) q(beta_1..beta_N) of the robust aggregator,
// plus the evidence bound recorded after each coordinate sweep.
struct RobustState {
  ef::DiagGaussian z_post;
  ef::GammaDist alpha_post;
  std::vector<ef::GammaDist> beta_posts;
  std::vector<double> elbo_trace;
};

// ---------------------------------------------------------------------------
// Graph-level aggregation: differentiable end to end; used by the model and
// wrapped by the value-level API below. Summation over context points uses
// the order-canonical policy, so results are invariant to point order.
// ---------------------------------------------------------------------------

struct FactorNodes {
  nn::Node means;  // N x D
  nn::Node vars;   // N x D, strictly positive
  int count() const { return means ? means.value().rows : 0; }
  int dim() const { return means ? means.value().cols : 0; }
};

struct GaussianNodes {
  nn::Node mean;  // 1 x D
  nn::Node var;   // 1 x D
};

struct RobustPriorNodes {
  nn::Node a0, b0, c0;  // 1x1 each
};

struct RobustNodes {
  GaussianNodes z;
  nn::Node alpha_shape, alpha_rate;       // 1x1
  nn::Node beta_shape;                    // 1x1 (shared across points)
  nn::Node beta_rates;                    // N x 1
  std::vector<double> elbo_trace;
};

struct MixturePriorNodes {
  std::vector<GaussianNodes> comps;
  Vec weights;  // fixed simplex (gradient through weights is not propagated)
};

struct MixturePosteriorNodes {
  std::vector<GaussianNodes> comps;
  Vec weights;       // renormalized, computed in log domain
  Vec log_ck;        // per-component log normalization constant
};

GaussianNodes bayesian_aggregate_g(const FactorNodes& f, const GaussianNodes& prior);
MixturePosteriorNodes mixture_aggregate_g(const FactorNodes& f, const MixturePriorNodes& prior);
RobustNodes robust_aggregate_g(const FactorNodes& f, const RobustPriorNodes& prior,
                               int steps, bool record_trace);

nn::Node kl_gaussian_g(const GaussianNodes& q, const GaussianNodes& p);
// log N(z | mean, var) for a 1xD point, as a 1x1 node.
nn::Node gaussian_log_prob_g(const nn::Node& z, const GaussianNodes& g);

FactorNodes factor_leaves(const FactorSet& f);
GaussianNodes gaussian_leaves(const ef::DiagGaussian& g);

// ---------------------------------------------------------------------------
// Value-level API.
// ---------------------------------------------------------------------------

// Arithmetic mean of encodings under the order-canonical summation policy.
Vec mean_pool(const std::vector<Vec>& encodings);

ef::DiagGaussian bayesian_aggregate(const FactorSet& f, const ef::DiagGaussian& prior);

// Per-component Gaussian updates plus weight renormalization via the
// closed-form component evidence, all in log domain. Optionally reports the
// per-component log C_k diagnostics.
ef::GaussianMixture mixture_aggregate(const FactorSet& f, const ef::GaussianMixture& prior,
                                      Vec* log_ck_out = nullptr);

// Unrolled CAVI over q(z) q(alpha) q(beta): sweeps run in the fixed order
// Sigma, mu, a, b, c, d_i starting from unit Gamma initializations. An empty
// factor set runs a single sweep, leaving the unit-precision prior.
RobustState robust_aggregate(const FactorSet& f, const RobustPrior& prior, int steps);

// Evidence lower bound of the robust model at the given mean-field state;
// all expectations are closed form.
double evaluate_rba_elbo(const RobustState& state, const FactorSet& f,
                         const RobustPrior& prior);

// log integral of prod_i N(z|m_i,V_i) * N(z|prior) dz, in closed form.
double aggregate_log_z(const FactorSet& f, const ef::DiagGaussian& prior);

}  // namespace efagg::agg
