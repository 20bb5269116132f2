#pragma once

#include <functional>
#include <stdexcept>
#include <vector>

#include "efagg/aggregation.hpp"
#include "efagg/ef.hpp"

namespace efagg::oracle {

using ef::Vec;

struct QuadratureError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Tensor-product Gauss-Legendre grid over at most two dimensions.
struct QuadratureGrid {
  Vec lo, hi;
  int nodes_per_dim = 400;

  int dims() const { return int(lo.size()); }
};

// Bounds wide enough to capture the product posterior: the closed-form
// posterior estimate +- 12 std, widened to cover the prior +- 6 std.
QuadratureGrid grid_for(const ef::DiagGaussian& posterior_hint,
                        const ef::DiagGaussian& prior, int nodes_per_dim = 400);
QuadratureGrid grid_for(const ef::DiagGaussian& posterior_hint,
                        const ef::GaussianMixture& prior, int nodes_per_dim = 400);

struct PosteriorEstimate {
  Vec mean;
  Vec var;
  double log_z = 0.0;
};

// Normalized moments and log evidence of prod_i N(z|m_i,V_i) * prior(z) by
// brute-force quadrature. log_prior is the log density callable.
PosteriorEstimate quadrature_posterior(const agg::FactorSet& factors,
                                       const std::function<double(const Vec&)>& log_prior,
                                       const QuadratureGrid& grid);

// Runs the grid at n and 2n nodes per dim; throws QuadratureError if the two
// disagree beyond tol (self-convergence check).
PosteriorEstimate quadrature_posterior_checked(
    const agg::FactorSet& factors, const std::function<double(const Vec&)>& log_prior,
    const QuadratureGrid& grid, double tol);

// Central finite differences of a scalar function, coordinate by coordinate.
Vec finite_diff_grad(const std::function<double(const Vec&)>& f, Vec x, double eps);

// Straightforward reimplementation of the robust CAVI updates on plain
// doubles; serves as a mutation-detection oracle for the unrolled version.
agg::RobustState reference_cavi(const agg::FactorSet& factors,
                                const agg::RobustPrior& prior, int steps);

// log evidence of the robust model for D=1, N=1 by 2-D quadrature over
// (z, alpha), with the factor precision beta marginalized analytically.
double rba_log_evidence_quad(double m, double v, const agg::RobustPrior& prior,
                             double z_half_width, double alpha_hi, int nodes_per_dim);

// Gauss-Legendre nodes/weights on [lo, hi].
void gauss_legendre(int n, double lo, double hi, Vec& nodes, Vec& weights);

}  // namespace efagg::oracle
