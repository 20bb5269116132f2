#pragma once

#include <vector>

#include "efagg/rng.hpp"

namespace efagg::ef {

using Vec = std::vector<double>;

// Floor applied to variance-like quantities after arithmetic, keeping every
// intermediate normalizable.
inline constexpr double kVarFloor = 1e-12;

void floor_var(Vec& var);

// Diagonal Gaussian in moment parameterization. All types here are immutable
// values; operations are pure and safe to call concurrently.
struct DiagGaussian {
  Vec mean;
  Vec var;  // strictly positive, elementwise

  DiagGaussian() = default;
  DiagGaussian(Vec mean_in, Vec var_in);
  int dim() const { return int(mean.size()); }

  static DiagGaussian standard(int d) { return DiagGaussian(Vec(d, 0.0), Vec(d, 1.0)); }
};

// Diagonal Gaussian in natural parameterization: eta1 = mean/var,
// eta2 = -1/(2 var) < 0.
struct NaturalGaussian {
  Vec eta1;
  Vec eta2;

  NaturalGaussian() = default;
  NaturalGaussian(Vec eta1_in, Vec eta2_in);
  int dim() const { return int(eta1.size()); }
};

struct GammaDist {
  double shape = 1.0;
  double rate = 1.0;

  GammaDist() = default;
  GammaDist(double shape_in, double rate_in);
  double mean() const { return shape / rate; }
};

struct GaussianMixture {
  Vec weights;  // simplex
  std::vector<DiagGaussian> components;

  GaussianMixture() = default;
  GaussianMixture(Vec weights_in, std::vector<DiagGaussian> components_in);
  int dim() const { return components.empty() ? 0 : components[0].dim(); }
  int k() const { return int(components.size()); }
};

NaturalGaussian to_natural(const DiagGaussian& g);
DiagGaussian to_moment(const NaturalGaussian& n);

double kl_diag_gaussian(const DiagGaussian& q, const DiagGaussian& p);
double log_prob(const DiagGaussian& g, const Vec& z);
double mixture_log_prob(const GaussianMixture& m, const Vec& z);

// Reparameterized draws: mean + sqrt(var) * eps with eps standard normal.
std::vector<Vec> sample(const DiagGaussian& g, Rng& rng, int n);

double gamma_expectation(const GammaDist& g);   // shape / rate
double gamma_e_log(const GammaDist& g);         // E[log x] = digamma(shape) - log rate
double gamma_entropy(const GammaDist& g);
double gaussian_entropy(const DiagGaussian& g);

double digamma(double x);
double log_sum_exp(const Vec& xs);

}  // namespace efagg::ef
