#include "efagg/ef.hpp"

#include <algorithm>
#include <boost/math/special_functions/digamma.hpp>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace efagg::ef {

namespace {
constexpr double kLog2Pi = 1.8378770664093454835606594728112;

void check_dim(size_t a, size_t b, const char* op) {
  if (a != b)
    throw std::invalid_argument(std::string(op) + ": dimension mismatch " +
                                std::to_string(a) + " vs " + std::to_string(b));
}
}  // namespace

void floor_var(Vec& var) {
  for (double& v : var) v = std::max(v, kVarFloor);
}

DiagGaussian::DiagGaussian(Vec mean_in, Vec var_in)
    : mean(std::move(mean_in)), var(std::move(var_in)) {
  check_dim(mean.size(), var.size(), "DiagGaussian");
  for (double v : var)
    if (!(v > 0)) throw std::invalid_argument("DiagGaussian: variance must be > 0");
}

NaturalGaussian::NaturalGaussian(Vec eta1_in, Vec eta2_in)
    : eta1(std::move(eta1_in)), eta2(std::move(eta2_in)) {
  check_dim(eta1.size(), eta2.size(), "NaturalGaussian");
  for (double e : eta2)
    if (!(e < 0)) throw std::invalid_argument("NaturalGaussian: eta2 must be < 0");
}

GammaDist::GammaDist(double shape_in, double rate_in) : shape(shape_in), rate(rate_in) {
  if (!(shape > 0) || !(rate > 0))
    throw std::invalid_argument("GammaDist: shape and rate must be > 0");
}

GaussianMixture::GaussianMixture(Vec weights_in, std::vector<DiagGaussian> components_in)
    : weights(std::move(weights_in)), components(std::move(components_in)) {
  check_dim(weights.size(), components.size(), "GaussianMixture");
  if (components.empty()) throw std::invalid_argument("GaussianMixture: needs K >= 1");
  double sum = 0.0;
  for (double w : weights) {
    if (w < 0) throw std::invalid_argument("GaussianMixture: negative weight");
    sum += w;
  }
  if (std::abs(sum - 1.0) > 1e-9)
    throw std::invalid_argument("GaussianMixture: weights sum to " + std::to_string(sum));
  for (auto& c : components)
    check_dim(c.mean.size(), components[0].mean.size(), "GaussianMixture components");
}

NaturalGaussian to_natural(const DiagGaussian& g) {
  Vec eta1(g.mean.size()), eta2(g.mean.size());
  for (size_t d = 0; d < g.mean.size(); ++d) {
    eta1[d] = g.mean[d] / g.var[d];
    eta2[d] = -0.5 / g.var[d];
  }
  return NaturalGaussian(std::move(eta1), std::move(eta2));
}

DiagGaussian to_moment(const NaturalGaussian& n) {
  Vec mean(n.eta1.size()), var(n.eta1.size());
  for (size_t d = 0; d < n.eta1.size(); ++d) {
    if (!(n.eta2[d] < 0))
      throw std::invalid_argument("to_moment: eta2 >= 0 is not normalizable");
    var[d] = -0.5 / n.eta2[d];
    mean[d] = n.eta1[d] * var[d];
  }
  floor_var(var);
  return DiagGaussian(std::move(mean), std::move(var));
}

double kl_diag_gaussian(const DiagGaussian& q, const DiagGaussian& p) {
  check_dim(q.mean.size(), p.mean.size(), "kl_diag_gaussian");
  double kl = 0.0;
  for (size_t d = 0; d < q.mean.size(); ++d) {
    double dm = q.mean[d] - p.mean[d];
    kl += (q.var[d] + dm * dm) / p.var[d] - 1.0 + std::log(p.var[d]) - std::log(q.var[d]);
  }
  return 0.5 * kl;
}

double log_prob(const DiagGaussian& g, const Vec& z) {
  check_dim(g.mean.size(), z.size(), "log_prob");
  double lp = 0.0;
  for (size_t d = 0; d < z.size(); ++d) {
    double r = z[d] - g.mean[d];
    lp += -0.5 * (kLog2Pi + std::log(g.var[d]) + r * r / g.var[d]);
  }
  return lp;
}

double mixture_log_prob(const GaussianMixture& m, const Vec& z) {
  Vec terms(m.components.size());
  for (size_t k = 0; k < m.components.size(); ++k)
    terms[k] = (m.weights[k] > 0 ? std::log(m.weights[k]) : -1e300) +
               log_prob(m.components[k], z);
  return log_sum_exp(terms);
}

std::vector<Vec> sample(const DiagGaussian& g, Rng& rng, int n) {
  if (n < 1) throw std::invalid_argument("sample: n must be >= 1");
  std::vector<Vec> out(size_t(n), Vec(g.mean.size()));
  for (int i = 0; i < n; ++i)
    for (size_t d = 0; d < g.mean.size(); ++d)
      out[size_t(i)][d] = g.mean[d] + std::sqrt(g.var[d]) * rng.normal();
  return out;
}

double gamma_expectation(const GammaDist& g) { return g.shape / g.rate; }

double gamma_e_log(const GammaDist& g) { return digamma(g.shape) - std::log(g.rate); }

double gamma_entropy(const GammaDist& g) {
  return g.shape - std::log(g.rate) + std::lgamma(g.shape) +
         (1.0 - g.shape) * digamma(g.shape);
}

double gaussian_entropy(const DiagGaussian& g) {
  double h = 0.0;
  for (double v : g.var) h += 0.5 * (kLog2Pi + 1.0 + std::log(v));
  return h;
}

double digamma(double x) { return boost::math::digamma(x); }

double log_sum_exp(const Vec& xs) {
  if (xs.empty()) throw std::invalid_argument("log_sum_exp: empty input");
  double m = *std::max_element(xs.begin(), xs.end());
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : xs) s += std::exp(x - m);
  return m + std::log(s);
}

}  // namespace efagg::ef
