#include "efagg/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace efagg::oracle {

namespace {
constexpr double kLog2Pi = 1.8378770664093454835606594728112;
}

void gauss_legendre(int n, double lo, double hi, Vec& nodes, Vec& weights) {
  nodes.resize(size_t(n));
  weights.resize(size_t(n));
  // Newton iteration on P_n roots, symmetric pairs.
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double pp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = 0.0;
      for (int j = 0; j < n; ++j) {
        double p2 = p1;
        p1 = p0;
        p0 = ((2.0 * j + 1.0) * x * p1 - j * p2) / (j + 1.0);
      }
      pp = n * (x * p0 - p1) / (x * x - 1.0);
      double dx = p0 / pp;
      x -= dx;
      if (std::abs(dx) < 1e-15) break;
    }
    double w = 2.0 / ((1.0 - x * x) * pp * pp);
    double mid = 0.5 * (lo + hi), half = 0.5 * (hi - lo);
    nodes[size_t(i)] = mid - half * x;
    nodes[size_t(n - 1 - i)] = mid + half * x;
    weights[size_t(i)] = w * half;
    weights[size_t(n - 1 - i)] = w * half;
  }
}

QuadratureGrid grid_for(const ef::DiagGaussian& posterior_hint,
                        const ef::DiagGaussian& prior, int nodes_per_dim) {
  QuadratureGrid g;
  g.nodes_per_dim = nodes_per_dim;
  for (int d = 0; d < posterior_hint.dim(); ++d) {
    double sq = std::sqrt(posterior_hint.var[size_t(d)]);
    double sp = std::sqrt(prior.var[size_t(d)]);
    g.lo.push_back(std::min(posterior_hint.mean[size_t(d)] - 12.0 * sq,
                            prior.mean[size_t(d)] - 6.0 * sp));
    g.hi.push_back(std::max(posterior_hint.mean[size_t(d)] + 12.0 * sq,
                            prior.mean[size_t(d)] + 6.0 * sp));
  }
  return g;
}

QuadratureGrid grid_for(const ef::DiagGaussian& posterior_hint,
                        const ef::GaussianMixture& prior, int nodes_per_dim) {
  QuadratureGrid g = grid_for(posterior_hint, prior.components[0], nodes_per_dim);
  for (int k = 1; k < prior.k(); ++k) {
    for (int d = 0; d < posterior_hint.dim(); ++d) {
      double sp = std::sqrt(prior.components[size_t(k)].var[size_t(d)]);
      g.lo[size_t(d)] = std::min(g.lo[size_t(d)],
                                 prior.components[size_t(k)].mean[size_t(d)] - 6.0 * sp);
      g.hi[size_t(d)] = std::max(g.hi[size_t(d)],
                                 prior.components[size_t(k)].mean[size_t(d)] + 6.0 * sp);
    }
  }
  return g;
}

PosteriorEstimate quadrature_posterior(const agg::FactorSet& factors,
                                       const std::function<double(const Vec&)>& log_prior,
                                       const QuadratureGrid& grid) {
  const int dims = grid.dims();
  if (dims < 1 || dims > 2)
    throw std::invalid_argument("quadrature_posterior: supports D in {1,2}");
  const int n = grid.nodes_per_dim;

  std::vector<Vec> nodes(size_t(dims)), weights(size_t(dims));
  for (int d = 0; d < dims; ++d)
    gauss_legendre(n, grid.lo[size_t(d)], grid.hi[size_t(d)], nodes[size_t(d)], weights[size_t(d)]);

  auto log_joint = [&](const Vec& z) {
    double lp = log_prior(z);
    for (int i = 0; i < factors.count(); ++i) {
      for (int d = 0; d < dims; ++d) {
        double r = z[size_t(d)] - factors.means[size_t(i)][size_t(d)];
        double v = factors.vars[size_t(i)][size_t(d)];
        lp += -0.5 * (kLog2Pi + std::log(v) + r * r / v);
      }
    }
    return lp;
  };

  const long cells = dims == 1 ? n : long(n) * n;
  std::vector<double> logf(size_t(cells));
  std::vector<double> logw(size_t(cells));
  Vec z(size_t(dims));
  for (long c = 0; c < cells; ++c) {
    int i = int(c % n), j = int(c / n);
    z[0] = nodes[0][size_t(i)];
    double lw = std::log(weights[0][size_t(i)]);
    if (dims == 2) {
      z[1] = nodes[1][size_t(j)];
      lw += std::log(weights[1][size_t(j)]);
    }
    logf[size_t(c)] = log_joint(z);
    logw[size_t(c)] = lw;
  }

  double peak = -1e300;
  for (long c = 0; c < cells; ++c) peak = std::max(peak, logf[size_t(c)] + logw[size_t(c)]);
  double zsum = 0.0;
  Vec m1(size_t(dims), 0.0), m2(size_t(dims), 0.0);
  for (long c = 0; c < cells; ++c) {
    double w = std::exp(logf[size_t(c)] + logw[size_t(c)] - peak);
    int i = int(c % n), j = int(c / n);
    zsum += w;
    m1[0] += w * nodes[0][size_t(i)];
    m2[0] += w * nodes[0][size_t(i)] * nodes[0][size_t(i)];
    if (dims == 2) {
      m1[1] += w * nodes[1][size_t(j)];
      m2[1] += w * nodes[1][size_t(j)] * nodes[1][size_t(j)];
    }
  }

  PosteriorEstimate est;
  est.log_z = peak + std::log(zsum);
  for (int d = 0; d < dims; ++d) {
    double mu = m1[size_t(d)] / zsum;
    est.mean.push_back(mu);
    est.var.push_back(m2[size_t(d)] / zsum - mu * mu);
  }
  return est;
}

PosteriorEstimate quadrature_posterior_checked(
    const agg::FactorSet& factors, const std::function<double(const Vec&)>& log_prior,
    const QuadratureGrid& grid, double tol) {
  PosteriorEstimate coarse = quadrature_posterior(factors, log_prior, grid);
  QuadratureGrid fine = grid;
  fine.nodes_per_dim = 2 * grid.nodes_per_dim;
  PosteriorEstimate refined = quadrature_posterior(factors, log_prior, fine);
  double drift = std::abs(coarse.log_z - refined.log_z);
  for (int d = 0; d < grid.dims(); ++d) {
    drift = std::max(drift, std::abs(coarse.mean[size_t(d)] - refined.mean[size_t(d)]));
    drift = std::max(drift, std::abs(coarse.var[size_t(d)] - refined.var[size_t(d)]));
  }
  if (drift > tol)
    throw QuadratureError("quadrature did not self-converge: drift " + std::to_string(drift) +
                          " exceeds tol " + std::to_string(tol));
  return refined;
}

Vec finite_diff_grad(const std::function<double(const Vec&)>& f, Vec x, double eps) {
  Vec g(x.size());
  for (size_t i = 0; i < x.size(); ++i) {
    double orig = x[i];
    x[i] = orig + eps;
    double hi = f(x);
    x[i] = orig - eps;
    double lo = f(x);
    x[i] = orig;
    g[i] = (hi - lo) / (2.0 * eps);
  }
  return g;
}

agg::RobustState reference_cavi(const agg::FactorSet& factors,
                                const agg::RobustPrior& prior, int steps) {
  if (steps < 1) throw std::invalid_argument("reference_cavi: steps must be >= 1");
  const int n = factors.count();
  const int d = n > 0 ? factors.dim() : 1;
  if (n == 0) steps = 1;

  Vec mu(size_t(d), 0.0), s2(size_t(d), 1.0);
  double a = 1.0, b = 1.0, c = 1.0;
  Vec dd(size_t(n), 1.0);
  std::vector<double> trace;

  for (int sweep = 0; sweep < steps; ++sweep) {
    double e_alpha = a / b;
    for (int j = 0; j < d; ++j) {
      double prec = e_alpha, weighted = 0.0;
      for (int i = 0; i < n; ++i) {
        double e_beta = c / dd[size_t(i)];
        prec += e_beta / factors.vars[size_t(i)][size_t(j)];
        weighted += e_beta * factors.means[size_t(i)][size_t(j)] / factors.vars[size_t(i)][size_t(j)];
      }
      s2[size_t(j)] = std::max(1.0 / prec, ef::kVarFloor);
      mu[size_t(j)] = s2[size_t(j)] * weighted;
    }
    a = prior.a0 + 0.5 * d;
    double e_zz = 0.0;
    for (int j = 0; j < d; ++j) e_zz += mu[size_t(j)] * mu[size_t(j)] + s2[size_t(j)];
    b = prior.b0 + 0.5 * e_zz;
    c = prior.c0 + 0.5 * d;
    for (int i = 0; i < n; ++i) {
      double quad = 0.0;
      for (int j = 0; j < d; ++j) {
        double r = mu[size_t(j)] - factors.means[size_t(i)][size_t(j)];
        quad += (r * r + s2[size_t(j)]) / factors.vars[size_t(i)][size_t(j)];
      }
      dd[size_t(i)] = prior.c0 + 0.5 * quad;
    }

    agg::RobustState st;
    st.z_post = ef::DiagGaussian(mu, s2);
    st.alpha_post = ef::GammaDist(a, b);
    for (int i = 0; i < n; ++i) st.beta_posts.emplace_back(c, dd[size_t(i)]);
    trace.push_back(agg::evaluate_rba_elbo(st, factors, prior));
  }

  agg::RobustState out;
  out.z_post = ef::DiagGaussian(mu, s2);
  out.alpha_post = ef::GammaDist(a, b);
  for (int i = 0; i < n; ++i) out.beta_posts.emplace_back(c, dd[size_t(i)]);
  out.elbo_trace = std::move(trace);
  return out;
}

double rba_log_evidence_quad(double m, double v, const agg::RobustPrior& prior,
                             double z_half_width, double alpha_hi, int nodes_per_dim) {
  // Factor with Gamma(c0, c0) precision marginalized: a scaled Student-t.
  const double c0 = prior.c0;
  const double log_t_const = c0 * std::log(c0) + std::lgamma(c0 + 0.5) - std::lgamma(c0) -
                             0.5 * std::log(2.0 * std::numbers::pi * v);
  auto log_t_factor = [&](double z) {
    double r = z - m;
    return log_t_const - (c0 + 0.5) * std::log(c0 + r * r / (2.0 * v));
  };

  Vec zn, zw, an, aw;
  gauss_legendre(nodes_per_dim, -z_half_width, z_half_width, zn, zw);
  gauss_legendre(nodes_per_dim, 1e-9, alpha_hi, an, aw);

  const double log_gamma_const = prior.a0 * std::log(prior.b0) - std::lgamma(prior.a0);
  double peak = -1e300;
  std::vector<double> logf(size_t(nodes_per_dim) * nodes_per_dim);
  for (int i = 0; i < nodes_per_dim; ++i) {
    double z = zn[size_t(i)];
    double ltf = log_t_factor(z);
    for (int j = 0; j < nodes_per_dim; ++j) {
      double alpha = an[size_t(j)];
      double lp = ltf;
      lp += 0.5 * (std::log(alpha) - kLog2Pi) - 0.5 * alpha * z * z;  // N(z | 0, 1/alpha)
      lp += log_gamma_const + (prior.a0 - 1.0) * std::log(alpha) - prior.b0 * alpha;
      lp += std::log(zw[size_t(i)]) + std::log(aw[size_t(j)]);
      logf[size_t(i) * nodes_per_dim + j] = lp;
      peak = std::max(peak, lp);
    }
  }
  double s = 0.0;
  for (double lf : logf) s += std::exp(lf - peak);
  return peak + std::log(s);
}

}  // namespace efagg::oracle
