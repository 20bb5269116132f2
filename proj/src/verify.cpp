#include "efagg/verify.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>

#include "efagg/csv.hpp"
#include "efagg/np_model.hpp"
#include "efagg/oracle.hpp"
#include "efagg/taskgen.hpp"

namespace efagg::verify {

using agg::FactorSet;
using agg::RobustPrior;
using ef::DiagGaussian;
using ef::GaussianMixture;
using ef::Vec;
using nn::Node;
using nn::Tensor;

namespace {

struct Ctx {
  Profile profile = Profile::Default;
  // Strict mode tightens deterministic identities; statistical tolerances stay.
  double tight(double tol) const { return profile == Profile::Strict ? tol * 0.1 : tol; }
};

CheckResult result(const std::string& name, double err, double tol,
                   const std::string& note = "") {
  return {name, err, tol, err <= tol, note};
}

double rel_err(double got, double want) {
  return std::abs(got - want) / std::max(1.0, std::abs(want));
}

FactorSet random_factors(Rng& rng, int n, int d) {
  std::vector<Vec> means, vars;
  for (int i = 0; i < n; ++i) {
    Vec m(size_t(d)), v(size_t(d));
    for (int j = 0; j < d; ++j) {
      m[size_t(j)] = 1.5 * rng.normal();
      v[size_t(j)] = rng.uniform(0.3, 2.5);
    }
    means.push_back(std::move(m));
    vars.push_back(std::move(v));
  }
  return FactorSet(std::move(means), std::move(vars));
}

DiagGaussian random_gaussian(Rng& rng, int d) {
  Vec m(size_t(d)), v(size_t(d));
  for (int j = 0; j < d; ++j) {
    m[size_t(j)] = rng.normal();
    v[size_t(j)] = rng.uniform(0.4, 2.0);
  }
  return DiagGaussian(std::move(m), std::move(v));
}

// ----------------------------------------------------------------- ef_core

CheckResult check_roundtrip(const Ctx& c) {
  Rng rng(101);
  double err = 0.0;
  for (int t = 0; t < 1000; ++t) {
    DiagGaussian g = random_gaussian(rng, rng.uniform_int(1, 6));
    DiagGaussian back = ef::to_moment(ef::to_natural(g));
    for (int j = 0; j < g.dim(); ++j) {
      err = std::max(err, std::abs(back.mean[size_t(j)] - g.mean[size_t(j)]) /
                              std::max(1e-300, std::abs(g.mean[size_t(j)])));
      err = std::max(err, std::abs(back.var[size_t(j)] - g.var[size_t(j)]) / g.var[size_t(j)]);
    }
  }
  return result("ef.parameterization_roundtrip", err, c.tight(1e-10));
}

CheckResult check_kl(const Ctx& c) {
  Rng rng(102);
  double worst = 0.0;
  for (int t = 0; t < 1000; ++t) {
    int d = rng.uniform_int(1, 4);
    DiagGaussian q = random_gaussian(rng, d), p = random_gaussian(rng, d);
    double kl = ef::kl_diag_gaussian(q, p);
    worst = std::min(worst, kl);  // must stay >= 0
    double self = ef::kl_diag_gaussian(q, q);
    if (std::abs(self) > std::abs(worst)) worst = -std::abs(self);
  }
  return result("ef.kl_nonnegative", std::max(0.0, -worst), c.tight(1e-12),
                "worst negative excursion of KL");
}

CheckResult check_normalization(const Ctx&) {
  Rng rng(103);
  double err = 0.0;
  // 1-D and 2-D Gaussians, then a 2-D three-component mixture.
  for (int t = 0; t < 10; ++t) {
    int d = t % 2 == 0 ? 1 : 2;
    DiagGaussian g = random_gaussian(rng, d);
    auto grid = oracle::grid_for(g, g, d == 1 ? 400 : 200);
    auto est = oracle::quadrature_posterior(FactorSet{}, [&](const Vec& z) {
      return ef::log_prob(g, z);
    }, grid);
    err = std::max(err, std::abs(est.log_z));
  }
  for (int t = 0; t < 5; ++t) {
    std::vector<DiagGaussian> comps;
    for (int k = 0; k < 3; ++k) comps.push_back(random_gaussian(rng, 2));
    GaussianMixture mix({0.5, 0.3, 0.2}, comps);
    auto grid = oracle::grid_for(comps[0], mix, 220);
    auto est = oracle::quadrature_posterior(FactorSet{}, [&](const Vec& z) {
      return ef::mixture_log_prob(mix, z);
    }, grid);
    err = std::max(err, std::abs(est.log_z));
  }
  return result("ef.density_normalization", err, 1e-4, "|log integral| by quadrature");
}

CheckResult check_reparam_gradient(const Ctx& c) {
  Rng rng(104);
  const int n = 20000;
  Vec eps(size_t(n));
  for (double& e : eps) e = rng.normal();
  auto mc_mean = [&](double mu) {
    double s = 0.0;
    for (double e : eps) s += mu + 0.7 * e;  // fixed noise: common random numbers
    return s / n;
  };
  Vec g = oracle::finite_diff_grad([&](const Vec& x) { return mc_mean(x[0]); }, {0.3}, 1e-4);
  return result("ef.reparam_gradient", std::abs(g[0] - 1.0), c.tight(1e-5));
}

// -------------------------------------------------------------- aggregation

CheckResult check_ba_quadrature_impl(const std::string& name, int instances,
                                     double moment_tol, const AggregateFn& aggregate) {
  Rng rng(105);
  double err = 0.0;
  for (int t = 0; t < instances; ++t) {
    int d = t % 3 == 2 ? 2 : 1;
    int n = rng.uniform_int(0, 5);
    FactorSet f = random_factors(rng, n, d);
    DiagGaussian prior = random_gaussian(rng, d);
    DiagGaussian post = aggregate(f, prior);
    auto grid = oracle::grid_for(post, prior, d == 1 ? 400 : 220);
    auto est = oracle::quadrature_posterior(f, [&](const Vec& z) {
      return ef::log_prob(prior, z);
    }, grid);
    for (int j = 0; j < d; ++j) {
      err = std::max(err, std::abs(post.mean[size_t(j)] - est.mean[size_t(j)]));
      err = std::max(err, std::abs(post.var[size_t(j)] - est.var[size_t(j)]));
    }
  }
  return result(name, err, moment_tol);
}

CheckResult check_ba_quadrature(const Ctx&) {
  return check_ba_quadrature_impl("agg.ba_vs_quadrature", 100, 1e-6,
                                  [](const FactorSet& f, const DiagGaussian& p) {
                                    return agg::bayesian_aggregate(f, p);
                                  });
}

CheckResult check_logz_quadrature(const Ctx&) {
  Rng rng(106);
  double err = 0.0;
  for (int t = 0; t < 100; ++t) {
    int d = t % 3 == 2 ? 2 : 1;
    int n = rng.uniform_int(0, 5);
    FactorSet f = random_factors(rng, n, d);
    DiagGaussian prior = random_gaussian(rng, d);
    double lz = agg::aggregate_log_z(f, prior);
    DiagGaussian post = agg::bayesian_aggregate(f, prior);
    auto grid = oracle::grid_for(post, prior, d == 1 ? 400 : 220);
    auto est = oracle::quadrature_posterior(f, [&](const Vec& z) {
      return ef::log_prob(prior, z);
    }, grid);
    err = std::max(err, rel_err(lz, est.log_z));
  }
  return result("agg.log_evidence_vs_quadrature", err, 1e-5);
}

CheckResult check_mba_quadrature(const Ctx&) {
  Rng rng(107);
  double err = 0.0;
  for (int t = 0; t < 100; ++t) {
    int d = t % 4 == 3 ? 2 : 1;
    int k = rng.uniform_int(2, 3);
    int n = rng.uniform_int(0, 4);
    FactorSet f = random_factors(rng, n, d);
    Vec w(size_t(k));
    double wsum = 0.0;
    for (double& x : w) {
      x = rng.uniform(0.2, 1.0);
      wsum += x;
    }
    for (double& x : w) x /= wsum;
    std::vector<DiagGaussian> comps;
    for (int kk = 0; kk < k; ++kk) comps.push_back(random_gaussian(rng, d));
    GaussianMixture prior(w, comps);

    GaussianMixture post = agg::mixture_aggregate(f, prior);
    // Quadrature oracle: per-component evidences -> posterior weights.
    Vec masses(size_t(k));
    for (int kk = 0; kk < k; ++kk) {
      DiagGaussian hint = agg::bayesian_aggregate(f, comps[size_t(kk)]);
      auto grid = oracle::grid_for(hint, comps[size_t(kk)], d == 1 ? 400 : 220);
      auto est = oracle::quadrature_posterior(f, [&](const Vec& z) {
        return ef::log_prob(comps[size_t(kk)], z);
      }, grid);
      masses[size_t(kk)] = std::log(w[size_t(kk)]) + est.log_z;
    }
    double lse = ef::log_sum_exp(masses);
    for (int kk = 0; kk < k; ++kk) {
      double want = std::exp(masses[size_t(kk)] - lse);
      err = std::max(err, std::abs(post.weights[size_t(kk)] - want) / std::max(want, 1e-12));
      // Component moments must match the per-component Gaussian update.
      DiagGaussian comp_ref = agg::bayesian_aggregate(f, comps[size_t(kk)]);
      for (int j = 0; j < d; ++j) {
        err = std::max(err, std::abs(post.components[size_t(kk)].mean[size_t(j)] -
                                     comp_ref.mean[size_t(j)]));
        err = std::max(err, std::abs(post.components[size_t(kk)].var[size_t(j)] -
                                     comp_ref.var[size_t(j)]));
      }
    }
  }
  return result("agg.mixture_vs_quadrature", err, 1e-5);
}

CheckResult check_permutation_invariance(const Ctx& c) {
  Rng rng(108);
  double err = 0.0;
  for (int t = 0; t < 50; ++t) {
    int d = rng.uniform_int(1, 3);
    int n = rng.uniform_int(2, 8);
    FactorSet f = random_factors(rng, n, d);
    FactorSet shuffled = f;
    for (int i = n - 1; i > 0; --i) {
      int j = rng.uniform_int(0, i);
      std::swap(shuffled.means[size_t(i)], shuffled.means[size_t(j)]);
      std::swap(shuffled.vars[size_t(i)], shuffled.vars[size_t(j)]);
    }
    DiagGaussian prior = random_gaussian(rng, d);
    DiagGaussian a = agg::bayesian_aggregate(f, prior);
    DiagGaussian b = agg::bayesian_aggregate(shuffled, prior);
    for (int j = 0; j < d; ++j) {
      err = std::max(err, std::abs(a.mean[size_t(j)] - b.mean[size_t(j)]));
      err = std::max(err, std::abs(a.var[size_t(j)] - b.var[size_t(j)]));
    }
    agg::RobustState ra = agg::robust_aggregate(f, RobustPrior(1.0, 1.0, 0.5), 8);
    agg::RobustState rb = agg::robust_aggregate(shuffled, RobustPrior(1.0, 1.0, 0.5), 8);
    for (int j = 0; j < d; ++j) {
      err = std::max(err, std::abs(ra.z_post.mean[size_t(j)] - rb.z_post.mean[size_t(j)]));
      err = std::max(err, std::abs(ra.z_post.var[size_t(j)] - rb.z_post.var[size_t(j)]));
    }
    // mean pooling must be bit-identical under the summation policy
    Vec pa = agg::mean_pool(f.means);
    Vec pb = agg::mean_pool(shuffled.means);
    for (int j = 0; j < d; ++j)
      if (pa[size_t(j)] != pb[size_t(j)]) err = std::max(err, 1.0);
  }
  return result("agg.permutation_invariance", err, c.tight(1e-12));
}

CheckResult check_monotone_contraction(const Ctx&) {
  Rng rng(109);
  double worst = 0.0;
  for (int t = 0; t < 200; ++t) {
    int d = rng.uniform_int(1, 3);
    int n = rng.uniform_int(0, 6);
    FactorSet f = random_factors(rng, n, d);
    FactorSet extended = random_factors(rng, n + 1, d);
    extended.means.assign(f.means.begin(), f.means.end());
    extended.vars.assign(f.vars.begin(), f.vars.end());
    FactorSet extra = random_factors(rng, 1, d);
    extended.means.push_back(extra.means[0]);
    extended.vars.push_back(extra.vars[0]);
    DiagGaussian prior = random_gaussian(rng, d);
    DiagGaussian a = agg::bayesian_aggregate(f, prior);
    DiagGaussian b = agg::bayesian_aggregate(extended, prior);
    for (int j = 0; j < d; ++j)
      worst = std::max(worst, b.var[size_t(j)] - a.var[size_t(j)]);
  }
  return result("agg.variance_monotone_contraction", std::max(0.0, worst), 1e-15,
                "adding a factor may not increase posterior variance");
}

CheckResult check_reduction_mba_k1(const Ctx& c) {
  Rng rng(110);
  double err = 0.0;
  for (int t = 0; t < 1000; ++t) {
    int d = rng.uniform_int(1, 3);
    FactorSet f = random_factors(rng, rng.uniform_int(0, 5), d);
    DiagGaussian prior = random_gaussian(rng, d);
    GaussianMixture mix_prior(Vec{1.0}, {prior});
    DiagGaussian ba = agg::bayesian_aggregate(f, prior);
    GaussianMixture mba = agg::mixture_aggregate(f, mix_prior);
    err = std::max(err, std::abs(mba.weights[0] - 1.0));
    for (int j = 0; j < d; ++j) {
      err = std::max(err, std::abs(mba.components[0].mean[size_t(j)] - ba.mean[size_t(j)]));
      err = std::max(err, std::abs(mba.components[0].var[size_t(j)] - ba.var[size_t(j)]));
    }
  }
  return result("agg.reduction_mixture_k1", err, c.tight(1e-9));
}

CheckResult check_reduction_rba_1step(const Ctx& c) {
  Rng rng(111);
  double err = 0.0;
  for (int t = 0; t < 1000; ++t) {
    int d = rng.uniform_int(1, 3);
    FactorSet f = random_factors(rng, rng.uniform_int(0, 5), d);
    DiagGaussian ba = agg::bayesian_aggregate(f, DiagGaussian::standard(d));
    agg::RobustState rb = agg::robust_aggregate(f, RobustPrior(1e-4, 1e-4, 1e-2), 1);
    for (int j = 0; j < d; ++j) {
      err = std::max(err, std::abs(rb.z_post.mean[size_t(j)] - ba.mean[size_t(j)]));
      err = std::max(err, std::abs(rb.z_post.var[size_t(j)] - ba.var[size_t(j)]));
    }
  }
  return result("agg.reduction_robust_one_sweep", err, c.tight(1e-9));
}

CheckResult check_reduction_meanpool(const Ctx& c) {
  Rng rng(112);
  double err = 0.0;
  for (int t = 0; t < 1000; ++t) {
    int d = rng.uniform_int(1, 3);
    int n = rng.uniform_int(1, 6);
    FactorSet f = random_factors(rng, n, d);
    double shared_var = rng.uniform(0.5, 2.0);
    for (auto& v : f.vars) std::fill(v.begin(), v.end(), shared_var);
    DiagGaussian flat(Vec(size_t(d), 0.0), Vec(size_t(d), 1e12));
    DiagGaussian post = agg::bayesian_aggregate(f, flat);
    Vec pooled = agg::mean_pool(f.means);
    for (int j = 0; j < d; ++j)
      err = std::max(err, std::abs(post.mean[size_t(j)] - pooled[size_t(j)]));
  }
  return result("agg.reduction_mean_pooling", err, c.tight(1e-9),
                "flat prior + uniform factor variances");
}

CheckResult check_incremental_form(const Ctx& c) {
  Rng rng(113);
  double err = 0.0;
  for (int t = 0; t < 1000; ++t) {
    int d = rng.uniform_int(1, 4);
    int n = rng.uniform_int(0, 6);
    FactorSet f = random_factors(rng, n, d);
    DiagGaussian prior = random_gaussian(rng, d);
    DiagGaussian post = agg::bayesian_aggregate(f, prior);
    for (int j = 0; j < d; ++j) {
      // incremental form: mu = mu0 + var_post * sum_i (m_i - mu0) / V_i
      double acc = 0.0;
      for (int i = 0; i < n; ++i)
        acc += (f.means[size_t(i)][size_t(j)] - prior.mean[size_t(j)]) /
               f.vars[size_t(i)][size_t(j)];
      double mu_inc = prior.mean[size_t(j)] + post.var[size_t(j)] * acc;
      err = std::max(err, std::abs(mu_inc - post.mean[size_t(j)]));
    }
  }
  return result("agg.incremental_mean_form", err, c.tight(1e-9));
}

CheckResult check_rba_downweights(const Ctx&) {
  // One factor far away from the rest must receive a smaller precision weight.
  std::vector<Vec> means, vars;
  for (int i = 0; i < 7; ++i) {
    means.push_back({0.0});
    vars.push_back({1.0});
  }
  means.push_back({10.0});
  vars.push_back({1.0});
  FactorSet f(means, vars);
  agg::RobustState st = agg::robust_aggregate(f, RobustPrior(1e-6, 1e-6, 1e-2), 50);
  double e_inlier = ef::gamma_expectation(st.beta_posts[0]);
  double e_outlier = ef::gamma_expectation(st.beta_posts.back());
  double margin = e_outlier - e_inlier;  // must be clearly negative
  return result("agg.robust_downweights_outliers", std::max(0.0, margin), 1e-12,
                "E[beta_outlier] - E[beta_inlier] = " + std::to_string(margin));
}

CheckResult check_rba_matches_reference(const Ctx& c) {
  Rng rng(114);
  double err = 0.0;
  const std::vector<int> probe_steps = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 20, 35, 50};
  for (int t = 0; t < 100; ++t) {
    int d = rng.uniform_int(1, 3);
    int n = rng.uniform_int(1, 5);
    FactorSet f = random_factors(rng, n, d);
    RobustPrior prior(rng.uniform(0.1, 2.0), rng.uniform(0.1, 2.0), rng.uniform(0.1, 2.0));
    for (int k : probe_steps) {
      if (t >= 20 && k > 10) break;  // full trajectory on the first 20 instances
      agg::RobustState a = agg::robust_aggregate(f, prior, k);
      agg::RobustState b = oracle::reference_cavi(f, prior, k);
      for (int j = 0; j < d; ++j) {
        err = std::max(err, std::abs(a.z_post.mean[size_t(j)] - b.z_post.mean[size_t(j)]));
        err = std::max(err, std::abs(a.z_post.var[size_t(j)] - b.z_post.var[size_t(j)]));
      }
      err = std::max(err, std::abs(a.alpha_post.shape - b.alpha_post.shape));
      err = std::max(err, std::abs(a.alpha_post.rate - b.alpha_post.rate));
      for (int i = 0; i < n; ++i) {
        err = std::max(err, std::abs(a.beta_posts[size_t(i)].shape - b.beta_posts[size_t(i)].shape));
        err = std::max(err, std::abs(a.beta_posts[size_t(i)].rate - b.beta_posts[size_t(i)].rate));
      }
    }
  }
  return result("agg.robust_matches_reference_cavi", err, c.tight(1e-10));
}

CheckResult check_rba_bound_monotone(const Ctx&) {
  Rng rng(115);
  double worst = 0.0;
  for (int t = 0; t < 100; ++t) {
    int d = rng.uniform_int(1, 3);
    int n = rng.uniform_int(1, 6);
    FactorSet f = random_factors(rng, n, d);
    RobustPrior prior(rng.uniform(0.2, 2.0), rng.uniform(0.2, 2.0), rng.uniform(0.2, 2.0));
    agg::RobustState st = agg::robust_aggregate(f, prior, 50);
    for (size_t s = 1; s < st.elbo_trace.size(); ++s)
      worst = std::max(worst, st.elbo_trace[s - 1] - st.elbo_trace[s]);
  }
  return result("agg.cavi_bound_monotone", std::max(0.0, worst), 1e-6,
                "largest per-sweep decrease of the bound");
}

CheckResult check_rba_bound_below_evidence(const Ctx&) {
  // D=1, N=1 with the factor precision marginalized analytically.
  const double m = 0.5, v = 0.8;
  RobustPrior prior(2.0, 2.0, 1.5);
  FactorSet f({{m}}, {{v}});
  agg::RobustState st = agg::robust_aggregate(f, prior, 60);
  double bound = st.elbo_trace.back();
  double log_z = oracle::rba_log_evidence_quad(m, v, prior, 14.0, 60.0, 700);
  double excess = bound - log_z;  // must be <= 0
  return result("agg.cavi_bound_below_evidence", std::max(0.0, excess), 1e-6,
                "bound - log evidence = " + std::to_string(excess));
}

CheckResult check_rba_gradient_flow(const Ctx& c) {
  Rng rng(116);
  double err = 0.0;
  for (int t = 0; t < 10; ++t) {
    const int d = 2, n = 3, steps = 5;
    FactorSet f = random_factors(rng, n, d);
    RobustPrior prior(0.5, 0.5, 0.5);

    // Reverse-mode gradients of sum(post.mean) w.r.t. factor means.
    agg::FactorNodes fn;
    fn.means = Node::leaf(Tensor::from_rows(f.means), /*requires_grad=*/true);
    fn.vars = Node::leaf(Tensor::from_rows(f.vars));
    agg::RobustPriorNodes pn{Node::scalar(prior.a0), Node::scalar(prior.b0),
                             Node::scalar(prior.c0)};
    auto rb = agg::robust_aggregate_g(fn, pn, steps, false);
    nn::backward(nn::sum_all(rb.z.mean));
    const Tensor& ad = fn.means.grad();

    for (int i = 0; i < n; ++i)
      for (int j = 0; j < d; ++j) {
        auto fd_fn = [&](const Vec& x) {
          FactorSet pert = f;
          pert.means[size_t(i)][size_t(j)] = x[0];
          agg::RobustState st = agg::robust_aggregate(pert, prior, steps);
          double s = 0.0;
          for (double mu : st.z_post.mean) s += mu;
          return s;
        };
        Vec g = oracle::finite_diff_grad(fd_fn, {f.means[size_t(i)][size_t(j)]}, 1e-5);
        double got = ad(i, j);
        err = std::max(err, std::abs(got - g[0]) / std::max({std::abs(g[0]), std::abs(got), 1e-6}));
      }
  }
  return result("agg.robust_gradient_flow", err, c.tight(1e-4));
}

// ------------------------------------------------------------------ neural

CheckResult check_mlp_gradcheck(const Ctx& c) {
  Rng rng(117);
  nn::ParamStore store;
  Rng init = rng.substream(1);
  nn::Mlp mlp = nn::Mlp::create(store, "m", {3, 8, 8, 2}, init);
  Tensor x(4, 3);
  for (double& t : x.v) t = rng.normal();
  Tensor target(4, 2);
  for (double& t : target.v) t = rng.normal();

  auto loss_value = [&]() {
    Node out = mlp.forward(Node::leaf(x));
    Node resid = out - Node::leaf(target);
    return nn::sum_all(nn::square(resid));
  };
  Node loss = loss_value();
  nn::backward(loss);

  double err = 0.0;
  Rng pick(118);
  for (int t = 0; t < 40; ++t) {
    size_t p = size_t(pick.uniform_int(0, int(store.count()) - 1));
    Node param = store.entries()[p].second;
    int idx = pick.uniform_int(0, param.value().size() - 1);
    double orig = param.value().v[size_t(idx)];
    double eps = 1e-5;
    param.value_mut().v[size_t(idx)] = orig + eps;
    double hi = loss_value().item();
    param.value_mut().v[size_t(idx)] = orig - eps;
    double lo = loss_value().item();
    param.value_mut().v[size_t(idx)] = orig;
    double fd = (hi - lo) / (2 * eps);
    double ad = param.grad().v[size_t(idx)];
    err = std::max(err, std::abs(ad - fd) / std::max({std::abs(fd), std::abs(ad), 1e-8}));
  }
  return result("nn.mlp_gradient_check", err, c.tight(1e-4));
}

CheckResult check_bounded_transforms(const Ctx& c) {
  double err = 0.0;
  auto bsp = [](double x) {
    return nn::bounded_softplus(Node::scalar(x), 0.1).item();
  };
  auto bsg = [](double x) {
    return nn::bounded_sigmoid(Node::scalar(x), 1e-4).item();
  };
  err = std::max(err, std::abs(bsp(0.0) - (0.1 + 0.9 * std::log(2.0))));
  err = std::max(err, std::abs(bsp(-40.0) - 0.1));
  err = std::max(err, std::abs(bsg(0.0) - 0.50005));
  err = std::max(err, std::abs(bsg(40.0) - 1.0));
  err = std::max(err, std::abs(bsg(-40.0) - 1e-4));
  // derivative vs finite differences
  for (double x : {-2.0, -0.3, 0.0, 1.1, 3.0}) {
    Node in = Node::leaf(Tensor::scalar(x), true);
    Node out = nn::bounded_softplus(in, 0.1);
    nn::backward(out);
    Vec fd = oracle::finite_diff_grad([&](const Vec& v) {
      return nn::bounded_softplus(Node::scalar(v[0]), 0.1).item();
    }, {x}, 1e-6);
    err = std::max(err, std::abs(in.grad().v[0] - fd[0]));
  }
  return result("nn.bounded_transforms", err, c.tight(1e-6));
}

CheckResult check_adam(const Ctx& c) {
  double err = 0.0;
  {
    nn::ParamStore store;
    Node p = store.add("p", Tensor::scalar(1.0));
    nn::Adam opt(store, {.lr0 = 1e-3, .horizon = 100});
    p.zero_grad();  // zero gradient step
    opt.step(store);
    err = std::max(err, std::abs(p.value().v[0] - 1.0));
  }
  {
    nn::ParamStore store;
    Node p = store.add("p", Tensor::scalar(1.0));
    nn::Adam opt(store, {.lr0 = 1e-3, .horizon = 1000000});
    p.zero_grad();
    p.p->grad.v[0] = 1.0;
    opt.step(store);
    // bias-corrected first step moves by exactly lr / (1 + eps)
    err = std::max(err, std::abs((1.0 - p.value().v[0]) - 1e-3 / (1.0 + 1e-8)));
  }
  {
    nn::ParamStore store;
    store.add("p", Tensor::scalar(0.0));
    nn::AdamConfig cfg{.lr0 = 4e-4, .horizon = 100};
    nn::Adam opt(store, cfg);
    for (int i = 0; i < 50; ++i) {
      store.zero_grads();
      opt.step(store);
    }
    err = std::max(err, std::abs(opt.current_lr() - 2e-4));
  }
  return result("nn.adam_schedule", err, c.tight(1e-12));
}

CheckResult check_nn_determinism(const Ctx&) {
  auto run = [] {
    npm::ModelConfig mc;
    mc.variant = npm::Variant::BA;
    mc.latent_dim = 4;
    mc.enc_hidden = 8;
    mc.enc_depth = 1;
    mc.dec_hidden = 8;
    mc.dec_depth = 1;
    npm::NpModel model(mc, 7);
    npm::TrainConfig tc;
    tc.steps = 100;
    tc.batch = 2;
    tc.n_samples = 2;
    tc.metric_every = 0;
    tc.val_tasks = 0;
    return npm::train(model, taskgen::FamilyConfig{}, tc, 3).elbo_trace;
  };
  auto a = run();
  auto b = run();
  double err = a == b ? 0.0 : 1.0;
  return result("nn.seeded_determinism", err, 0.0, "bit-identical 100-step loss traces");
}

// ------------------------------------------------------------------ taskgen

CheckResult check_kernels(const Ctx& c) {
  double err = 0.0;
  taskgen::KernelSpec rbf(taskgen::KernelFamily::Rbf, 0.7, 0.5);
  err = std::max(err, std::abs(taskgen::kernel_eval(rbf, 0.3, 0.3) - 0.49));
  taskgen::KernelSpec rbf1(taskgen::KernelFamily::Rbf, 1.0, 0.5);
  err = std::max(err, std::abs(taskgen::kernel_eval(rbf1, 0.0, 0.5) - std::exp(-0.5)));
  taskgen::KernelSpec mat(taskgen::KernelFamily::Matern52);
  err = std::max(err, std::abs(taskgen::kernel_eval(mat, 1.2, 1.2) - 1.0));
  return result("task.kernel_values", err, c.tight(1e-12));
}

CheckResult check_task_ranges(const Ctx&) {
  Rng rng(119);
  double err = 0.0;
  for (int t = 0; t < 2000; ++t) {
    Rng stream = rng.substream(uint64_t(t));
    taskgen::Task task = taskgen::sample_task(taskgen::FamilyConfig{}, stream);
    int nc = task.n_context(), nt = task.n_target();
    if (nc < 3 || nc > 47 || nt < 3 || nt > 50 - nc) err = 1.0;
    for (double x : task.context_x)
      if (x < -2.0 || x > 2.0) err = 1.0;
    for (double x : task.target_x)
      if (x < -2.0 || x > 2.0) err = 1.0;
  }
  return result("task.sampling_ranges", err, 0.0);
}

CheckResult check_gp_marginals(const Ctx&) {
  Rng rng(120);
  const Vec xs = {-1.5, -0.5, 0.0, 0.8, 1.7};
  taskgen::KernelSpec spec(taskgen::KernelFamily::Rbf, 1.0, 0.4);
  const int n = int(xs.size()), draws = 10000;
  std::vector<double> cov(size_t(n) * n, 0.0);
  for (int t = 0; t < draws; ++t) {
    Vec y = taskgen::gp_joint_sample(spec, xs, rng);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) cov[size_t(i) * n + j] += y[size_t(i)] * y[size_t(j)] / draws;
  }
  double num = 0.0, den = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      double k = taskgen::kernel_eval(spec, xs[size_t(i)], xs[size_t(j)]);
      num += (cov[size_t(i) * n + j] - k) * (cov[size_t(i) * n + j] - k);
      den += k * k;
    }
  return result("task.gp_marginal_consistency", std::sqrt(num / den), 0.05,
                "Frobenius relative error of the empirical covariance");
}

CheckResult check_corruption(const Ctx&) {
  Rng rng(121);
  const int n = 1000000;
  // Heavy tails: sample kurtosis of t(2.1) draws must be very large.
  std::vector<double> xs(size_t(n));
  for (double& x : xs) x = rng.student_t(2.1);
  double mean = 0.0;
  for (double x : xs) mean += x / n;
  double m2 = 0.0, m4 = 0.0;
  for (double x : xs) {
    double d = x - mean;
    m2 += d * d / n;
    m4 += d * d * d * d / n;
  }
  double kurtosis = m4 / (m2 * m2) - 3.0;
  double err = kurtosis > 50.0 ? 0.0 : 1.0;

  // Median of |eps|/gamma vs an independent hierarchical t sampler.
  const double gamma = 0.11;
  std::vector<double> a(size_t(n)), b(size_t(n));
  Rng r2 = rng.substream(1);
  for (int i = 0; i < n; ++i) a[size_t(i)] = std::abs(gamma * r2.student_t(2.1)) / gamma;
  Rng r3 = rng.substream(2);
  for (int i = 0; i < n; ++i) {
    double z = r3.normal();
    double chi = r3.gamma(2.1 / 2.0, 0.5);  // chi-squared(2.1)
    b[size_t(i)] = std::abs(z / std::sqrt(chi / 2.1));
  }
  std::nth_element(a.begin(), a.begin() + n / 2, a.end());
  std::nth_element(b.begin(), b.begin() + n / 2, b.end());
  double med_err = std::abs(a[size_t(n / 2)] - b[size_t(n / 2)]);
  err = std::max(err, med_err > 0.02 ? med_err : 0.0);

  // Targets untouched, bitwise.
  taskgen::Task task = taskgen::sample_task(taskgen::FamilyConfig{}, rng);
  Rng r4 = rng.substream(3);
  taskgen::Task corrupted = taskgen::corrupt_student_t(task, 0.15, r4);
  if (corrupted.target_y != task.target_y || corrupted.target_x != task.target_x ||
      corrupted.context_x != task.context_x)
    err = std::max(err, 1.0);
  return result("task.corruption_contract", err, 1e-12,
                "kurtosis " + std::to_string(kurtosis) + ", median gap " +
                    std::to_string(med_err));
}

CheckResult check_batch_substreams(const Ctx&) {
  Rng base(7);
  auto b4 = taskgen::make_batch(taskgen::FamilyConfig{}, 4, base.substream(9));
  auto b8 = taskgen::make_batch(taskgen::FamilyConfig{}, 8, base.substream(9));
  auto b4b = taskgen::make_batch(taskgen::FamilyConfig{}, 4, base.substream(9));
  double err = 0.0;
  for (int i = 0; i < 4; ++i) {
    if (b4[size_t(i)].context_y != b8[size_t(i)].context_y) err = 1.0;
    if (b4[size_t(i)].context_y != b4b[size_t(i)].context_y) err = 1.0;
    if (b4[size_t(i)].target_y != b8[size_t(i)].target_y) err = 1.0;
  }
  return result("task.batch_substreams", err, 0.0);
}

// ----------------------------------------------------------------- np_model

npm::ModelConfig tiny_config(npm::Variant v, int d = 8) {
  npm::ModelConfig mc;
  mc.variant = v;
  mc.latent_dim = d;
  mc.mixture_k = 2;
  mc.cavi_steps = 3;
  mc.enc_hidden = 16;
  mc.enc_depth = 2;
  mc.np_enc_hidden = 24;
  mc.np_enc_depth = 2;
  mc.dec_hidden = 16;
  mc.dec_depth = 2;
  return mc;
}

taskgen::Task small_task(uint64_t seed) {
  Rng rng(seed);
  Rng stream = rng.substream(0);
  return taskgen::sample_task(taskgen::FamilyConfig{}, stream);
}

CheckResult check_model_permutation(const Ctx& c) {
  double err = 0.0;
  taskgen::Task task = small_task(11);
  for (auto v : {npm::Variant::MeanPool, npm::Variant::BA, npm::Variant::MixtureBA,
                 npm::Variant::RobustBA}) {
    npm::NpModel model(tiny_config(v), 21);
    taskgen::Task shuffled = task;
    Rng shuffle_rng(5);
    for (int i = task.n_context() - 1; i > 0; --i) {
      int j = shuffle_rng.uniform_int(0, i);
      std::swap(shuffled.context_x[size_t(i)], shuffled.context_x[size_t(j)]);
      std::swap(shuffled.context_y[size_t(i)], shuffled.context_y[size_t(j)]);
    }
    Rng n1(77), n2(77);
    npm::TaskEval a = model.evaluate_task(task, 4, n1);
    npm::TaskEval b = model.evaluate_task(shuffled, 4, n2);
    err = std::max(err, std::abs(a.pred_ll_target - b.pred_ll_target));
  }
  return result("model.permutation_invariance", err, c.tight(1e-9));
}

CheckResult check_elbo_factor_identity(const Ctx& c) {
  // Conjugate-case identity: KL(q_ct || q_c) equals the sum of expected
  // target-factor log densities minus the evidence gap.
  Rng rng(122);
  double err = 0.0;
  for (int t = 0; t < 50; ++t) {
    int d = rng.uniform_int(1, 4);
    int nc = rng.uniform_int(1, 5), nt = rng.uniform_int(1, 5);
    FactorSet fc = random_factors(rng, nc, d);
    FactorSet ft = random_factors(rng, nt, d);
    FactorSet fct = fc;
    for (int i = 0; i < nt; ++i) {
      fct.means.push_back(ft.means[size_t(i)]);
      fct.vars.push_back(ft.vars[size_t(i)]);
    }
    DiagGaussian prior = random_gaussian(rng, d);
    DiagGaussian q_c = agg::bayesian_aggregate(fc, prior);
    DiagGaussian q_ct = agg::bayesian_aggregate(fct, prior);
    double kl = ef::kl_diag_gaussian(q_ct, q_c);

    double expected_factors = 0.0;
    for (int i = 0; i < nt; ++i) {
      // E_{q_ct}[log N(z | m_i, V_i)], closed form
      for (int j = 0; j < d; ++j) {
        double v = ft.vars[size_t(i)][size_t(j)];
        double r = q_ct.mean[size_t(j)] - ft.means[size_t(i)][size_t(j)];
        expected_factors +=
            -0.5 * (std::log(2.0 * 3.14159265358979323846 * v) + (r * r + q_ct.var[size_t(j)]) / v);
      }
    }
    double rhs = expected_factors - agg::aggregate_log_z(fct, prior) +
                 agg::aggregate_log_z(fc, prior);
    err = std::max(err, std::abs(kl - (-rhs)));
  }
  return result("model.factor_entropy_identity", err, c.tight(1e-8));
}

CheckResult check_model_reduction_chain(const Ctx& c) {
  taskgen::Task task = small_task(13);
  const int d = 8;
  npm::NpModel ba(tiny_config(npm::Variant::BA, d), 33);
  auto mba_cfg = tiny_config(npm::Variant::MixtureBA, d);
  mba_cfg.mixture_k = 1;
  npm::NpModel mba(mba_cfg, 33);
  auto rba_cfg = tiny_config(npm::Variant::RobustBA, d);
  rba_cfg.cavi_steps = 1;
  npm::NpModel rba(rba_cfg, 33);
  // Align the mixture prior with the fixed standard-normal prior.
  for (auto& [name, node] : mba.params().entries()) {
    if (name == "prior.mean0") std::fill(node.value_mut().v.begin(), node.value_mut().v.end(), 0.0);
    if (name == "prior.logvar0") std::fill(node.value_mut().v.begin(), node.value_mut().v.end(), 0.0);
  }
  npm::Posterior pa = ba.posterior(task.context_x, task.context_y);
  npm::Posterior pb = mba.posterior(task.context_x, task.context_y);
  npm::Posterior pc = rba.posterior(task.context_x, task.context_y);
  double err = 0.0;
  for (int j = 0; j < d; ++j) {
    double m0 = pa.comps[0].mean.value().v[size_t(j)];
    double v0 = pa.comps[0].var.value().v[size_t(j)];
    err = std::max(err, std::abs(pb.comps[0].mean.value().v[size_t(j)] - m0));
    err = std::max(err, std::abs(pb.comps[0].var.value().v[size_t(j)] - v0));
    err = std::max(err, std::abs(pc.comps[0].mean.value().v[size_t(j)] - m0));
    err = std::max(err, std::abs(pc.comps[0].var.value().v[size_t(j)] - v0));
  }
  return result("model.reduction_chain", err, c.tight(1e-9));
}

CheckResult check_model_bounds(const Ctx&) {
  taskgen::Task task = small_task(17);
  double err = 0.0;
  {
    npm::NpModel model(tiny_config(npm::Variant::BA), 41);
    agg::FactorNodes f = model.encode_factors(task.context_x, task.context_y);
    for (double v : f.vars.value().v)
      if (v < 1e-4) err = 1.0;
    npm::Posterior post = model.posterior(task.context_x, task.context_y);
    Node z = post.comps[0].mean;
    auto [mean, sd] = model.decode(z, task.target_x);
    for (double s : sd.value().v)
      if (s < 0.1) err = 1.0;
  }
  {
    npm::NpModel model(tiny_config(npm::Variant::MeanPool), 43);
    npm::Posterior post = model.posterior(task.context_x, task.context_y);
    for (double v : post.comps[0].var.value().v)
      if (std::sqrt(v) < 1e-4) err = 1.0;
  }
  return result("model.output_bounds", err, 0.0,
                "factor var >= 1e-4, latent std >= 1e-4, predictive std >= 0.1");
}

CheckResult check_duplicate_precision(const Ctx& c) {
  taskgen::Task task = small_task(19);
  npm::NpModel model(tiny_config(npm::Variant::BA), 47);
  Vec xs = task.context_x, ys = task.context_y;
  Vec xs_dup = xs, ys_dup = ys;
  xs_dup.push_back(xs[0]);
  ys_dup.push_back(ys[0]);
  npm::Posterior base = model.posterior(xs, ys);
  npm::Posterior dup = model.posterior(xs_dup, ys_dup);
  agg::FactorNodes f = model.encode_factors({xs[0]}, {ys[0]});
  double err = 0.0;
  for (int j = 0; j < model.config().latent_dim; ++j) {
    double p0 = 1.0 / base.comps[0].var.value().v[size_t(j)];
    double p1 = 1.0 / dup.comps[0].var.value().v[size_t(j)];
    double extra = 1.0 / f.vars.value().v[size_t(j)];
    err = std::max(err, std::abs(p1 - (p0 + extra)));
  }
  return result("model.duplicate_point_precision", err, c.tight(1e-9));
}

CheckResult check_elbo_gradcheck(const Ctx& c) {
  double err = 0.0;
  taskgen::Task task;
  task.context_x = {-1.2, -0.3, 0.4, 1.5};
  task.context_y = {0.5, -0.2, 0.1, -0.7};
  task.target_x = {-0.8, 0.9, 1.9};
  task.target_y = {0.3, -0.4, 0.6};
  for (auto v : {npm::Variant::MeanPool, npm::Variant::BA, npm::Variant::MixtureBA,
                 npm::Variant::RobustBA}) {
    npm::NpModel model(tiny_config(v, 8), 51);
    const int n_samples = 3;
    auto elbo_value = [&]() {
      Rng noise(991);
      return model.elbo(task, n_samples, noise);
    };
    Node e = elbo_value();
    nn::backward(e);

    Rng pick(55);
    for (int t = 0; t < 20; ++t) {
      size_t p = size_t(pick.uniform_int(0, int(model.params().count()) - 1));
      Node param = model.params().entries()[p].second;
      int idx = pick.uniform_int(0, param.value().size() - 1);
      double ad = param.grad().size() == param.value().size() ? param.grad().v[size_t(idx)] : 0.0;
      double orig = param.value().v[size_t(idx)];
      double eps = 1e-5;
      param.value_mut().v[size_t(idx)] = orig + eps;
      double hi = elbo_value().item();
      param.value_mut().v[size_t(idx)] = orig - eps;
      double lo = elbo_value().item();
      param.value_mut().v[size_t(idx)] = orig;
      double fd = (hi - lo) / (2 * eps);
      err = std::max(err, std::abs(ad - fd) / std::max({std::abs(fd), std::abs(ad), 1e-6}));
    }
    model.params().zero_grads();
  }
  return result("model.elbo_gradient_check", err, c.tight(1e-3));
}

// ------------------------------------------------------------------- oracle

CheckResult check_oracle_convergence(const Ctx&) {
  Rng rng(123);
  FactorSet f = random_factors(rng, 3, 1);
  DiagGaussian prior = random_gaussian(rng, 1);
  DiagGaussian post = agg::bayesian_aggregate(f, prior);
  auto grid = oracle::grid_for(post, prior, 300);
  auto coarse = oracle::quadrature_posterior(f, [&](const Vec& z) {
    return ef::log_prob(prior, z);
  }, grid);
  auto fine_grid = grid;
  fine_grid.nodes_per_dim = 600;
  auto fine = oracle::quadrature_posterior(f, [&](const Vec& z) {
    return ef::log_prob(prior, z);
  }, fine_grid);
  double drift = std::max({std::abs(coarse.mean[0] - fine.mean[0]),
                           std::abs(coarse.var[0] - fine.var[0]),
                           std::abs(coarse.log_z - fine.log_z)});
  return result("oracle.quadrature_self_convergence", drift, 1e-7,
                "10% of the 1e-6 comparison tolerance");
}

CheckResult check_fd_sanity(const Ctx& c) {
  Vec g = oracle::finite_diff_grad([](const Vec& x) {
    double s = 0.0;
    for (double v : x) s += v * v;
    return s;
  }, {1.0, 2.0}, 1e-6);
  double err = std::max(std::abs(g[0] - 2.0), std::abs(g[1] - 4.0));
  return result("oracle.finite_diff_sanity", err, c.tight(1e-6));
}

CheckResult check_reference_alpha_shape(const Ctx& c) {
  Rng rng(124);
  double err = 0.0;
  for (int t = 0; t < 20; ++t) {
    int d = rng.uniform_int(1, 4);
    FactorSet f = random_factors(rng, rng.uniform_int(1, 4), d);
    RobustPrior prior(rng.uniform(0.1, 3.0), rng.uniform(0.1, 3.0), rng.uniform(0.1, 3.0));
    agg::RobustState st = oracle::reference_cavi(f, prior, 1);
    err = std::max(err, std::abs(st.alpha_post.shape - (prior.a0 + 0.5 * d)));
  }
  return result("oracle.reference_alpha_shape", err, c.tight(1e-12));
}

using CheckFn = CheckResult (*)(const Ctx&);

const std::vector<std::pair<std::string, CheckFn>>& registry() {
  static const std::vector<std::pair<std::string, CheckFn>> checks = {
      {"ef.parameterization_roundtrip", check_roundtrip},
      {"ef.kl_nonnegative", check_kl},
      {"ef.density_normalization", check_normalization},
      {"ef.reparam_gradient", check_reparam_gradient},
      {"agg.ba_vs_quadrature", check_ba_quadrature},
      {"agg.log_evidence_vs_quadrature", check_logz_quadrature},
      {"agg.mixture_vs_quadrature", check_mba_quadrature},
      {"agg.permutation_invariance", check_permutation_invariance},
      {"agg.variance_monotone_contraction", check_monotone_contraction},
      {"agg.reduction_mixture_k1", check_reduction_mba_k1},
      {"agg.reduction_robust_one_sweep", check_reduction_rba_1step},
      {"agg.reduction_mean_pooling", check_reduction_meanpool},
      {"agg.incremental_mean_form", check_incremental_form},
      {"agg.robust_downweights_outliers", check_rba_downweights},
      {"agg.robust_matches_reference_cavi", check_rba_matches_reference},
      {"agg.cavi_bound_monotone", check_rba_bound_monotone},
      {"agg.cavi_bound_below_evidence", check_rba_bound_below_evidence},
      {"agg.robust_gradient_flow", check_rba_gradient_flow},
      {"nn.mlp_gradient_check", check_mlp_gradcheck},
      {"nn.bounded_transforms", check_bounded_transforms},
      {"nn.adam_schedule", check_adam},
      {"nn.seeded_determinism", check_nn_determinism},
      {"task.kernel_values", check_kernels},
      {"task.sampling_ranges", check_task_ranges},
      {"task.gp_marginal_consistency", check_gp_marginals},
      {"task.corruption_contract", check_corruption},
      {"task.batch_substreams", check_batch_substreams},
      {"model.permutation_invariance", check_model_permutation},
      {"model.factor_entropy_identity", check_elbo_factor_identity},
      {"model.reduction_chain", check_model_reduction_chain},
      {"model.output_bounds", check_model_bounds},
      {"model.duplicate_point_precision", check_duplicate_precision},
      {"model.elbo_gradient_check", check_elbo_gradcheck},
      {"oracle.quadrature_self_convergence", check_oracle_convergence},
      {"oracle.finite_diff_sanity", check_fd_sanity},
      {"oracle.reference_alpha_shape", check_reference_alpha_shape},
  };
  return checks;
}

}  // namespace

std::vector<std::string> check_names() {
  std::vector<std::string> names;
  for (auto& [n, _] : registry()) names.push_back(n);
  return names;
}

CheckResult run_check(const std::string& name, Profile profile) {
  for (auto& [n, fn] : registry())
    if (n == name) return fn(Ctx{profile});
  throw std::invalid_argument("verify: unknown check '" + name + "'");
}

std::vector<CheckResult> run_all(Profile profile) {
  std::vector<CheckResult> out;
  for (auto& [_, fn] : registry()) out.push_back(fn(Ctx{profile}));
  return out;
}

void print_table(const std::vector<CheckResult>& results, std::ostream& os) {
  size_t width = 0;
  for (auto& r : results) width = std::max(width, r.name.size());
  for (auto& r : results) {
    os << (r.pass ? "[PASS] " : "[FAIL] ") << std::left << std::setw(int(width) + 2)
       << r.name << " max_err=" << std::scientific << std::setprecision(3) << r.max_error
       << " tol=" << r.tolerance;
    if (!r.note.empty()) os << "  (" << r.note << ")";
    os << std::defaultfloat << '\n';
  }
}

void write_csv(const std::vector<CheckResult>& results, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("verify: cannot write " + path);
  out << "check,max_error,tolerance,pass\n";
  for (auto& r : results)
    out << r.name << ',' << csv::fmt(r.max_error) << ',' << csv::fmt(r.tolerance) << ','
        << (r.pass ? 1 : 0) << '\n';
}

CheckResult check_ba_against_quadrature(int instances, double moment_tol,
                                        const AggregateFn& aggregate) {
  return check_ba_quadrature_impl("agg.ba_vs_quadrature", instances, moment_tol, aggregate);
}

}  // namespace efagg::verify
