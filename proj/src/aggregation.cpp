#include "efagg/aggregation.hpp"

#include <cmath>
#include <stdexcept>

namespace efagg::agg {

using nn::Node;
using nn::Tensor;

namespace {
constexpr double kLog2Pi = 1.8378770664093454835606594728112;

void check_dims(int a, int b, const char* op) {
  if (a != b)
    throw std::invalid_argument(std::string(op) + ": dimension mismatch " +
                                std::to_string(a) + " vs " + std::to_string(b));
}
}  // namespace

FactorSet::FactorSet(std::vector<Vec> means_in, std::vector<Vec> vars_in)
    : means(std::move(means_in)), vars(std::move(vars_in)) {
  if (means.size() != vars.size())
    throw std::invalid_argument("FactorSet: means/vars count mismatch");
  for (size_t i = 0; i < means.size(); ++i) {
    check_dims(int(means[i].size()), dim(), "FactorSet");
    check_dims(int(vars[i].size()), dim(), "FactorSet");
    for (double v : vars[i])
      if (!(v > 0)) throw std::invalid_argument("FactorSet: factor variance must be > 0");
  }
}

RobustPrior::RobustPrior(double a0_in, double b0_in, double c0_in)
    : a0(a0_in), b0(b0_in), c0(c0_in) {
  if (!(a0 > 0) || !(b0 > 0) || !(c0 > 0))
    throw std::invalid_argument("RobustPrior: parameters must be > 0");
}

FactorNodes factor_leaves(const FactorSet& f) {
  FactorNodes out;
  out.means = Node::leaf(Tensor::from_rows(f.means));
  out.vars = Node::leaf(Tensor::from_rows(f.vars));
  return out;
}

GaussianNodes gaussian_leaves(const ef::DiagGaussian& g) {
  return {Node::row(g.mean), Node::row(g.var)};
}

GaussianNodes bayesian_aggregate_g(const FactorNodes& f, const GaussianNodes& prior) {
  const int d = prior.mean.cols();
  GaussianNodes post;
  Node prior_prec = 1.0 / prior.var;
  if (f.count() == 0) {
    post.var = nn::clamp_min(prior.var, ef::kVarFloor);
    post.mean = prior.mean;
    return post;
  }
  check_dims(f.dim(), d, "bayesian_aggregate");
  Node inv_v = 1.0 / f.vars;
  Node prec = nn::sum_over_rows(inv_v) + prior_prec;
  post.var = nn::clamp_min(1.0 / prec, ef::kVarFloor);
  post.mean = post.var * (nn::sum_over_rows(f.means * inv_v) + prior.mean * prior_prec);
  return post;
}

namespace {

// log C_k of one Gaussian component, from node values.
double component_log_evidence(const FactorNodes& f, const GaussianNodes& prior,
                              const GaussianNodes& post) {
  const int n = f.count();
  const int d = prior.mean.cols();
  if (n == 0) return 0.0;
  const Tensor& m = f.means.value();
  const Tensor& v = f.vars.value();
  double log_det_v = 0.0, qf_factors = 0.0;
  for (int i = 0; i < n * d; ++i) {
    log_det_v += std::log(v.v[size_t(i)]);
    qf_factors += m.v[size_t(i)] * m.v[size_t(i)] / v.v[size_t(i)];
  }
  double log_det_prior = 0.0, log_det_post = 0.0, qf_prior = 0.0, qf_post = 0.0;
  const Tensor& pm = prior.mean.value();
  const Tensor& pv = prior.var.value();
  const Tensor& qm = post.mean.value();
  const Tensor& qv = post.var.value();
  for (int j = 0; j < d; ++j) {
    log_det_prior += std::log(pv.v[size_t(j)]);
    log_det_post += std::log(qv.v[size_t(j)]);
    qf_prior += pm.v[size_t(j)] * pm.v[size_t(j)] / pv.v[size_t(j)];
    qf_post += qm.v[size_t(j)] * qm.v[size_t(j)] / qv.v[size_t(j)];
  }
  return -0.5 * (double(d) * n * kLog2Pi + log_det_v + log_det_prior - log_det_post +
                 qf_factors + qf_prior - qf_post);
}

}  // namespace

MixturePosteriorNodes mixture_aggregate_g(const FactorNodes& f,
                                          const MixturePriorNodes& prior) {
  if (prior.comps.empty()) throw std::invalid_argument("mixture_aggregate: K must be >= 1");
  MixturePosteriorNodes out;
  Vec log_w(prior.comps.size());
  for (size_t k = 0; k < prior.comps.size(); ++k) {
    out.comps.push_back(bayesian_aggregate_g(f, prior.comps[k]));
    out.log_ck.push_back(component_log_evidence(f, prior.comps[k], out.comps[k]));
    log_w[k] = (prior.weights[k] > 0 ? std::log(prior.weights[k]) : -1e300) + out.log_ck[k];
  }
  double lse = ef::log_sum_exp(log_w);
  out.weights.resize(log_w.size());
  for (size_t k = 0; k < log_w.size(); ++k) out.weights[k] = std::exp(log_w[k] - lse);
  return out;
}

namespace {

RobustState state_from_nodes(const RobustNodes& nodes) {
  RobustState st;
  st.z_post = ef::DiagGaussian(nodes.z.mean.value().v, nodes.z.var.value().v);
  st.alpha_post = ef::GammaDist(nodes.alpha_shape.item(), nodes.alpha_rate.item());
  const Tensor& d = nodes.beta_rates.value();
  for (int i = 0; i < d.rows; ++i)
    st.beta_posts.emplace_back(nodes.beta_shape.item(), d.v[size_t(i)]);
  st.elbo_trace = nodes.elbo_trace;
  return st;
}

}  // namespace

RobustNodes robust_aggregate_g(const FactorNodes& f, const RobustPriorNodes& prior,
                               int steps, bool record_trace) {
  if (steps < 1) throw std::invalid_argument("robust_aggregate: steps must be >= 1");
  const int n = f.count();
  const int d = f.dim() > 0 ? f.dim() : 1;
  if (n == 0) steps = 1;  // a single sweep leaves the unit-precision prior

  RobustNodes st;
  // Unit initialization: E[alpha] = E[beta_i] = 1.
  st.alpha_shape = Node::scalar(1.0);
  st.alpha_rate = Node::scalar(1.0);
  st.beta_shape = Node::scalar(1.0);
  st.beta_rates = Node::leaf(Tensor(n, 1, 1.0));

  Node inv_v, m_inv_v, quad_m;
  if (n > 0) {
    inv_v = 1.0 / f.vars;
    m_inv_v = f.means * inv_v;
    quad_m = nn::sum_over_cols(f.means * m_inv_v);  // N x 1
  }

  const FactorSet fs_view = n > 0 ? FactorSet(
      [&] { std::vector<Vec> r; const Tensor& t = f.means.value();
            for (int i = 0; i < n; ++i) r.emplace_back(t.v.begin() + size_t(i) * t.cols,
                                                       t.v.begin() + size_t(i + 1) * t.cols);
            return r; }(),
      [&] { std::vector<Vec> r; const Tensor& t = f.vars.value();
            for (int i = 0; i < n; ++i) r.emplace_back(t.v.begin() + size_t(i) * t.cols,
                                                       t.v.begin() + size_t(i + 1) * t.cols);
            return r; }()) : FactorSet{};
  const RobustPrior prior_vals(prior.a0.item(), prior.b0.item(), prior.c0.item());

  const double half_d = 0.5 * double(d);
  for (int sweep = 0; sweep < steps; ++sweep) {
    Node e_alpha = st.alpha_shape / st.alpha_rate;  // 1x1
    Node prec, weighted;
    if (n > 0) {
      Node e_beta = st.beta_shape / st.beta_rates;  // N x 1
      prec = nn::sum_over_rows(e_beta * inv_v) + e_alpha;
      weighted = nn::sum_over_rows(e_beta * m_inv_v);
    } else {
      prec = e_alpha * Node::leaf(Tensor(1, d, 1.0));
      weighted = Node::leaf(Tensor(1, d, 0.0));
    }
    st.z.var = nn::clamp_min(1.0 / prec, ef::kVarFloor);
    st.z.mean = st.z.var * weighted;

    st.alpha_shape = prior.a0 + half_d;
    Node e_zz = nn::sum_all(nn::square(st.z.mean)) + nn::sum_all(st.z.var);
    st.alpha_rate = prior.b0 + 0.5 * e_zz;

    st.beta_shape = prior.c0 + half_d;
    if (n > 0) {
      Node cross = nn::sum_over_cols(st.z.mean * m_inv_v);                      // N x 1
      Node second = nn::sum_over_cols((nn::square(st.z.mean) + st.z.var) * inv_v);  // N x 1
      st.beta_rates = prior.c0 + 0.5 * (quad_m - 2.0 * cross + second);
    }

    if (record_trace)
      st.elbo_trace.push_back(evaluate_rba_elbo(state_from_nodes(st), fs_view, prior_vals));
  }
  return st;
}

Node kl_gaussian_g(const GaussianNodes& q, const GaussianNodes& p) {
  Node dm = q.mean - p.mean;
  return 0.5 * nn::sum_all((q.var + nn::square(dm)) / p.var - 1.0 +
                           nn::log(p.var) - nn::log(q.var));
}

Node gaussian_log_prob_g(const Node& z, const GaussianNodes& g) {
  const int d = g.mean.cols();
  Node r = z - g.mean;
  return -0.5 * nn::sum_all(nn::square(r) / g.var + nn::log(g.var)) -
         0.5 * double(d) * kLog2Pi;
}

Vec mean_pool(const std::vector<Vec>& encodings) {
  if (encodings.empty())
    throw std::invalid_argument("mean_pool: empty input has no defined pooled value");
  const size_t d = encodings[0].size();
  static thread_local std::vector<double> col;
  Vec out(d);
  for (size_t j = 0; j < d; ++j) {
    col.resize(encodings.size());
    for (size_t i = 0; i < encodings.size(); ++i) {
      if (encodings[i].size() != d) throw std::invalid_argument("mean_pool: ragged input");
      col[i] = encodings[i][j];
    }
    out[j] = nn::stable_sum(col.data(), int(col.size())) / double(encodings.size());
  }
  return out;
}

ef::DiagGaussian bayesian_aggregate(const FactorSet& f, const ef::DiagGaussian& prior) {
  if (f.count() > 0) check_dims(f.dim(), prior.dim(), "bayesian_aggregate");
  GaussianNodes post = bayesian_aggregate_g(factor_leaves(f), gaussian_leaves(prior));
  return ef::DiagGaussian(post.mean.value().v, post.var.value().v);
}

ef::GaussianMixture mixture_aggregate(const FactorSet& f, const ef::GaussianMixture& prior,
                                      Vec* log_ck_out) {
  if (f.count() > 0) check_dims(f.dim(), prior.dim(), "mixture_aggregate");
  MixturePriorNodes pn;
  pn.weights = prior.weights;
  for (auto& c : prior.components) pn.comps.push_back(gaussian_leaves(c));
  MixturePosteriorNodes post = mixture_aggregate_g(factor_leaves(f), pn);
  std::vector<ef::DiagGaussian> comps;
  for (auto& c : post.comps)
    comps.emplace_back(c.mean.value().v, c.var.value().v);
  if (log_ck_out) *log_ck_out = post.log_ck;
  // Guard the simplex against rounding before constructing the result.
  double s = 0.0;
  for (double w : post.weights) s += w;
  for (double& w : post.weights) w /= s;
  return ef::GaussianMixture(post.weights, std::move(comps));
}

RobustState robust_aggregate(const FactorSet& f, const RobustPrior& prior, int steps) {
  RobustPriorNodes pn{Node::scalar(prior.a0), Node::scalar(prior.b0), Node::scalar(prior.c0)};
  RobustNodes nodes = robust_aggregate_g(factor_leaves(f), pn, steps, /*record_trace=*/true);
  return state_from_nodes(nodes);
}

double evaluate_rba_elbo(const RobustState& state, const FactorSet& f,
                         const RobustPrior& prior) {
  const int d = state.z_post.dim();
  const int n = f.count();
  if (int(state.beta_posts.size()) != n)
    throw std::invalid_argument("evaluate_rba_elbo: beta count mismatch");

  const Vec& mu = state.z_post.mean;
  const Vec& s2 = state.z_post.var;
  const double e_alpha = gamma_expectation(state.alpha_post);
  const double e_log_alpha = ef::gamma_e_log(state.alpha_post);
  double e_zz = 0.0;
  for (int j = 0; j < d; ++j) e_zz += mu[size_t(j)] * mu[size_t(j)] + s2[size_t(j)];

  double bound = 0.0;
  // E[log prod_i N(z | m_i, beta_i^-1 V_i)]
  for (int i = 0; i < n; ++i) {
    const double e_beta = gamma_expectation(state.beta_posts[size_t(i)]);
    const double e_log_beta = ef::gamma_e_log(state.beta_posts[size_t(i)]);
    double log_det = 0.0, quad = 0.0;
    for (int j = 0; j < d; ++j) {
      double vij = f.vars[size_t(i)][size_t(j)];
      double r = mu[size_t(j)] - f.means[size_t(i)][size_t(j)];
      log_det += std::log(vij);
      quad += (r * r + s2[size_t(j)]) / vij;
    }
    bound += -0.5 * d * kLog2Pi - 0.5 * log_det + 0.5 * d * e_log_beta - 0.5 * e_beta * quad;
  }
  // E[log N(z | 0, alpha^-1 I)]
  bound += -0.5 * d * kLog2Pi + 0.5 * d * e_log_alpha - 0.5 * e_alpha * e_zz;
  // E[log G(alpha | a0, b0)]
  bound += prior.a0 * std::log(prior.b0) - std::lgamma(prior.a0) +
           (prior.a0 - 1.0) * e_log_alpha - prior.b0 * e_alpha;
  // E[log prod_i G(beta_i | c0, c0)]
  for (int i = 0; i < n; ++i) {
    bound += prior.c0 * std::log(prior.c0) - std::lgamma(prior.c0) +
             (prior.c0 - 1.0) * ef::gamma_e_log(state.beta_posts[size_t(i)]) -
             prior.c0 * gamma_expectation(state.beta_posts[size_t(i)]);
  }
  // Entropy of the mean-field state.
  bound += ef::gaussian_entropy(state.z_post);
  bound += ef::gamma_entropy(state.alpha_post);
  for (auto& b : state.beta_posts) bound += ef::gamma_entropy(b);
  return bound;
}

double aggregate_log_z(const FactorSet& f, const ef::DiagGaussian& prior) {
  if (f.count() == 0) return 0.0;
  check_dims(f.dim(), prior.dim(), "aggregate_log_z");
  FactorNodes fn = factor_leaves(f);
  GaussianNodes pn = gaussian_leaves(prior);
  GaussianNodes post = bayesian_aggregate_g(fn, pn);
  return component_log_evidence(fn, pn, post);
}

}  // namespace efagg::agg
