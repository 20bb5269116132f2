#include "efagg/np_model.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <fstream>
#include <json.hpp>

#include "efagg/csv.hpp"

namespace efagg::npm {

using nn::Node;
using nn::Tensor;
using json = nlohmann::json;

namespace {
constexpr double kLog2Pi = 1.8378770664093454835606594728112;
constexpr double kFactorVarLower = 1e-4;
constexpr double kLatentStdLower = 1e-4;
constexpr double kPredStdLower = 0.1;

Tensor xy_matrix(const Vec& xs, const Vec& ys) {
  if (xs.size() != ys.size())
    throw std::invalid_argument("encoder input: x/y size mismatch");
  Tensor t(int(xs.size()), 2);
  for (size_t i = 0; i < xs.size(); ++i) {
    t.v[2 * i] = xs[i];
    t.v[2 * i + 1] = ys[i];
  }
  return t;
}

std::vector<int> mlp_widths(int in, int hidden, int depth, int out) {
  std::vector<int> w{in};
  for (int l = 0; l < depth; ++l) w.push_back(hidden);
  w.push_back(out);
  return w;
}

struct MeanStd {
  double mean = 0.0, sd = 0.0;
};

MeanStd mean_std(const std::vector<double>& xs) {
  MeanStd out;
  if (xs.empty()) return out;
  for (double x : xs) out.mean += x;
  out.mean /= double(xs.size());
  double s = 0.0;
  for (double x : xs) s += (x - out.mean) * (x - out.mean);
  out.sd = xs.size() > 1 ? std::sqrt(s / double(xs.size() - 1)) : 0.0;
  return out;
}

}  // namespace

std::string variant_name(Variant v) {
  switch (v) {
    case Variant::MeanPool: return "np";
    case Variant::BA: return "ba";
    case Variant::MixtureBA: return "mba";
    case Variant::RobustBA: return "rba";
  }
  return "?";
}

Variant variant_from(const std::string& name) {
  if (name == "np") return Variant::MeanPool;
  if (name == "ba") return Variant::BA;
  if (name == "mba") return Variant::MixtureBA;
  if (name == "rba") return Variant::RobustBA;
  throw std::invalid_argument("unknown variant '" + name + "' (expected np|ba|mba|rba)");
}

NpModel::NpModel(ModelConfig cfg, uint64_t init_seed)
    : cfg_(cfg), init_seed_(init_seed) {
  if (cfg_.latent_dim < 1) throw std::invalid_argument("ModelConfig: latent_dim must be >= 1");
  if (cfg_.variant == Variant::MixtureBA && cfg_.mixture_k < 1)
    throw std::invalid_argument("ModelConfig: mixture_k must be >= 1");
  if (cfg_.variant == Variant::RobustBA && cfg_.cavi_steps < 1)
    throw std::invalid_argument("ModelConfig: cavi_steps must be >= 1");

  Rng init(init_seed);
  const int d = cfg_.latent_dim;
  uint64_t layer = 0;
  auto next = [&] { return init.substream(stream::kParamInit, layer++); };

  if (cfg_.variant == Variant::MeanPool) {
    Rng r1 = next(), r2 = next();
    enc_r_ = nn::Mlp::create(params_, "enc_r",
                             mlp_widths(2, cfg_.np_enc_hidden, cfg_.np_enc_depth, d), r1);
    enc_z_ = nn::Mlp::create(params_, "enc_z", {d, cfg_.np_enc_hidden, 2 * d}, r2);
  } else {
    Rng r1 = next(), r2 = next();
    enc_mean_ = nn::Mlp::create(params_, "enc_mean",
                                mlp_widths(2, cfg_.enc_hidden, cfg_.enc_depth, d), r1);
    enc_var_ = nn::Mlp::create(params_, "enc_var",
                               mlp_widths(2, cfg_.enc_hidden, cfg_.enc_depth, d), r2);
  }

  Rng r3 = next(), r4 = next();
  dec_mean_ = nn::Mlp::create(params_, "dec_mean",
                              mlp_widths(1 + d, cfg_.dec_hidden, cfg_.dec_depth, 1), r3);
  dec_std_ = nn::Mlp::create(params_, "dec_std",
                             mlp_widths(1 + d, cfg_.dec_hidden, cfg_.dec_depth, 1), r4);

  if (cfg_.variant == Variant::MixtureBA) {
    Rng pr = next();
    for (int k = 0; k < cfg_.mixture_k; ++k) {
      Tensor mean(1, d);
      for (double& x : mean.v) x = 0.1 * pr.normal();
      prior_means_.push_back(params_.add("prior.mean" + std::to_string(k), std::move(mean)));
      prior_logvars_.push_back(
          params_.add("prior.logvar" + std::to_string(k), Tensor(1, d, 0.0)));
    }
  }
  if (cfg_.variant == Variant::RobustBA && cfg_.learn_gamma_prior) {
    log_a0_ = params_.add("prior.log_a0", Tensor::scalar(std::log(cfg_.gamma_a0_scale * d)));
    log_b0_ = params_.add("prior.log_b0", Tensor::scalar(std::log(cfg_.gamma_b0_scale * d)));
    log_c0_ = params_.add("prior.log_c0", Tensor::scalar(std::log(cfg_.gamma_c0_scale * d)));
  }
}

agg::FactorNodes NpModel::encode_factors(const Vec& xs, const Vec& ys) const {
  if (cfg_.variant == Variant::MeanPool)
    throw std::logic_error("encode_factors: mean-pool variant has no factor encoder");
  Node x = Node::leaf(xy_matrix(xs, ys));
  agg::FactorNodes f;
  f.means = enc_mean_.forward(x);
  f.vars = nn::bounded_sigmoid(enc_var_.forward(x), kFactorVarLower);
  return f;
}

agg::RobustPriorNodes NpModel::robust_prior_nodes() const {
  if (cfg_.learn_gamma_prior)
    return {nn::exp(log_a0_), nn::exp(log_b0_), nn::exp(log_c0_)};
  const double d = double(cfg_.latent_dim);
  return {Node::scalar(cfg_.gamma_a0_scale * d), Node::scalar(cfg_.gamma_b0_scale * d),
          Node::scalar(cfg_.gamma_c0_scale * d)};
}

Posterior NpModel::aggregate_factors(const agg::FactorNodes& f, int cavi_steps,
                                     bool record_trace) const {
  Posterior post;
  const int d = cfg_.latent_dim;
  if (cfg_.variant == Variant::BA) {
    agg::GaussianNodes prior{Node::leaf(Tensor(1, d, 0.0)), Node::leaf(Tensor(1, d, 1.0))};
    post.comps.push_back(agg::bayesian_aggregate_g(f, prior));
    post.weights = {1.0};
  } else if (cfg_.variant == Variant::MixtureBA) {
    agg::MixturePriorNodes prior;
    prior.weights.assign(size_t(cfg_.mixture_k), 1.0 / cfg_.mixture_k);
    for (int k = 0; k < cfg_.mixture_k; ++k)
      prior.comps.push_back({prior_means_[size_t(k)], nn::exp(prior_logvars_[size_t(k)])});
    auto mix = agg::mixture_aggregate_g(f, prior);
    post.comps = std::move(mix.comps);
    post.weights = std::move(mix.weights);
  } else if (cfg_.variant == Variant::RobustBA) {
    int steps = cavi_steps > 0 ? cavi_steps : cfg_.cavi_steps;
    auto rb = agg::robust_aggregate_g(f, robust_prior_nodes(), steps, record_trace);
    post.comps.push_back(rb.z);
    post.weights = {1.0};
    if (record_trace) post.rba_trace = std::move(rb.elbo_trace);
  } else {
    throw std::logic_error("aggregate_factors: mean-pool variant does not aggregate factors");
  }
  return post;
}

Posterior NpModel::meanpool_posterior(const Node& pooled) const {
  const int d = cfg_.latent_dim;
  Node out = enc_z_.forward(pooled);
  Node mean = nn::slice_cols(out, 0, d);
  Node sd = nn::bounded_sigmoid(nn::slice_cols(out, d, 2 * d), kLatentStdLower);
  Posterior post;
  post.comps.push_back({mean, nn::square(sd)});
  post.weights = {1.0};
  return post;
}

Posterior NpModel::posterior(const Vec& xs, const Vec& ys, int cavi_steps,
                             bool record_trace) const {
  if (cfg_.variant == Variant::MeanPool) {
    if (xs.empty())
      throw std::invalid_argument("posterior: mean-pool aggregation of an empty set");
    Node r = enc_r_.forward(Node::leaf(xy_matrix(xs, ys)));
    return meanpool_posterior(nn::mean_over_rows(r));
  }
  return aggregate_factors(encode_factors(xs, ys), cavi_steps, record_trace);
}

std::pair<Node, Node> NpModel::decode(const Node& z, const Vec& xs) const {
  if (z.cols() != cfg_.latent_dim || z.rows() != 1)
    throw std::invalid_argument("decode: z must be 1 x latent_dim");
  const int n = int(xs.size());
  Node x = Node::leaf(Tensor::column(xs));
  Node input = nn::concat_cols(x, nn::repeat_rows(z, n));
  Node mean = dec_mean_.forward(input);
  Node sd = nn::bounded_softplus(dec_std_.forward(input), kPredStdLower);
  return {mean, sd};
}

Node NpModel::sample_z(const Posterior& p, const Vec& eps, double u) const {
  size_t k = 0;
  if (p.comps.size() > 1) {
    double acc = 0.0;
    for (; k + 1 < p.comps.size(); ++k) {
      acc += p.weights[k];
      if (u < acc) break;
    }
  }
  return p.comps[k].mean + nn::sqrt(p.comps[k].var) * Node::row(eps);
}

Node NpModel::log_mixture_prob(const Posterior& p, const Node& z) const {
  std::vector<Node> terms;
  for (size_t k = 0; k < p.comps.size(); ++k) {
    double lw = p.weights[k] > 0 ? std::log(p.weights[k]) : -1e300;
    terms.push_back(Node::scalar(lw) + agg::gaussian_log_prob_g(z, p.comps[k]));
  }
  return nn::logsumexp(terms);
}

namespace {

// Stacks the decoder inputs of all latent samples into a single pass:
// rows are (x_j, z_s) for s-major order.
Node stacked_gaussian_loglik(const NpModel& model, const std::vector<Node>& zs,
                             const Vec& xs, const Vec& ys) {
  std::vector<Node> lls;
  const int nt = int(xs.size());
  Node y = Node::leaf(Tensor::column(ys));
  Node total;
  for (const Node& z : zs) {
    auto [mean, sd] = model.decode(z, xs);
    Node ll = nn::sum_all(Node::scalar(-0.5) * nn::square((y - mean) / sd) - nn::log(sd)) -
              0.5 * double(nt) * kLog2Pi;
    total = total ? total + ll : ll;
  }
  return total * (1.0 / double(zs.size()));
}

}  // namespace

Node NpModel::elbo(const taskgen::Task& task, int n_samples, Rng& noise) const {
  if (n_samples < 1) throw std::invalid_argument("elbo: n_samples must be >= 1");
  const int d = cfg_.latent_dim;

  Posterior post_c, post_ct;
  if (cfg_.variant == Variant::MeanPool) {
    Node rc = enc_r_.forward(Node::leaf(xy_matrix(task.context_x, task.context_y)));
    Node rt = enc_r_.forward(Node::leaf(xy_matrix(task.target_x, task.target_y)));
    post_c = meanpool_posterior(nn::mean_over_rows(rc));
    post_ct = meanpool_posterior(nn::mean_over_rows(nn::concat_rows(rc, rt)));
  } else {
    agg::FactorNodes fc = encode_factors(task.context_x, task.context_y);
    agg::FactorNodes ft = encode_factors(task.target_x, task.target_y);
    agg::FactorNodes fct{nn::concat_rows(fc.means, ft.means),
                         nn::concat_rows(fc.vars, ft.vars)};
    post_c = aggregate_factors(fc, -1, false);
    post_ct = aggregate_factors(fct, -1, false);
  }

  // Reparameterized draws from the joint-conditioned posterior.
  std::vector<Node> zs;
  std::vector<double> us;
  for (int s = 0; s < n_samples; ++s) {
    Vec eps(size_t(d));
    for (double& e : eps) e = noise.normal();
    us.push_back(noise.uniform());
    zs.push_back(sample_z(post_ct, eps, us.back()));
  }

  Node lik = stacked_gaussian_loglik(*this, zs, task.target_x, task.target_y);

  Node kl;
  if (post_c.comps.size() == 1 && post_ct.comps.size() == 1) {
    kl = agg::kl_gaussian_g(post_ct.comps[0], post_c.comps[0]);
  } else {
    for (const Node& z : zs) {
      Node term = log_mixture_prob(post_ct, z) - log_mixture_prob(post_c, z);
      kl = kl ? kl + term : term;
    }
    kl = kl * (1.0 / double(n_samples));
  }
  return lik - kl;
}

namespace {

struct PointwiseEval {
  double ll = 0.0;    // mean over points of log-mean-exp over samples
  double rmse = 0.0;  // against the sample-averaged predictive mean
};

PointwiseEval pointwise_metrics(const NpModel& model, const std::vector<Node>& zs,
                                const Vec& xs, const Vec& ys) {
  const int n = int(xs.size());
  const int s_count = int(zs.size());
  std::vector<std::vector<double>> lls(size_t(n), std::vector<double>(size_t(s_count)));
  std::vector<double> mean_pred(size_t(n), 0.0);
  for (int s = 0; s < s_count; ++s) {
    auto [mean, sd] = model.decode(zs[size_t(s)], xs);
    const Tensor& m = mean.value();
    const Tensor& sdv = sd.value();
    for (int j = 0; j < n; ++j) {
      double r = ys[size_t(j)] - m.v[size_t(j)];
      double sig = sdv.v[size_t(j)];
      lls[size_t(j)][size_t(s)] = -0.5 * (kLog2Pi + r * r / (sig * sig)) - std::log(sig);
      mean_pred[size_t(j)] += m.v[size_t(j)] / double(s_count);
    }
  }
  PointwiseEval out;
  double se = 0.0;
  for (int j = 0; j < n; ++j) {
    out.ll += ef::log_sum_exp(lls[size_t(j)]) - std::log(double(s_count));
    double r = mean_pred[size_t(j)] - ys[size_t(j)];
    se += r * r;
  }
  out.ll /= double(n);
  out.rmse = std::sqrt(se / double(n));
  return out;
}

}  // namespace

TaskEval NpModel::evaluate_task(const taskgen::Task& task, int n_samples, Rng& noise,
                                int cavi_steps) const {
  Posterior post = posterior(task.context_x, task.context_y, cavi_steps,
                             cfg_.variant == Variant::RobustBA);
  std::vector<Node> zs;
  for (int s = 0; s < n_samples; ++s) {
    Vec eps(size_t(cfg_.latent_dim));
    for (double& e : eps) e = noise.normal();
    double u = noise.uniform();
    zs.push_back(nn::detach(sample_z(post, eps, u)));
  }
  TaskEval ev;
  PointwiseEval t = pointwise_metrics(*this, zs, task.target_x, task.target_y);
  PointwiseEval c = pointwise_metrics(*this, zs, task.context_x, task.context_y);
  ev.pred_ll_target = t.ll;
  ev.rmse_target = t.rmse;
  ev.pred_ll_context = c.ll;
  ev.rmse_context = c.rmse;
  if (post.rba_trace) ev.rba_trace = *post.rba_trace;
  return ev;
}

long NpModel::encoder_param_count() const {
  if (cfg_.variant == Variant::MeanPool)
    return enc_r_.param_count() + enc_z_.param_count();
  return enc_mean_.param_count() + enc_var_.param_count();
}

long NpModel::decoder_param_count() const {
  return dec_mean_.param_count() + dec_std_.param_count();
}

namespace {

json config_to_json(const ModelConfig& c) {
  return json{{"variant", variant_name(c.variant)},
              {"latent_dim", c.latent_dim},
              {"mixture_k", c.mixture_k},
              {"cavi_steps", c.cavi_steps},
              {"enc_hidden", c.enc_hidden},
              {"enc_depth", c.enc_depth},
              {"np_enc_hidden", c.np_enc_hidden},
              {"np_enc_depth", c.np_enc_depth},
              {"dec_hidden", c.dec_hidden},
              {"dec_depth", c.dec_depth},
              {"learn_gamma_prior", c.learn_gamma_prior},
              {"gamma_a0_scale", c.gamma_a0_scale},
              {"gamma_b0_scale", c.gamma_b0_scale},
              {"gamma_c0_scale", c.gamma_c0_scale}};
}

ModelConfig config_from_json(const json& j) {
  ModelConfig c;
  c.variant = variant_from(j.at("variant").get<std::string>());
  c.latent_dim = j.at("latent_dim").get<int>();
  c.mixture_k = j.at("mixture_k").get<int>();
  c.cavi_steps = j.at("cavi_steps").get<int>();
  c.enc_hidden = j.at("enc_hidden").get<int>();
  c.enc_depth = j.at("enc_depth").get<int>();
  c.np_enc_hidden = j.at("np_enc_hidden").get<int>();
  c.np_enc_depth = j.at("np_enc_depth").get<int>();
  c.dec_hidden = j.at("dec_hidden").get<int>();
  c.dec_depth = j.at("dec_depth").get<int>();
  c.learn_gamma_prior = j.at("learn_gamma_prior").get<bool>();
  c.gamma_a0_scale = j.at("gamma_a0_scale").get<double>();
  c.gamma_b0_scale = j.at("gamma_b0_scale").get<double>();
  c.gamma_c0_scale = j.at("gamma_c0_scale").get<double>();
  return c;
}

}  // namespace

void NpModel::save_checkpoint(const std::string& path, long trained_steps,
                              const std::string& rng_state) const {
  json j;
  j["format"] = "efagg-checkpoint";
  j["version"] = 1;
  j["config"] = config_to_json(cfg_);
  j["init_seed"] = init_seed_;
  j["trained_steps"] = trained_steps;
  j["rng_state"] = rng_state;
  json params = json::array();
  for (const auto& [name, node] : params_.entries()) {
    params.push_back(json{{"name", name},
                          {"rows", node.value().rows},
                          {"cols", node.value().cols},
                          {"data", node.value().v}});
  }
  j["params"] = params;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_checkpoint: cannot open " + path);
  out << j.dump();
}

NpModel NpModel::load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path);
  json j = json::parse(in);
  if (j.value("format", "") != "efagg-checkpoint")
    throw std::runtime_error("load_checkpoint: " + path + " is not a checkpoint file");
  if (j.at("version").get<int>() != 1)
    throw std::runtime_error("load_checkpoint: unsupported version");
  NpModel model(config_from_json(j.at("config")), j.at("init_seed").get<uint64_t>());
  auto& entries = model.params_.entries();
  const json& params = j.at("params");
  if (params.size() != entries.size())
    throw std::runtime_error("load_checkpoint: parameter count mismatch");
  for (size_t i = 0; i < entries.size(); ++i) {
    const json& p = params[i];
    if (p.at("name").get<std::string>() != entries[i].first)
      throw std::runtime_error("load_checkpoint: parameter name mismatch at index " +
                               std::to_string(i));
    Tensor& t = entries[i].second.value_mut();
    if (p.at("rows").get<int>() != t.rows || p.at("cols").get<int>() != t.cols)
      throw std::runtime_error("load_checkpoint: shape mismatch for " + entries[i].first);
    t.v = p.at("data").get<std::vector<double>>();
  }
  return model;
}

struct MetricsWriter::Impl {
  std::ofstream out;
};

MetricsWriter::MetricsWriter(const std::string& path) : impl_(new Impl) {
  impl_->out.open(path);
  if (!impl_->out) {
    delete impl_;
    throw std::runtime_error("MetricsWriter: cannot open " + path);
  }
  impl_->out << "step,split,variant,seed,elbo,pred_ll_target,rmse_target,"
                "pred_ll_context,rmse_context,wall_ms\n";
}

MetricsWriter::~MetricsWriter() { delete impl_; }

void MetricsWriter::write(const MetricRow& r) {
  impl_->out << r.step << ',' << r.split << ',' << r.variant << ',' << r.seed << ','
             << csv::fmt(r.elbo) << ',' << csv::fmt(r.pred_ll_target) << ','
             << csv::fmt(r.rmse_target) << ',' << csv::fmt(r.pred_ll_context) << ','
             << csv::fmt(r.rmse_context) << ',' << r.wall_ms << '\n';
  impl_->out.flush();
}

TrainResult train(NpModel& model, const taskgen::FamilyConfig& family,
                  const TrainConfig& cfg, uint64_t seed, const MetricFn& on_metric) {
  if (cfg.steps < 1) throw std::invalid_argument("train: steps must be >= 1");
  Rng master(seed);
  auto val_tasks = cfg.val_tasks > 0
                       ? taskgen::make_batch(family, cfg.val_tasks,
                                             master.substream(stream::kValTasks))
                       : std::vector<taskgen::Task>{};

  nn::AdamConfig acfg;
  acfg.lr0 = cfg.lr0;
  acfg.horizon = cfg.lr_horizon > 0 ? cfg.lr_horizon : cfg.steps;
  nn::Adam opt(model.params(), acfg);

  TrainResult result;
  auto t_start = std::chrono::steady_clock::now();
  double elbo_accum = 0.0;
  long accum_count = 0;

  for (long step = 0; step < cfg.steps; ++step) {
    auto batch = taskgen::make_batch(family, cfg.batch,
                                     master.substream(stream::kTrainBatch, uint64_t(step)));
    Node total;
    for (size_t i = 0; i < batch.size(); ++i) {
      Rng noise = master.substream(stream::kTrainLatent, uint64_t(step), uint64_t(i));
      Node e = model.elbo(batch[i], cfg.n_samples, noise);
      total = total ? total + e : e;
    }
    Node batch_elbo = total * (1.0 / double(batch.size()));
    double elbo_val = batch_elbo.item();
    if (!std::isfinite(elbo_val)) {
      std::string dump;
      if (!cfg.nan_dump_path.empty()) {
        taskgen::write_task_dump(cfg.nan_dump_path, batch);
        dump = cfg.nan_dump_path;
      }
      throw NumericalAbort(step, dump);
    }
    nn::backward(Node::scalar(-1.0) * batch_elbo);
    opt.step(model.params());
    model.params().zero_grads();

    result.elbo_trace.push_back(elbo_val);
    elbo_accum += elbo_val;
    ++accum_count;

    if (on_metric && cfg.metric_every > 0 &&
        ((step + 1) % cfg.metric_every == 0 || step + 1 == cfg.steps)) {
      MetricRow row;
      row.step = step + 1;
      row.split = "train";
      row.variant = variant_name(model.config().variant);
      row.seed = seed;
      row.elbo = elbo_accum / double(accum_count);
      if (!val_tasks.empty()) {
        EvalSummary s = evaluate(model, val_tasks, cfg.n_samples,
                                 master.substream(stream::kValTasks, 1).key());
        row.pred_ll_target = s.pred_ll_target_mean;
        row.rmse_target = s.rmse_target_mean;
        row.pred_ll_context = s.pred_ll_context_mean;
        row.rmse_context = s.rmse_context_mean;
      }
      if (cfg.record_wall_time) {
        row.wall_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                          std::chrono::steady_clock::now() - t_start)
                          .count();
      }
      on_metric(row);
      elbo_accum = 0.0;
      accum_count = 0;
    }
  }
  result.steps_done = cfg.steps;
  result.rng_state = master.state_string();
  return result;
}

EvalSummary evaluate(const NpModel& model, const std::vector<taskgen::Task>& tasks,
                     int n_samples, uint64_t eval_key, int cavi_steps) {
  if (tasks.empty()) throw std::invalid_argument("evaluate: empty task set");
  Rng base(eval_key);
  std::vector<double> pll_t, rmse_t, pll_c, rmse_c, bounds;
  for (size_t i = 0; i < tasks.size(); ++i) {
    Rng noise = base.substream(stream::kEvalLatent, uint64_t(i));
    TaskEval ev = model.evaluate_task(tasks[i], n_samples, noise, cavi_steps);
    pll_t.push_back(ev.pred_ll_target);
    rmse_t.push_back(ev.rmse_target);
    pll_c.push_back(ev.pred_ll_context);
    rmse_c.push_back(ev.rmse_context);
    if (!ev.rba_trace.empty()) bounds.push_back(ev.rba_trace.back());
  }
  EvalSummary s;
  s.n_tasks = int(tasks.size());
  auto fill = [](const std::vector<double>& xs, double& m, double& sd) {
    MeanStd ms = mean_std(xs);
    m = ms.mean;
    sd = ms.sd;
  };
  fill(pll_t, s.pred_ll_target_mean, s.pred_ll_target_std);
  fill(rmse_t, s.rmse_target_mean, s.rmse_target_std);
  fill(pll_c, s.pred_ll_context_mean, s.pred_ll_context_std);
  fill(rmse_c, s.rmse_context_mean, s.rmse_context_std);
  if (!bounds.empty()) {
    fill(bounds, s.bound_mean, s.bound_std);
    s.has_bound = true;
  }
  s.per_task_pred_ll_target = std::move(pll_t);
  return s;
}

std::vector<taskgen::Task> make_eval_tasks(const taskgen::FamilyConfig& family, int n,
                                           uint64_t key) {
  Rng base(key);
  std::vector<taskgen::Task> tasks;
  tasks.reserve(size_t(n));
  for (int i = 0; i < n; ++i) {
    Rng stream = base.substream(stream::kEvalTasks, uint64_t(i));
    tasks.push_back(taskgen::sample_task(family, stream));
  }
  return tasks;
}

std::vector<taskgen::Task> corrupt_tasks(const std::vector<taskgen::Task>& tasks,
                                         double gamma, uint64_t key) {
  Rng base(key);
  std::vector<taskgen::Task> out;
  out.reserve(tasks.size());
  for (size_t i = 0; i < tasks.size(); ++i) {
    Rng stream = base.substream(stream::kCorrupt, uint64_t(i),
                                std::bit_cast<uint64_t>(gamma));
    out.push_back(taskgen::corrupt_student_t(tasks[i], gamma, stream));
  }
  return out;
}

}  // namespace efagg::npm
