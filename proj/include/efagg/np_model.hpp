#pragma once

#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "efagg/aggregation.hpp"
#include "efagg/nn.hpp"
#include "efagg/rng.hpp"
#include "efagg/taskgen.hpp"

namespace efagg::npm {

using ef::Vec;

enum class Variant { MeanPool, BA, MixtureBA, RobustBA };

std::string variant_name(Variant v);
Variant variant_from(const std::string& name);

struct ModelConfig {
  Variant variant = Variant::BA;
  int latent_dim = 128;
  int mixture_k = 2;    // MixtureBA only
  int cavi_steps = 5;   // RobustBA only
  int enc_hidden = 64;  // factor heads of the BA-family encoders
  int enc_depth = 4;
  int np_enc_hidden = 128;  // mean-pool encoder
  int np_enc_depth = 4;
  int dec_hidden = 128;
  int dec_depth = 3;
  bool learn_gamma_prior = false;
  double gamma_a0_scale = 1e-6;  // a0 = scale * latent_dim
  double gamma_b0_scale = 1e-6;
  double gamma_c0_scale = 1e-2;
};

// Posterior over the latent: K weighted diagonal Gaussians (K = 1 except for
// the mixture variant). Weights are plain values; gradients do not propagate
// through them.
struct Posterior {
  std::vector<agg::GaussianNodes> comps;
  Vec weights;
  std::optional<std::vector<double>> rba_trace;  // evidence bound per CAVI sweep
};

struct TaskEval {
  double pred_ll_target = 0.0;
  double rmse_target = 0.0;
  double pred_ll_context = 0.0;
  double rmse_context = 0.0;
  std::vector<double> rba_trace;
};

class NpModel {
 public:
  NpModel(ModelConfig cfg, uint64_t init_seed);

  const ModelConfig& config() const { return cfg_; }
  uint64_t init_seed() const { return init_seed_; }
  nn::ParamStore& params() { return params_; }
  const nn::ParamStore& params() const { return params_; }

  // Per-point factor moments for the BA-family encoders; factor variances go
  // through a lower-bounded sigmoid so they stay in (1e-4, 1).
  agg::FactorNodes encode_factors(const Vec& xs, const Vec& ys) const;

  // Latent posterior conditioned on a point set. cavi_steps < 0 keeps the
  // configured step count (robust variant only).
  Posterior posterior(const Vec& xs, const Vec& ys, int cavi_steps = -1,
                      bool record_trace = false) const;

  // Predictive mean and std (through a softplus lower-bounded at 0.1) at the
  // given inputs for one latent sample z (1 x D).
  std::pair<nn::Node, nn::Node> decode(const nn::Node& z, const Vec& xs) const;

  // Monte-Carlo conditional ELBO of one task (graph node, scalar).
  nn::Node elbo(const taskgen::Task& task, int n_samples, Rng& noise) const;

  // Posterior-predictive metrics with the context-conditioned posterior.
  TaskEval evaluate_task(const taskgen::Task& task, int n_samples, Rng& noise,
                         int cavi_steps = -1) const;

  long encoder_param_count() const;
  long decoder_param_count() const;

  void save_checkpoint(const std::string& path, long trained_steps,
                       const std::string& rng_state) const;
  static NpModel load_checkpoint(const std::string& path);

  nn::Node sample_z(const Posterior& p, const Vec& eps, double u) const;
  nn::Node log_mixture_prob(const Posterior& p, const nn::Node& z) const;

 private:
  Posterior aggregate_factors(const agg::FactorNodes& f, int cavi_steps,
                              bool record_trace) const;
  Posterior meanpool_posterior(const nn::Node& pooled) const;
  agg::RobustPriorNodes robust_prior_nodes() const;

  ModelConfig cfg_;
  uint64_t init_seed_ = 0;
  nn::ParamStore params_;
  nn::Mlp enc_mean_, enc_var_;  // BA family
  nn::Mlp enc_r_, enc_z_;       // mean pool
  nn::Mlp dec_mean_, dec_std_;
  std::vector<nn::Node> prior_means_, prior_logvars_;  // mixture prior
  nn::Node log_a0_, log_b0_, log_c0_;                  // learnable gamma prior
};

struct NumericalAbort : std::runtime_error {
  NumericalAbort(long step_in, std::string dump)
      : std::runtime_error("non-finite loss at step " + std::to_string(step_in) +
                           (dump.empty() ? "" : "; offending batch dumped to " + dump)),
        step(step_in),
        dump_path(std::move(dump)) {}
  long step;
  std::string dump_path;
};

struct MetricRow {
  long step = 0;
  std::string split;
  std::string variant;
  uint64_t seed = 0;
  double elbo = 0.0;
  double pred_ll_target = 0.0;
  double rmse_target = 0.0;
  double pred_ll_context = 0.0;
  double rmse_context = 0.0;
  long wall_ms = 0;
};

// Append-only CSV stream, schema:
// step,split,variant,seed,elbo,pred_ll_target,rmse_target,pred_ll_context,rmse_context,wall_ms
class MetricsWriter {
 public:
  explicit MetricsWriter(const std::string& path);
  ~MetricsWriter();
  void write(const MetricRow& row);

 private:
  struct Impl;
  Impl* impl_;
};

struct TrainConfig {
  long steps = 100000;
  int batch = 16;
  int n_samples = 5;
  double lr0 = 5e-4;
  long lr_horizon = 0;  // 0 -> steps
  int metric_every = 1000;
  int val_tasks = 16;
  // Wall time is only recorded into metric rows when requested, keeping the
  // default metrics stream byte-reproducible across reruns.
  bool record_wall_time = false;
  std::string nan_dump_path;
};

struct TrainResult {
  std::vector<double> elbo_trace;  // batch-mean ELBO per step
  long steps_done = 0;
  std::string rng_state;
};

using MetricFn = std::function<void(const MetricRow&)>;

TrainResult train(NpModel& model, const taskgen::FamilyConfig& family,
                  const TrainConfig& cfg, uint64_t seed,
                  const MetricFn& on_metric = nullptr);

struct EvalSummary {
  int n_tasks = 0;
  double pred_ll_target_mean = 0, pred_ll_target_std = 0;
  double rmse_target_mean = 0, rmse_target_std = 0;
  double pred_ll_context_mean = 0, pred_ll_context_std = 0;
  double rmse_context_mean = 0, rmse_context_std = 0;
  double bound_mean = 0, bound_std = 0;  // robust variant: final CAVI bound
  bool has_bound = false;
  std::vector<double> per_task_pred_ll_target;
};

EvalSummary evaluate(const NpModel& model, const std::vector<taskgen::Task>& tasks,
                     int n_samples, uint64_t eval_key, int cavi_steps = -1);

std::vector<taskgen::Task> make_eval_tasks(const taskgen::FamilyConfig& family, int n,
                                           uint64_t key);
std::vector<taskgen::Task> corrupt_tasks(const std::vector<taskgen::Task>& tasks,
                                         double gamma, uint64_t key);

}  // namespace efagg::npm
