#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "efagg/np_model.hpp"
#include "efagg/taskgen.hpp"

namespace efagg {

// Experiment configuration. Field defaults are the paper-scale settings;
// the desk-* presets shrink the model and horizon for laptop-speed runs.
struct RunConfig {
  std::string variant = "ba";        // np | ba | mba | rba
  std::string task_family = "rbf";   // rbf | matern52 | rbf-signflip
  int latent_dim = 128;
  int mixture_k = 2;
  int cavi_steps = 5;
  int n_samples = 5;                 // latent MC samples (mixture runs use 10)
  long train_steps = 100000;
  int batch_size = 16;
  std::vector<uint64_t> seeds = {0};
  int eval_tasks = 5000;
  std::vector<double> gammas;        // context-corruption sweep; empty = clean
  std::string out_dir = "runs";

  int enc_hidden = 64;
  int enc_depth = 4;
  int np_enc_hidden = 128;
  int np_enc_depth = 4;
  int dec_hidden = 128;
  int dec_depth = 3;

  double lr = 5e-4;
  long lr_horizon = 0;               // 0 -> train_steps
  int metric_every = 1000;
  int val_tasks = 16;
  bool record_wall_time = false;     // off by default: keeps metrics CSV reproducible
  bool learn_gamma_prior = false;
  int parallel_seeds = 1;

  std::string to_json_string() const;
  static RunConfig from_json_string(const std::string& s);
  static RunConfig load(const std::string& path);
  void save(const std::string& path) const;

  npm::ModelConfig model_config() const;
  taskgen::FamilyConfig family_config() const;
  npm::TrainConfig train_config() const;

  bool operator==(const RunConfig&) const = default;
};

// desk-rbf, desk-matern, paper-rbf, paper-matern.
RunConfig preset(const std::string& name);
std::vector<std::string> preset_names();

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace efagg
