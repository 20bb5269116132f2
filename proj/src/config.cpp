#include "efagg/config.hpp"

#include <fstream>
#include <json.hpp>

namespace efagg {

using json = nlohmann::json;

namespace {

json to_json(const RunConfig& c) {
  return json{{"variant", c.variant},
              {"task_family", c.task_family},
              {"latent_dim", c.latent_dim},
              {"mixture_k", c.mixture_k},
              {"cavi_steps", c.cavi_steps},
              {"n_samples", c.n_samples},
              {"train_steps", c.train_steps},
              {"batch_size", c.batch_size},
              {"seeds", c.seeds},
              {"eval_tasks", c.eval_tasks},
              {"gammas", c.gammas},
              {"out_dir", c.out_dir},
              {"enc_hidden", c.enc_hidden},
              {"enc_depth", c.enc_depth},
              {"np_enc_hidden", c.np_enc_hidden},
              {"np_enc_depth", c.np_enc_depth},
              {"dec_hidden", c.dec_hidden},
              {"dec_depth", c.dec_depth},
              {"lr", c.lr},
              {"lr_horizon", c.lr_horizon},
              {"metric_every", c.metric_every},
              {"val_tasks", c.val_tasks},
              {"record_wall_time", c.record_wall_time},
              {"learn_gamma_prior", c.learn_gamma_prior},
              {"parallel_seeds", c.parallel_seeds}};
}

template <class T>
void read_field(const json& j, const char* name, T& out) {
  auto it = j.find(name);
  if (it == j.end()) throw ConfigError(std::string("config: missing field '") + name + "'");
  try {
    out = it->get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: bad value for '") + name + "': " + e.what());
  }
}

RunConfig from_json(const json& j) {
  RunConfig c;
  read_field(j, "variant", c.variant);
  read_field(j, "task_family", c.task_family);
  read_field(j, "latent_dim", c.latent_dim);
  read_field(j, "mixture_k", c.mixture_k);
  read_field(j, "cavi_steps", c.cavi_steps);
  read_field(j, "n_samples", c.n_samples);
  read_field(j, "train_steps", c.train_steps);
  read_field(j, "batch_size", c.batch_size);
  read_field(j, "seeds", c.seeds);
  read_field(j, "eval_tasks", c.eval_tasks);
  read_field(j, "gammas", c.gammas);
  read_field(j, "out_dir", c.out_dir);
  read_field(j, "enc_hidden", c.enc_hidden);
  read_field(j, "enc_depth", c.enc_depth);
  read_field(j, "np_enc_hidden", c.np_enc_hidden);
  read_field(j, "np_enc_depth", c.np_enc_depth);
  read_field(j, "dec_hidden", c.dec_hidden);
  read_field(j, "dec_depth", c.dec_depth);
  read_field(j, "lr", c.lr);
  read_field(j, "lr_horizon", c.lr_horizon);
  read_field(j, "metric_every", c.metric_every);
  read_field(j, "val_tasks", c.val_tasks);
  read_field(j, "record_wall_time", c.record_wall_time);
  read_field(j, "learn_gamma_prior", c.learn_gamma_prior);
  read_field(j, "parallel_seeds", c.parallel_seeds);
  return c;
}

}  // namespace

std::string RunConfig::to_json_string() const { return to_json(*this).dump(2); }

RunConfig RunConfig::from_json_string(const std::string& s) {
  json j;
  try {
    j = json::parse(s);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: parse error: ") + e.what());
  }
  return from_json(j);
}

RunConfig RunConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path);
  std::string s((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return from_json_string(s);
}

void RunConfig::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw ConfigError("config: cannot write " + path);
  out << to_json_string() << '\n';
}

npm::ModelConfig RunConfig::model_config() const {
  npm::ModelConfig m;
  m.variant = npm::variant_from(variant);
  m.latent_dim = latent_dim;
  m.mixture_k = mixture_k;
  m.cavi_steps = cavi_steps;
  m.enc_hidden = enc_hidden;
  m.enc_depth = enc_depth;
  m.np_enc_hidden = np_enc_hidden;
  m.np_enc_depth = np_enc_depth;
  m.dec_hidden = dec_hidden;
  m.dec_depth = dec_depth;
  m.learn_gamma_prior = learn_gamma_prior;
  return m;
}

taskgen::FamilyConfig RunConfig::family_config() const {
  taskgen::FamilyConfig f;
  if (task_family == "rbf") {
    f.kernel = taskgen::KernelFamily::Rbf;
  } else if (task_family == "matern52") {
    f.kernel = taskgen::KernelFamily::Matern52;
  } else if (task_family == "rbf-signflip") {
    f.kernel = taskgen::KernelFamily::Rbf;
    f.sign_flip = true;
  } else {
    throw ConfigError("config: unknown task_family '" + task_family +
                      "' (expected rbf|matern52|rbf-signflip)");
  }
  return f;
}

npm::TrainConfig RunConfig::train_config() const {
  npm::TrainConfig t;
  t.steps = train_steps;
  t.batch = batch_size;
  t.n_samples = n_samples;
  t.lr0 = lr;
  t.lr_horizon = lr_horizon;
  t.metric_every = metric_every;
  t.val_tasks = val_tasks;
  t.record_wall_time = record_wall_time;
  return t;
}

RunConfig preset(const std::string& name) {
  RunConfig c;
  if (name == "paper-rbf") {
    c.task_family = "rbf";
    return c;
  }
  if (name == "paper-matern") {
    c.task_family = "matern52";
    c.cavi_steps = 10;
    return c;
  }
  // Desk scale: latent 16, small heads, 5000-step horizon.
  c.latent_dim = 16;
  c.train_steps = 5000;
  c.eval_tasks = 500;
  c.enc_hidden = 32;
  c.enc_depth = 2;
  c.np_enc_hidden = 64;
  c.np_enc_depth = 2;
  c.dec_hidden = 64;
  c.dec_depth = 2;
  c.metric_every = 500;
  c.val_tasks = 8;
  if (name == "desk-rbf") {
    c.task_family = "rbf";
    return c;
  }
  if (name == "desk-matern") {
    c.task_family = "matern52";
    c.cavi_steps = 10;
    return c;
  }
  throw ConfigError("unknown preset '" + name + "' (have desk-rbf, desk-matern, paper-rbf, paper-matern)");
}

std::vector<std::string> preset_names() {
  return {"desk-rbf", "desk-matern", "paper-rbf", "paper-matern"};
}

}  // namespace efagg
