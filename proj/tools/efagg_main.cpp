// efagg: train/evaluate/verify/plot for exponential-family context
// aggregation in neural processes.

#include <CLI11.hpp>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <thread>

#include "efagg/config.hpp"
#include "efagg/csv.hpp"
#include "efagg/np_model.hpp"
#include "efagg/svg_plot.hpp"
#include "efagg/verify.hpp"

namespace fs = std::filesystem;
using namespace efagg;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitVerifyFail = 1;
constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;

std::vector<uint64_t> parse_seed_list(const std::string& s) {
  std::vector<uint64_t> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(std::stoull(item));
  }
  if (out.empty()) throw ConfigError("empty seed list");
  return out;
}

std::vector<int> parse_steps_list(const std::string& s) {
  std::vector<int> out;
  auto dots = s.find("..");
  if (dots != std::string::npos) {
    int lo = std::stoi(s.substr(0, dots));
    int hi = std::stoi(s.substr(dots + 2));
    if (lo < 1 || hi < lo) throw ConfigError("bad step range '" + s + "'");
    for (int v = lo; v <= hi; ++v) out.push_back(v);
    return out;
  }
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(std::stoi(item));
  if (out.empty()) throw ConfigError("empty CAVI steps list");
  return out;
}

std::vector<double> parse_gamma_list(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(std::stod(item));
  return out;
}

struct CommonOpts {
  std::string config_path;
  std::string preset_name;
  std::string variant;
  int mixture_k = -1;
  std::string cavi_steps;
  std::string seeds;
  std::string out_dir;
  std::string corrupt_kind;
  std::string gammas;
};

RunConfig resolve_config(const CommonOpts& o) {
  RunConfig cfg;
  if (!o.preset_name.empty()) cfg = preset(o.preset_name);
  if (!o.config_path.empty()) cfg = RunConfig::load(o.config_path);
  if (!o.variant.empty()) cfg.variant = o.variant;
  if (o.mixture_k > 0) cfg.mixture_k = o.mixture_k;
  if (!o.cavi_steps.empty()) {
    auto steps = parse_steps_list(o.cavi_steps);
    if (steps.size() == 1) cfg.cavi_steps = steps[0];
  }
  if (!o.seeds.empty()) cfg.seeds = parse_seed_list(o.seeds);
  if (!o.out_dir.empty()) cfg.out_dir = o.out_dir;
  if (!o.corrupt_kind.empty()) {
    if (o.corrupt_kind != "student-t")
      throw ConfigError("unknown corruption '" + o.corrupt_kind + "' (have: student-t)");
    if (!o.gammas.empty()) cfg.gammas = parse_gamma_list(o.gammas);
  } else if (!o.gammas.empty()) {
    cfg.gammas = parse_gamma_list(o.gammas);
  }
  if (const char* env = std::getenv("EFAGG_SEED"); env && o.seeds.empty()) {
    cfg.seeds = {std::stoull(env)};
  }
  // Validate variant/family early so bad configs exit with code 2.
  npm::variant_from(cfg.variant);
  cfg.family_config();
  return cfg;
}

std::string checkpoint_path(const RunConfig& cfg, uint64_t seed) {
  return cfg.out_dir + "/checkpoint_seed" + std::to_string(seed) + ".json";
}

void train_one_seed(const RunConfig& cfg, uint64_t seed) {
  npm::NpModel model(cfg.model_config(), seed);
  npm::MetricsWriter writer(cfg.out_dir + "/metrics_seed" + std::to_string(seed) + ".csv");
  npm::TrainConfig tc = cfg.train_config();
  tc.nan_dump_path = cfg.out_dir + "/nan_batch_seed" + std::to_string(seed) + ".csv";
  npm::TrainResult res = npm::train(model, cfg.family_config(), tc, seed,
                                    [&](const npm::MetricRow& row) { writer.write(row); });
  model.save_checkpoint(checkpoint_path(cfg, seed), res.steps_done, res.rng_state);
}

int cmd_train(const CommonOpts& opts) {
  RunConfig cfg = resolve_config(opts);
  fs::create_directories(cfg.out_dir);
  cfg.save(cfg.out_dir + "/config.json");
  int n_par = std::max(1, cfg.parallel_seeds);
  for (size_t base = 0; base < cfg.seeds.size(); base += size_t(n_par)) {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(size_t(n_par));
    for (int t = 0; t < n_par && base + size_t(t) < cfg.seeds.size(); ++t) {
      uint64_t seed = cfg.seeds[base + size_t(t)];
      pool.emplace_back([&, seed, t] {
        try {
          train_one_seed(cfg, seed);
        } catch (...) {
          errors[size_t(t)] = std::current_exception();
        }
      });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }
  std::cout << "trained " << cfg.seeds.size() << " seed(s) into " << cfg.out_dir << "\n";
  return kExitOk;
}

void write_summary_header(std::ostream& out) {
  out << "variant,seed,gamma,cavi_steps,n_tasks,n_samples,"
         "pred_ll_target_mean,pred_ll_target_std,rmse_target_mean,rmse_target_std,"
         "pred_ll_context_mean,pred_ll_context_std,rmse_context_mean,rmse_context_std,"
         "rba_bound_mean,rba_bound_std\n";
}

void write_summary_row(std::ostream& out, const std::string& variant, uint64_t seed,
                       double gamma, int cavi_steps, int n_samples,
                       const npm::EvalSummary& s) {
  out << variant << ',' << seed << ',' << csv::fmt(gamma) << ',' << cavi_steps << ','
      << s.n_tasks << ',' << n_samples << ',' << csv::fmt(s.pred_ll_target_mean) << ','
      << csv::fmt(s.pred_ll_target_std) << ',' << csv::fmt(s.rmse_target_mean) << ','
      << csv::fmt(s.rmse_target_std) << ',' << csv::fmt(s.pred_ll_context_mean) << ','
      << csv::fmt(s.pred_ll_context_std) << ',' << csv::fmt(s.rmse_context_mean) << ','
      << csv::fmt(s.rmse_context_std) << ','
      << (s.has_bound ? csv::fmt(s.bound_mean) : std::string()) << ','
      << (s.has_bound ? csv::fmt(s.bound_std) : std::string()) << '\n';
}

int cmd_eval(const CommonOpts& opts, const std::string& checkpoint_arg) {
  RunConfig cfg = resolve_config(opts);
  fs::create_directories(cfg.out_dir);

  std::vector<int> step_grid;
  if (!opts.cavi_steps.empty()) step_grid = parse_steps_list(opts.cavi_steps);
  std::vector<double> gamma_grid = cfg.gammas;
  if (gamma_grid.empty()) gamma_grid = {0.0};

  auto tasks = npm::make_eval_tasks(cfg.family_config(), cfg.eval_tasks,
                                    cfg.seeds.front());
  std::ofstream summary(cfg.out_dir + "/summary.csv");
  write_summary_header(summary);

  for (uint64_t seed : cfg.seeds) {
    std::string path = checkpoint_arg.empty() ? checkpoint_path(cfg, seed) : checkpoint_arg;
    npm::NpModel model = npm::NpModel::load_checkpoint(path);
    if (npm::variant_name(model.config().variant) != cfg.variant)
      throw ConfigError("checkpoint " + path + " holds variant '" +
                        npm::variant_name(model.config().variant) +
                        "' but the config requests '" + cfg.variant + "'");
    std::vector<int> steps = step_grid;
    if (steps.empty()) steps = {model.config().cavi_steps};
    for (double gamma : gamma_grid) {
      auto eval_tasks =
          gamma > 0 ? npm::corrupt_tasks(tasks, gamma, cfg.seeds.front()) : tasks;
      for (int st : steps) {
        npm::EvalSummary s =
            npm::evaluate(model, eval_tasks, cfg.n_samples, cfg.seeds.front(), st);
        write_summary_row(summary, cfg.variant, seed, gamma, st, cfg.n_samples, s);
      }
    }
  }
  std::cout << "wrote " << cfg.out_dir << "/summary.csv\n";
  return kExitOk;
}

int cmd_verify(const std::string& profile_name, const std::string& csv_path,
               const std::string& only) {
  verify::Profile profile =
      profile_name == "strict" ? verify::Profile::Strict : verify::Profile::Default;
  std::vector<verify::CheckResult> results;
  if (!only.empty()) {
    results.push_back(verify::run_check(only, profile));
  } else {
    results = verify::run_all(profile);
  }
  verify::print_table(results, std::cout);
  if (!csv_path.empty()) verify::write_csv(results, csv_path);
  int failures = 0;
  for (auto& r : results)
    if (!r.pass) ++failures;
  std::cout << results.size() - size_t(failures) << "/" << results.size() << " checks passed\n";
  return failures == 0 ? kExitOk : kExitVerifyFail;
}

int cmd_plot(const std::vector<std::string>& files, const std::string& x_col,
             const std::string& y_col, const std::string& group_col,
             const std::string& out_path, const std::string& title) {
  std::vector<plot::Series> series;
  for (const auto& file : files) {
    csv::Table t = csv::read_csv(file);
    if (t.rows.empty()) throw std::runtime_error("plot: no data rows in " + file);
    int xc = t.col(x_col), yc = t.col(y_col);
    if (xc < 0 || yc < 0)
      throw std::runtime_error("plot: " + file + " lacks column '" +
                               (xc < 0 ? x_col : y_col) + "'");
    int gc = t.col(group_col);
    // group -> x -> accumulated y values (rows with equal x are averaged,
    // e.g. multiple seeds)
    std::map<std::string, std::map<double, std::pair<double, int>>> grouped;
    for (size_t r = 0; r < t.rows.size(); ++r) {
      std::string key = gc >= 0 ? t.rows[r][size_t(gc)] : std::string("series");
      if (files.size() > 1) key = fs::path(file).stem().string() + ":" + key;
      auto& cell = grouped[key][t.num(r, xc)];
      cell.first += t.num(r, yc);
      cell.second += 1;
    }
    for (auto& [label, pts] : grouped) {
      plot::Series s;
      s.label = label;
      for (auto& [x, acc] : pts) s.points.emplace_back(x, acc.first / acc.second);
      series.push_back(std::move(s));
    }
  }
  plot::PlotSpec spec;
  spec.title = title.empty() ? y_col + " vs " + x_col : title;
  spec.x_label = x_col;
  spec.y_label = y_col;
  plot::write_line_svg(out_path, spec, series);
  std::cout << "wrote " << out_path << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"structured context aggregation for neural processes"};
  app.require_subcommand(1);

  CommonOpts opts;
  std::string checkpoint_arg, profile_name = "default", verify_csv, verify_only;
  std::vector<std::string> plot_files;
  std::string x_col = "gamma", y_col = "pred_ll_target_mean", group_col = "variant";
  std::string plot_out = "plot.svg", plot_title;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", opts.config_path, "config JSON path");
    sub->add_option("--preset", opts.preset_name, "desk-rbf|desk-matern|paper-rbf|paper-matern");
    sub->add_option("--variant", opts.variant, "np|ba|mba|rba");
    sub->add_option("--k", opts.mixture_k, "mixture components");
    sub->add_option("--cavi-steps", opts.cavi_steps, "N, comma list, or lo..hi");
    sub->add_option("--seed", opts.seeds, "seed or comma list (default: EFAGG_SEED or 0)");
    sub->add_option("--out", opts.out_dir, "output directory");
    sub->add_option("--corrupt", opts.corrupt_kind, "corruption kind (student-t)");
    sub->add_option("--gammas", opts.gammas, "comma list of corruption magnitudes");
  };

  CLI::App* train = app.add_subcommand("train", "train one model per seed");
  add_common(train);
  CLI::App* eval = app.add_subcommand("eval", "evaluate checkpoints on a frozen task set");
  add_common(eval);
  eval->add_option("--checkpoint", checkpoint_arg, "explicit checkpoint path");
  CLI::App* verify_cmd = app.add_subcommand("verify", "run the oracle suite");
  verify_cmd->add_option("--profile", profile_name, "default|strict");
  verify_cmd->add_option("--csv", verify_csv, "write machine-readable results");
  verify_cmd->add_option("--only", verify_only, "run a single named check");
  CLI::App* plot_cmd = app.add_subcommand("plot", "render SVG curves from CSV");
  plot_cmd->add_option("files", plot_files, "input CSV files")->required();
  plot_cmd->add_option("--x", x_col, "x column");
  plot_cmd->add_option("--y", y_col, "y column");
  plot_cmd->add_option("--group", group_col, "legend grouping column");
  plot_cmd->add_option("--out", plot_out, "output SVG path");
  plot_cmd->add_option("--title", plot_title, "plot title");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (train->parsed()) return cmd_train(opts);
    if (eval->parsed()) return cmd_eval(opts, checkpoint_arg);
    if (verify_cmd->parsed()) return cmd_verify(profile_name, verify_csv, verify_only);
    if (plot_cmd->parsed())
      return cmd_plot(plot_files, x_col, y_col, group_col, plot_out, plot_title);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const npm::NumericalAbort& e) {
    std::cerr << "numerical abort: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  }
  return kExitOk;
}
