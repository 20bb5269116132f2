#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "efagg/rng.hpp"

namespace efagg::taskgen {

using Vec = std::vector<double>;

struct GpSamplingError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class KernelFamily { Rbf, Matern52 };

// Concrete kernel hyperparameters. Matern-5/2 has none; its distance is
// rescaled as d = 4|x - x'|. Family-level task sampling draws RBF
// hyperparameters per task from s ~ U[0.1, 1.0), ell ~ U[0.1, 0.6).
struct KernelSpec {
  KernelFamily family = KernelFamily::Rbf;
  double s = 1.0;
  double ell = 0.5;

  KernelSpec() = default;
  KernelSpec(KernelFamily f, double s_in = 1.0, double ell_in = 0.5);
};

double kernel_eval(const KernelSpec& spec, double x, double x2);

// One regression task: inputs in [-2, 2], N_c in [3, 47], N_t in [3, 50-N_c].
struct Task {
  Vec context_x, context_y;
  Vec target_x, target_y;

  int n_context() const { return int(context_x.size()); }
  int n_target() const { return int(target_x.size()); }
};

// Task distribution: a kernel family, optionally with the whole function's
// sign flipped per task with probability 1/2 (a bimodal family).
struct FamilyConfig {
  KernelFamily kernel = KernelFamily::Rbf;
  bool sign_flip = false;
};

// Joint GP draw at the given inputs; jitter ladder 1e-6 * 10^k up to 1e-2
// before Cholesky, reporting failure rather than clamping.
Vec gp_joint_sample(const KernelSpec& spec, const Vec& xs, Rng& rng);

Task sample_gp_task(const KernelSpec& spec, Rng& rng);
Task sample_task(const FamilyConfig& family, Rng& rng);

// Adds gamma * t(2.1) noise to context outputs only. gamma = 0 is the
// identity; negative gamma is rejected.
Task corrupt_student_t(const Task& task, double gamma, Rng& rng);

// Independent tasks from per-task substreams of `base`: task i is unchanged
// when batch_size grows, and the batch is reproducible from the base key.
std::vector<Task> make_batch(const FamilyConfig& family, int batch_size, const Rng& base);

// Columnar dump (task_id, role, x, y) used to freeze evaluation suites.
void write_task_dump(const std::string& path, const std::vector<Task>& tasks);
std::vector<Task> read_task_dump(const std::string& path);

}  // namespace efagg::taskgen
