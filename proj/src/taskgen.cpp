#include "efagg/taskgen.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "efagg/csv.hpp"

namespace efagg::taskgen {

KernelSpec::KernelSpec(KernelFamily f, double s_in, double ell_in)
    : family(f), s(s_in), ell(ell_in) {
  if (family == KernelFamily::Rbf) {
    if (!(s >= 0.1 && s <= 1.0))
      throw std::invalid_argument("KernelSpec: RBF output scale s must lie in [0.1, 1.0]");
    if (!(ell >= 0.1 && ell <= 0.6))
      throw std::invalid_argument("KernelSpec: RBF lengthscale must lie in [0.1, 0.6]");
  }
}

double kernel_eval(const KernelSpec& spec, double x, double x2) {
  if (spec.family == KernelFamily::Rbf) {
    double r = x - x2;
    return spec.s * spec.s * std::exp(-r * r / (2.0 * spec.ell * spec.ell));
  }
  double d = 4.0 * std::abs(x - x2);
  double sq5d = std::sqrt(5.0) * d;
  return (1.0 + sq5d + 5.0 * d * d / 3.0) * std::exp(-sq5d);
}

namespace {

// Lower Cholesky in place; false on a non-positive pivot.
bool cholesky(std::vector<double>& a, int n) {
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j <= i; ++j) {
      double s = a[size_t(i) * n + j];
      for (int k = 0; k < j; ++k) s -= a[size_t(i) * n + k] * a[size_t(j) * n + k];
      if (i == j) {
        if (s <= 0.0) return false;
        a[size_t(i) * n + j] = std::sqrt(s);
      } else {
        a[size_t(i) * n + j] = s / a[size_t(j) * n + j];
      }
    }
    for (int j = i + 1; j < n; ++j) a[size_t(i) * n + j] = 0.0;
  }
  return true;
}

}  // namespace

Vec gp_joint_sample(const KernelSpec& spec, const Vec& xs, Rng& rng) {
  const int n = int(xs.size());
  std::vector<double> gram(size_t(n) * n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j <= i; ++j) {
      double k = kernel_eval(spec, xs[size_t(i)], xs[size_t(j)]);
      gram[size_t(i) * n + j] = k;
      gram[size_t(j) * n + i] = k;
    }

  std::vector<double> chol;
  bool ok = false;
  for (double jitter = 1e-6; jitter <= 1e-2 * (1.0 + 1e-12); jitter *= 10.0) {
    chol = gram;
    for (int i = 0; i < n; ++i) chol[size_t(i) * n + i] += jitter;
    if (cholesky(chol, n)) {
      ok = true;
      break;
    }
  }
  if (!ok)
    throw GpSamplingError("gp_joint_sample: kernel matrix not factorizable after jitter up to 1e-2");

  Vec eps(size_t(n));
  for (double& e : eps) e = rng.normal();
  Vec y(size_t(n), 0.0);
  for (int i = 0; i < n; ++i) {
    double s = 0.0;
    for (int j = 0; j <= i; ++j) s += chol[size_t(i) * n + j] * eps[size_t(j)];
    y[size_t(i)] = s;
  }
  return y;
}

Task sample_gp_task(const KernelSpec& spec, Rng& rng) {
  int nc = rng.uniform_int(3, 47);
  int nt = rng.uniform_int(3, 50 - nc);
  Vec xs(size_t(nc + nt));
  for (double& x : xs) x = rng.uniform(-2.0, 2.0);
  Vec ys = gp_joint_sample(spec, xs, rng);

  Task t;
  t.context_x.assign(xs.begin(), xs.begin() + nc);
  t.context_y.assign(ys.begin(), ys.begin() + nc);
  t.target_x.assign(xs.begin() + nc, xs.end());
  t.target_y.assign(ys.begin() + nc, ys.end());
  return t;
}

Task sample_task(const FamilyConfig& family, Rng& rng) {
  KernelSpec spec(family.kernel);
  if (family.kernel == KernelFamily::Rbf) {
    spec.s = rng.uniform(0.1, 1.0);
    spec.ell = rng.uniform(0.1, 0.6);
  }
  Task t = sample_gp_task(spec, rng);
  if (family.sign_flip && rng.uniform() < 0.5) {
    for (double& y : t.context_y) y = -y;
    for (double& y : t.target_y) y = -y;
  }
  return t;
}

Task corrupt_student_t(const Task& task, double gamma, Rng& rng) {
  if (gamma < 0) throw std::invalid_argument("corrupt_student_t: gamma must be >= 0");
  Task out = task;
  if (gamma == 0.0) return out;
  for (double& y : out.context_y) y += gamma * rng.student_t(2.1);
  return out;
}

std::vector<Task> make_batch(const FamilyConfig& family, int batch_size, const Rng& base) {
  if (batch_size < 1) throw std::invalid_argument("make_batch: batch_size must be >= 1");
  std::vector<Task> tasks;
  tasks.reserve(size_t(batch_size));
  for (int i = 0; i < batch_size; ++i) {
    Rng stream = base.substream(uint64_t(i));
    tasks.push_back(sample_task(family, stream));
  }
  return tasks;
}

void write_task_dump(const std::string& path, const std::vector<Task>& tasks) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_task_dump: cannot open " + path);
  out << "task_id,role,x,y\n";
  for (size_t t = 0; t < tasks.size(); ++t) {
    for (size_t i = 0; i < tasks[t].context_x.size(); ++i)
      out << t << ",context," << csv::fmt(tasks[t].context_x[i]) << ','
          << csv::fmt(tasks[t].context_y[i]) << '\n';
    for (size_t i = 0; i < tasks[t].target_x.size(); ++i)
      out << t << ",target," << csv::fmt(tasks[t].target_x[i]) << ','
          << csv::fmt(tasks[t].target_y[i]) << '\n';
  }
}

std::vector<Task> read_task_dump(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("read_task_dump: cannot open " + path);
  std::string line;
  if (!std::getline(in, line) || line != "task_id,role,x,y")
    throw std::runtime_error("read_task_dump: bad header in " + path);
  std::map<long, Task> by_id;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string id_s, role, x_s, y_s;
    if (!std::getline(ls, id_s, ',') || !std::getline(ls, role, ',') ||
        !std::getline(ls, x_s, ',') || !std::getline(ls, y_s, ','))
      throw std::runtime_error("read_task_dump: malformed row: " + line);
    Task& t = by_id[std::stol(id_s)];
    if (role == "context") {
      t.context_x.push_back(std::stod(x_s));
      t.context_y.push_back(std::stod(y_s));
    } else if (role == "target") {
      t.target_x.push_back(std::stod(x_s));
      t.target_y.push_back(std::stod(y_s));
    } else {
      throw std::runtime_error("read_task_dump: unknown role " + role);
    }
  }
  std::vector<Task> tasks;
  for (auto& [_, t] : by_id) tasks.push_back(std::move(t));
  return tasks;
}

}  // namespace efagg::taskgen
