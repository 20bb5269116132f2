#pragma once

#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "efagg/aggregation.hpp"
#include "efagg/ef.hpp"

namespace efagg::verify {

struct CheckResult {
  std::string name;
  double max_error = 0.0;
  double tolerance = 0.0;
  bool pass = false;
  std::string note;
};

enum class Profile { Default, Strict };

std::vector<std::string> check_names();
CheckResult run_check(const std::string& name, Profile profile = Profile::Default);
std::vector<CheckResult> run_all(Profile profile = Profile::Default);

void print_table(const std::vector<CheckResult>& results, std::ostream& os);
void write_csv(const std::vector<CheckResult>& results, const std::string& path);

// Quadrature comparators parameterized on the implementation under test, so
// a deliberately broken aggregate is detected (mutation check).
using AggregateFn =
    std::function<ef::DiagGaussian(const agg::FactorSet&, const ef::DiagGaussian&)>;
CheckResult check_ba_against_quadrature(int instances, double moment_tol,
                                        const AggregateFn& aggregate);

}  // namespace efagg::verify
