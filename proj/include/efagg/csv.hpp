#pragma once

#include <map>
#include <string>
#include <vector>

namespace efagg::csv {

// Shortest round-trip decimal representation; identical doubles always
// produce identical bytes, which the reproducibility contract relies on.
std::string fmt(double x);
std::string fmt(long x);

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int col(const std::string& name) const;  // -1 if absent
  double num(size_t row, int col) const;
};

Table read_csv(const std::string& path);
std::vector<std::string> split_fields(const std::string& line);

}  // namespace efagg::csv
