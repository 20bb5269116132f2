#include "efagg/csv.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace efagg::csv {

std::string fmt(double x) {
  char buf[40];
  auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

std::string fmt(long x) { return std::to_string(x); }

int Table::col(const std::string& name) const {
  for (size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return int(i);
  return -1;
}

double Table::num(size_t row, int c) const {
  if (c < 0 || row >= rows.size() || size_t(c) >= rows[row].size())
    throw std::out_of_range("csv::Table::num: bad cell");
  return std::stod(rows[row][size_t(c)]);
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(line);
  while (std::getline(is, cur, ',')) out.push_back(cur);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

Table read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("read_csv: cannot open " + path);
  Table t;
  std::string line;
  if (!std::getline(in, line) || line.empty())
    throw std::runtime_error("read_csv: empty or headerless file " + path);
  t.header = split_fields(line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    t.rows.push_back(split_fields(line));
  }
  return t;
}

}  // namespace efagg::csv
