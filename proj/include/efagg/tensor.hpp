#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace efagg::nn {

// Dense row-major matrix of doubles. Vectors are 1xC rows or Rx1 columns.
// Zero-row tensors are valid (empty context sets flow through reductions).
struct Tensor {
  int rows = 0;
  int cols = 0;
  std::vector<double> v;

  Tensor() = default;
  Tensor(int r, int c, double fill = 0.0) : rows(r), cols(c), v(size_t(r) * c, fill) {
    if (r < 0 || c < 0) throw std::invalid_argument("Tensor: negative shape");
  }

  static Tensor scalar(double x) {
    Tensor t(1, 1);
    t.v[0] = x;
    return t;
  }
  static Tensor row(const std::vector<double>& x) {
    Tensor t(1, int(x.size()));
    t.v = x;
    return t;
  }
  static Tensor column(const std::vector<double>& x) {
    Tensor t(int(x.size()), 1);
    t.v = x;
    return t;
  }
  static Tensor from_rows(const std::vector<std::vector<double>>& rows_in) {
    if (rows_in.empty()) return Tensor(0, 0);
    Tensor t(int(rows_in.size()), int(rows_in[0].size()));
    for (size_t i = 0; i < rows_in.size(); ++i) {
      if (rows_in[i].size() != size_t(t.cols))
        throw std::invalid_argument("Tensor::from_rows: ragged input");
      for (int j = 0; j < t.cols; ++j) t.v[i * t.cols + j] = rows_in[i][j];
    }
    return t;
  }

  double& operator()(int r, int c) { return v[size_t(r) * cols + c]; }
  double operator()(int r, int c) const { return v[size_t(r) * cols + c]; }

  int size() const { return rows * cols; }
  bool same_shape(const Tensor& o) const { return rows == o.rows && cols == o.cols; }
  bool is_scalar() const { return rows == 1 && cols == 1; }

  std::string shape_str() const {
    return "[" + std::to_string(rows) + "x" + std::to_string(cols) + "]";
  }
};

// Order-canonical summation: addends are sorted ascending before a sequential
// sum, so any permutation of the inputs produces the bit-identical result.
// This is the summation policy behind permutation-invariant aggregation.
double stable_sum(const double* x, int n, int stride = 1);

}  // namespace efagg::nn
