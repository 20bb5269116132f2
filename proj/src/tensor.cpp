#include "efagg/tensor.hpp"

#include <algorithm>

namespace efagg::nn {

double stable_sum(const double* x, int n, int stride) {
  if (n == 0) return 0.0;
  if (n == 1) return x[0];
  if (n == 2) return x[0] + x[stride];
  static thread_local std::vector<double> buf;
  buf.resize(size_t(n));
  for (int i = 0; i < n; ++i) buf[size_t(i)] = x[size_t(i) * stride];
  std::sort(buf.begin(), buf.end());
  double s = 0.0;
  for (double b : buf) s += b;
  return s;
}

}  // namespace efagg::nn
