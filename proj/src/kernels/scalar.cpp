#include "attnbend/kernels.hpp"

#include <algorithm>

namespace attnbend::kernels {
namespace {

double dot_scalar(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

void axpy_scalar(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void scale_scalar(double alpha, double* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) x[i] *= alpha;
}

void lerp_scalar(const double* a, const double* b, double t, double* out, std::size_t n) {
  const double s = 1.0 - t;
  for (std::size_t i = 0; i < n; ++i) out[i] = s * a[i] + t * b[i];
}

double max_scalar(const double* x, std::size_t n) {
  double m = x[0];
  for (std::size_t i = 1; i < n; ++i) m = std::max(m, x[i]);
  return m;
}

double sum_scalar(const double* x, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += x[i];
  return acc;
}

}  // namespace

const KernelTable& scalar_table() {
  static const KernelTable table{"scalar",   dot_scalar, axpy_scalar, scale_scalar,
                                 lerp_scalar, max_scalar, sum_scalar};
  return table;
}

}  // namespace attnbend::kernels
