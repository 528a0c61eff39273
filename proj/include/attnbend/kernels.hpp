#pragma once

// Data-parallel inner loops used by the tensor and bend layers.
//
// Every kernel has a scalar reference implementation. Vector variants (AVX2+FMA
// on x86-64, NEON on AArch64) are chosen once at startup from the CPU's
// capabilities; ATTNBEND_KERNELS=scalar|avx2|neon forces a backend. Backends
// agree to within rounding (see tests/unit/test_kernels.cpp) but are not
// bit-identical to each other. Within one backend every kernel is
// deterministic.

#include <cstddef>
#include <string_view>
#include <vector>

namespace attnbend::kernels {

struct KernelTable {
  const char* name;
  // sum_i a[i] * b[i]
  double (*dot)(const double* a, const double* b, std::size_t n);
  // y[i] += alpha * x[i]
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  // x[i] *= alpha
  void (*scale)(double alpha, double* x, std::size_t n);
  // out[i] = (1 - t) * a[i] + t * b[i]
  void (*lerp)(const double* a, const double* b, double t, double* out, std::size_t n);
  double (*max)(const double* x, std::size_t n);
  double (*sum)(const double* x, std::size_t n);
};

const KernelTable& scalar_table();
// nullptr when the backend is not compiled in or the CPU lacks it.
const KernelTable* avx2_table();
const KernelTable* neon_table();

// Tables usable on this machine, scalar first.
std::vector<const KernelTable*> available_tables();

const KernelTable& active();

// Switch the process-wide backend. Returns false for an unknown or
// unsupported name. Not meant to be called while kernels are running.
bool select(std::string_view name);

inline double dot(const double* a, const double* b, std::size_t n) { return active().dot(a, b, n); }
inline void axpy(double alpha, const double* x, double* y, std::size_t n) { active().axpy(alpha, x, y, n); }
inline void scale(double alpha, double* x, std::size_t n) { active().scale(alpha, x, n); }
inline void lerp(const double* a, const double* b, double t, double* out, std::size_t n) {
  active().lerp(a, b, t, out, n);
}
inline double max(const double* x, std::size_t n) { return active().max(x, n); }
inline double sum(const double* x, std::size_t n) { return active().sum(x, n); }

}  // namespace attnbend::kernels
