#pragma once

#include <cstddef>

// Dense double-precision kernels for the detector's inner loops (feature
// dot products, gradient accumulation, weight updates). A scalar reference
// implementation defines the arithmetic, including the summation order; the
// vector backends (AVX2 on x86-64, NEON on aarch64) reproduce it bit for bit,
// so results do not depend on which backend the dispatcher picks.
//
// Reduction order contract, shared by every backend:
//   four lanes accumulate strided partial sums, the lanes combine as
//   (lane0 + lane2) + (lane1 + lane3), then tail elements are added one by
//   one. No fused multiply-add anywhere.
namespace fusedet::kernels {

enum class Backend { scalar, avx2, neon };

const char* backend_name(Backend b);
bool available(Backend b);

// Backend in use; resolved once on first call (env FUSEDET_BACKEND may name
// one of scalar/avx2/neon to override autodetection).
Backend active();

// Force a specific backend, e.g. in equivalence tests. Throws
// std::invalid_argument when the backend is not available on this machine.
void force(Backend b);

double dot(const double* a, const double* b, std::size_t n);
double sum(const double* x, std::size_t n);
// y[i] += alpha * x[i]
void axpy(double alpha, const double* x, double* y, std::size_t n);

namespace detail {

double dot_scalar(const double* a, const double* b, std::size_t n);
double sum_scalar(const double* x, std::size_t n);
void axpy_scalar(double alpha, const double* x, double* y, std::size_t n);

#if defined(FUSEDET_HAVE_AVX2)
double dot_avx2(const double* a, const double* b, std::size_t n);
double sum_avx2(const double* x, std::size_t n);
void axpy_avx2(double alpha, const double* x, double* y, std::size_t n);
#endif

#if defined(FUSEDET_HAVE_NEON)
double dot_neon(const double* a, const double* b, std::size_t n);
double sum_neon(const double* x, std::size_t n);
void axpy_neon(double alpha, const double* x, double* y, std::size_t n);
#endif

}  // namespace detail

}  // namespace fusedet::kernels
