#include "fusedet/kernels.hpp"

#include <atomic>
#include <cstdlib>
#include <cstring>
#include <stdexcept>
#include <string>

namespace fusedet::kernels {

const char* backend_name(Backend b) {
    switch (b) {
        case Backend::scalar: return "scalar";
        case Backend::avx2: return "avx2";
        case Backend::neon: return "neon";
    }
    return "?";
}

bool available(Backend b) {
    switch (b) {
        case Backend::scalar:
            return true;
        case Backend::avx2:
#if defined(FUSEDET_HAVE_AVX2)
            return __builtin_cpu_supports("avx2");
#else
            return false;
#endif
        case Backend::neon:
#if defined(FUSEDET_HAVE_NEON)
            return true;
#else
            return false;
#endif
    }
    return false;
}

namespace {

Backend detect() {
    if (const char* env = std::getenv("FUSEDET_BACKEND")) {
        for (Backend b : {Backend::scalar, Backend::avx2, Backend::neon}) {
            if (std::strcmp(env, backend_name(b)) == 0 && available(b))
                return b;
        }
    }
    if (available(Backend::avx2)) return Backend::avx2;
    if (available(Backend::neon)) return Backend::neon;
    return Backend::scalar;
}

std::atomic<int> g_backend{-1};

}  // namespace

Backend active() {
    int b = g_backend.load(std::memory_order_relaxed);
    if (b < 0) {
        b = static_cast<int>(detect());
        g_backend.store(b, std::memory_order_relaxed);
    }
    return static_cast<Backend>(b);
}

void force(Backend b) {
    if (!available(b))
        throw std::invalid_argument(std::string("kernel backend not available: ") +
                                    backend_name(b));
    g_backend.store(static_cast<int>(b), std::memory_order_relaxed);
}

double dot(const double* a, const double* b, std::size_t n) {
    switch (active()) {
#if defined(FUSEDET_HAVE_AVX2)
        case Backend::avx2: return detail::dot_avx2(a, b, n);
#endif
#if defined(FUSEDET_HAVE_NEON)
        case Backend::neon: return detail::dot_neon(a, b, n);
#endif
        default: return detail::dot_scalar(a, b, n);
    }
}

double sum(const double* x, std::size_t n) {
    switch (active()) {
#if defined(FUSEDET_HAVE_AVX2)
        case Backend::avx2: return detail::sum_avx2(x, n);
#endif
#if defined(FUSEDET_HAVE_NEON)
        case Backend::neon: return detail::sum_neon(x, n);
#endif
        default: return detail::sum_scalar(x, n);
    }
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
    switch (active()) {
#if defined(FUSEDET_HAVE_AVX2)
        case Backend::avx2: detail::axpy_avx2(alpha, x, y, n); return;
#endif
#if defined(FUSEDET_HAVE_NEON)
        case Backend::neon: detail::axpy_neon(alpha, x, y, n); return;
#endif
        default: detail::axpy_scalar(alpha, x, y, n); return;
    }
}

}  // namespace fusedet::kernels
