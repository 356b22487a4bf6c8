#include "cdiff/kernels.hpp"

#include <atomic>
#include <cstdlib>
#include <cstring>

#include "cdiff/errors.hpp"

namespace cdiff::kernels {

#if defined(CDIFF_HAVE_AVX2_KERNELS)
const Ops& avx2_ops(); // defined in kernels_avx2.cpp
#endif

bool avx2_available() {
#if defined(CDIFF_HAVE_AVX2_KERNELS) && (defined(__x86_64__) || defined(_M_X64))
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}

namespace {

const Ops* select_initial() {
    if (const char* env = std::getenv("CDIFF_KERNELS")) {
        if (std::strcmp(env, "scalar") == 0) return &scalar_ops();
#if defined(CDIFF_HAVE_AVX2_KERNELS)
        if (std::strcmp(env, "avx2") == 0 && avx2_available()) return &avx2_ops();
#endif
    }
#if defined(CDIFF_HAVE_AVX2_KERNELS)
    if (avx2_available()) return &avx2_ops();
#endif
    return &scalar_ops();
}

std::atomic<const Ops*>& active_slot() {
    static std::atomic<const Ops*> slot{select_initial()};
    return slot;
}

} // namespace

const Ops& ops() { return *active_slot().load(std::memory_order_relaxed); }

Backend active_backend() {
    return &ops() == &scalar_ops() ? Backend::scalar : Backend::avx2;
}

void force_backend(Backend backend) {
    if (backend == Backend::scalar) {
        active_slot().store(&scalar_ops(), std::memory_order_relaxed);
        return;
    }
#if defined(CDIFF_HAVE_AVX2_KERNELS)
    if (avx2_available()) {
        active_slot().store(&avx2_ops(), std::memory_order_relaxed);
        return;
    }
#endif
    throw numeric_error("avx2 kernel backend requested but not available on this host");
}

} // namespace cdiff::kernels
