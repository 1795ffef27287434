#include "mgpf/simd/kernels.hpp"

#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string>

namespace mgpf::simd {

namespace detail {
#if !(defined(__x86_64__) || defined(_M_X64))
const KernelTable* avx2_table() noexcept { return nullptr; }
#endif
}  // namespace detail

namespace {

bool cpu_has_avx2() noexcept {
#if defined(__x86_64__) && (defined(__GNUC__) || defined(__clang__))
    return __builtin_cpu_supports("avx2");
#else
    return false;
#endif
}

Backend detect() noexcept {
    if (const char* env = std::getenv("MGPF_SIMD")) {
        const std::string v(env);
        if (v == "scalar") return Backend::Scalar;
        if (v == "avx2" && backend_available(Backend::Avx2)) return Backend::Avx2;
        if (v == "neon" && backend_available(Backend::Neon)) return Backend::Neon;
    }
    if (backend_available(Backend::Avx2)) return Backend::Avx2;
    if (backend_available(Backend::Neon)) return Backend::Neon;
    return Backend::Scalar;
}

std::atomic<Backend>& current() noexcept {
    static std::atomic<Backend> b{detect()};
    return b;
}

}  // namespace

bool backend_available(Backend b) noexcept {
    switch (b) {
        case Backend::Scalar: return true;
        case Backend::Avx2: return detail::avx2_table() != nullptr && cpu_has_avx2();
        case Backend::Neon: return detail::neon_table() != nullptr;
    }
    return false;
}

std::string_view backend_name(Backend b) noexcept {
    switch (b) {
        case Backend::Scalar: return "scalar";
        case Backend::Avx2: return "avx2";
        case Backend::Neon: return "neon";
    }
    return "unknown";
}

Backend active_backend() noexcept { return current().load(std::memory_order_relaxed); }

void set_backend(Backend b) {
    if (!backend_available(b)) {
        throw std::invalid_argument("SIMD backend not available: " + std::string(backend_name(b)));
    }
    current().store(b, std::memory_order_relaxed);
}

const KernelTable& kernels(Backend b) {
    switch (b) {
        case Backend::Scalar: return detail::scalar_table();
        case Backend::Avx2:
            if (backend_available(b)) return *detail::avx2_table();
            break;
        case Backend::Neon:
            if (backend_available(b)) return *detail::neon_table();
            break;
    }
    throw std::invalid_argument("SIMD backend not available: " + std::string(backend_name(b)));
}

const KernelTable& kernels() { return kernels(active_backend()); }

void distances_to(double px, double py, std::span<const double> xs, std::span<const double> ys,
                  std::span<double> out) {
    kernels().distances_to(px, py, xs.data(), ys.data(), out.size(), out.data());
}

void exp_decay(std::span<const double> d, double scale, double rate, std::span<double> out) {
    kernels().exp_decay(d.data(), d.size(), scale, rate, out.data());
}

void stencil_row(const StencilRow& row) { kernels().stencil_row(row); }

double abs_diff_sum(std::span<const double> v, double target) {
    return kernels().abs_diff_sum(v.data(), v.size(), target);
}

}  // namespace mgpf::simd
