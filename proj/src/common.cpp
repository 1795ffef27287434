#include "mgpf/errors.hpp"
#include "mgpf/random.hpp"
#include "mgpf/types.hpp"

#include <string>

namespace mgpf {

double covariate_value(const Covariates& z, std::string_view name) {
    if (name == "rh") return z.rh;
    if (name == "temp") return z.temp;
    if (name == "weekend") return z.weekend;
    throw ValidationError("unknown covariate '" + std::string(name) + "' (expected rh, temp or weekend)");
}

bool is_known_covariate(std::string_view name) noexcept {
    return name == "rh" || name == "temp" || name == "weekend";
}

std::uint64_t mix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t fnv1a64(std::string_view bytes) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t derive_seed(std::uint64_t base, std::string_view key) noexcept {
    return mix64(base ^ mix64(fnv1a64(key)));
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) noexcept {
    return mix64(base ^ mix64(index + 0x632be59bd9b4e019ULL));
}

double draw_uniform(Rng& rng, double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
}

double draw_normal(Rng& rng, double mean, double sd) {
    return std::normal_distribution<double>(mean, sd)(rng);
}

double draw_beta(Rng& rng, double a, double b) {
    const double x = std::gamma_distribution<double>(a, 1.0)(rng);
    const double y = std::gamma_distribution<double>(b, 1.0)(rng);
    return x / (x + y);
}

}  // namespace mgpf
