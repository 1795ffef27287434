#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace mgpf {

using Rng = std::mt19937_64;

// splitmix64 finalizer.
[[nodiscard]] std::uint64_t mix64(std::uint64_t x) noexcept;

// Deterministic child seed for a named sub-stream (timepoint, dataset, ...).
[[nodiscard]] std::uint64_t derive_seed(std::uint64_t base, std::string_view key) noexcept;
[[nodiscard]] std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) noexcept;

// 64-bit FNV-1a, used for config digests and stream keys.
[[nodiscard]] std::uint64_t fnv1a64(std::string_view bytes) noexcept;

[[nodiscard]] double draw_uniform(Rng& rng, double lo, double hi);
[[nodiscard]] double draw_normal(Rng& rng, double mean = 0.0, double sd = 1.0);
[[nodiscard]] double draw_beta(Rng& rng, double a, double b);

}  // namespace mgpf
