#pragma once

// Data-parallel inner loops shared by the model, fitting and analysis code.
// Every kernel has a scalar reference implementation and an AVX2 variant; the
// variant is chosen once at startup from the CPU feature bits and can be
// pinned by tests to compare the two paths.

#include <cstdint>
#include <span>

namespace psync::kernels {

enum class Isa : std::uint8_t { scalar, avx2 };

Isa active_isa();
bool isa_available(Isa isa);
// Pins the dispatch target (tests only). Throws if the ISA is unavailable.
void force_isa(Isa isa);
const char* isa_name(Isa isa);

struct OverlapSums {
  double sqrt_product = 0.0;  // sum sqrt(a_i * b_i)
  double sum_a = 0.0;
  double sum_b = 0.0;
};

// eta0 * exp(-0.5 t^2 inv_sigma^2 - t inv_gamma) for every t.
void decay_curve(std::span<const double> t, double eta0, double inv_sigma, double inv_gamma, std::span<double> out);

OverlapSums overlap_sums(std::span<const double> a, std::span<const double> b);

// Adds one count per element of `times` to bin floor((time - anchor - t_min) / width).
// Elements outside [anchor + t_min, anchor + t_min + width * counts.size()) are ignored.
void accumulate_offsets(std::int64_t anchor, std::span<const std::int64_t> times, std::int64_t t_min,
                        std::int64_t width, std::span<std::uint64_t> counts);

namespace scalar {
void decay_curve(std::span<const double> t, double eta0, double inv_sigma, double inv_gamma, std::span<double> out);
OverlapSums overlap_sums(std::span<const double> a, std::span<const double> b);
void accumulate_offsets(std::int64_t anchor, std::span<const std::int64_t> times, std::int64_t t_min,
                        std::int64_t width, std::span<std::uint64_t> counts);
}  // namespace scalar

namespace avx2 {
void decay_curve(std::span<const double> t, double eta0, double inv_sigma, double inv_gamma, std::span<double> out);
OverlapSums overlap_sums(std::span<const double> a, std::span<const double> b);
void accumulate_offsets(std::int64_t anchor, std::span<const std::int64_t> times, std::int64_t t_min,
                        std::int64_t width, std::span<std::uint64_t> counts);
}  // namespace avx2

}  // namespace psync::kernels
