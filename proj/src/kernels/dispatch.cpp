#include <atomic>
#include <stdexcept>

#include "psync/kernels/kernels.hpp"

namespace psync::kernels {

namespace {

bool cpu_has_avx2() {
#if defined(__x86_64__) && defined(PSYNC_HAVE_AVX2_TU)
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

std::atomic<Isa>& current() {
  static std::atomic<Isa> isa{cpu_has_avx2() ? Isa::avx2 : Isa::scalar};
  return isa;
}

}  // namespace

Isa active_isa() { return current().load(std::memory_order_relaxed); }

bool isa_available(Isa isa) { return isa == Isa::scalar || cpu_has_avx2(); }

void force_isa(Isa isa) {
  if (!isa_available(isa)) throw std::invalid_argument(std::string("ISA not available: ") + isa_name(isa));
  current().store(isa, std::memory_order_relaxed);
}

const char* isa_name(Isa isa) { return isa == Isa::avx2 ? "avx2" : "scalar"; }

void decay_curve(std::span<const double> t, double eta0, double inv_sigma, double inv_gamma, std::span<double> out) {
  if (active_isa() == Isa::avx2) return avx2::decay_curve(t, eta0, inv_sigma, inv_gamma, out);
  scalar::decay_curve(t, eta0, inv_sigma, inv_gamma, out);
}

OverlapSums overlap_sums(std::span<const double> a, std::span<const double> b) {
  if (active_isa() == Isa::avx2) return avx2::overlap_sums(a, b);
  return scalar::overlap_sums(a, b);
}

void accumulate_offsets(std::int64_t anchor, std::span<const std::int64_t> times, std::int64_t t_min,
                        std::int64_t width, std::span<std::uint64_t> counts) {
  if (active_isa() == Isa::avx2) return avx2::accumulate_offsets(anchor, times, t_min, width, counts);
  scalar::accumulate_offsets(anchor, times, t_min, width, counts);
}

}  // namespace psync::kernels
