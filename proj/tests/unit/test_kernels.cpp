#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <string>
#include <random>
#include <vector>

#include "psync/kernels/kernels.hpp"

using namespace psync::kernels;

namespace {

struct IsaGuard {
  Isa saved = active_isa();
  ~IsaGuard() { force_isa(saved); }
};

std::vector<double> random_doubles(std::size_t n, double lo, double hi, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

}  // namespace

TEST_CASE("scalar kernels against direct loops") {
  const auto t = random_doubles(131, 0.0, 300.0, 1);
  std::vector<double> out(t.size());
  scalar::decay_curve(t, 0.26, 1.0 / 98.0, 1.0 / 343.0, out);
  for (std::size_t i = 0; i < t.size(); ++i)
    CHECK(out[i] == doctest::Approx(0.26 * std::exp(-0.5 * t[i] * t[i] / (98.0 * 98.0) - t[i] / 343.0)));

  const auto a = random_doubles(77, 0.0, 10.0, 2), b = random_doubles(77, 0.0, 10.0, 3);
  double sp = 0, sa = 0, sb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sp += std::sqrt(a[i] * b[i]);
    sa += a[i];
    sb += b[i];
  }
  const auto s = scalar::overlap_sums(a, b);
  CHECK(s.sqrt_product == doctest::Approx(sp));
  CHECK(s.sum_a == doctest::Approx(sa));
  CHECK(s.sum_b == doctest::Approx(sb));

  std::vector<std::int64_t> times{-1000, -501, -500, -499, 0, 99, 100, 1499, 1500, 99999};
  std::vector<std::uint64_t> counts(20, 0);
  scalar::accumulate_offsets(0, times, -500, 100, counts);
  std::vector<std::uint64_t> expect(20, 0);
  for (auto x : times) {
    const std::int64_t k = x + 500;
    if (k >= 0 && k < 2000) ++expect[static_cast<std::size_t>(k / 100)];
  }
  CHECK(counts == expect);
}

TEST_CASE("dispatch can be pinned") {
  IsaGuard guard;
  force_isa(Isa::scalar);
  CHECK(active_isa() == Isa::scalar);
  CHECK(std::string(isa_name(Isa::scalar)) == "scalar");
  if (!isa_available(Isa::avx2)) CHECK_THROWS(force_isa(Isa::avx2));
}

TEST_CASE("AVX2 kernels are equivalent to the scalar reference") {
  if (!isa_available(Isa::avx2)) {
    MESSAGE("AVX2 not available on this CPU; equivalence not exercised");
    return;
  }
  for (std::size_t n : {0u, 1u, 3u, 4u, 5u, 8u, 17u, 1000u, 4099u}) {
    CAPTURE(n);
    const auto t = random_doubles(n, 0.0, 500.0, 10 + n);
    std::vector<double> o1(n), o2(n);
    scalar::decay_curve(t, 0.262, 1.0 / 98.6, 1.0 / 343.5, o1);
    avx2::decay_curve(t, 0.262, 1.0 / 98.6, 1.0 / 343.5, o2);
    for (std::size_t i = 0; i < n; ++i) CHECK(o2[i] == doctest::Approx(o1[i]).epsilon(1e-13));

    // Pure limits: zero inverse constants.
    scalar::decay_curve(t, 0.3, 0.0, 1.0 / 50.0, o1);
    avx2::decay_curve(t, 0.3, 0.0, 1.0 / 50.0, o2);
    for (std::size_t i = 0; i < n; ++i) CHECK(o2[i] == doctest::Approx(o1[i]).epsilon(1e-13));

    const auto a = random_doubles(n, 0.0, 1e4, 20 + n), b = random_doubles(n, 0.0, 1e4, 30 + n);
    const auto s1 = scalar::overlap_sums(a, b), s2 = avx2::overlap_sums(a, b);
    CHECK(s2.sqrt_product == doctest::Approx(s1.sqrt_product).epsilon(1e-12));
    CHECK(s2.sum_a == doctest::Approx(s1.sum_a).epsilon(1e-12));
    CHECK(s2.sum_b == doctest::Approx(s1.sum_b).epsilon(1e-12));

    std::mt19937_64 rng(40 + n);
    std::uniform_int_distribution<std::int64_t> u(-30'000, 90'000);
    std::vector<std::int64_t> times(n);
    for (auto& x : times) x = 5'000'000 + u(rng);
    std::sort(times.begin(), times.end());
    std::vector<std::uint64_t> c1(1000, 0), c2(1000, 0);
    scalar::accumulate_offsets(5'000'000, times, -20'000, 100, c1);
    avx2::accumulate_offsets(5'000'000, times, -20'000, 100, c2);
    CHECK(c1 == c2);
  }
}

TEST_CASE("dispatched kernels follow the pinned ISA") {
  IsaGuard guard;
  const auto t = random_doubles(64, 0.0, 200.0, 99);
  std::vector<double> ref(64), got(64);
  scalar::decay_curve(t, 0.2, 0.01, 0.003, ref);
  force_isa(Isa::scalar);
  decay_curve(t, 0.2, 0.01, 0.003, got);
  CHECK(got == ref);
  if (isa_available(Isa::avx2)) {
    force_isa(Isa::avx2);
    decay_curve(t, 0.2, 0.01, 0.003, got);
    for (std::size_t i = 0; i < 64; ++i) CHECK(got[i] == doctest::Approx(ref[i]).epsilon(1e-13));
  }
}
