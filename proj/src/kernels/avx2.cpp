// AVX2 + FMA variants. This translation unit is compiled with -mavx2 -mfma and
// is only entered after the dispatcher has checked the CPU feature bits.

#include "psync/kernels/kernels.hpp"

#if defined(__x86_64__) && defined(__AVX2__) && defined(__FMA__)

#include <immintrin.h>

#include <cmath>

namespace psync::kernels::avx2 {

namespace {

// exp(x) for x in [-708, 0]: round x / ln2 to n, reduce with a two-part ln2,
// evaluate a degree-12 Taylor polynomial on |r| <= ln2 / 2 and scale by 2^n.
// Agrees with std::exp to a few ulp over that range.
inline __m256d exp_nonpositive(__m256d x) {
  const __m256d lo = _mm256_set1_pd(-708.0);
  x = _mm256_max_pd(x, lo);
  const __m256d log2e = _mm256_set1_pd(1.4426950408889634074);
  const __m256d ln2_hi = _mm256_set1_pd(6.93147180369123816490e-01);
  const __m256d ln2_lo = _mm256_set1_pd(1.90821492927058770002e-10);
  const __m256d n = _mm256_round_pd(_mm256_mul_pd(x, log2e), _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
  __m256d r = _mm256_fnmadd_pd(n, ln2_hi, x);
  r = _mm256_fnmadd_pd(n, ln2_lo, r);

  static constexpr double c[] = {1.0 / 479001600.0, 1.0 / 39916800.0, 1.0 / 3628800.0, 1.0 / 362880.0,
                                 1.0 / 40320.0,     1.0 / 5040.0,     1.0 / 720.0,     1.0 / 120.0,
                                 1.0 / 24.0,        1.0 / 6.0,        0.5,             1.0,
                                 1.0};
  __m256d p = _mm256_set1_pd(c[0]);
  for (int i = 1; i < 13; ++i) p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(c[i]));

  // 2^n via the exponent field; n in [-1022, 0] after the clamp.
  const __m128i n32 = _mm256_cvtpd_epi32(n);
  __m256i n64 = _mm256_cvtepi32_epi64(n32);
  n64 = _mm256_add_epi64(n64, _mm256_set1_epi64x(1023));
  const __m256d scale = _mm256_castsi256_pd(_mm256_slli_epi64(n64, 52));
  return _mm256_mul_pd(p, scale);
}

}  // namespace

void decay_curve(std::span<const double> t, double eta0, double inv_sigma, double inv_gamma, std::span<double> out) {
  const std::size_t n = t.size();
  const double a = 0.5 * inv_sigma * inv_sigma;
  const __m256d va = _mm256_set1_pd(a);
  const __m256d vg = _mm256_set1_pd(inv_gamma);
  const __m256d ve = _mm256_set1_pd(eta0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d x = _mm256_loadu_pd(t.data() + i);
    // -(a x^2) - x g, same association as the scalar reference
    const __m256d ax2 = _mm256_mul_pd(_mm256_mul_pd(va, x), x);
    const __m256d e = _mm256_sub_pd(_mm256_sub_pd(_mm256_setzero_pd(), ax2), _mm256_mul_pd(x, vg));
    _mm256_storeu_pd(out.data() + i, _mm256_mul_pd(ve, exp_nonpositive(e)));
  }
  for (; i < n; ++i) out[i] = eta0 * std::exp(-(a * t[i] * t[i]) - t[i] * inv_gamma);
}

OverlapSums overlap_sums(std::span<const double> a, std::span<const double> b) {
  const std::size_t n = a.size();
  __m256d sp = _mm256_setzero_pd();
  __m256d sa = _mm256_setzero_pd();
  __m256d sb = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d va = _mm256_loadu_pd(a.data() + i);
    const __m256d vb = _mm256_loadu_pd(b.data() + i);
    sp = _mm256_add_pd(sp, _mm256_sqrt_pd(_mm256_mul_pd(va, vb)));
    sa = _mm256_add_pd(sa, va);
    sb = _mm256_add_pd(sb, vb);
  }
  alignas(32) double lanes[3][4];
  _mm256_store_pd(lanes[0], sp);
  _mm256_store_pd(lanes[1], sa);
  _mm256_store_pd(lanes[2], sb);
  OverlapSums s;
  for (int k = 0; k < 4; ++k) {
    s.sqrt_product += lanes[0][k];
    s.sum_a += lanes[1][k];
    s.sum_b += lanes[2][k];
  }
  for (; i < n; ++i) {
    s.sqrt_product += std::sqrt(a[i] * b[i]);
    s.sum_a += a[i];
    s.sum_b += b[i];
  }
  return s;
}

void accumulate_offsets(std::int64_t anchor, std::span<const std::int64_t> times, std::int64_t t_min,
                        std::int64_t width, std::span<std::uint64_t> counts) {
  const std::int64_t lo = anchor + t_min;
  const std::int64_t span = width * static_cast<std::int64_t>(counts.size());
  const std::size_t n = times.size();
  const __m256i vlo = _mm256_set1_epi64x(lo);
  const __m256i vspan = _mm256_set1_epi64x(span);
  const __m256i zero_m1 = _mm256_set1_epi64x(-1);
  const __m256d vw = _mm256_set1_pd(static_cast<double>(width));
  std::size_t i = 0;
  alignas(32) std::int64_t idx[4];
  for (; i + 4 <= n; i += 4) {
    const __m256i d = _mm256_sub_epi64(_mm256_loadu_si256(reinterpret_cast<const __m256i*>(times.data() + i)), vlo);
    // in range: d > -1 and span > d
    const __m256i ok = _mm256_and_si256(_mm256_cmpgt_epi64(d, zero_m1), _mm256_cmpgt_epi64(vspan, d));
    const int mask = _mm256_movemask_pd(_mm256_castsi256_pd(ok));
    if (mask == 0) continue;
    // Offsets are far below 2^52, so the int64 -> double conversion and the
    // correctly rounded division give the exact floor.
    alignas(32) std::int64_t dv[4];
    _mm256_store_si256(reinterpret_cast<__m256i*>(dv), d);
    const __m256d dd = _mm256_set_pd(static_cast<double>(dv[3]), static_cast<double>(dv[2]),
                                     static_cast<double>(dv[1]), static_cast<double>(dv[0]));
    const __m256d q = _mm256_floor_pd(_mm256_div_pd(dd, vw));
    const __m128i q32 = _mm256_cvttpd_epi32(q);
    _mm256_store_si256(reinterpret_cast<__m256i*>(idx), _mm256_cvtepi32_epi64(q32));
    for (int k = 0; k < 4; ++k)
      if (mask & (1 << k)) ++counts[static_cast<std::size_t>(idx[k])];
  }
  for (; i < n; ++i) {
    const std::int64_t d = times[i] - lo;
    if (d < 0 || d >= span) continue;
    ++counts[static_cast<std::size_t>(d / width)];
  }
}

}  // namespace psync::kernels::avx2

#else

#include <stdexcept>

namespace psync::kernels::avx2 {

void decay_curve(std::span<const double>, double, double, double, std::span<double>) {
  throw std::logic_error("AVX2 kernels not compiled for this target");
}
OverlapSums overlap_sums(std::span<const double>, std::span<const double>) {
  throw std::logic_error("AVX2 kernels not compiled for this target");
}
void accumulate_offsets(std::int64_t, std::span<const std::int64_t>, std::int64_t, std::int64_t,
                        std::span<std::uint64_t>) {
  throw std::logic_error("AVX2 kernels not compiled for this target");
}

}  // namespace psync::kernels::avx2

#endif
