#include "psync/sim/envelope.hpp"

#include <algorithm>
#include <cmath>

#include "psync/sim/types.hpp"

namespace psync::sim {

std::string to_string(Channel c) {
  switch (c) {
    case Channel::idler1: return "idler1";
    case Channel::idler2: return "idler2";
    case Channel::sig_a: return "sig_a";
    case Channel::sig_b: return "sig_b";
  }
  return "?";
}

Channel parse_channel(const std::string& s) {
  if (s == "idler1" || s == "0") return Channel::idler1;
  if (s == "idler2" || s == "1") return Channel::idler2;
  if (s == "sig_a" || s == "2") return Channel::sig_a;
  if (s == "sig_b" || s == "3") return Channel::sig_b;
  throw ValidationError("unknown channel '" + s + "'");
}

std::string to_string(LogKind k) {
  switch (k) {
    case LogKind::ddg2_trigger: return "ddg2_trigger";
    case LogKind::ddg1_trigger: return "ddg1_trigger";
    case LogKind::pc_store: return "pc_store";
    case LogKind::pc_retrieve: return "pc_retrieve";
  }
  return "?";
}

std::vector<std::int64_t> TagRecord::times(Channel c) const {
  std::vector<std::int64_t> out;
  for (const auto& t : tags)
    if (t.channel == c) out.push_back(t.time);
  return out;
}

std::mt19937_64 make_stream(std::uint64_t seed, Stream s) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(s), 0x70737963u};
  return std::mt19937_64(seq);
}

namespace {
constexpr double kFwhmPerSigma = 2.3548200450309493;  // 2 sqrt(2 ln 2)
constexpr double kLn2 = 0.69314718055994531;
}  // namespace

Envelope::Envelope(EnvelopeShape shape, Picos fwhm) : shape_(shape), fwhm_(static_cast<double>(fwhm.count())) {
  if (!(fwhm_ > 0.0)) throw ValidationError("envelope FWHM must be > 0");
  if (shape_ == EnvelopeShape::gaussian) {
    scale_ = fwhm_ / kFwhmPerSigma;
    max_offset_ = static_cast<std::int64_t>(std::ceil(10.0 * scale_));
  } else {
    scale_ = fwhm_ / (2.0 * kLn2);
    max_offset_ = static_cast<std::int64_t>(std::ceil(25.0 * scale_));
  }
}

double Envelope::pdf(double t) const {
  if (shape_ == EnvelopeShape::gaussian)
    return std::exp(-0.5 * (t / scale_) * (t / scale_)) / (scale_ * std::sqrt(2.0 * M_PI));
  return std::exp(-std::abs(t) / scale_) / (2.0 * scale_);
}

std::int64_t Envelope::sample(std::mt19937_64& rng) const {
  double x;
  if (shape_ == EnvelopeShape::gaussian) {
    x = std::normal_distribution<double>(0.0, scale_)(rng);
  } else {
    const double e = std::exponential_distribution<double>(1.0 / scale_)(rng);
    x = std::uniform_int_distribution<int>(0, 1)(rng) ? e : -e;
  }
  const double lim = static_cast<double>(max_offset_);
  x = std::clamp(x, -lim, lim);
  return static_cast<std::int64_t>(std::llround(x));
}

double mode_overlap_direct(const Envelope& a, const Envelope& b, double d) {
  // Trapezoid on a grid fine compared to both widths.
  const double lo = std::min(-static_cast<double>(a.max_offset()), d - static_cast<double>(b.max_offset()));
  const double hi = std::max(static_cast<double>(a.max_offset()), d + static_cast<double>(b.max_offset()));
  const double h = std::min(a.fwhm_ps(), b.fwhm_ps()) / 400.0;
  const auto n = static_cast<std::int64_t>(std::ceil((hi - lo) / h));
  double s = 0.0;
  for (std::int64_t i = 0; i <= n; ++i) {
    const double t = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n);
    const double w = (i == 0 || i == n) ? 0.5 : 1.0;
    s += w * std::sqrt(a.pdf(t) * b.pdf(t - d));
  }
  s *= (hi - lo) / static_cast<double>(n);
  return s * s;
}

ModeOverlap::ModeOverlap(const Envelope& a, const Envelope& b, std::int64_t range, std::int64_t step) : step_(step) {
  if (step <= 0 || range < 0) throw ValidationError("ModeOverlap: bad table geometry");
  const std::int64_t n = range / step + 2;
  table_.resize(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i)
    table_[static_cast<std::size_t>(i)] = mode_overlap_direct(a, b, static_cast<double>(i * step));
}

double ModeOverlap::operator()(std::int64_t d) const {
  // Both supported shapes are symmetric, so M(-d) = M(d).
  const std::int64_t ad = d < 0 ? -d : d;
  const std::int64_t i = ad / step_;
  if (i + 1 >= static_cast<std::int64_t>(table_.size())) return table_.back();
  const double f = static_cast<double>(ad - i * step_) / static_cast<double>(step_);
  return table_[static_cast<std::size_t>(i)] * (1.0 - f) + table_[static_cast<std::size_t>(i + 1)] * f;
}

}  // namespace psync::sim
