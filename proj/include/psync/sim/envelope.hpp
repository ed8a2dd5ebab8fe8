#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "psync/core/params.hpp"

namespace psync::sim {

// Independent generator per subsystem so that enabling one part of the
// simulation never shifts the draws of another.
enum class Stream : std::uint32_t {
  source1 = 1,
  source2 = 2,
  background = 3,
  memory = 4,
  detector_idler = 5,
  detector_signal = 6,
  beamsplitter = 7,
  schedule = 8,
};

std::mt19937_64 make_stream(std::uint64_t seed, Stream s);

// Single-photon temporal intensity envelope, centered on zero.
class Envelope {
 public:
  Envelope(EnvelopeShape shape, Picos fwhm);

  double pdf(double t_ps) const;
  std::int64_t sample(std::mt19937_64& rng) const;  // rounded to ps, clamped to +-max_offset()
  std::int64_t max_offset() const { return max_offset_; }
  EnvelopeShape shape() const { return shape_; }
  double fwhm_ps() const { return fwhm_; }

 private:
  EnvelopeShape shape_;
  double fwhm_;
  double scale_;  // Gaussian sigma or exponential decay length
  std::int64_t max_offset_;
};

// M(d): squared amplitude overlap of two envelopes whose centers differ by d,
// tabulated up to `range` and linearly interpolated. M(0) = 1 for equal shapes.
class ModeOverlap {
 public:
  ModeOverlap(const Envelope& a, const Envelope& b, std::int64_t range_ps, std::int64_t step_ps = 5);
  double operator()(std::int64_t d_ps) const;

 private:
  std::int64_t step_;
  std::vector<double> table_;  // indexed by |d| / step
};

// Direct numerical evaluation of the same overlap (reference for tests).
double mode_overlap_direct(const Envelope& a, const Envelope& b, double d_ps);

}  // namespace psync::sim
