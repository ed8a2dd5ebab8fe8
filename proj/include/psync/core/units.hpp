#pragma once

#include <chrono>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace psync {

// Event times and electronic delays are integer picoseconds. Continuous model
// parameters (decay constants, rates) stay in floating point.
using Picos = std::chrono::duration<std::int64_t, std::pico>;
using Seconds = std::chrono::duration<double>;
using Nanos = std::chrono::duration<double, std::nano>;

constexpr double to_seconds(Picos p) { return static_cast<double>(p.count()) * 1e-12; }
constexpr double to_ns(Picos p) { return static_cast<double>(p.count()) * 1e-3; }

inline Picos ns_to_picos(double ns) {
  return Picos{static_cast<std::int64_t>(ns * 1e3 + (ns >= 0 ? 0.5 : -0.5))};
}

class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input file; carries the byte offset of the first bad record.
class FormatError : public std::runtime_error {
 public:
  FormatError(const std::string& what, std::uint64_t offset)
      : std::runtime_error(what + " (byte offset " + std::to_string(offset) + ")"), offset_(offset) {}
  std::uint64_t offset() const { return offset_; }

 private:
  std::uint64_t offset_;
};

// A broken internal invariant of the simulator (never a user error).
class LogicError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace psync
