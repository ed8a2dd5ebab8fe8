#include "psync/core/config_io.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <limits>
#include <set>
#include <sstream>

namespace psync {

namespace {

enum class Kind { real, opt_real, picos, real_ns, count, text };

struct Entry {
  const char* key;
  Kind kind;
  std::function<std::string(const SystemConfig&)> get;
  std::function<void(SystemConfig&, std::string_view)> set;
};

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::string fmt_real(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  // Prefer the shortest representation that round-trips.
  for (int prec = 1; prec <= 17; ++prec) {
    char b2[64];
    std::snprintf(b2, sizeof b2, "%.*g", prec, v);
    if (std::strtod(b2, nullptr) == v) return b2;
  }
  return buf;
}

double parse_number(std::string_view s) {
  s = trim(s);
  if (s == "inf" || s == "+inf") return std::numeric_limits<double>::infinity();
  const std::string tmp(s);
  char* end = nullptr;
  const double v = std::strtod(tmp.c_str(), &end);
  if (tmp.empty() || end != tmp.c_str() + tmp.size() || std::isnan(v))
    throw ValidationError("not a number: '" + tmp + "'");
  return v;
}

// Multiplier to picoseconds for a unit token.
double unit_scale(std::string_view u) {
  if (u == "ps") return 1.0;
  if (u == "ns") return 1e3;
  if (u == "us") return 1e6;
  if (u == "ms") return 1e9;
  if (u == "s") return 1e12;
  throw ValidationError("unknown time unit '" + std::string(u) + "'");
}

// Value in the key's native unit (ps or ns) with an optional explicit unit.
double parse_time(std::string_view s, double native_scale) {
  s = trim(s);
  std::size_t i = s.size();
  while (i > 0 && std::isalpha(static_cast<unsigned char>(s[i - 1]))) --i;
  const std::string_view unit = trim(s.substr(i));
  const std::string_view num = trim(s.substr(0, i));
  if (unit == "inf") return std::numeric_limits<double>::infinity();
  const double v = parse_number(num);
  if (unit.empty()) return v;
  return v * unit_scale(unit) / native_scale;
}

Picos parse_picos(std::string_view s, double native_scale) {
  const double ps = parse_time(s, native_scale) * native_scale;
  if (!std::isfinite(ps) || std::abs(ps) > 9.0e18) throw ValidationError("time out of range");
  const double r = std::round(ps);
  if (std::abs(ps - r) > 1e-6 * std::max(1.0, std::abs(ps)))
    throw ValidationError("time is not a whole number of picoseconds: " + std::string(trim(s)));
  return Picos{static_cast<std::int64_t>(r)};
}

std::string fmt_picos(Picos p, double native_scale) {
  if (native_scale == 1.0) return std::to_string(p.count());
  // ns keys: exact decimal with up to three fractional digits
  const std::int64_t v = p.count();
  const std::int64_t whole = v / 1000;
  std::int64_t frac = std::abs(v % 1000);
  std::string out = (v < 0 && whole == 0 ? "-" : "") + std::to_string(whole);
  if (frac != 0) {
    char buf[8];
    std::snprintf(buf, sizeof buf, "%03lld", static_cast<long long>(frac));
    std::string f(buf);
    while (!f.empty() && f.back() == '0') f.pop_back();
    out += "." + f;
  }
  return out;
}

template <class F>
Entry real_entry(const char* key, F field) {
  return {key, Kind::real, [field](const SystemConfig& c) { return fmt_real(field(const_cast<SystemConfig&>(c))); },
          [field](SystemConfig& c, std::string_view v) { field(c) = parse_number(v); }};
}

template <class F>
Entry picos_entry(const char* key, double native_scale, F field) {
  return {key, Kind::picos,
          [field, native_scale](const SystemConfig& c) {
            return fmt_picos(field(const_cast<SystemConfig&>(c)), native_scale);
          },
          [field, native_scale](SystemConfig& c, std::string_view v) { field(c) = parse_picos(v, native_scale); }};
}

template <class F>
Entry real_ns_entry(const char* key, F field) {
  return {key, Kind::real_ns, [field](const SystemConfig& c) { return fmt_real(field(const_cast<SystemConfig&>(c))); },
          [field](SystemConfig& c, std::string_view v) { field(c) = parse_time(v, 1e3); }};
}

const std::vector<Entry>& table() {
  static const std::vector<Entry> t = [] {
    std::vector<Entry> e;
    e.push_back(real_entry("source.r1_cps", [](SystemConfig& c) -> double& { return c.source.r1_cps; }));
    e.push_back({"source.r2_cps", Kind::opt_real,
                 [](const SystemConfig& c) { return c.source.r2_cps ? fmt_real(*c.source.r2_cps) : "auto"; },
                 [](SystemConfig& c, std::string_view v) {
                   if (trim(v) == "auto")
                     c.source.r2_cps.reset();
                   else
                     c.source.r2_cps = parse_number(v);
                 }});
    e.push_back(real_entry("source.eta_h1", [](SystemConfig& c) -> double& { return c.source.eta_h1; }));
    e.push_back(real_entry("source.eta_h2", [](SystemConfig& c) -> double& { return c.source.eta_h2; }));
    e.push_back(real_entry("source.g2_source", [](SystemConfig& c) -> double& { return c.source.g2_source; }));
    e.push_back(real_entry("source.rho", [](SystemConfig& c) -> double& { return c.source.rho; }));
    e.push_back(picos_entry("source.pulse_fwhm_ps", 1.0, [](SystemConfig& c) -> Picos& { return c.source.pulse_fwhm; }));
    e.push_back({"source.envelope", Kind::text, [](const SystemConfig& c) { return to_string(c.source.envelope); },
                 [](SystemConfig& c, std::string_view v) { c.source.envelope = parse_envelope(std::string(trim(v))); }});

    e.push_back(real_entry("memory.eta0", [](SystemConfig& c) -> double& { return c.memory.decay.eta0; }));
    e.push_back(real_ns_entry("memory.tau_sigma_ns", [](SystemConfig& c) -> double& { return c.memory.decay.tau_sigma_ns; }));
    e.push_back(real_ns_entry("memory.tau_gamma_ns", [](SystemConfig& c) -> double& { return c.memory.decay.tau_gamma_ns; }));
    e.push_back(real_entry("memory.transmission", [](SystemConfig& c) -> double& { return c.memory.transmission; }));
    e.push_back(real_entry("memory.nu", [](SystemConfig& c) -> double& { return c.memory.nu; }));
    e.push_back(real_entry("memory.t_offres_factor", [](SystemConfig& c) -> double& { return c.memory.t_offres_factor; }));
    e.push_back(real_entry("memory.t_retrieval_factor",
                           [](SystemConfig& c) -> double& { return c.memory.t_retrieval_factor; }));
    e.push_back(picos_entry("memory.retrieved_fwhm_ps", 1.0, [](SystemConfig& c) -> Picos& { return c.memory.retrieved_fwhm; }));
    e.push_back({"memory.retrieved_envelope", Kind::text,
                 [](const SystemConfig& c) { return to_string(c.memory.retrieved_envelope); },
                 [](SystemConfig& c, std::string_view v) {
                   c.memory.retrieved_envelope = parse_envelope(std::string(trim(v)));
                 }});
    e.push_back(picos_entry("memory.accept_window_ps", 1.0, [](SystemConfig& c) -> Picos& { return c.memory.accept_window; }));

    e.push_back(picos_entry("electronics.t_star_ns", 1e3, [](SystemConfig& c) -> Picos& { return c.electronics.t_star; }));
    e.push_back(picos_entry("electronics.tau_d1_ns", 1e3, [](SystemConfig& c) -> Picos& { return c.electronics.tau_d1; }));
    e.push_back(picos_entry("electronics.tau_d2_ns", 1e3, [](SystemConfig& c) -> Picos& { return c.electronics.tau_d2; }));
    e.push_back(picos_entry("electronics.pc_min_spacing_ns", 1e3,
                            [](SystemConfig& c) -> Picos& { return c.electronics.pc_min_spacing; }));
    e.push_back(picos_entry("electronics.insertion_delay_ns", 1e3,
                            [](SystemConfig& c) -> Picos& { return c.electronics.insertion_delay; }));
    e.push_back(picos_entry("electronics.store_delay_ns", 1e3,
                            [](SystemConfig& c) -> Picos& { return c.electronics.store_delay; }));
    e.push_back(picos_entry("electronics.retrieval_delay_ns", 1e3,
                            [](SystemConfig& c) -> Picos& { return c.electronics.retrieval_delay; }));
    e.push_back(picos_entry("electronics.buffer_gate_ns", 1e3,
                            [](SystemConfig& c) -> Picos& { return c.electronics.buffer_gate; }));
    e.push_back(picos_entry("electronics.retrieval_trim_ps", 1.0,
                            [](SystemConfig& c) -> Picos& { return c.electronics.retrieval_trim; }));

    e.push_back(real_entry("detector.efficiency", [](SystemConfig& c) -> double& { return c.detector.efficiency; }));
    e.push_back({"detector.jitter_ps", Kind::real,
                 [](const SystemConfig& c) { return fmt_real(c.detector.jitter_sigma_ps); },
                 [](SystemConfig& c, std::string_view v) { c.detector.jitter_sigma_ps = parse_time(v, 1.0); }});
    e.push_back(picos_entry("detector.latency_ps", 1.0, [](SystemConfig& c) -> Picos& { return c.detector.latency; }));
    e.push_back(real_entry("detector.coupling_memory", [](SystemConfig& c) -> double& { return c.detector.coupling_memory; }));
    e.push_back(real_entry("detector.coupling_direct", [](SystemConfig& c) -> double& { return c.detector.coupling_direct; }));

    e.push_back(picos_entry("analysis.herald_window_ps", 1.0,
                            [](SystemConfig& c) -> Picos& { return c.analysis.herald_window; }));
    e.push_back(picos_entry("analysis.coincidence_window_ps", 1.0,
                            [](SystemConfig& c) -> Picos& { return c.analysis.coincidence_window; }));
    e.push_back(real_ns_entry("analysis.g2_reference_ns", [](SystemConfig& c) -> double& { return c.analysis.g2_reference_ns; }));
    e.push_back(picos_entry("analysis.bin_width_ps", 1.0, [](SystemConfig& c) -> Picos& { return c.analysis.bin_width; }));
    e.push_back(picos_entry("analysis.hist_min_ps", 1.0, [](SystemConfig& c) -> Picos& { return c.analysis.hist_min; }));
    e.push_back(picos_entry("analysis.hist_max_ps", 1.0, [](SystemConfig& c) -> Picos& { return c.analysis.hist_max; }));
    e.push_back(picos_entry("analysis.fiber_delay_ns", 1e3, [](SystemConfig& c) -> Picos& { return c.analysis.fiber_delay; }));

    e.push_back(real_entry("hom.mu", [](SystemConfig& c) -> double& { return c.hom.mu; }));
    e.push_back(picos_entry("hom.coherence_window_ps", 1.0, [](SystemConfig& c) -> Picos& { return c.hom.coherence_window; }));

    e.push_back({"sim.mode", Kind::text, [](const SystemConfig& c) { return to_string(c.sim.mode); },
                 [](SystemConfig& c, std::string_view v) { c.sim.mode = parse_mode(std::string(trim(v))); }});
    e.push_back({"sim.routing", Kind::text, [](const SystemConfig& c) { return to_string(c.sim.routing); },
                 [](SystemConfig& c, std::string_view v) { c.sim.routing = parse_routing(std::string(trim(v))); }});
    e.push_back(picos_entry("sim.storage_time_ns", 1e3, [](SystemConfig& c) -> Picos& { return c.sim.storage_time; }));
    e.push_back(picos_entry("sim.storage_time_max_ns", 1e3,
                            [](SystemConfig& c) -> Picos& { return c.sim.storage_time_max; }));
    e.push_back({"sim.event_cap", Kind::count, [](const SystemConfig& c) { return std::to_string(c.sim.event_cap); },
                 [](SystemConfig& c, std::string_view v) {
                   v = trim(v);
                   std::uint64_t x = 0;
                   auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
                   if (ec != std::errc() || p != v.data() + v.size())
                     throw ValidationError("not an unsigned integer: '" + std::string(v) + "'");
                   c.sim.event_cap = x;
                 }});
    e.push_back(picos_entry("sim.signal_delay_ns", 1e3, [](SystemConfig& c) -> Picos& { return c.sim.signal_delay; }));
    e.push_back(picos_entry("sim.memory_delay_ns", 1e3, [](SystemConfig& c) -> Picos& { return c.sim.memory_delay; }));
    e.push_back(picos_entry("sim.path1_delay_ps", 1.0, [](SystemConfig& c) -> Picos& { return c.sim.path1_delay; }));
    return e;
  }();
  return t;
}

const Entry& find_entry(std::string_view key) {
  for (const auto& e : table())
    if (key == e.key) return e;
  throw ValidationError("unknown config key '" + std::string(key) + "'");
}

}  // namespace

void apply_setting(SystemConfig& config, std::string_view key, std::string_view value) {
  const Entry& e = find_entry(trim(key));
  try {
    e.set(config, value);
  } catch (const ValidationError& err) {
    throw ValidationError(std::string(e.key) + ": " + err.what());
  }
}

SystemConfig parse_config(std::string_view text, const std::string& origin) {
  SystemConfig cfg;
  std::set<std::string, std::less<>> seen;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    const std::string_view raw = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    std::string_view line = raw;
    if (const auto h = line.find('#'); h != std::string_view::npos) line = line.substr(0, h);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = origin + ":" + std::to_string(line_no) + ": ";
    if (eq == std::string_view::npos) throw ValidationError(where + "expected 'key = value'");
    const std::string key(trim(line.substr(0, eq)));
    if (!seen.insert(key).second) throw ValidationError(where + "duplicate key '" + key + "'");
    try {
      apply_setting(cfg, key, line.substr(eq + 1));
    } catch (const ValidationError& err) {
      throw ValidationError(where + err.what());
    }
  }
  cfg.validate();
  return cfg;
}

SystemConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.string());
}

std::string serialize_config(const SystemConfig& config) {
  std::string out;
  for (const auto& e : table()) {
    out += e.key;
    out += " = ";
    out += e.get(config);
    out += '\n';
  }
  return out;
}

std::uint64_t config_hash(const SystemConfig& config) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : serialize_config(config)) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& e : table()) keys.emplace_back(e.key);
  return keys;
}

}  // namespace psync
