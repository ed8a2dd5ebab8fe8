#include <doctest.h>

#include <limits>
#include <sstream>
#include <string>

#include "psync/core/config_io.hpp"

using namespace psync;

TEST_CASE("serialize and parse round trip") {
  SystemConfig c;
  c.source.r1_cps = 123456.5;
  c.source.r2_cps = 99000.0;
  c.memory.decay.tau_gamma_ns = std::numeric_limits<double>::infinity();
  c.electronics.retrieval_trim = Picos{-4000};
  c.electronics.t_star = Picos{100'123};
  c.sim.mode = SimMode::storage;
  c.sim.routing = Routing::hom;
  c.source.envelope = EnvelopeShape::two_sided_exponential;
  const auto text = serialize_config(c);
  const auto back = parse_config(text);
  CHECK(serialize_config(back) == text);
  CHECK(config_hash(back) == config_hash(c));
  CHECK(back.electronics.t_star == Picos{100'123});
  CHECK(back.electronics.retrieval_trim == Picos{-4000});
  CHECK(back.source.r2() == 99000.0);

  SystemConfig d;
  CHECK(config_hash(d) != config_hash(c));
  CHECK(hex64(config_hash(d)).size() == 16);
}

TEST_CASE("every key appears once in the canonical form") {
  const auto keys = config_keys();
  const auto text = serialize_config(SystemConfig{});
  std::istringstream in(text);
  std::string line;
  std::size_t i = 0;
  while (std::getline(in, line)) {
    REQUIRE(i < keys.size());
    CHECK(line.rfind(keys[i] + " = ", 0) == 0);
    ++i;
  }
  CHECK(i == keys.size());
}

TEST_CASE("time values accept explicit units") {
  auto c = parse_config("electronics.tau_d1_ns = 1.525us\nanalysis.herald_window_ps = 3.5 ns\n");
  CHECK(c.electronics.tau_d1 == Picos{1'525'000});
  CHECK(c.analysis.herald_window == Picos{3500});
  c = parse_config("electronics.t_star_ns = 100000 ps");
  CHECK(c.electronics.t_star == Picos{100'000});
  CHECK_THROWS_AS(parse_config("electronics.t_star_ns = 1.5 ps"), ValidationError);
  CHECK_THROWS_AS(parse_config("electronics.t_star_ns = 5 parsecs"), ValidationError);
}

TEST_CASE("comments, blank lines and r2 auto") {
  const auto c = parse_config("# header\n\n  source.r1_cps = 1e5  # trailing\nsource.r2_cps = auto\n");
  CHECK(c.source.r1_cps == 1e5);
  CHECK_FALSE(c.source.r2_cps.has_value());
  CHECK(c.source.r2() == doctest::Approx(0.97e5));
}

TEST_CASE("malformed configurations name the line") {
  const auto fails_with = [](const std::string& text, const std::string& needle) {
    try {
      parse_config(text, "t.cfg");
    } catch (const ValidationError& e) {
      const std::string w = e.what();
      CAPTURE(w);
      CHECK(w.find(needle) != std::string::npos);
      return;
    }
    FAIL("no error for: " << text);
  };
  fails_with("source.r1_cps = 1\nbogus.key = 2\n", "t.cfg:2");
  fails_with("source.r1_cps = 1\nsource.r1_cps = 2\n", "duplicate");
  fails_with("source.eta_h1 = abc\n", "t.cfg:1");
  fails_with("source.eta_h1\n", "key = value");
  fails_with("source.eta_h1 = 1.5\n", "eta_h1");
  fails_with("sim.mode = warp\n", "t.cfg:1");
}

TEST_CASE("the shipped configuration loads") {
  const auto c = load_config(std::string(PSYNC_SOURCE_DIR) + "/config/default-paper.cfg");
  CHECK(c.source.r1_cps == 50e3);
  CHECK(c.source.r2() == 48.5e3);
  SystemConfig d;
  d.source.r2_cps = 48.5e3;
  d.hom.mu = c.hom.mu;
  CHECK(serialize_config(c) == serialize_config(d));
  CHECK_THROWS_AS(load_config("/nonexistent/x.cfg"), ValidationError);
}

TEST_CASE("apply_setting overrides one key") {
  SystemConfig c;
  apply_setting(c, "memory.nu", "1.7e-3");
  CHECK(c.memory.nu == 1.7e-3);
  CHECK_THROWS_AS(apply_setting(c, "memory.nope", "1"), ValidationError);
}
