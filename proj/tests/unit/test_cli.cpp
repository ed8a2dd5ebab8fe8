#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <sys/wait.h>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;

namespace {

const fs::path kRoot = fs::temp_directory_path() / "psync_cli_test";

struct Result {
  int code = -1;
  std::string out;
};

Result run(const std::string& args) {
  fs::create_directories(kRoot);
  const auto log = kRoot / "stdout.txt";
  const std::string cmd = std::string(PSYNC_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
  const int raw = std::system(cmd.c_str());
  Result r;
  r.code = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  std::ifstream in(log);
  r.out.assign(std::istreambuf_iterator<char>(in), {});
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  return {std::istreambuf_iterator<char>(in), {}};
}

std::vector<std::string> lines(const fs::path& p) {
  std::istringstream in(slurp(p));
  std::vector<std::string> v;
  for (std::string l; std::getline(in, l);) v.push_back(l);
  return v;
}

std::string config() { return std::string(" --config ") + PSYNC_SOURCE_DIR + "/config/default-paper.cfg"; }

std::string out(const std::string& name) {
  const auto p = kRoot / name;
  fs::remove_all(p);
  return " --out " + p.string();
}

}  // namespace

TEST_CASE("model sweep CSV") {
  auto r = run("model" + config() + " --sweep r1=50000:440000:10" + out("model"));
  REQUIRE(r.code == 0);
  const auto l = lines(kRoot / "model" / "model.csv");
  REQUIRE(l.size() == 11);
  CHECK(l[0] == "r1_cps,r2_cps,r_stoc,r_sync,zeta,r_trig2,r_sync_trials,downtime,g2_h,eta_bar,status");
  CHECK(l[1].rfind("50000,48500,1.455,", 0) == 0);
  CHECK(fs::exists(kRoot / "model" / "manifest.json"));

  r = run("model" + config() + " --sweep r1=50000:440000:0" + out("model_empty"));
  REQUIRE(r.code == 0);
  CHECK(lines(kRoot / "model_empty" / "model.csv").size() == 1);

  r = run("model" + config() + " --sweep r1=600000:600000:1 --set source.r2_cps=600000 --set source.eta_h2=0.01" +
          out("model_bad"));
  REQUIRE(r.code == 0);
  const auto bad = lines(kRoot / "model_bad" / "model.csv");
  REQUIRE(bad.size() == 2);
  CHECK(bad[1].find("infeasible") != std::string::npos);
}

TEST_CASE("validation failures exit with 1") {
  CHECK(run("model --sweep r1=5:1:3" + out("v1")).code == 1);
  CHECK(run("simulate --duration 0" + out("v2")).code == 1);
  CHECK(run("simulate --set bogus.key=1" + out("v3")).code == 1);
  CHECK(run("nosuchcommand").code == 1);
  CHECK(run("").code == 1);
}

TEST_CASE("simulate is reproducible and analyze agrees across encodings") {
  REQUIRE(run("simulate" + config() + " --seed 5 --duration 0.5" + out("s1")).code == 0);
  REQUIRE(run("simulate" + config() + " --seed 5 --duration 0.5" + out("s2")).code == 0);
  CHECK(slurp(kRoot / "s1" / "tags.ptag") == slurp(kRoot / "s2" / "tags.ptag"));
  CHECK(slurp(kRoot / "s1" / "events.plog") == slurp(kRoot / "s2" / "events.plog"));

  REQUIRE(run("simulate --from-manifest " + (kRoot / "s1" / "manifest.json").string() + out("s3")).code == 0);
  CHECK(slurp(kRoot / "s1" / "tags.ptag") == slurp(kRoot / "s3" / "tags.ptag"));

  REQUIRE(run("simulate" + config() + " --seed 5 --duration 0.5 --format csv" + out("s4")).code == 0);
  const auto m1 = (kRoot / "s1" / "manifest.json").string();
  REQUIRE(run("analyze --tags " + (kRoot / "s1" / "tags.ptag").string() + " --manifest " + m1 + out("a1")).code == 0);
  REQUIRE(run("analyze --tags " + (kRoot / "s4" / "tags.csv").string() + " --manifest " + m1 + out("a2")).code == 0);
  const auto metrics = slurp(kRoot / "a1" / "metrics.csv");
  CHECK(metrics == slurp(kRoot / "a2" / "metrics.csv"));
  const auto l = lines(kRoot / "a1" / "metrics.csv");
  REQUIRE(!l.empty());
  CHECK(l[0] == "metric,value,stderr,n");
  CHECK(metrics.find("r_sync_cps,") != std::string::npos);
  CHECK(metrics.find("downtime,") != std::string::npos);
  CHECK(lines(kRoot / "a1" / "hist_memory_op_sig_a.csv")[0] == "tau_ps,counts");
}

TEST_CASE("analyze of an empty file gives a zero-count report") {
  fs::create_directories(kRoot);
  {
    std::ofstream f(kRoot / "empty.csv");
  }
  const auto r = run("analyze --tags " + (kRoot / "empty.csv").string() + config() +
                     " --set sim.mode=direct" + out("a_empty"));
  REQUIRE(r.code == 0);
  const auto m = slurp(kRoot / "a_empty" / "metrics.csv");
  CHECK(m.find("singles_idler1_cps,0,0,0") != std::string::npos);
  CHECK(m.find("r_stoc_cps,0,0,0") != std::string::npos);
}

TEST_CASE("malformed tag files are rejected with an offset") {
  fs::create_directories(kRoot);
  {
    std::ofstream f(kRoot / "bad.csv");
    f << "channel,time_ps\nidler1,10\nidler7,20\n";
  }
  const auto r = run("analyze --tags " + (kRoot / "bad.csv").string() + config() + out("a_bad"));
  CHECK(r.code == 1);
  CHECK(r.out.find("byte offset 26") != std::string::npos);
}

TEST_CASE("fit and calibrate") {
  fs::create_directories(kRoot);
  {
    std::ofstream f(kRoot / "decay.csv");
    f << "t_ns,value,stderr\n";
    for (int t = 0; t <= 200; t += 20) {
      const double v = 0.262 * std::exp(-t * t / (2 * 98.62 * 98.62) - t / 343.49);
      f << t << ',' << v << ",0.002\n";
    }
  }
  auto r = run("fit decay --input " + (kRoot / "decay.csv").string() + out("fit"));
  REQUIRE(r.code == 0);
  const auto p = lines(kRoot / "fit" / "fit_decay.csv");
  CHECK(p[0] == "name,value,stderr");
  CHECK(p[1].rfind("eta0,0.26", 0) == 0);

  r = run("calibrate decay" + out("cal"));
  REQUIRE(r.code == 0);
  CHECK(slurp(kRoot / "cal" / "calibrate_decay.cfg").find("memory.tau_sigma_ns = 98.62") != std::string::npos);
  CHECK(run("calibrate decay --eta-bar 0.5" + out("cal2")).code == 1);
}

TEST_CASE("reproduce report") {
  const std::string common = config() + " --sweep r1=50000:50000:1 --duration 1 --g2-duration 5 --seed 3";
  auto r = run("reproduce" + common + out("rep"));
  CHECK((r.code == 0 || r.code == 3));
  const auto rows = lines(kRoot / "rep" / "reproduce.csv");
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].rfind("r1_cps,r_stoc_mc,r_stoc_mc_err,r_stoc_model,r_stoc_measured,", 0) == 0);
  const auto checks = slurp(kRoot / "rep" / "checks.csv");
  CHECK(checks.rfind("check,value,stderr,target,tolerance,pass\n", 0) == 0);
  CHECK(checks.find("mc_g2_h_memory,") != std::string::npos);
  CHECK(checks.find("model_snr,3082") != std::string::npos);
  const auto g2_line = checks.substr(checks.find("mc_g2_h_memory,"));
  CHECK(g2_line.substr(0, g2_line.find('\n')).ends_with(",pass"));
  CHECK(lines(kRoot / "rep" / "references.csv")[0] == "key,value,error,source,table_version");

  r = run("reproduce" + common + " --set memory.nu=1.7e-3" + out("rep_tampered"));
  CHECK(r.code == 3);
  const auto t = slurp(kRoot / "rep_tampered" / "checks.csv");
  const auto tl = t.substr(t.find("mc_g2_h_memory,"));
  CHECK(tl.substr(0, tl.find('\n')).ends_with(",fail"));
  CHECK(r.out.find("mc_g2_h_memory") != std::string::npos);
}
