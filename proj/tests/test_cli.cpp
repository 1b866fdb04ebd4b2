#include <sys/wait.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <string>

#include "demux/commands.hpp"
#include "doctest.h"
#include "json.hpp"

using namespace demux;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const fs::path kRoot = fs::temp_directory_path() / "demuxsim_cli_test";

struct Result {
  int code = -1;
  std::string out;
};

Result run(const std::string& args) {
  const std::string cmd = std::string(DEMUXSIM_PATH) + " " + args + " 2>&1";
  Result r;
  FILE* p = popen(cmd.c_str(), "r");
  REQUIRE(p != nullptr);
  char buf[4096];
  std::size_t n;
  while ((n = std::fread(buf, 1, sizeof(buf), p)) > 0) r.out.append(buf, n);
  const int status = pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string cfg(const char* name) {
  return (fs::path(CONFIG_DIR) / name).string();
}

json read_json(const fs::path& p) {
  return json::parse(read_file(p));
}

void same_tree(const fs::path& a, const fs::path& b) {
  std::size_t files = 0;
  for (const auto& e : fs::directory_iterator(a)) {
    if (!e.is_regular_file()) continue;
    CAPTURE(e.path().filename().string());
    REQUIRE(fs::exists(b / e.path().filename()));
    CHECK(read_file(e.path()) == read_file(b / e.path().filename()));
    ++files;
  }
  CHECK(files > 0);
}

struct Fresh {
  Fresh() {
    fs::remove_all(kRoot);
    fs::create_directories(kRoot);
  }
};

}  // namespace

TEST_CASE_FIXTURE(Fresh, "simulate writes tag files, ledger and manifest") {
  const auto dir = kRoot / "reference";
  const auto r = run("simulate --config " + cfg("reference.cfg") + " --set run.n_pulses=200000 --out " + dir.string());
  REQUIRE(r.code == 0);
  for (int c = 1; c <= 8; ++c) CHECK(fs::exists(dir / RunLayout::channel(c, TagFormat::csv)));
  CHECK(fs::exists(dir / "monitor.csv"));
  CHECK(fs::exists(dir / "hbt.csv"));
  CHECK(fs::exists(dir / "hom.csv"));

  const auto ledger = read_json(dir / "ledger.json");
  CHECK(ledger["conserved"].get<bool>());
  std::int64_t exited = 0, lost = 0;
  for (const auto& [k, v] : ledger["exited_by_channel"].items()) exited += v.get<std::int64_t>();
  for (const auto& [k, v] : ledger["lost_by_cause"].items()) lost += v.get<std::int64_t>();
  CHECK(ledger["entered"].get<std::int64_t>() == exited + lost);

  // tags on disk equal the ledger
  std::int64_t on_disk = 0;
  for (int c = 1; c <= 8; ++c) on_disk += static_cast<std::int64_t>(read_tags(dir / RunLayout::channel(c, TagFormat::csv)).size());
  CHECK(on_disk == exited);
  CHECK(static_cast<std::int64_t>(read_tags(dir / "monitor.csv").size()) == ledger["entered"].get<std::int64_t>());

  const auto m = read_json(dir / "manifest.json");
  CHECK(m["n_pulses"] == 200000);
  CHECK(m["config_hash"].get<std::string>() == hash_hex(m["config"].get<std::string>()));
  CHECK(m["duration_s"].get<double>() == doctest::Approx(200000 / 160e6));
  CHECK(m["counts"]["monitor.csv"] == ledger["entered"]);
}

TEST_CASE_FIXTURE(Fresh, "outputs are byte-identical across runs and thread counts") {
  for (const char* fmt : {"csv", "binary"}) {
    CAPTURE(fmt);
    const std::string base = "simulate --config " + cfg("reference.cfg") + " --set run.n_pulses=300000 --format " + fmt;
    // every run writes to the same path, since the manifest records it
    const auto work = kRoot / "work";
    const auto a = kRoot / (std::string("t1_") + fmt), b = kRoot / (std::string("t4_") + fmt),
               c = kRoot / (std::string("t4b_") + fmt);
    for (const auto& [threads, dest] : {std::pair{"1", a}, std::pair{"4", b}, std::pair{"4", c}}) {
      REQUIRE(run(std::string("--threads ") + threads + " " + base + " --out " + work.string()).code == 0);
      fs::rename(work, dest);
    }
    same_tree(a, b);
    same_tree(b, c);
    REQUIRE(run("--threads 1 analyze " + a.string() + " --out " + (a / "an").string()).code == 0);
    REQUIRE(run("--threads 3 analyze " + b.string() + " --out " + (b / "an").string()).code == 0);
    same_tree(a / "an", b / "an");
  }
}

TEST_CASE_FIXTURE(Fresh, "a different seed changes the output") {
  const std::string base = "simulate --config " + cfg("reference.cfg") + " --set run.n_pulses=20000";
  REQUIRE(run(base + " --seed 1 --out " + (kRoot / "s1").string()).code == 0);
  REQUIRE(run(base + " --seed 2 --out " + (kRoot / "s2").string()).code == 0);
  CHECK(read_file(kRoot / "s1" / "monitor.csv") != read_file(kRoot / "s2" / "monitor.csv"));
  CHECK(read_json(kRoot / "s1" / "manifest.json")["seed"] == 1);
}

TEST_CASE_FIXTURE(Fresh, "empty run") {
  const auto dir = kRoot / "empty";
  REQUIRE(run("simulate --config " + cfg("reference.cfg") + " --set run.n_pulses=0 --out " + dir.string()).code == 0);
  CHECK(read_file(dir / "channel_01.csv") == "channel,timestamp_ps\n");
  const auto m = read_json(dir / "manifest.json");
  for (const auto& [k, v] : m["counts"].items()) CHECK(v == 0);
  CHECK(read_json(dir / "ledger.json")["entered"] == 0);

  REQUIRE(run("analyze " + dir.string()).code == 0);
  const auto rep = read_json(dir / "analysis" / "report.json");
  CHECK(rep["g2"].is_null());
  CHECK(rep["I"].is_null());
  CHECK(rep["flags"]["empty_hbt"].get<bool>());
  CHECK(rep["flags"]["empty_hom"].get<bool>());
  CHECK(rep["flags"]["empty_demux"].get<bool>());
  for (const auto& e : rep["eta_ch"]) {
    CHECK(e["value"].is_null());
    CHECK(e["empty_reference"].get<bool>());
  }
}

TEST_CASE_FIXTURE(Fresh, "ideal demultiplexer analysis") {
  const auto dir = kRoot / "ideal";
  REQUIRE(run("simulate --config " + cfg("ideal.cfg") + " --out " + dir.string()).code == 0);
  REQUIRE(run("analyze " + dir.string()).code == 0);
  const auto rep = read_json(dir / "analysis" / "report.json");
  for (const auto& e : rep["eta_ch"]) CHECK(e["value"].get<double>() == 1.0);

  const auto cfg_ideal = load_config(cfg("ideal.cfg"));
  const double p = cfg_ideal.emitter.p_det;
  // ungated channel 1 also collects photons released outside the loading window
  for (const auto& r : rep["R_n_release"]) {
    const int n = r["n"].get<int>();
    if (n > 4) break;
    const double want = 8e6 * std::pow(p, n);
    const double sigma = std::sqrt(want / r["duration_s"].get<double>());
    CAPTURE(n);
    CHECK(std::abs(r["rate_hz"].get<double>() - want) < 3 * sigma);
  }
  CHECK(rep["metadata"]["hom_correction"].get<std::string>().find("V_raw") != std::string::npos);
  CHECK(fs::exists(dir / "analysis" / "hbt_correlation.csv"));
  CHECK(fs::exists(dir / "analysis" / "trace_channel_01.csv"));
}

TEST_CASE_FIXTURE(Fresh, "reference-point run reproduces g2 and I") {
  const auto dir = kRoot / "reference_full";
  REQUIRE(run("simulate --config " + cfg("reference.cfg") + " --out " + dir.string()).code == 0);
  REQUIRE(run("analyze " + dir.string()).code == 0);
  const auto rep = read_json(dir / "analysis" / "report.json");
  CHECK(std::abs(rep["g2"]["value"].get<double>() - 0.0157) < 3 * rep["g2"]["sigma"].get<double>());
  CHECK(std::abs(rep["I"]["value"].get<double>() - 0.9535) < 3 * rep["I"]["sigma"].get<double>());
}

TEST_CASE_FIXTURE(Fresh, "prediction, sweep and geometry tables") {
  auto r = run("geometry --set geometry.loop_delay_ns=1");
  REQUIRE(r.code == 0);
  CHECK(json::parse(r.out)["max_outputs"] == 16);

  r = run("predict --config " + cfg("reference.cfg") + " --set predict.n=4");
  REQUIRE(r.code == 0);
  const auto pred = json::parse(r.out);
  REQUIRE(pred["R_n"].size() == 4);
  CHECK(pred["R_n"][3]["rate_hz"].get<double>() == doctest::Approx(1160).epsilon(0.01));
  r = run("predict --config " + cfg("reference.cfg") + " --format csv");
  CHECK(r.out.starts_with("n,eta,rate_hz\n1,"));

  r = run("sweep --set sweep.grid.demux.pbs_leak=[0.05]");
  REQUIRE(r.code == 0);
  CHECK(r.out.starts_with("demux.pbs_leak,R_n\n0.05"));
  CHECK(std::count(r.out.begin(), r.out.end(), '\n') == 2);
  r = run("sweep --config " + cfg("sweep.cfg") + " --format json");
  REQUIRE(r.code == 0);
  CHECK(json::parse(r.out)["rows"].size() == 12);
}

TEST_CASE_FIXTURE(Fresh, "exit codes") {
  CHECK(run("simulate --config " + (kRoot / "missing.cfg").string()).code == 2);
  CHECK(run("predict --set bogus.key=1").code == 2);
  CHECK(run("predict --set emitter.p_det=7").code == 2);
  CHECK(run("frobnicate").code == 2);
  CHECK(run("simulate --format xml").code == 2);

  const auto dir = kRoot / "broken";
  REQUIRE(run("simulate --set run.n_pulses=1000 --out " + dir.string()).code == 0);
  write_file(dir / "channel_03.csv", "channel,timestamp_ps\n3,12\n3,x\n");
  const auto r = run("analyze " + dir.string());
  CHECK(r.code == 3);
  CHECK(r.out.find("byte 28") != std::string::npos);
  CHECK(run("analyze " + (kRoot / "nowhere").string()).code == 3);
}
