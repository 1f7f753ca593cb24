#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "json.hpp"

namespace fs = std::filesystem;

namespace {

struct RunResult {
  int code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(f)),
                     std::istreambuf_iterator<char>());
}

fs::path work_dir() {
  fs::path d = fs::temp_directory_path() / "gridplan_cli_test";
  fs::create_directories(d);
  return d;
}

// Runs the CLI with the given argument string; env is an optional
// VAR=value prefix.
RunResult run_cli(const std::string& args, const std::string& env = "") {
  fs::path d = work_dir();
  fs::path out = d / "stdout.txt", err = d / "stderr.txt";
  std::string cmd = env + (env.empty() ? "" : " ") + GRIDPLAN_BIN + " " + args +
                    " >" + out.string() + " 2>" + err.string();
  int raw = std::system(cmd.c_str());
  RunResult r;
  r.code = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

fs::path write_triangle_osm() {
  fs::path p = work_dir() / "triangle.osm";
  std::ofstream f(p);
  f << R"(<?xml version="1.0" encoding="UTF-8"?>
<osm version="0.6">
  <node id="1" lat="0.0" lon="0.0"/>
  <node id="2" lat="0.001" lon="0.0"/>
  <node id="3" lat="0.001" lon="0.001">
    <tag k="highway" v="traffic_signals"/>
  </node>
  <node id="4" lat="0.0" lon="0.001"/>
  <way id="10">
    <nd ref="1"/>
    <nd ref="2"/>
    <nd ref="3"/>
    <tag k="highway" v="residential"/>
  </way>
  <way id="11">
    <nd ref="3"/>
    <nd ref="4"/>
    <tag k="highway" v="residential"/>
    <tag k="oneway" v="yes"/>
  </way>
</osm>
)";
  return p;
}

// Tiny-but-valid model/crop settings shared by the pipeline tests.
const char* kTinyFlags =
    "--crop-side 32 --crop-res 0.5 --horizon 4 --past 4 --future 4 "
    "--modes 2 --plan-embed 6 --scene-embed 5 --gru-hidden 4 "
    "--lstm-hidden 3";

// Extracts the JSON config echo (first line on stderr starting with '{').
nlohmann::json config_echo(const std::string& err) {
  size_t pos = err.find('{');
  REQUIRE(pos != std::string::npos);
  size_t end = err.find('\n', pos);
  return nlohmann::json::parse(err.substr(pos, end - pos));
}

}  // namespace

TEST_CASE("usage errors exit with code 1") {
  CHECK(run_cli("--no-such-flag").code == 1);
  CHECK(run_cli("").code == 1);                       // subcommand required
  CHECK(run_cli("plan --osm missing.osm").code == 1); // missing required flags
  CHECK(run_cli("bench --checkpoint x.tnv2 --n 0").code == 1);
}

TEST_CASE("help covers the subcommands") {
  RunResult r = run_cli("--help");
  CHECK(r.code == 0);
  for (const char* sub :
       {"plan", "synth", "train", "eval", "infer", "bench", "plot"})
    CHECK(r.out.find(sub) != std::string::npos);
}

TEST_CASE("plan emits a full plan graph as JSON") {
  fs::path osm = write_triangle_osm();
  RunResult r =
      run_cli("plan --osm " + osm.string() + " --src 1 --dst 4 --ego 0,0,1.5");
  CHECK(r.code == 0);
  nlohmann::json j = nlohmann::json::parse(r.out);
  CHECK(j.at("rows").size() == 40);  // default P = F = 20 with padding
  CHECK(j.at("variant") == "STPF");
  for (const auto& row : j.at("rows")) REQUIRE(row.size() == 3);
}

TEST_CASE("plan exit codes for domain and io failures") {
  fs::path osm = write_triangle_osm();
  // oneway 3 -> 4 means node 4 has no outgoing edges
  RunResult nr = run_cli("plan --osm " + osm.string() + " --src 4 --dst 1");
  CHECK(nr.code == 2);
  CHECK(nr.err.find("no route") != std::string::npos);
  // unknown node id is a domain error too
  CHECK(run_cli("plan --osm " + osm.string() + " --src 999 --dst 1").code == 2);
  // unreadable file is an I/O error
  CHECK(run_cli("plan --osm /nonexistent.osm --src 1 --dst 2").code == 3);
}

TEST_CASE("infer without a checkpoint exits 3") {
  fs::path d = work_dir();
  RunResult r = run_cli("infer --data " + (d / "none.tnds").string() +
                        " --checkpoint " + (d / "none.tnv2").string());
  CHECK(r.code == 3);
}

TEST_CASE("config echo is parseable JSON and reflects flags") {
  fs::path osm = write_triangle_osm();
  RunResult r = run_cli("plan --osm " + osm.string() +
                        " --src 1 --dst 4 --modes 7 --horizon 6");
  CHECK(r.code == 0);
  nlohmann::json cfg = config_echo(r.err);
  CHECK(cfg.at("num_modes") == 7);
  CHECK(cfg.at("horizon") == 6);
  CHECK(cfg.at("past") == 20);  // untouched default
}

TEST_CASE("GRIDPLAN_CONFIG supplies defaults below flags") {
  fs::path osm = write_triangle_osm();
  fs::path cfgfile = work_dir() / "run.json";
  {
    std::ofstream f(cfgfile);
    f << R"({"num_modes": 5, "horizon": 8})";
  }
  std::string env = "GRIDPLAN_CONFIG=" + cfgfile.string();
  RunResult r =
      run_cli("plan --osm " + osm.string() + " --src 1 --dst 4", env);
  CHECK(r.code == 0);
  nlohmann::json cfg = config_echo(r.err);
  CHECK(cfg.at("num_modes") == 5);
  CHECK(cfg.at("horizon") == 8);
  // a flag overrides the file
  RunResult r2 = run_cli(
      "plan --osm " + osm.string() + " --src 1 --dst 4 --modes 9", env);
  CHECK(config_echo(r2.err).at("num_modes") == 9);
  // --config flag behaves the same way
  RunResult r3 = run_cli("plan --config " + cfgfile.string() + " --osm " +
                         osm.string() + " --src 1 --dst 4");
  CHECK(config_echo(r3.err).at("num_modes") == 5);
}

TEST_CASE("synth train eval infer pipeline round trip") {
  fs::path d = work_dir();
  fs::path data = d / "pipe.tnds";
  std::string tiny = std::string(kTinyFlags) + " --seed 3";
  RunResult s = run_cli("synth --presets straight --per 6 --out " +
                        data.string() + " " + tiny);
  REQUIRE(s.code == 0);

  fs::path ckpt_dir = d / "ckpt";
  RunResult t = run_cli("train --data " + data.string() + " --out " +
                        ckpt_dir.string() + " --epochs 2 --batch 3 --quiet " +
                        tiny + " --loss-csv " + (d / "loss.csv").string());
  REQUIRE(t.code == 0);
  fs::path latest = ckpt_dir / "latest.tnv2";
  REQUIRE(fs::exists(latest));
  std::string csv = slurp(d / "loss.csv");
  CHECK(csv.find("epoch,total,recon,kl,mse") != std::string::npos);

  RunResult e = run_cli("eval --data " + data.string() + " --checkpoint " +
                        latest.string());
  CHECK(e.code == 0);
  CHECK(e.out.find("ADE_FULL") != std::string::npos);
  CHECK(e.out.find("DAC_HALF") != std::string::npos);

  fs::path traj = d / "traj.json", svg = d / "render.svg";
  RunResult i = run_cli("infer --data " + data.string() + " --checkpoint " +
                        latest.string() + " --index 1 --out " + traj.string() +
                        " --svg " + svg.string());
  CHECK(i.code == 0);
  nlohmann::json tj = nlohmann::json::parse(slurp(traj));
  CHECK(tj.at("waypoints").size() == 4);
  std::string svg_text = slurp(svg);
  CHECK(svg_text.find("<svg") != std::string::npos);

  RunResult b = run_cli("bench --checkpoint " + latest.string() +
                        " --data " + data.string() + " --n 3");
  CHECK(b.code == 0);
  CHECK(b.out.find("params") != std::string::npos);
  CHECK(b.out.find("inference ms") != std::string::npos);

  RunResult p = run_cli("plot --data " + data.string() + " --sample 0 --pred " +
                        traj.string() + " --out " + (d / "plot.svg").string());
  CHECK(p.code == 0);
  CHECK(slurp(d / "plot.svg").find("<svg") != std::string::npos);
}

TEST_CASE("identical seeds give byte-identical artifacts") {
  fs::path d = work_dir();
  std::string tiny = std::string(kTinyFlags) + " --seed 11";
  fs::path a = d / "a.tnds", b = d / "b.tnds";
  REQUIRE(run_cli("synth --presets straight --per 4 --out " + a.string() +
                  " " + tiny).code == 0);
  REQUIRE(run_cli("synth --presets straight --per 4 --out " + b.string() +
                  " " + tiny).code == 0);
  CHECK(slurp(a) == slurp(b));

  fs::path ca = d / "ca", cb = d / "cb";
  for (const fs::path& dir : {ca, cb})
    REQUIRE(run_cli("train --data " + a.string() + " --out " + dir.string() +
                    " --epochs 1 --batch 2 --quiet " + tiny).code == 0);
  CHECK(slurp(ca / "latest.tnv2") == slurp(cb / "latest.tnv2"));

  fs::path ta = d / "ta.json", tb = d / "tb.json";
  for (const fs::path& out : {ta, tb})
    REQUIRE(run_cli("infer --data " + a.string() + " --checkpoint " +
                    (ca / "latest.tnv2").string() + " --index 0 --out " +
                    out.string()).code == 0);
  CHECK(slurp(ta) == slurp(tb));
}

TEST_CASE("invalid configuration is rejected before running") {
  fs::path osm = write_triangle_osm();
  RunResult r = run_cli("plan --osm " + osm.string() +
                        " --src 1 --dst 4 --horizon -3");
  CHECK(r.code == 2);
}
