#include <doctest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "dknd/eval.hpp"
#include "dknd/io.hpp"

namespace fs = std::filesystem;
using namespace dknd;

namespace {

struct Sandbox {
  fs::path dir;
  Sandbox() : dir(fs::temp_directory_path() / ("dknd_cli_" + std::to_string(::getpid()))) {
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  ~Sandbox() { fs::remove_all(dir); }
  std::string operator/(const std::string& name) const { return (dir / name).string(); }
};

Sandbox& box() {
  static Sandbox s;
  return s;
}

// Runs the CLI; stdout goes to `out` and stderr to `err`.
int run(const std::string& args, std::string* out = nullptr, std::string* err = nullptr) {
  const std::string o = box() / "stdout.txt", e = box() / "stderr.txt";
  const std::string cmd = std::string(DKND_CLI) + " " + args + " > " + o + " 2> " + e;
  const int status = std::system(cmd.c_str());
  auto slurp = [](const std::string& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  };
  if (out) *out = slurp(o);
  if (err) *err = slurp(e);
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string read(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

MeasuredTrajectory load(const std::string& path) {
  std::ifstream in(path);
  return as_measured(read_trajectory_csv(in));
}

}  // namespace

TEST_CASE("simulate writes T+1 rows and is deterministic") {
  std::string out;
  REQUIRE(run("simulate --benchmark linear2d --T 500 --seed 0 --out " + box() / "a.csv", &out) == 0);
  CHECK(out.find("T=500 n=2 m=1") != std::string::npos);
  std::ifstream in(box() / "a.csv");
  const auto f = read_trajectory_csv(in);
  CHECK(f.traj.states.cols() == 501);
  REQUIRE(run("simulate --benchmark linear2d --T 500 --seed 0 --out " + box() / "b.csv") == 0);
  CHECK(read(box() / "a.csv") == read(box() / "b.csv"));
}

TEST_CASE("usage errors exit with 2") {
  std::string err;
  CHECK(run("simulate --T 10", nullptr, &err) == 2);
  CHECK(err.find("--benchmark") != std::string::npos);
  CHECK(run("simulate --benchmark pendulum") == 2);
  CHECK(run("frobnicate") == 2);
  CHECK(run("") == 2);
  CHECK(run("simulate --benchmark linear2d --no-such-flag 1") == 2);
  CHECK(run("corrupt --in " + box() / "missing.csv") == 2);
  CHECK(run("--help") == 0);
}

TEST_CASE("corrupt applies each noise family") {
  REQUIRE(run("simulate --benchmark linear2d --T 300 --out " + box() / "clean.csv") == 0);
  std::string out;
  REQUIRE(run("corrupt --in " + box() / "clean.csv" + " --out " + box() / "u.csv" + " --noise uniform --lo -1 --hi 2",
              &out) == 0);
  const auto u = load(box() / "u.csv");
  CHECK(u.noise.minCoeff() >= -1.0);
  CHECK(u.noise.maxCoeff() < 2.0);
  double printed = 0;
  REQUIRE(std::sscanf(out.c_str(), "w_max=%lf", &printed) == 1);
  CHECK(printed == doctest::Approx(u.w_max_empirical).epsilon(1e-5));

  REQUIRE(run("corrupt --in " + box() / "clean.csv" + " --out " + box() / "g.csv" + " --noise gaussian --sigma 2") == 0);
  const auto g = load(box() / "g.csv");
  CHECK(std::abs(g.noise.mean()) < 0.25);

  REQUIRE(run("corrupt --in " + box() / "clean.csv" + " --out " + box() / "p.csv" + " --noise poisson --lambda 3") == 0);
  const auto p = load(box() / "p.csv");
  CHECK(p.noise.minCoeff() >= -3.0);
  CHECK(std::abs(p.noise.mean()) < 0.3);
  CHECK((p.noise.array() - p.noise.array().round()).abs().maxCoeff() < 1e-12);

  std::ofstream(box() / "broken.csv") << "t,x0,x1,u0\n0,1,0,0.1\n1,zz,0,\n";
  std::string err;
  CHECK(run("corrupt --in " + box() / "broken.csv", nullptr, &err) == 2);
  CHECK(err.find("line 3") != std::string::npos);
}

TEST_CASE("train: defaults, one-entry history, DKL weights") {
  REQUIRE(run("simulate --benchmark linear2d --T 200 --out " + box() / "t.csv") == 0);
  REQUIRE(run("corrupt --in " + box() / "t.csv" + " --out " + box() / "m.csv") == 0);

  REQUIRE(run("train --in " + box() / "m.csv" + " --epochs 1 --epsilon inf --model " + box() / "one.json" +
              " --history " + box() / "one.csv") == 0);
  std::ifstream h(box() / "one.csv");
  CHECK(read_loss_history_csv(h).size() == 1);

  REQUIRE(run("train --in " + box() / "m.csv" + " --epochs 2 --model " + box() / "d.json" + " --history " +
              box() / "d.csv") == 0);
  const auto dj = json::parse(read(box() / "d.json"));
  CHECK(dj.at("config").at("learning_rate") == 1e-5);
  CHECK(dj.at("config").at("epsilon") == 1e-4);
  CHECK(dj.at("config").at("optimizer") == "adam");
  CHECK(dj.at("arch").at("layer_dims") == std::vector<int>{2, 512, 128, 4});

  REQUIRE(run("train --in " + box() / "m.csv" + " --method dkl --epochs 2 --model " + box() / "k.json" +
              " --history " + box() / "k.csv") == 0);
  const auto kj = json::parse(read(box() / "k.json"));
  CHECK(kj.at("kind") == "dkl");
  const auto w = kj.at("config").at("weights").get<std::vector<double>>();
  CHECK(w == std::vector<double>{0.5, 0.5, 0, 0, 0, 0});
}

TEST_CASE("train failures map to exit codes") {
  REQUIRE(run("simulate --benchmark linear2d --T 100 --out " + box() / "r.csv") == 0);
  REQUIRE(run("corrupt --in " + box() / "r.csv" + " --out " + box() / "rm.csv") == 0);
  // one hidden unit: the four observables span at most two directions
  std::string err;
  CHECK(run("train --in " + box() / "rm.csv" + " --hidden 1 --epochs 2", nullptr, &err) == 3);
  CHECK(err.find("iteration") != std::string::npos);

  CHECK(run("train --in " + box() / "rm.csv" + " --lift-dim 90 --epochs 2") == 2);

  std::ofstream nan_file(box() / "nan.csv");
  nan_file << "t,x0,x1,u0,y0,y1\n";
  for (int t = 0; t <= 40; ++t) {
    nan_file << t << ",0,0," << (t < 40 ? "0.5" : "") << "," << (t == 7 ? "nan" : std::to_string(0.1 * t)) << ","
             << std::to_string(std::sin(t)) << "\n";
  }
  nan_file.close();
  CHECK(run("train --in " + box() / "nan.csv" + " --epochs 2") == 4);
}

TEST_CASE("simulate, corrupt, train, eval round trip") {
  REQUIRE(run("simulate --benchmark linear2d --T 200 --seed 3 --out " + box() / "rt.csv") == 0);
  REQUIRE(run("corrupt --in " + box() / "rt.csv" + " --out " + box() / "rtm.csv" + " --seed 3") == 0);
  REQUIRE(run("train --in " + box() / "rtm.csv" + " --epochs 5 --lr 1e-3 --model " + box() / "rt.json" +
              " --history " + box() / "rth.csv") == 0);
  std::string out;
  REQUIRE(run("eval --in " + box() / "rtm.csv" + " --model " + box() / "rt.json" + " --out " + box() / "rep.json" +
                  " --traces " + box() / "rtr.csv",
              &out) == 0);
  const auto report = json::parse(read(box() / "rep.json"));
  CHECK(validate_report(report).empty());
  CHECK(report.at("benchmark") == "linear2d");
  CHECK(out.find("test_rmsd=") != std::string::npos);

  // every CSV re-parses and re-serializes to the same bytes
  std::ifstream t(box() / "rtm.csv");
  const auto f = read_trajectory_csv(t);
  std::stringstream again;
  write_trajectory_csv(again, f.traj, &*f.measurements);
  CHECK(again.str() == read(box() / "rtm.csv"));
  std::ifstream h(box() / "rth.csv");
  std::stringstream hist;
  write_loss_history_csv(hist, read_loss_history_csv(h));
  CHECK(hist.str() == read(box() / "rth.csv"));

  // the model file can be used again
  REQUIRE(run("eval --in " + box() / "rtm.csv" + " --model " + box() / "rt.json" + " --out " + box() / "rep2.json") == 0);
  CHECK(json::parse(read(box() / "rep2.json")).at("table") == report.at("table"));
}

TEST_CASE("compare writes every artifact, reproducibly") {
  const std::string flags = "compare --benchmark linear2d --T 120 --trials 1 --epochs 3 --lr 1e-3 --hidden 16,16 ";
  REQUIRE(run(flags + "--out " + box() / "c1") == 0);
  for (const char* f : {"report.json", "table.txt", "table.csv", "traces_linear2d.csv", "run.ini"}) {
    CHECK(fs::exists(box() / (std::string("c1/") + f)));
  }
  const auto report = json::parse(read(box() / "c1/report.json"));
  CHECK(validate_report(report).empty());
  for (const auto& m : report.at("methods")) {
    CHECK(report.at("table").at(m.get<std::string>()).at("test").at("std") == 0.0);
  }
  const auto rows = parse_table_csv(read(box() / "c1/table.csv"));
  for (const auto& r : rows) CHECK(r.std == 0.0);

  REQUIRE(run(flags + "--out " + box() / "c2") == 0);
  CHECK(read(box() / "c1/report.json") == read(box() / "c2/report.json"));

  // the stored run config reproduces the run
  REQUIRE(run("compare --config " + box() / "c1/run.ini" + " --out " + box() / "c3") == 0);
  CHECK(read(box() / "c1/report.json") == read(box() / "c3/report.json"));
}

TEST_CASE("flags override config files") {
  std::ofstream(box() / "cfg.ini") << "[run]\nbenchmark = linear2d\nT = 50\nseed = 4\n";
  REQUIRE(run("simulate --config " + box() / "cfg.ini" + " --T 60 --out " + box() / "o.csv") == 0);
  std::ifstream in(box() / "o.csv");
  CHECK(read_trajectory_csv(in).traj.horizon() == 60);
  std::ofstream(box() / "bad.ini") << "[run]\nbenchmark = linear2d\nspeed = 3\n";
  CHECK(run("simulate --config " + box() / "bad.ini") == 2);
}
