#include <catch2/catch_amalgamated.hpp>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

#include "nessim/runner.hpp"

using namespace nessim;
namespace fs = std::filesystem;

namespace {

struct Scratch {
  fs::path dir;
  Scratch() {
    dir = fs::temp_directory_path() / ("nessim-cli-" + std::to_string(::getpid()) + "-" + std::to_string(counter()++));
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  ~Scratch() { fs::remove_all(dir); }
  static int& counter() {
    static int n = 0;
    return n;
  }
};

struct Invocation {
  int code = -1;
  std::string out, err;
};

Invocation cli(const std::string& args, const fs::path& scratch, const std::string& env = "") {
  const fs::path out = scratch / "stdout.txt", err = scratch / "stderr.txt";
  const std::string cmd = env + " " + NESSIM_CLI_PATH + " " + args + " > " + out.string() + " 2> " + err.string();
  const int status = std::system(cmd.c_str());
  Invocation r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  auto slurp = [](const fs::path& p) {
    std::ifstream f(p);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
  };
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p);
  REQUIRE(f);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

std::string first_line(const std::string& s) { return s.substr(0, s.find('\n')); }

std::vector<std::string> lines(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string l;
  while (std::getline(ss, l)) out.push_back(l);
  return out;
}

RunConfig small_oracle(Backend b, Statistics st, double gamma, int m) {
  RunConfig c;
  c.backend = b;
  c.params.width = 2;
  c.params.height = 3;
  c.params.statistics = st;
  c.params.fermion_encoding = EncodingKind::jordan_wigner;
  c.params.dt = 0.1;
  c.params.p = gamma * c.params.dt;
  c.params.m = m;
  c.series = true;
  return c;
}

}  // namespace

TEST_CASE("presets expand to the published parameter table") {
  struct Row {
    const char* name;
    Statistics st;
    double V, phi, dt;
    int m;
    std::uint64_t n;
  };
  const double half = std::numbers::pi / 2;
  const Row rows[] = {{"hcb-v0", Statistics::hcb, 0, 0, 0.31, 10, 1280},
                      {"hcb-v1.5", Statistics::hcb, 1.5, 0, 0.31, 14, 1280},
                      {"fermion-v0", Statistics::fermion, 0, 0, 0.21, 14, 1480},
                      {"fermion-v0-flux", Statistics::fermion, 0, half, 0.27, 16, 1480},
                      {"fermion-v1-flux", Statistics::fermion, 1, half, 0.29, 18, 1480}};
  REQUIRE(presets().size() == 5);
  for (const Row& r : rows) {
    const Preset& p = find_preset(r.name);
    CHECK(p.params.statistics == r.st);
    CHECK(p.params.V == r.V);
    CHECK(p.params.phi == r.phi);
    CHECK(p.params.dt == r.dt);
    CHECK(p.params.m == r.m);
    CHECK(p.params.p == Catch::Approx(2 * r.dt));
    CHECK(p.params.width == 4);
    CHECK(p.params.height == 4);
    CHECK(p.trajectories == r.n);
    CHECK(p.biased == (r.V > 0));
  }
  CHECK_THROWS_AS(find_preset("hcb"), ConfigError);
}

TEST_CASE("bootstrap data seeds the interacting presets") {
  for (const char* name : {"hcb-v1.5", "fermion-v1-flux"}) {
    const ModelParams mp = preset_params(find_preset(name), NESSIM_DATA_DIR);
    CHECK(mp.init == InitKind::biased_product);
    REQUIRE(mp.target_densities.size() == 16);
    for (double d : mp.target_densities) {
      CHECK(d >= 0.0);
      CHECK(d <= 1.0);
    }
    CHECK(mp.target_densities.front() > mp.target_densities.back());
    CHECK_NOTHROW(mp.validate());
  }
  CHECK_THROWS_AS(preset_params(find_preset("hcb-v1.5"), "/nonexistent"), ConfigError);
}

TEST_CASE("backend and parameter mismatches are configuration errors") {
  RunConfig c;
  c.backend = Backend::gaussian;
  c.params.statistics = Statistics::fermion;
  c.params.V = 1;
  CHECK_THROWS_AS(validate(c), ConfigError);
  c.params.V = 0;
  CHECK_NOTHROW(validate(c));
  c.params.statistics = Statistics::hcb;
  CHECK_THROWS_AS(validate(c), ConfigError);
  c.backend = Backend::cptp;
  CHECK_THROWS_AS(validate(c), ConfigError);  // 16 sites is too many for a dense oracle
  c.params.width = 3;
  c.params.height = 3;
  CHECK_NOTHROW(validate(c));
  c.backend = Backend::trajectory;
  c.params.statistics = Statistics::fermion;
  c.params.fermion_encoding = EncodingKind::derby_klassen;
  CHECK_THROWS_AS(validate(c), ConfigError);
  c.params.p = 1.5;
  c.params.fermion_encoding = EncodingKind::jordan_wigner;
  CHECK_THROWS_AS(validate(c), ConfigError);
}

TEST_CASE("run directories") {
  Scratch s;
  const std::string base = "run --width 2 --height 3 --m 6 -n 40 --seed 9 --series --out " + s.dir.string();

  SECTION("identical configurations give byte-identical snapshots in fresh directories") {
    const Invocation a = cli(base, s.dir, "NESS_THREADS=1");
    const Invocation b = cli(base, s.dir, "NESS_THREADS=3");
    REQUIRE(a.code == 0);
    REQUIRE(b.code == 0);
    const fs::path da = first_line(a.out), db = first_line(b.out);
    CHECK(da != db);
    CHECK(slurp(da / "snapshot.csv") == slurp(db / "snapshot.csv"));
    CHECK(slurp(da / "records.ndjson") == slurp(db / "records.ndjson"));
    for (const char* f : {"manifest.json", "snapshot.json", "series.json"}) CHECK(fs::exists(da / f));

    const auto rows = lines(slurp(da / "snapshot.csv"));
    CHECK(rows.front() == "kind,index,x,y,j,k,mean,stderr");
    CHECK(rows.size() == 1 + 6 + 7);
    CHECK(lines(slurp(da / "records.ndjson")).size() == 40);
  }

  SECTION("the manifest alone reproduces the snapshot") {
    const Invocation a = cli(base, s.dir);
    REQUIRE(a.code == 0);
    const fs::path da = first_line(a.out);
    const nlohmann::json manifest = read_json_file(da / "manifest.json");
    CHECK(manifest.at("version").get<std::string>() == NESSIM_VERSION);
    CHECK(manifest.contains("wall_seconds"));
    const RunConfig c = run_config_from_json(manifest.at("config"));
    std::ostringstream os;
    write_snapshot_csv(os, execute(c));
    CHECK(os.str() == slurp(da / "snapshot.csv"));
  }

  SECTION("zero trajectories leave a manifest and an empty snapshot") {
    const Invocation a = cli("run --preset fermion-v0 -n 0 --out " + s.dir.string(), s.dir);
    REQUIRE(a.code == 0);
    const fs::path da = first_line(a.out);
    std::vector<std::string> files;
    for (const auto& e : fs::directory_iterator(da)) files.push_back(e.path().filename().string());
    std::sort(files.begin(), files.end());
    CHECK(files == std::vector<std::string>{"manifest.json", "snapshot.csv"});
    CHECK(slurp(da / "snapshot.csv") == "kind,index,x,y,j,k,mean,stderr\n");
  }

  SECTION("ssep runs write the site table") {
    const Invocation a = cli("run --backend ssep --V 1 --dt 1 --p 1 --m 20 -n 100 --out " + s.dir.string(), s.dir);
    REQUIRE(a.code == 0);
    const auto rows = lines(slurp(fs::path(first_line(a.out)) / "snapshot.csv"));
    CHECK(rows.front() == "x,y,density,stderr");
    CHECK(rows.size() == 17);
  }
}

TEST_CASE("exit codes") {
  Scratch s;
  CHECK(cli("run --preset nope", s.dir).code == 2);
  CHECK(cli("run --backend gaussian --statistics fermion --V 1 -n 1 --out " + s.dir.string(), s.dir).code == 2);
  CHECK(cli("run --p 2 --out " + s.dir.string(), s.dir).code == 2);
  CHECK(cli("run --no-such-flag", s.dir).code == 2);
  CHECK(cli("sweep --axis q --grid 1 --out " + (s.dir / "x.csv").string(), s.dir).code == 2);
  {
    std::ofstream(s.dir / "bad.json") << "{\"backend\": \"trajectory\",";
    CHECK(cli("run --params " + (s.dir / "bad.json").string(), s.dir).code == 2);
  }
  // An RK4 step far outside the stability region drives the density matrix
  // out of the physical set; the breach is reported, not written out.
  const Invocation r = cli("run --backend lindblad --width 2 --height 2 --J 40 --dt 1 --p 1 --m 3 --lindblad-step 1 --out " +
                               s.dir.string(),
                           s.dir);
  CHECK(r.code == 3);
  CHECK(r.err.find("numerical integrity") != std::string::npos);
}

TEST_CASE("parameter files") {
  Scratch s;
  std::ofstream(s.dir / "cfg.json") << R"({"preset": "hcb-v0", "backend": "trajectory", "trajectories": 12,
    "seed": 3, "params": {"width": 2, "height": 2, "m": 4}})";
  const RunConfig c = run_config_from_json(read_json_file(s.dir / "cfg.json"));
  CHECK(c.preset == "hcb-v0");
  CHECK(c.params.dt == 0.31);
  CHECK(c.params.width == 2);
  CHECK(c.trajectories == 12);
  const Invocation a = cli("run --params " + (s.dir / "cfg.json").string() + " --out " + s.dir.string(), s.dir);
  REQUIRE(a.code == 0);
  CHECK(lines(slurp(fs::path(first_line(a.out)) / "records.ndjson")).size() == 12);
  std::ofstream(s.dir / "bad.json") << R"({"backend": "quantum"})";
  CHECK_THROWS_AS(run_config_from_json(read_json_file(s.dir / "bad.json")), ConfigError);
}

TEST_CASE("sweeps") {
  Scratch s;
  const std::string header = "axis,value,dt,p,gamma,phi,current,stderr,steps_to_stationarity,converged,filling,filling_stderr";

  SECTION("an empty grid gives the header only") {
    const Invocation a = cli("sweep --backend gaussian --statistics fermion --axis gamma --grid ''", s.dir);
    REQUIRE(a.code == 0);
    CHECK(a.out == header + "\n");
  }

  SECTION("gaussian gamma sweep rises and then falls") {
    const Invocation a =
        cli("sweep --backend gaussian --statistics fermion --width 3 --height 3 --dt 0.1 --axis gamma --grid 0.25,2,8",
            s.dir);
    REQUIRE(a.code == 0);
    const auto rows = lines(a.out);
    REQUIRE(rows.size() == 4);
    std::vector<double> current;
    for (std::size_t i = 1; i < rows.size(); ++i) {
      std::vector<std::string> f;
      std::stringstream ss(rows[i]);
      std::string x;
      while (std::getline(ss, x, ',')) f.push_back(x);
      REQUIRE(f.size() == 12);
      CHECK(f[0] == "gamma");
      CHECK(f[9] == "1");
      current.push_back(std::stod(f[6]));
    }
    CHECK(current[1] > current[0]);
    CHECK(current[1] > current[2]);
  }

  SECTION("flux grid for both statistics") {
    for (const char* st : {"hcb", "fermion"}) {
      const Invocation a = cli(std::string("sweep --backend cptp --width 2 --height 3 --m 40 --dt 0.2 --gamma 2 --statistics ") +
                                   st + " --encoding jordan-wigner --axis phi --grid 0,0.7853981633974483,1.5707963267948966",
                               s.dir);
      REQUIRE(a.code == 0);
      const auto rows = lines(a.out);
      REQUIRE(rows.size() == 4);
      CHECK(rows[3].rfind("phi,1.5707963267948966,", 0) == 0);
    }
  }

  SECTION("moving dt keeps gamma") {
    const ModelParams base = find_preset("hcb-v0").params;
    const ModelParams mp = sweep_point(base, SweepAxis::dt, 0.1);
    CHECK(mp.gamma() == Catch::Approx(base.gamma()));
    CHECK(sweep_point(base, SweepAxis::gamma, 3).p == Catch::Approx(3 * base.dt));
  }
}

TEST_CASE("stationarity report") {
  SECTION("constant series settles at period one") {
    const Settling st = settling("x", std::vector<double>(10, 0.7), 3);
    CHECK(st.settled);
    CHECK(st.settled_at == 1);
    CHECK(st.value == Catch::Approx(0.7));
  }
  SECTION("a step settles after the step") {
    std::vector<double> x(20, 1.0);
    for (int t = 0; t < 8; ++t) x[t] = 0.2;
    // Periods 9 and 10 form the first window entirely after the step.
    const Settling st = settling("x", x, 2);
    CHECK(st.settled);
    CHECK(st.settled_at == 10);
  }
  SECTION("a drifting series does not settle") {
    std::vector<double> x;
    for (int t = 1; t <= 30; ++t) x.push_back(t);
    CHECK_FALSE(settling("x", x, 3).settled);
  }
  SECTION("series shorter than one window") { CHECK_THROWS_AS(settling("x", {1.0, 2.0}, 3), std::invalid_argument); }
  SECTION("no drive: zero current settles at zero") {
    RunConfig c = small_oracle(Backend::cptp, Statistics::hcb, 0.0, 20);
    const RunResult r = execute(c);
    const auto rows = stationarity_report(series_json(r));
    REQUIRE(rows.front().observable == "inflow");
    CHECK(rows.front().settled);
    CHECK(rows.front().value == 0.0);
  }
  SECTION("bosons settle before fermions in the continuous-time limit") {
    auto settle_time = [](Statistics st) {
      const RunResult r = execute(small_oracle(Backend::lindblad, st, 2.0, 300));
      int worst = 0;
      for (const Settling& s : stationarity_report(series_json(r), 10))
        worst = std::max(worst, s.settled ? s.settled_at : 301);
      return worst;
    };
    const int hcb = settle_time(Statistics::hcb), fermion = settle_time(Statistics::fermion);
    INFO("hcb " << hcb << ", fermion " << fermion);
    CHECK(hcb < fermion);
  }
  SECTION("through the command line") {
    Scratch s;
    const Invocation a = cli("run --width 2 --height 2 --m 8 -n 20 --series --out " + s.dir.string(), s.dir);
    REQUIRE(a.code == 0);
    const Invocation b = cli("report " + first_line(a.out), s.dir);
    REQUIRE(b.code == 0);
    const auto rows = lines(b.out);
    CHECK(rows.front() == "observable,settled_at,settled,final_mean");
    CHECK(rows.size() == 1 + 2 + 2 + 4 + 4);
    const Invocation c = cli("report " + (s.dir / "missing").string(), s.dir);
    CHECK(c.code == 2);
  }
}

TEST_CASE("emit and interpret through the command line") {
  Scratch s;
  const fs::path prog = s.dir / "p.qprog";
  REQUIRE(cli("emit --width 2 --height 2 --m 3 --dt 0.3 --shot density -o " + prog.string(), s.dir).code == 0);
  const Invocation a = cli("interpret " + prog.string() + " --seed 5 --stream 2", s.dir);
  REQUIRE(a.code == 0);
  ModelParams mp;
  mp.width = 2;
  mp.height = 2;
  mp.m = 3;
  mp.dt = 0.3;
  TrajectoryOptions opt;
  opt.coins = CoinMode::circuit;
  opt.final_shot = FinalShot::density;
  const TrajectoryResult direct = TrajectorySimulator(mp, true).run(5, 2, opt);
  CHECK(nlohmann::json::parse(a.out) == to_json(direct.record));

  std::ofstream(s.dir / "bad.qprog") << "qreg q[2];\nfoo q[0];\n";
  const Invocation b = cli("interpret " + (s.dir / "bad.qprog").string(), s.dir);
  CHECK(b.code == 2);
  CHECK(b.err.find("2:1:") != std::string::npos);
  CHECK(cli("emit --statistics fermion --encoding derby-klassen --width 3", s.dir).code == 2);
}
