// Command-line front end: run, sweep, emit, interpret, report, bootstrap.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "nessim/nessim.hpp"

using namespace nessim;

namespace {

constexpr int kConfigError = 2;
constexpr int kIntegrityError = 3;

struct ConfigOptions {
  std::string preset, params_file, data_dir = default_data_dir();
  std::optional<std::string> backend, statistics, encoding, init, final_shot, coins, out;
  std::optional<int> width, height, m, flow_window;
  std::optional<double> J, V, phi, dt, p, gamma, lindblad_step;
  std::optional<std::uint64_t> trajectories, seed, init_bits;
  std::vector<double> densities;
  bool series = false;
  unsigned threads = 0;
};

void add_config_options(CLI::App* app, ConfigOptions& o) {
  auto* pre = app->add_option("--preset", o.preset, "Parameter preset");
  auto* file = app->add_option("--params", o.params_file, "JSON run configuration");
  pre->excludes(file);
  app->add_option("--data", o.data_dir, "Directory holding bootstrap.json");
  app->add_option("--backend", o.backend, "trajectory | cptp | lindblad | gaussian | ssep");
  app->add_option("-n,--trajectories", o.trajectories, "Number of trajectories");
  app->add_option("--seed", o.seed, "Base seed");
  app->add_option("-o,--out", o.out, "Output directory (run) or file");
  app->add_option("--width", o.width);
  app->add_option("--height", o.height);
  app->add_option("--J", o.J, "Hopping amplitude");
  app->add_option("--V", o.V, "Nearest-neighbour interaction");
  app->add_option("--phi", o.phi, "Flux per plaquette in radians");
  app->add_option("--dt", o.dt, "Trotter step");
  app->add_option("--m", o.m, "Number of periods");
  app->add_option("--p", o.p, "Drive probability per period");
  app->add_option("--gamma", o.gamma, "Drive rate; sets p = gamma * dt");
  app->add_option("--statistics", o.statistics, "hcb | fermion");
  app->add_option("--encoding", o.encoding, "derby-klassen | jordan-wigner");
  app->add_option("--init", o.init, "random | biased | bitstring");
  app->add_option("--init-bits", o.init_bits, "Occupation bitmask for --init bitstring");
  app->add_option("--densities", o.densities, "Per-site densities for --init biased")->delimiter(',');
  app->add_option("--final-shot", o.final_shot, "none | density | 0..3");
  app->add_option("--coins", o.coins, "classical | circuit");
  app->add_flag("--series", o.series, "Record per-period densities and currents");
  app->add_option("--flow-window", o.flow_window, "Periods in the rolling inflow/outflow");
  app->add_option("--lindblad-step", o.lindblad_step, "RK4 step of the lindblad backend");
  app->add_option("--threads", o.threads, "Worker threads (default: NESS_THREADS or all cores)");
}

RunConfig build_config(const ConfigOptions& o) {
  RunConfig c;
  if (!o.params_file.empty()) {
    c = run_config_from_json(read_json_file(o.params_file), o.data_dir);
  } else if (!o.preset.empty()) {
    const Preset& p = find_preset(o.preset);
    c.preset = p.name;
    c.params = preset_params(p, o.data_dir);
    c.trajectories = p.trajectories;
  }
  nlohmann::json j = to_json(c.params);
  auto set = [&](const char* key, const auto& v) {
    if (v) j[key] = *v;
  };
  set("width", o.width);
  set("height", o.height);
  set("J", o.J);
  set("V", o.V);
  set("phi", o.phi);
  set("dt", o.dt);
  set("m", o.m);
  set("p", o.p);
  set("statistics", o.statistics);
  set("fermion_encoding", o.encoding);
  set("init", o.init);
  set("init_bits", o.init_bits);
  if (!o.densities.empty()) j["target_densities"] = o.densities;
  if (o.width || o.height) {
    // A resized lattice cannot keep per-site densities of the old one.
    if (j.contains("target_densities") && o.densities.empty()) {
      j.erase("target_densities");
      if (j["init"] == "biased") j["init"] = "random";
    }
  }
  try {
    c.params = params_from_json(j);
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  if (o.gamma) c.params.p = *o.gamma * c.params.dt;
  if (o.backend) c.backend = parse_backend(*o.backend);
  if (o.trajectories) c.trajectories = *o.trajectories;
  if (o.seed) c.seed = *o.seed;
  if (o.out) c.output_dir = *o.out;
  if (o.final_shot) c.final_shot = parse_final_shot(*o.final_shot);
  if (o.coins) {
    if (*o.coins != "classical" && *o.coins != "circuit") throw ConfigError("coins must be 'classical' or 'circuit'");
    c.coins = *o.coins == "classical" ? CoinMode::classical : CoinMode::circuit;
  }
  if (o.series) c.series = true;
  if (o.flow_window) c.flow_window = *o.flow_window;
  if (o.lindblad_step) c.lindblad_step = *o.lindblad_step;
  c.threads = o.threads;
  return c;
}

std::vector<double> parse_grid(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.find_first_not_of(" \t") == std::string::npos) continue;
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (item.find_first_not_of(" \t", used) != std::string::npos) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError("bad grid value '" + item + "'");
    }
  }
  return out;
}

/// Writes to the named file, or to stdout when the name is empty or "-".
template <class F>
void with_output(const std::string& path, F&& write) {
  if (path.empty() || path == "-") {
    write(std::cout);
    return;
  }
  std::ofstream f(path);
  if (!f) throw ConfigError("cannot write " + path);
  write(f);
}

void print_summary(const RunResult& r, const std::filesystem::path& dir) {
  std::cout << dir.string() << '\n';
  const nlohmann::json s = summary_json(r);
  if (s.contains("derived")) {
    const auto& d = s["derived"];
    std::cout << "filling " << d["filling"]["mean"] << " +- " << d["filling"]["sem"] << '\n';
    std::cout << "cut current " << d["cut_average"]["mean"] << " +- " << d["cut_average"]["sem"] << '\n';
    if (d.contains("inflow"))
      std::cout << "inflow " << d["inflow"]["mean"] << " +- " << d["inflow"]["sem"] << ", outflow "
                << d["outflow"]["mean"] << " +- " << d["outflow"]["sem"] << '\n';
  }
  std::cout << "wall " << r.wall_seconds << " s\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Corner-driven lattice NESS simulator"};
  app.require_subcommand(1);
  app.set_version_flag("--version", NESSIM_VERSION);

  ConfigOptions run_opt, sweep_opt, emit_opt;
  auto* run = app.add_subcommand("run", "Run one configuration and write a run directory");
  add_config_options(run, run_opt);

  auto* sw = app.add_subcommand("sweep", "One run per grid value, merged into a CSV");
  add_config_options(sw, sweep_opt);
  std::string axis, grid;
  SweepOptions sweep_settings;
  sw->add_option("--axis", axis, "p | dt | phi | gamma")->required();
  sw->add_option("--grid", grid, "Comma-separated axis values")->required();
  sw->add_option("--max-time", sweep_settings.max_time, "Gaussian backend: time budget per point");
  sw->add_option("--window", sweep_settings.window, "Gaussian backend: minimum window in periods");

  auto* em = app.add_subcommand("emit", "Write the circuit program of a configuration");
  add_config_options(em, emit_opt);
  std::string shot = "density";
  em->add_option("--shot", shot, "Final measurement: none | density | 0..3");

  auto* in = app.add_subcommand("interpret", "Execute a circuit program and print its trajectory record");
  std::string program_file;
  std::uint64_t in_seed = 1, in_stream = 0;
  in->add_option("program", program_file)->required();
  in->add_option("--seed", in_seed);
  in->add_option("--stream", in_stream);

  auto* rep = app.add_subcommand("report", "Settling-time table of a run's time series");
  std::string run_dir, report_out;
  int window = 3;
  double tol = 0.01;
  rep->add_option("run", run_dir)->required();
  rep->add_option("--window", window, "Rolling window in periods");
  rep->add_option("--tol", tol, "Relative change allowed per window");
  rep->add_option("-o,--out", report_out);

  auto* boot = app.add_subcommand("bootstrap", "Estimate biased initial densities for the interacting presets");
  BootstrapOptions bopt;
  std::string boot_dir = default_data_dir();
  boot->add_option("-n,--trajectories", bopt.trajectories);
  boot->add_option("--factor", bopt.period_factor, "Periods as a multiple of the preset's m");
  boot->add_option("--seed", bopt.seed);
  boot->add_option("--threads", bopt.threads);
  boot->add_option("--data", boot_dir, "Directory receiving bootstrap.json");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kConfigError;
  }

  try {
    if (*run) {
      const RunConfig c = build_config(run_opt);
      const RunResult r = execute(c);
      print_summary(r, write_run(r));
    } else if (*sw) {
      RunConfig c = build_config(sweep_opt);
      const std::string target = sweep_opt.out.value_or("");
      c.output_dir = "runs";
      with_output(target, [&](std::ostream& os) { sweep(os, c, parse_axis(axis), parse_grid(grid), sweep_settings); });
    } else if (*em) {
      const RunConfig c = build_config(emit_opt);
      validate(c);
      const std::string text = emit(c.params, parse_final_shot(shot));
      with_output(emit_opt.out.value_or(""), [&](std::ostream& os) { os << text; });
    } else if (*in) {
      std::ifstream f(program_file);
      if (!f) throw ConfigError("cannot open " + program_file);
      std::stringstream ss;
      ss << f.rdbuf();
      RngStream rng(in_seed, in_stream);
      const Interpretation result = interpret(ss.str(), rng);
      std::cout << to_json(result.record).dump() << '\n';
    } else if (*rep) {
      const auto rows = stationarity_report(std::filesystem::path(run_dir), window, tol);
      with_output(report_out, [&](std::ostream& os) { write_settling_csv(os, rows); });
    } else if (*boot) {
      const nlohmann::json j = bootstrap(bopt);
      std::filesystem::create_directories(boot_dir);
      const auto path = std::filesystem::path(boot_dir) / "bootstrap.json";
      std::ofstream(path) << j.dump(2) << '\n';
      std::cout << path.string() << '\n';
    }
  } catch (const ParseError& e) {
    std::cerr << program_file << ':' << e.what() << '\n';
    return kConfigError;
  } catch (const SemanticError& e) {
    std::cerr << program_file << ": " << e.what() << '\n';
    return kConfigError;
  } catch (const NumericalIntegrityError& e) {
    std::cerr << "numerical integrity failure: " << e.what() << '\n';
    return kIntegrityError;
  } catch (const std::invalid_argument& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
