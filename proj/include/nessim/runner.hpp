#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "channel.hpp"
#include "gaussian.hpp"
#include "model.hpp"
#include "observables.hpp"
#include "parallel.hpp"
#include "ssep.hpp"

#ifndef NESSIM_VERSION
#define NESSIM_VERSION "unknown"
#endif

namespace nessim {

/// Invalid preset, option or backend/parameter combination.
struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

enum class Backend { trajectory, cptp, lindblad, gaussian, ssep };

inline const char* backend_name(Backend b) {
  switch (b) {
    case Backend::trajectory: return "trajectory";
    case Backend::cptp: return "cptp";
    case Backend::lindblad: return "lindblad";
    case Backend::gaussian: return "gaussian";
    case Backend::ssep: return "ssep";
  }
  return "?";
}

inline Backend parse_backend(const std::string& s) {
  for (Backend b : {Backend::trajectory, Backend::cptp, Backend::lindblad, Backend::gaussian, Backend::ssep})
    if (s == backend_name(b)) return b;
  throw ConfigError("unknown backend '" + s + "' (trajectory, cptp, lindblad, gaussian, ssep)");
}

// ---------------------------------------------------------------------------
// Presets

struct Preset {
  std::string name;
  ModelParams params;
  std::uint64_t trajectories = 0;
  bool biased = false;  // initial densities come from the bootstrap file
};

inline const std::vector<Preset>& presets() {
  static const std::vector<Preset> table = [] {
    auto make = [](std::string name, Statistics st, double V, double phi, double dt, int m, std::uint64_t n,
                   bool biased) {
      Preset p;
      p.name = std::move(name);
      p.params.statistics = st;
      p.params.fermion_encoding = EncodingKind::jordan_wigner;
      p.params.V = V;
      p.params.phi = phi;
      p.params.dt = dt;
      p.params.m = m;
      p.params.p = 2.0 * dt;
      p.trajectories = n;
      p.biased = biased;
      return p;
    };
    const double half = std::numbers::pi / 2;
    return std::vector<Preset>{
        make("hcb-v0", Statistics::hcb, 0.0, 0.0, 0.31, 10, 1280, false),
        make("hcb-v1.5", Statistics::hcb, 1.5, 0.0, 0.31, 14, 1280, true),
        make("fermion-v0", Statistics::fermion, 0.0, 0.0, 0.21, 14, 1480, false),
        make("fermion-v0-flux", Statistics::fermion, 0.0, half, 0.27, 16, 1480, false),
        make("fermion-v1-flux", Statistics::fermion, 1.0, half, 0.29, 18, 1480, true),
    };
  }();
  return table;
}

inline const Preset& find_preset(const std::string& name) {
  std::string names;
  for (const Preset& p : presets()) {
    if (p.name == name) return p;
    names += (names.empty() ? "" : ", ") + p.name;
  }
  throw ConfigError("unknown preset '" + name + "' (" + names + ")");
}

inline std::string default_data_dir() {
  if (const char* env = std::getenv("NESSIM_DATA")) return env;
#ifdef NESSIM_DATA_DIR
  return NESSIM_DATA_DIR;
#else
  return "data";
#endif
}

inline nlohmann::json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

/// Preset parameters with the biased initial densities filled in from
/// `<data_dir>/bootstrap.json` where the preset needs them.
inline ModelParams preset_params(const Preset& preset, const std::string& data_dir = default_data_dir()) {
  ModelParams mp = preset.params;
  if (!preset.biased) return mp;
  const auto path = std::filesystem::path(data_dir) / "bootstrap.json";
  const nlohmann::json boot = read_json_file(path);
  if (!boot.contains("presets") || !boot["presets"].contains(preset.name))
    throw ConfigError(path.string() + " has no densities for preset '" + preset.name + "'; run `nessim bootstrap`");
  mp.init = InitKind::biased_product;
  mp.target_densities = boot["presets"][preset.name].at("densities").get<std::vector<double>>();
  return mp;
}

// ---------------------------------------------------------------------------
// Run configuration

struct RunConfig {
  ModelParams params;
  Backend backend = Backend::trajectory;
  std::uint64_t trajectories = 1000;
  std::uint64_t seed = 1;
  std::string output_dir = "runs";
  std::string preset;  // empty for custom parameters
  int final_shot = FinalShot::none;
  CoinMode coins = CoinMode::classical;
  bool series = false;       // per-period densities and currents
  int flow_window = 3;       // periods in the rolling inflow/outflow average
  double lindblad_step = 0.01;
  unsigned threads = 0;      // 0: NESS_THREADS or hardware concurrency
};

inline nlohmann::json to_json(const RunConfig& c) {
  nlohmann::json j;
  j["params"] = to_json(c.params);
  j["backend"] = backend_name(c.backend);
  j["trajectories"] = c.trajectories;
  j["seed"] = c.seed;
  j["output_dir"] = c.output_dir;
  if (!c.preset.empty()) j["preset"] = c.preset;
  j["final_shot"] = basis_label(c.final_shot);
  j["coins"] = c.coins == CoinMode::classical ? "classical" : "circuit";
  j["series"] = c.series;
  j["flow_window"] = c.flow_window;
  j["lindblad_step"] = c.lindblad_step;
  return j;
}

inline int parse_final_shot(const std::string& s) {
  if (s == "none") return FinalShot::none;
  if (s == "density") return FinalShot::density;
  for (int k = 0; k < 4; ++k)
    if (s == basis_label(k) || s == std::to_string(k)) return k;
  throw ConfigError("unknown final shot '" + s + "' (none, density, 0..3)");
}

/// Reads a run configuration. A "preset" key starts from that preset; model
/// parameters may sit under "params" or at the top level.
inline RunConfig run_config_from_json(const nlohmann::json& j, const std::string& data_dir = default_data_dir()) {
  if (!j.is_object()) throw ConfigError("run configuration must be a JSON object");
  RunConfig c;
  try {
    if (j.contains("preset")) {
      const Preset& p = find_preset(j["preset"].get<std::string>());
      c.preset = p.name;
      c.params = preset_params(p, data_dir);
      c.trajectories = p.trajectories;
    }
    const nlohmann::json& pj = j.contains("params") ? j["params"] : j;
    nlohmann::json merged = to_json(c.params);
    for (auto it = pj.begin(); it != pj.end(); ++it)
      if (merged.contains(it.key()) || it.key() == "target_densities" || it.key() == "init_bits") merged[it.key()] = *it;
    c.params = params_from_json(merged);
    if (j.contains("backend")) c.backend = parse_backend(j["backend"].get<std::string>());
    c.trajectories = j.value("trajectories", c.trajectories);
    c.seed = j.value("seed", c.seed);
    c.output_dir = j.value("output_dir", c.output_dir);
    if (j.contains("final_shot")) c.final_shot = parse_final_shot(j["final_shot"].get<std::string>());
    if (j.contains("coins")) {
      const std::string coins = j["coins"].get<std::string>();
      if (coins != "classical" && coins != "circuit") throw ConfigError("coins must be 'classical' or 'circuit'");
      c.coins = coins == "classical" ? CoinMode::classical : CoinMode::circuit;
    }
    c.series = j.value("series", c.series);
    c.flow_window = j.value("flow_window", c.flow_window);
    c.lindblad_step = j.value("lindblad_step", c.lindblad_step);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad run configuration: ") + e.what());
  }
  return c;
}

/// Rejects backend/parameter combinations that cannot run.
inline void validate(const RunConfig& c) {
  try {
    c.params.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (c.flow_window < 1) throw ConfigError("flow window must be at least one period");
  const int n = c.params.width * c.params.height;
  switch (c.backend) {
    case Backend::trajectory:
      if (c.params.statistics == Statistics::fermion && c.params.fermion_encoding == EncodingKind::derby_klassen &&
          (c.params.width != 4 || c.params.height != 4))
        throw ConfigError("the Derby-Klassen encoding is implemented for 4x4 only; use jordan-wigner");
      if (n > StateVector::kMaxQubits - 2) throw ConfigError("lattice too large for the state-vector backend");
      break;
    case Backend::cptp:
    case Backend::lindblad:
      if (n > DensityMatrix::kMaxQubits)
        throw ConfigError("dense oracles are limited to " + std::to_string(DensityMatrix::kMaxQubits) + " sites");
      if (c.final_shot != FinalShot::none) throw ConfigError("dense oracles report expectation values only");
      if (c.backend == Backend::lindblad && !(c.lindblad_step > 0)) throw ConfigError("lindblad step must be positive");
      break;
    case Backend::gaussian:
      if (c.params.statistics != Statistics::fermion) throw ConfigError("the gaussian backend simulates fermions only");
      if (c.params.V != 0.0) throw ConfigError("the gaussian backend requires V = 0");
      if (c.final_shot != FinalShot::none) throw ConfigError("the gaussian backend reports expectation values only");
      break;
    case Backend::ssep:
      if (c.params.dt <= 0) throw ConfigError("ssep needs dt > 0 to define gamma = p/dt");
      break;
  }
}

// ---------------------------------------------------------------------------
// Execution

struct RunResult {
  RunConfig config;
  ModelParams params;  // as simulated (oracles swap in the Jordan-Wigner encoding)
  Lattice lattice;
  Samples samples;     // one row per trajectory (one exact row for the oracles)
  std::vector<TrajectoryRecord> records;
  std::optional<FlowSeries> flow;
  std::vector<std::vector<MeanErr>> density_series;  // [period][site]
  std::vector<std::vector<MeanErr>> current_series;  // [period][bond]
  std::optional<SsepField> ssep;
  double wall_seconds = 0;
};

namespace detail {

/// Per-period sums over trajectories of densities and currents.
struct SeriesSums {
  std::size_t periods = 0, width = 0;
  std::vector<double> s, s2;
  std::uint64_t n = 0;

  SeriesSums() = default;
  SeriesSums(std::size_t p, std::size_t w) : periods(p), width(w), s(p * w, 0.0), s2(p * w, 0.0) {}

  void add(const std::vector<std::vector<double>>& dens, const std::vector<std::vector<double>>& cur) {
    for (std::size_t t = 0; t < periods; ++t) {
      std::size_t c = 0;
      for (double v : dens[t]) accumulate(t, c++, v);
      for (double v : cur[t]) accumulate(t, c++, v);
    }
    ++n;
  }
  void accumulate(std::size_t t, std::size_t c, double v) {
    s[t * width + c] += v;
    s2[t * width + c] += v * v;
  }
  void merge(const SeriesSums& o) {
    for (std::size_t i = 0; i < s.size(); ++i) {
      s[i] += o.s[i];
      s2[i] += o.s2[i];
    }
    n += o.n;
  }
  MeanErr at(std::size_t t, std::size_t c) const { return mean_err(s[t * width + c], s2[t * width + c], n); }
};

inline std::vector<MeanErr> exact(const std::vector<double>& v) {
  std::vector<MeanErr> out;
  for (double x : v) out.push_back({x, 0.0});
  return out;
}

/// Flow series for a deterministic oracle: exact values, zero error bars.
inline FlowSeries exact_flow(const std::vector<double>& in, const std::vector<double>& out, int window) {
  FlowSeries fs;
  fs.inflow = exact(in);
  fs.outflow = exact(out);
  for (std::size_t t = 0; t < in.size(); ++t) {
    const std::size_t lo = t + 1 >= static_cast<std::size_t>(window) ? t + 1 - window : 0;
    double a = 0, b = 0;
    for (std::size_t u = lo; u <= t; ++u) {
      a += in[u];
      b += out[u];
    }
    fs.inflow_rolling.push_back({a / (t + 1 - lo), 0.0});
    fs.outflow_rolling.push_back({b / (t + 1 - lo), 0.0});
  }
  return fs;
}

/// Initial density matrix matching the trajectory initialization on average:
/// a product of diagonal site states, source filled and drain empty.
inline DensityMatrix initial_density_matrix(const ModelParams& mp, const Lattice& lat) {
  const int n = lat.num_sites();
  std::vector<double> occ(static_cast<std::size_t>(n), 0.5);
  for (int i = 0; i < n; ++i) {
    if (mp.init == InitKind::biased_product) occ[i] = mp.target_densities[i];
    if (mp.init == InitKind::bitstring) occ[i] = static_cast<double>((mp.init_bits >> i) & 1);
  }
  occ[lat.source()] = 1;
  occ[lat.drain()] = 0;
  DensityMatrix rho(n);
  rho.matrix().setZero();
  for (std::size_t i = 0; i < rho.dim(); ++i) {
    double w = 1;
    for (int q = 0; q < n; ++q) w *= (i >> q) & 1 ? occ[q] : 1 - occ[q];
    rho.matrix()(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)) = w;
  }
  return rho;
}

inline void check_density_matrix(const DensityMatrix& rho) {
  if (std::abs(rho.trace() - 1) > 1e-8 || rho.hermiticity_error() > 1e-8 || rho.min_eigenvalue() < -1e-8)
    throw NumericalIntegrityError("density matrix left the physical set (trace " + std::to_string(rho.trace()) +
                                  ", min eigenvalue " + std::to_string(rho.min_eigenvalue()) + ")");
}

inline RunResult run_oracle(const RunConfig& cfg, RunResult res) {
  ModelParams mp = res.params;
  if (mp.statistics == Statistics::fermion) mp.fermion_encoding = EncodingKind::jordan_wigner;
  res.params = mp;
  const Lattice& lat = res.lattice;
  const Encoding enc = make_encoding(lat, mp.encoding_kind());
  const int n = lat.num_sites(), s = lat.source(), d = lat.drain();
  DensityMatrix rho = initial_density_matrix(mp, lat);

  auto currents = [&] {
    std::vector<double> out(static_cast<std::size_t>(lat.num_bonds()));
    for (int b = 0; b < lat.num_bonds(); ++b) out[b] = rho.bond_current(enc.terms[b], mp.J, lat.peierls_phase(b, mp.phi));
    return out;
  };
  std::vector<double> in, out;
  if (cfg.backend == Backend::cptp) {
    const DenseMatrix U = trotter_propagator(TrotterStep(lat, enc, mp), n);
    for (int t = 0; t < mp.m; ++t) {
      rho.matrix() = U * rho.matrix() * U.adjoint();
      const auto dens = rho.densities(n);
      in.push_back(mp.p * (1 - dens[s]) / mp.dt);
      out.push_back(mp.p * dens[d] / mp.dt);
      for (const auto& [site, ks] : {std::pair{s, source_kraus(mp.p)}, std::pair{d, drain_kraus(mp.p)}}) {
        DenseMatrix acc = DenseMatrix::Zero(rho.matrix().rows(), rho.matrix().cols());
        for (const Mat2& K : ks) acc += rho.sandwich(site, K, K);
        rho.matrix() = acc;
      }
      if (cfg.series) {
        res.density_series.push_back(exact(rho.densities(n)));
        res.current_series.push_back(exact(currents()));
      }
    }
  } else {
    // Continuous-time limit with γ = p/Δt; each period integrates over Δt.
    const DenseMatrix H = dense_hamiltonian(lat, enc, mp);
    const auto L = jump_operators(s, d, mp.gamma());
    const double h = mp.dt / std::ceil(mp.dt / cfg.lindblad_step);
    for (int t = 0; t < mp.m; ++t) {
      rho.matrix() = integrate_lindblad(rho.matrix(), H, L, mp.dt, h);
      const auto dens = rho.densities(n);
      in.push_back(mp.gamma() * (1 - dens[s]));
      out.push_back(mp.gamma() * dens[d]);
      if (cfg.series) {
        res.density_series.push_back(exact(rho.densities(n)));
        res.current_series.push_back(exact(currents()));
      }
    }
  }
  check_density_matrix(rho);
  res.samples = Samples(n, lat.num_bonds());
  res.samples.add(rho.densities(n), currents());
  if (mp.m > 0) res.flow = exact_flow(in, out, cfg.flow_window);
  return res;
}

inline RunResult run_ssep(const RunConfig& cfg, RunResult res) {
  SsepConfig sc;
  sc.width = cfg.params.width;
  sc.height = cfg.params.height;
  sc.V = cfg.params.V;
  sc.gamma = cfg.params.gamma();
  sc.steps = cfg.params.m;
  sc.trajectories = cfg.trajectories;
  sc.seed = cfg.seed;
  try {
    sc.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  res.ssep = ssep_ness(sc, cfg.threads);
  res.samples = Samples(res.lattice.num_sites(), res.lattice.num_bonds());
  return res;
}

/// Trajectory farming for the state-vector and correlation-matrix backends.
template <class Sim>
RunResult run_sampled(const RunConfig& cfg, RunResult res, const Sim& sim) {
  const Lattice& lat = res.lattice;
  const int n = lat.num_sites(), nb = lat.num_bonds();
  constexpr std::uint64_t kChunk = 8;
  const std::uint64_t chunks = chunk_count(cfg.trajectories, kChunk);
  const std::size_t periods = static_cast<std::size_t>(cfg.params.m);
  struct Part {
    Samples samples;
    std::vector<TrajectoryRecord> records;
    SeriesSums series;
  };
  std::vector<Part> parts(chunks);
  TrajectoryOptions opt;
  opt.coins = cfg.coins;
  opt.record_series = cfg.series;
  opt.final_shot = cfg.final_shot;

  parallel_chunks(
      cfg.trajectories, kChunk,
      [&](std::uint64_t c, std::uint64_t begin, std::uint64_t end) {
        Part& part = parts[c];
        part.samples = Samples(n, nb);
        if (cfg.series) part.series = SeriesSums(periods, static_cast<std::size_t>(n + nb));
        for (std::uint64_t t = begin; t < end; ++t) {
          auto tr = sim.run(cfg.seed, t, opt);
          double total = 0;
          for (double v : tr.densities) {
            if (!(v > -1e-9 && v < 1 + 1e-9)) throw NumericalIntegrityError("density outside [0,1]: " + std::to_string(v));
            total += v;
          }
          if (!std::isfinite(total)) throw NumericalIntegrityError("non-finite density");
          if constexpr (requires { tr.psi; }) {
            if (std::abs(tr.psi.norm() - 1) > 1e-8)
              throw NumericalIntegrityError("state norm drifted to " + std::to_string(tr.psi.norm()));
          }
          part.samples.add(tr.densities, tr.currents);
          if (cfg.series) part.series.add(tr.density_series, tr.current_series);
          part.records.push_back(std::move(tr.record));
        }
      },
      cfg.threads);

  res.samples = Samples(n, nb);
  SeriesSums series(periods, static_cast<std::size_t>(n + nb));
  for (Part& p : parts) {
    res.samples.append(p.samples);
    if (cfg.series) series.merge(p.series);
    for (auto& r : p.records) res.records.push_back(std::move(r));
  }
  if (cfg.series)
    for (std::size_t t = 0; t < periods; ++t) {
      std::vector<MeanErr> dens, cur;
      for (int i = 0; i < n; ++i) dens.push_back(series.at(t, i));
      for (int b = 0; b < nb; ++b) cur.push_back(series.at(t, n + b));
      res.density_series.push_back(std::move(dens));
      res.current_series.push_back(std::move(cur));
    }
  if (!res.records.empty() && periods > 0)
    res.flow = net_current_from_records(res.records, cfg.params.dt, cfg.flow_window);
  return res;
}

}  // namespace detail

inline RunResult execute(const RunConfig& cfg) {
  validate(cfg);
  const auto start = std::chrono::steady_clock::now();
  RunResult res;
  res.config = cfg;
  res.params = cfg.params;
  res.lattice = Lattice::square(cfg.params.width, cfg.params.height);
  res.samples = Samples(res.lattice.num_sites(), res.lattice.num_bonds());
  switch (cfg.backend) {
    case Backend::cptp:
    case Backend::lindblad: res = detail::run_oracle(cfg, std::move(res)); break;
    case Backend::ssep:
      if (cfg.trajectories > 0) res = detail::run_ssep(cfg, std::move(res));
      break;
    case Backend::trajectory:
      if (cfg.trajectories > 0) res = detail::run_sampled(cfg, std::move(res), TrajectorySimulator(cfg.params));
      break;
    case Backend::gaussian:
      if (cfg.trajectories > 0) res = detail::run_sampled(cfg, std::move(res), GaussianSimulator(cfg.params));
      break;
  }
  res.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return res;
}

// ---------------------------------------------------------------------------
// Derived summary

/// Cuts used for the cut-averaged current: those not touching source or drain
/// bonds when the lattice is large enough, otherwise every cut.
inline std::pair<int, int> interior_cuts(const Lattice& lat) {
  if (lat.max_distance() >= 3) return {1, lat.max_distance() - 2};
  return {0, lat.max_distance() - 1};
}

inline MeanErr mean_filling(const Samples& s) {
  std::vector<double> w(static_cast<std::size_t>(s.width()), 0.0);
  for (int i = 0; i < s.n_sites(); ++i) w[i] = 1.0 / s.n_sites();
  return s.linear(w);
}

inline nlohmann::json to_json(const MeanErr& m) { return {{"mean", m.mean}, {"sem", m.sem}}; }

inline nlohmann::json summary_json(const RunResult& r) {
  nlohmann::json j;
  j["backend"] = backend_name(r.config.backend);
  j["period"] = r.params.m;
  if (r.ssep) {
    j["ssep"] = to_json(*r.ssep);
    return j;
  }
  const Samples& s = r.samples;
  const Lattice& lat = r.lattice;
  j["trajectories"] = s.rows();
  auto& dens = j["densities"] = nlohmann::json::array();
  auto& cur = j["currents"] = nlohmann::json::array();
  if (s.rows() == 0) return j;
  for (int i = 0; i < lat.num_sites(); ++i) dens.push_back(to_json(s.density(i)));
  for (int b = 0; b < lat.num_bonds(); ++b) {
    nlohmann::json e = to_json(s.current(b));
    e["j"] = lat.bond(b).j;
    e["k"] = lat.bond(b).k;
    cur.push_back(e);
  }
  nlohmann::json d;
  d["filling"] = to_json(mean_filling(s));
  auto& prof = d["profile"] = nlohmann::json::array();
  for (const auto& m : density_profile(s, lat)) prof.push_back(to_json(m));
  auto& cuts = d["cuts"] = nlohmann::json::array();
  for (const auto& m : cut_currents(s, lat)) cuts.push_back(to_json(m));
  const auto [first, last] = interior_cuts(lat);
  d["cut_average"] = to_json(cut_averaged_current(s, lat, first, last));
  d["cut_average"]["first"] = first;
  d["cut_average"]["last"] = last;
  if (lat.width() == lat.height()) {
    const Imbalances im = imbalances(s, lat);
    d["imbalance_density"] = to_json(im.dN);
    d["imbalance_current"] = to_json(im.dJ);
  }
  if (r.flow) {
    d["inflow"] = to_json(r.flow->inflow_rolling.back());
    d["outflow"] = to_json(r.flow->outflow_rolling.back());
    d["flow_window"] = r.config.flow_window;
  }
  j["derived"] = d;
  return j;
}

// ---------------------------------------------------------------------------
// Persistence

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// Long-format snapshot: one row per site density and per bond current.
inline void write_snapshot_csv(std::ostream& os, const RunResult& r) {
  if (r.ssep) {
    write_csv(os, *r.ssep);
    return;
  }
  os << "kind,index,x,y,j,k,mean,stderr\n";
  const Samples& s = r.samples;
  if (s.rows() == 0) return;
  const Lattice& lat = r.lattice;
  for (int i = 0; i < lat.num_sites(); ++i) {
    const MeanErr m = s.density(i);
    os << "density," << i << ',' << lat.site(i).x << ',' << lat.site(i).y << ",,," << format_double(m.mean) << ','
       << format_double(m.sem) << '\n';
  }
  for (int b = 0; b < lat.num_bonds(); ++b) {
    const MeanErr m = s.current(b);
    os << "current," << b << ",,," << lat.bond(b).j << ',' << lat.bond(b).k << ',' << format_double(m.mean) << ','
       << format_double(m.sem) << '\n';
  }
}

inline nlohmann::json series_json(const RunResult& r) {
  nlohmann::json j;
  j["dt"] = r.params.dt;
  auto column = [](const std::vector<MeanErr>& v, bool sem) {
    nlohmann::json a = nlohmann::json::array();
    for (const auto& m : v) a.push_back(sem ? m.sem : m.mean);
    return a;
  };
  if (r.flow) {
    j["inflow"] = column(r.flow->inflow, false);
    j["inflow_sem"] = column(r.flow->inflow, true);
    j["outflow"] = column(r.flow->outflow, false);
    j["outflow_sem"] = column(r.flow->outflow, true);
  }
  if (!r.density_series.empty()) {
    auto& d = j["densities"] = nlohmann::json::array();
    auto& c = j["currents"] = nlohmann::json::array();
    for (std::size_t t = 0; t < r.density_series.size(); ++t) {
      d.push_back(column(r.density_series[t], false));
      c.push_back(column(r.current_series[t], false));
    }
  }
  return j;
}

/// `<base>/<label>-s<seed>`, or with a numeric suffix if that already exists.
inline std::filesystem::path fresh_run_directory(const std::filesystem::path& base, const std::string& label) {
  std::filesystem::create_directories(base);
  for (int k = 1;; ++k) {
    std::filesystem::path dir = base / (k == 1 ? label : label + "-" + std::to_string(k));
    if (std::filesystem::create_directory(dir)) return dir;
  }
}

inline std::string utc_now() {
  const std::time_t t = std::time(nullptr);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

/// Writes snapshot.csv, snapshot.json, records.ndjson, series.json and
/// manifest.json into a new directory and returns its path.
inline std::filesystem::path write_run(const RunResult& r) {
  const std::string label = (r.config.preset.empty() ? std::string("custom") : r.config.preset) + "-" +
                            backend_name(r.config.backend) + "-s" + std::to_string(r.config.seed);
  const auto dir = fresh_run_directory(r.config.output_dir, label);
  std::vector<std::string> files;
  auto open = [&](const std::string& name) {
    files.push_back(name);
    std::ofstream f(dir / name);
    if (!f) throw std::runtime_error("cannot write " + (dir / name).string());
    return f;
  };
  const bool empty = r.samples.rows() == 0 && !r.ssep;
  {
    auto f = open("snapshot.csv");
    write_snapshot_csv(f, r);
  }
  if (!empty) {
    {
      auto f = open("snapshot.json");
      f << summary_json(r).dump(2) << '\n';
    }
    if (!r.records.empty()) {
      auto f = open("records.ndjson");
      write_ndjson(f, r.records);
    }
    if (r.flow || !r.density_series.empty()) {
      auto f = open("series.json");
      f << series_json(r).dump() << '\n';
    }
  }
  nlohmann::json m;
  m["program"] = "nessim";
  m["version"] = NESSIM_VERSION;
  m["config"] = to_json(r.config);
  m["simulated_params"] = to_json(r.params);
  m["rng"] = "trajectory i draws from counter stream (seed, i)";
  m["threads"] = r.config.threads ? r.config.threads : worker_count();
  m["wall_seconds"] = r.wall_seconds;
  m["finished_utc"] = utc_now();
  m["files"] = files;
  std::ofstream(dir / "manifest.json") << m.dump(2) << '\n';
  return dir;
}

// ---------------------------------------------------------------------------
// Stationarity

struct Settling {
  std::string observable;
  int settled_at = -1;  // first period (1-based) from which the series stays put
  bool settled = false;
  double value = 0;     // trailing mean at the final period
};

/// Trailing mean r_t over up to `window` periods ending at t. The series has
/// settled at s if |r_t − r_{t−w}| ≤ rel_tol·max(|r_t|, |r_{t−w}|) + abs_tol for
/// every t with t − w ≥ s; at least one such comparison must exist.
inline Settling settling(const std::string& name, const std::vector<double>& x, int window = 3, double rel_tol = 0.01,
                         double abs_tol = 1e-12) {
  if (window < 1) throw std::invalid_argument("window must be positive");
  const int T = static_cast<int>(x.size());
  if (T < window + 1)
    throw std::invalid_argument("series '" + name + "' has " + std::to_string(T) + " periods, fewer than one window + 1");
  std::vector<double> r(static_cast<std::size_t>(T + 1), 0.0);  // 1-based
  for (int t = 1; t <= T; ++t) {
    const int lo = std::max(1, t - window + 1);
    double s = 0;
    for (int u = lo; u <= t; ++u) s += x[u - 1];
    r[t] = s / (t - lo + 1);
  }
  Settling out;
  out.observable = name;
  out.value = r[T];
  // Walk back from the end while the comparisons hold.
  int s = T - window;
  for (int t = T; t > window; --t) {
    const double a = r[t], b = r[t - window];
    if (std::abs(a - b) > rel_tol * std::max(std::abs(a), std::abs(b)) + abs_tol) break;
    s = t - window;
  }
  const int last_start = T - window;
  const double a = r[T], b = r[last_start];
  if (std::abs(a - b) <= rel_tol * std::max(std::abs(a), std::abs(b)) + abs_tol) {
    out.settled = true;
    out.settled_at = s;
  }
  return out;
}

/// Settling table for every series stored in a run's series.json.
inline std::vector<Settling> stationarity_report(const nlohmann::json& series, int window = 3, double rel_tol = 0.01) {
  std::vector<Settling> out;
  auto one = [&](const std::string& name, const std::vector<double>& x) { out.push_back(settling(name, x, window, rel_tol)); };
  if (series.contains("inflow")) one("inflow", series["inflow"].get<std::vector<double>>());
  if (series.contains("outflow")) one("outflow", series["outflow"].get<std::vector<double>>());
  if (series.contains("densities")) {
    const auto d = series["densities"].get<std::vector<std::vector<double>>>();
    const auto c = series["currents"].get<std::vector<std::vector<double>>>();
    const std::size_t n = d.empty() ? 0 : d.front().size(), nb = c.empty() ? 0 : c.front().size();
    std::vector<double> filling, total_current;
    for (std::size_t t = 0; t < d.size(); ++t) {
      double f = 0, a = 0;
      for (double v : d[t]) f += v / n;
      for (double v : c[t]) a += std::abs(v);
      filling.push_back(f);
      total_current.push_back(a);
    }
    one("filling", filling);
    one("total_current_magnitude", total_current);
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double> x;
      for (const auto& row : d) x.push_back(row[i]);
      one("density[" + std::to_string(i) + "]", x);
    }
    for (std::size_t b = 0; b < nb; ++b) {
      std::vector<double> x;
      for (const auto& row : c) x.push_back(row[b]);
      one("current[" + std::to_string(b) + "]", x);
    }
  }
  if (out.empty()) throw ConfigError("run has no time series");
  return out;
}

inline std::vector<Settling> stationarity_report(const std::filesystem::path& run_dir, int window = 3,
                                                 double rel_tol = 0.01) {
  const auto path = run_dir / "series.json";
  if (!std::filesystem::exists(path)) throw ConfigError(run_dir.string() + " has no series.json");
  return stationarity_report(read_json_file(path), window, rel_tol);
}

inline void write_settling_csv(std::ostream& os, const std::vector<Settling>& rows) {
  os << "observable,settled_at,settled,final_mean\n";
  for (const auto& s : rows)
    os << s.observable << ',' << s.settled_at << ',' << (s.settled ? 1 : 0) << ',' << format_double(s.value) << '\n';
}

// ---------------------------------------------------------------------------
// Sweeps

enum class SweepAxis { p, dt, phi, gamma };

inline SweepAxis parse_axis(const std::string& s) {
  if (s == "p") return SweepAxis::p;
  if (s == "dt") return SweepAxis::dt;
  if (s == "phi") return SweepAxis::phi;
  if (s == "gamma") return SweepAxis::gamma;
  throw ConfigError("unknown sweep axis '" + s + "' (p, dt, phi, gamma)");
}

inline const char* axis_name(SweepAxis a) {
  switch (a) {
    case SweepAxis::p: return "p";
    case SweepAxis::dt: return "dt";
    case SweepAxis::phi: return "phi";
    case SweepAxis::gamma: return "gamma";
  }
  return "?";
}

/// Parameters at one grid point. Moving Δt keeps γ = p/Δt fixed.
inline ModelParams sweep_point(const ModelParams& base, SweepAxis axis, double v) {
  ModelParams mp = base;
  switch (axis) {
    case SweepAxis::p: mp.p = v; break;
    case SweepAxis::dt:
      mp.dt = v;
      mp.p = base.gamma() * v;
      break;
    case SweepAxis::phi: mp.phi = v; break;
    case SweepAxis::gamma: mp.p = v * base.dt; break;
  }
  return mp;
}

struct SweepOptions {
  double max_time = 2000.0;  // gaussian: time budget per point
  int window = 50;           // gaussian: minimum stationarity window in periods
  int settle_window = 3;     // other backends: stationarity window of the inflow series
};

/// One run per grid value; rows keyed by the axis value. The gaussian backend
/// iterates the ensemble map to stationarity; the others run `base.params.m`
/// periods and report the final rolling inflow.
inline void sweep(std::ostream& os, const RunConfig& base, SweepAxis axis, const std::vector<double>& grid,
                  const SweepOptions& opt = {}) {
  if (base.backend == Backend::ssep) throw ConfigError("sweeps are not defined for the ssep backend");
  os << "axis,value,dt,p,gamma,phi,current,stderr,steps_to_stationarity,converged,filling,filling_stderr\n";
  for (double v : grid) {
    RunConfig c = base;
    c.params = sweep_point(base.params, axis, v);
    validate(c);
    SweepPoint pt;
    MeanErr filling;
    if (c.backend == Backend::gaussian) {
      const Lattice lat = Lattice::square(c.params.width, c.params.height);
      pt = ensemble_ness_current(lat, c.params, static_cast<int>(std::ceil(opt.max_time / c.params.dt)), opt.window);
      filling = {std::numeric_limits<double>::quiet_NaN(), 0.0};
    } else {
      c.series = false;
      const RunResult r = execute(c);
      pt.dt = c.params.dt;
      pt.p = c.params.p;
      pt.gamma = c.params.gamma();
      if (r.flow) {
        pt.current = r.flow->inflow_rolling.back().mean;
        pt.sem = r.flow->inflow_rolling.back().sem;
        std::vector<double> x;
        for (const auto& m : r.flow->inflow) x.push_back(m.mean);
        if (static_cast<int>(x.size()) > opt.settle_window) {
          const Settling st = settling("inflow", x, opt.settle_window);
          pt.converged = st.settled;
          pt.steps_to_stationarity = st.settled_at;
        }
      }
      filling = r.samples.rows() ? mean_filling(r.samples) : MeanErr{};
    }
    os << axis_name(axis) << ',' << format_double(v) << ',' << format_double(c.params.dt) << ','
       << format_double(c.params.p) << ',' << format_double(c.params.gamma()) << ',' << format_double(c.params.phi)
       << ',' << format_double(pt.current) << ',' << format_double(pt.sem) << ',' << pt.steps_to_stationarity << ','
       << (pt.converged ? 1 : 0) << ',' << format_double(filling.mean) << ',' << format_double(filling.sem) << '\n';
  }
}

// ---------------------------------------------------------------------------
// Bootstrap of biased initial densities

struct BootstrapOptions {
  std::uint64_t trajectories = 1000;
  int period_factor = 3;  // periods = factor · preset m
  std::uint64_t seed = 20240501;
  unsigned threads = 0;
};

/// NESS densities of each biased preset estimated from a uniformly random
/// start run for `period_factor` times the preset's period count.
inline nlohmann::json bootstrap(const BootstrapOptions& opt = {}) {
  nlohmann::json out;
  out["format"] = 1;
  out["version"] = NESSIM_VERSION;
  out["procedure"] = {{"init", "random"},
                      {"period_factor", opt.period_factor},
                      {"trajectories", opt.trajectories},
                      {"seed", opt.seed}};
  for (const Preset& p : presets()) {
    if (!p.biased) continue;
    RunConfig c;
    c.params = p.params;
    c.params.init = InitKind::random_product;
    c.params.m = p.params.m * opt.period_factor;
    c.trajectories = opt.trajectories;
    c.seed = opt.seed;
    c.threads = opt.threads;
    const RunResult r = execute(c);
    std::vector<double> dens, sem;
    for (int i = 0; i < r.lattice.num_sites(); ++i) {
      const MeanErr m = r.samples.density(i);
      dens.push_back(std::clamp(m.mean, 0.0, 1.0));
      sem.push_back(m.sem);
    }
    out["presets"][p.name] = {{"densities", dens}, {"sem", sem}, {"periods", c.params.m}, {"params", to_json(c.params)}};
  }
  return out;
}

}  // namespace nessim
