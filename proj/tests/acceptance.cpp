// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <optional>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "dense_oracle.hpp"
#include "nessim/nessim.hpp"

using namespace nessim;
using oracle::Mat;
using oracle::Vec;

namespace {

// Tolerances and sizes, fixed here so that no run can loosen them.
constexpr double kKrausTol = 1e-12;
constexpr double kSigma = 3.0;
constexpr std::uint64_t kUnravelTrajectories = 20000;
constexpr double kLindbladTol = 1e-3;
constexpr double kSlopeTol = 0.1;
constexpr double kEncodingTol = 1e-8;
constexpr double kStabilizerTol = 1e-10;
constexpr double kGaussianTol = 1e-10;
constexpr std::uint64_t kNessTrajectories = 5000;
constexpr double kFlatTol = 0.03;
constexpr double kDiagonalShare = 0.5;
constexpr double kBoundaryShare = 0.6;
constexpr std::uint64_t kSsepTrajectories = 100000;
constexpr double kRoundTripTol = 1e-10;

struct Outcome {
  bool pass = true;
  std::ostringstream detail;
  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [failed: " << what << "]";
    }
  }
};

int failures = 0;

void report(const char* id, const char* title, const std::function<void(Outcome&)>& body) {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    body(o);
  } catch (const std::exception& e) {
    o.pass = false;
    o.detail << " [exception: " << e.what() << "]";
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (!o.pass) ++failures;
  std::printf("criterion %-3s %s  %s:%s (%.1f s)\n", id, o.pass ? "PASS" : "FAIL", title, o.detail.str().c_str(), secs);
  std::fflush(stdout);
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

double combined(const MeanErr& a, const MeanErr& b) { return std::sqrt(a.sem * a.sem + b.sem * b.sem); }

bool within(const MeanErr& a, const MeanErr& b, double k = kSigma) {
  return std::abs(a.mean - b.mean) <= k * combined(a, b);
}

Vec to_vec(const StateVector& s) {
  Vec v(static_cast<Eigen::Index>(s.dim()));
  for (std::size_t i = 0; i < s.dim(); ++i) v(static_cast<Eigen::Index>(i)) = s[i];
  return v;
}

ModelParams hcb_params(int w, int h, double dt, double p, int m) {
  ModelParams mp;
  mp.width = w;
  mp.height = h;
  mp.dt = dt;
  mp.p = p;
  mp.m = m;
  return mp;
}

// ---------------------------------------------------------------------------

void kraus_completeness(Outcome& o) {
  double worst = 0;
  for (int k = 0; k <= 10; ++k) worst = std::max(worst, kraus_completeness_error(kraus_set(k / 10.0)));
  o.detail << " max |sum K^dag K - 1| = " << fmt(worst) << " over 11 values of p";
  o.require(worst <= kKrausTol, "completeness error above " + fmt(kKrausTol));
}

void unravelling(Outcome& o) {
  RunConfig c;
  c.params = hcb_params(2, 2, 0.25, 0.5, 30);
  c.trajectories = kUnravelTrajectories;
  c.seed = 2;
  c.series = true;
  const RunResult traj = execute(c);
  c.backend = Backend::cptp;
  const RunResult dense = execute(c);
  double worst = 0;
  int misses = 0;
  for (int t = 0; t < 30; ++t)
    for (int i = 0; i < 4; ++i) {
      const MeanErr a = traj.density_series[t][i], b = dense.density_series[t][i];
      const double gap = std::abs(a.mean - b.mean);
      const double z = a.sem > 0 ? gap / a.sem : (gap > 1e-12 ? 1e9 : 0.0);
      worst = std::max(worst, z);
      misses += z > kSigma;
    }
  o.detail << " largest deviation " << fmt(worst) << " standard errors over 30 periods x 4 sites";
  o.require(misses == 0, std::to_string(misses) + " comparisons beyond 3 standard errors");
}

/// RK4 integration of the master equation written directly from the jump
/// operators, independent of the library's Lindblad code.
Mat lindblad_rk4(Mat rho, const Mat& H, const std::vector<Mat>& L, double T, double h) {
  const oracle::cd mi(0, -1);
  auto rhs = [&](const Mat& r) {
    Mat out = mi * (H * r - r * H);
    for (const Mat& l : L) {
      const Mat ld = l.adjoint();
      out += l * r * ld - 0.5 * (ld * l * r + r * ld * l);
    }
    return out;
  };
  const int steps = static_cast<int>(std::llround(T / h));
  for (int s = 0; s < steps; ++s) {
    const Mat k1 = rhs(rho), k2 = rhs(rho + 0.5 * h * k1), k3 = rhs(rho + 0.5 * h * k2), k4 = rhs(rho + h * k3);
    rho += (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4);
  }
  return rho;
}

void lindblad_limit(Outcome& o) {
  const double gamma = 2, T = 5;
  const Lattice lat = Lattice::square(2, 2);
  const int n = 4, s = lat.source(), d = lat.drain();
  const double g = std::sqrt(gamma);
  const std::vector<Mat> L = {oracle::embed(n, {{s, g * oracle::N()}}), oracle::embed(n, {{s, g * oracle::Splus()}}),
                              oracle::embed(n, {{d, g * (oracle::I2() - oracle::N())}}),
                              oracle::embed(n, {{d, g * oracle::Sminus()}})};
  const Mat H = oracle::hamiltonian(oracle::Geometry(2, 2), 1.0, 0.0, 0.0, false);
  const DensityMatrix start = DensityMatrix::driven_infinite_temperature(lat);
  const Mat exact = lindblad_rk4(start.matrix(), H, L, T, 1e-3);

  std::vector<double> err;
  for (double dt : {0.01, 0.005}) {
    const ModelParams mp = hcb_params(2, 2, dt, gamma * dt, 0);
    const DenseMatrix U = trotter_propagator(TrotterStep(lat, hcb_encoding(lat), mp), n);
    DensityMatrix rho = start;
    const int steps = static_cast<int>(std::llround(T / dt));
    for (int t = 0; t < steps; ++t) apply_cptp_step(rho, U, mp.p, s, d);
    double worst = 0;
    for (int i = 0; i < n; ++i) {
      const double ref = (oracle::number_op(n, i) * exact).trace().real();
      worst = std::max(worst, std::abs(rho.densities(n)[i] - ref));
    }
    err.push_back(worst);
  }
  const double slope = std::log2(err[0] / err[1]);
  o.detail << " density error " << fmt(err[0]) << " at dt=0.01, " << fmt(err[1]) << " at dt=0.005, slope "
           << fmt(slope);
  o.require(err[0] < kLindbladTol, "error at dt=0.01 not below 1e-3");
  o.require(std::abs(slope - 1.0) <= kSlopeTol, "convergence slope outside 1.0 +- 0.1");
}

void trotter_order(Outcome& o) {
  const Lattice lat = Lattice::square(2, 3);
  const Mat H = oracle::hamiltonian(oracle::Geometry(2, 3), 1.0, 0.0, 0.0, false);
  const std::vector<double> dts = {0.4, 0.2, 0.1, 0.05};
  // Normalized random state so the error is not limited to a particular sector.
  RngStream rng(44, 0);
  StateVector s0(6);
  {
    std::vector<cplx> a(64);
    double norm = 0;
    for (auto& x : a) {
      x = cplx(rng.uniform() - 0.5, rng.uniform() - 0.5);
      norm += std::norm(x);
    }
    s0 = StateVector::basis(6, 0);
    for (std::size_t i = 0; i < 64; ++i) s0.amplitudes()[i] = a[i] / std::sqrt(norm);
  }
  std::vector<double> lx, ly;
  for (double dt : dts) {
    ModelParams mp = hcb_params(2, 3, dt, 0, 1);
    StateVector s = s0;
    TrotterStep(lat, hcb_encoding(lat), mp).apply(s);
    const double e = (oracle::expm_hermitian(H, dt) * to_vec(s0) - to_vec(s)).norm();
    lx.push_back(std::log(dt));
    ly.push_back(std::log(e));
  }
  // Least-squares slope.
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    mx += lx[i] / lx.size();
    my += ly[i] / ly.size();
  }
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    sxy += (lx[i] - mx) * (ly[i] - my);
    sxx += (lx[i] - mx) * (lx[i] - mx);
  }
  const double slope = sxy / sxx;
  o.detail << " log-log slope " << fmt(slope) << " (errors " << fmt(std::exp(ly.front())) << " .. "
           << fmt(std::exp(ly.back())) << ")";
  o.require(std::abs(slope - 2.0) <= kSlopeTol, "slope outside 2.0 +- 0.1");
}

void encoding_equivalence(Outcome& o) {
  const Lattice lat = Lattice::square(4, 4);
  const Encoding dk = derby_klassen_encoding(lat), jw = jordan_wigner_encoding(lat);
  double worst = 0, worst_stab = 0;
  for (double V : {0.0, 1.0})
    for (double phi : {0.0, std::numbers::pi / 2}) {
      ModelParams mp;
      mp.statistics = Statistics::fermion;
      mp.V = V;
      mp.phi = phi;
      mp.dt = 0.29;
      mp.init = InitKind::bitstring;
      mp.init_bits = 0b0110'1001'0101'1010;
      RngStream r1(1, 1), r2(1, 1);
      StateVector a = prepare_initial_state(mp, lat, dk, r1).psi;
      StateVector b = prepare_initial_state(mp, lat, jw, r2).psi;
      const TrotterStep sa(lat, dk, mp, true), sb(lat, jw, mp);
      worst_stab = std::max(worst_stab, std::abs(a.expect_pauli(*dk.stabilizer) - 1.0));
      for (int step = 0; step < 5; ++step) {
        sa.apply(a);
        sb.apply(b);
        const auto na = site_densities(a, 16), nb = site_densities(b, 16);
        const auto ja = bond_currents(a, lat, dk, mp), jb = bond_currents(b, lat, jw, mp);
        for (int i = 0; i < 16; ++i) worst = std::max(worst, std::abs(na[i] - nb[i]));
        for (int k = 0; k < lat.num_bonds(); ++k) worst = std::max(worst, std::abs(ja[k] - jb[k]));
        worst_stab = std::max(worst_stab, std::abs(a.expect_pauli(*dk.stabilizer) - 1.0));
      }
    }
  o.detail << " max density/current gap " << fmt(worst) << ", max |<stabilizer> - 1| " << fmt(worst_stab);
  o.require(worst <= kEncodingTol, "encodings disagree");
  o.require(worst_stab <= kStabilizerTol, "stabilizer drifted");
}

void gaussian_sync(Outcome& o) {
  ModelParams mp = hcb_params(2, 3, 0.27, 0.54, 12);
  mp.statistics = Statistics::fermion;
  mp.fermion_encoding = EncodingKind::jordan_wigner;
  const GaussianSimulator gs(mp);
  const TrajectorySimulator sv(mp);
  TrajectoryOptions opt;
  opt.record_series = true;
  double worst = 0;
  bool records = true;
  for (std::uint64_t s = 0; s < 100; ++s) {
    const GaussianTrajectory g = gs.run(5, s, opt);
    const TrajectoryResult r = sv.run(5, s, opt);
    records = records && g.record.periods == r.record.periods;
    for (int t = 0; t < mp.m; ++t)
      for (int i = 0; i < 6; ++i) worst = std::max(worst, std::abs(g.density_series[t][i] - r.density_series[t][i]));
  }
  o.detail << " max density gap " << fmt(worst) << " over 100 trajectories x 12 periods";
  o.require(worst <= kGaussianTol, "densities disagree");
  o.require(records, "drive outcomes diverged");
}

void optimal_rate(Outcome& o) {
  ModelParams base;
  base.statistics = Statistics::fermion;
  base.fermion_encoding = EncodingKind::jordan_wigner;
  base.dt = 0.05;
  const std::vector<double> grid = {0.5, 1, 1.5, 2, 2.5, 3, 4};
  const auto pts = gamma_sweep(base, {base.dt}, grid);
  std::size_t best = 0;
  bool converged = true;
  o.detail << " currents";
  for (std::size_t i = 0; i < pts.size(); ++i) {
    o.detail << ' ' << fmt(pts[i].current);
    if (pts[i].current > pts[best].current) best = i;
    converged = converged && pts[i].converged;
  }
  o.detail << "; argmax gamma = " << grid[best];
  o.require(converged, "a point did not reach stationarity");
  o.require(std::abs(grid[best] - 2.0) <= 0.5 + 1e-12, "argmax more than one grid step from 2");
  o.require(pts.back().current < pts[best].current, "no suppression at gamma = 4");
}

// ---------------------------------------------------------------------------
// Steady-state runs shared by criteria 8-10

struct NessRun {
  std::string label;
  RunResult result;
  Snapshot snap;
};

NessRun ness(const std::string& label, const std::string& preset, std::uint64_t seed, std::optional<double> phi = {}) {
  RunConfig c;
  c.preset = preset;
  c.params = preset_params(find_preset(preset), NESSIM_DATA_DIR);
  if (phi) c.params.phi = *phi;
  c.trajectories = kNessTrajectories;
  c.seed = seed;
  NessRun r{label, execute(c), {}};
  r.snap = make_snapshot(r.result.samples, c.params.m, "trajectory");
  std::printf("  run %-22s %llu trajectories, %.0f s\n", label.c_str(),
              static_cast<unsigned long long>(r.result.samples.rows()), r.result.wall_seconds);
  std::fflush(stdout);
  return r;
}

MeanErr region_mean(const Samples& s, const Lattice& lat, bool block) {
  std::vector<double> w(static_cast<std::size_t>(s.width()), 0.0);
  int count = 0;
  for (int i = 0; i < lat.num_sites(); ++i) count += in_source_block(lat, i) == block;
  for (int i = 0; i < lat.num_sites(); ++i)
    if (in_source_block(lat, i) == block) w[i] = 1.0 / count;
  return s.linear(w);
}

MeanErr block_minus_edges(const Samples& s, const Lattice& lat) {
  std::vector<double> w(static_cast<std::size_t>(s.width()), 0.0);
  int nb = 0;
  for (int i = 0; i < lat.num_sites(); ++i) nb += in_source_block(lat, i);
  const int ne = lat.num_sites() - nb;
  for (int i = 0; i < lat.num_sites(); ++i) w[i] = in_source_block(lat, i) ? 1.0 / nb : -1.0 / ne;
  return s.linear(w);
}

}  // namespace

int main() {
  std::printf("acceptance suite, version %s, %u worker(s)\n", NESSIM_VERSION, worker_count());

  report("1", "Kraus completeness", kraus_completeness);
  report("2", "trajectory average equals the Kraus map", unravelling);
  report("3", "Lindblad limit", lindblad_limit);
  report("4", "Trotter order", trotter_order);
  report("5", "compact encoding equals Jordan-Wigner", encoding_equivalence);
  report("6", "Gaussian backend equals the state vector", gaussian_sync);
  report("7", "optimal drive rate", optimal_rate);

  std::vector<NessRun> runs;
  report("8", "steady-state phenomenology", [&](Outcome& o) {
    runs.push_back(ness("hcb-v0", "hcb-v0", 101));
    runs.push_back(ness("hcb-v0-flux", "hcb-v0", 102, std::numbers::pi / 2));
    runs.push_back(ness("hcb-v1.5", "hcb-v1.5", 103));
    runs.push_back(ness("fermion-v0", "fermion-v0", 104));
    runs.push_back(ness("fermion-v0-flux", "fermion-v0-flux", 105));
    runs.push_back(ness("fermion-v1-flux", "fermion-v1-flux", 106));
    const Lattice& lat = runs[0].result.lattice;

    // (a) taxicab profile of bosons falls monotonically
    const auto prof = density_profile(runs[0].result.samples, lat);
    bool decreasing = true;
    o.detail << " (a) profile";
    for (std::size_t d = 0; d < prof.size(); ++d) {
      o.detail << ' ' << fmt(prof[d].mean);
      if (d > 0) decreasing = decreasing && prof[d].mean < prof[d - 1].mean;
    }
    o.require(decreasing, "(a) profile not strictly decreasing");

    // (b) free fermions: flat interior, current through the diagonal
    const auto fprof = density_profile(runs[3].result.samples, lat);
    double lo = 1, hi = 0;
    for (int d = 1; d <= 5; ++d) {
      lo = std::min(lo, fprof[d].mean);
      hi = std::max(hi, fprof[d].mean);
    }
    const double diag = current_fraction(runs[3].snap, lat, [&](int b) { return lat.is_diagonal_bond(b); });
    o.detail << "; (b) interior spread " << fmt(hi - lo) << ", diagonal share " << fmt(diag);
    o.require(hi - lo <= kFlatTol, "(b) interior profile not flat");
    o.require(diag > kDiagonalShare, "(b) diagonal share not above 0.5");

    // (c) flux pushes fermion current to the boundary
    const double edge = current_fraction(runs[4].snap, lat, [&](int b) { return lat.is_boundary_bond(b); });
    o.detail << "; (c) boundary share " << fmt(edge);
    o.require(edge > kBoundaryShare, "(c) boundary share not above 0.6");

    // (d) boson densities ignore the flux
    double zmax = 0;
    for (int i = 0; i < lat.num_sites(); ++i) {
      const MeanErr a = runs[0].snap.densities[i], b = runs[1].snap.densities[i];
      const double sd = combined(a, b);
      zmax = std::max(zmax, sd > 0 ? std::abs(a.mean - b.mean) / sd : 0.0);
    }
    o.detail << "; (d) max flux deviation " << fmt(zmax) << " sigma";
    o.require(zmax <= kSigma, "(d) densities depend on flux");

    // (e) interacting bosons fill up and deplete the drain edges
    const MeanErr fill = mean_filling(runs[2].result.samples);
    const MeanErr block = region_mean(runs[2].result.samples, lat, true);
    const MeanErr edges = region_mean(runs[2].result.samples, lat, false);
    o.detail << "; (e) filling " << fmt(fill.mean) << ", block " << fmt(block.mean) << " vs edges " << fmt(edges.mean)
             << " (difference " << fmt(block_minus_edges(runs[2].result.samples, lat).mean) << ")";
    o.require(fill.mean > 0.5, "(e) filling not above 0.5");
    o.require(edges.mean < block.mean, "(e) drain edges not below the source block");
  });

  report("9", "imbalances", [&](Outcome& o) {
    if (runs.size() != 6) throw std::runtime_error("steady-state runs missing");
    const Lattice& lat = runs[0].result.lattice;
    for (const NessRun& r : runs) {
      if (r.label == "hcb-v0-flux") continue;
      const Imbalances im = imbalances(r.result.samples, lat);
      o.detail << ' ' << r.label << " dN " << fmt(im.dN.mean) << "+-" << fmt(im.dN.sem) << " dJ " << fmt(im.dJ.mean)
               << "+-" << fmt(im.dJ.sem) << ';';
      if (r.label == "fermion-v1-flux") {
        o.require(im.dN.mean > kSigma * im.dN.sem, r.label + " dN not positive beyond 3 sigma");
      } else {
        o.require(std::abs(im.dN.mean) < kSigma * im.dN.sem, r.label + " dN nonzero");
        o.require(std::abs(im.dJ.mean) < kSigma * im.dJ.sem, r.label + " dJ nonzero");
      }
    }
  });

  report("10", "current bookkeeping", [&](Outcome& o) {
    if (runs.size() != 6) throw std::runtime_error("steady-state runs missing");
    for (const NessRun& r : runs) {
      const MeanErr in = r.result.flow->inflow_rolling.back(), out = r.result.flow->outflow_rolling.back();
      const auto [first, last] = interior_cuts(r.result.lattice);
      const MeanErr cut = cut_averaged_current(r.result.samples, r.result.lattice, first, last);
      o.detail << ' ' << r.label << " in " << fmt(in.mean) << " out " << fmt(out.mean) << " cut " << fmt(cut.mean)
               << ';';
      o.require(within(in, out), r.label + " inflow != outflow");
      o.require(within(in, cut), r.label + " inflow != cut current");
      o.require(within(out, cut), r.label + " outflow != cut current");
    }
  });

  report("11", "classical exclusion process", [](Outcome& o) {
    SsepConfig c;
    c.V = 1;
    c.gamma = 2;
    c.steps = 300;
    c.trajectories = kSsepTrajectories;
    c.seed = 7;
    const SsepField f = ssep_ness(c);
    const Chi2Result chi = detailed_balance_test(2, 2, 1.0, 2, 1000000, 11);
    o.detail << " block " << fmt(f.source_block.mean) << " vs drain edges " << fmt(f.drain_edges.mean)
             << "; chi2 " << fmt(chi.chi2) << " (dof " << chi.dof << ", critical " << fmt(chi.critical) << ")";
    o.require(f.source_block.mean > f.drain_edges.mean, "source block not denser than drain edges");
    o.require(chi.pass, "detailed balance rejected");
  });

  report("12", "emitter round trip", [](Outcome& o) {
    RngStream cfg(99, 0);
    double worst = 0;
    int record_mismatch = 0;
    for (int trial = 0; trial < 100; ++trial) {
      ModelParams mp;
      mp.width = 2;
      mp.height = 2;
      mp.statistics = cfg.uniform() < 0.5 ? Statistics::hcb : Statistics::fermion;
      mp.fermion_encoding = EncodingKind::jordan_wigner;
      mp.V = 3 * cfg.uniform() - 1;
      mp.phi = 2 * std::numbers::pi * cfg.uniform();
      mp.dt = 0.05 + 0.4 * cfg.uniform();
      mp.p = cfg.uniform();
      mp.m = static_cast<int>(cfg.below(8));
      mp.init = cfg.uniform() < 0.5 ? InitKind::random_product : InitKind::bitstring;
      mp.init_bits = cfg.below(16);
      TrajectoryOptions opt;
      opt.coins = CoinMode::circuit;
      const TrajectoryResult direct = TrajectorySimulator(mp, true).run(3, trial, opt);
      RngStream rng(3, trial);
      const Interpretation in = interpret(emit(mp, FinalShot::none), rng);
      for (std::size_t i = 0; i < in.psi.dim(); ++i) {
        const cplx ref = i < direct.psi.dim() ? direct.psi[i] : cplx(0, 0);
        worst = std::max(worst, std::abs(in.psi[i] - ref));
      }
      record_mismatch += !(in.record.periods == direct.record.periods);
    }
    o.detail << " max amplitude gap " << fmt(worst) << " over 100 configurations";
    o.require(worst <= kRoundTripTol, "amplitudes differ");
    o.require(record_mismatch == 0, std::to_string(record_mismatch) + " outcome logs differ");
  });

  std::printf("%d criterion(s) failed\n", failures);
  return failures == 0 ? 0 : 1;
}
