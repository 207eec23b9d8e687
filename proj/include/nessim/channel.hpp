#pragma once

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "encoding.hpp"
#include "lattice.hpp"
#include "model.hpp"
#include "observables.hpp"
#include "rng.hpp"
#include "state_vector.hpp"

namespace nessim {

using DenseMatrix = Eigen::MatrixXcd;

// ---------------------------------------------------------------------------
// Kraus operators of one drive period

/// K = K^s_l ⊗ K^d_m on the (source, drain) pair, local index bit(s) + 2·bit(d).
struct KrausOp {
  int l = 0;
  int m = 0;
  Mat4 local{};
};

struct KrausSet {
  double p = 0;
  std::vector<KrausOp> ops;
};

inline std::array<Mat2, 3> source_kraus(double p) {
  const double a = std::sqrt(1 - p), b = std::sqrt(p);
  return {Mat2{a, 0, 0, a},    // √(1-p) 1
          Mat2{0, 0, b, 0},    // √p c†_s
          Mat2{0, 0, 0, b}};   // √p n_s
}

inline std::array<Mat2, 3> drain_kraus(double p) {
  const double a = std::sqrt(1 - p), b = std::sqrt(p);
  return {Mat2{a, 0, 0, a},    // √(1-p) 1
          Mat2{b, 0, 0, 0},    // √p (1 - n_d)
          Mat2{0, b, 0, 0}};   // √p c_d
}

inline KrausSet kraus_set(double p) {
  if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("drive probability must lie in [0,1]");
  KrausSet ks;
  ks.p = p;
  const auto S = source_kraus(p), D = drain_kraus(p);
  for (int l = 0; l < 3; ++l)
    for (int m = 0; m < 3; ++m) ks.ops.push_back({l, m, gates::kron(D[m], S[l])});
  return ks;
}

/// max |(Σ K†K − 1)_ab| over the 4×4 two-site block.
inline double kraus_completeness_error(const KrausSet& ks) {
  double worst = 0;
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) {
      cplx s = 0;
      for (const KrausOp& k : ks.ops)
        for (int t = 0; t < 4; ++t) s += std::conj(k.local[t * 4 + r]) * k.local[t * 4 + c];
      worst = std::max(worst, std::abs(s - (r == c ? 1.0 : 0.0)));
    }
  return worst;
}

// ---------------------------------------------------------------------------
// Dense density-matrix oracle (at most 10 qubits)
//
// The drive acts on qubits directly. For fermions this equals the fermionic
// Kraus map: every state reached from a product state is block diagonal in
// particle number, so the Jordan–Wigner string attached to c_d only ever
// contributes a sign that cancels between K and K†.

class DensityMatrix {
 public:
  static constexpr int kMaxQubits = 10;

  DensityMatrix() = default;
  explicit DensityMatrix(int n_qubits) : n_(n_qubits) {
    if (n_qubits < 1 || n_qubits > kMaxQubits)
      throw std::invalid_argument("dense oracle limited to " + std::to_string(kMaxQubits) + " qubits");
    rho_ = DenseMatrix::Zero(dim(), dim());
    rho_(0, 0) = 1;
  }

  static DensityMatrix pure(const StateVector& psi) {
    DensityMatrix d(psi.n_qubits());
    Eigen::Map<const Eigen::VectorXcd> v(psi.amplitudes().data(), static_cast<Eigen::Index>(psi.dim()));
    d.rho_ = v * v.adjoint();
    return d;
  }

  /// Infinite-temperature bulk with the source filled and the drain empty.
  static DensityMatrix driven_infinite_temperature(const Lattice& lat) {
    DensityMatrix d(lat.num_sites());
    d.rho_.setZero();
    const std::size_t sb = std::size_t{1} << lat.source(), db = std::size_t{1} << lat.drain();
    const double w = 1.0 / static_cast<double>(std::size_t{1} << (lat.num_sites() - 2));
    for (std::size_t i = 0; i < d.dim(); ++i)
      if ((i & sb) && !(i & db)) d.rho_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)) = w;
    return d;
  }

  int n_qubits() const { return n_; }
  std::size_t dim() const { return std::size_t{1} << n_; }
  const DenseMatrix& matrix() const { return rho_; }
  DenseMatrix& matrix() { return rho_; }

  double trace() const { return rho_.trace().real(); }
  double hermiticity_error() const { return (rho_ - rho_.adjoint()).cwiseAbs().maxCoeff(); }
  double min_eigenvalue() const {
    Eigen::SelfAdjointEigenSolver<DenseMatrix> es(rho_, Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff();
  }

  std::vector<double> densities(int n_sites) const {
    std::vector<double> n(static_cast<std::size_t>(n_sites), 0.0);
    for (std::size_t i = 0; i < dim(); ++i) {
      const double w = rho_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)).real();
      for (int q = 0; q < n_sites; ++q)
        if ((i >> q) & 1) n[q] += w;
    }
    return n;
  }

  /// Tr(ρ σ+_j σ-_k Q) for a mapped bond term.
  cplx expect_hop(const BondTerm& t) const {
    const std::size_t jb = std::size_t{1} << t.j, kb = std::size_t{1} << t.k;
    cplx acc = 0;
    for (std::size_t i = 0; i < dim(); ++i) {
      if ((i & (jb | kb)) != kb) continue;
      const double sign = (std::popcount(i & t.zmask) & 1) ? -1.0 : 1.0;
      const std::size_t out = (i ^ t.xmask ^ kb) | jb;
      acc += rho_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(out)) * sign;
    }
    return t.qcoef * acc * t.w;
  }

  double bond_current(const BondTerm& t, double J, double theta) const {
    return 2.0 * J * (std::polar(1.0, theta) * expect_hop(t)).imag();
  }

  /// ρ ← A_q ρ B_q† for single-qubit A, B.
  DenseMatrix sandwich(int q, const Mat2& A, const Mat2& B) const {
    DenseMatrix out = rho_;
    apply_left(out, q, A);
    apply_right_adjoint(out, q, B);
    return out;
  }

  static void apply_left(DenseMatrix& m, int q, const Mat2& A) {
    const std::size_t bit = std::size_t{1} << q;
    for (Eigen::Index c = 0; c < m.cols(); ++c)
      for (std::size_t r = 0; r < static_cast<std::size_t>(m.rows()); ++r) {
        if (r & bit) continue;
        const auto r0 = static_cast<Eigen::Index>(r), r1 = static_cast<Eigen::Index>(r | bit);
        const cplx a0 = m(r0, c), a1 = m(r1, c);
        m(r0, c) = A[0] * a0 + A[1] * a1;
        m(r1, c) = A[2] * a0 + A[3] * a1;
      }
  }

  static void apply_right_adjoint(DenseMatrix& m, int q, const Mat2& B) {
    const std::size_t bit = std::size_t{1} << q;
    for (std::size_t c = 0; c < static_cast<std::size_t>(m.cols()); ++c) {
      if (c & bit) continue;
      const auto c0 = static_cast<Eigen::Index>(c), c1 = static_cast<Eigen::Index>(c | bit);
      for (Eigen::Index r = 0; r < m.rows(); ++r) {
        const cplx a0 = m(r, c0), a1 = m(r, c1);
        m(r, c0) = a0 * std::conj(B[0]) + a1 * std::conj(B[1]);
        m(r, c1) = a0 * std::conj(B[2]) + a1 * std::conj(B[3]);
      }
    }
  }

 private:
  int n_ = 0;
  DenseMatrix rho_;
};

/// Dense H = Σ_b [β_b σ+_j σ-_k Q + h.c. + V n_j n_k] built from the encoding's bond terms.
inline DenseMatrix dense_hamiltonian(const Lattice& lat, const Encoding& enc, const ModelParams& mp) {
  if (enc.n_qubits > DensityMatrix::kMaxQubits) throw std::invalid_argument("register too large for a dense Hamiltonian");
  const std::size_t dim = std::size_t{1} << enc.n_qubits;
  DenseMatrix H = DenseMatrix::Zero(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim));
  for (int b = 0; b < lat.num_bonds(); ++b) {
    const BondTerm& t = enc.terms[b];
    const cplx beta = -mp.J * std::polar(1.0, lat.peierls_phase(b, mp.phi)) * t.w;
    const std::size_t jb = std::size_t{1} << t.j, kb = std::size_t{1} << t.k;
    for (std::size_t i = 0; i < dim; ++i) {
      if ((i & (jb | kb)) == (jb | kb)) H(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)) += mp.V;
      if ((i & (jb | kb)) != kb) continue;
      const double sign = (std::popcount(i & t.zmask) & 1) ? -1.0 : 1.0;
      const std::size_t out = (i ^ t.xmask ^ kb) | jb;
      const cplx v = beta * t.qcoef * sign;
      H(static_cast<Eigen::Index>(out), static_cast<Eigen::Index>(i)) += v;
      H(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(out)) += std::conj(v);
    }
  }
  return H;
}

inline DenseMatrix exact_propagator(const DenseMatrix& H, double dt) {
  Eigen::SelfAdjointEigenSolver<DenseMatrix> es(H);
  Eigen::VectorXcd ph(es.eigenvalues().size());
  for (Eigen::Index i = 0; i < ph.size(); ++i) ph(i) = std::polar(1.0, -es.eigenvalues()(i) * dt);
  return es.eigenvectors() * ph.asDiagonal() * es.eigenvectors().adjoint();
}

/// Matrix of one Trotter step, column by column.
inline DenseMatrix trotter_propagator(const TrotterStep& step, int n_qubits) {
  if (n_qubits > DensityMatrix::kMaxQubits) throw std::invalid_argument("register too large for a dense propagator");
  const std::size_t dim = std::size_t{1} << n_qubits;
  DenseMatrix U(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim));
  for (std::size_t c = 0; c < dim; ++c) {
    StateVector e = StateVector::basis(n_qubits, c);
    step.apply(e);
    for (std::size_t r = 0; r < dim; ++r) U(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = e[r];
  }
  return U;
}

/// ρ ← Σ_k K_k U ρ U† K_k†.
inline void apply_cptp_step(DensityMatrix& rho, const DenseMatrix& U, double p, int source, int drain) {
  if (U.rows() != static_cast<Eigen::Index>(rho.dim())) throw std::invalid_argument("propagator dimension mismatch");
  if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("drive probability must lie in [0,1]");
  rho.matrix() = U * rho.matrix() * U.adjoint();
  for (const auto& [site, ks] : {std::pair{source, source_kraus(p)}, std::pair{drain, drain_kraus(p)}}) {
    DenseMatrix acc = DenseMatrix::Zero(rho.matrix().rows(), rho.matrix().cols());
    for (const Mat2& K : ks) acc += rho.sandwich(site, K, K);
    rho.matrix() = acc;
  }
}

// ---------------------------------------------------------------------------
// Lindblad oracle

struct JumpOperator {
  int site;
  Mat2 op;  // includes √γ
};

inline std::vector<JumpOperator> jump_operators(int source, int drain, double gamma) {
  const double g = std::sqrt(gamma);
  return {{source, Mat2{0, 0, 0, g}},   // √γ n_s
          {source, Mat2{0, 0, g, 0}},   // √γ c†_s
          {drain, Mat2{g, 0, 0, 0}},    // √γ (1 - n_d)
          {drain, Mat2{0, g, 0, 0}}};   // √γ c_d
}

inline DenseMatrix lindblad_rhs(const DenseMatrix& rho, const DenseMatrix& H, const std::vector<JumpOperator>& L) {
  if (H.rows() != rho.rows()) throw std::invalid_argument("Hamiltonian dimension mismatch");
  const cplx mi(0, -1);
  DenseMatrix out = mi * (H * rho - rho * H);
  for (const JumpOperator& j : L) {
    DenseMatrix t = rho;
    DensityMatrix::apply_left(t, j.site, j.op);
    DensityMatrix::apply_right_adjoint(t, j.site, j.op);
    out += t;
    // L†L on one qubit
    const Mat2& a = j.op;
    const Mat2 LdL = {std::conj(a[0]) * a[0] + std::conj(a[2]) * a[2], std::conj(a[0]) * a[1] + std::conj(a[2]) * a[3],
                      std::conj(a[1]) * a[0] + std::conj(a[3]) * a[2], std::conj(a[1]) * a[1] + std::conj(a[3]) * a[3]};
    DenseMatrix left = rho, right = rho;
    DensityMatrix::apply_left(left, j.site, LdL);
    DensityMatrix::apply_right_adjoint(right, j.site, LdL);  // L†L is Hermitian
    out -= 0.5 * (left + right);
  }
  return out;
}

/// Fixed-step classical RK4 from 0 to T.
inline DenseMatrix integrate_lindblad(DenseMatrix rho, const DenseMatrix& H, const std::vector<JumpOperator>& L,
                                      double T, double h) {
  if (!(h > 0)) throw std::invalid_argument("integration step must be positive");
  const int steps = static_cast<int>(std::llround(T / h));
  for (int s = 0; s < steps; ++s) {
    const DenseMatrix k1 = lindblad_rhs(rho, H, L);
    const DenseMatrix k2 = lindblad_rhs(rho + 0.5 * h * k1, H, L);
    const DenseMatrix k3 = lindblad_rhs(rho + 0.5 * h * k2, H, L);
    const DenseMatrix k4 = lindblad_rhs(rho + h * k3, H, L);
    rho += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
  return rho;
}

inline double trace_norm(const DenseMatrix& a) {
  Eigen::SelfAdjointEigenSolver<DenseMatrix> es(0.5 * (a + a.adjoint()), Eigen::EigenvaluesOnly);
  return es.eigenvalues().cwiseAbs().sum();
}

/// ½‖a − b‖₁
inline double trace_distance(const DenseMatrix& a, const DenseMatrix& b) { return 0.5 * trace_norm(a - b); }

// ---------------------------------------------------------------------------
// Quantum trajectories

enum class CoinMode { classical, circuit };

/// Coin angle for R_Y so that the coin reads 1 with probability p.
inline double coin_angle(double p) { return init_rotation(p); }

inline int flip_coin(double p, CoinMode mode, RngStream& rng) {
  if (mode == CoinMode::classical) return rng.uniform() < p ? 1 : 0;
  StateVector coin(1);
  coin.ry(0, coin_angle(p));
  return coin.measure(0, rng);
}

/// Measures `site` and resets it to `target`; returns the pre-reset bit.
inline int measure_and_reset(StateVector& psi, int site, int target, RngStream& rng) {
  const int bit = psi.measure(site, rng);
  psi.reset_to(site, target, rng);
  return bit;
}

struct DriveEvent {
  bool fired = false;
  int bit = -1;
};

/// With probability p: measure the site, record the bit, then set it to target.
inline DriveEvent drive_site(StateVector& psi, int site, int target, double p, RngStream& rng,
                             CoinMode mode = CoinMode::classical) {
  DriveEvent e;
  if (flip_coin(p, mode, rng)) {
    e.fired = true;
    e.bit = measure_and_reset(psi, site, target, rng);
  }
  return e;
}

struct PeriodRecord {
  int source_coin = 0;
  int drain_coin = 0;
  int source_bit = -1;  // present iff source_coin == 1
  int drain_bit = -1;
};

struct TrajectoryRecord {
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;
  std::vector<int> init_bits;
  std::vector<PeriodRecord> periods;
  std::string basis = "none";
  std::vector<int> final_bits;
};

inline bool operator==(const PeriodRecord& a, const PeriodRecord& b) {
  return a.source_coin == b.source_coin && a.drain_coin == b.drain_coin && a.source_bit == b.source_bit &&
         a.drain_bit == b.drain_bit;
}

inline nlohmann::json to_json(const TrajectoryRecord& r) {
  nlohmann::json j;
  j["seed"] = r.seed;
  j["stream"] = r.stream;
  j["init"] = r.init_bits;
  auto& ev = j["events"] = nlohmann::json::array();
  for (const PeriodRecord& p : r.periods) ev.push_back({p.source_coin, p.drain_coin, p.source_bit, p.drain_bit});
  j["basis"] = r.basis;
  j["final"] = r.final_bits;
  return j;
}

inline TrajectoryRecord record_from_json(const nlohmann::json& j) {
  TrajectoryRecord r;
  r.seed = j.at("seed").get<std::uint64_t>();
  r.stream = j.at("stream").get<std::uint64_t>();
  r.init_bits = j.at("init").get<std::vector<int>>();
  for (const auto& e : j.at("events")) r.periods.push_back({e[0], e[1], e[2], e[3]});
  r.basis = j.at("basis").get<std::string>();
  r.final_bits = j.at("final").get<std::vector<int>>();
  return r;
}

inline void write_ndjson(std::ostream& out, const std::vector<TrajectoryRecord>& records) {
  for (const auto& r : records) out << to_json(r).dump() << '\n';
}

/// Final shot: -1 means no measurement, 4 means the density basis, 0..3 a current sector.
struct FinalShot {
  static constexpr int none = -1;
  static constexpr int density = 4;
};

struct TrajectoryOptions {
  CoinMode coins = CoinMode::classical;
  bool record_series = false;  // exact densities and currents after every period
  int final_shot = FinalShot::none;
};

struct TrajectoryResult {
  TrajectoryRecord record;
  StateVector psi;  // after the last period, before any final shot
  std::vector<double> densities;
  std::vector<double> currents;
  std::vector<std::vector<double>> density_series;
  std::vector<std::vector<double>> current_series;
  std::vector<double> shot_currents;  // current-basis readout, per bond of the sector
};

inline std::string basis_label(int final_shot) {
  if (final_shot == FinalShot::none) return "none";
  if (final_shot == FinalShot::density) return "density";
  return std::string("current-") + Lattice::kSectorNames[final_shot];
}

/// Everything needed to run trajectories for one parameter set. Immutable
/// after construction and shared read-only between workers.
class TrajectorySimulator {
 public:
  explicit TrajectorySimulator(const ModelParams& mp, bool gate_level = false)
      : mp_((mp.validate(), mp)),
        lat_(Lattice::square(mp.width, mp.height)),
        enc_(make_encoding(lat_, mp.encoding_kind())),
        step_(lat_, enc_, mp_, gate_level) {}

  const ModelParams& params() const { return mp_; }
  const Lattice& lattice() const { return lat_; }
  const Encoding& encoding() const { return enc_; }
  const TrotterStep& step() const { return step_; }

  TrajectoryResult run(std::uint64_t seed, std::uint64_t stream, const TrajectoryOptions& opt = {}) const {
    RngStream rng(seed, stream);
    TrajectoryResult out;
    InitialState init = prepare_initial_state(mp_, lat_, enc_, rng);
    out.psi = std::move(init.psi);
    out.record.seed = seed;
    out.record.stream = stream;
    out.record.init_bits = std::move(init.bits);
    const int n = lat_.num_sites();
    for (int t = 0; t < mp_.m; ++t) {
      step_.apply(out.psi);
      PeriodRecord pr;
      pr.source_coin = flip_coin(mp_.p, opt.coins, rng);
      pr.drain_coin = flip_coin(mp_.p, opt.coins, rng);
      if (pr.source_coin) pr.source_bit = measure_and_reset(out.psi, lat_.source(), 1, rng);
      if (pr.drain_coin) pr.drain_bit = measure_and_reset(out.psi, lat_.drain(), 0, rng);
      out.record.periods.push_back(pr);
      if (opt.record_series) {
        out.density_series.push_back(site_densities(out.psi, n));
        out.current_series.push_back(bond_currents(out.psi, lat_, enc_, mp_));
      }
    }
    out.densities = site_densities(out.psi, n);
    out.currents = bond_currents(out.psi, lat_, enc_, mp_);
    out.record.basis = basis_label(opt.final_shot);
    if (opt.final_shot != FinalShot::none) {
      StateVector shot = out.psi;
      std::optional<CurrentMeasurement> cm;
      if (opt.final_shot != FinalShot::density) {
        cm = current_measurement_basis(lat_, enc_, mp_, opt.final_shot);
        apply(shot, cm->circuit);
      }
      for (int q = 0; q < n; ++q) out.record.final_bits.push_back(shot.measure(q, rng));
      if (cm)
        for (const CurrentReadout& r : cm->readout)
          out.shot_currents.push_back(r.sign * (out.record.final_bits[r.k] - out.record.final_bits[r.j]));
    }
    return out;
  }

 private:
  ModelParams mp_;
  Lattice lat_;
  Encoding enc_;
  TrotterStep step_;
};

// ---------------------------------------------------------------------------
// Flow through the corners from mid-circuit records

struct FlowSeries {
  std::vector<MeanErr> inflow;
  std::vector<MeanErr> outflow;
  std::vector<MeanErr> inflow_rolling;
  std::vector<MeanErr> outflow_rolling;
};

/// Per-period inflow (source events that found the site empty) and outflow
/// (drain events that found it filled), divided by Δt. The rolling series
/// averages the trailing `window` periods (fewer at the start).
inline FlowSeries net_current_from_records(const std::vector<TrajectoryRecord>& records, double dt, int window = 3) {
  if (records.empty()) throw std::invalid_argument("no trajectory records");
  if (window < 1) throw std::invalid_argument("rolling window must be positive");
  const std::size_t m = records.front().periods.size();
  for (const auto& r : records)
    if (r.periods.size() != m) throw std::invalid_argument("records have different period counts");
  const double n = static_cast<double>(records.size());
  auto reduce = [&](auto value) {
    double s = 0, s2 = 0;
    for (const auto& r : records) {
      const double v = value(r);
      s += v;
      s2 += v * v;
    }
    MeanErr e;
    e.mean = s / n;
    e.sem = n > 1 ? std::sqrt(std::max(0.0, (s2 - s * s / n) / (n - 1)) / n) : 0.0;
    return e;
  };
  auto in = [](const PeriodRecord& p) { return p.source_coin && p.source_bit == 0 ? 1.0 : 0.0; };
  auto out = [](const PeriodRecord& p) { return p.drain_coin && p.drain_bit == 1 ? 1.0 : 0.0; };
  FlowSeries fs;
  for (std::size_t t = 0; t < m; ++t) {
    fs.inflow.push_back(reduce([&](const TrajectoryRecord& r) { return in(r.periods[t]) / dt; }));
    fs.outflow.push_back(reduce([&](const TrajectoryRecord& r) { return out(r.periods[t]) / dt; }));
    const std::size_t lo = t + 1 >= static_cast<std::size_t>(window) ? t + 1 - window : 0;
    const double len = static_cast<double>(t + 1 - lo);
    fs.inflow_rolling.push_back(reduce([&](const TrajectoryRecord& r) {
      double s = 0;
      for (std::size_t u = lo; u <= t; ++u) s += in(r.periods[u]);
      return s / len / dt;
    }));
    fs.outflow_rolling.push_back(reduce([&](const TrajectoryRecord& r) {
      double s = 0;
      for (std::size_t u = lo; u <= t; ++u) s += out(r.periods[u]);
      return s / len / dt;
    }));
  }
  return fs;
}

}  // namespace nessim
