#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <complex>
#include <stdexcept>
#include <string>
#include <vector>

#include "channel.hpp"
#include "lattice.hpp"
#include "model.hpp"
#include "observables.hpp"
#include "rng.hpp"

namespace nessim {

/// C_ij = ⟨c†_i c_j⟩ for a number-conserving fermionic Gaussian state.
using CorrelationMatrix = Eigen::MatrixXcd;

/// h with H = Σ_jk h_jk c†_j c_k; restricted to `bonds` when given.
inline Eigen::MatrixXcd single_particle_hamiltonian(const Lattice& lat, const ModelParams& mp,
                                                    const std::vector<int>* bonds = nullptr) {
  const int n = lat.num_sites();
  Eigen::MatrixXcd h = Eigen::MatrixXcd::Zero(n, n);
  auto add = [&](int b) {
    const Bond& bond = lat.bond(b);
    const cplx t = -mp.J * std::polar(1.0, lat.peierls_phase(b, mp.phi));
    h(bond.j, bond.k) += t;
    h(bond.k, bond.j) += std::conj(t);
  };
  if (bonds)
    for (int b : *bonds) add(b);
  else
    for (int b = 0; b < lat.num_bonds(); ++b) add(b);
  return h;
}

inline Eigen::MatrixXcd unitary_from_hermitian(const Eigen::MatrixXcd& h, double t) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(h);
  Eigen::VectorXcd ph(es.eigenvalues().size());
  for (Eigen::Index i = 0; i < ph.size(); ++i) ph(i) = std::polar(1.0, -es.eigenvalues()(i) * t);
  return es.eigenvectors() * ph.asDiagonal() * es.eigenvectors().adjoint();
}

enum class Propagation { exact, trotter };

/// One period of free evolution: C ← W C W† with W = conj(U) and U the
/// single-particle propagator (exact, or the product of sector propagators
/// in the Trotter order).
class GaussianPropagator {
 public:
  GaussianPropagator(const Lattice& lat, const ModelParams& mp, Propagation mode) {
    if (mp.V != 0.0) throw std::invalid_argument("the Gaussian backend needs V = 0");
    const int n = lat.num_sites();
    Eigen::MatrixXcd U = Eigen::MatrixXcd::Identity(n, n);
    if (mode == Propagation::exact) {
      U = unitary_from_hermitian(single_particle_hamiltonian(lat, mp), mp.dt);
    } else {
      for (const auto& sector : lat.sectors())
        if (!sector.empty()) U = unitary_from_hermitian(single_particle_hamiltonian(lat, mp, &sector), mp.dt) * U;
    }
    W_ = U.conjugate();
  }

  const Eigen::MatrixXcd& matrix() const { return W_; }

  void apply(CorrelationMatrix& C) const {
    if (C.rows() != W_.rows()) throw std::invalid_argument("correlation matrix shape mismatch");
    C = W_ * C * W_.adjoint();
  }

 private:
  Eigen::MatrixXcd W_;
};

/// Projects on n_s = bit by Wick's theorem and renormalises.
inline void gaussian_condition(CorrelationMatrix& C, int s, int bit) {
  const double ns = C(s, s).real();
  const double w = bit ? ns : 1.0 - ns;
  if (w < 1e-12) throw NumericalIntegrityError("Gaussian measurement branch with weight " + std::to_string(w));
  const Eigen::VectorXcd col = C.col(s);  // C_is
  const Eigen::RowVectorXcd row = C.row(s);  // C_sj
  if (bit)
    C -= col * row / ns;
  else
    C += col * row / (1.0 - ns);
  C.row(s).setZero();
  C.col(s).setZero();
  C(s, s) = bit ? 1.0 : 0.0;
}

/// Born-rule measurement of n_s with the same single draw as the state vector.
inline int gaussian_measure(CorrelationMatrix& C, int s, RngStream& rng) {
  const int bit = rng.uniform() < C(s, s).real() ? 1 : 0;
  gaussian_condition(C, s, bit);
  return bit;
}

/// Decouples a measured site and sets its occupation.
inline void gaussian_reset(CorrelationMatrix& C, int s, int target) {
  C.row(s).setZero();
  C.col(s).setZero();
  C(s, s) = target;
}

inline DriveEvent gaussian_drive(CorrelationMatrix& C, int s, int target, double p, RngStream& rng,
                                 CoinMode mode = CoinMode::classical) {
  DriveEvent e;
  if (flip_coin(p, mode, rng)) {
    e.fired = true;
    e.bit = gaussian_measure(C, s, rng);
    gaussian_reset(C, s, target);
  }
  return e;
}

/// Mean of the drive over coin and measurement outcomes; linear in C.
inline void ensemble_drive(CorrelationMatrix& C, int s, int target, double p) {
  const cplx css = C(s, s);
  C.row(s) *= (1 - p);
  C.col(s) *= (1 - p);
  C(s, s) = (1 - p) * css + p * static_cast<double>(target);
}

/// Initial correlation matrix drawing the same random numbers, in the same
/// order, as the state-vector preparation.
inline CorrelationMatrix initial_correlation(const ModelParams& mp, const Lattice& lat, RngStream& rng,
                                             std::vector<int>* bits_out = nullptr) {
  mp.validate();
  std::vector<int> bits(static_cast<std::size_t>(lat.num_sites()), 0);
  for (int i = 0; i < lat.num_sites(); ++i) {
    if (i == lat.source() || i == lat.drain()) continue;
    switch (mp.init) {
      case InitKind::random_product: bits[i] = rng.uniform() < std::norm(gates::h()[2]) ? 1 : 0; break;
      case InitKind::biased_product:
        bits[i] = rng.uniform() < std::norm(gates::ry(init_rotation(mp.target_densities[i]))[2]) ? 1 : 0;
        break;
      case InitKind::bitstring: bits[i] = static_cast<int>((mp.init_bits >> i) & 1); break;
    }
  }
  bits[lat.source()] = 1;
  CorrelationMatrix C = CorrelationMatrix::Zero(lat.num_sites(), lat.num_sites());
  for (int i = 0; i < lat.num_sites(); ++i) C(i, i) = bits[i];
  if (bits_out) *bits_out = bits;
  return C;
}

inline std::vector<double> gaussian_densities(const CorrelationMatrix& C) {
  std::vector<double> n(static_cast<std::size_t>(C.rows()));
  for (Eigen::Index i = 0; i < C.rows(); ++i) n[i] = C(i, i).real();
  return n;
}

inline std::vector<double> gaussian_currents(const CorrelationMatrix& C, const Lattice& lat, const ModelParams& mp) {
  std::vector<double> out(static_cast<std::size_t>(lat.num_bonds()));
  for (int b = 0; b < lat.num_bonds(); ++b) out[b] = bond_current(C, lat.bond(b), mp.J, lat.peierls_phase(b, mp.phi));
  return out;
}

struct GaussianTrajectory {
  TrajectoryRecord record;
  CorrelationMatrix C;
  std::vector<double> densities;
  std::vector<double> currents;
  std::vector<std::vector<double>> density_series;
  std::vector<std::vector<double>> current_series;
};

class GaussianSimulator {
 public:
  GaussianSimulator(const ModelParams& mp, Propagation mode = Propagation::trotter)
      : mp_((mp.validate(), mp)), lat_(Lattice::square(mp.width, mp.height)), prop_(lat_, mp_, mode) {
    if (mp.statistics != Statistics::fermion) throw std::invalid_argument("the Gaussian backend simulates fermions");
  }

  const Lattice& lattice() const { return lat_; }
  const ModelParams& params() const { return mp_; }
  const GaussianPropagator& propagator() const { return prop_; }

  GaussianTrajectory run(std::uint64_t seed, std::uint64_t stream, const TrajectoryOptions& opt = {}) const {
    RngStream rng(seed, stream);
    GaussianTrajectory out;
    out.record.seed = seed;
    out.record.stream = stream;
    out.C = initial_correlation(mp_, lat_, rng, &out.record.init_bits);
    for (int t = 0; t < mp_.m; ++t) {
      prop_.apply(out.C);
      PeriodRecord pr;
      pr.source_coin = flip_coin(mp_.p, opt.coins, rng);
      pr.drain_coin = flip_coin(mp_.p, opt.coins, rng);
      if (pr.source_coin) {
        pr.source_bit = gaussian_measure(out.C, lat_.source(), rng);
        gaussian_reset(out.C, lat_.source(), 1);
      }
      if (pr.drain_coin) {
        pr.drain_bit = gaussian_measure(out.C, lat_.drain(), rng);
        gaussian_reset(out.C, lat_.drain(), 0);
      }
      out.record.periods.push_back(pr);
      if (opt.record_series) {
        out.density_series.push_back(gaussian_densities(out.C));
        out.current_series.push_back(gaussian_currents(out.C, lat_, mp_));
      }
    }
    out.densities = gaussian_densities(out.C);
    out.currents = gaussian_currents(out.C, lat_, mp_);
    if (opt.final_shot != FinalShot::none) throw std::invalid_argument("the Gaussian backend reports expectation values only");
    return out;
  }

 private:
  ModelParams mp_;
  Lattice lat_;
  GaussianPropagator prop_;
};

/// Ensemble-averaged correlation matrix after `periods` drive periods, starting
/// from the infinite-temperature bulk (every bulk site half filled).
struct EnsembleState {
  CorrelationMatrix C;
  double inflow = 0;   // p(1 − ⟨n_s⟩)/Δt before the last drive
  double outflow = 0;  // p⟨n_d⟩/Δt before the last drive
};

inline CorrelationMatrix infinite_temperature_correlation(const Lattice& lat) {
  CorrelationMatrix C = CorrelationMatrix::Zero(lat.num_sites(), lat.num_sites());
  for (int i = 0; i < lat.num_sites(); ++i) C(i, i) = 0.5;
  C(lat.source(), lat.source()) = 1;
  C(lat.drain(), lat.drain()) = 0;
  return C;
}

inline void ensemble_period(EnsembleState& st, const GaussianPropagator& prop, const Lattice& lat, const ModelParams& mp) {
  prop.apply(st.C);
  st.inflow = mp.p * (1 - st.C(lat.source(), lat.source()).real()) / mp.dt;
  st.outflow = mp.p * st.C(lat.drain(), lat.drain()).real() / mp.dt;
  ensemble_drive(st.C, lat.source(), 1, mp.p);
  ensemble_drive(st.C, lat.drain(), 0, mp.p);
}

struct SweepPoint {
  double dt = 0;
  double p = 0;
  double gamma = 0;
  double current = 0;
  double sem = 0;            // zero: the ensemble map is deterministic
  int steps_to_stationarity = -1;
  bool converged = false;
};

/// Runs the ensemble map until the mean inflow over consecutive windows of
/// `window` periods changes by less than `rel_tol`, and reports that mean.
/// A window never spans less than `min_window_time`/J: until particles injected
/// at the source reach the drain the current sits on a plateau, and at small Δt
/// fifty periods fit inside it.
inline SweepPoint ensemble_ness_current(const Lattice& lat, const ModelParams& mp, int max_steps, int window = 50,
                                        double rel_tol = 0.01, Propagation mode = Propagation::trotter,
                                        double min_window_time = 10.0) {
  SweepPoint pt;
  pt.dt = mp.dt;
  pt.p = mp.p;
  pt.gamma = mp.p / mp.dt;
  if (mp.p == 0.0) {
    pt.converged = true;
    pt.steps_to_stationarity = 0;
    return pt;
  }
  const GaussianPropagator prop(lat, mp, mode);
  EnsembleState st{infinite_temperature_correlation(lat)};
  window = std::max(window, static_cast<int>(std::ceil(min_window_time / (std::abs(mp.J) * mp.dt))));
  double prev = std::nan(""), acc = 0;
  for (int t = 1; t <= max_steps; ++t) {
    ensemble_period(st, prop, lat, mp);
    acc += st.inflow;
    if (t % window == 0) {
      const double mean = acc / window;
      acc = 0;
      if (std::isfinite(prev) && std::abs(mean - prev) < rel_tol * std::abs(mean)) {
        pt.current = mean;
        pt.steps_to_stationarity = t;
        pt.converged = true;
        return pt;
      }
      prev = mean;
      pt.current = mean;
    }
  }
  return pt;
}

/// Current against γ = p/Δt for each Δt.
inline std::vector<SweepPoint> gamma_sweep(const ModelParams& base, const std::vector<double>& dts,
                                           const std::vector<double>& gammas, double max_time = 2000.0) {
  if (base.V != 0.0) throw std::invalid_argument("the γ sweep runs on the free-fermion backend (V = 0)");
  const Lattice lat = Lattice::square(base.width, base.height);
  std::vector<SweepPoint> out;
  for (double dt : dts)
    for (double g : gammas) {
      ModelParams mp = base;
      mp.dt = dt;
      mp.p = g * dt;
      mp.validate();
      out.push_back(ensemble_ness_current(lat, mp, static_cast<int>(std::ceil(max_time / dt))));
    }
  return out;
}

}  // namespace nessim
