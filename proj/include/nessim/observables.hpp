#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <map>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "encoding.hpp"
#include "gates.hpp"
#include "lattice.hpp"
#include "model.hpp"
#include "state_vector.hpp"

namespace nessim {

// ---------------------------------------------------------------------------
// Single-state observables

inline std::vector<double> site_densities(const StateVector& psi, int n_sites) {
  std::vector<double> n(static_cast<std::size_t>(n_sites), 0.0);
  const auto& a = psi.amplitudes();
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double w = std::norm(a[i]);
    if (w == 0.0) continue;
    for (int q = 0; q < n_sites; ++q)
      if ((i >> q) & 1) n[static_cast<std::size_t>(q)] += w;
  }
  return n;
}

/// ⟨Ĵ_jk⟩ with Ĵ_jk = -iJ(e^{iθ} c†_j c_k - e^{-iθ} c†_k c_j), the rate of change
/// of n_k due to the bond, i.e. positive when particles flow j → k.
inline double bond_current(const StateVector& psi, const BondTerm& t, double J, double theta) {
  const cplx m = psi.expect_hop(t.j, t.k, t.xmask, t.zmask, t.qcoef) * t.w;
  return 2.0 * J * (std::polar(1.0, theta) * m).imag();
}

inline std::vector<double> bond_currents(const StateVector& psi, const Lattice& lat, const Encoding& enc,
                                         const ModelParams& mp) {
  std::vector<double> out(static_cast<std::size_t>(lat.num_bonds()));
  for (int b = 0; b < lat.num_bonds(); ++b) out[b] = bond_current(psi, enc.terms[b], mp.J, lat.peierls_phase(b, mp.phi));
  return out;
}

/// Same current from a correlation matrix C_ij = ⟨c†_i c_j⟩.
inline double bond_current(const Eigen::MatrixXcd& C, const Bond& bond, double J, double theta) {
  return 2.0 * J * (std::polar(1.0, theta) * C(bond.j, bond.k)).imag();
}

// ---------------------------------------------------------------------------
// Per-trajectory samples and their reductions

struct MeanErr {
  double mean = 0;
  double sem = 0;
};

/// Row-per-trajectory table of site densities followed by bond currents.
/// Keeping the rows lets every derived linear quantity get a correct
/// standard error including correlations between sites.
class Samples {
 public:
  Samples() = default;
  Samples(int n_sites, int n_bonds) : n_sites_(n_sites), n_bonds_(n_bonds) {}

  int n_sites() const { return n_sites_; }
  int n_bonds() const { return n_bonds_; }
  int width() const { return n_sites_ + n_bonds_; }
  std::size_t rows() const { return rows_.size() / static_cast<std::size_t>(std::max(1, width())); }

  void add(const std::vector<double>& densities, const std::vector<double>& currents) {
    if (static_cast<int>(densities.size()) != n_sites_ || static_cast<int>(currents.size()) != n_bonds_)
      throw std::invalid_argument("sample row has the wrong shape");
    rows_.insert(rows_.end(), densities.begin(), densities.end());
    rows_.insert(rows_.end(), currents.begin(), currents.end());
  }

  void append(const Samples& o) {
    if (o.n_sites_ != n_sites_ || o.n_bonds_ != n_bonds_) throw std::invalid_argument("merging mismatched samples");
    rows_.insert(rows_.end(), o.rows_.begin(), o.rows_.end());
  }

  double at(std::size_t row, int col) const { return rows_[row * static_cast<std::size_t>(width()) + col]; }

  /// Mean and standard error of Σ_c w_c x_c over trajectories.
  MeanErr linear(const std::vector<double>& weights) const {
    if (static_cast<int>(weights.size()) != width()) throw std::invalid_argument("weight vector has the wrong shape");
    const std::size_t n = rows();
    MeanErr r;
    if (n == 0) return r;
    double s = 0, s2 = 0;
    for (std::size_t t = 0; t < n; ++t) {
      double v = 0;
      for (int c = 0; c < width(); ++c)
        if (weights[c] != 0.0) v += weights[c] * at(t, c);
      s += v;
      s2 += v * v;
    }
    r.mean = s / n;
    r.sem = n > 1 ? std::sqrt(std::max(0.0, (s2 - s * s / n) / (n - 1)) / n) : 0.0;
    return r;
  }

  MeanErr density(int site) const {
    std::vector<double> w(width(), 0.0);
    w[site] = 1;
    return linear(w);
  }
  MeanErr current(int bond) const {
    std::vector<double> w(width(), 0.0);
    w[n_sites_ + bond] = 1;
    return linear(w);
  }

 private:
  int n_sites_ = 0;
  int n_bonds_ = 0;
  std::vector<double> rows_;
};

struct Snapshot {
  int period = 0;
  std::size_t trajectories = 0;
  std::string backend;
  std::vector<MeanErr> densities;
  std::vector<MeanErr> currents;
};

inline Snapshot make_snapshot(const Samples& s, int period, const std::string& backend) {
  Snapshot snap;
  snap.period = period;
  snap.trajectories = s.rows();
  snap.backend = backend;
  for (int i = 0; i < s.n_sites(); ++i) snap.densities.push_back(s.density(i));
  for (int b = 0; b < s.n_bonds(); ++b) snap.currents.push_back(s.current(b));
  return snap;
}

/// Weights for ΔN = Σ_{x>y} n - Σ_{x<y} n (sites below minus above the source–drain diagonal).
inline std::vector<double> density_imbalance_weights(const Lattice& lat) {
  if (lat.width() != lat.height()) throw std::invalid_argument("imbalances need a square lattice");
  std::vector<double> w(static_cast<std::size_t>(lat.num_sites() + lat.num_bonds()), 0.0);
  for (int i = 0; i < lat.num_sites(); ++i) {
    const Site s = lat.site(i);
    w[i] = s.x > s.y ? 1.0 : s.x < s.y ? -1.0 : 0.0;
  }
  return w;
}

/// Weights for ΔJ: edge bonds along the bottom and right edges minus those along
/// the left and top edges, each directed from source towards drain.
inline std::vector<double> current_imbalance_weights(const Lattice& lat) {
  if (lat.width() != lat.height()) throw std::invalid_argument("imbalances need a square lattice");
  std::vector<double> w(static_cast<std::size_t>(lat.num_sites() + lat.num_bonds()), 0.0);
  for (int b = 0; b < lat.num_bonds(); ++b) {
    const Bond& bond = lat.bond(b);
    const Site a = lat.site(bond.j);
    double v = 0;
    if (bond.orientation == Orientation::horizontal) {
      if (a.y == 0) v += 1;
      if (a.y == lat.height() - 1) v -= 1;
    } else {
      if (a.x == lat.width() - 1) v += 1;
      if (a.x == 0) v -= 1;
    }
    w[lat.num_sites() + b] = v;
  }
  return w;
}

struct Imbalances {
  MeanErr dN;
  MeanErr dJ;
};

inline Imbalances imbalances(const Samples& s, const Lattice& lat) {
  return {s.linear(density_imbalance_weights(lat)), s.linear(current_imbalance_weights(lat))};
}

/// Mirror image of a sample table across the source–drain diagonal (x ↔ y).
inline Samples reflect_diagonal(const Samples& s, const Lattice& lat) {
  Samples out(s.n_sites(), s.n_bonds());
  for (std::size_t r = 0; r < s.rows(); ++r) {
    std::vector<double> d(s.n_sites()), c(s.n_bonds());
    for (int i = 0; i < s.n_sites(); ++i) {
      const Site p = lat.site(i);
      d[lat.index(p.y, p.x)] = s.at(r, i);
    }
    for (int b = 0; b < s.n_bonds(); ++b) {
      const Bond& bond = lat.bond(b);
      const Site pj = lat.site(bond.j), pk = lat.site(bond.k);
      c[lat.bond_index(lat.index(pj.y, pj.x), lat.index(pk.y, pk.x))] = s.at(r, s.n_sites() + b);
    }
    out.add(d, c);
  }
  return out;
}

/// Mean density grouped by taxicab distance from the source.
inline std::vector<MeanErr> density_profile(const Samples& s, const Lattice& lat) {
  std::vector<MeanErr> out;
  for (int d = 0; d <= lat.max_distance(); ++d) {
    std::vector<double> w(s.width(), 0.0);
    int count = 0;
    for (int i = 0; i < lat.num_sites(); ++i)
      if (lat.taxicab_distance(i, lat.source()) == d) ++count;
    for (int i = 0; i < lat.num_sites(); ++i)
      if (lat.taxicab_distance(i, lat.source()) == d) w[i] = 1.0 / count;
    out.push_back(s.linear(w));
  }
  return out;
}

/// Net current across the counter-diagonal cut between taxicab distances d and d+1.
inline std::vector<double> cut_weights(const Lattice& lat, int d) {
  std::vector<double> w(static_cast<std::size_t>(lat.num_sites() + lat.num_bonds()), 0.0);
  for (int b = 0; b < lat.num_bonds(); ++b)
    if (lat.taxicab_distance(lat.bond(b).j, lat.source()) == d) w[lat.num_sites() + b] = 1.0;
  return w;
}

inline std::vector<MeanErr> cut_currents(const Samples& s, const Lattice& lat) {
  std::vector<MeanErr> out;
  for (int d = 0; d < lat.max_distance(); ++d) out.push_back(s.linear(cut_weights(lat, d)));
  return out;
}

/// Average over the cuts [first, last] of the net cut current.
inline MeanErr cut_averaged_current(const Samples& s, const Lattice& lat, int first, int last) {
  std::vector<double> w(s.width(), 0.0);
  for (int d = first; d <= last; ++d) {
    const auto cw = cut_weights(lat, d);
    for (std::size_t c = 0; c < w.size(); ++c) w[c] += cw[c] / (last - first + 1);
  }
  return s.linear(w);
}

/// Fraction of Σ|⟨Ĵ_b⟩| carried by the bonds selected by `pick`.
template <class Pred>
double current_fraction(const Snapshot& snap, const Lattice& lat, Pred pick) {
  double total = 0, part = 0;
  for (int b = 0; b < lat.num_bonds(); ++b) {
    const double a = std::abs(snap.currents[b].mean);
    total += a;
    if (pick(b)) part += a;
  }
  return total > 0 ? part / total : 0.0;
}

// ---------------------------------------------------------------------------
// Circuit measurement of currents

/// After running `circuit`, a Z-basis shot gives the current on each listed
/// bond as sign·(b_k − b_j) with b ∈ {0,1} the measured bits.
struct CurrentReadout {
  int bond;
  int j;
  int k;
  double sign;
};

struct CurrentMeasurement {
  GateSequence circuit;
  std::vector<CurrentReadout> readout;
};

/// Rotation that maps −iJ(e^{iθ}σ+_j σ-_k − h.c.) onto J(n_j − n_k) for one bond.
inline void append_current_rotation(GateSequence& seq, int j, int k, double theta) {
  const double x = theta / (2 * std::numbers::pi);
  if (x != 0.0) {
    seq.one(GateKind::rz, j, -x);
    seq.one(GateKind::rz, k, x);
  }
  seq.two(GateKind::tk2, j, k, {0.25, 0.25, 0.0});
}

/// Pre-measurement circuit for every bond of one sector. For encoded fermions
/// the ancilla basis change and CZ dressing of the Trotter step are applied
/// first; residual Z strings that would spoil the readout are rejected.
inline CurrentMeasurement current_measurement_basis(const Lattice& lat, const Encoding& enc, const ModelParams& mp,
                                                    int sector) {
  if (sector < 0 || sector > 3) throw std::invalid_argument("sector index must be 0..3");
  CurrentMeasurement out{GateSequence(enc.n_qubits), {}};
  const auto& bonds = lat.sectors()[sector];
  std::vector<BondRealisation> real;
  std::map<int, Pauli> basis;
  std::vector<int> endpoints;
  for (int b : bonds) {
    const BondTerm& t = enc.terms.at(b);
    for (int e : {t.j, t.k}) {
      if (std::find(endpoints.begin(), endpoints.end(), e) != endpoints.end())
        throw std::invalid_argument("overlapping bonds in one current-measurement sector");
      endpoints.push_back(e);
    }
    real.push_back(realise(t, enc, lat.peierls_phase(b, mp.phi)));
    for (const auto& [q, p] : real.back().basis) {
      if (basis.count(q) && basis[q] != p) throw std::logic_error("inconsistent ancilla basis in sector");
      basis[q] = p;
    }
  }
  for (const auto& [q, p] : basis) append_basis_change(out.circuit, q, p, false);
  for (std::size_t i = 0; i < bonds.size(); ++i)
    for (int q : real[i].cz_partners) out.circuit.two(GateKind::cz, q, enc.terms[bonds[i]].j);
  // CZ(q, j') conjugates σ±_j into σ±_j Z_{j'} whenever q is an endpoint j of another bond.
  for (std::size_t i = 0; i < bonds.size(); ++i) {
    const BondTerm& t = enc.terms[bonds[i]];
    std::map<int, int> residual;
    for (std::size_t o = 0; o < bonds.size(); ++o) {
      if (o == i) continue;
      for (int q : real[o].cz_partners)
        if (q == t.j || q == t.k) residual[enc.terms[bonds[o]].j] ^= 1;
    }
    for (const auto& [q, odd] : residual)
      if (odd) throw std::logic_error("current readout of bond (" + std::to_string(t.j) + "," + std::to_string(t.k) +
                                      ") picks up a Z string on qubit " + std::to_string(q));
  }
  for (std::size_t i = 0; i < bonds.size(); ++i) {
    const BondTerm& t = enc.terms[bonds[i]];
    append_current_rotation(out.circuit, t.j, t.k, real[i].theta_eff);
    out.readout.push_back({bonds[i], t.j, t.k, real[i].negated ? mp.J : -mp.J});
  }
  return out;
}

}  // namespace nessim
