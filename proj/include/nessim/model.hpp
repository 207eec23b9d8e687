#pragma once

#include <cmath>
#include <complex>
#include <map>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "encoding.hpp"
#include "gates.hpp"
#include "lattice.hpp"
#include "rng.hpp"
#include "state_vector.hpp"

namespace nessim {

enum class Statistics { hcb, fermion };
enum class InitKind { random_product, biased_product, bitstring };

inline const char* statistics_name(Statistics s) { return s == Statistics::hcb ? "hcb" : "fermion"; }

struct ModelParams {
  int width = 4;
  int height = 4;
  double J = 1.0;
  double V = 0.0;
  double phi = 0.0;  // flux per plaquette, radians
  double dt = 0.31;
  int m = 10;
  double p = 0.62;
  Statistics statistics = Statistics::hcb;
  EncodingKind fermion_encoding = EncodingKind::derby_klassen;
  InitKind init = InitKind::random_product;
  std::vector<double> target_densities;  // biased_product, one per site
  std::uint64_t init_bits = 0;           // bitstring, bit i = occupation of site i

  double gamma() const { return p / dt; }

  void validate() const {
    if (width < 2 || height < 2) throw std::invalid_argument("lattice must be at least 2x2");
    if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("drive probability p must lie in [0,1], got " + std::to_string(p));
    if (!(dt > 0.0) || !std::isfinite(dt)) throw std::invalid_argument("time step must be positive and finite");
    if (m < 0) throw std::invalid_argument("number of periods must be non-negative");
    if (!std::isfinite(J) || !std::isfinite(V) || !std::isfinite(phi)) throw std::invalid_argument("non-finite model parameter");
    if (init == InitKind::biased_product) {
      if (static_cast<int>(target_densities.size()) != width * height)
        throw std::invalid_argument("biased initial state needs one target density per site");
      for (double d : target_densities)
        if (!(d >= 0.0 && d <= 1.0)) throw std::invalid_argument("target density " + std::to_string(d) + " outside [0,1]");
    }
  }

  EncodingKind encoding_kind() const { return statistics == Statistics::hcb ? EncodingKind::hcb : fermion_encoding; }
};

inline const char* init_name(InitKind k) {
  switch (k) {
    case InitKind::random_product: return "random";
    case InitKind::biased_product: return "biased";
    case InitKind::bitstring: return "bitstring";
  }
  return "?";
}

inline nlohmann::json to_json(const ModelParams& mp) {
  nlohmann::json j;
  j["width"] = mp.width;
  j["height"] = mp.height;
  j["J"] = mp.J;
  j["V"] = mp.V;
  j["phi"] = mp.phi;
  j["dt"] = mp.dt;
  j["m"] = mp.m;
  j["p"] = mp.p;
  j["statistics"] = statistics_name(mp.statistics);
  j["fermion_encoding"] = encoding_name(mp.fermion_encoding);
  j["init"] = init_name(mp.init);
  if (mp.init == InitKind::biased_product) j["target_densities"] = mp.target_densities;
  if (mp.init == InitKind::bitstring) j["init_bits"] = mp.init_bits;
  return j;
}

/// Inverse of to_json. Absent keys keep their defaults; unknown enum names throw.
inline ModelParams params_from_json(const nlohmann::json& j) {
  ModelParams mp;
  mp.width = j.value("width", mp.width);
  mp.height = j.value("height", mp.height);
  mp.J = j.value("J", mp.J);
  mp.V = j.value("V", mp.V);
  mp.phi = j.value("phi", mp.phi);
  mp.dt = j.value("dt", mp.dt);
  mp.m = j.value("m", mp.m);
  mp.p = j.value("p", mp.p);
  const std::string st = j.value("statistics", std::string(statistics_name(mp.statistics)));
  if (st == "hcb")
    mp.statistics = Statistics::hcb;
  else if (st == "fermion")
    mp.statistics = Statistics::fermion;
  else
    throw std::invalid_argument("unknown statistics '" + st + "'");
  const std::string fe = j.value("fermion_encoding", std::string(encoding_name(mp.fermion_encoding)));
  if (fe == "derby-klassen")
    mp.fermion_encoding = EncodingKind::derby_klassen;
  else if (fe == "jordan-wigner")
    mp.fermion_encoding = EncodingKind::jordan_wigner;
  else
    throw std::invalid_argument("unknown fermion encoding '" + fe + "'");
  const std::string in = j.value("init", std::string(init_name(mp.init)));
  if (in == "random")
    mp.init = InitKind::random_product;
  else if (in == "biased")
    mp.init = InitKind::biased_product;
  else if (in == "bitstring")
    mp.init = InitKind::bitstring;
  else
    throw std::invalid_argument("unknown initial state '" + in + "'");
  if (j.contains("target_densities")) mp.target_densities = j.at("target_densities").get<std::vector<double>>();
  if (j.contains("init_bits")) mp.init_bits = j.at("init_bits").get<std::uint64_t>();
  return mp;
}

inline Encoding make_encoding(const Lattice& lat, EncodingKind kind) {
  switch (kind) {
    case EncodingKind::hcb: return hcb_encoding(lat);
    case EncodingKind::jordan_wigner: return jordan_wigner_encoding(lat);
    case EncodingKind::derby_klassen: return derby_klassen_encoding(lat);
  }
  throw std::logic_error("unknown encoding");
}

/// Gates of exp(-iΔt[-J(e^{iθ} σ+_j σ-_k + h.c.) + V n_j n_k]) up to a global phase.
/// With `negate` the hopping sign is flipped (TK2 angles -α, -β).
inline void append_bond_gadget(GateSequence& seq, int j, int k, double theta, const ModelParams& mp, bool negate,
                               int group) {
  const double a = (negate ? 1.0 : -1.0) * mp.J * mp.dt / std::numbers::pi;
  const double gzz = mp.V * mp.dt / (2 * std::numbers::pi);
  const double x = theta / (2 * std::numbers::pi);
  if (x != 0.0) {
    seq.one(GateKind::rz, j, -x, group);
    seq.one(GateKind::rz, k, x, group);
  }
  seq.two(GateKind::tk2, j, k, {a, a, gzz}, group);
  if (x != 0.0) {
    seq.one(GateKind::rz, j, x, group);
    seq.one(GateKind::rz, k, -x, group);
  }
  if (gzz != 0.0) {
    seq.one(GateKind::rz, j, -gzz, group);
    seq.one(GateKind::rz, k, -gzz, group);
  }
}

/// How one bond term is realised as gates: a single-qubit basis change on
/// each ancilla in Q, CZ from every remaining qubit of Q onto site j, and a
/// plain bond gadget whose effective phase absorbs the leftover coefficient.
struct BondRealisation {
  std::map<int, Pauli> basis;   // ancilla -> Pauli factor rotated onto Z
  std::vector<int> cz_partners;  // qubits q for CZ(q, j)
  double theta_eff = 0;          // effective Peierls phase
  bool negated = false;          // Ũ: the hopping sign is flipped
};

inline BondRealisation realise(const BondTerm& t, const Encoding& enc, double theta) {
  BondRealisation r;
  const int phase = t.Q.phase();
  for (const auto& [q, p] : t.Q.ops()) {
    const bool ancilla = std::find(enc.ancillas.begin(), enc.ancillas.end(), q) != enc.ancillas.end();
    if (p != Pauli::Z && !ancilla)
      throw std::logic_error("bond string has a non-Z factor on physical qubit " + std::to_string(q));
    if (p != Pauli::Z) r.basis[q] = p;  // H X H = Z, (H S†) Y (S H) = Z
    r.cz_partners.push_back(q);
  }
  const cplx total = t.w * PauliString().times_i(phase).coefficient();
  // total ∈ {±1, ±i}; -1 is the Ũ gadget, ±i shift the Peierls phase.
  if (std::abs(total - cplx(-1, 0)) < 1e-12) {
    r.negated = true;
    r.theta_eff = theta;
  } else {
    r.theta_eff = theta + std::arg(total);
  }
  return r;
}

inline void append_basis_change(GateSequence& seq, int q, Pauli p, bool undo) {
  if (p == Pauli::X) {
    seq.one(GateKind::h, q);
  } else if (p == Pauli::Y) {
    if (!undo) {
      seq.one(GateKind::sdg, q);
      seq.one(GateKind::h, q);
    } else {
      seq.one(GateKind::h, q);
      seq.one(GateKind::s, q);
    }
  }
}

/// First-order Trotter step: the four bond sectors in fixed order, each
/// realised with its ancilla basis changes and CZ dressing.
inline GateSequence build_trotter_step(const Lattice& lat, const Encoding& enc, const ModelParams& mp) {
  GateSequence seq(enc.n_qubits);
  int group = 0;
  for (std::size_t s = 0; s < 4; ++s) {
    seq.barrier(Lattice::kSectorNames[s]);
    std::map<int, Pauli> basis;
    std::vector<std::pair<const BondTerm*, BondRealisation>> items;
    for (int b : lat.sectors()[s]) {
      const BondTerm& t = enc.terms.at(b);
      BondRealisation r = realise(t, enc, lat.peierls_phase(b, mp.phi));
      for (const auto& [q, p] : r.basis) {
        auto it = basis.find(q);
        if (it != basis.end() && it->second != p)
          throw std::logic_error("ancilla " + std::to_string(q) + " needs two different bases in sector " +
                                 Lattice::kSectorNames[s]);
        basis[q] = p;
      }
      items.emplace_back(&t, std::move(r));
    }
    for (const auto& [q, p] : basis) append_basis_change(seq, q, p, false);
    for (const auto& [t, r] : items) {
      for (int q : r.cz_partners) seq.two(GateKind::cz, q, t->j);
      append_bond_gadget(seq, t->j, t->k, r.theta_eff, mp, r.negated, group++);
      for (int q : r.cz_partners) seq.two(GateKind::cz, q, t->j);
    }
    for (const auto& [q, p] : basis) append_basis_change(seq, q, p, true);
  }
  return seq;
}

inline GateSequence build_hcb_trotter_step(const Lattice& lat, const ModelParams& mp) {
  return build_trotter_step(lat, hcb_encoding(lat), mp);
}

inline GateSequence build_fermion_trotter_step(const Lattice& lat, const ModelParams& mp) {
  return build_trotter_step(lat, derby_klassen_encoding(lat), mp);
}

/// Bonds realised with the sign-flipped gadget Ũ.
inline std::vector<std::pair<int, int>> negated_bonds(const Encoding& enc) {
  std::vector<std::pair<int, int>> out;
  for (const BondTerm& t : enc.terms)
    if (realise(t, enc, 0.0).negated) out.emplace_back(t.j, t.k);
  return out;
}

/// Applies one Trotter step. Hard-core bosons run the compiled gate sequence
/// (one fused 4×4 per bond); encoded fermions apply each bond exponential
/// directly, which equals the gate realisation up to a global phase.
class TrotterStep {
 public:
  TrotterStep(const Lattice& lat, const Encoding& enc, const ModelParams& mp, bool gate_level = false)
      : compiled_(build_trotter_step(lat, enc, mp)),
        use_gates_(gate_level || enc.kind == EncodingKind::hcb),
        n_qubits_(enc.n_qubits),
        V_(mp.V),
        dt_(mp.dt) {
    for (std::size_t s = 0; s < 4; ++s)
      for (int b : lat.sectors()[s]) {
        const BondTerm& t = enc.terms.at(b);
        const cplx beta = -mp.J * std::polar(1.0, lat.peierls_phase(b, mp.phi)) * t.w;
        kernels_.push_back(Kernel{t.j, t.k, t.xmask, t.zmask, t.qcoef, beta});
      }
  }

  void apply(StateVector& psi) const {
    if (psi.n_qubits() != n_qubits_) throw std::invalid_argument("state register does not match the encoding");
    if (use_gates_) {
      compiled_.apply(psi);
      return;
    }
    for (const Kernel& k : kernels_) psi.apply_bond_exp(k.j, k.k, k.xmask, k.zmask, k.qcoef, k.beta, V_, dt_);
  }

 private:
  struct Kernel {
    int j, k;
    std::uint64_t xmask, zmask;
    cplx qcoef, beta;
  };
  CompiledSequence compiled_;
  bool use_gates_ = true;
  int n_qubits_ = 0;
  std::vector<Kernel> kernels_;
  double V_ = 0;
  double dt_ = 0;
};

/// Initial-state circuit: per-site preparation plus the ancilla preparation
/// that places an encoded fermionic state in the +1 eigenspace of the stabilizer.
/// Sites are prepared by a rotation and an immediate measurement; the source
/// is then forced occupied and the drain empty.
struct InitialState {
  StateVector psi;
  std::vector<int> bits;  // sampled occupation per site
};

inline double init_rotation(double density) { return (2.0 / std::numbers::pi) * std::asin(std::sqrt(density)); }

inline void prepare_ancillas(StateVector& psi, const Encoding& enc) {
  if (enc.kind != EncodingKind::derby_klassen) return;
  psi.rx(DerbyKlassen::kAncillaA, -0.5);
  psi.rx(DerbyKlassen::kAncillaB, -0.5);
  for (int j = 4; j <= 11; ++j) psi.cz(j, DerbyKlassen::kAncillaB);
}

inline InitialState prepare_initial_state(const ModelParams& mp, const Lattice& lat, const Encoding& enc,
                                          RngStream& rng) {
  mp.validate();
  InitialState out{StateVector(enc.n_qubits), std::vector<int>(lat.num_sites(), 0)};
  for (int i = 0; i < lat.num_sites(); ++i) {
    if (i == lat.source() || i == lat.drain()) continue;
    switch (mp.init) {
      case InitKind::random_product:
        out.psi.h(i);
        out.bits[i] = out.psi.measure(i, rng);
        break;
      case InitKind::biased_product:
        out.psi.ry(i, init_rotation(mp.target_densities[i]));
        out.bits[i] = out.psi.measure(i, rng);
        break;
      case InitKind::bitstring:
        if ((mp.init_bits >> i) & 1) out.psi.x(i);
        out.bits[i] = static_cast<int>((mp.init_bits >> i) & 1);
        break;
    }
  }
  out.psi.x(lat.source());
  out.bits[lat.source()] = 1;
  prepare_ancillas(out.psi, enc);
  return out;
}

}  // namespace nessim
