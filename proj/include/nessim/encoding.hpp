#pragma once

#include <algorithm>
#include <complex>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "lattice.hpp"
#include "pauli.hpp"

namespace nessim {

/// Qubit image of the hopping bilinear c†_j c_k on one lattice bond:
///   c†_j c_k  ↦  w · σ+_j σ-_k · Q
/// with Q a Hermitian Pauli string supported away from j and k.
struct BondTerm {
  int bond = -1;
  int j = -1;
  int k = -1;
  cplx w{1, 0};
  PauliString Q;
  std::uint64_t xmask = 0;
  std::uint64_t zmask = 0;
  cplx qcoef{1, 0};
};

enum class EncodingKind { hcb, jordan_wigner, derby_klassen };

inline const char* encoding_name(EncodingKind k) {
  switch (k) {
    case EncodingKind::hcb: return "hcb";
    case EncodingKind::jordan_wigner: return "jordan-wigner";
    case EncodingKind::derby_klassen: return "derby-klassen";
  }
  return "?";
}

struct Encoding {
  EncodingKind kind = EncodingKind::hcb;
  int n_sites = 0;
  int n_qubits = 0;
  std::vector<int> ancillas;
  std::vector<BondTerm> terms;  // indexed by lattice bond
  std::optional<PauliString> stabilizer;
};

namespace detail {

inline BondTerm make_term(int bond, int j, int k, cplx w, PauliString Q) {
  if (!Q.is_hermitian()) throw std::logic_error("bond string must be Hermitian: " + Q.str());
  if (Q.acts_on(j) || Q.acts_on(k)) throw std::logic_error("bond string touches its own endpoints");
  BondTerm t;
  t.bond = bond;
  t.j = j;
  t.k = k;
  t.w = w;
  Q.to_masks(t.xmask, t.zmask, t.qcoef);
  t.Q = std::move(Q);
  return t;
}

}  // namespace detail

inline Encoding hcb_encoding(const Lattice& lat) {
  Encoding e;
  e.kind = EncodingKind::hcb;
  e.n_sites = e.n_qubits = lat.num_sites();
  for (int b = 0; b < lat.num_bonds(); ++b)
    e.terms.push_back(detail::make_term(b, lat.bond(b).j, lat.bond(b).k, 1.0, PauliString()));
  return e;
}

/// Row-major Jordan–Wigner ordering: c†_j c_k = σ+_j (∏_{j<l<k} Z_l) σ-_k for j < k.
inline Encoding jordan_wigner_encoding(const Lattice& lat) {
  Encoding e;
  e.kind = EncodingKind::jordan_wigner;
  e.n_sites = e.n_qubits = lat.num_sites();
  for (int b = 0; b < lat.num_bonds(); ++b) {
    const Bond& bond = lat.bond(b);
    PauliString Q;
    for (int l = bond.j + 1; l < bond.k; ++l) Q = Q * PauliString::single(l, Pauli::Z);
    e.terms.push_back(detail::make_term(b, bond.j, bond.k, 1.0, Q));
  }
  return e;
}

/// Compact fermion encoding on the 4×4 lattice with two ancillas (qubits 16 and 17).
///
/// Oriented edges i → j carry Ẽ_ij = ±X_i Y_j P_anc, where P_anc is X for a
/// vertical and Y for a horizontal edge next to an ancilla. Hopping between
/// sites without an oriented edge uses a path of oriented edges, with
/// iẼ_ij equal to the product of iẼ along the path.
///
/// Edges 5→6 and 13→14 carry a minus sign. With it every plaquette loop is
/// the identity except the central one, which becomes the stabilizer.
class DerbyKlassen {
 public:
  static constexpr int kAncillaA = 16;
  static constexpr int kAncillaB = 17;
  static constexpr int kQubits = 18;

  struct DirectEdge {
    int from, to, ancilla;
    int sign = 1;
  };
  struct CompositeEdge {
    int from, to;
    std::vector<int> path;
  };

  static const std::vector<DirectEdge>& direct_edges() {
    static const std::vector<DirectEdge> edges = {
        {3, 2, -1},         {2, 1, kAncillaA},      {1, 0, -1},   {4, 5, -1},   {5, 6, kAncillaA, -1}, {6, 7, -1},
        {11, 10, -1},       {10, 9, kAncillaB},     {9, 8, -1},   {12, 13, -1}, {13, 14, kAncillaB, -1}, {14, 15, -1},
        {5, 1, kAncillaA},  {8, 4, -1},             {7, 11, -1},  {13, 9, kAncillaB},
    };
    return edges;
  }

  static const std::vector<CompositeEdge>& composite_edges() {
    static const std::vector<CompositeEdge> edges = {
        {4, 0, {4, 5, 1, 0}},          {2, 6, {2, 1, 5, 6}},   {3, 7, {3, 2, 1, 5, 6, 7}},
        {5, 9, {5, 4, 8, 9}},          {6, 10, {6, 7, 11, 10}}, {8, 12, {8, 9, 13, 12}},
        {10, 14, {10, 9, 13, 14}},     {11, 15, {11, 10, 9, 13, 14, 15}},
    };
    return edges;
  }

  static void require_4x4(const Lattice& lat) {
    if (lat.width() != 4 || lat.height() != 4)
      throw std::invalid_argument("the compact fermion encoding is only defined on the 4x4 lattice, got " +
                                  std::to_string(lat.width()) + "x" + std::to_string(lat.height()));
  }

  /// Ẽ_ij for an oriented edge, its reverse, or a composite path edge.
  static PauliString edge_operator(int i, int j) {
    static const Lattice lat = Lattice::square(4, 4);
    for (const DirectEdge& e : direct_edges()) {
      if (e.from == i && e.to == j) return direct(lat, e);
      if (e.from == j && e.to == i) return -direct(lat, e);
    }
    for (const CompositeEdge& c : composite_edges()) {
      if (c.from == i && c.to == j) return composite(c);
      if (c.from == j && c.to == i) return -composite(c);
    }
    throw std::invalid_argument("sites " + std::to_string(i) + " and " + std::to_string(j) +
                                " are not joined by an oriented or composite edge");
  }

  static PauliString vertex_operator(int i) { return PauliString::single(i, Pauli::Z); }

  /// ∏ over the plaquette with lower-left site (x, y), walked anticlockwise, of iẼ.
  static PauliString plaquette_loop(int x, int y) {
    const int a = y * 4 + x, b = a + 1, c = a + 5, d = a + 4;
    const int loop[5] = {a, b, c, d, a};
    PauliString prod;
    for (int t = 0; t < 4; ++t) prod = prod * edge_operator(loop[t], loop[t + 1]).times_i(1);
    return prod;
  }

  /// The loop product around the central plaquette; its +1 eigenspace is the physical subspace.
  static PauliString stabilizer() { return plaquette_loop(1, 1); }

  static Encoding encoding(const Lattice& lat) {
    require_4x4(lat);
    Encoding e;
    e.kind = EncodingKind::derby_klassen;
    e.n_sites = 16;
    e.n_qubits = kQubits;
    e.ancillas = {kAncillaA, kAncillaB};
    for (int b = 0; b < lat.num_bonds(); ++b) {
      const Bond& bond = lat.bond(b);
      e.terms.push_back(bilinear(b, bond.j, bond.k));
    }
    e.stabilizer = stabilizer();
    return e;
  }

  /// c†_j c_k ↦ i n_j Ẽ_jk n_k, rewritten as w σ+_j σ-_k Q.
  static BondTerm bilinear(int bond, int j, int k) {
    PauliString E = edge_operator(j, k);
    const Pauli pj = E.at(j), pk = E.at(k);
    if (pj == Pauli::Z || pk == Pauli::Z) throw std::logic_error("edge operator carries Z on an endpoint");
    // n X = σ+, n Y = iσ+ ; X n = σ-, Y n = -iσ-.
    const cplx f = pj == Pauli::X ? cplx(1, 0) : cplx(0, 1);
    const cplx g = pk == Pauli::X ? cplx(1, 0) : cplx(0, -1);
    const cplx w = cplx(0, 1) * E.coefficient() * f * g;
    PauliString Q = E * PauliString::single(j, pj) * PauliString::single(k, pk);
    // Strip the phase picked up while peeling off the endpoint factors; it is carried by w.
    Q = Q.times_i(-Q.phase());
    return detail::make_term(bond, j, k, w, Q);
  }

 private:
  static PauliString direct(const Lattice& lat, const DirectEdge& e) {
    PauliString s = PauliString::single(e.from, Pauli::X) * PauliString::single(e.to, Pauli::Y);
    if (e.ancilla >= 0) {
      const bool vertical = lat.site(e.from).x == lat.site(e.to).x;
      s = s * PauliString::single(e.ancilla, vertical ? Pauli::X : Pauli::Y);
    }
    return e.sign > 0 ? s : -s;
  }

  static PauliString composite(const CompositeEdge& c) {
    PauliString prod;
    for (std::size_t t = 0; t + 1 < c.path.size(); ++t)
      prod = prod * edge_operator(c.path[t], c.path[t + 1]).times_i(1);
    return prod.times_i(3);
  }
};

inline Encoding derby_klassen_encoding(const Lattice& lat) { return DerbyKlassen::encoding(lat); }

}  // namespace nessim
