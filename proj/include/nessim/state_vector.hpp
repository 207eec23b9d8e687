#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "pauli.hpp"
#include "rng.hpp"

namespace nessim {

using Mat2 = std::array<cplx, 4>;   // row-major
using Mat4 = std::array<cplx, 16>;  // row-major, local index = bit(q1) + 2*bit(q2)

/// Raised when a measurement branch has vanishing weight or the norm drifts.
struct NumericalIntegrityError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace gates {

/// Rotations use the turn-normalised convention R_P(θ) = exp(-iπθP/2).
inline Mat2 rx(double theta) {
  const double a = std::numbers::pi * theta / 2;
  return {cplx(std::cos(a), 0), cplx(0, -std::sin(a)), cplx(0, -std::sin(a)), cplx(std::cos(a), 0)};
}
inline Mat2 ry(double theta) {
  const double a = std::numbers::pi * theta / 2;
  return {cplx(std::cos(a), 0), cplx(-std::sin(a), 0), cplx(std::sin(a), 0), cplx(std::cos(a), 0)};
}
inline Mat2 rz(double theta) {
  const double a = std::numbers::pi * theta / 2;
  return {std::polar(1.0, -a), 0, 0, std::polar(1.0, a)};
}
inline Mat2 h() {
  const double r = std::numbers::sqrt2 / 2;
  return {r, r, r, -r};
}
inline Mat2 x() { return {0, 1, 1, 0}; }
inline Mat2 s() { return {1, 0, 0, cplx(0, 1)}; }
inline Mat2 sdg() { return {1, 0, 0, cplx(0, -1)}; }

/// TK2(α,β,γ) = exp(-i(π/2)(α XX + β YY + γ ZZ)).
inline Mat4 tk2(double alpha, double beta, double gamma) {
  Mat4 m{};
  const double pi = std::numbers::pi;
  // {|00>,|11>}: ZZ=+1, XX and YY both swap with YY carrying a minus sign.
  const double ae = pi * (alpha - beta) / 2;
  const cplx pe = std::polar(1.0, -pi * gamma / 2);
  m[0 * 4 + 0] = pe * std::cos(ae);
  m[3 * 4 + 3] = pe * std::cos(ae);
  m[0 * 4 + 3] = pe * cplx(0, -std::sin(ae));
  m[3 * 4 + 0] = pe * cplx(0, -std::sin(ae));
  // {|01>,|10>}: ZZ=-1, XX and YY both swap with a plus sign.
  const double ao = pi * (alpha + beta) / 2;
  const cplx po = std::polar(1.0, pi * gamma / 2);
  m[1 * 4 + 1] = po * std::cos(ao);
  m[2 * 4 + 2] = po * std::cos(ao);
  m[1 * 4 + 2] = po * cplx(0, -std::sin(ao));
  m[2 * 4 + 1] = po * cplx(0, -std::sin(ao));
  return m;
}

inline Mat4 cz() {
  Mat4 m{};
  m[0] = m[5] = m[10] = 1;
  m[15] = -1;
  return m;
}

inline Mat4 kron(const Mat2& on_q2, const Mat2& on_q1) {
  Mat4 m{};
  for (int r2 = 0; r2 < 2; ++r2)
    for (int c2 = 0; c2 < 2; ++c2)
      for (int r1 = 0; r1 < 2; ++r1)
        for (int c1 = 0; c1 < 2; ++c1) m[(r1 + 2 * r2) * 4 + (c1 + 2 * c2)] = on_q2[r2 * 2 + c2] * on_q1[r1 * 2 + c1];
  return m;
}

inline Mat4 matmul(const Mat4& a, const Mat4& b) {
  Mat4 m{};
  for (int r = 0; r < 4; ++r)
    for (int k = 0; k < 4; ++k)
      for (int c = 0; c < 4; ++c) m[r * 4 + c] += a[r * 4 + k] * b[k * 4 + c];
  return m;
}

inline Mat4 identity4() {
  Mat4 m{};
  m[0] = m[5] = m[10] = m[15] = 1;
  return m;
}

}  // namespace gates

/// Dense pure state on n ≤ 24 qubits. Qubit q toggles bit q of the basis index;
/// bit value 1 means the site is occupied.
class StateVector {
 public:
  static constexpr int kMaxQubits = 24;

  StateVector() = default;
  explicit StateVector(int n_qubits) : n_(n_qubits) {
    if (n_qubits < 1 || n_qubits > kMaxQubits)
      throw std::invalid_argument("qubit count " + std::to_string(n_qubits) + " outside [1, 24]");
    amp_.assign(std::size_t{1} << n_qubits, cplx(0, 0));
    amp_[0] = 1;
  }

  static StateVector basis(int n_qubits, std::uint64_t index) {
    StateVector s(n_qubits);
    s.amp_[0] = 0;
    s.amp_.at(index) = 1;
    return s;
  }

  int n_qubits() const { return n_; }
  std::size_t dim() const { return amp_.size(); }
  const std::vector<cplx>& amplitudes() const { return amp_; }
  std::vector<cplx>& amplitudes() { return amp_; }
  cplx operator[](std::size_t i) const { return amp_[i]; }

  double norm() const {
    double s = 0;
    for (const cplx& a : amp_) s += std::norm(a);
    return std::sqrt(s);
  }

  void apply_1q(int q, const Mat2& m) {
    check(q);
    const std::size_t bit = std::size_t{1} << q;
    const std::size_t half = amp_.size() >> 1;
    for (std::size_t k = 0; k < half; ++k) {
      const std::size_t i = insert_zero(k, q);
      const cplx a0 = amp_[i], a1 = amp_[i | bit];
      amp_[i] = m[0] * a0 + m[1] * a1;
      amp_[i | bit] = m[2] * a0 + m[3] * a1;
    }
  }

  void apply_2q(int q1, int q2, const Mat4& m) {
    check(q1);
    check(q2);
    if (q1 == q2) throw std::invalid_argument("two-qubit gate on repeated qubit " + std::to_string(q1));
    const std::size_t b1 = std::size_t{1} << q1, b2 = std::size_t{1} << q2;
    const int lo = std::min(q1, q2), hi = std::max(q1, q2);
    const std::size_t quarter = amp_.size() >> 2;
    // Gates that conserve the number of set bits (every bond gadget) only mix
    // |01⟩ with |10⟩; skipping the structural zeros halves the work.
    const bool conserving = m[1] == 0.0 && m[2] == 0.0 && m[3] == 0.0 && m[4] == 0.0 && m[7] == 0.0 &&
                            m[8] == 0.0 && m[11] == 0.0 && m[12] == 0.0 && m[13] == 0.0 && m[14] == 0.0;
    if (conserving) {
      for (std::size_t k = 0; k < quarter; ++k) {
        const std::size_t i = insert_zero(insert_zero(k, lo), hi);
        const cplx v1 = amp_[i | b1], v2 = amp_[i | b2];
        amp_[i] *= m[0];
        amp_[i | b1] = m[5] * v1 + m[6] * v2;
        amp_[i | b2] = m[9] * v1 + m[10] * v2;
        amp_[i | b1 | b2] *= m[15];
      }
      return;
    }
    for (std::size_t k = 0; k < quarter; ++k) {
      const std::size_t i = insert_zero(insert_zero(k, lo), hi);
      const std::size_t idx[4] = {i, i | b1, i | b2, i | b1 | b2};
      const cplx v[4] = {amp_[idx[0]], amp_[idx[1]], amp_[idx[2]], amp_[idx[3]]};
      for (int r = 0; r < 4; ++r)
        amp_[idx[r]] = m[r * 4 + 0] * v[0] + m[r * 4 + 1] * v[1] + m[r * 4 + 2] * v[2] + m[r * 4 + 3] * v[3];
    }
  }

  void rx(int q, double theta) { apply_1q(q, gates::rx(theta)); }
  void ry(int q, double theta) { apply_1q(q, gates::ry(theta)); }
  void rz(int q, double theta) { apply_1q(q, gates::rz(theta)); }
  void h(int q) { apply_1q(q, gates::h()); }
  void s(int q) { apply_1q(q, gates::s()); }
  void sdg(int q) { apply_1q(q, gates::sdg()); }

  void x(int q) {
    check(q);
    const std::size_t bit = std::size_t{1} << q;
    for (std::size_t i = 0; i < amp_.size(); ++i)
      if (!(i & bit)) std::swap(amp_[i], amp_[i | bit]);
  }

  void cz(int q1, int q2) {
    check(q1);
    check(q2);
    if (q1 == q2) throw std::invalid_argument("cz on repeated qubit " + std::to_string(q1));
    const std::size_t both = (std::size_t{1} << q1) | (std::size_t{1} << q2);
    for (std::size_t i = 0; i < amp_.size(); ++i)
      if ((i & both) == both) amp_[i] = -amp_[i];
  }

  void tk2(int q1, int q2, double alpha, double beta, double gamma) {
    apply_2q(q1, q2, gates::tk2(alpha, beta, gamma));
  }

  /// Probability that qubit q reads 1.
  double prob_one(int q) const {
    check(q);
    const std::size_t bit = std::size_t{1} << q;
    double p = 0;
    for (std::size_t i = 0; i < amp_.size(); ++i)
      if (i & bit) p += std::norm(amp_[i]);
    return p;
  }

  /// Projects qubit q onto `bit` and renormalises.
  void collapse(int q, int bit) {
    const std::size_t mask = std::size_t{1} << q;
    const std::size_t want = bit ? mask : 0;
    double keep = 0;
    for (std::size_t i = 0; i < amp_.size(); ++i) {
      if ((i & mask) == want)
        keep += std::norm(amp_[i]);
      else
        amp_[i] = 0;
    }
    if (keep < 1e-14)
      throw NumericalIntegrityError("measurement branch of qubit " + std::to_string(q) +
                                    " has vanishing weight " + std::to_string(keep));
    const double scale = 1.0 / std::sqrt(keep);
    for (cplx& a : amp_) a *= scale;
  }

  /// Born-rule measurement: one uniform draw u, outcome 1 iff u < P(1).
  int measure(int q, RngStream& rng) {
    const double p1 = prob_one(q);
    const int bit = rng.uniform() < p1 ? 1 : 0;
    collapse(q, bit);
    return bit;
  }

  /// Measure and flip to `bit`. A qubit whose other branch has exactly zero
  /// weight (for instance right after a collapse) consumes no draw.
  void reset_to(int q, int bit, RngStream& rng) {
    check(q);
    const std::size_t mask = std::size_t{1} << q;
    double w0 = 0, w1 = 0;
    for (std::size_t i = 0; i < amp_.size(); ++i) (i & mask ? w1 : w0) += std::norm(amp_[i]);
    int current;
    if (w1 == 0.0)
      current = 0;
    else if (w0 == 0.0)
      current = 1;
    else
      current = measure(q, rng);
    if (current != bit) x(q);
  }

  double expect_pauli(const PauliString& p) const {
    if (!p.is_hermitian()) throw std::invalid_argument("expectation of non-Hermitian Pauli string " + p.str());
    for (const auto& [q, op] : p.ops()) check(q);
    std::uint64_t xm, zm;
    cplx coef;
    p.to_masks(xm, zm, coef);
    cplx acc = 0;
    for (std::size_t i = 0; i < amp_.size(); ++i) {
      const double sign = (std::popcount(i & zm) & 1) ? -1.0 : 1.0;
      acc += std::conj(amp_[i ^ xm]) * amp_[i] * sign;
    }
    return (coef * acc).real();
  }

  /// ⟨ψ| σ+_j σ-_k · coef·X^xmask Z^zmask |ψ⟩ for j,k outside both masks.
  cplx expect_hop(int j, int k, std::uint64_t xmask, std::uint64_t zmask, cplx coef) const {
    check(j);
    check(k);
    const std::size_t jb = std::size_t{1} << j, kb = std::size_t{1} << k;
    cplx acc = 0;
    for (std::size_t i = 0; i < amp_.size(); ++i) {
      if ((i & (jb | kb)) != kb) continue;
      const double sign = (std::popcount(i & zmask) & 1) ? -1.0 : 1.0;
      const std::size_t out = (i ^ xmask ^ kb) | jb;
      acc += std::conj(amp_[out]) * amp_[i] * sign;
    }
    return coef * acc;
  }

  /// exp(-iΔt [β σ+_j σ-_k Q + h.c. + V n_j n_k]) with Q = qcoef·X^xmask Z^zmask
  /// Hermitian and supported away from j and k.
  void apply_bond_exp(int j, int k, std::uint64_t xmask, std::uint64_t zmask, cplx qcoef, cplx beta, double V,
                      double dt) {
    check(j);
    check(k);
    const std::size_t jb = std::size_t{1} << j, kb = std::size_t{1} << k;
    const double mag = std::abs(beta);
    const double c = std::cos(mag * dt), sn = std::sin(mag * dt);
    const cplx unit = mag > 0 ? beta / mag : cplx(0, 0);
    const cplx both_phase = std::polar(1.0, -V * dt);
    const int lo = std::min(j, k), hi = std::max(j, k);
    const std::size_t quarter = amp_.size() >> 2;
    for (std::size_t q = 0; q < quarter; ++q) {
      const std::size_t base = insert_zero(insert_zero(q, lo), hi);
      if (V != 0.0) amp_[base | jb | kb] *= both_phase;
      const std::size_t a = base | kb;
      const std::size_t b = (base ^ xmask) | jb;
      const double sign = (std::popcount(a & zmask) & 1) ? -1.0 : 1.0;
      // ⟨b|H|a⟩ = β·q(a); the 2×2 block is [[0, conj], [β q, 0]] in (a, b).
      const cplx off = unit * qcoef * sign;
      const cplx va = amp_[a], vb = amp_[b];
      amp_[a] = c * va + cplx(0, -sn) * std::conj(off) * vb;
      amp_[b] = cplx(0, -sn) * off * va + c * vb;
    }
  }

  /// Little-endian dump of (re, im) doubles.
  void dump(std::ostream& out) const {
    out.write(reinterpret_cast<const char*>(amp_.data()), static_cast<std::streamsize>(amp_.size() * sizeof(cplx)));
  }

 private:
  /// Spreads k so that bit position b is zero: the k-th index with bit b clear.
  static std::size_t insert_zero(std::size_t k, int b) {
    const std::size_t low = (std::size_t{1} << b) - 1;
    return ((k & ~low) << 1) | (k & low);
  }

  void check(int q) const {
    if (q < 0 || q >= n_)
      throw std::out_of_range("qubit index " + std::to_string(q) + " outside register of " + std::to_string(n_));
  }

  int n_ = 0;
  std::vector<cplx> amp_;
};

}  // namespace nessim
