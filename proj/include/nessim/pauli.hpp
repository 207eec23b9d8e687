#pragma once

#include <complex>
#include <cstdint>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>

namespace nessim {

using cplx = std::complex<double>;

enum class Pauli : char { X = 'X', Y = 'Y', Z = 'Z' };

/// Sparse Pauli string i^phase · ⊗_q P_q. Identity factors are never stored.
class PauliString {
 public:
  PauliString() = default;

  static PauliString single(int qubit, Pauli p) {
    PauliString s;
    s.ops_[qubit] = p;
    return s;
  }

  /// Parses strings like "X4 Z5 Y0" with an optional leading sign "-", "i" or "-i".
  static PauliString parse(const std::string& text) {
    PauliString s;
    std::istringstream in(text);
    std::string tok;
    while (in >> tok) {
      if (tok == "-") { s.phase_ = (s.phase_ + 2) % 4; continue; }
      if (tok == "i") { s.phase_ = (s.phase_ + 1) % 4; continue; }
      if (tok == "-i") { s.phase_ = (s.phase_ + 3) % 4; continue; }
      if (tok.size() < 2 || (tok[0] != 'X' && tok[0] != 'Y' && tok[0] != 'Z'))
        throw std::invalid_argument("bad Pauli token '" + tok + "'");
      s = s * single(std::stoi(tok.substr(1)), static_cast<Pauli>(tok[0]));
    }
    return s;
  }

  int phase() const { return phase_; }
  const std::map<int, Pauli>& ops() const { return ops_; }
  bool is_identity() const { return ops_.empty(); }

  cplx coefficient() const {
    static const cplx table[4] = {{1, 0}, {0, 1}, {-1, 0}, {0, -1}};
    return table[phase_];
  }

  Pauli at(int q) const { return ops_.at(q); }
  bool acts_on(int q) const { return ops_.count(q) != 0; }

  PauliString operator-() const {
    PauliString r = *this;
    r.phase_ = (r.phase_ + 2) % 4;
    return r;
  }

  PauliString times_i(int power) const {
    PauliString r = *this;
    r.phase_ = ((r.phase_ + power) % 4 + 4) % 4;
    return r;
  }

  friend PauliString operator*(const PauliString& a, const PauliString& b) {
    PauliString r = a;
    r.phase_ = (a.phase_ + b.phase_) % 4;
    for (const auto& [q, p] : b.ops_) {
      auto it = r.ops_.find(q);
      if (it == r.ops_.end()) {
        r.ops_[q] = p;
        continue;
      }
      const Pauli l = it->second;
      if (l == p) {
        r.ops_.erase(it);
        continue;
      }
      // XY = iZ, YZ = iX, ZX = iY and the reversed products pick up -i.
      const bool cyclic = (l == Pauli::X && p == Pauli::Y) || (l == Pauli::Y && p == Pauli::Z) ||
                          (l == Pauli::Z && p == Pauli::X);
      r.phase_ = (r.phase_ + (cyclic ? 1 : 3)) % 4;
      it->second = third(l, p);
    }
    return r;
  }

  bool commutes_with(const PauliString& other) const {
    int anti = 0;
    for (const auto& [q, p] : ops_) {
      auto it = other.ops_.find(q);
      if (it != other.ops_.end() && it->second != p) ++anti;
    }
    return anti % 2 == 0;
  }

  /// Hermitian strings have a real coefficient.
  bool is_hermitian() const { return phase_ % 2 == 0; }

  bool operator==(const PauliString& o) const { return phase_ == o.phase_ && ops_ == o.ops_; }

  /// Equivalent form coef · X^xmask Z^zmask (Z applied first), with Y = i X Z.
  void to_masks(std::uint64_t& xmask, std::uint64_t& zmask, cplx& coef) const {
    xmask = zmask = 0;
    int ph = phase_;
    for (const auto& [q, p] : ops_) {
      const std::uint64_t bit = std::uint64_t{1} << q;
      if (p == Pauli::X) xmask |= bit;
      if (p == Pauli::Z) zmask |= bit;
      if (p == Pauli::Y) {
        xmask |= bit;
        zmask |= bit;
        ph += 1;
      }
    }
    static const cplx table[4] = {{1, 0}, {0, 1}, {-1, 0}, {0, -1}};
    coef = table[ph % 4];
  }

  std::string str() const {
    static const char* signs[4] = {"+", "+i", "-", "-i"};
    std::string s = signs[phase_];
    for (const auto& [q, p] : ops_) s += " " + std::string(1, static_cast<char>(p)) + std::to_string(q);
    return s;
  }

 private:
  static Pauli third(Pauli a, Pauli b) {
    if (a != Pauli::X && b != Pauli::X) return Pauli::X;
    if (a != Pauli::Y && b != Pauli::Y) return Pauli::Y;
    return Pauli::Z;
  }

  int phase_ = 0;
  std::map<int, Pauli> ops_;
};

}  // namespace nessim
