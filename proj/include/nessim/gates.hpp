#pragma once

#include <algorithm>
#include <array>
#include <stdexcept>
#include <string>
#include <vector>

#include "state_vector.hpp"

namespace nessim {

enum class GateKind { rx, ry, rz, h, x, s, sdg, cz, tk2, barrier, relabel };

inline const char* gate_name(GateKind k) {
  switch (k) {
    case GateKind::rx: return "rx";
    case GateKind::ry: return "ry";
    case GateKind::rz: return "rz";
    case GateKind::h: return "h";
    case GateKind::x: return "x";
    case GateKind::s: return "s";
    case GateKind::sdg: return "sdg";
    case GateKind::cz: return "cz";
    case GateKind::tk2: return "tk2";
    case GateKind::barrier: return "barrier";
    case GateKind::relabel: return "relabel";
  }
  return "?";
}

inline int gate_arity(GateKind k) {
  switch (k) {
    case GateKind::cz:
    case GateKind::tk2: return 2;
    case GateKind::barrier:
    case GateKind::relabel: return 0;
    default: return 1;
  }
}

inline int gate_param_count(GateKind k) {
  switch (k) {
    case GateKind::rx:
    case GateKind::ry:
    case GateKind::rz: return 1;
    case GateKind::tk2: return 3;
    default: return 0;
  }
}

/// One gate. Rotation and TK2 parameters are turn-normalised (see gates::rx).
/// `group` tags gates belonging to one bond gadget so they can be fused.
struct Gate {
  GateKind kind = GateKind::barrier;
  std::array<int, 2> qubits{-1, -1};
  std::array<double, 3> params{0, 0, 0};
  int group = -1;
  std::string label;  // barriers and relabel markers only
};

class GateSequence {
 public:
  GateSequence() = default;
  explicit GateSequence(int n_qubits) : n_qubits_(n_qubits) {}

  int n_qubits() const { return n_qubits_; }
  const std::vector<Gate>& gates() const { return gates_; }
  std::size_t size() const { return gates_.size(); }

  std::size_t count(GateKind k) const {
    return static_cast<std::size_t>(std::count_if(gates_.begin(), gates_.end(), [k](const Gate& g) { return g.kind == k; }));
  }

  void push(const Gate& g) {
    for (int a = 0; a < gate_arity(g.kind); ++a)
      if (g.qubits[a] < 0 || g.qubits[a] >= n_qubits_)
        throw std::out_of_range(std::string(gate_name(g.kind)) + " on qubit " + std::to_string(g.qubits[a]) +
                                " outside register of " + std::to_string(n_qubits_));
    if (gate_arity(g.kind) == 2 && g.qubits[0] == g.qubits[1])
      throw std::invalid_argument(std::string(gate_name(g.kind)) + " on repeated qubit");
    gates_.push_back(g);
  }

  void one(GateKind k, int q, double theta = 0, int group = -1) {
    Gate g;
    g.kind = k;
    g.qubits = {q, -1};
    g.params = {theta, 0, 0};
    g.group = group;
    push(g);
  }
  void two(GateKind k, int q1, int q2, std::array<double, 3> params = {0, 0, 0}, int group = -1) {
    Gate g;
    g.kind = k;
    g.qubits = {q1, q2};
    g.params = params;
    g.group = group;
    push(g);
  }
  void barrier(const std::string& label) {
    Gate g;
    g.kind = GateKind::barrier;
    g.label = label;
    gates_.push_back(g);
  }

  void append(const GateSequence& other) {
    if (other.n_qubits_ > n_qubits_) throw std::invalid_argument("appending a wider gate sequence");
    gates_.insert(gates_.end(), other.gates_.begin(), other.gates_.end());
  }

 private:
  int n_qubits_ = 0;
  std::vector<Gate> gates_;
};

inline void apply_gate(StateVector& psi, const Gate& g) {
  const int a = g.qubits[0], b = g.qubits[1];
  switch (g.kind) {
    case GateKind::rx: psi.rx(a, g.params[0]); break;
    case GateKind::ry: psi.ry(a, g.params[0]); break;
    case GateKind::rz: psi.rz(a, g.params[0]); break;
    case GateKind::h: psi.h(a); break;
    case GateKind::x: psi.x(a); break;
    case GateKind::s: psi.s(a); break;
    case GateKind::sdg: psi.sdg(a); break;
    case GateKind::cz: psi.cz(a, b); break;
    case GateKind::tk2: psi.tk2(a, b, g.params[0], g.params[1], g.params[2]); break;
    case GateKind::barrier:
    case GateKind::relabel: break;
  }
}

/// Applies every gate literally, in order.
inline void apply(StateVector& psi, const GateSequence& seq) {
  for (const Gate& g : seq.gates()) apply_gate(psi, g);
}

/// A gate sequence with each bond gadget multiplied out into one 4×4 matrix.
/// Runs of gates sharing a group id and touching at most two qubits are fused;
/// anything else is kept as a single gate.
class CompiledSequence {
 public:
  explicit CompiledSequence(const GateSequence& seq) {
    const auto& gs = seq.gates();
    std::size_t i = 0;
    while (i < gs.size()) {
      if (gs[i].group < 0 || gate_arity(gs[i].kind) == 0) {
        if (gate_arity(gs[i].kind) > 0) ops_.push_back(Op{false, gs[i], {}, -1, -1});
        ++i;
        continue;
      }
      std::size_t end = i;
      int qa = -1, qb = -1;
      bool fusable = true;
      while (end < gs.size() && gs[end].group == gs[i].group) {
        for (int a = 0; a < gate_arity(gs[end].kind); ++a) {
          const int q = gs[end].qubits[a];
          if (q == qa || q == qb) continue;
          if (qa < 0)
            qa = q;
          else if (qb < 0)
            qb = q;
          else
            fusable = false;
        }
        ++end;
      }
      if (!fusable || qb < 0) {
        for (std::size_t t = i; t < end; ++t)
          if (gate_arity(gs[t].kind) > 0) ops_.push_back(Op{false, gs[t], {}, -1, -1});
      } else {
        Mat4 m = gates::identity4();
        for (std::size_t t = i; t < end; ++t) m = gates::matmul(local_matrix(gs[t], qa, qb), m);
        ops_.push_back(Op{true, {}, m, qa, qb});
      }
      i = end;
    }
  }

  void apply(StateVector& psi) const {
    for (const Op& op : ops_) {
      if (op.fused)
        psi.apply_2q(op.qa, op.qb, op.matrix);
      else
        apply_gate(psi, op.gate);
    }
  }

  std::size_t size() const { return ops_.size(); }

 private:
  struct Op {
    bool fused;
    Gate gate;
    Mat4 matrix;
    int qa, qb;
  };

  static Mat2 one_qubit_matrix(const Gate& g) {
    switch (g.kind) {
      case GateKind::rx: return gates::rx(g.params[0]);
      case GateKind::ry: return gates::ry(g.params[0]);
      case GateKind::rz: return gates::rz(g.params[0]);
      case GateKind::h: return gates::h();
      case GateKind::x: return gates::x();
      case GateKind::s: return gates::s();
      case GateKind::sdg: return gates::sdg();
      default: throw std::logic_error("not a one-qubit gate");
    }
  }

  // Matrix of g on the (qa, qb) pair with local index bit(qa) + 2*bit(qb).
  static Mat4 local_matrix(const Gate& g, int qa, int /*qb*/) {
    const Mat2 id = {1, 0, 0, 1};
    if (gate_arity(g.kind) == 1) {
      const Mat2 m = one_qubit_matrix(g);
      return g.qubits[0] == qa ? gates::kron(id, m) : gates::kron(m, id);
    }
    // CZ and TK2 are symmetric under exchanging their qubits, so operand order is irrelevant.
    return g.kind == GateKind::cz ? gates::cz() : gates::tk2(g.params[0], g.params[1], g.params[2]);
  }

  std::vector<Op> ops_;
};

}  // namespace nessim
