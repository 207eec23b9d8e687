#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "channel.hpp"
#include "gates.hpp"
#include "lattice.hpp"
#include "model.hpp"
#include "observables.hpp"
#include "rng.hpp"
#include "state_vector.hpp"

namespace nessim {

// Textual circuit programs.
//
//   OPENQASM 3;
//   #pragma nessim params {...}
//   #pragma nessim layout {...}
//   qreg q[n];
//   creg c[k];
//   ry(θ) q[i];  rx, rz likewise;  h, x, s, sdg take no parameter
//   tk2(a, b, c) q[i], q[j];       exp(−i(a XX + b YY + c ZZ)/2)
//   cz q[i], q[j];
//   measure q[i] -> c[j];
//   reset q[i];                    returns the qubit to |0⟩
//   if (c[j] == 1) { ... }         blocks nest
//   // comment
//
// Angles are radians printed with 17 significant digits. The `layout`
// pragma says which classical bits make up the trajectory record.

struct ParseError : std::runtime_error {
  ParseError(int line, int col, const std::string& msg)
      : std::runtime_error(std::to_string(line) + ":" + std::to_string(col) + ": " + msg), line(line), col(col) {}
  int line;
  int col;
};

struct SemanticError : std::runtime_error {
  SemanticError(int index, const std::string& msg)
      : std::runtime_error("instruction " + std::to_string(index) + ": " + msg), index(index) {}
  int index;
};

enum class InstrKind { gate, measure, reset, conditional, comment };

struct Instruction {
  InstrKind kind = InstrKind::comment;
  Gate gate;     // gate: angles in half-turns, as GateSequence stores them
  int qubit = -1;  // measure, reset
  int clbit = -1;  // measure target, conditional guard
  int value = 1;   // conditional guard value
  std::vector<Instruction> body;
  std::string text;  // comment
  int index = -1;    // position in program order, for diagnostics
  int line = 0;
};

struct CircuitProgram {
  int n_qubits = 0;
  int n_clbits = 0;
  nlohmann::json params;  // ModelParams, informational
  nlohmann::json layout;  // record layout, see build_program
  std::vector<Instruction> body;
};

// ---------------------------------------------------------------------------
// Building

namespace detail {

class ProgramBuilder {
 public:
  explicit ProgramBuilder(CircuitProgram& p) : p_(p) { stack_.push_back(&p_.body); }

  void gate(const Gate& g) {
    Instruction in;
    in.kind = InstrKind::gate;
    in.gate = g;
    push(std::move(in));
  }
  void one(GateKind k, int q, double half_turns = 0) {
    Gate g;
    g.kind = k;
    g.qubits = {q, -1};
    g.params = {half_turns, 0, 0};
    gate(g);
  }
  void two(GateKind k, int a, int b) {
    Gate g;
    g.kind = k;
    g.qubits = {a, b};
    gate(g);
  }
  int measure(int q) {
    Instruction in;
    in.kind = InstrKind::measure;
    in.qubit = q;
    in.clbit = p_.n_clbits++;
    const int c = in.clbit;
    push(std::move(in));
    return c;
  }
  void reset(int q) {
    Instruction in;
    in.kind = InstrKind::reset;
    in.qubit = q;
    push(std::move(in));
  }
  void comment(std::string text) {
    Instruction in;
    in.kind = InstrKind::comment;
    in.text = std::move(text);
    push(std::move(in));
  }
  void open_if(int clbit, int value = 1) {
    Instruction in;
    in.kind = InstrKind::conditional;
    in.clbit = clbit;
    in.value = value;
    stack_.back()->push_back(std::move(in));
    stack_.push_back(&stack_.back()->back().body);
  }
  void close_if() { stack_.pop_back(); }

  void sequence(const GateSequence& seq) {
    for (const Gate& g : seq.gates()) {
      if (g.kind == GateKind::barrier)
        comment(g.label);
      else if (g.kind == GateKind::relabel)
        comment("relabel " + g.label);
      else
        gate(g);
    }
  }

 private:
  void push(Instruction in) { stack_.back()->push_back(std::move(in)); }
  CircuitProgram& p_;
  std::vector<std::vector<Instruction>*> stack_;
};

inline void number_instructions(std::vector<Instruction>& body, int& next) {
  for (Instruction& in : body) {
    in.index = next++;
    number_instructions(in.body, next);
  }
}

}  // namespace detail

/// The full experiment of one trajectory as a circuit: initial-state
/// preparation, m periods of Trotter step plus coin-conditioned drive, and an
/// optional final measurement (FinalShot::density or a current sector 0..3).
/// The two coins are explicit qubits placed after the encoding's register.
/// Executed with interpret() it consumes random numbers in the same order as
/// TrajectorySimulator::run with CoinMode::circuit.
inline CircuitProgram build_program(const ModelParams& mp, int final_shot = FinalShot::density) {
  mp.validate();
  const Lattice lat = Lattice::square(mp.width, mp.height);
  const Encoding enc = make_encoding(lat, mp.encoding_kind());
  const int n = lat.num_sites();
  const int coin_s = enc.n_qubits, coin_d = enc.n_qubits + 1;
  std::optional<CurrentMeasurement> cm;
  if (final_shot != FinalShot::none && final_shot != FinalShot::density) {
    if (final_shot < 0 || final_shot > 3) throw std::invalid_argument("final measurement must be density or sector 0..3");
    cm = current_measurement_basis(lat, enc, mp, final_shot);
  }

  CircuitProgram prog;
  prog.n_qubits = enc.n_qubits + 2;
  prog.params = to_json(mp);
  detail::ProgramBuilder b(prog);
  nlohmann::json init = nlohmann::json::array();

  b.comment("initial state");
  for (int i = 0; i < n; ++i) {
    if (i == lat.source() || i == lat.drain()) {
      init.push_back({{"const", i == lat.source() ? 1 : 0}});
      continue;
    }
    switch (mp.init) {
      case InitKind::random_product:
        b.one(GateKind::h, i);
        init.push_back({{"c", b.measure(i)}});
        break;
      case InitKind::biased_product:
        b.one(GateKind::ry, i, init_rotation(mp.target_densities[i]));
        init.push_back({{"c", b.measure(i)}});
        break;
      case InitKind::bitstring: {
        const int bit = static_cast<int>((mp.init_bits >> i) & 1);
        if (bit) b.one(GateKind::x, i);
        init.push_back({{"const", bit}});
        break;
      }
    }
  }
  b.one(GateKind::x, lat.source());
  if (enc.kind == EncodingKind::derby_klassen) {
    b.comment("stabilizer ancillas");
    b.one(GateKind::rx, DerbyKlassen::kAncillaA, -0.5);
    b.one(GateKind::rx, DerbyKlassen::kAncillaB, -0.5);
    for (int j = 4; j <= 11; ++j) b.two(GateKind::cz, j, DerbyKlassen::kAncillaB);
  }

  const GateSequence step = build_trotter_step(lat, enc, mp);
  const double coin = coin_angle(mp.p);
  nlohmann::json periods = nlohmann::json::array();
  for (int t = 0; t < mp.m; ++t) {
    b.comment("period " + std::to_string(t));
    b.sequence(step);
    b.one(GateKind::ry, coin_s, coin);
    b.one(GateKind::ry, coin_d, coin);
    const int cs = b.measure(coin_s);
    const int cd = b.measure(coin_d);
    b.open_if(cs);
    const int sb = b.measure(lat.source());
    b.reset(lat.source());
    b.one(GateKind::x, lat.source());
    b.close_if();
    b.open_if(cd);
    const int db = b.measure(lat.drain());
    b.reset(lat.drain());
    b.close_if();
    b.reset(coin_s);
    b.reset(coin_d);
    periods.push_back({cs, cd, sb, db});
  }

  nlohmann::json final_bits = nlohmann::json::array();
  if (final_shot != FinalShot::none) {
    b.comment("final measurement: " + basis_label(final_shot));
    if (cm) b.sequence(cm->circuit);
    for (int q = 0; q < n; ++q) final_bits.push_back(b.measure(q));
  }

  prog.layout = {{"sites", n},         {"coins", {coin_s, coin_d}}, {"init", init},
                 {"periods", periods}, {"final", final_bits},       {"basis", basis_label(final_shot)}};
  int next = 0;
  detail::number_instructions(prog.body, next);
  return prog;
}

// ---------------------------------------------------------------------------
// Text form

namespace detail {

inline std::string radians(double half_turns) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", half_turns * std::numbers::pi);
  return buf;
}

inline void write_body(std::string& out, const std::vector<Instruction>& body, int depth) {
  const std::string pad(static_cast<size_t>(2 * depth), ' ');
  for (const Instruction& in : body) {
    out += pad;
    switch (in.kind) {
      case InstrKind::comment: out += "// " + in.text + "\n"; break;
      case InstrKind::measure:
        out += "measure q[" + std::to_string(in.qubit) + "] -> c[" + std::to_string(in.clbit) + "];\n";
        break;
      case InstrKind::reset: out += "reset q[" + std::to_string(in.qubit) + "];\n"; break;
      case InstrKind::conditional:
        out += "if (c[" + std::to_string(in.clbit) + "] == " + std::to_string(in.value) + ") {\n";
        write_body(out, in.body, depth + 1);
        out += pad + "}\n";
        break;
      case InstrKind::gate: {
        const Gate& g = in.gate;
        out += gate_name(g.kind);
        switch (g.kind) {
          case GateKind::rx:
          case GateKind::ry:
          case GateKind::rz: out += "(" + radians(g.params[0]) + ")"; break;
          case GateKind::tk2:
            out += "(" + radians(g.params[0]) + ", " + radians(g.params[1]) + ", " + radians(g.params[2]) + ")";
            break;
          default: break;
        }
        out += " q[" + std::to_string(g.qubits[0]) + "]";
        if (gate_arity(g.kind) == 2) out += ", q[" + std::to_string(g.qubits[1]) + "]";
        out += ";\n";
        break;
      }
    }
  }
}

}  // namespace detail

inline std::string to_text(const CircuitProgram& p) {
  std::string out = "OPENQASM 3;\n";
  if (!p.params.is_null()) out += "#pragma nessim params " + p.params.dump() + "\n";
  if (!p.layout.is_null()) out += "#pragma nessim layout " + p.layout.dump() + "\n";
  out += "qreg q[" + std::to_string(p.n_qubits) + "];\n";
  out += "creg c[" + std::to_string(p.n_clbits) + "];\n";
  detail::write_body(out, p.body, 0);
  return out;
}

inline std::string emit(const ModelParams& mp, int final_shot = FinalShot::density) {
  return to_text(build_program(mp, final_shot));
}

// ---------------------------------------------------------------------------
// Parsing

namespace detail {

enum class Tok { ident, number, symbol, pragma, end };

struct Token {
  Tok kind = Tok::end;
  std::string text;
  int line = 1;
  int col = 1;
};

class Lexer {
 public:
  explicit Lexer(std::string_view src) : src_(src) {}

  /// Next token; comments are returned as symbol "//" with the comment text.
  Token next() {
    skip_space();
    Token t;
    t.line = line_;
    t.col = col_;
    if (pos_ >= src_.size()) return t;
    const char ch = src_[pos_];
    if (ch == '/' && peek(1) == '/') {
      advance(2);
      t.kind = Tok::symbol;
      t.text = "//" + std::string(trim(rest_of_line()));
      return t;
    }
    if (ch == '#') {
      t.kind = Tok::pragma;
      t.text = std::string(rest_of_line());
      return t;
    }
    if (std::isalpha(static_cast<unsigned char>(ch)) || ch == '_') {
      t.kind = Tok::ident;
      while (pos_ < src_.size() && (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_'))
        t.text += take();
      return t;
    }
    if (std::isdigit(static_cast<unsigned char>(ch)) || ch == '.' ||
        ((ch == '-' || ch == '+') && (std::isdigit(static_cast<unsigned char>(peek(1))) || peek(1) == '.'))) {
      t.kind = Tok::number;
      t.text += take();
      while (pos_ < src_.size()) {
        const char c = src_[pos_];
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.')
          t.text += take();
        else if ((c == 'e' || c == 'E') && pos_ + 1 < src_.size()) {
          t.text += take();
          if (src_[pos_] == '+' || src_[pos_] == '-') t.text += take();
        } else
          break;
      }
      return t;
    }
    t.kind = Tok::symbol;
    if ((ch == '-' && peek(1) == '>') || (ch == '=' && peek(1) == '=')) {
      t.text = std::string(src_.substr(pos_, 2));
      advance(2);
      return t;
    }
    t.text = std::string(1, take());
    return t;
  }

 private:
  char peek(size_t k) const { return pos_ + k < src_.size() ? src_[pos_ + k] : '\0'; }
  char take() {
    const char c = src_[pos_++];
    if (c == '\n') {
      ++line_;
      col_ = 1;
    } else {
      ++col_;
    }
    return c;
  }
  void advance(size_t k) {
    for (size_t i = 0; i < k && pos_ < src_.size(); ++i) take();
  }
  void skip_space() {
    while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[pos_]))) take();
  }
  std::string_view rest_of_line() {
    const size_t start = pos_;
    while (pos_ < src_.size() && src_[pos_] != '\n') take();
    return src_.substr(start, pos_ - start);
  }
  static std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
  }

  std::string_view src_;
  size_t pos_ = 0;
  int line_ = 1;
  int col_ = 1;
};

class Parser {
 public:
  explicit Parser(std::string_view src) : lex_(src) { advance(); }

  CircuitProgram parse() {
    CircuitProgram p;
    bool have_q = false, have_c = false;
    if (is_ident("OPENQASM")) {
      advance();
      expect_kind(Tok::number, "version number");
      advance();
      expect_symbol(";");
    }
    for (;;) {
      if (cur_.kind == Tok::pragma) {
        pragma(p);
      } else if (is_symbol_prefix("//") && !have_q && !have_c) {
        advance();
      } else if (is_ident("qreg") || is_ident("creg")) {
        const bool q = cur_.text == "qreg";
        if (q ? have_q : have_c) fail("register declared twice");
        advance();
        if (!is_ident(q ? "q" : "c")) fail(std::string("expected register name '") + (q ? "q" : "c") + "'");
        advance();
        expect_symbol("[");
        const int size = q ? integer("qubit count", 1, StateVector::kMaxQubits + 1)
                           : integer("classical register size", 0, kMaxRegister);
        expect_symbol("]");
        expect_symbol(";");
        (q ? p.n_qubits : p.n_clbits) = size;
        (q ? have_q : have_c) = true;
      } else {
        break;
      }
    }
    if (!have_q) fail("expected 'qreg q[n];' before the first instruction");
    if (!have_c) p.n_clbits = 0;
    nq_ = p.n_qubits;
    nc_ = p.n_clbits;
    body(p.body, false);
    int next = 0;
    number_instructions(p.body, next);
    return p;
  }

 private:
  static constexpr int kMaxRegister = 1 << 24;

  [[noreturn]] void fail(const std::string& msg) const { throw ParseError(cur_.line, cur_.col, msg); }

  void advance() { cur_ = lex_.next(); }
  bool is_ident(const char* s) const { return cur_.kind == Tok::ident && cur_.text == s; }
  bool is_symbol(const char* s) const { return cur_.kind == Tok::symbol && cur_.text == s; }
  bool is_symbol_prefix(const char* s) const { return cur_.kind == Tok::symbol && cur_.text.rfind(s, 0) == 0; }

  void expect_symbol(const char* s) {
    if (!is_symbol(s)) fail(std::string("expected '") + s + "'" + found());
    advance();
  }
  void expect_kind(Tok k, const char* what) {
    if (cur_.kind != k) fail(std::string("expected ") + what + found());
  }
  std::string found() const {
    if (cur_.kind == Tok::end) return ", found end of input";
    return ", found '" + cur_.text + "'";
  }

  int integer(const char* what, int lo, int hi_exclusive) {
    expect_kind(Tok::number, what);
    const std::string& s = cur_.text;
    if (s.empty() || !std::all_of(s.begin(), s.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); }))
      fail(std::string(what) + " must be a non-negative integer" + found());
    if (s.size() > 9) fail(std::string(what) + " out of range");
    const int v = std::stoi(s);
    if (v < lo || v >= hi_exclusive)
      fail(std::string(what) + " " + s + " out of range [" + std::to_string(lo) + ", " + std::to_string(hi_exclusive) + ")");
    advance();
    return v;
  }

  double real() {
    expect_kind(Tok::number, "angle");
    char* end = nullptr;
    const double v = std::strtod(cur_.text.c_str(), &end);
    if (end != cur_.text.c_str() + cur_.text.size() || !std::isfinite(v)) fail("malformed number '" + cur_.text + "'");
    advance();
    return v;
  }

  int qref() {
    if (!is_ident("q")) fail("expected qubit reference q[i]" + found());
    advance();
    expect_symbol("[");
    const int q = integer("qubit index", 0, nq_);
    expect_symbol("]");
    return q;
  }
  int cref() {
    if (!is_ident("c")) fail("expected classical bit reference c[i]" + found());
    advance();
    expect_symbol("[");
    const int c = integer("classical bit index", 0, nc_);
    expect_symbol("]");
    return c;
  }

  void pragma(CircuitProgram& p) {
    const std::string line = cur_.text;
    const std::string prefix = "#pragma nessim ";
    if (line.rfind(prefix, 0) != 0) fail("unknown directive");
    const std::string rest = line.substr(prefix.size());
    const size_t sp = rest.find(' ');
    const std::string key = rest.substr(0, sp);
    nlohmann::json value;
    try {
      value = nlohmann::json::parse(sp == std::string::npos ? std::string() : rest.substr(sp + 1));
    } catch (const nlohmann::json::exception& e) {
      fail("malformed pragma payload: " + std::string(e.what()));
    }
    if (key == "params")
      p.params = std::move(value);
    else if (key == "layout")
      p.layout = std::move(value);
    else
      fail("unknown pragma '" + key + "'");
    advance();
  }

  void body(std::vector<Instruction>& out, bool nested) {
    for (;;) {
      if (cur_.kind == Tok::end) {
        if (nested) fail("unterminated conditional block");
        return;
      }
      if (is_symbol("}")) {
        if (!nested) fail("unmatched '}'");
        advance();
        return;
      }
      out.push_back(statement());
    }
  }

  Instruction statement() {
    Instruction in;
    in.line = cur_.line;
    if (is_symbol_prefix("//")) {
      in.kind = InstrKind::comment;
      in.text = cur_.text.substr(2);
      if (!in.text.empty() && in.text.front() == ' ') in.text.erase(0, 1);
      advance();
      return in;
    }
    if (cur_.kind == Tok::pragma) fail("pragmas must precede the register declarations");
    if (cur_.kind != Tok::ident) fail("expected an instruction" + found());
    const std::string word = cur_.text;
    if (word == "measure") {
      advance();
      in.kind = InstrKind::measure;
      in.qubit = qref();
      expect_symbol("->");
      in.clbit = cref();
      expect_symbol(";");
      return in;
    }
    if (word == "reset") {
      advance();
      in.kind = InstrKind::reset;
      in.qubit = qref();
      expect_symbol(";");
      return in;
    }
    if (word == "if") {
      advance();
      in.kind = InstrKind::conditional;
      expect_symbol("(");
      in.clbit = cref();
      expect_symbol("==");
      in.value = integer("guard value", 0, 2);
      expect_symbol(")");
      expect_symbol("{");
      body(in.body, true);
      return in;
    }
    if (word == "qreg" || word == "creg") fail("registers must be declared before the first instruction");
    in.kind = InstrKind::gate;
    in.gate = gate(word);
    return in;
  }

  Gate gate(const std::string& word) {
    static const std::pair<const char*, GateKind> table[] = {
        {"rx", GateKind::rx}, {"ry", GateKind::ry}, {"rz", GateKind::rz},   {"h", GateKind::h},     {"x", GateKind::x},
        {"s", GateKind::s},   {"sdg", GateKind::sdg}, {"cz", GateKind::cz}, {"tk2", GateKind::tk2}};
    Gate g;
    bool known = false;
    for (const auto& [name, kind] : table)
      if (word == name) {
        g.kind = kind;
        known = true;
      }
    if (!known) fail("unknown gate '" + word + "'");
    advance();
    const int n_params = g.kind == GateKind::tk2 ? 3 : (g.kind == GateKind::rx || g.kind == GateKind::ry || g.kind == GateKind::rz) ? 1 : 0;
    int got = 0;
    if (is_symbol("(")) {
      advance();
      for (;;) {
        if (got == n_params) fail(word + " takes " + std::to_string(n_params) + " parameter(s)");
        g.params[got++] = real() / std::numbers::pi;
        if (is_symbol(")")) break;
        expect_symbol(",");
      }
      advance();
    }
    if (got != n_params) fail(word + " takes " + std::to_string(n_params) + " parameter(s), got " + std::to_string(got));
    const int arity = gate_arity(g.kind);
    g.qubits[0] = qref();
    if (arity == 2) {
      if (!is_symbol(",")) fail(word + " acts on 2 qubits" + found());
      advance();
      g.qubits[1] = qref();
      if (g.qubits[1] == g.qubits[0]) fail(word + " on a repeated qubit");
    } else if (is_symbol(",")) {
      fail(word + " acts on 1 qubit");
    }
    expect_symbol(";");
    return g;
  }

  Lexer lex_;
  Token cur_;
  int nq_ = 0;
  int nc_ = 0;
};

}  // namespace detail

inline CircuitProgram parse_program(std::string_view text) { return detail::Parser(text).parse(); }

// ---------------------------------------------------------------------------
// Interpretation

struct Interpretation {
  StateVector psi;
  std::vector<int> clbits;  // -1 where never written
  TrajectoryRecord record;
};

namespace detail {

inline void run_body(const std::vector<Instruction>& body, StateVector& psi, std::vector<int>& c, RngStream& rng) {
  for (const Instruction& in : body) {
    switch (in.kind) {
      case InstrKind::comment: break;
      case InstrKind::gate: apply_gate(psi, in.gate); break;
      case InstrKind::measure: c[in.clbit] = psi.measure(in.qubit, rng); break;
      case InstrKind::reset: psi.reset_to(in.qubit, 0, rng); break;
      case InstrKind::conditional:
        if (c[in.clbit] < 0) throw SemanticError(in.index, "c[" + std::to_string(in.clbit) + "] read before written");
        if (c[in.clbit] == in.value) run_body(in.body, psi, c, rng);
        break;
    }
  }
}

inline int layout_bit(const nlohmann::json& entry, const std::vector<int>& c) {
  if (entry.is_number_integer()) {
    const int k = entry.get<int>();
    return k >= 0 && k < static_cast<int>(c.size()) ? c[k] : -1;
  }
  if (entry.contains("const")) return entry.at("const").get<int>();
  return layout_bit(entry.at("c"), c);
}

}  // namespace detail

/// Runs the program on a fresh |0…0⟩ register. When the program carries a
/// layout pragma the classical bits are also assembled into a trajectory record.
inline Interpretation interpret(const CircuitProgram& prog, RngStream& rng) {
  Interpretation out{StateVector(prog.n_qubits), std::vector<int>(static_cast<size_t>(prog.n_clbits), -1), {}};
  out.record.seed = rng.seed();
  out.record.stream = rng.stream();
  detail::run_body(prog.body, out.psi, out.clbits, rng);
  if (prog.layout.is_object()) {
    try {
      for (const auto& e : prog.layout.at("init")) out.record.init_bits.push_back(detail::layout_bit(e, out.clbits));
      for (const auto& e : prog.layout.at("periods")) {
        PeriodRecord pr;
        pr.source_coin = detail::layout_bit(e.at(0), out.clbits);
        pr.drain_coin = detail::layout_bit(e.at(1), out.clbits);
        pr.source_bit = detail::layout_bit(e.at(2), out.clbits);
        pr.drain_bit = detail::layout_bit(e.at(3), out.clbits);
        out.record.periods.push_back(pr);
      }
      for (const auto& e : prog.layout.at("final")) out.record.final_bits.push_back(detail::layout_bit(e, out.clbits));
      out.record.basis = prog.layout.value("basis", std::string("none"));
    } catch (const nlohmann::json::exception& e) {
      throw SemanticError(-1, std::string("malformed layout pragma: ") + e.what());
    }
  }
  return out;
}

inline Interpretation interpret(std::string_view text, RngStream& rng) { return interpret(parse_program(text), rng); }

}  // namespace nessim
