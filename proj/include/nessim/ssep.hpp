#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>
#include <nlohmann/json.hpp>

#include "lattice.hpp"
#include "observables.hpp"
#include "parallel.hpp"
#include "rng.hpp"

namespace nessim {

enum class SsepInit { empty, random_half };

/// Discrete-time interacting exclusion process on an open W×H lattice with a
/// filling corner (site 0) and an emptying corner (last site).
///
/// The configuration energy is E = −V·(number of bonds with both ends
/// occupied), in units of temperature, so V > 0 favours neighbouring pairs.
struct SsepConfig {
  int width = 4;
  int height = 4;
  double V = 1.0;
  double gamma = 2.0;
  int steps = 300;  // time units; one unit is N = W·H micro-steps
  std::uint64_t trajectories = 1000;
  std::uint64_t seed = 1;
  SsepInit init = SsepInit::random_half;

  void validate() const {
    if (width < 2 || height < 2) throw std::invalid_argument("SSEP lattice must be at least 2x2");
    if (!(gamma >= 0) || !std::isfinite(gamma)) throw std::invalid_argument("SSEP gamma must be finite and >= 0");
    if (!std::isfinite(V)) throw std::invalid_argument("SSEP V must be finite");
    if (steps < 0) throw std::invalid_argument("SSEP steps must be >= 0");
  }
};

struct SsepState {
  std::vector<std::uint8_t> occ;
  std::uint64_t micro_steps = 0;
};

enum class SsepMove { source, drain, hop, rejected, blocked };

class SsepModel {
 public:
  explicit SsepModel(const SsepConfig& cfg) : cfg_(cfg), lat_(Lattice::square(cfg.width, cfg.height)) {
    cfg.validate();
    neighbours_.resize(static_cast<size_t>(lat_.num_sites()));
    for (const Bond& b : lat_.bonds()) {
      neighbours_[b.j].push_back(b.k);
      neighbours_[b.k].push_back(b.j);
    }
    total_weight_ = lat_.num_bonds() + 2 * cfg.gamma;
  }

  const SsepConfig& config() const { return cfg_; }
  const Lattice& lattice() const { return lat_; }

  /// Probability that a micro-step selects the source (equally, the drain).
  double corner_probability() const { return cfg_.gamma / total_weight_; }
  /// Probability that a micro-step selects any one given bond.
  double bond_probability() const { return 1.0 / total_weight_; }

  SsepState initial_state(RngStream& rng) const {
    SsepState s;
    s.occ.assign(static_cast<size_t>(lat_.num_sites()), 0);
    if (cfg_.init == SsepInit::random_half)
      for (auto& o : s.occ) o = rng.uniform() < 0.5 ? 1 : 0;
    return s;
  }

  int occupied_bonds(const SsepState& s) const {
    int n = 0;
    for (const Bond& b : lat_.bonds()) n += s.occ[b.j] & s.occ[b.k];
    return n;
  }

  double energy(const SsepState& s) const { return -cfg_.V * occupied_bonds(s); }

  /// One micro-step. Draws one uniform for the selection, and a second only
  /// when a hop raises the energy.
  SsepMove step(SsepState& s, RngStream& rng) const {
    ++s.micro_steps;
    const double r = rng.uniform() * total_weight_;
    if (r < cfg_.gamma) {
      s.occ[lat_.source()] = 1;
      return SsepMove::source;
    }
    if (r < 2 * cfg_.gamma) {
      s.occ[lat_.drain()] = 0;
      return SsepMove::drain;
    }
    const int b = std::min(lat_.num_bonds() - 1, static_cast<int>(r - 2 * cfg_.gamma));
    int from = lat_.bond(b).j, to = lat_.bond(b).k;
    if (s.occ[from] == s.occ[to]) return SsepMove::blocked;
    if (!s.occ[from]) std::swap(from, to);
    const double dE = -cfg_.V * (occupied_neighbours(s, to, from) - occupied_neighbours(s, from, to));
    if (dE > 0 && !(rng.uniform() < std::exp(-dE))) return SsepMove::rejected;
    s.occ[from] = 0;
    s.occ[to] = 1;
    return SsepMove::hop;
  }

  void advance(SsepState& s, RngStream& rng, int time_units) const {
    const std::uint64_t n = static_cast<std::uint64_t>(time_units) * static_cast<std::uint64_t>(lat_.num_sites());
    for (std::uint64_t k = 0; k < n; ++k) step(s, rng);
  }

  double time(const SsepState& s) const { return static_cast<double>(s.micro_steps) / lat_.num_sites(); }

  /// Final configuration of trajectory `index` after cfg.steps time units.
  SsepState run(std::uint64_t index) const {
    RngStream rng(cfg_.seed, index);
    SsepState s = initial_state(rng);
    advance(s, rng, cfg_.steps);
    return s;
  }

 private:
  int occupied_neighbours(const SsepState& s, int site, int except) const {
    int n = 0;
    for (int q : neighbours_[site])
      if (q != except) n += s.occ[q];
    return n;
  }

  SsepConfig cfg_;
  Lattice lat_;
  std::vector<std::vector<int>> neighbours_;
  double total_weight_ = 0;
};

/// Region of the lattice away from the drain edges: x < W−1 and y < H−1.
inline bool in_source_block(const Lattice& lat, int i) {
  const Site s = lat.site(i);
  return s.x < lat.width() - 1 && s.y < lat.height() - 1;
}

struct SsepField {
  int width = 0;
  int height = 0;
  std::uint64_t trajectories = 0;
  int time_units = 0;
  std::vector<MeanErr> density;
  MeanErr source_block;  // mean density of the sites off the drain edges
  MeanErr drain_edges;   // mean density of the top row and right column
  MeanErr block_minus_edges;
};

namespace detail {
inline MeanErr mean_err(double sum, double sum2, std::uint64_t n) {
  MeanErr m;
  if (n == 0) return m;
  m.mean = sum / static_cast<double>(n);
  if (n > 1) {
    const double var = std::max(0.0, (sum2 - n * m.mean * m.mean) / static_cast<double>(n - 1));
    m.sem = std::sqrt(var / static_cast<double>(n));
  }
  return m;
}
}  // namespace detail

/// Site densities averaged over independent trajectories at time cfg.steps.
inline SsepField ssep_ness(const SsepConfig& cfg, unsigned threads = 0) {
  cfg.validate();
  if (cfg.trajectories == 0) throw std::invalid_argument("SSEP needs at least one trajectory");
  const SsepModel model(cfg);
  const Lattice& lat = model.lattice();
  const int N = lat.num_sites();
  // Per-site sums, then sums for the three region statistics.
  const int width = 2 * N + 6;
  constexpr std::uint64_t kChunk = 256;
  std::vector<std::vector<double>> partial(chunk_count(cfg.trajectories, kChunk), std::vector<double>(width, 0.0));
  int block_sites = 0;
  for (int i = 0; i < N; ++i) block_sites += in_source_block(lat, i);
  const int edge_sites = N - block_sites;

  parallel_chunks(
      cfg.trajectories, kChunk,
      [&](std::uint64_t c, std::uint64_t begin, std::uint64_t end) {
        auto& acc = partial[c];
        for (std::uint64_t t = begin; t < end; ++t) {
          const SsepState s = model.run(t);
          double block = 0, edge = 0;
          for (int i = 0; i < N; ++i) {
            acc[i] += s.occ[i];
            acc[N + i] += s.occ[i];
            (in_source_block(lat, i) ? block : edge) += s.occ[i];
          }
          block /= block_sites;
          edge /= edge_sites;
          const double diff = block - edge;
          acc[2 * N] += block;
          acc[2 * N + 1] += block * block;
          acc[2 * N + 2] += edge;
          acc[2 * N + 3] += edge * edge;
          acc[2 * N + 4] += diff;
          acc[2 * N + 5] += diff * diff;
        }
      },
      threads);

  std::vector<double> total(width, 0.0);
  for (const auto& p : partial)
    for (int k = 0; k < width; ++k) total[k] += p[k];

  SsepField f;
  f.width = cfg.width;
  f.height = cfg.height;
  f.trajectories = cfg.trajectories;
  f.time_units = cfg.steps;
  // occupancies are 0/1, so Σx² = Σx
  for (int i = 0; i < N; ++i) f.density.push_back(detail::mean_err(total[i], total[N + i], cfg.trajectories));
  f.source_block = detail::mean_err(total[2 * N], total[2 * N + 1], cfg.trajectories);
  f.drain_edges = detail::mean_err(total[2 * N + 2], total[2 * N + 3], cfg.trajectories);
  f.block_minus_edges = detail::mean_err(total[2 * N + 4], total[2 * N + 5], cfg.trajectories);
  return f;
}

inline void write_csv(std::ostream& os, const SsepField& f) {
  os << "x,y,density,stderr\n";
  os.precision(17);
  for (int i = 0; i < static_cast<int>(f.density.size()); ++i)
    os << i % f.width << ',' << i / f.width << ',' << f.density[i].mean << ',' << f.density[i].sem << '\n';
}

inline nlohmann::json to_json(const SsepField& f) {
  nlohmann::json j;
  j["width"] = f.width;
  j["height"] = f.height;
  j["trajectories"] = f.trajectories;
  j["time_units"] = f.time_units;
  auto& d = j["density"] = nlohmann::json::array();
  for (const auto& m : f.density) d.push_back({{"mean", m.mean}, {"sem", m.sem}});
  j["source_block"] = {{"mean", f.source_block.mean}, {"sem", f.source_block.sem}};
  j["drain_edges"] = {{"mean", f.drain_edges.mean}, {"sem", f.drain_edges.sem}};
  j["block_minus_edges"] = {{"mean", f.block_minus_edges.mean}, {"sem", f.block_minus_edges.sem}};
  return j;
}

struct Chi2Result {
  double chi2 = 0;
  int dof = 0;
  double critical = 0;
  bool pass = false;
  std::vector<std::uint64_t> configurations;  // occupation bitmasks
  std::vector<std::uint64_t> observed;
  std::vector<double> expected;
};

/// Goodness-of-fit of the closed (γ = 0) dynamics against the Boltzmann
/// weights e^{−E} over every configuration with `particles` particles.
/// Each sample is the end point of its own chain started from a uniformly
/// random configuration and run for `burn_in` time units, so the samples are
/// independent and the χ² statistic has its nominal distribution.
inline Chi2Result detailed_balance_test(int width, int height, double V, int particles, std::uint64_t samples,
                                        std::uint64_t seed, int burn_in = 10, double alpha = 0.01,
                                        unsigned threads = 0) {
  SsepConfig cfg;
  cfg.width = width;
  cfg.height = height;
  cfg.V = V;
  cfg.gamma = 0;
  cfg.steps = burn_in;
  cfg.seed = seed;
  const SsepModel model(cfg);
  const Lattice& lat = model.lattice();
  const int N = lat.num_sites();
  if (N > 20) throw std::invalid_argument("detailed-balance test enumerates configurations; lattice too large");
  if (particles < 0 || particles > N) throw std::invalid_argument("particle count out of range");

  Chi2Result res;
  std::vector<int> slot(std::size_t{1} << N, -1);
  double Z = 0;
  std::vector<double> weight;
  for (std::uint64_t m = 0; m < (std::uint64_t{1} << N); ++m) {
    if (std::popcount(m) != particles) continue;
    SsepState s;
    s.occ.resize(static_cast<size_t>(N));
    for (int i = 0; i < N; ++i) s.occ[i] = (m >> i) & 1;
    slot[m] = static_cast<int>(res.configurations.size());
    res.configurations.push_back(m);
    weight.push_back(std::exp(-model.energy(s)));
    Z += weight.back();
  }

  constexpr std::uint64_t kChunk = 4096;
  std::vector<std::vector<std::uint64_t>> partial(chunk_count(samples, kChunk),
                                                  std::vector<std::uint64_t>(res.configurations.size(), 0));
  parallel_chunks(
      samples, kChunk,
      [&](std::uint64_t c, std::uint64_t begin, std::uint64_t end) {
        for (std::uint64_t t = begin; t < end; ++t) {
          RngStream rng(seed, t);
          // Uniform start: a random permutation prefix picks the occupied sites.
          std::vector<int> sites(static_cast<size_t>(N));
          for (int i = 0; i < N; ++i) sites[i] = i;
          SsepState s;
          s.occ.assign(static_cast<size_t>(N), 0);
          for (int k = 0; k < particles; ++k) {
            const int pick = k + static_cast<int>(rng.below(static_cast<std::uint64_t>(N - k)));
            std::swap(sites[k], sites[pick]);
            s.occ[sites[k]] = 1;
          }
          model.advance(s, rng, burn_in);
          std::uint64_t m = 0;
          for (int i = 0; i < N; ++i) m |= static_cast<std::uint64_t>(s.occ[i]) << i;
          ++partial[c][slot[m]];
        }
      },
      threads);

  res.observed.assign(res.configurations.size(), 0);
  for (const auto& p : partial)
    for (size_t k = 0; k < p.size(); ++k) res.observed[k] += p[k];
  for (size_t k = 0; k < weight.size(); ++k) {
    res.expected.push_back(static_cast<double>(samples) * weight[k] / Z);
    const double d = static_cast<double>(res.observed[k]) - res.expected.back();
    res.chi2 += d * d / res.expected.back();
  }
  res.dof = static_cast<int>(res.configurations.size()) - 1;
  if (res.dof < 1) throw std::invalid_argument("a single configuration leaves nothing to test");
  res.critical = boost::math::quantile(boost::math::chi_squared(res.dof), 1 - alpha);
  res.pass = res.chi2 < res.critical;
  return res;
}

}  // namespace nessim
