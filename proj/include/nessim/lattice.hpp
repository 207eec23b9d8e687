#pragma once

#include <array>
#include <cstdlib>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace nessim {

enum class Orientation { horizontal, vertical };

struct Site {
  int x = 0;
  int y = 0;
};

/// A nearest-neighbour bond. Hopping on the bond is written e^{iθ} c†_j c_k + h.c.
/// with j the lower-left end, so the bond direction (j -> k) always points +x or +y.
struct Bond {
  int j = 0;
  int k = 0;
  Orientation orientation = Orientation::horizontal;
};

/// W x H open square lattice. Sites are indexed row-major with site 0 at (0,0)
/// (the source) and site W*H-1 at (W-1,H-1) (the drain).
///
/// The bond set is partitioned into four matchings ("sectors"), applied in a
/// fixed order by every Trotter step:
///   0 red    horizontal bonds whose left site has even x
///   1 green  horizontal bonds whose left site has odd x
///   2 blue   vertical bonds whose lower site has even y
///   3 yellow vertical bonds whose lower site has odd y
class Lattice {
 public:
  static constexpr std::array<const char*, 4> kSectorNames = {"red", "green", "blue", "yellow"};

  static Lattice square(int width, int height) {
    if (width < 2 || height < 2)
      throw std::invalid_argument("lattice dimensions must be at least 2x2, got " +
                                  std::to_string(width) + "x" + std::to_string(height));
    Lattice lat;
    lat.width_ = width;
    lat.height_ = height;
    lat.bond_lookup_.assign(static_cast<size_t>(width * height * width * height), -1);
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) {
        if (x + 1 < width) lat.add_bond(lat.index(x, y), lat.index(x + 1, y), Orientation::horizontal);
        if (y + 1 < height) lat.add_bond(lat.index(x, y), lat.index(x, y + 1), Orientation::vertical);
      }
    }
    for (int b = 0; b < lat.num_bonds(); ++b) {
      const Bond& bond = lat.bonds_[b];
      const Site s = lat.site(bond.j);
      int sector = 0;
      if (bond.orientation == Orientation::horizontal)
        sector = (s.x % 2 == 0) ? 0 : 1;
      else
        sector = (s.y % 2 == 0) ? 2 : 3;
      lat.sectors_[sector].push_back(b);
    }
    return lat;
  }

  int width() const { return width_; }
  int height() const { return height_; }
  int num_sites() const { return width_ * height_; }
  int num_bonds() const { return static_cast<int>(bonds_.size()); }
  int source() const { return 0; }
  int drain() const { return num_sites() - 1; }

  int index(int x, int y) const { return y * width_ + x; }
  Site site(int index) const { return {index % width_, index / width_}; }

  const std::vector<Bond>& bonds() const { return bonds_; }
  const Bond& bond(int b) const { return bonds_.at(static_cast<size_t>(b)); }

  /// Bond index joining sites a and b (either order), or -1.
  int bond_index(int a, int b) const {
    if (a < 0 || b < 0 || a >= num_sites() || b >= num_sites()) return -1;
    return bond_lookup_[static_cast<size_t>(a * num_sites() + b)];
  }

  const std::array<std::vector<int>, 4>& sectors() const { return sectors_; }

  /// Peierls phase of the hopping c†_j c_k in the Landau-like gauge:
  /// y·φ on horizontal bonds, 0 on vertical bonds.
  double peierls_phase(int b, double flux) const {
    const Bond& bond = this->bond(b);
    if (bond.orientation == Orientation::vertical) return 0.0;
    return site(bond.j).y * flux;
  }

  int taxicab_distance(int a, int b) const {
    const Site sa = site(a), sb = site(b);
    return std::abs(sa.x - sb.x) + std::abs(sa.y - sb.y);
  }

  int max_distance() const { return width_ + height_ - 2; }

  bool touches_reservoir(int b) const {
    const Bond& bond = this->bond(b);
    return bond.j == source() || bond.k == source() || bond.j == drain() || bond.k == drain();
  }

  bool is_boundary_site(int i) const {
    const Site s = site(i);
    return s.x == 0 || s.y == 0 || s.x == width_ - 1 || s.y == height_ - 1;
  }

  /// Both ends on the same lattice edge.
  bool is_boundary_bond(int b) const {
    const Bond& bond = this->bond(b);
    const Site a = site(bond.j), c = site(bond.k);
    if (bond.orientation == Orientation::horizontal) return a.y == 0 || a.y == height_ - 1;
    return a.x == 0 || a.x == width_ - 1 || c.x == 0 || c.x == width_ - 1;
  }

  /// Bond touches a site on the source–drain diagonal (x == y).
  bool is_diagonal_bond(int b) const {
    const Bond& bond = this->bond(b);
    const Site a = site(bond.j), c = site(bond.k);
    return a.x == a.y || c.x == c.y;
  }

 private:
  void add_bond(int j, int k, Orientation o) {
    const int b = static_cast<int>(bonds_.size());
    bonds_.push_back({j, k, o});
    bond_lookup_[static_cast<size_t>(j * num_sites() + k)] = b;
    bond_lookup_[static_cast<size_t>(k * num_sites() + j)] = b;
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<Bond> bonds_;
  std::vector<int> bond_lookup_;
  std::array<std::vector<int>, 4> sectors_;
};

inline nlohmann::json to_json(const Lattice& lat) {
  nlohmann::json j;
  j["width"] = lat.width();
  j["height"] = lat.height();
  j["source"] = lat.source();
  j["drain"] = lat.drain();
  auto& sites = j["sites"] = nlohmann::json::array();
  for (int i = 0; i < lat.num_sites(); ++i) sites.push_back({lat.site(i).x, lat.site(i).y});
  auto& bonds = j["bonds"] = nlohmann::json::array();
  for (const Bond& b : lat.bonds())
    bonds.push_back({{"j", b.j}, {"k", b.k},
                     {"orientation", b.orientation == Orientation::horizontal ? "horizontal" : "vertical"}});
  auto& sectors = j["sectors"] = nlohmann::json::object();
  for (size_t s = 0; s < 4; ++s) sectors[Lattice::kSectorNames[s]] = lat.sectors()[s];
  return j;
}

}  // namespace nessim
