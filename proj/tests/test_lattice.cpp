#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numbers>
#include <set>

#include "nessim/lattice.hpp"

using namespace nessim;

TEST_CASE("square lattice counts and corners") {
  const Lattice l44 = Lattice::square(4, 4);
  CHECK(l44.num_sites() == 16);
  CHECK(l44.num_bonds() == 24);
  CHECK(l44.source() == 0);
  CHECK(l44.drain() == 15);

  const Lattice l22 = Lattice::square(2, 2);
  CHECK(l22.num_sites() == 4);
  CHECK(l22.num_bonds() == 4);

  for (auto [w, h] : {std::pair{2, 3}, std::pair{3, 2}, std::pair{7, 7}, std::pair{5, 3}}) {
    const Lattice l = Lattice::square(w, h);
    CHECK(l.num_bonds() == w * (h - 1) + h * (w - 1));
    CHECK(l.site(l.drain()).x == w - 1);
    CHECK(l.site(l.drain()).y == h - 1);
  }
}

TEST_CASE("lattice rejects degenerate sizes") {
  CHECK_THROWS_AS(Lattice::square(1, 4), std::invalid_argument);
  CHECK_THROWS_AS(Lattice::square(4, 0), std::invalid_argument);
}

TEST_CASE("row-major indexing") {
  const Lattice l = Lattice::square(4, 3);
  for (int i = 0; i < l.num_sites(); ++i) CHECK(l.index(l.site(i).x, l.site(i).y) == i);
  CHECK(l.index(1, 2) == 9);
}

TEST_CASE("sectors are matchings that partition the bonds") {
  for (auto [w, h] : {std::pair{4, 4}, std::pair{2, 2}, std::pair{2, 3}, std::pair{7, 7}, std::pair{5, 4}}) {
    const Lattice l = Lattice::square(w, h);
    std::multiset<int> seen;
    for (const auto& sector : l.sectors()) {
      std::set<int> used;
      for (int b : sector) {
        seen.insert(b);
        CHECK(used.insert(l.bond(b).j).second);
        CHECK(used.insert(l.bond(b).k).second);
      }
    }
    CHECK(static_cast<int>(seen.size()) == l.num_bonds());
    CHECK(std::set<int>(seen.begin(), seen.end()).size() == seen.size());
  }
}

TEST_CASE("4x4 sector coloring is the brick decomposition") {
  const Lattice l = Lattice::square(4, 4);
  const auto& s = l.sectors();
  REQUIRE(s[0].size() == 8);
  REQUIRE(s[1].size() == 4);
  REQUIRE(s[2].size() == 8);
  REQUIRE(s[3].size() == 4);
  for (int b : s[0]) CHECK((l.bond(b).orientation == Orientation::horizontal && l.site(l.bond(b).j).x % 2 == 0));
  for (int b : s[1]) CHECK((l.bond(b).orientation == Orientation::horizontal && l.site(l.bond(b).j).x % 2 == 1));
  for (int b : s[2]) CHECK((l.bond(b).orientation == Orientation::vertical && l.site(l.bond(b).j).y % 2 == 0));
  for (int b : s[3]) CHECK((l.bond(b).orientation == Orientation::vertical && l.site(l.bond(b).j).y % 2 == 1));
}

TEST_CASE("Peierls phases") {
  const Lattice l = Lattice::square(4, 4);
  const double phi = std::numbers::pi / 2;
  CHECK(l.peierls_phase(l.bond_index(0, 1), 1.234) == 0.0);
  CHECK(l.peierls_phase(l.bond_index(8, 9), phi) == Catch::Approx(std::numbers::pi));
  CHECK(l.peierls_phase(l.bond_index(1, 5), phi) == 0.0);
}

TEST_CASE("flux through every plaquette equals phi") {
  for (double phi : {0.0, 0.3, std::numbers::pi / 2, 2.0}) {
    const Lattice l = Lattice::square(5, 4);
    for (int y = 0; y + 1 < l.height(); ++y)
      for (int x = 0; x + 1 < l.width(); ++x) {
        const int a = l.index(x, y), b = l.index(x + 1, y), c = l.index(x + 1, y + 1), d = l.index(x, y + 1);
        // e^{iθ} rides on the hop k -> j, so a particle circling anticlockwise collects -Σθ over a->b->c->d.
        const double flux = l.peierls_phase(l.bond_index(a, b), phi) + l.peierls_phase(l.bond_index(b, c), phi) -
                            l.peierls_phase(l.bond_index(d, c), phi) - l.peierls_phase(l.bond_index(a, d), phi);
        CHECK(std::abs(-flux - phi) < 1e-12);
      }
  }
}

TEST_CASE("taxicab distance") {
  const Lattice l = Lattice::square(4, 4);
  CHECK(l.taxicab_distance(0, 0) == 0);
  CHECK(l.taxicab_distance(l.drain(), l.source()) == 6);
  CHECK(l.taxicab_distance(l.index(1, 2), l.source()) == 3);
}

TEST_CASE("lattice json round trip fields") {
  const auto j = to_json(Lattice::square(3, 2));
  CHECK(j["sites"].size() == 6);
  CHECK(j["bonds"].size() == 7);
  CHECK(j["sectors"].contains("yellow"));
  CHECK(j["drain"] == 5);
}
