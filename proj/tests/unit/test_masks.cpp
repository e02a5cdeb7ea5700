#include "doctest.h"

#include <random>
#include <map>
#include <set>
#include <sstream>

#include "palmpipe/masks.hpp"

using namespace palmpipe;

namespace {

// Row-major 0/1 layout of each mask, by pattern id.
const char* const kExpected[12] = {
    "000111000", "111000000", "000000111",  // 0 deg: center, up, down
    "100010001", "000100010", "010001000",  // 45 deg
    "001010100", "010100000", "000001010",  // 135 deg
    "010010010", "100100100", "001001001",  // 90 deg
};

std::string bits(const Mask& m) {
  std::string s;
  for (bool b : m.cells) s += b ? '1' : '0';
  return s;
}

Grid3 random_grid(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Grid3 g{};
  for (auto& v : g.cells) v = u(rng) < 0.2 ? 0.0 : u(rng);
  return g;
}

}  // namespace

TEST_CASE("mask table is frozen") {
  for (int id = 0; id < kPatternCount; ++id) {
    CAPTURE(id);
    CHECK(bits(mask_for(id)) == kExpected[id]);
  }
  CHECK_THROWS_AS(mask_for(12), std::out_of_range);
}

TEST_CASE("mask export is one 9-bit line per mask") {
  std::ostringstream os;
  write_mask_table(os);
  std::istringstream in(os.str());
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    REQUIRE(n < 12);
    CHECK(line == kExpected[n]);
    ++n;
  }
  CHECK(n == 12);
}

TEST_CASE("masks are pairwise distinct with at least two cells") {
  std::set<std::string> seen;
  for (int id = 0; id < kPatternCount; ++id) {
    CHECK(count_true(mask_for(id)) >= 2);
    seen.insert(bits(mask_for(id)));
  }
  CHECK(seen.size() == 12);
}

TEST_CASE("rendered support stays inside the mask") {
  std::mt19937_64 rng(17);
  for (int t = 0; t < 10000; ++t) {
    const int id = static_cast<int>(rng() % 12);
    const Grid3 g = random_grid(rng);
    const Mask m = mask_for(id);
    for (auto order : {MaskOrdering::MaskFirst, MaskOrdering::PeakFirst}) {
      const StimulusGrid s = render_masked(g, PatternId(id), order);
      for (int r = 0; r < 3; ++r) {
        int active = 0;
        for (int c = 0; c < 3; ++c) {
          if (s(r, c) > 0.0) {
            ++active;
            CHECK(m(r, c));
            CHECK(s(r, c) == g(r, c));
          }
        }
        CHECK(active <= 1);
      }
    }
  }
}

TEST_CASE("mask-first keeps a contact whenever a masked cell is active") {
  Grid3 g{};
  g(1, 0) = 0.9;  // strongest cell of row 1 lies outside the 90-deg center mask
  g(1, 1) = 0.2;
  const PatternId id(9);
  CHECK(render_masked(g, id, MaskOrdering::MaskFirst)(1, 1) == 0.2);
  CHECK(render_masked(g, id, MaskOrdering::PeakFirst).active_count() == 0);
}

TEST_CASE("noise-free renderings are distinguishable by support alone") {
  std::map<std::string, int> owner;
  for (int id = 0; id < kPatternCount; ++id) {
    const auto supports = admissible_supports(PatternId(id));
    CHECK_FALSE(supports.empty());
    for (const Mask& s : supports) {
      CHECK(apply_mask(Grid3{}, s) == Grid3{});
      const auto [it, inserted] = owner.emplace(bits(s), id);
      CHECK_MESSAGE((inserted || it->second == id), "support shared by ids ", it->second, " and ", id);
    }
  }
}

TEST_CASE("apply_mask zeroes cells outside the mask") {
  Grid3 g{};
  g.cells.fill(0.5);
  const Grid3 out = apply_mask(g, mask_for(3));
  CHECK(out(0, 0) == 0.5);
  CHECK(out(0, 1) == 0.0);
  CHECK(out(2, 2) == 0.5);
}
