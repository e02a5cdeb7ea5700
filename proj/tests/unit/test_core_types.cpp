#include "doctest.h"

#include <cmath>
#include <limits>
#include <set>

#include "palmpipe/core_types.hpp"

using namespace palmpipe;

TEST_CASE("pattern numbering is frozen") {
  using A = AngleClass;
  using P = PositionClass;
  const std::pair<A, P> expected[12] = {
      {A::Deg0, P::Center},   {A::Deg0, P::Left},   {A::Deg0, P::Right},
      {A::Deg45, P::Center},  {A::Deg45, P::Left},  {A::Deg45, P::Right},
      {A::Deg135, P::Center}, {A::Deg135, P::Left}, {A::Deg135, P::Right},
      {A::Deg90, P::Center},  {A::Deg90, P::Left},  {A::Deg90, P::Right},
  };
  for (int id = 0; id < kPatternCount; ++id) {
    CAPTURE(id);
    CHECK(pattern_of(id) == expected[id]);
    CHECK(pattern_id(expected[id].first, expected[id].second).value() == id);
  }
}

TEST_CASE("pattern ids round-trip and are a bijection") {
  std::set<int> seen;
  for (auto a : kAllAngles) {
    for (auto p : kAllPositions) {
      const PatternId id = pattern_id(a, p);
      CHECK(pattern_of(id) == std::pair{a, p});
      seen.insert(id.value());
    }
  }
  CHECK(seen.size() == 12);
  CHECK(*seen.begin() == 0);
  CHECK(*seen.rbegin() == 11);
}

TEST_CASE("out-of-range ids and angles are rejected") {
  CHECK_THROWS_AS(PatternId(12), std::out_of_range);
  CHECK_THROWS_AS(PatternId(-1), std::out_of_range);
  CHECK_THROWS_AS(pattern_of(12), std::out_of_range);
  CHECK_THROWS_AS(angle_from_degrees(30), std::out_of_range);
  CHECK_THROWS_AS(angle_from_index(4), std::out_of_range);
  CHECK_THROWS_AS(position_from_index(3), std::out_of_range);
  CHECK(angle_from_degrees(135) == AngleClass::Deg135);
  CHECK(degrees(AngleClass::Deg90) == 90);
}

TEST_CASE("labels") {
  CHECK(to_string(PositionClass::Left) == "left");
  CHECK(position_label(AngleClass::Deg0, PositionClass::Left) == "up");
  CHECK(position_label(AngleClass::Deg0, PositionClass::Right) == "down");
  CHECK(position_label(AngleClass::Deg45, PositionClass::Right) == "right");
}

TEST_CASE("force grids enforce the sensor range") {
  Grid10 g{};
  g(3, 4) = 9.0;
  CHECK_NOTHROW(ForceGrid10{g});
  g(3, 4) = 9.0001;
  CHECK_THROWS_AS(ForceGrid10{g}, std::domain_error);
  g(3, 4) = -1e-9;
  CHECK_THROWS_AS(ForceGrid10{g}, std::domain_error);
  g(3, 4) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(ForceGrid10{g}, std::domain_error);
}

TEST_CASE("force grid totals and mirror") {
  Grid10 g{};
  g(0, 0) = 1.0;
  g(2, 7) = 2.5;
  const ForceGrid10 f(g);
  CHECK(f.total() == doctest::Approx(3.5));
  CHECK(f.max() == 2.5);
  const ForceGrid10 m = mirror_columns(f);
  CHECK(m(0, 9) == 1.0);
  CHECK(m(2, 2) == 2.5);
  CHECK(mirror_columns(m) == f);
}

TEST_CASE("stimulus grid range and activity") {
  Grid3 g{};
  g(0, 1) = 0.4;
  g(2, 2) = 1.0;
  const StimulusGrid s(g);
  CHECK(s.active_count() == 2);
  g(1, 1) = 1.01;
  CHECK_THROWS_AS(StimulusGrid{g}, std::domain_error);
}

TEST_CASE("mask cell count") {
  Mask m{};
  m(0, 0) = m(1, 1) = true;
  CHECK(count_true(m) == 2);
}
