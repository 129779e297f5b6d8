#include <doctest.h>

#include <cmath>
#include <sstream>

#include "oracles.hpp"
#include "tspkit/core.hpp"
#include "tspkit/rng.hpp"

using namespace tspkit;

namespace {

TspInstance make_instance(std::initializer_list<Point> pts) {
  TspInstance instance;
  instance.coords = pts;
  return instance;
}

const TspInstance kSquare = make_instance({{0, 0}, {0, 1}, {1, 1}, {1, 0}});

}  // namespace

TEST_CASE("generate_instance produces seeded uniform points in the unit square") {
  const TspInstance a = generate_instance(20, 42);
  CHECK(a.n() == 20);
  for (const Point& p : a.coords) {
    CHECK(p.x >= 0.0);
    CHECK(p.x <= 1.0);
    CHECK(p.y >= 0.0);
    CHECK(p.y <= 1.0);
  }

  const TspInstance b = generate_instance(20, 42);
  for (int i = 0; i < 20; ++i) {
    CHECK(a.coords[i].x == b.coords[i].x);
    CHECK(a.coords[i].y == b.coords[i].y);
  }

  CHECK(generate_instance(1, 7).n() == 1);
  CHECK_THROWS_AS(generate_instance(0, 1), std::invalid_argument);
}

TEST_CASE("generate_instance coordinate means are centered") {
  const int count = 100000;
  double sum_x = 0.0, sum_y = 0.0;
  const TspInstance big = generate_instance(count, 9001);
  for (const Point& p : big.coords) {
    sum_x += p.x;
    sum_y += p.y;
  }
  CHECK(sum_x / count == doctest::Approx(0.5).epsilon(0.02));
  CHECK(std::abs(sum_x / count - 0.5) < 0.01);
  CHECK(std::abs(sum_y / count - 0.5) < 0.01);
}

TEST_CASE("tour_length on hand-checked instances") {
  Tour perimeter{{0, 1, 2, 3}};
  CHECK(tour_length(kSquare, perimeter) == doctest::Approx(4.0).epsilon(1e-12));

  const TspInstance crossed = make_instance({{0, 0}, {1, 1}, {0, 1}, {1, 0}});
  CHECK(tour_length(crossed, Tour{{0, 1, 2, 3}}) ==
        doctest::Approx(2.0 + 2.0 * std::sqrt(2.0)).epsilon(1e-12));

  const TspInstance line = make_instance({{0, 0}, {0.5, 0}, {1, 0}});
  CHECK(tour_length(line, Tour{{0, 1, 2}}) == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(tour_length(line, Tour{{1, 0, 2}}) == doctest::Approx(2.0).epsilon(1e-12));

  CHECK_THROWS_AS(tour_length(kSquare, Tour{{0, 1, 2}}), std::invalid_argument);
  CHECK_THROWS_AS(tour_length(kSquare, Tour{{0, 1, 1, 3}}), std::invalid_argument);
}

TEST_CASE("tour_length is invariant under rotation and reversal") {
  Rng rng(77);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 3 + static_cast<int>(rng.below(10));
    const TspInstance instance = generate_instance(n, rng.next());
    Tour tour = identity_tour(n);
    rng.shuffle(tour.order);
    const double base = tour_length(instance, tour);

    Tour rotated = tour;
    const int shift = 1 + static_cast<int>(rng.below(n - 1));
    std::rotate(rotated.order.begin(), rotated.order.begin() + shift, rotated.order.end());
    CHECK(tour_length(instance, rotated) == doctest::Approx(base).epsilon(1e-12));

    Tour reversed = tour;
    std::reverse(reversed.order.begin(), reversed.order.end());
    CHECK(tour_length(instance, reversed) == doctest::Approx(base).epsilon(1e-12));
  }
}

TEST_CASE("tour_length dominates twice the max pairwise distance") {
  Rng rng(123);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 2 + static_cast<int>(rng.below(12));
    const TspInstance instance = generate_instance(n, rng.next());
    Tour tour = identity_tour(n);
    rng.shuffle(tour.order);
    double max_pair = 0.0;
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j)
        max_pair = std::max(max_pair, instance.dist(i, j));
    CHECK(tour_length(instance, tour) >= 2.0 * max_pair - 1e-9);
  }
}

TEST_CASE("validate_tour reports violations") {
  CHECK(!validate_tour(std::vector<int>{0, 1, 2, 3}, 4).has_value());
  auto dup = validate_tour(std::vector<int>{0, 1, 1, 3}, 4);
  REQUIRE(dup.has_value());
  CHECK(dup->find("duplicate") != std::string::npos);
  auto short_tour = validate_tour(std::vector<int>{0, 1, 2}, 4);
  REQUIRE(short_tour.has_value());
  CHECK(short_tour->find("length") != std::string::npos);
  auto out_of_range = validate_tour(std::vector<int>{0, 1, 2, 4}, 4);
  REQUIRE(out_of_range.has_value());
  CHECK(out_of_range->find("range") != std::string::npos);
}

TEST_CASE("native instance round-trip is exact") {
  const TspInstance original = generate_instance(17, 4242);
  std::stringstream buf;
  write_instance(original, buf);
  const TspInstance loaded = read_instance(buf);
  REQUIRE(loaded.n() == original.n());
  for (int i = 0; i < original.n(); ++i) {
    CHECK(loaded.coords[i].x == original.coords[i].x);
    CHECK(loaded.coords[i].y == original.coords[i].y);
  }
}

TEST_CASE("truncated and malformed native files fail with the line number") {
  std::stringstream truncated("5\n0.1 0.2\n0.3 0.4\n");
  try {
    read_instance(truncated);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("line") != std::string::npos);
  }

  std::stringstream bad_row("2\n0.1 0.2\n0.3 abc\n");
  CHECK_THROWS_AS(read_instance(bad_row), ParseError);

  std::stringstream bad_count("-3\n");
  CHECK_THROWS_AS(read_instance(bad_count), ParseError);

  std::stringstream out_of_square("1\n1.5 0.2\n");
  CHECK_THROWS_AS(read_instance(out_of_square), ParseError);
}

TEST_CASE("TSPLIB EUC_2D fixture rescales into the unit square") {
  // Hand computation: min corner (0,0), spans (40, 20), divide by 40.
  const std::string fixture =
      "NAME: fixture5\n"
      "TYPE: TSP\n"
      "COMMENT: five cities\n"
      "DIMENSION: 5\n"
      "EDGE_WEIGHT_TYPE: EUC_2D\n"
      "NODE_COORD_SECTION\n"
      "1 0 0\n"
      "2 40 0\n"
      "3 40 20\n"
      "4 0 20\n"
      "5 20 10\n"
      "EOF\n";
  std::stringstream in(fixture);
  const TspInstance instance = read_instance(in);
  REQUIRE(instance.n() == 5);
  const Point expected[5] = {{0.0, 0.0}, {1.0, 0.0}, {1.0, 0.5}, {0.0, 0.5}, {0.5, 0.25}};
  for (int i = 0; i < 5; ++i) {
    CHECK(instance.coords[i].x == doctest::Approx(expected[i].x).epsilon(1e-15));
    CHECK(instance.coords[i].y == doctest::Approx(expected[i].y).epsilon(1e-15));
  }
}

TEST_CASE("TSPLIB rejects unsupported weight types") {
  const std::string geo =
      "NAME: bad\nTYPE: TSP\nDIMENSION: 2\nEDGE_WEIGHT_TYPE: GEO\n"
      "NODE_COORD_SECTION\n1 0 0\n2 1 1\nEOF\n";
  std::stringstream in(geo);
  CHECK_THROWS_AS(read_instance(in), ParseError);
}
