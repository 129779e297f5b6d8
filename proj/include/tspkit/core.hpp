#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace tspkit {

struct Point {
  double x = 0.0;
  double y = 0.0;
};

inline double dist(Point a, Point b) {
  const double dx = a.x - b.x;
  const double dy = a.y - b.y;
  return std::sqrt(dx * dx + dy * dy);
}

// A Euclidean TSP instance with all coordinates in the unit square.
struct TspInstance {
  std::vector<Point> coords;

  int n() const { return static_cast<int>(coords.size()); }
  double dist(int i, int j) const { return tspkit::dist(coords[i], coords[j]); }
};

// A cyclic visiting order: a permutation of {0, ..., n-1}. The closing edge
// order.back() -> order.front() is always implied.
struct Tour {
  std::vector<int> order;

  int n() const { return static_cast<int>(order.size()); }
};

// n i.i.d. uniform points in [0,1]^2, deterministic per (n, seed).
TspInstance generate_instance(int n, uint64_t seed);

// Throws std::invalid_argument if the instance violates its invariants
// (empty, coordinates outside [0,1]^2 or non-finite).
void check_instance(const TspInstance& instance);

// Cyclic tour length under the L2 metric. Throws on an invalid tour.
double tour_length(const TspInstance& instance, const Tour& tour);

// nullopt when `order` is a permutation of {0,...,n-1}; otherwise a
// description of the first violation found.
std::optional<std::string> validate_tour(std::span<const int> order, int n);

// Identity permutation 0..n-1.
Tour identity_tour(int n);

// File and stream I/O. The native format is plain text: one line with n,
// then n lines "x y". TSPLIB files (EUC_2D only) are detected by their
// keyword header and rescaled into the unit square on load, preserving the
// aspect ratio (both axes divided by the larger coordinate span).
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& msg, int line)
      : std::runtime_error(msg + " (line " + std::to_string(line) + ")"), line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

TspInstance read_instance(std::istream& in);
TspInstance read_instance(const std::filesystem::path& path);
void write_instance(const TspInstance& instance, std::ostream& out);
void write_instance(const TspInstance& instance, const std::filesystem::path& path);

}  // namespace tspkit
