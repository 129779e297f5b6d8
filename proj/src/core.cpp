#include "tspkit/core.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "tspkit/rng.hpp"

namespace tspkit {

TspInstance generate_instance(int n, uint64_t seed) {
  if (n < 1) throw std::invalid_argument("generate_instance: n must be >= 1");
  Rng rng(seed);
  TspInstance instance;
  instance.coords.reserve(n);
  for (int i = 0; i < n; ++i) {
    const double x = rng.uniform01();
    const double y = rng.uniform01();
    instance.coords.push_back({x, y});
  }
  return instance;
}

void check_instance(const TspInstance& instance) {
  if (instance.coords.empty()) throw std::invalid_argument("instance has no cities");
  for (const Point& p : instance.coords) {
    if (!std::isfinite(p.x) || !std::isfinite(p.y))
      throw std::invalid_argument("instance has a non-finite coordinate");
    if (p.x < 0.0 || p.x > 1.0 || p.y < 0.0 || p.y > 1.0)
      throw std::invalid_argument("instance coordinate outside [0,1]^2");
  }
}

double tour_length(const TspInstance& instance, const Tour& tour) {
  if (auto violation = validate_tour(tour.order, instance.n()))
    throw std::invalid_argument("tour_length: " + *violation);
  const int n = tour.n();
  double total = 0.0;
  for (int t = 0; t < n; ++t) {
    const int a = tour.order[t];
    const int b = tour.order[(t + 1) % n];
    total += instance.dist(a, b);
  }
  return total;
}

std::optional<std::string> validate_tour(std::span<const int> order, int n) {
  if (static_cast<int>(order.size()) != n)
    return "wrong length: got " + std::to_string(order.size()) + ", expected " +
           std::to_string(n);
  std::vector<char> seen(n, 0);
  for (int idx : order) {
    if (idx < 0 || idx >= n)
      return "index out of range: " + std::to_string(idx);
    if (seen[idx]) return "duplicate index: " + std::to_string(idx);
    seen[idx] = 1;
  }
  return std::nullopt;
}

Tour identity_tour(int n) {
  Tour tour;
  tour.order.resize(n);
  for (int i = 0; i < n; ++i) tour.order[i] = i;
  return tour;
}

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

bool parse_double(const std::string& tok, double& out) {
  const char* begin = tok.data();
  const char* end = begin + tok.size();
  auto [ptr, ec] = std::from_chars(begin, end, out);
  return ec == std::errc{} && ptr == end;
}

TspInstance read_native(std::istream& in, const std::string& first_line, int first_line_no) {
  int line_no = first_line_no;
  long n = 0;
  {
    std::istringstream ss(first_line);
    if (!(ss >> n) || n < 1)
      throw ParseError("invalid city count '" + first_line + "'", line_no);
    std::string extra;
    if (ss >> extra) throw ParseError("unexpected token after city count", line_no);
  }
  TspInstance instance;
  instance.coords.reserve(n);
  std::string line;
  for (long i = 0; i < n; ++i) {
    if (!std::getline(in, line))
      throw ParseError("truncated file: expected " + std::to_string(n) +
                           " coordinate rows, got " + std::to_string(i),
                       line_no);
    ++line_no;
    std::istringstream ss(trim(line));
    double x = 0.0, y = 0.0;
    if (!(ss >> x >> y)) throw ParseError("malformed coordinate row", line_no);
    std::string extra;
    if (ss >> extra) throw ParseError("unexpected token in coordinate row", line_no);
    if (!std::isfinite(x) || !std::isfinite(y) || x < 0.0 || x > 1.0 || y < 0.0 || y > 1.0)
      throw ParseError("coordinate outside [0,1]^2", line_no);
    instance.coords.push_back({x, y});
  }
  return instance;
}

// Reads the TSPLIB EUC_2D subset: keyword header, NODE_COORD_SECTION, EOF.
// Coordinates at arbitrary scale are shifted to the origin and divided by
// the larger axis span so they land in the unit square.
TspInstance read_tsplib(std::istream& in, std::string line, int line_no) {
  long dimension = -1;
  bool weight_type_ok = false;
  bool in_coords = false;

  auto keyword_of = [](const std::string& s) {
    const auto colon = s.find(':');
    return trim(colon == std::string::npos ? s : s.substr(0, colon));
  };
  auto value_of = [](const std::string& s) {
    const auto colon = s.find(':');
    return trim(colon == std::string::npos ? "" : s.substr(colon + 1));
  };

  while (true) {
    const std::string t = trim(line);
    if (!t.empty()) {
      const std::string key = keyword_of(t);
      if (key == "NODE_COORD_SECTION") {
        in_coords = true;
        break;
      } else if (key == "DIMENSION") {
        std::istringstream ss(value_of(t));
        if (!(ss >> dimension) || dimension < 1)
          throw ParseError("invalid DIMENSION", line_no);
      } else if (key == "EDGE_WEIGHT_TYPE") {
        if (value_of(t) != "EUC_2D")
          throw ParseError("unsupported EDGE_WEIGHT_TYPE '" + value_of(t) +
                               "' (only EUC_2D is supported)",
                           line_no);
        weight_type_ok = true;
      } else if (key == "TYPE") {
        const std::string v = value_of(t);
        if (v != "TSP") throw ParseError("unsupported TYPE '" + v + "'", line_no);
      }
      // NAME / COMMENT / other headers are ignored.
    }
    if (!std::getline(in, line)) throw ParseError("missing NODE_COORD_SECTION", line_no);
    ++line_no;
  }
  if (!in_coords) throw ParseError("missing NODE_COORD_SECTION", line_no);
  if (dimension < 1) throw ParseError("missing DIMENSION header", line_no);
  if (!weight_type_ok) throw ParseError("missing EDGE_WEIGHT_TYPE: EUC_2D header", line_no);

  std::vector<Point> raw(dimension);
  std::vector<char> filled(dimension, 0);
  for (long i = 0; i < dimension; ++i) {
    if (!std::getline(in, line)) throw ParseError("truncated NODE_COORD_SECTION", line_no);
    ++line_no;
    std::istringstream ss(trim(line));
    long id = 0;
    double x = 0.0, y = 0.0;
    if (!(ss >> id >> x >> y)) throw ParseError("malformed node coordinate row", line_no);
    if (id < 1 || id > dimension) throw ParseError("node id out of range", line_no);
    if (filled[id - 1]) throw ParseError("duplicate node id", line_no);
    if (!std::isfinite(x) || !std::isfinite(y))
      throw ParseError("non-finite coordinate", line_no);
    raw[id - 1] = {x, y};
    filled[id - 1] = 1;
  }

  double min_x = raw[0].x, max_x = raw[0].x;
  double min_y = raw[0].y, max_y = raw[0].y;
  for (const Point& p : raw) {
    min_x = std::min(min_x, p.x);
    max_x = std::max(max_x, p.x);
    min_y = std::min(min_y, p.y);
    max_y = std::max(max_y, p.y);
  }
  const double span = std::max(max_x - min_x, max_y - min_y);
  TspInstance instance;
  instance.coords.reserve(dimension);
  for (const Point& p : raw) {
    if (span > 0.0)
      instance.coords.push_back({(p.x - min_x) / span, (p.y - min_y) / span});
    else
      instance.coords.push_back({0.0, 0.0});  // all cities coincide
  }
  return instance;
}

}  // namespace

TspInstance read_instance(std::istream& in) {
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!trim(line).empty()) break;
  }
  const std::string t = trim(line);
  if (t.empty()) throw ParseError("empty instance file", line_no);

  // A native file starts with a bare integer; anything else is TSPLIB.
  double dummy = 0.0;
  if (parse_double(t, dummy)) return read_native(in, t, line_no);
  return read_tsplib(in, line, line_no);
}

TspInstance read_instance(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open instance file: " + path.string());
  try {
    return read_instance(in);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what(), e.line());
  }
}

void write_instance(const TspInstance& instance, std::ostream& out) {
  out << instance.n() << "\n";
  char buf[64];
  for (const Point& p : instance.coords) {
    // max_digits17 so that read-back reproduces the exact doubles
    std::snprintf(buf, sizeof(buf), "%.17g %.17g", p.x, p.y);
    out << buf << "\n";
  }
}

void write_instance(const TspInstance& instance, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open instance file for writing: " + path.string());
  write_instance(instance, out);
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

}  // namespace tspkit
