#include "rfb/generators.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include "rfb/format.hpp"
#include "rfb/stats.hpp"

namespace rfb {

namespace {
constexpr double kPi = 3.14159265358979323846;
constexpr double kNormalizationMargin = 0.9;

double rho_power(double rho, int s) {
  double p = 1.0;
  for (int i = 0; i < s; ++i) p *= rho;
  return p;
}
}  // namespace

SnowflakeSpec SnowflakeSpec::constant(double theta, int generations) {
  SnowflakeSpec s;
  s.angles.assign(static_cast<std::size_t>(generations), theta);
  s.validate();
  return s;
}

SnowflakeSpec SnowflakeSpec::harmonic(double c, int generations) {
  SnowflakeSpec s;
  for (int i = 1; i <= generations; ++i) s.angles.push_back(c / i);
  s.validate();
  return s;
}

SnowflakeSpec SnowflakeSpec::inverse_square(double c, int generations) {
  SnowflakeSpec s;
  for (int i = 1; i <= generations; ++i) s.angles.push_back(c / (static_cast<double>(i) * i));
  s.validate();
  return s;
}

void SnowflakeSpec::validate() const {
  for (double a : angles) {
    if (!(a >= 0.0) || !(a < kPi / 3.0) || !std::isfinite(a))
      throw std::invalid_argument("SnowflakeSpec: angles must lie in [0, pi/3)");
  }
}

std::vector<Vec> snowflake_polyline(const SnowflakeSpec& spec) {
  spec.validate();
  std::vector<Vec> pts(2, Vec(2));
  pts[0] << 0.0, 0.0;
  pts[1] << 1.0, 0.0;
  for (double theta : spec.angles) {
    const double bump = std::tan(theta) / 6.0;  // height per unit segment length
    std::vector<Vec> next;
    next.reserve((pts.size() - 1) * 4 + 1);
    for (std::size_t s = 0; s + 1 < pts.size(); ++s) {
      const Vec& a = pts[s];
      const Vec& b = pts[s + 1];
      const Vec d = b - a;
      Vec left(2);
      left << -d(1), d(0);  // consistent bump side
      const Vec p1 = a + d / 3.0;
      const Vec p2 = a + 2.0 * d / 3.0;
      const Vec apex = a + d / 2.0 + bump * left;
      next.push_back(a);
      next.push_back(p1);
      next.push_back(apex);
      next.push_back(p2);
    }
    next.push_back(pts.back());
    pts = std::move(next);
  }
  return pts;
}

double snowflake_length(const SnowflakeSpec& spec) {
  spec.validate();
  double prod = 1.0;
  for (double theta : spec.angles) prod *= (2.0 + 1.0 / std::cos(theta)) / 3.0;
  return prod;
}

double polyline_length(const std::vector<Vec>& vertices) {
  KahanSum s;
  for (std::size_t i = 0; i + 1 < vertices.size(); ++i) s.add((vertices[i + 1] - vertices[i]).norm());
  return s.value();
}

namespace {

BallCollection arc_sample_balls(const std::vector<Vec>& norm, int scale_index, double rho);

}  // namespace

BallCollection polyline_to_balls(const std::vector<Vec>& vertices, int scale_index, double rho,
                                 AffineNormalization* map_out) {
  if (vertices.size() < 2) throw std::invalid_argument("polyline_to_balls: need >= 2 vertices");
  if (!(rho > 0.0 && rho < 1.0)) throw std::invalid_argument("polyline_to_balls: rho in (0,1)");
  if (scale_index < 1) throw std::invalid_argument("polyline_to_balls: scale_index >= 1");

  Vec lo = vertices[0], hi = vertices[0];
  for (const Vec& v : vertices) {
    lo = lo.cwiseMin(v);
    hi = hi.cwiseMax(v);
  }
  AffineNormalization map;
  map.offset = 0.5 * (lo + hi);
  double radius = 0.0;
  for (const Vec& v : vertices) radius = std::max(radius, (v - map.offset).norm());
  map.scale = radius > 0.0 ? kNormalizationMargin / radius : 1.0;
  if (map_out) *map_out = map;

  std::vector<Vec> norm;
  norm.reserve(vertices.size());
  for (const Vec& v : vertices) norm.push_back(map.apply(v));
  return arc_sample_balls(norm, scale_index, rho);
}

BallCollection polyline_to_balls_unnormalized(const std::vector<Vec>& vertices, int scale_index,
                                              double rho) {
  if (vertices.size() < 2) throw std::invalid_argument("polyline_to_balls: need >= 2 vertices");
  if (!(rho > 0.0 && rho < 1.0)) throw std::invalid_argument("polyline_to_balls: rho in (0,1)");
  if (scale_index < 1) throw std::invalid_argument("polyline_to_balls: scale_index >= 1");
  for (const Vec& v : vertices) {
    if (v.norm() > 2.0)
      throw std::invalid_argument("polyline_to_balls_unnormalized: polyline must lie in B_2");
  }
  return arc_sample_balls(vertices, scale_index, rho);
}

namespace {

BallCollection arc_sample_balls(const std::vector<Vec>& norm, int scale_index, double rho) {
  const double r = rho_power(rho, scale_index);
  const double sep = 2.0 * r;
  const double pitch = r / 2.0;

  // Dense arc-length samples, then a greedy maximal separated subset taken in
  // arc order. The full pairwise guard also handles curve fold-backs.
  std::vector<Vec> samples;
  samples.push_back(norm.front());
  double carried = 0.0;
  for (std::size_t s = 0; s + 1 < norm.size(); ++s) {
    const Vec a = norm[s];
    const Vec b = norm[s + 1];
    const double len = (b - a).norm();
    if (len == 0.0) continue;
    double t = pitch - carried;
    while (t <= len) {
      samples.push_back(a + (t / len) * (b - a));
      t += pitch;
    }
    carried = len - (t - pitch);
  }
  if ((norm.back() - samples.back()).norm() > 0.0) samples.push_back(norm.back());

  BallCollection out;
  std::vector<Vec> kept;
  for (const Vec& p : samples) {
    bool ok = true;
    for (const Vec& q : kept) {
      if ((p - q).norm() < sep) {
        ok = false;
        break;
      }
    }
    if (ok) {
      kept.push_back(p);
      out.balls.push_back(Ball{p, r});
    }
  }
  if (out.balls.size() < 2)
    throw std::invalid_argument("polyline_to_balls: scale too coarse to place two balls");
  out.certify();
  return out;
}

}  // namespace

BallCollection plane_lattice_balls(int k, int n, int scale_index, double rho) {
  if (k < 1 || k >= n) throw std::invalid_argument("plane_lattice_balls: need 1 <= k < n");
  if (!(rho > 0.0 && rho < 1.0)) throw std::invalid_argument("plane_lattice_balls: rho in (0,1)");
  const double r = rho_power(rho, scale_index);
  const double pitch = 2.0 * r;
  const long long zmax = static_cast<long long>(std::floor(1.0 / pitch));

  BallCollection out;
  std::vector<long long> z(static_cast<std::size_t>(k), -zmax);
  while (true) {
    Vec center = Vec::Zero(n);
    double norm2 = 0.0;
    for (int c = 0; c < k; ++c) {
      center(c) = pitch * static_cast<double>(z[static_cast<std::size_t>(c)]);
      norm2 += center(c) * center(c);
    }
    if (norm2 <= 1.0) out.balls.push_back(Ball{center, r});
    int c = 0;
    for (; c < k; ++c) {
      if (++z[static_cast<std::size_t>(c)] <= zmax) break;
      z[static_cast<std::size_t>(c)] = -zmax;
    }
    if (c == k) break;
  }
  out.certify();
  return out;
}

BallCollection perturbed_graph_balls(double amplitude, int frequency, int scale_index, double rho) {
  if (!(amplitude >= 0.0 && amplitude < 1.0))
    throw std::invalid_argument("perturbed_graph_balls: amplitude in [0,1)");
  if (frequency < 1) throw std::invalid_argument("perturbed_graph_balls: frequency >= 1");
  const double r = rho_power(rho, scale_index);
  const double pitch = 2.0 * r;
  const double tmax = std::sqrt(1.0 - amplitude * amplitude);
  const long long zmax = static_cast<long long>(std::floor(tmax / pitch));

  BallCollection out;
  for (long long z = -zmax; z <= zmax; ++z) {
    const double t = pitch * static_cast<double>(z);
    Vec center(2);
    center << t, amplitude * std::sin(2.0 * kPi * frequency * t);
    out.balls.push_back(Ball{center, r});
  }
  out.certify();
  return out;
}

DiscreteMeasure collection_measure(const BallCollection& balls, int n, int k, int scale_index,
                                   const std::string& description) {
  DiscreteMeasure mu = DiscreteMeasure::from_balls(balls, n, k, scale_index);
  mu.set_description(description);
  return mu;
}

void save_polyline_csv(const std::vector<Vec>& vertices, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << csv_row({"x", "y"});
  for (const Vec& v : vertices) {
    std::vector<std::string> row;
    for (int c = 0; c < v.size(); ++c) row.push_back(format_double(v(c)));
    out << csv_row(row);
  }
}

std::vector<Vec> load_polyline_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open for reading: " + path);
  const auto rows = read_csv(in);
  std::vector<Vec> pts;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (r == 0 && !rows[r].empty() && rows[r][0] == "x") continue;
    Vec v(static_cast<int>(rows[r].size()));
    for (std::size_t c = 0; c < rows[r].size(); ++c) v(static_cast<int>(c)) = parse_double(rows[r][c]);
    pts.push_back(std::move(v));
  }
  return pts;
}

}  // namespace rfb
