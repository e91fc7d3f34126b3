#pragma once

#include <string>
#include <vector>

#include "rfb/measure.hpp"

namespace rfb {

// Iterated middle-third replacement curve. Generation i bends the middle
// third of each segment into two segments at angle angles[i-1]; the classic
// Koch construction is the constant angle pi/6.
struct SnowflakeSpec {
  std::vector<double> angles;  // one entry per generation, each in [0, pi/3)

  int generations() const { return static_cast<int>(angles.size()); }

  static SnowflakeSpec constant(double theta, int generations);
  static SnowflakeSpec harmonic(double c, int generations);        // theta_i = c / i
  static SnowflakeSpec inverse_square(double c, int generations);  // theta_i = c / i^2

  void validate() const;
};

// Ordered vertices in R^2 with endpoints pinned at (0,0) and (1,0);
// 4^N segments after N generations. Bumps always point to the left of the
// traversal direction.
std::vector<Vec> snowflake_polyline(const SnowflakeSpec& spec);

// Closed-form length prod_i (2 + 1/cos theta_i) / 3.
double snowflake_length(const SnowflakeSpec& spec);

double polyline_length(const std::vector<Vec>& vertices);

// The affine map x -> scale * (x - offset) a generator applied to land its
// output inside the unit ball.
struct AffineNormalization {
  Vec offset;
  double scale = 1.0;

  Vec apply(const Vec& x) const { return scale * (x - offset); }
};

// Disjoint balls of radius rho^scale_index centered on a maximal
// 2*rho^scale_index separated subset of arc-length samples of the normalized
// polyline. Throws when the scale is too coarse to place two balls.
BallCollection polyline_to_balls(const std::vector<Vec>& vertices, int scale_index, double rho,
                                 AffineNormalization* map_out = nullptr);

// Same sampling without the normalization step, for studies that need a
// fixed frame across a curve family. The caller keeps the polyline inside
// B_2 (checked).
BallCollection polyline_to_balls_unnormalized(const std::vector<Vec>& vertices, int scale_index,
                                              double rho);

// Zero-beta control family: balls of radius rho^s on a k-dimensional lattice
// of pitch 2*rho^s inside B_1 cap span(e_1..e_k).
BallCollection plane_lattice_balls(int k, int n, int scale_index, double rho);

// Balls centered on the sine graph (t, a sin(2 pi f t)) over the lattice
// t = 2*rho^s * z, restricted so centers stay inside B_1. Reduces to
// plane_lattice_balls for a = 0.
BallCollection perturbed_graph_balls(double amplitude, int frequency, int scale_index, double rho);

// Convenience: collection -> measure with the scale index declared.
DiscreteMeasure collection_measure(const BallCollection& balls, int n, int k, int scale_index,
                                   const std::string& description);

void save_polyline_csv(const std::vector<Vec>& vertices, const std::string& path);
std::vector<Vec> load_polyline_csv(const std::string& path);

}  // namespace rfb
