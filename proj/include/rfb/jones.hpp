#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "rfb/measure.hpp"

namespace rfb {

// Outcome of an L^q best-plane fit over a ball. A ball with no mass has no
// plane (callers treat beta as 0); `objective` is the attained
// sum w * d^q(y, plane) over the ball.
struct PlaneFit {
  std::optional<AffinePlane> plane;
  double objective = 0.0;
  bool converged = true;  // IRLS stationarity for q > 2; always true for q = 2
  int rounds = 0;
};

// For q = 2 the exact weighted-PCA minimizer (base at the in-ball center of
// mass, frame from the top-k eigenvectors of the weighted second-moment
// matrix). For q > 2 an iteratively reweighted fit seeded at the q = 2 plane;
// the attained objective never exceeds the q = 2 plane's objective.
PlaneFit best_plane(const DiscreteMeasure& mu, const Vec& x, double r, double q);

struct BetaResult {
  double value = 0.0;  // beta_q(x, r)
  std::optional<AffinePlane> plane;
  double residual_q = 0.0;  // attained integral of d^q over the ball
};

// beta_q(x,r) = (r^{-(k+q)} * residual_q)^{1/q} with the best_plane minimizer.
BetaResult beta_q(const DiscreteMeasure& mu, const Vec& x, double r, double q);

struct JonesProfile {
  Vec center;
  double top_radius = 0.0;
  double rho = 0.0;
  int finest_scale = 0;  // truncation scale A
  std::vector<std::pair<double, double>> per_scale_beta;  // (radius rho^a, beta value)
  double J = 0.0;  // sum of beta^2 over radii rho^a <= 2 * top_radius, a <= A
};

// Discretized Jones square function: sum of beta_q^2(x, rho^a) over the
// rho-adic radii at most 2r, truncated at the measure's declared finest
// scale.
JonesProfile jones_square(const DiscreteMeasure& mu, const Vec& x, double r, double q, double rho);

// delta_q^2(x, r) = r^{-k} sum_{y in B_r(x)} w(y) beta_q^2(y, r).
double delta_q(const DiscreteMeasure& mu, const Vec& x, double r, double q);

struct FlatnessReport {
  double q = 0.0;
  double rho = 0.0;
  double J_sup = 0.0;
  double J_avg = 0.0;
  Ball witness_ball_sup;
  Ball witness_ball_avg;
  std::size_t balls_examined = 0;
};

// Extremal flatness functionals over the candidate ball family (atom centers
// plus a rho-adic lattice of B_2, radii rho^a, balls kept inside B_2):
//   sup form:  r^{-k}    * sum_{y in B} w(y) J_q(y, r)
//   avg form:  mu(B)^{-1} * sum_{y in B} w(y) J_q(y, r)
// Both maxima are computed in one pass; flatness_sup and flatness_avg return
// the same report.
FlatnessReport flatness_sup(const DiscreteMeasure& mu, double q, double rho);
FlatnessReport flatness_avg(const DiscreteMeasure& mu, double q, double rho);

// Per-atom beta^2 table across rho-adic scales 0..A; row i holds
// beta_q^2(y_i, rho^m). Shared by the flatness functionals and the covering
// diagnostics.
std::vector<std::vector<double>> beta2_profiles(const DiscreteMeasure& mu, double q, double rho,
                                                int depth);

std::string jones_profile_json(const JonesProfile& p);
std::string flatness_report_json(const FlatnessReport& r);
void save_beta_table_csv(const JonesProfile& p, const std::string& path);

}  // namespace rfb
