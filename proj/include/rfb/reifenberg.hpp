#pragma once

#include <array>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "rfb/jones.hpp"
#include "rfb/measure.hpp"

namespace rfb {

// rho-adic radius ladder r_i = rho^i (repeated multiplication), kappa =
// 1/(1-rho), and the mass-threshold constant tau.
struct ScaleLadder {
  double rho = 0.25;
  double tau = 0.0;
  double kappa = 0.0;
  int depth = 0;  // finest scale A
  std::vector<double> radii;

  ScaleLadder(double rho_, int depth_, double tau_);
  double radius(int i) const { return radii[static_cast<std::size_t>(i)]; }

  // tau(n) = 80^{-1} 6^{-n}
  static double default_tau(int n);
};

// Greedy maximal r-separated subset, taken in lexicographic point order.
std::vector<Vec> separated_subset(std::vector<Vec> points, double r);

enum class BallClass { good, bad };

// good iff mu(B) >= tau * M * r^k (inclusive threshold).
BallClass classify_ball(const DiscreteMeasure& mu, const Ball& ball, double tau, double M);

// Atom indices in the ball at plane-distance >= r_next/4 (boundary included).
std::vector<std::uint32_t> excess_set(const DiscreteMeasure& mu, const Ball& good_ball,
                                      const AffinePlane& plane, double r_next);

// An internal consistency check of the multiscale construction failed; the
// identifier names the violated property (e.g. "claim2.coverage").
struct CoveringViolation : std::runtime_error {
  std::string identifier;
  CoveringViolation(std::string id, const std::string& msg)
      : std::runtime_error(id + ": " + msg), identifier(std::move(id)) {}
};

struct ScaleLevel {
  std::vector<Ball> good;
  std::vector<Ball> bad;
  std::vector<Ball> fin;
  std::vector<AffinePlane> excess_planes;  // per good ball, L^q at kappa r_i
  std::vector<AffinePlane> sigma_planes;   // per good ball, L^2 at kappa r_i
  std::vector<std::uint32_t> excess_new;   // atoms first taken into E here
};

struct CoveringHierarchy {
  double rho = 0.0, tau = 0.0, kappa = 0.0, q = 2.0, M = 0.0;
  int depth = 0;
  std::vector<double> radii;
  std::vector<int> atom_scale;  // source scale index per atom
  std::vector<ScaleLevel> levels;  // 0..depth
  std::vector<std::uint32_t> excess_cumulative;  // ascending atom indices

  double excess_mass(const DiscreteMeasure& mu) const;
};

// Runs the full Good/Bad/Fin/Excess construction at mass bound M, asserting
// the covering invariants at every scale (throws CoveringViolation).
CoveringHierarchy build_covering(const DiscreteMeasure& mu, const ScaleLadder& ladder, double M,
                                 double q);

// Partition of unity subordinate to equal-radius balls with disjoint
// half-balls: lambda_i = 1 deep inside (3 B_i), vanishing outside 4 B_i,
// built from a quintic smoothstep and normalized where bumps overlap.
class PartitionOfUnity {
 public:
  PartitionOfUnity(std::vector<Ball> balls, double r);

  struct Eval {
    std::vector<std::pair<std::uint32_t, double>> active;  // (ball, lambda), ascending
    double lambda_sum = 0.0;  // left-to-right over active
    double psi = 0.0;         // 1 - lambda_sum, so the identity is exact
  };
  Eval evaluate(const Vec& x) const;

  const std::vector<Ball>& balls() const { return balls_; }
  double radius() const { return r_; }

 private:
  std::vector<Ball> balls_;
  double r_ = 0.0;
  int n_ = 0;
  std::vector<double> centers_;  // SoA for the lookup grid
  GridIndex grid_;
};

// sigma(x) = psi(x) x + sum_i lambda_i(x) pi_i(x); exact identity outside the
// union of the 4-scaled balls.
class SigmaMap {
 public:
  SigmaMap(int scale_index, double r, std::vector<Ball> balls, std::vector<AffinePlane> planes);

  Vec apply(const Vec& x) const;
  int scale_index() const { return scale_; }
  double r() const { return r_; }
  std::size_t ball_count() const { return planes_.size(); }
  const PartitionOfUnity* partition() const { return pou_ ? &*pou_ : nullptr; }
  const std::vector<AffinePlane>& planes() const { return planes_; }

 private:
  int scale_ = 0;
  double r_ = 0.0;
  std::optional<PartitionOfUnity> pou_;
  std::vector<AffinePlane> planes_;
};

inline Vec sigma_eval(const SigmaMap& map, const Vec& x) { return map.apply(x); }

// Triangulated approximating surface; k = 1 meshes carry segment cells,
// k = 2 meshes triangle cells.
struct MeshSurface {
  int n = 0;
  int k = 1;
  std::vector<Vec> vertices;
  std::vector<std::array<int, 2>> edges;      // k == 1
  std::vector<std::array<int, 3>> triangles;  // k == 2
  std::vector<int> provenance;                // sigma scale chain
};

MeshSurface mesh_plane_segment(const AffinePlane& plane, const Vec& ball_center,
                               double ball_radius, double edge_length);
MeshSurface mesh_plane_disk(const AffinePlane& plane, const Vec& ball_center, double ball_radius,
                            double edge_length);

double surface_area(const MeshSurface& mesh);

// Maps vertices through sigma. A degenerate output cell triggers one
// midpoint refinement of the offending source cells, then a hard error.
MeshSurface pushforward_surface(const MeshSurface& mesh, const SigmaMap& map);

struct GraphCheckResult {
  bool is_graph = true;
  double c1_norm = 0.0;  // r^{-1} ||g||_inf + ||grad g||_inf over the ball
  std::optional<std::array<int, 2>> witness;  // offending vertex pair
};

GraphCheckResult graph_check(const MeshSurface& mesh, const AffinePlane& plane, const Ball& ball);

struct BiLipschitzResult {
  double constant = 1.0;  // max(stretch, 1/shrink)
  double max_stretch = 1.0;
  double min_shrink = 1.0;
  std::size_t zero_edges_skipped = 0;
  std::size_t edges_measured = 0;
};

BiLipschitzResult bilipschitz_measure(const SigmaMap& map, const MeshSurface& mesh,
                                      const Ball& region);

// |mesh cap ball|: exact segment clipping for k = 1, centroid-subdivision
// estimate for k = 2.
double surface_measure_in_ball(const MeshSurface& mesh, const Ball& ball);

void save_mesh_off(const MeshSurface& mesh, const std::string& path);
MeshSurface load_mesh_off(const std::string& path);

struct KeyEstimates {
  std::vector<double> areas;            // |T_i|
  std::vector<double> max_lip;          // per sigma step (index i -> sigma_{i+1})
  std::vector<double> excess_mass_cum;  // mu(E^{<= i})
  std::vector<double> beta_series;      // sum_{l < i} int beta_q^2(z, 6 r_l) dmu
  double comparison_c1 = 0.0;           // 20 * 3^k
  double max_mu_over_surf = 0.0;
  double min_surf_density = 0.0;  // min |T_A cap B/2| / r^k over bad/fin balls
  bool comparison_pass = true;    // mu(B) <= C1 tau M |T_A cap B/2| per ball
  bool density_pass = true;       // |T_A cap B/2| >= 20^{-1} 3^{-k} r^k per ball
  std::size_t balls_checked = 0;
};

KeyEstimates key_estimates_report(const CoveringHierarchy& h,
                                  const std::vector<MeshSurface>& surfaces,
                                  const DiscreteMeasure& mu, const ScaleLadder& ladder,
                                  bool with_beta_series);

struct CoverOptions {
  double q = 2.0;
  std::string mode = "sup";  // M policy exponent: sup -> q/(q+2), avg -> q/2
  double mesh_edge = 0.0;    // <= 0 -> r_A / 2
  double m_override = 0.0;   // <= 0 -> policy M
  int max_doublings = 40;
  bool with_surfaces = true;
  bool with_beta_series = false;
};

struct CoverRunResult {
  CoveringHierarchy hierarchy;
  std::vector<MeshSurface> surfaces;
  double m_final = 0.0;
  int doublings = 0;
  double j_used = 0.0;
  KeyEstimates report;
};

// Covering + surface pipeline with the doubling M policy: starts at
// max(10 * max(1, J^e), omega_k / tau) and doubles M until every internal
// assertion passes.
CoverRunResult cover_run(const DiscreteMeasure& mu, const ScaleLadder& ladder,
                         const CoverOptions& opt);

struct Verdict {
  std::string mode;
  double mu_b1 = 0.0;
  double j_value = 0.0;
  double exponent = 0.0;
  double ratio = 0.0;  // mu(B_1) / max(1, J^exponent)
  double claim1_max = 0.0;  // max sampled mu(B_{r_j}(x)) / r_j^k
  double claim1_cap = 0.0;  // calibrated bound 10 * max(ratio, 1)
  bool claim1_pass = true;
  std::size_t claim1_samples = 0;
  Ball claim1_witness;
};

// Measures the main bound's shape: mu(B_1) against max(1, J^{q/(q+2)})
// (sup mode) or max(1, J^{q/2}) (avg mode), plus an empirical spot check of
// the inductive mass bound on balls avoiding coarse centers.
Verdict verify_bound(const DiscreteMeasure& mu, double q, const ScaleLadder& ladder,
                     const std::string& mode);

std::string verdict_json(const Verdict& v);
std::string hierarchy_json(const CoveringHierarchy& h);

}  // namespace rfb
