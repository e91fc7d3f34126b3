#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "rfb/geometry.hpp"
#include "rfb/kernels.hpp"

namespace rfb {

// Volume of the k-dimensional unit ball.
double unit_ball_volume(int k);

struct Atom {
  Vec position;
  double weight = 0.0;
  std::optional<double> source_radius;
};

struct BallCollection {
  std::vector<Ball> balls;
  bool certified_disjoint = false;

  // Pairwise |c_i - c_j| >= r_i + r_j - 1e-12.
  bool check_disjoint() const;
  void certify();  // throws if the check fails
};

// Fixed-grid bucket index over structure-of-arrays positions. Queries return
// a superset of candidates; callers apply the exact metric filter. Hash
// collisions between cells only enlarge the candidate set.
class GridIndex {
 public:
  GridIndex() = default;
  GridIndex(const double* const* dims, int n, std::size_t count, double cell);

  double cell_size() const { return cell_; }

  // Ascending candidate indices for the closed ball B_r(center). Falls back
  // to the full index range when the cell walk would exceed the atom count.
  std::vector<std::uint32_t> candidates(const double* center, double r) const;

  // Buffer-reusing variant; returns false when the query degenerates to the
  // full range (out is then left empty and callers should scan [0, count)).
  bool candidates(const double* center, double r, std::vector<std::uint32_t>& out) const;

 private:
  std::uint64_t cell_key(const double* center, const long long* offset) const;

  int n_ = 0;
  std::size_t count_ = 0;
  double cell_ = 1.0;
  std::unordered_map<std::uint64_t, std::vector<std::uint32_t>> buckets_;
};

// Exact closed-ball filter over candidate indices (kept in input order).
std::vector<std::uint32_t> filter_in_ball(const double* const* dims, int n,
                                          const std::vector<std::uint32_t>& candidates,
                                          const double* center, double r);

// Full-range variant: scans [0, count) with contiguous kernel loads.
void filter_in_ball_range(const double* const* dims, int n, std::size_t count,
                          const double* center, double r, std::vector<std::uint32_t>& out);

// Finite weighted atomic measure in R^n with intrinsic dimension k. Immutable
// after construction; queries are safe to run concurrently.
class DiscreteMeasure {
 public:
  DiscreteMeasure(std::vector<Atom> atoms, int n, int k,
                  std::optional<int> finest_scale = std::nullopt);

  static DiscreteMeasure from_balls(const BallCollection& balls, int n, int k,
                                    std::optional<int> finest_scale = std::nullopt);

  int n() const { return n_; }
  int k() const { return k_; }
  std::size_t size() const { return count_; }
  bool empty() const { return count_ == 0; }

  Vec position(std::size_t i) const;
  double weight(std::size_t i) const { return weights_[i]; }
  std::optional<double> source_radius(std::size_t i) const;
  Atom atom(std::size_t i) const;

  double total_mass() const;

  // Per-dimension base pointers for the kernel layer; returned by value so
  // copies/moves of the measure cannot leave stale aliases around.
  std::array<const double*, kernels::kMaxDim> dim_ptrs() const {
    std::array<const double*, kernels::kMaxDim> a{};
    for (int c = 0; c < n_; ++c)
      a[static_cast<std::size_t>(c)] = coords_.data() + static_cast<std::size_t>(c) * count_;
    return a;
  }
  const double* weights_data() const { return weights_.data(); }

  // Scale index A of the finest declared ball radius rho^A, when known.
  std::optional<int> finest_scale() const { return finest_scale_; }
  void set_finest_scale(std::optional<int> a) { finest_scale_ = a; }

  const std::string& description() const { return description_; }
  void set_description(std::string d) { description_ = std::move(d); }

  // Ascending indices of atoms with |position - x| <= r.
  std::vector<std::uint32_t> atoms_in_ball(const Vec& x, double r) const;

  const GridIndex& index() const { return index_; }

 private:
  int n_ = 0;
  int k_ = 0;
  std::size_t count_ = 0;
  std::vector<double> coords_;  // dim-major blocks of length count_
  std::vector<double> weights_;
  std::vector<double> radii_;  // NaN when absent
  std::optional<int> finest_scale_;
  std::string description_;
  GridIndex index_;
};

// mu(B_r(x)) by compensated summation over atoms in ascending index order.
double mass_in_ball(const DiscreteMeasure& mu, const Vec& x, double r);

// nu(.) = lambda^{-k} mu(lambda .): positions and source radii divide by
// lambda, weights by lambda^k.
DiscreteMeasure scale_measure(const DiscreteMeasure& mu, double lambda);

// Replace each radius r by rho^j with rho^j <= r < rho^{j-1} (j = 1 whenever
// r >= rho). Radii never grow, so disjointness is preserved.
BallCollection snap_radii(const BallCollection& s, double rho);

Vec center_of_mass(const DiscreteMeasure& mu, const Ball& ball);

std::vector<double> upper_density_profile(const DiscreteMeasure& mu, const Vec& x,
                                          const std::vector<double>& radii);

struct VitaliResult {
  BallCollection collection;        // B_{r_j/10}(p_j), certified disjoint
  DiscreteMeasure nu;               // sum of omega_k (r_j/10)^k delta_{p_j}
  std::vector<std::uint32_t> kept;  // sample indices that seeded kept balls
  std::vector<double> kept_radii;   // the admissible r_j per kept ball
  std::vector<std::uint32_t> leftover;  // sample atoms with no admissible radius
};

// Greedy Vitali extraction over a rho-adic radius menu {rho, ..., rho^12}.
// An atom's radius is admissible when the tenth-ball carries mass at least
// 2^{-k-1} omega_k (r/10)^k and the density upper bound mu(B_r') <= 2 omega_k
// r'^k holds at every menu radius visited down to r. Kept balls are chosen
// largest-first (ties by lexicographic center) so the 1/5-scaled originals
// stay disjoint.
VitaliResult vitali_discretize(const DiscreteMeasure& sample, double rho);

// Measure I/O. Round-trips are bit-exact: doubles are written as shortest
// round-trip decimals.
void save_measure_csv(const DiscreteMeasure& mu, const std::string& path);
DiscreteMeasure load_measure_csv(const std::string& path, int n, int k);
void save_measure_json(const DiscreteMeasure& mu, const std::string& path);
DiscreteMeasure load_measure_json(const std::string& path);

}  // namespace rfb
