#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <span>
#include <vector>

namespace rfb {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

struct Ball {
  Vec center;
  double radius = 0.0;
};

// Affine k-plane in R^n: base point plus an orthonormal frame of k direction
// vectors (columns). Frames are re-orthonormalized by modified Gram-Schmidt
// on construction so downstream projections are stable and deterministic.
class AffinePlane {
 public:
  AffinePlane(Vec base, Mat frame);

  int n() const { return static_cast<int>(base_.size()); }
  int k() const { return static_cast<int>(frame_.cols()); }
  const Vec& base() const { return base_; }
  const Mat& frame() const { return frame_; }

  Vec project(const Vec& x) const;
  double distance(const Vec& x) const;

  // Max pairwise deviation of frame^T * frame from the identity.
  double orthonormality_defect() const;

 private:
  Vec base_;
  Mat frame_;  // n x k, orthonormal columns
};

Vec project(const AffinePlane& plane, const Vec& x);
double point_plane_distance(const Vec& x, const AffinePlane& plane);

// Normalized local Hausdorff distance (1/r) * dist_H(E n B_r(x), F n B_r(x)).
// Exactly one empty restriction returns +infinity; both empty returns 0.
double local_hausdorff(std::span<const Vec> e, std::span<const Vec> f, const Vec& x, double r);

// d_{x,r} between two k-planes, computed by deterministic dense sampling of
// each plane's intersection with the closed ball (>= 100 * 10^k samples per
// plane). A plane missing the ball entirely yields +infinity.
double plane_local_distance(const AffinePlane& v1, const AffinePlane& v2, const Vec& x, double r);

// Operator norm of (pi_1 pi_2 - id) restricted to V1, for linear planes
// (bases at the origin) of equal dimension.
double projection_composition_defect(const AffinePlane& v1, const AffinePlane& v2);

// Deterministic rotation exp(t*A) for a seeded antisymmetric A of unit
// operator norm. Rejects t > 1 (outside the small-angle regime).
Mat rotation_near_identity(std::uint64_t seed, double t, int n);

// Modified Gram-Schmidt; throws if the columns are numerically dependent.
Mat orthonormalize_mgs(const Mat& m);

// Deterministic direction set: flips each column so its largest-magnitude
// entry is positive (earliest index on ties), then sorts columns
// lexicographically. Used to canonicalize eigenvector bundles.
Mat canonical_directions(Mat m);

double operator_norm(const Mat& m);

// Packs a plane frame as k rows of n (row-major), the layout the kernel
// layer consumes. `out` must hold k*n doubles.
inline void pack_frame_rows(const AffinePlane& plane, double* out) {
  const int n = plane.n(), k = plane.k();
  for (int j = 0; j < k; ++j)
    for (int c = 0; c < n; ++c) out[static_cast<std::size_t>(j) * n + c] = plane.frame()(c, j);
}

}  // namespace rfb
