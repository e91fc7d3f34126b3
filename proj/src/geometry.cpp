#include "rfb/geometry.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "rfb/kernels.hpp"
#include "rfb/rng.hpp"

namespace rfb {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void check_dim(int a, int b, const char* what) {
  if (a != b) throw std::invalid_argument(std::string(what) + ": dimension mismatch");
}

}  // namespace

Mat orthonormalize_mgs(const Mat& m) {
  Mat q = m;
  for (Eigen::Index j = 0; j < q.cols(); ++j) {
    for (Eigen::Index i = 0; i < j; ++i) q.col(j) -= q.col(i).dot(q.col(j)) * q.col(i);
    const double nrm = q.col(j).norm();
    if (nrm < 1e-13) throw std::invalid_argument("orthonormalize_mgs: dependent columns");
    q.col(j) /= nrm;
  }
  return q;
}

Mat canonical_directions(Mat m) {
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    Eigen::Index imax = 0;
    double best = -1.0;
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      const double a = std::abs(m(i, j));
      if (a > best) {
        best = a;
        imax = i;
      }
    }
    if (m(imax, j) < 0.0) m.col(j) = -m.col(j);
  }
  std::vector<Eigen::Index> order(static_cast<std::size_t>(m.cols()));
  for (std::size_t j = 0; j < order.size(); ++j) order[j] = static_cast<Eigen::Index>(j);
  std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      if (m(i, a) != m(i, b)) return m(i, a) < m(i, b);
    }
    return false;
  });
  Mat out(m.rows(), m.cols());
  for (std::size_t j = 0; j < order.size(); ++j) out.col(static_cast<Eigen::Index>(j)) = m.col(order[j]);
  return out;
}

double operator_norm(const Mat& m) {
  if (m.size() == 0) return 0.0;
  Eigen::JacobiSVD<Mat> svd(m);
  return svd.singularValues()(0);
}

AffinePlane::AffinePlane(Vec base, Mat frame) : base_(std::move(base)), frame_(std::move(frame)) {
  if (frame_.rows() != base_.size())
    throw std::invalid_argument("AffinePlane: frame/base dimension mismatch");
  if (frame_.cols() < 1 || frame_.cols() >= frame_.rows())
    throw std::invalid_argument("AffinePlane: need 1 <= k < n");
  if (!base_.allFinite() || !frame_.allFinite())
    throw std::invalid_argument("AffinePlane: non-finite input");
  frame_ = orthonormalize_mgs(frame_);
}

Vec AffinePlane::project(const Vec& x) const {
  check_dim(static_cast<int>(x.size()), n(), "AffinePlane::project");
  const Vec d = x - base_;
  return base_ + frame_ * (frame_.transpose() * d);
}

double AffinePlane::distance(const Vec& x) const {
  const Vec d = x - project(x);
  return d.norm();
}

double AffinePlane::orthonormality_defect() const {
  const Mat g = frame_.transpose() * frame_ - Mat::Identity(k(), k());
  return g.cwiseAbs().maxCoeff();
}

Vec project(const AffinePlane& plane, const Vec& x) { return plane.project(x); }

double point_plane_distance(const Vec& x, const AffinePlane& plane) { return plane.distance(x); }

namespace {

// SoA copy of the points of `pts` lying in the closed ball.
struct SoaSet {
  std::vector<double> data;  // dim-major blocks
  std::size_t count = 0;
  int n = 0;
  std::vector<const double*> ptrs;

  void build(std::span<const Vec> pts, const Vec& x, double r) {
    n = static_cast<int>(x.size());
    std::vector<std::size_t> keep;
    const double r2 = r * r;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      if ((pts[i] - x).squaredNorm() <= r2) keep.push_back(i);
    }
    count = keep.size();
    data.assign(static_cast<std::size_t>(n) * count, 0.0);
    for (int c = 0; c < n; ++c)
      for (std::size_t i = 0; i < count; ++i) data[static_cast<std::size_t>(c) * count + i] = pts[keep[i]](c);
    ptrs.resize(static_cast<std::size_t>(n));
    for (int c = 0; c < n; ++c) ptrs[static_cast<std::size_t>(c)] = data.data() + static_cast<std::size_t>(c) * count;
  }
};

double hausdorff_soa(const SoaSet& a, const SoaSet& b) {
  auto directed = [](const SoaSet& from, const SoaSet& to) {
    std::vector<double> d(from.count);
    kernels::min_dist_sq(from.ptrs.data(), from.count, to.ptrs.data(), to.count, from.n, d.data());
    double worst = 0.0;
    for (double v : d) worst = std::max(worst, v);
    return worst;
  };
  return std::sqrt(std::max(directed(a, b), directed(b, a)));
}

}  // namespace

double local_hausdorff(std::span<const Vec> e, std::span<const Vec> f, const Vec& x, double r) {
  if (r <= 0.0) throw std::invalid_argument("local_hausdorff: r must be positive");
  for (const Vec& p : e) check_dim(static_cast<int>(p.size()), static_cast<int>(x.size()), "local_hausdorff");
  for (const Vec& p : f) check_dim(static_cast<int>(p.size()), static_cast<int>(x.size()), "local_hausdorff");
  SoaSet ea, fa;
  ea.build(e, x, r);
  fa.build(f, x, r);
  if (ea.count == 0 && fa.count == 0) return 0.0;
  if (ea.count == 0 || fa.count == 0) return kInf;
  return hausdorff_soa(ea, fa) / r;
}

namespace {

// Deterministic lattice over the k-ball of radius s in parameter space,
// mapped through the plane. Guarantees >= 100 * 10^k samples.
std::vector<Vec> sample_plane_in_ball(const AffinePlane& v, const Vec& x, double r, bool& hit) {
  const Vec b = v.frame().transpose() * (x - v.base());
  const double off2 = (x - v.base()).squaredNorm() - b.squaredNorm();
  const double s2 = r * r - std::max(off2, 0.0);
  hit = s2 >= 0.0;
  std::vector<Vec> out;
  if (!hit) return out;
  const double s = std::sqrt(s2);
  const int k = v.k();
  const std::size_t target = static_cast<std::size_t>(100.0 * std::pow(10.0, k));
  int p = k == 1 ? 1001 : 8;
  while (true) {
    out.clear();
    std::vector<int> iv(static_cast<std::size_t>(k), 0);
    const double step = p > 1 ? 2.0 / (p - 1) : 0.0;
    while (true) {
      double norm2 = 0.0;
      Vec u(k);
      for (int c = 0; c < k; ++c) {
        u(c) = -1.0 + step * iv[static_cast<std::size_t>(c)];
        norm2 += u(c) * u(c);
      }
      if (norm2 <= 1.0) out.push_back(v.base() + v.frame() * (b + s * u));
      int c = 0;
      for (; c < k; ++c) {
        if (++iv[static_cast<std::size_t>(c)] < p) break;
        iv[static_cast<std::size_t>(c)] = 0;
      }
      if (c == k) break;
    }
    if (out.size() >= target) return out;
    p = p * 3 / 2 + 1;
  }
}

}  // namespace

double plane_local_distance(const AffinePlane& v1, const AffinePlane& v2, const Vec& x, double r) {
  if (r <= 0.0) throw std::invalid_argument("plane_local_distance: r must be positive");
  if (v1.k() != v2.k() || v1.n() != v2.n())
    throw std::invalid_argument("plane_local_distance: planes must share k and n");
  check_dim(static_cast<int>(x.size()), v1.n(), "plane_local_distance");
  bool hit1 = false, hit2 = false;
  const std::vector<Vec> s1 = sample_plane_in_ball(v1, x, r, hit1);
  const std::vector<Vec> s2 = sample_plane_in_ball(v2, x, r, hit2);
  if (!hit1 || !hit2) return kInf;
  SoaSet a, b;
  a.build(s1, x, r);
  b.build(s2, x, r);
  if (a.count == 0 || b.count == 0) return kInf;
  return hausdorff_soa(a, b) / r;
}

double projection_composition_defect(const AffinePlane& v1, const AffinePlane& v2) {
  if (v1.k() != v2.k() || v1.n() != v2.n())
    throw std::invalid_argument("projection_composition_defect: planes must share k and n");
  if (v1.base().norm() > 1e-12 || v2.base().norm() > 1e-12)
    throw std::invalid_argument("projection_composition_defect: planes must be linear (base at origin)");
  const Mat c = v1.frame().transpose() * v2.frame();  // k x k
  const Mat g = c * c.transpose() - Mat::Identity(v1.k(), v1.k());
  return operator_norm(g);
}

Mat rotation_near_identity(std::uint64_t seed, double t, int n) {
  if (t < 0.0) throw std::invalid_argument("rotation_near_identity: t must be >= 0");
  if (t > 1.0) throw std::invalid_argument("rotation_near_identity: t > 1 rejected");
  if (n < 2) throw std::invalid_argument("rotation_near_identity: need n >= 2");
  if (t == 0.0) return Mat::Identity(n, n);

  Rng rng(seed);
  Mat a = Mat::Zero(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      const double v = rng.uniform(-1.0, 1.0);
      a(i, j) = v;
      a(j, i) = -v;
    }
  const double nrm = operator_norm(a);
  if (nrm == 0.0) throw std::runtime_error("rotation_near_identity: degenerate seed");
  a *= t / nrm;

  // exp(a) by scaling and squaring with a Taylor core.
  int squarings = 0;
  double scale_norm = t;
  while (scale_norm > 0.25) {
    scale_norm *= 0.5;
    ++squarings;
  }
  Mat as = a / std::pow(2.0, squarings);
  Mat term = Mat::Identity(n, n);
  Mat sum = Mat::Identity(n, n);
  for (int i = 1; i <= 24; ++i) {
    term = (term * as) / static_cast<double>(i);
    sum += term;
    if (term.cwiseAbs().maxCoeff() < 1e-18) break;
  }
  for (int i = 0; i < squarings; ++i) sum = sum * sum;
  return sum;
}

}  // namespace rfb
