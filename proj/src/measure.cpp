#include "rfb/measure.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "rfb/stats.hpp"

namespace rfb {

namespace {
constexpr double kDisjointSlack = 1e-12;
constexpr int kVitaliMenuDepth = 12;
}  // namespace

double unit_ball_volume(int k) {
  switch (k) {
    case 0:
      return 1.0;
    case 1:
      return 2.0;
    case 2:
      return 3.14159265358979323846;
    default:
      return std::pow(3.14159265358979323846, 0.5 * k) / std::tgamma(0.5 * k + 1.0);
  }
}

bool BallCollection::check_disjoint() const {
  for (std::size_t i = 0; i < balls.size(); ++i)
    for (std::size_t j = i + 1; j < balls.size(); ++j) {
      const double d = (balls[i].center - balls[j].center).norm();
      if (d < balls[i].radius + balls[j].radius - kDisjointSlack) return false;
    }
  return true;
}

void BallCollection::certify() {
  if (!check_disjoint()) throw std::invalid_argument("BallCollection: balls are not disjoint");
  certified_disjoint = true;
}

GridIndex::GridIndex(const double* const* dims, int n, std::size_t count, double cell)
    : n_(n), count_(count), cell_(cell > 0.0 ? cell : 1.0) {
  for (std::size_t i = 0; i < count_; ++i) {
    long long zero[kernels::kMaxDim] = {0};
    double pos[kernels::kMaxDim];
    for (int c = 0; c < n_; ++c) pos[c] = dims[c][i];
    buckets_[cell_key(pos, zero)].push_back(static_cast<std::uint32_t>(i));
  }
}

std::uint64_t GridIndex::cell_key(const double* center, const long long* offset) const {
  std::uint64_t h = 1469598103934665603ull;  // FNV-1a over cell coordinates
  for (int c = 0; c < n_; ++c) {
    const long long cc = static_cast<long long>(std::floor(center[c] / cell_)) + offset[c];
    h ^= static_cast<std::uint64_t>(cc);
    h *= 1099511628211ull;
  }
  return h;
}

bool GridIndex::candidates(const double* center, double r, std::vector<std::uint32_t>& out) const {
  out.clear();
  if (count_ == 0) return true;
  const long long reach = static_cast<long long>(std::floor(r / cell_)) + 1;
  double walk = 1.0;
  for (int c = 0; c < n_; ++c) walk *= static_cast<double>(2 * reach + 1);
  // When the cell walk covers a large share of the buckets the full-range
  // scan is cheaper than gathering.
  if (walk > static_cast<double>(count_) || walk * 4.0 >= static_cast<double>(buckets_.size()))
    return false;
  long long offset[kernels::kMaxDim];
  for (int c = 0; c < n_; ++c) offset[c] = -reach;
  while (true) {
    const auto it = buckets_.find(cell_key(center, offset));
    if (it != buckets_.end()) out.insert(out.end(), it->second.begin(), it->second.end());
    int c = 0;
    for (; c < n_; ++c) {
      if (++offset[c] <= reach) break;
      offset[c] = -reach;
    }
    if (c == n_) break;
  }
  // Cells are disjoint and bucket contents ascend, so the concatenation is
  // duplicate-free and deterministic, though not globally sorted.
  return true;
}

std::vector<std::uint32_t> GridIndex::candidates(const double* center, double r) const {
  std::vector<std::uint32_t> out;
  if (!candidates(center, r, out)) {
    out.resize(count_);
    for (std::size_t i = 0; i < count_; ++i) out[i] = static_cast<std::uint32_t>(i);
  }
  return out;
}

std::vector<std::uint32_t> filter_in_ball(const double* const* dims, int n,
                                          const std::vector<std::uint32_t>& candidates,
                                          const double* center, double r) {
  std::vector<std::uint32_t> out;
  if (candidates.empty()) return out;
  std::vector<double> d2(candidates.size());
  kernels::dist_sq(dims, n, candidates.data(), candidates.size(), center, d2.data());
  const double r2 = r * r;
  out.reserve(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i)
    if (d2[i] <= r2) out.push_back(candidates[i]);
  return out;
}

void filter_in_ball_range(const double* const* dims, int n, std::size_t count,
                          const double* center, double r, std::vector<std::uint32_t>& out) {
  out.clear();
  const double r2 = r * r;
  constexpr std::size_t kChunk = 4096;
  double d2[kChunk];
  std::size_t base = 0;
  const double* shifted[kernels::kMaxDim];
  while (base < count) {
    const std::size_t m = std::min(kChunk, count - base);
    for (int c = 0; c < n; ++c) shifted[c] = dims[c] + base;
    kernels::dist_sq(shifted, n, nullptr, m, center, d2);
    for (std::size_t i = 0; i < m; ++i)
      if (d2[i] <= r2) out.push_back(static_cast<std::uint32_t>(base + i));
    base += m;
  }
}

DiscreteMeasure::DiscreteMeasure(std::vector<Atom> atoms, int n, int k,
                                 std::optional<int> finest_scale)
    : n_(n), k_(k), count_(atoms.size()), finest_scale_(finest_scale) {
  if (k < 1 || k >= n) throw std::invalid_argument("DiscreteMeasure: need 1 <= k < n");
  if (n > kernels::kMaxDim) throw std::invalid_argument("DiscreteMeasure: ambient dimension too large");
  coords_.assign(static_cast<std::size_t>(n_) * count_, 0.0);
  weights_.resize(count_);
  radii_.assign(count_, std::numeric_limits<double>::quiet_NaN());
  const double wk = unit_ball_volume(k_);
  for (std::size_t i = 0; i < count_; ++i) {
    const Atom& a = atoms[i];
    if (a.position.size() != n_) throw std::invalid_argument("DiscreteMeasure: atom dimension mismatch");
    if (!a.position.allFinite()) throw std::invalid_argument("DiscreteMeasure: non-finite atom position");
    if (!(a.weight > 0.0)) throw std::invalid_argument("DiscreteMeasure: atom weight must be positive");
    if (a.source_radius) {
      const double expect = wk * std::pow(*a.source_radius, k_);
      if (std::abs(a.weight - expect) > 1e-12 * std::max(expect, 1e-300))
        throw std::invalid_argument("DiscreteMeasure: weight inconsistent with source radius");
      radii_[i] = *a.source_radius;
    }
    for (int c = 0; c < n_; ++c) coords_[static_cast<std::size_t>(c) * count_ + i] = a.position(c);
    weights_[i] = a.weight;
  }
  const auto dp = dim_ptrs();

  // Cell size: median source radius when declared, else a bounding-box pitch.
  double cell = 0.0;
  std::vector<double> present;
  for (double r : radii_)
    if (!std::isnan(r)) present.push_back(r);
  if (!present.empty()) {
    std::sort(present.begin(), present.end());
    cell = present[present.size() / 2];
  } else if (count_ > 0) {
    double extent = 0.0;
    for (int c = 0; c < n_; ++c) {
      const double* d = dp[static_cast<std::size_t>(c)];
      const auto [lo, hi] = std::minmax_element(d, d + count_);
      extent = std::max(extent, *hi - *lo);
    }
    cell = extent / std::max(1.0, std::pow(static_cast<double>(count_), 1.0 / n_));
  }
  if (!(cell > 0.0)) cell = 1.0;
  index_ = GridIndex(dp.data(), n_, count_, cell);
}

DiscreteMeasure DiscreteMeasure::from_balls(const BallCollection& s, int n, int k,
                                            std::optional<int> finest_scale) {
  const double wk = unit_ball_volume(k);
  std::vector<Atom> atoms;
  atoms.reserve(s.balls.size());
  for (const Ball& b : s.balls) {
    if (!(b.radius > 0.0)) throw std::invalid_argument("from_balls: radius must be positive");
    atoms.push_back(Atom{b.center, wk * std::pow(b.radius, k), b.radius});
  }
  return DiscreteMeasure(std::move(atoms), n, k, finest_scale);
}

Vec DiscreteMeasure::position(std::size_t i) const {
  Vec p(n_);
  for (int c = 0; c < n_; ++c) p(c) = coords_[static_cast<std::size_t>(c) * count_ + i];
  return p;
}

std::optional<double> DiscreteMeasure::source_radius(std::size_t i) const {
  if (std::isnan(radii_[i])) return std::nullopt;
  return radii_[i];
}

Atom DiscreteMeasure::atom(std::size_t i) const {
  return Atom{position(i), weights_[i], source_radius(i)};
}

double DiscreteMeasure::total_mass() const {
  KahanSum s;
  for (double w : weights_) s.add(w);
  return s.value();
}

std::vector<std::uint32_t> DiscreteMeasure::atoms_in_ball(const Vec& x, double r) const {
  if (x.size() != n_) throw std::invalid_argument("atoms_in_ball: dimension mismatch");
  if (count_ == 0) return {};
  const auto dp = dim_ptrs();
  std::vector<std::uint32_t> cand;
  if (index_.candidates(x.data(), r, cand)) {
    std::vector<std::uint32_t> out = filter_in_ball(dp.data(), n_, cand, x.data(), r);
    // Callers sum in index order (compensated), so the order is contractual.
    std::sort(out.begin(), out.end());
    return out;
  }
  std::vector<std::uint32_t> out;
  filter_in_ball_range(dp.data(), n_, count_, x.data(), r, out);
  return out;
}

double mass_in_ball(const DiscreteMeasure& mu, const Vec& x, double r) {
  if (!(r > 0.0)) throw std::invalid_argument("mass_in_ball: r must be positive");
  KahanSum s;
  for (std::uint32_t i : mu.atoms_in_ball(x, r)) s.add(mu.weight(i));
  return s.value();
}

DiscreteMeasure scale_measure(const DiscreteMeasure& mu, double lambda) {
  if (!(lambda > 0.0)) throw std::invalid_argument("scale_measure: lambda must be positive");
  const double wscale = std::pow(lambda, mu.k());
  std::vector<Atom> atoms;
  atoms.reserve(mu.size());
  for (std::size_t i = 0; i < mu.size(); ++i) {
    Atom a = mu.atom(i);
    a.position /= lambda;
    a.weight /= wscale;
    if (a.source_radius) a.source_radius = *a.source_radius / lambda;
    atoms.push_back(std::move(a));
  }
  DiscreteMeasure out(std::move(atoms), mu.n(), mu.k(), mu.finest_scale());
  out.set_description(mu.description());
  return out;
}

BallCollection snap_radii(const BallCollection& s, double rho) {
  if (!(rho > 0.0 && rho < 1.0)) throw std::invalid_argument("snap_radii: rho must be in (0,1)");
  if (!s.check_disjoint()) throw std::invalid_argument("snap_radii: input balls are not disjoint");
  BallCollection out;
  out.balls.reserve(s.balls.size());
  for (const Ball& b : s.balls) {
    double p = rho;
    while (p > b.radius) p *= rho;
    out.balls.push_back(Ball{b.center, p});
  }
  out.certify();
  return out;
}

Vec center_of_mass(const DiscreteMeasure& mu, const Ball& ball) {
  const std::vector<std::uint32_t> in = mu.atoms_in_ball(ball.center, ball.radius);
  if (in.empty()) throw std::invalid_argument("center_of_mass: no mass in ball");
  const auto dp = mu.dim_ptrs();
  KahanSum wsum;
  std::vector<KahanSum> num(static_cast<std::size_t>(mu.n()));
  for (std::uint32_t i : in) {
    const double w = mu.weight(i);
    wsum.add(w);
    for (int c = 0; c < mu.n(); ++c) num[static_cast<std::size_t>(c)].add(w * dp[static_cast<std::size_t>(c)][i]);
  }
  if (!(wsum.value() > 0.0)) throw std::invalid_argument("center_of_mass: zero mass in ball");
  Vec p(mu.n());
  for (int c = 0; c < mu.n(); ++c) p(c) = num[static_cast<std::size_t>(c)].value() / wsum.value();
  return p;
}

std::vector<double> upper_density_profile(const DiscreteMeasure& mu, const Vec& x,
                                          const std::vector<double>& radii) {
  for (std::size_t i = 0; i < radii.size(); ++i) {
    if (!(radii[i] > 0.0)) throw std::invalid_argument("upper_density_profile: radii must be positive");
    if (i > 0 && radii[i] > radii[i - 1])
      throw std::invalid_argument("upper_density_profile: radii must be descending");
  }
  const double wk = unit_ball_volume(mu.k());
  std::vector<double> out;
  out.reserve(radii.size());
  for (double r : radii) out.push_back(mass_in_ball(mu, x, r) / (wk * std::pow(r, mu.k())));
  return out;
}

VitaliResult vitali_discretize(const DiscreteMeasure& sample, double rho) {
  if (!(rho > 0.0 && rho < 1.0)) throw std::invalid_argument("vitali_discretize: rho must be in (0,1)");
  const int k = sample.k();
  const double wk = unit_ball_volume(k);

  std::vector<double> menu;
  double p = 1.0;
  for (int m = 1; m <= kVitaliMenuDepth; ++m) {
    p *= rho;
    menu.push_back(p);
  }

  struct Candidate {
    std::uint32_t idx;
    double radius;
  };
  std::vector<Candidate> cands;
  std::vector<std::uint32_t> leftover;

  for (std::size_t i = 0; i < sample.size(); ++i) {
    const Vec x = sample.position(i);
    double chosen = -1.0;
    bool density_ok = true;
    for (double r : menu) {
      density_ok = density_ok && mass_in_ball(sample, x, r) <= 2.0 * wk * std::pow(r, k);
      if (!density_ok) break;
      const double tenth = mass_in_ball(sample, x, r / 10.0);
      if (tenth >= std::pow(2.0, -k - 1) * wk * std::pow(r / 10.0, k)) {
        chosen = r;
        break;  // largest admissible menu radius
      }
    }
    if (chosen > 0.0)
      cands.push_back(Candidate{static_cast<std::uint32_t>(i), chosen});
    else
      leftover.push_back(static_cast<std::uint32_t>(i));
  }

  std::sort(cands.begin(), cands.end(), [&](const Candidate& a, const Candidate& b) {
    if (a.radius != b.radius) return a.radius > b.radius;
    const Vec pa = sample.position(a.idx), pb = sample.position(b.idx);
    for (int c = 0; c < pa.size(); ++c)
      if (pa(c) != pb(c)) return pa(c) < pb(c);
    return a.idx < b.idx;
  });

  // Greedy 5r selection: keep a ball when its 1/5-scaling misses every kept
  // 1/5-ball.
  std::vector<Vec> kept_centers;
  std::vector<double> kept_radii;
  std::vector<std::uint32_t> kept_idx;
  for (const Candidate& c : cands) {
    const Vec x = sample.position(c.idx);
    bool ok = true;
    for (std::size_t j = 0; j < kept_centers.size(); ++j) {
      if ((x - kept_centers[j]).norm() < (c.radius + kept_radii[j]) / 5.0) {
        ok = false;
        break;
      }
    }
    if (!ok) continue;
    kept_centers.push_back(x);
    kept_radii.push_back(c.radius);
    kept_idx.push_back(c.idx);
  }

  std::vector<Atom> nu_atoms;
  BallCollection coll;
  for (std::size_t j = 0; j < kept_centers.size(); ++j) {
    const double r10 = kept_radii[j] / 10.0;
    const Vec pj = center_of_mass(sample, Ball{kept_centers[j], r10});
    coll.balls.push_back(Ball{pj, r10});
    nu_atoms.push_back(Atom{pj, wk * std::pow(r10, k), r10});
  }
  coll.certify();

  DiscreteMeasure nu(std::move(nu_atoms), sample.n(), k);
  nu.set_description("vitali(" + sample.description() + ")");
  return VitaliResult{std::move(coll), std::move(nu), std::move(kept_idx), std::move(kept_radii),
                      std::move(leftover)};
}

}  // namespace rfb
