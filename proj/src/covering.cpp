#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include <json.hpp>

#include "rfb/reifenberg.hpp"
#include "rfb/stats.hpp"

namespace rfb {

namespace {
constexpr double kSlack = 1e-12;
}

ScaleLadder::ScaleLadder(double rho_, int depth_, double tau_)
    : rho(rho_), tau(tau_), depth(depth_) {
  if (!(rho > 0.0 && rho < 1.0)) throw std::invalid_argument("ScaleLadder: rho in (0,1)");
  if (depth < 0) throw std::invalid_argument("ScaleLadder: depth >= 0");
  if (!(tau > 0.0)) throw std::invalid_argument("ScaleLadder: tau > 0");
  kappa = 1.0 / (1.0 - rho);
  if (std::abs(kappa * (1.0 - rho) - 1.0) > 1e-15)
    throw std::invalid_argument("ScaleLadder: kappa inconsistent");
  radii.reserve(static_cast<std::size_t>(depth) + 1);
  double p = 1.0;
  radii.push_back(p);
  for (int i = 1; i <= depth; ++i) {
    p *= rho;
    radii.push_back(p);
  }
}

double ScaleLadder::default_tau(int n) { return std::pow(6.0, -n) / 80.0; }

std::vector<Vec> separated_subset(std::vector<Vec> points, double r) {
  if (!(r > 0.0)) throw std::invalid_argument("separated_subset: r > 0");
  std::sort(points.begin(), points.end(), [](const Vec& a, const Vec& b) {
    for (int c = 0; c < a.size(); ++c)
      if (a(c) != b(c)) return a(c) < b(c);
    return false;
  });
  std::vector<Vec> kept;
  for (const Vec& p : points) {
    bool ok = true;
    for (const Vec& q : kept) {
      if ((p - q).norm() < r) {
        ok = false;
        break;
      }
    }
    if (ok) kept.push_back(p);
  }
  return kept;
}

BallClass classify_ball(const DiscreteMeasure& mu, const Ball& ball, double tau, double M) {
  if (!(tau > 0.0) || !(M > 0.0)) throw std::invalid_argument("classify_ball: tau, M > 0");
  const double mass = mass_in_ball(mu, ball.center, ball.radius);
  const double threshold = tau * M * std::pow(ball.radius, mu.k());
  return mass >= threshold ? BallClass::good : BallClass::bad;
}

std::vector<std::uint32_t> excess_set(const DiscreteMeasure& mu, const Ball& good_ball,
                                      const AffinePlane& plane, double r_next) {
  const std::vector<std::uint32_t> in = mu.atoms_in_ball(good_ball.center, good_ball.radius);
  std::vector<std::uint32_t> out;
  if (in.empty()) return out;
  std::vector<double> d2(in.size());
  double frame[kernels::kMaxDim * kernels::kMaxDim];
  pack_frame_rows(plane, frame);
  const auto dp = mu.dim_ptrs();
  kernels::plane_dist_sq(dp.data(), mu.n(), in.data(), in.size(), plane.base().data(), frame,
                         plane.k(), d2.data());
  const double thr = r_next / 4.0;
  const double thr2 = thr * thr;
  for (std::size_t i = 0; i < in.size(); ++i)
    if (d2[i] >= thr2) out.push_back(in[i]);  // boundary atoms count as excess
  return out;
}

double CoveringHierarchy::excess_mass(const DiscreteMeasure& mu) const {
  KahanSum s;
  for (std::uint32_t i : excess_cumulative) s.add(mu.weight(i));
  return s.value();
}

namespace {

// Source scale index per atom: the j with source_radius == rho^j.
std::vector<int> assign_atom_scales(const DiscreteMeasure& mu, const ScaleLadder& ladder) {
  std::vector<int> scales(mu.size(), -1);
  for (std::size_t i = 0; i < mu.size(); ++i) {
    const auto r = mu.source_radius(i);
    if (!r) throw std::invalid_argument("covering: every atom needs a source radius");
    int found = -1;
    for (int j = 1; j <= ladder.depth; ++j) {
      if (std::abs(*r - ladder.radius(j)) <= 1e-9 * ladder.radius(j)) {
        found = j;
        break;
      }
    }
    if (found < 0) throw std::invalid_argument("covering: atom radius is not rho-adic within the ladder");
    scales[i] = found;
  }
  return scales;
}

void validate_covering_input(const DiscreteMeasure& mu, const ScaleLadder& ladder) {
  if (mu.empty()) throw std::invalid_argument("covering: empty measure");
  for (std::size_t i = 0; i < mu.size(); ++i) {
    if (mu.position(i).norm() > 1.0 + kSlack)
      throw std::invalid_argument("covering: atom centers must lie in B_1");
  }
  // Source balls must be pairwise disjoint.
  const auto dp = mu.dim_ptrs();
  const GridIndex grid(dp.data(), mu.n(), mu.size(), ladder.radius(1));
  for (std::size_t i = 0; i < mu.size(); ++i) {
    const Vec pi = mu.position(i);
    const double ri = *mu.source_radius(i);
    const auto cand = grid.candidates(pi.data(), ri + ladder.radius(1));
    for (std::uint32_t j : cand) {
      if (j <= i) continue;
      const double rj = *mu.source_radius(j);
      if ((pi - mu.position(j)).norm() < ri + rj - kSlack)
        throw std::invalid_argument("covering: source balls are not disjoint");
    }
  }
}

// Per-scale ball membership helper: grids over ball centers, one per scale
// (every ball of a scale shares a radius), so closed-ball point location and
// half-ball proximity probes stay near O(1).
class BallSets {
 public:
  explicit BallSets(int n) : n_(n) {}

  void add(int scale, const Ball& b) {
    PerScale& s = scales_[scale];
    s.radius = b.radius;
    s.balls.push_back(b);
    s.dirty = true;
  }

  bool contains(const Vec& x) const {
    for (auto& [scale, s] : scales_) {
      rebuild(s);
      for (std::uint32_t c : s.grid.candidates(x.data(), s.radius))
        if ((x - s.balls[c].center).norm() <= s.radius) return true;
    }
    return false;
  }

  // Any stored ball whose half-scaling meets the half-scaling of b.
  bool half_overlaps(const Ball& b, double slack) const {
    for (auto& [scale, s] : scales_) {
      rebuild(s);
      const double need = (b.radius + s.radius) / 2.0 - slack;
      for (std::uint32_t c : s.grid.candidates(b.center.data(), need))
        if ((b.center - s.balls[c].center).norm() < need) return true;
    }
    return false;
  }

 private:
  struct PerScale {
    std::vector<Ball> balls;
    double radius = 1.0;
    mutable GridIndex grid;
    mutable std::vector<double> soa;
    mutable bool dirty = true;
  };

  void rebuild(const PerScale& s) const {
    if (!s.dirty) return;
    const std::size_t m = s.balls.size();
    s.soa.assign(static_cast<std::size_t>(n_) * m, 0.0);
    for (std::size_t i = 0; i < m; ++i)
      for (int c = 0; c < n_; ++c) s.soa[static_cast<std::size_t>(c) * m + i] = s.balls[i].center(c);
    std::array<const double*, kernels::kMaxDim> ptrs{};
    for (int c = 0; c < n_; ++c) ptrs[static_cast<std::size_t>(c)] = s.soa.data() + static_cast<std::size_t>(c) * m;
    s.grid = GridIndex(ptrs.data(), n_, m, s.radius > 0.0 ? s.radius : 1.0);
    s.dirty = false;
  }

  int n_;
  mutable std::map<int, PerScale> scales_;
};

std::string ball_str(const Ball& b) {
  std::ostringstream os;
  os << "B(r=" << b.radius << ", c=[";
  for (int c = 0; c < b.center.size(); ++c) os << (c ? "," : "") << b.center(c);
  os << "])";
  return os.str();
}

}  // namespace

namespace detail {
// Shared by cover_run/verify_bound: validates the covering preconditions and
// yields the per-atom source scale.
std::vector<int> covering_atom_scales(const DiscreteMeasure& mu, const ScaleLadder& ladder) {
  std::vector<int> scales = assign_atom_scales(mu, ladder);
  validate_covering_input(mu, ladder);
  return scales;
}
}  // namespace detail

CoveringHierarchy build_covering(const DiscreteMeasure& mu, const ScaleLadder& ladder, double M,
                                 double q) {
  if (!(M > 0.0)) throw std::invalid_argument("build_covering: M > 0");
  if (q < 2.0) throw std::invalid_argument("build_covering: q >= 2");
  const std::vector<int> atom_scale = assign_atom_scales(mu, ladder);
  validate_covering_input(mu, ladder);

  const int n = mu.n();
  const int a = ladder.depth;

  CoveringHierarchy h;
  h.rho = ladder.rho;
  h.tau = ladder.tau;
  h.kappa = ladder.kappa;
  h.q = q;
  h.M = M;
  h.depth = a;
  h.radii = ladder.radii;
  h.atom_scale = atom_scale;
  h.levels.resize(static_cast<std::size_t>(a) + 1);

  std::vector<char> in_excess(mu.size(), 0);
  BallSets bad_fin(n);   // Bad^{<=i} and Fin^{<=i}

  const Ball b1{Vec::Zero(n), 1.0};
  if (classify_ball(mu, b1, ladder.tau, M) == BallClass::good)
    h.levels[0].good.push_back(b1);
  else
    h.levels[0].bad.push_back(b1);
  if (!h.levels[0].bad.empty()) bad_fin.add(0, b1);

  for (int i = 0; i < a; ++i) {
    ScaleLevel& cur = h.levels[static_cast<std::size_t>(i)];
    const double r_i = ladder.radius(i);
    const double r_next = ladder.radius(i + 1);

    // Excess sets and the planes for sigma_{i} projections on this level.
    for (const Ball& gb : cur.good) {
      PlaneFit fit_q = best_plane(mu, gb.center, ladder.kappa * r_i, q);
      if (!fit_q.plane)
        throw CoveringViolation("plane.undefined", "good ball with no mass at " + ball_str(gb));
      if (q == 2.0) {
        cur.sigma_planes.push_back(*fit_q.plane);
      } else {
        PlaneFit fit_2 = best_plane(mu, gb.center, ladder.kappa * r_i, 2.0);
        cur.sigma_planes.push_back(*fit_2.plane);
      }
      cur.excess_planes.push_back(*fit_q.plane);

      const std::vector<std::uint32_t> exc = excess_set(mu, gb, *fit_q.plane, r_next);

      // Markov bound on the excess mass; an arithmetic identity, so zero
      // tolerance.
      KahanSum lhs;
      for (std::uint32_t e : exc) lhs.add(mu.weight(e));
      const std::vector<std::uint32_t> in = mu.atoms_in_ball(gb.center, r_i);
      double frame[kernels::kMaxDim * kernels::kMaxDim];
      pack_frame_rows(*fit_q.plane, frame);
      const auto dp = mu.dim_ptrs();
      const double residual =
          kernels::weighted_residual(dp.data(), mu.weights_data(), n, in.data(), in.size(),
                                     fit_q.plane->base().data(), frame, fit_q.plane->k(), q);
      const double rhs = std::pow(4.0 / r_next, q) * residual;
      if (lhs.value() > rhs)
        throw CoveringViolation("markov.excess",
                                "excess mass " + std::to_string(lhs.value()) + " exceeds " +
                                    std::to_string(rhs) + " at " + ball_str(gb));

      for (std::uint32_t e : exc) {
        if (!in_excess[e]) {
          in_excess[e] = 1;
          cur.excess_new.push_back(e);
        }
      }
    }

    // Membership helpers for the region union Good^i minus the remainder.
    BallSets good_i(n);
    for (const Ball& gb : cur.good) good_i.add(i, gb);

    std::vector<Vec> star;
    std::vector<std::uint32_t> fin_atoms;
    for (std::size_t t = 0; t < mu.size(); ++t) {
      if (in_excess[t]) continue;
      if (atom_scale[t] <= i) continue;
      const Vec z = mu.position(t);
      if (!good_i.contains(z)) continue;
      if (bad_fin.contains(z)) continue;
      if (atom_scale[t] == i + 1)
        fin_atoms.push_back(static_cast<std::uint32_t>(t));
      else
        star.push_back(z);
    }

    ScaleLevel& next = h.levels[static_cast<std::size_t>(i) + 1];
    for (std::uint32_t t : fin_atoms) next.fin.push_back(Ball{mu.position(t), r_next});

    const std::vector<Vec> centers = separated_subset(std::move(star), r_next);
    for (const Vec& z : centers) {
      const Ball jb{z, r_next};
      if (classify_ball(mu, jb, ladder.tau, M) == BallClass::good)
        next.good.push_back(jb);
      else
        next.bad.push_back(jb);
    }

    // Claim 2 (b): half-balls of Good^{i+1}, Bad^{<=i+1}, Fin^{<=i+1} are
    // pairwise disjoint. Earlier bad/fin levels are already pairwise clean,
    // so only the new balls need probing (against the old family and each
    // other).
    {
      BallSets probe(n);
      auto place = [&](const Ball& b) {
        if (bad_fin.half_overlaps(b, kSlack) || probe.half_overlaps(b, kSlack))
          throw CoveringViolation("claim2.halfdisjoint", ball_str(b) + " at scale " +
                                                             std::to_string(i + 1));
        probe.add(i + 1, b);
      };
      for (const Ball& b : next.good) place(b);
      for (const Ball& b : next.bad) place(b);
      for (const Ball& b : next.fin) place(b);
    }

    for (const Ball& b : next.bad) bad_fin.add(i + 1, b);
    for (const Ball& b : next.fin) bad_fin.add(i + 1, b);

    // Claim 2 (c): good balls avoid the centers of source balls at coarser or
    // equal scales.
    for (const Ball& gb : next.good) {
      for (std::uint32_t t : mu.atoms_in_ball(gb.center, gb.radius)) {
        if (atom_scale[t] <= i + 1)
          throw CoveringViolation("claim2.centers",
                                  "good ball " + ball_str(gb) + " touches a coarse center");
      }
    }

    // Claim 2 (a): every atom is covered by Good^{i+1}, Bad^{<=i+1},
    // Fin^{<=i+1} or the excess set.
    BallSets good_next(n);
    for (const Ball& gb : next.good) good_next.add(i + 1, gb);
    for (std::size_t t = 0; t < mu.size(); ++t) {
      if (in_excess[t]) continue;
      const Vec z = mu.position(t);
      if (good_next.contains(z)) continue;
      if (bad_fin.contains(z)) continue;
      throw CoveringViolation("claim2.coverage",
                              "atom " + std::to_string(t) + " escapes the scale-" +
                                  std::to_string(i + 1) + " covering");
    }
  }

  if (!h.levels[static_cast<std::size_t>(a)].good.empty())
    throw CoveringViolation("termination.goodA", "Good^A is nonempty at the finest scale");

  for (std::size_t t = 0; t < mu.size(); ++t)
    if (in_excess[t]) h.excess_cumulative.push_back(static_cast<std::uint32_t>(t));
  return h;
}

PartitionOfUnity::PartitionOfUnity(std::vector<Ball> balls, double r)
    : balls_(std::move(balls)), r_(r) {
  if (!(r_ > 0.0)) throw std::invalid_argument("PartitionOfUnity: r > 0");
  if (balls_.empty()) throw std::invalid_argument("PartitionOfUnity: need at least one ball");
  n_ = static_cast<int>(balls_[0].center.size());
  for (const Ball& b : balls_) {
    if (std::abs(b.radius - r_) > kSlack * std::max(1.0, r_))
      throw std::invalid_argument("PartitionOfUnity: balls must share the radius");
  }
  const std::size_t m = balls_.size();
  centers_.assign(static_cast<std::size_t>(n_) * m, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (int c = 0; c < n_; ++c) centers_[static_cast<std::size_t>(c) * m + i] = balls_[i].center(c);
  std::array<const double*, kernels::kMaxDim> ptrs{};
  for (int c = 0; c < n_; ++c) ptrs[static_cast<std::size_t>(c)] = centers_.data() + static_cast<std::size_t>(c) * m;
  grid_ = GridIndex(ptrs.data(), n_, m, r_);

  // Half-ball disjointness: centers at least r apart.
  for (std::size_t i = 0; i < m; ++i) {
    const auto cand = grid_.candidates(balls_[i].center.data(), r_);
    for (std::uint32_t j : cand) {
      if (j <= i) continue;
      if ((balls_[i].center - balls_[j].center).norm() < r_ - kSlack)
        throw std::invalid_argument("PartitionOfUnity: half-balls overlap");
    }
  }
}

namespace {

// Quintic smoothstep bump: 1 on [0,3], 0 on [4,inf).
double bump_profile(double t) {
  if (t <= 3.0) return 1.0;
  if (t >= 4.0) return 0.0;
  const double u = 4.0 - t;
  return u * u * u * (10.0 + u * (-15.0 + 6.0 * u));
}

}  // namespace

PartitionOfUnity::Eval PartitionOfUnity::evaluate(const Vec& x) const {
  Eval e;
  const auto cand = grid_.candidates(x.data(), 4.0 * r_);
  for (std::uint32_t i : cand) {
    const double t = (x - balls_[i].center).norm() / r_;
    const double b = bump_profile(t);
    if (b > 0.0) e.active.emplace_back(i, b);
  }
  if (e.active.empty()) {
    e.lambda_sum = 0.0;
    e.psi = 1.0;
    return e;
  }
  double raw = 0.0;
  for (const auto& [i, b] : e.active) raw += b;
  if (raw > 1.0) {
    for (auto& [i, b] : e.active) b /= raw;
  }
  double sum = 0.0;
  for (const auto& [i, b] : e.active) sum += b;
  e.lambda_sum = sum;
  e.psi = 1.0 - sum;
  return e;
}

SigmaMap::SigmaMap(int scale_index, double r, std::vector<Ball> balls,
                   std::vector<AffinePlane> planes)
    : scale_(scale_index), r_(r), planes_(std::move(planes)) {
  if (balls.size() != planes_.size())
    throw std::invalid_argument("SigmaMap: one plane per ball required");
  if (!balls.empty()) pou_.emplace(std::move(balls), r);
}

Vec SigmaMap::apply(const Vec& x) const {
  if (!pou_) return x;
  const PartitionOfUnity::Eval e = pou_->evaluate(x);
  if (e.active.empty()) return x;  // identity outside the 4-scaled balls
  Vec out = e.psi * x;
  for (const auto& [i, lambda] : e.active) out += lambda * planes_[i].project(x);
  return out;
}

std::string hierarchy_json(const CoveringHierarchy& h) {
  nlohmann::json j;
  j["rho"] = h.rho;
  j["tau"] = h.tau;
  j["kappa"] = h.kappa;
  j["q"] = h.q;
  j["M"] = h.M;
  j["depth"] = h.depth;
  auto balls_json = [](const std::vector<Ball>& balls) {
    nlohmann::json arr = nlohmann::json::array();
    for (const Ball& b : balls) {
      nlohmann::json e;
      e["center"] = std::vector<double>(b.center.data(), b.center.data() + b.center.size());
      e["radius"] = b.radius;
      arr.push_back(std::move(e));
    }
    return arr;
  };
  nlohmann::json levels = nlohmann::json::array();
  for (const ScaleLevel& lv : h.levels) {
    nlohmann::json e;
    e["good"] = balls_json(lv.good);
    e["bad"] = balls_json(lv.bad);
    e["fin"] = balls_json(lv.fin);
    e["excess_new"] = lv.excess_new;
    levels.push_back(std::move(e));
  }
  j["levels"] = std::move(levels);
  j["excess_atoms"] = h.excess_cumulative;
  return j.dump(2);
}

}  // namespace rfb
