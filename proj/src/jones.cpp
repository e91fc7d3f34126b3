#include "rfb/jones.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "rfb/format.hpp"
#include "rfb/parallel.hpp"
#include "rfb/stats.hpp"

namespace rfb {

namespace {

constexpr double kIrlsDamping = 1e-9;
constexpr int kIrlsMaxRounds = 100;
constexpr double kIrlsRelTol = 1e-8;

// Compact SoA copy of a fit subset; reused per thread to avoid churn. The
// copy is contiguous, so every kernel pass below runs without gathers.
struct FitScratch {
  std::vector<double> coords;
  std::vector<double> w;
  std::vector<double> irls_w;
  std::vector<double> d2;
  std::array<const double*, kernels::kMaxDim> ptrs{};
  std::size_t m = 0;
  int n = 0;

  void load(const DiscreteMeasure& mu, const std::vector<std::uint32_t>& idx) {
    m = idx.size();
    n = mu.n();
    coords.resize(static_cast<std::size_t>(n) * m);
    w.resize(m);
    irls_w.resize(m);
    d2.resize(m);
    const auto dp = mu.dim_ptrs();
    for (int c = 0; c < n; ++c) {
      double* dst = coords.data() + static_cast<std::size_t>(c) * m;
      const double* src = dp[static_cast<std::size_t>(c)];
      for (std::size_t i = 0; i < m; ++i) dst[i] = src[idx[i]];
    }
    const double* wsrc = mu.weights_data();
    for (std::size_t i = 0; i < m; ++i) w[i] = wsrc[idx[i]];
    for (int c = 0; c < n; ++c)
      ptrs[static_cast<std::size_t>(c)] = coords.data() + static_cast<std::size_t>(c) * m;
  }
};

thread_local FitScratch tls_fit;

// Weighted PCA plane over the scratch subset with the supplied weights.
// Degenerate spectra fall back to deterministic standard-basis padding.
std::optional<AffinePlane> pca_plane(const FitScratch& s, const double* weights, int k) {
  const int n = s.n;
  double mean[kernels::kMaxDim];
  double wsum = 0.0;
  kernels::weighted_mean(s.ptrs.data(), weights, n, nullptr, s.m, mean, &wsum);
  if (!(wsum > 0.0)) return std::nullopt;

  double upper[kernels::kMaxDim * (kernels::kMaxDim + 1) / 2];
  kernels::weighted_scatter(s.ptrs.data(), weights, n, nullptr, s.m, mean, upper);
  Mat cov(n, n);
  for (int c1 = 0; c1 < n; ++c1)
    for (int c2 = c1; c2 < n; ++c2) {
      const double v = upper[kernels::tri_index(n, c1, c2)];
      cov(c1, c2) = v;
      cov(c2, c1) = v;
    }

  Eigen::SelfAdjointEigenSolver<Mat> es(cov);
  const Vec evals = es.eigenvalues();  // ascending
  const double lmax = std::max(evals(n - 1), 0.0);
  const double tol = lmax * 1e-12;
  int rank = 0;
  for (int i = 0; i < n; ++i)
    if (evals(i) > tol && evals(i) > 0.0) ++rank;

  const int take = std::min(k, rank);
  Mat frame(n, k);
  if (take > 0) {
    Mat top(n, take);
    for (int j = 0; j < take; ++j) top.col(j) = es.eigenvectors().col(n - 1 - j);
    top = canonical_directions(std::move(top));
    frame.leftCols(take) = top;
  }
  // Pad with the lexicographically smallest standard basis directions that
  // stay essentially orthogonal to the fitted span.
  int have = take;
  for (int j = 0; j < n && have < k; ++j) {
    Vec e = Vec::Zero(n);
    e(j) = 1.0;
    Vec res = e;
    for (int c = 0; c < have; ++c) res -= frame.col(c).dot(res) * frame.col(c);
    if (res.squaredNorm() > 0.5) {
      frame.col(have) = res / res.norm();
      ++have;
    }
  }
  if (have < k) return std::nullopt;  // cannot happen for k < n

  Vec base(n);
  for (int c = 0; c < n; ++c) base(c) = mean[c];
  return AffinePlane(std::move(base), std::move(frame));
}

double subset_residual(const FitScratch& s, const AffinePlane& plane, double q) {
  double frame[kernels::kMaxDim * kernels::kMaxDim];
  pack_frame_rows(plane, frame);
  return kernels::weighted_residual(s.ptrs.data(), s.w.data(), s.n, nullptr, s.m,
                                    plane.base().data(), frame, plane.k(), q);
}

PlaneFit fit_subset(const DiscreteMeasure& mu, const std::vector<std::uint32_t>& idx, double q) {
  if (q < 2.0) throw std::invalid_argument("best_plane: q must be >= 2");
  PlaneFit out;
  if (idx.empty()) return out;

  FitScratch& s = tls_fit;
  s.load(mu, idx);
  const int k = mu.k();

  std::optional<AffinePlane> plane = pca_plane(s, s.w.data(), k);
  if (!plane) return out;
  double obj = subset_residual(s, *plane, q);
  out.plane = plane;
  out.objective = obj;
  if (q == 2.0) return out;

  // IRLS with weights w * d^{q-2}, damped, seeded at the q = 2 plane.
  double prev = obj;
  AffinePlane current = *plane;
  out.converged = false;
  const double ex = 0.5 * (q - 2.0);
  for (int round = 1; round <= kIrlsMaxRounds; ++round) {
    double frame[kernels::kMaxDim * kernels::kMaxDim];
    pack_frame_rows(current, frame);
    kernels::plane_dist_sq(s.ptrs.data(), s.n, nullptr, s.m, current.base().data(),
                           frame, current.k(), s.d2.data());
    for (std::size_t i = 0; i < s.m; ++i)
      s.irls_w[i] = s.w[i] * (std::pow(s.d2[i], ex) + kIrlsDamping);
    std::optional<AffinePlane> next = pca_plane(s, s.irls_w.data(), k);
    if (!next) break;
    const double obj_next = subset_residual(s, *next, q);
    out.rounds = round;
    if (obj_next < out.objective) {
      out.objective = obj_next;
      out.plane = next;
    }
    if (std::abs(obj_next - prev) <= kIrlsRelTol * std::max(std::abs(prev), 1e-300)) {
      out.converged = true;
      break;
    }
    prev = obj_next;
    current = *next;
  }
  return out;
}

double beta_from_objective(const DiscreteMeasure& mu, double r, double q, double objective) {
  const double norm = std::pow(r, -(mu.k() + q));
  if (objective <= 0.0) return 0.0;
  return std::pow(norm * objective, 1.0 / q);
}

}  // namespace

PlaneFit best_plane(const DiscreteMeasure& mu, const Vec& x, double r, double q) {
  if (!(r > 0.0)) throw std::invalid_argument("best_plane: r must be positive");
  return fit_subset(mu, mu.atoms_in_ball(x, r), q);
}

BetaResult beta_q(const DiscreteMeasure& mu, const Vec& x, double r, double q) {
  PlaneFit fit = best_plane(mu, x, r, q);
  BetaResult out;
  out.plane = std::move(fit.plane);
  out.residual_q = fit.objective;
  out.value = beta_from_objective(mu, r, q, fit.objective);
  return out;
}

namespace {

std::vector<double> rho_ladder(double rho, int depth) {
  std::vector<double> radii;
  radii.reserve(static_cast<std::size_t>(depth) + 1);
  double p = 1.0;
  radii.push_back(p);
  for (int i = 1; i <= depth; ++i) {
    p *= rho;
    radii.push_back(p);
  }
  return radii;
}

int require_finest_scale(const DiscreteMeasure& mu) {
  if (!mu.finest_scale())
    throw std::invalid_argument("measure lacks a declared finest scale (set_finest_scale)");
  return *mu.finest_scale();
}

}  // namespace

JonesProfile jones_square(const DiscreteMeasure& mu, const Vec& x, double r, double q, double rho) {
  if (!(rho > 0.0 && rho < 1.0)) throw std::invalid_argument("jones_square: rho in (0,1)");
  if (!(r > 0.0)) throw std::invalid_argument("jones_square: r must be positive");
  const int a = require_finest_scale(mu);
  JonesProfile p;
  p.center = x;
  p.top_radius = r;
  p.rho = rho;
  p.finest_scale = a;
  const std::vector<double> radii = rho_ladder(rho, a);
  KahanSum j;
  for (int alpha = 0; alpha <= a; ++alpha) {
    if (radii[static_cast<std::size_t>(alpha)] > 2.0 * r) continue;
    const BetaResult b = beta_q(mu, x, radii[static_cast<std::size_t>(alpha)], q);
    p.per_scale_beta.emplace_back(radii[static_cast<std::size_t>(alpha)], b.value);
    j.add(b.value * b.value);
  }
  p.J = j.value();
  return p;
}

double delta_q(const DiscreteMeasure& mu, const Vec& x, double r, double q) {
  if (!(r > 0.0)) throw std::invalid_argument("delta_q: r must be positive");
  const std::vector<std::uint32_t> in = mu.atoms_in_ball(x, r);
  KahanSum s;
  for (std::uint32_t i : in) {
    const BetaResult b = beta_q(mu, mu.position(i), r, q);
    s.add(mu.weight(i) * b.value * b.value);
  }
  return std::pow(r, -mu.k()) * s.value();
}

namespace {

// Reusable query buffers; one set per worker thread.
struct QueryScratch {
  std::vector<std::uint32_t> cand;
  std::vector<std::uint32_t> idx;
};
thread_local QueryScratch tls_query;

// In-ball atom indices through the supplied grid, reusing scratch storage.
const std::vector<std::uint32_t>& ball_indices(const DiscreteMeasure& mu, const GridIndex& grid,
                                               const double* center, double rad) {
  QueryScratch& qs = tls_query;
  const auto dp = mu.dim_ptrs();
  if (grid.candidates(center, rad, qs.cand)) {
    qs.idx.clear();
    if (!qs.cand.empty()) {
      static thread_local std::vector<double> d2;
      d2.resize(qs.cand.size());
      kernels::dist_sq(dp.data(), mu.n(), qs.cand.data(), qs.cand.size(), center, d2.data());
      const double r2 = rad * rad;
      for (std::size_t i = 0; i < qs.cand.size(); ++i)
        if (d2[i] <= r2) qs.idx.push_back(qs.cand[i]);
    }
  } else {
    filter_in_ball_range(dp.data(), mu.n(), mu.size(), center, rad, qs.idx);
  }
  return qs.idx;
}

}  // namespace

std::vector<std::vector<double>> beta2_profiles(const DiscreteMeasure& mu, double q, double rho,
                                                int depth) {
  const std::vector<double> radii = rho_ladder(rho, depth);
  std::vector<std::vector<double>> beta2(mu.size(),
                                         std::vector<double>(static_cast<std::size_t>(depth) + 1, 0.0));
  if (mu.empty()) return beta2;
  const auto dp = mu.dim_ptrs();

  // Balls that swallow the whole measure share one fit; beta is then
  // independent of the center.
  std::vector<std::uint32_t> all(mu.size());
  for (std::size_t i = 0; i < mu.size(); ++i) all[i] = static_cast<std::uint32_t>(i);

  for (int m = 0; m <= depth; ++m) {
    const double rad = radii[static_cast<std::size_t>(m)];
    const GridIndex grid(dp.data(), mu.n(), mu.size(), rad);
    const PlaneFit full_fit = fit_subset(mu, all, q);
    const double full_b = beta_from_objective(mu, rad, q, full_fit.objective);
    const double full_b2 = full_b * full_b;
    parallel_for(mu.size(), [&](std::size_t i) {
      const Vec pos = mu.position(i);
      const std::vector<std::uint32_t>& idx = ball_indices(mu, grid, pos.data(), rad);
      if (idx.size() == mu.size()) {
        beta2[i][static_cast<std::size_t>(m)] = full_b2;
        return;
      }
      const PlaneFit fit = fit_subset(mu, idx, q);
      const double b = beta_from_objective(mu, rad, q, fit.objective);
      beta2[i][static_cast<std::size_t>(m)] = b * b;
    });
  }
  return beta2;
}

namespace {

struct CandidateBall {
  Vec center;
  int scale = 0;
};

FlatnessReport flatness_report(const DiscreteMeasure& mu, double q, double rho) {
  if (!(rho > 0.0 && rho < 1.0)) throw std::invalid_argument("flatness: rho in (0,1)");
  if (q < 2.0) throw std::invalid_argument("flatness: q must be >= 2");
  FlatnessReport rep;
  rep.q = q;
  rep.rho = rho;
  rep.witness_ball_sup = Ball{Vec::Zero(mu.n()), 1.0};
  rep.witness_ball_avg = Ball{Vec::Zero(mu.n()), 1.0};
  if (mu.empty()) return rep;

  for (std::size_t i = 0; i < mu.size(); ++i) {
    if (mu.position(i).norm() > 2.0 + 1e-12)
      throw std::invalid_argument("flatness: measure must be supported in B_2");
  }

  const int a = require_finest_scale(mu);
  const std::vector<double> radii = rho_ladder(rho, a);

  // Per-atom Jones values J_q(y, rho^alpha), assembled from suffix sums of
  // the per-scale beta^2 table.
  const std::vector<std::vector<double>> beta2 = beta2_profiles(mu, q, rho, a);
  std::vector<std::vector<double>> jtab(mu.size(), std::vector<double>(static_cast<std::size_t>(a) + 1, 0.0));
  std::vector<int> mmin(static_cast<std::size_t>(a) + 1, 0);
  for (int alpha = 0; alpha <= a; ++alpha) {
    int m = 0;
    while (m <= a && radii[static_cast<std::size_t>(m)] > 2.0 * radii[static_cast<std::size_t>(alpha)]) ++m;
    mmin[static_cast<std::size_t>(alpha)] = m;
  }
  for (std::size_t i = 0; i < mu.size(); ++i) {
    std::vector<double> suffix(static_cast<std::size_t>(a) + 2, 0.0);
    for (int m = a; m >= 0; --m)
      suffix[static_cast<std::size_t>(m)] = suffix[static_cast<std::size_t>(m) + 1] + beta2[i][static_cast<std::size_t>(m)];
    for (int alpha = 0; alpha <= a; ++alpha) {
      const int m = mmin[static_cast<std::size_t>(alpha)];
      jtab[i][static_cast<std::size_t>(alpha)] = m <= a ? suffix[static_cast<std::size_t>(m)] : 0.0;
    }
  }

  const auto dp = mu.dim_ptrs();
  const int n = mu.n();
  double best_sup = 0.0, best_avg = 0.0;
  std::size_t examined = 0;

  for (int alpha = 0; alpha <= a; ++alpha) {
    const double rad = radii[static_cast<std::size_t>(alpha)];
    const GridIndex grid(dp.data(), n, mu.size(), rad);

    // Candidate centers: atom positions plus the rho-adic lattice cells of
    // pitch rad/2 within reach of an atom. Balls must stay inside B_2.
    std::vector<CandidateBall> cands;
    for (std::size_t i = 0; i < mu.size(); ++i) {
      const Vec pos = mu.position(i);
      if (pos.norm() + rad <= 2.0 + 1e-12) cands.push_back(CandidateBall{pos, alpha});
    }
    const double pitch = rad / 2.0;
    std::set<std::array<long long, kernels::kMaxDim>> cells;
    for (std::size_t i = 0; i < mu.size(); ++i) {
      const Vec pos = mu.position(i);
      std::array<long long, kernels::kMaxDim> lo{}, hi{};
      for (int c = 0; c < n; ++c) {
        lo[static_cast<std::size_t>(c)] = static_cast<long long>(std::ceil((pos(c) - rad) / pitch));
        hi[static_cast<std::size_t>(c)] = static_cast<long long>(std::floor((pos(c) + rad) / pitch));
      }
      std::array<long long, kernels::kMaxDim> z = lo;
      while (true) {
        cells.insert(z);
        int c = 0;
        for (; c < n; ++c) {
          if (++z[static_cast<std::size_t>(c)] <= hi[static_cast<std::size_t>(c)]) break;
          z[static_cast<std::size_t>(c)] = lo[static_cast<std::size_t>(c)];
        }
        if (c == n) break;
      }
    }
    for (const auto& z : cells) {
      Vec center = Vec::Zero(n);
      for (int c = 0; c < n; ++c) center(c) = pitch * static_cast<double>(z[static_cast<std::size_t>(c)]);
      if (center.norm() + rad <= 2.0 + 1e-12) cands.push_back(CandidateBall{center, alpha});
    }

    std::vector<double> vals_sup(cands.size(), 0.0);
    std::vector<double> vals_avg(cands.size(), 0.0);
    const double inv_rk = std::pow(rad, -mu.k());
    parallel_for(cands.size(), [&](std::size_t c) {
      double sum = 0.0, mass = 0.0;
      for (std::uint32_t i : ball_indices(mu, grid, cands[c].center.data(), rad)) {
        sum += mu.weight(i) * jtab[i][static_cast<std::size_t>(alpha)];
        mass += mu.weight(i);
      }
      vals_sup[c] = inv_rk * sum;
      vals_avg[c] = mass > 0.0 ? sum / mass : 0.0;
    });
    examined += cands.size();
    for (std::size_t c = 0; c < cands.size(); ++c) {
      if (vals_sup[c] > best_sup) {
        best_sup = vals_sup[c];
        rep.witness_ball_sup = Ball{cands[c].center, rad};
      }
      if (vals_avg[c] > best_avg) {
        best_avg = vals_avg[c];
        rep.witness_ball_avg = Ball{cands[c].center, rad};
      }
    }
  }

  rep.J_sup = best_sup;
  rep.J_avg = best_avg;
  rep.balls_examined = examined;
  return rep;
}

}  // namespace

FlatnessReport flatness_sup(const DiscreteMeasure& mu, double q, double rho) {
  return flatness_report(mu, q, rho);
}

FlatnessReport flatness_avg(const DiscreteMeasure& mu, double q, double rho) {
  return flatness_report(mu, q, rho);
}

namespace {

nlohmann::json ball_json(const Ball& b) {
  nlohmann::json j;
  j["center"] = std::vector<double>(b.center.data(), b.center.data() + b.center.size());
  j["radius"] = b.radius;
  return j;
}

}  // namespace

std::string jones_profile_json(const JonesProfile& p) {
  nlohmann::json j;
  j["center"] = std::vector<double>(p.center.data(), p.center.data() + p.center.size());
  j["radius"] = p.top_radius;
  j["rho"] = p.rho;
  j["finest_scale"] = p.finest_scale;
  nlohmann::json scales = nlohmann::json::array();
  for (const auto& [rad, val] : p.per_scale_beta) {
    nlohmann::json row;
    row["radius"] = rad;
    row["value"] = val;
    scales.push_back(std::move(row));
  }
  j["per_scale"] = std::move(scales);
  j["J"] = p.J;
  return j.dump(2);
}

std::string flatness_report_json(const FlatnessReport& r) {
  nlohmann::json j;
  j["q"] = r.q;
  j["rho"] = r.rho;
  j["J_sup"] = r.J_sup;
  j["J_avg"] = r.J_avg;
  j["witness"]["sup"] = ball_json(r.witness_ball_sup);
  j["witness"]["avg"] = ball_json(r.witness_ball_avg);
  j["balls_examined"] = r.balls_examined;
  return j.dump(2);
}

void save_beta_table_csv(const JonesProfile& p, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << csv_row({"radius", "value"});
  for (const auto& [rad, val] : p.per_scale_beta) out << csv_row({format_double(rad), format_double(val)});
}

}  // namespace rfb
