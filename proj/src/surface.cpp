#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "rfb/format.hpp"
#include "rfb/parallel.hpp"
#include "rfb/reifenberg.hpp"
#include "rfb/rng.hpp"
#include "rfb/stats.hpp"

namespace rfb {

namespace detail {
std::vector<int> covering_atom_scales(const DiscreteMeasure& mu, const ScaleLadder& ladder);
}

namespace {

double tri_area(const Vec& a, const Vec& b, const Vec& c) {
  const Vec u = b - a, v = c - a;
  const double uu = u.squaredNorm(), vv = v.squaredNorm(), uv = u.dot(v);
  const double g = uu * vv - uv * uv;
  return g > 0.0 ? 0.5 * std::sqrt(g) : 0.0;
}

}  // namespace

MeshSurface mesh_plane_segment(const AffinePlane& plane, const Vec& ball_center,
                               double ball_radius, double edge_length) {
  if (plane.k() != 1) throw std::invalid_argument("mesh_plane_segment: k == 1 plane required");
  if (!(edge_length > 0.0)) throw std::invalid_argument("mesh_plane_segment: edge_length > 0");
  MeshSurface mesh;
  mesh.n = plane.n();
  mesh.k = 1;
  const Vec rel = ball_center - plane.base();
  const Vec b = plane.frame().transpose() * rel;
  const double off2 = rel.squaredNorm() - b.squaredNorm();
  const double s2 = ball_radius * ball_radius - std::max(off2, 0.0);
  if (s2 < 0.0) return mesh;
  const double s = std::sqrt(s2);
  const int count = std::max(2, static_cast<int>(std::ceil(2.0 * s / edge_length)) + 1);
  mesh.vertices.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    const double t = b(0) - s + 2.0 * s * static_cast<double>(i) / (count - 1);
    mesh.vertices.push_back(plane.base() + t * plane.frame().col(0));
  }
  for (int i = 0; i + 1 < count; ++i) mesh.edges.push_back({i, i + 1});
  return mesh;
}

MeshSurface mesh_plane_disk(const AffinePlane& plane, const Vec& ball_center, double ball_radius,
                            double edge_length) {
  if (plane.k() != 2) throw std::invalid_argument("mesh_plane_disk: k == 2 plane required");
  if (!(edge_length > 0.0)) throw std::invalid_argument("mesh_plane_disk: edge_length > 0");
  MeshSurface mesh;
  mesh.n = plane.n();
  mesh.k = 2;
  const Vec rel = ball_center - plane.base();
  const Vec b = plane.frame().transpose() * rel;
  const double off2 = rel.squaredNorm() - b.squaredNorm();
  const double s2 = ball_radius * ball_radius - std::max(off2, 0.0);
  if (s2 < 0.0) return mesh;
  const double s = std::sqrt(s2);
  const int rings = std::max(1, static_cast<int>(std::ceil(s / edge_length)));
  const int m = 6 * rings;  // constant azimuthal count

  auto param_point = [&](double rad, double ang) {
    Vec t = b;
    t(0) += rad * std::cos(ang);
    t(1) += rad * std::sin(ang);
    return plane.base() + plane.frame() * t;
  };
  mesh.vertices.push_back(plane.base() + plane.frame() * b);  // center
  for (int j = 1; j <= rings; ++j) {
    const double rad = s * static_cast<double>(j) / rings;
    for (int aidx = 0; aidx < m; ++aidx)
      mesh.vertices.push_back(param_point(rad, 2.0 * 3.14159265358979323846 * aidx / m));
  }
  auto vid = [&](int ring, int aidx) { return 1 + (ring - 1) * m + (aidx % m); };
  for (int aidx = 0; aidx < m; ++aidx) mesh.triangles.push_back({0, vid(1, aidx), vid(1, aidx + 1)});
  for (int j = 1; j < rings; ++j)
    for (int aidx = 0; aidx < m; ++aidx) {
      mesh.triangles.push_back({vid(j, aidx), vid(j + 1, aidx), vid(j + 1, aidx + 1)});
      mesh.triangles.push_back({vid(j, aidx), vid(j + 1, aidx + 1), vid(j, aidx + 1)});
    }
  return mesh;
}

double surface_area(const MeshSurface& mesh) {
  KahanSum s;
  if (mesh.k == 1) {
    for (const auto& e : mesh.edges) s.add((mesh.vertices[static_cast<std::size_t>(e[1])] -
                                            mesh.vertices[static_cast<std::size_t>(e[0])]).norm());
  } else {
    for (const auto& t : mesh.triangles)
      s.add(tri_area(mesh.vertices[static_cast<std::size_t>(t[0])],
                     mesh.vertices[static_cast<std::size_t>(t[1])],
                     mesh.vertices[static_cast<std::size_t>(t[2])]));
  }
  return s.value();
}

namespace {

constexpr double kDegenerate = 1e-14;

std::vector<std::size_t> degenerate_cells(const MeshSurface& mesh) {
  std::vector<std::size_t> out;
  if (mesh.k == 1) {
    for (std::size_t i = 0; i < mesh.edges.size(); ++i) {
      const auto& e = mesh.edges[i];
      if ((mesh.vertices[static_cast<std::size_t>(e[1])] - mesh.vertices[static_cast<std::size_t>(e[0])]).norm() <
          kDegenerate)
        out.push_back(i);
    }
  } else {
    for (std::size_t i = 0; i < mesh.triangles.size(); ++i) {
      const auto& t = mesh.triangles[i];
      if (tri_area(mesh.vertices[static_cast<std::size_t>(t[0])],
                   mesh.vertices[static_cast<std::size_t>(t[1])],
                   mesh.vertices[static_cast<std::size_t>(t[2])]) < kDegenerate)
        out.push_back(i);
    }
  }
  return out;
}

// Midpoint refinement of the listed cells (2-split for segments, 4-split for
// triangles).
MeshSurface refine_cells(const MeshSurface& mesh, const std::vector<std::size_t>& cells) {
  MeshSurface out = mesh;
  std::map<std::pair<int, int>, int> midpoint;
  auto mid = [&](int a, int b) {
    const auto key = std::minmax(a, b);
    auto it = midpoint.find(key);
    if (it != midpoint.end()) return it->second;
    const int idx = static_cast<int>(out.vertices.size());
    out.vertices.push_back(0.5 * (out.vertices[static_cast<std::size_t>(a)] +
                                  out.vertices[static_cast<std::size_t>(b)]));
    midpoint.emplace(key, idx);
    return idx;
  };
  std::set<std::size_t> split(cells.begin(), cells.end());
  if (mesh.k == 1) {
    std::vector<std::array<int, 2>> edges;
    for (std::size_t i = 0; i < mesh.edges.size(); ++i) {
      const auto& e = mesh.edges[i];
      if (split.count(i)) {
        const int mdp = mid(e[0], e[1]);
        edges.push_back({e[0], mdp});
        edges.push_back({mdp, e[1]});
      } else {
        edges.push_back(e);
      }
    }
    out.edges = std::move(edges);
  } else {
    std::vector<std::array<int, 3>> tris;
    for (std::size_t i = 0; i < mesh.triangles.size(); ++i) {
      const auto& t = mesh.triangles[i];
      if (split.count(i)) {
        const int ab = mid(t[0], t[1]), bc = mid(t[1], t[2]), ca = mid(t[2], t[0]);
        tris.push_back({t[0], ab, ca});
        tris.push_back({ab, t[1], bc});
        tris.push_back({ca, bc, t[2]});
        tris.push_back({ab, bc, ca});
      } else {
        tris.push_back(t);
      }
    }
    out.triangles = std::move(tris);
  }
  return out;
}

MeshSurface map_vertices(const MeshSurface& mesh, const SigmaMap& map) {
  MeshSurface out = mesh;
  parallel_for(mesh.vertices.size(), [&](std::size_t i) { out.vertices[i] = map.apply(mesh.vertices[i]); });
  out.provenance.push_back(map.scale_index());
  return out;
}

}  // namespace

MeshSurface pushforward_surface(const MeshSurface& mesh, const SigmaMap& map) {
  for (const Vec& v : mesh.vertices)
    if (!v.allFinite()) throw std::invalid_argument("pushforward_surface: non-finite vertex");
  MeshSurface mapped = map_vertices(mesh, map);
  std::vector<std::size_t> bad = degenerate_cells(mapped);
  if (bad.empty()) return mapped;
  const MeshSurface refined = refine_cells(mesh, bad);
  mapped = map_vertices(refined, map);
  bad = degenerate_cells(mapped);
  if (!bad.empty())
    throw std::runtime_error("pushforward_surface: degenerate cells persist after refinement");
  return mapped;
}

namespace {

struct ProjectedMesh {
  std::vector<int> ids;           // vertex ids inside the ball
  std::vector<char> in_ball;      // per vertex
  std::vector<Vec> params;        // k-dim coordinates on the plane
  std::vector<double> height;     // |g| per vertex
  std::vector<Vec> offset;        // g per vertex
};

ProjectedMesh project_mesh(const MeshSurface& mesh, const AffinePlane& plane, const Ball& ball) {
  ProjectedMesh p;
  p.in_ball.assign(mesh.vertices.size(), 0);
  p.params.resize(mesh.vertices.size());
  p.height.assign(mesh.vertices.size(), 0.0);
  p.offset.resize(mesh.vertices.size());
  for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
    const Vec& v = mesh.vertices[i];
    if ((v - ball.center).norm() <= ball.radius) {
      p.in_ball[i] = 1;
      p.ids.push_back(static_cast<int>(i));
    }
    p.params[i] = plane.frame().transpose() * (v - plane.base());
    p.offset[i] = v - plane.project(v);
    p.height[i] = p.offset[i].norm();
  }
  return p;
}

bool triangles_overlap_2d(const std::array<Vec, 3>& a, const std::array<Vec, 3>& b, double tol) {
  // Separating axis over both triangles' edge normals; penetration below tol
  // does not count as overlap.
  auto axes_separate = [&](const std::array<Vec, 3>& t1, const std::array<Vec, 3>& t2) {
    for (int e = 0; e < 3; ++e) {
      const Vec d = t1[static_cast<std::size_t>((e + 1) % 3)] - t1[static_cast<std::size_t>(e)];
      Vec nrm(2);
      nrm << -d(1), d(0);
      double lo1 = 1e300, hi1 = -1e300, lo2 = 1e300, hi2 = -1e300;
      for (int i = 0; i < 3; ++i) {
        const double s1 = nrm.dot(t1[static_cast<std::size_t>(i)]);
        const double s2 = nrm.dot(t2[static_cast<std::size_t>(i)]);
        lo1 = std::min(lo1, s1);
        hi1 = std::max(hi1, s1);
        lo2 = std::min(lo2, s2);
        hi2 = std::max(hi2, s2);
      }
      const double scale = nrm.norm();
      if (hi1 <= lo2 + tol * scale || hi2 <= lo1 + tol * scale) return true;
    }
    return false;
  };
  return !axes_separate(a, b) && !axes_separate(b, a);
}

}  // namespace

GraphCheckResult graph_check(const MeshSurface& mesh, const AffinePlane& plane, const Ball& ball) {
  if (plane.k() != mesh.k) throw std::invalid_argument("graph_check: plane/mesh dimension mismatch");
  GraphCheckResult res;
  const ProjectedMesh p = project_mesh(mesh, plane, ball);
  if (p.ids.empty()) throw std::invalid_argument("graph_check: mesh misses the ball");

  double max_h = 0.0;
  for (int id : p.ids) max_h = std::max(max_h, p.height[static_cast<std::size_t>(id)]);
  double max_slope = 0.0;

  const double tol = 1e-12 * ball.radius;
  if (mesh.k == 1) {
    struct Interval {
      double lo, hi;
      int a, b;
    };
    std::vector<Interval> iv;
    for (const auto& e : mesh.edges) {
      if (!p.in_ball[static_cast<std::size_t>(e[0])] || !p.in_ball[static_cast<std::size_t>(e[1])]) continue;
      const double ta = p.params[static_cast<std::size_t>(e[0])](0);
      const double tb = p.params[static_cast<std::size_t>(e[1])](0);
      const double span = (mesh.vertices[static_cast<std::size_t>(e[1])] -
                           mesh.vertices[static_cast<std::size_t>(e[0])]).norm();
      if (std::abs(tb - ta) < 1e-9 * span) {
        res.is_graph = false;
        if (!res.witness) res.witness = {e[0], e[1]};
        continue;
      }
      const double slope = (p.offset[static_cast<std::size_t>(e[1])] -
                            p.offset[static_cast<std::size_t>(e[0])]).norm() /
                           std::abs(tb - ta);
      max_slope = std::max(max_slope, slope);
      iv.push_back({std::min(ta, tb), std::max(ta, tb), e[0], e[1]});
    }
    std::sort(iv.begin(), iv.end(), [](const Interval& a, const Interval& b) { return a.lo < b.lo; });
    for (std::size_t i = 0; i < iv.size(); ++i) {
      for (std::size_t j = i + 1; j < iv.size() && iv[j].lo < iv[i].hi - tol; ++j) {
        const bool adjacent = iv[i].a == iv[j].a || iv[i].a == iv[j].b || iv[i].b == iv[j].a ||
                              iv[i].b == iv[j].b;
        if (!adjacent) {
          res.is_graph = false;
          if (!res.witness) res.witness = {iv[i].a, iv[j].a};
        }
      }
    }
  } else {
    struct Tri {
      std::array<Vec, 3> uv;
      std::array<int, 3> ids;
      double lo0, hi0, lo1, hi1;
    };
    std::vector<Tri> tris;
    for (const auto& t : mesh.triangles) {
      if (!p.in_ball[static_cast<std::size_t>(t[0])] || !p.in_ball[static_cast<std::size_t>(t[1])] ||
          !p.in_ball[static_cast<std::size_t>(t[2])])
        continue;
      Tri tr;
      tr.ids = t;
      for (int c = 0; c < 3; ++c) tr.uv[static_cast<std::size_t>(c)] = p.params[static_cast<std::size_t>(t[static_cast<std::size_t>(c)])];
      const Vec d1 = tr.uv[1] - tr.uv[0], d2 = tr.uv[2] - tr.uv[0];
      const double area2d = 0.5 * std::abs(d1(0) * d2(1) - d1(1) * d2(0));
      const double area3d = tri_area(mesh.vertices[static_cast<std::size_t>(t[0])],
                                     mesh.vertices[static_cast<std::size_t>(t[1])],
                                     mesh.vertices[static_cast<std::size_t>(t[2])]);
      if (area2d < 1e-9 * std::max(area3d, kDegenerate)) {
        res.is_graph = false;
        if (!res.witness) res.witness = {t[0], t[1]};
        continue;
      }
      // Gradient of the affine interpolant of the offsets over the projected
      // triangle.
      Mat mt(2, 2);
      mt.col(0) = d1;
      mt.col(1) = d2;
      Mat g(plane.n(), 2);
      g.col(0) = p.offset[static_cast<std::size_t>(t[1])] - p.offset[static_cast<std::size_t>(t[0])];
      g.col(1) = p.offset[static_cast<std::size_t>(t[2])] - p.offset[static_cast<std::size_t>(t[0])];
      const Mat grad = g * mt.inverse();
      max_slope = std::max(max_slope, operator_norm(grad));
      tr.lo0 = std::min({tr.uv[0](0), tr.uv[1](0), tr.uv[2](0)});
      tr.hi0 = std::max({tr.uv[0](0), tr.uv[1](0), tr.uv[2](0)});
      tr.lo1 = std::min({tr.uv[0](1), tr.uv[1](1), tr.uv[2](1)});
      tr.hi1 = std::max({tr.uv[0](1), tr.uv[1](1), tr.uv[2](1)});
      tris.push_back(std::move(tr));
    }
    for (std::size_t i = 0; i < tris.size(); ++i) {
      for (std::size_t j = i + 1; j < tris.size(); ++j) {
        if (tris[j].lo0 > tris[i].hi0 - tol || tris[i].lo0 > tris[j].hi0 - tol ||
            tris[j].lo1 > tris[i].hi1 - tol || tris[i].lo1 > tris[j].hi1 - tol)
          continue;
        bool adjacent = false;
        for (int u : tris[i].ids)
          for (int v : tris[j].ids)
            if (u == v) adjacent = true;
        if (adjacent) continue;
        if (triangles_overlap_2d(tris[i].uv, tris[j].uv, tol)) {
          res.is_graph = false;
          if (!res.witness) res.witness = {tris[i].ids[0], tris[j].ids[0]};
        }
      }
    }
  }
  res.c1_norm = max_h / ball.radius + max_slope;
  return res;
}

namespace {

std::vector<std::array<int, 2>> mesh_edge_list(const MeshSurface& mesh) {
  if (mesh.k == 1) return mesh.edges;
  std::set<std::pair<int, int>> seen;
  std::vector<std::array<int, 2>> out;
  for (const auto& t : mesh.triangles) {
    for (int e = 0; e < 3; ++e) {
      const auto key = std::minmax(t[static_cast<std::size_t>(e)], t[static_cast<std::size_t>((e + 1) % 3)]);
      if (seen.insert(key).second) out.push_back({key.first, key.second});
    }
  }
  return out;
}

}  // namespace

BiLipschitzResult bilipschitz_measure(const SigmaMap& map, const MeshSurface& mesh,
                                      const Ball& region) {
  BiLipschitzResult res;
  const std::vector<std::array<int, 2>> edges = mesh_edge_list(mesh);
  bool any = false;
  for (const auto& e : edges) {
    const Vec& a = mesh.vertices[static_cast<std::size_t>(e[0])];
    const Vec& b = mesh.vertices[static_cast<std::size_t>(e[1])];
    if ((a - region.center).norm() > region.radius || (b - region.center).norm() > region.radius)
      continue;
    const double old_len = (b - a).norm();
    if (old_len == 0.0) {
      ++res.zero_edges_skipped;
      continue;
    }
    any = true;
    ++res.edges_measured;
    const double new_len = (map.apply(b) - map.apply(a)).norm();
    const double ratio = new_len / old_len;
    res.max_stretch = std::max(res.max_stretch, ratio);
    res.min_shrink = std::min(res.min_shrink, ratio);
  }
  if (!any) throw std::invalid_argument("bilipschitz_measure: no mesh edges inside the region");
  res.constant = std::max(res.max_stretch,
                          res.min_shrink > 0.0 ? 1.0 / res.min_shrink
                                               : std::numeric_limits<double>::infinity());
  return res;
}

double surface_measure_in_ball(const MeshSurface& mesh, const Ball& ball) {
  KahanSum s;
  if (mesh.k == 1) {
    for (const auto& e : mesh.edges) {
      const Vec& a = mesh.vertices[static_cast<std::size_t>(e[0])];
      const Vec& b = mesh.vertices[static_cast<std::size_t>(e[1])];
      const Vec d = b - a;
      const double aa = d.squaredNorm();
      if (aa == 0.0) continue;
      const Vec rel = a - ball.center;
      const double bb = 2.0 * d.dot(rel);
      const double cc = rel.squaredNorm() - ball.radius * ball.radius;
      const double disc = bb * bb - 4.0 * aa * cc;
      if (disc <= 0.0) continue;
      const double sq = std::sqrt(disc);
      const double t0 = std::max(0.0, (-bb - sq) / (2.0 * aa));
      const double t1 = std::min(1.0, (-bb + sq) / (2.0 * aa));
      if (t1 > t0) s.add(std::sqrt(aa) * (t1 - t0));
    }
  } else {
    // Centroid rule over a 4x4 subdivision of each triangle.
    for (const auto& t : mesh.triangles) {
      const Vec& a = mesh.vertices[static_cast<std::size_t>(t[0])];
      const Vec& b = mesh.vertices[static_cast<std::size_t>(t[1])];
      const Vec& c = mesh.vertices[static_cast<std::size_t>(t[2])];
      constexpr int kSub = 4;
      const double sub_area = tri_area(a, b, c) / (kSub * kSub);
      for (int i = 0; i < kSub; ++i) {
        for (int j = 0; j + i < kSub; ++j) {
          // Up-triangles and their interleaved down-triangles in barycentric
          // coordinates.
          const int copies = (j + i == kSub - 1) ? 1 : 2;
          for (int d = 0; d < copies; ++d) {
            const double u = (i + (d == 0 ? 1.0 : 2.0) / 3.0) / kSub;
            const double v = (j + (d == 0 ? 1.0 : 2.0) / 3.0) / kSub;
            const Vec centroid = a + u * (b - a) + v * (c - a);
            if ((centroid - ball.center).norm() <= ball.radius) s.add(sub_area);
          }
        }
      }
    }
  }
  return s.value();
}

void save_mesh_off(const MeshSurface& mesh, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  const std::size_t faces = mesh.k == 1 ? mesh.edges.size() : mesh.triangles.size();
  out << "OFF\n" << mesh.vertices.size() << " " << faces << " 0\n";
  for (const Vec& v : mesh.vertices) {
    for (int c = 0; c < v.size(); ++c) out << (c ? " " : "") << format_double(v(c));
    out << "\n";
  }
  if (mesh.k == 1) {
    for (const auto& e : mesh.edges) out << "2 " << e[0] << " " << e[1] << "\n";
  } else {
    for (const auto& t : mesh.triangles) out << "3 " << t[0] << " " << t[1] << " " << t[2] << "\n";
  }
}

MeshSurface load_mesh_off(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open for reading: " + path);
  std::string magic;
  in >> magic;
  if (magic != "OFF") throw std::runtime_error("load_mesh_off: not an OFF file: " + path);
  std::size_t nv = 0, nf = 0, ne = 0;
  in >> nv >> nf >> ne;
  std::string rest;
  std::getline(in, rest);
  MeshSurface mesh;
  for (std::size_t i = 0; i < nv; ++i) {
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("load_mesh_off: truncated vertices");
    std::istringstream ls(line);
    std::vector<double> vals;
    double v;
    while (ls >> v) vals.push_back(v);
    if (i == 0) mesh.n = static_cast<int>(vals.size());
    if (static_cast<int>(vals.size()) != mesh.n)
      throw std::runtime_error("load_mesh_off: inconsistent vertex dimension");
    Vec p(mesh.n);
    for (int c = 0; c < mesh.n; ++c) p(c) = vals[static_cast<std::size_t>(c)];
    mesh.vertices.push_back(std::move(p));
  }
  for (std::size_t i = 0; i < nf; ++i) {
    int arity = 0;
    in >> arity;
    if (arity == 2) {
      int a, b;
      in >> a >> b;
      mesh.edges.push_back({a, b});
    } else if (arity == 3) {
      int a, b, c;
      in >> a >> b >> c;
      mesh.triangles.push_back({a, b, c});
    } else {
      throw std::runtime_error("load_mesh_off: unsupported face arity");
    }
  }
  mesh.k = mesh.triangles.empty() ? 1 : 2;
  return mesh;
}

namespace {

double pow_int(double x, int k) {
  double p = 1.0;
  for (int i = 0; i < k; ++i) p *= x;
  return p;
}

}  // namespace

KeyEstimates key_estimates_report(const CoveringHierarchy& h,
                                  const std::vector<MeshSurface>& surfaces,
                                  const DiscreteMeasure& mu, const ScaleLadder& ladder,
                                  bool with_beta_series) {
  if (h.depth != ladder.depth || std::abs(h.rho - ladder.rho) > 1e-15)
    throw std::invalid_argument("key_estimates_report: hierarchy and ladder disagree");
  if (surfaces.size() != static_cast<std::size_t>(h.depth) + 1)
    throw std::invalid_argument("key_estimates_report: need one surface per scale");
  if (!surfaces.empty() && surfaces[0].n != mu.n())
    throw std::invalid_argument("key_estimates_report: surface dimension mismatch");

  KeyEstimates rep;
  rep.comparison_c1 = 20.0 * pow_int(3.0, mu.k());

  for (const MeshSurface& s : surfaces) rep.areas.push_back(surface_area(s));

  // Per-step bi-Lipschitz maxima of sigma_i on T_{i-1}.
  const Ball everything{Vec::Zero(mu.n()), 1e6};
  for (int i = 1; i <= h.depth; ++i) {
    const ScaleLevel& lv = h.levels[static_cast<std::size_t>(i)];
    const SigmaMap sm(i, h.radii[static_cast<std::size_t>(i)], lv.good, lv.sigma_planes);
    if (lv.good.empty()) {
      rep.max_lip.push_back(1.0);
      continue;
    }
    const BiLipschitzResult bl = bilipschitz_measure(sm, surfaces[static_cast<std::size_t>(i) - 1], everything);
    rep.max_lip.push_back(bl.constant);
  }

  {
    KahanSum cum;
    for (const ScaleLevel& lv : h.levels) {
      for (std::uint32_t e : lv.excess_new) cum.add(mu.weight(e));
      rep.excess_mass_cum.push_back(cum.value());
    }
  }

  if (with_beta_series) {
    std::vector<double> integral(static_cast<std::size_t>(h.depth) + 1, 0.0);
    for (int l = 0; l <= h.depth; ++l) {
      const double rad = 6.0 * h.radii[static_cast<std::size_t>(l)];
      std::vector<double> vals(mu.size(), 0.0);
      parallel_for(mu.size(), [&](std::size_t i) {
        const BetaResult b = beta_q(mu, mu.position(i), rad, h.q);
        vals[i] = mu.weight(i) * b.value * b.value;
      });
      KahanSum s;
      for (double v : vals) s.add(v);
      integral[static_cast<std::size_t>(l)] = s.value();
    }
    double acc = 0.0;
    for (int i = 0; i <= h.depth; ++i) {
      rep.beta_series.push_back(acc);  // sum over l < i
      acc += integral[static_cast<std::size_t>(i)];
    }
  }

  const MeshSurface& final_surface = surfaces.back();
  double worst_ratio = 0.0;
  double min_density = std::numeric_limits<double>::infinity();
  for (int s = 1; s <= h.depth; ++s) {
    const ScaleLevel& lv = h.levels[static_cast<std::size_t>(s)];
    const double r = h.radii[static_cast<std::size_t>(s)];
    auto check = [&](const Ball& b) {
      const double mass = mass_in_ball(mu, b.center, b.radius);
      const double surf = surface_measure_in_ball(final_surface, Ball{b.center, r / 2.0});
      ++rep.balls_checked;
      const double density = surf / pow_int(r, mu.k());
      min_density = std::min(min_density, density);
      if (surf > 0.0)
        worst_ratio = std::max(worst_ratio, mass / surf);
      else if (mass > 0.0)
        worst_ratio = std::numeric_limits<double>::infinity();
      if (mass > rep.comparison_c1 * h.tau * h.M * surf * (1.0 + 1e-9)) rep.comparison_pass = false;
      if (density < (1.0 / 20.0) * pow_int(1.0 / 3.0, mu.k()) * (1.0 - 1e-9)) rep.density_pass = false;
    };
    for (const Ball& b : lv.bad) check(b);
    for (const Ball& b : lv.fin) check(b);
  }
  rep.max_mu_over_surf = worst_ratio;
  rep.min_surf_density = rep.balls_checked ? min_density : 0.0;
  return rep;
}

CoverRunResult cover_run(const DiscreteMeasure& mu, const ScaleLadder& ladder,
                         const CoverOptions& opt) {
  if (opt.mode != "sup" && opt.mode != "avg")
    throw std::invalid_argument("cover_run: mode must be sup or avg");
  const double exponent = opt.mode == "avg" ? opt.q / 2.0 : opt.q / (opt.q + 2.0);

  CoverRunResult out;
  double m_value;
  if (opt.m_override > 0.0) {
    m_value = opt.m_override;
    out.j_used = 0.0;
  } else {
    const FlatnessReport rep = flatness_sup(mu, opt.q, ladder.rho);
    out.j_used = opt.mode == "avg" ? rep.J_avg : rep.J_sup;
    m_value = 10.0 * std::max(1.0, std::pow(out.j_used, exponent));
  }

  const double edge = opt.mesh_edge > 0.0 ? opt.mesh_edge
                                          : ladder.radius(ladder.depth) / 2.0;
  const double lip_cap = std::pow(2.0, 1.0 / mu.k()) * (1.0 + 1e-9);

  for (int attempt = 0;; ++attempt) {
    try {
      CoveringHierarchy h = build_covering(mu, ladder, m_value, opt.q);
      std::vector<MeshSurface> surfaces;
      if (opt.with_surfaces) {
        std::optional<AffinePlane> plane0;
        if (!h.levels[0].sigma_planes.empty())
          plane0 = h.levels[0].sigma_planes[0];
        else
          plane0 = best_plane(mu, Vec::Zero(mu.n()), ladder.kappa, 2.0).plane;
        if (!plane0) throw std::invalid_argument("cover_run: no initial plane (empty measure?)");
        MeshSurface t0 = mu.k() == 1
                             ? mesh_plane_segment(*plane0, Vec::Zero(mu.n()), 1.5, edge)
                             : mesh_plane_disk(*plane0, Vec::Zero(mu.n()), 1.5, edge);
        if (t0.vertices.empty())
          throw CoveringViolation("surface.t0", "initial plane misses B_1.5");
        surfaces.push_back(std::move(t0));
        for (int i = 1; i <= h.depth; ++i) {
          const ScaleLevel& lv = h.levels[static_cast<std::size_t>(i)];
          const double r_i = h.radii[static_cast<std::size_t>(i)];
          const SigmaMap sm(i, r_i, lv.good, lv.sigma_planes);
          const MeshSurface& prev = surfaces.back();
          MeshSurface next = pushforward_surface(prev, sm);

          if (next.vertices.size() == prev.vertices.size()) {
            double max_disp = 0.0;
            for (std::size_t v = 0; v < prev.vertices.size(); ++v)
              max_disp = std::max(max_disp, (next.vertices[v] - prev.vertices[v]).norm());
            if (max_disp > r_i / 10.0 * (1.0 + 1e-9))
              throw CoveringViolation("prop1a.displacement",
                                      "sigma_" + std::to_string(i) + " moved a surface point by " +
                                          std::to_string(max_disp));
          }

          double max_lip = 1.0, min_lip = 1.0;
          if (next.vertices.size() == prev.vertices.size()) {
            const auto edges = mesh_edge_list(prev);
            for (const auto& e : edges) {
              const double old_len = (prev.vertices[static_cast<std::size_t>(e[1])] -
                                      prev.vertices[static_cast<std::size_t>(e[0])]).norm();
              if (old_len == 0.0) continue;
              const double new_len = (next.vertices[static_cast<std::size_t>(e[1])] -
                                      next.vertices[static_cast<std::size_t>(e[0])]).norm();
              const double ratio = new_len / old_len;
              max_lip = std::max(max_lip, ratio);
              min_lip = std::min(min_lip, ratio);
            }
            const double lip = std::max(max_lip, min_lip > 0.0 ? 1.0 / min_lip : 1e300);
            if (!lv.good.empty() && lip > lip_cap)
              throw CoveringViolation("prop1c.lip_cap", "bi-Lipschitz constant " +
                                                            std::to_string(lip) + " at scale " +
                                                            std::to_string(i));
            const double area_prev = surface_area(prev);
            const double area_next = surface_area(next);
            if (area_next > area_prev * pow_int(max_lip, mu.k()) * (1.0 + 1e-12))
              throw CoveringViolation("telescope.area", "area grew beyond the Lipschitz budget");
          }
          surfaces.push_back(std::move(next));
        }
      }
      out.hierarchy = std::move(h);
      out.surfaces = std::move(surfaces);
      out.m_final = m_value;
      out.doublings = attempt;
      if (opt.with_surfaces)
        out.report = key_estimates_report(out.hierarchy, out.surfaces, mu, ladder,
                                          opt.with_beta_series);
      return out;
    } catch (const CoveringViolation&) {
      if (attempt >= opt.max_doublings) throw;
      m_value *= 2.0;
    }
  }
}

Verdict verify_bound(const DiscreteMeasure& mu, double q, const ScaleLadder& ladder,
                     const std::string& mode) {
  if (mode != "sup" && mode != "avg") throw std::invalid_argument("verify_bound: mode sup|avg");
  const std::vector<int> scales = detail::covering_atom_scales(mu, ladder);

  Verdict v;
  v.mode = mode;
  v.exponent = mode == "avg" ? q / 2.0 : q / (q + 2.0);
  const FlatnessReport rep = mode == "avg" ? flatness_avg(mu, q, ladder.rho)
                                           : flatness_sup(mu, q, ladder.rho);
  v.j_value = mode == "avg" ? rep.J_avg : rep.J_sup;
  v.mu_b1 = mass_in_ball(mu, Vec::Zero(mu.n()), 1.0);
  v.ratio = v.mu_b1 / std::max(1.0, std::pow(v.j_value, v.exponent));

  // Empirical spot check of the inductive mass bound: random balls B_{r_j}(x)
  // whose closure avoids every source center of scale <= j.
  Rng rng(0x5EEDC0DEull);
  const int a = std::max(1, ladder.depth);
  v.claim1_witness = Ball{Vec::Zero(mu.n()), 1.0};
  int attempts = 4000;
  while (attempts-- > 0 && v.claim1_samples < 500) {
    Vec x(mu.n());
    do {
      for (int c = 0; c < mu.n(); ++c) x(c) = rng.uniform(-1.0, 1.0);
    } while (x.norm() > 1.0);
    const int j = rng.uniform_int(1, a);
    const double rj = ladder.radius(std::min(j, ladder.depth));
    const std::vector<std::uint32_t> in = mu.atoms_in_ball(x, rj);
    bool admissible = true;
    KahanSum mass;
    for (std::uint32_t t : in) {
      if (scales[t] <= j) {
        admissible = false;
        break;
      }
      mass.add(mu.weight(t));
    }
    if (!admissible) continue;
    ++v.claim1_samples;
    const double val = mass.value() / pow_int(rj, mu.k());
    if (val > v.claim1_max) {
      v.claim1_max = val;
      v.claim1_witness = Ball{x, rj};
    }
  }
  v.claim1_cap = 10.0 * std::max(v.ratio, 1.0);
  v.claim1_pass = v.claim1_max <= v.claim1_cap;
  return v;
}

std::string verdict_json(const Verdict& v) {
  nlohmann::json j;
  j["mode"] = v.mode;
  j["mu_B1"] = v.mu_b1;
  j["J"] = v.j_value;
  j["exponent"] = v.exponent;
  j["ratio"] = v.ratio;
  j["claim1"]["max"] = v.claim1_max;
  j["claim1"]["cap"] = v.claim1_cap;
  j["claim1"]["pass"] = v.claim1_pass;
  j["claim1"]["samples"] = v.claim1_samples;
  j["claim1"]["witness"]["center"] = std::vector<double>(
      v.claim1_witness.center.data(), v.claim1_witness.center.data() + v.claim1_witness.center.size());
  j["claim1"]["witness"]["radius"] = v.claim1_witness.radius;
  return j.dump(2);
}

}  // namespace rfb
