#pragma once

// Brute-force reference computations used only by the test suites. Nothing
// here calls into the incremental triangulation or the cell walk.

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <set>
#include <span>
#include <utility>
#include <vector>

#include "semfoam/geometry.hpp"
#include "semfoam/vec3.hpp"

namespace oracle {

using semfoam::BoundingBox;
using semfoam::Vec3;

inline std::vector<Vec3> random_sites(std::mt19937_64& rng, int n, const BoundingBox& box,
                                      double margin = 1e-3) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<Vec3> pts;
  pts.reserve(static_cast<size_t>(n));
  const Vec3 lo = box.min_corner, ext = box.extent();
  for (int i = 0; i < n; ++i) {
    Vec3 p;
    for (int k = 0; k < 3; ++k) p[k] = lo[k] + ext[k] * (margin + (1.0 - 2.0 * margin) * u(rng));
    pts.push_back(p);
  }
  return pts;
}

/// Nearest site by linear scan, lowest index on ties.
inline int nearest(std::span<const Vec3> sites, const Vec3& x) {
  int best = 0;
  double bd = std::numeric_limits<double>::infinity();
  for (size_t i = 0; i < sites.size(); ++i) {
    const double d = semfoam::norm2(x - sites[i]);
    if (d < bd) {
      bd = d;
      best = static_cast<int>(i);
    }
  }
  return best;
}

inline std::pair<int, int> two_nearest(std::span<const Vec3> sites, const Vec3& x) {
  int a = -1, b = -1;
  double da = std::numeric_limits<double>::infinity(), db = da;
  for (size_t i = 0; i < sites.size(); ++i) {
    const double d = semfoam::norm2(x - sites[i]);
    if (d < da) {
      b = a, db = da;
      a = static_cast<int>(i), da = d;
    } else if (d < db) {
      b = static_cast<int>(i), db = d;
    }
  }
  return {std::min(a, b), std::max(a, b)};
}

/// Exhaustive empty-circumsphere check. Returns the number of violations,
/// a violation being a site strictly inside by more than rel * radius^2.
inline int empty_sphere_violations(std::span<const Vec3> sites,
                                   std::span<const std::array<int, 4>> tets, double rel = 1e-9) {
  int bad = 0;
  for (const auto& t : tets) {
    const Vec3 a = sites[static_cast<size_t>(t[0])], b = sites[static_cast<size_t>(t[1])],
               c = sites[static_cast<size_t>(t[2])], d = sites[static_cast<size_t>(t[3])];
    // Circumcenter by solving the three bisector equations with Cramer's rule.
    const Vec3 r1 = b - a, r2 = c - a, r3 = d - a;
    const double s1 = 0.5 * semfoam::norm2(r1), s2 = 0.5 * semfoam::norm2(r2),
                 s3 = 0.5 * semfoam::norm2(r3);
    const double det = semfoam::dot(r1, semfoam::cross(r2, r3));
    const Vec3 off = (s1 * semfoam::cross(r2, r3) + s2 * semfoam::cross(r3, r1) +
                      s3 * semfoam::cross(r1, r2)) /
                     det;
    const Vec3 center = a + off;
    const double r2sq = semfoam::norm2(off);
    for (size_t s = 0; s < sites.size(); ++s) {
      if (static_cast<int>(s) == t[0] || static_cast<int>(s) == t[1] ||
          static_cast<int>(s) == t[2] || static_cast<int>(s) == t[3])
        continue;
      if (semfoam::norm2(sites[s] - center) < r2sq * (1.0 - rel)) ++bad;
    }
  }
  return bad;
}

/// Voronoi face of (i, j) clipped to the box, computed against every other
/// site rather than only Delaunay neighbors.
inline std::vector<Vec3> brute_face(std::span<const Vec3> sites, const BoundingBox& box, int i, int j) {
  const Vec3 pi = sites[static_cast<size_t>(i)], pj = sites[static_cast<size_t>(j)];
  std::vector<Vec3> poly = semfoam::box_section(box, pj - pi, 0.5 * (semfoam::norm2(pj) - semfoam::norm2(pi)));
  std::vector<Vec3> scratch;
  for (size_t k = 0; k < sites.size() && !poly.empty(); ++k) {
    if (static_cast<int>(k) == i || static_cast<int>(k) == j) continue;
    const Vec3 pk = sites[k];
    semfoam::clip_polygon(poly, pk - pi, 0.5 * (semfoam::norm2(pk) - semfoam::norm2(pi)), scratch);
  }
  return poly;
}

/// All pairs whose brute-force clipped face has positive area. Sites are
/// clipped nearest-first so far-apart pairs empty out after a few planes.
inline std::set<std::pair<int, int>> brute_adjacency(std::span<const Vec3> sites, const BoundingBox& box) {
  std::set<std::pair<int, int>> adj;
  const double eps = semfoam::tolerance::kFaceAreaRel * box.diagonal() * box.diagonal();
  const int n = static_cast<int>(sites.size());
  std::vector<int> order(static_cast<size_t>(n));
  std::vector<Vec3> poly, scratch;
  for (int i = 0; i < n; ++i) {
    const Vec3 pi = sites[static_cast<size_t>(i)];
    for (int k = 0; k < n; ++k) order[static_cast<size_t>(k)] = k;
    std::sort(order.begin(), order.end(), [&](int a, int b) {
      return semfoam::norm2(sites[static_cast<size_t>(a)] - pi) < semfoam::norm2(sites[static_cast<size_t>(b)] - pi);
    });
    for (int j = i + 1; j < n; ++j) {
      const Vec3 pj = sites[static_cast<size_t>(j)];
      poly = semfoam::box_section(box, pj - pi, 0.5 * (semfoam::norm2(pj) - semfoam::norm2(pi)));
      for (int k : order) {
        if (poly.empty()) break;
        if (k == i || k == j) continue;
        const Vec3 pk = sites[static_cast<size_t>(k)];
        semfoam::clip_polygon(poly, pk - pi, 0.5 * (semfoam::norm2(pk) - semfoam::norm2(pi)), scratch);
      }
      if (semfoam::polygon_area(poly) > eps) adj.insert({i, j});
    }
  }
  return adj;
}

/// Pairs that are the two nearest sites of some point of a res^3 grid of
/// cell centers inside the box.
inline std::set<std::pair<int, int>> grid_adjacency(std::span<const Vec3> sites, const BoundingBox& box,
                                                    int res = 64) {
  std::set<std::pair<int, int>> adj;
  const Vec3 lo = box.min_corner, ext = box.extent();
  for (int a = 0; a < res; ++a)
    for (int b = 0; b < res; ++b)
      for (int c = 0; c < res; ++c) {
        const Vec3 x{lo.x + ext.x * (a + 0.5) / res, lo.y + ext.y * (b + 0.5) / res,
                     lo.z + ext.z * (c + 0.5) / res};
        adj.insert(two_nearest(sites, x));
      }
  return adj;
}

inline std::set<std::pair<int, int>> adjacency_of(const semfoam::Triangulation& tri) {
  std::set<std::pair<int, int>> adj;
  for (const auto& f : tri.faces()) adj.insert({f.i, f.j});
  return adj;
}

/// Monte-Carlo area of the (i, j) face. Samples are drawn uniformly over a
/// rectangle on the bisector plane (the in-plane bounds of `hint_polygon`
/// grown by 25% per side) and accepted when inside the box with i, j as the
/// two nearest sites. Accepted samples touching the rectangle border would
/// mean the rectangle was too small; they are counted in `border_hits`.
inline double monte_carlo_face_area(std::span<const Vec3> sites, const BoundingBox& box, int i, int j,
                                    std::span<const Vec3> hint_polygon, int samples,
                                    std::mt19937_64& rng, int* border_hits = nullptr) {
  const Vec3 pi = sites[static_cast<size_t>(i)], pj = sites[static_cast<size_t>(j)];
  const Vec3 n = semfoam::normalized(pj - pi);
  const Vec3 mid = 0.5 * (pi + pj);
  const Vec3 helper = std::abs(n.x) < 0.6 ? Vec3{1, 0, 0} : Vec3{0, 1, 0};
  const Vec3 u = semfoam::normalized(semfoam::cross(n, helper));
  const Vec3 v = semfoam::cross(n, u);
  double u0 = 1e300, u1 = -1e300, v0 = 1e300, v1 = -1e300;
  for (const Vec3& x : hint_polygon) {
    const double a = semfoam::dot(x - mid, u), b = semfoam::dot(x - mid, v);
    u0 = std::min(u0, a), u1 = std::max(u1, a), v0 = std::min(v0, b), v1 = std::max(v1, b);
  }
  const double gu = 0.25 * (u1 - u0), gv = 0.25 * (v1 - v0);
  u0 -= gu, u1 += gu, v0 -= gv, v1 += gv;
  std::uniform_real_distribution<double> U(u0, u1), V(v0, v1);
  long hits = 0;
  int border = 0;
  for (int s = 0; s < samples; ++s) {
    const double a = U(rng), b = V(rng);
    const Vec3 x = mid + a * u + b * v;
    if (!box.contains_strictly(x)) continue;
    const double d = semfoam::norm2(x - pi);
    bool ok = true;
    for (size_t k = 0; k < sites.size(); ++k) {
      if (static_cast<int>(k) == i || static_cast<int>(k) == j) continue;
      if (semfoam::norm2(x - sites[k]) < d) {
        ok = false;
        break;
      }
    }
    if (!ok) continue;
    ++hits;
    if (a < u0 + 0.05 * gu || a > u1 - 0.05 * gu || b < v0 + 0.05 * gv || b > v1 - 0.05 * gv) ++border;
  }
  if (border_hits) *border_hits = border;
  return (u1 - u0) * (v1 - v0) * static_cast<double>(hits) / samples;
}


/// Exact nearest-site queries accelerated by a uniform grid. Each grid cell
/// keeps every site whose closest possible distance to the cell does not
/// exceed the smallest farthest-distance of any site, so a scan over the
/// candidate list gives the same answer as a full linear scan.
class NearestGrid {
 public:
  NearestGrid(std::span<const Vec3> sites, const BoundingBox& box, int res = 24)
      : sites_(sites.begin(), sites.end()), box_(box), res_(res) {
    const Vec3 ext = box.extent();
    cells_.resize(static_cast<size_t>(res * res * res));
    for (int a = 0; a < res; ++a)
      for (int b = 0; b < res; ++b)
        for (int c = 0; c < res; ++c) {
          const Vec3 lo{box.min_corner.x + ext.x * a / res, box.min_corner.y + ext.y * b / res,
                        box.min_corner.z + ext.z * c / res};
          const Vec3 hi{box.min_corner.x + ext.x * (a + 1) / res, box.min_corner.y + ext.y * (b + 1) / res,
                        box.min_corner.z + ext.z * (c + 1) / res};
          double bound = std::numeric_limits<double>::infinity();
          std::vector<double> lo_d(sites_.size());
          for (size_t s = 0; s < sites_.size(); ++s) {
            double dmin = 0.0, dmax = 0.0;
            for (int k = 0; k < 3; ++k) {
              const double p = sites_[s][k];
              const double g = p < lo[k] ? lo[k] - p : (p > hi[k] ? p - hi[k] : 0.0);
              const double f = std::max(std::abs(p - lo[k]), std::abs(p - hi[k]));
              dmin += g * g;
              dmax += f * f;
            }
            lo_d[s] = dmin;
            bound = std::min(bound, dmax);
          }
          auto& list = cells_[static_cast<size_t>((a * res + b) * res + c)];
          for (size_t s = 0; s < sites_.size(); ++s)
            if (lo_d[s] <= bound * (1.0 + 1e-12)) list.push_back(static_cast<int>(s));
        }
  }

  /// Nearest site, lowest index on exact ties. `x` must lie in the box.
  int operator()(const Vec3& x) const {
    const Vec3 ext = box_.extent();
    int idx[3];
    for (int k = 0; k < 3; ++k) {
      const int v = static_cast<int>((x[k] - box_.min_corner[k]) / ext[k] * res_);
      idx[k] = std::clamp(v, 0, res_ - 1);
    }
    const auto& list = cells_[static_cast<size_t>((idx[0] * res_ + idx[1]) * res_ + idx[2])];
    int best = -1;
    double bd = std::numeric_limits<double>::infinity();
    for (int s : list) {
      const double d = semfoam::norm2(x - sites_[static_cast<size_t>(s)]);
      if (d < bd || (d == bd && s < best)) {
        bd = d;
        best = s;
      }
    }
    return best;
  }

 private:
  std::vector<Vec3> sites_;
  BoundingBox box_;
  int res_;
  std::vector<std::vector<int>> cells_;
};

/// Samples the segment [t0, t1] of o + t d every h (at t0 + (m + 1/2) h) and
/// merges consecutive samples with the same nearest site.
struct MarchRun {
  int cell;
  double first;  // first sample parameter in the run
  double last;   // last sample parameter in the run
};

inline std::vector<MarchRun> dense_march(const NearestGrid& nearest, const Vec3& o, const Vec3& d, double t0,
                                         double t1, double h) {
  std::vector<MarchRun> runs;
  const long count = static_cast<long>(std::floor((t1 - t0) / h));
  for (long m = 0; m < count; ++m) {
    const double t = t0 + (static_cast<double>(m) + 0.5) * h;
    const int c = nearest(o + t * d);
    if (!runs.empty() && runs.back().cell == c)
      runs.back().last = t;
    else
      runs.push_back({c, t, t});
  }
  return runs;
}

struct MarchComparison {
  bool same_sequence = true;
  double max_boundary_error = 0.0;
};

/// Compares a traced segment list against dense-marching runs sampled with
/// step h starting at t0. Segments that contain no sample are invisible to
/// the oracle and skipped; each remaining boundary is compared with the
/// midpoint of the oracle's transition gap.
template <typename Segments>
MarchComparison compare_with_march(const Segments& segs, const std::vector<MarchRun>& runs, double t0, double h) {
  MarchComparison out;
  std::vector<size_t> visible;
  if (segs.empty()) {
    out.same_sequence = runs.empty();
    return out;
  }
  const double count = std::floor((segs.back().t_out - t0) / h);
  for (size_t k = 0; k < segs.size(); ++k) {
    const double a = std::max(0.0, std::ceil((segs[k].t_in - t0) / h - 0.5));
    const double t = t0 + (a + 0.5) * h;
    if (a < count && t <= segs[k].t_out) visible.push_back(k);
  }
  if (visible.size() != runs.size()) {
    out.same_sequence = false;
    return out;
  }
  for (size_t r = 0; r < runs.size(); ++r) {
    if (segs[visible[r]].cell != runs[r].cell) {
      out.same_sequence = false;
      return out;
    }
    if (r + 1 < runs.size()) {
      const double t_b = segs[visible[r]].t_out;
      const double mid = 0.5 * (runs[r].last + runs[r + 1].first);
      out.max_boundary_error = std::max(out.max_boundary_error, std::abs(t_b - mid));
    }
  }
  return out;
}

}  // namespace oracle
