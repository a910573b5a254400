#include "semfoam/tracer.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "semfoam/error.hpp"

namespace semfoam {

std::optional<Ray> clip_ray(const BoundingBox& box, const Vec3& origin, const Vec3& direction) {
  const double len = norm(direction);
  if (!(len > 0.0) || !std::isfinite(len)) return std::nullopt;
  const Vec3 d = direction / len;
  double t0 = 0.0, t1 = std::numeric_limits<double>::infinity();
  for (int k = 0; k < 3; ++k) {
    if (d[k] == 0.0) {
      if (origin[k] <= box.min_corner[k] || origin[k] >= box.max_corner[k]) return std::nullopt;
      continue;
    }
    double a = (box.min_corner[k] - origin[k]) / d[k];
    double b = (box.max_corner[k] - origin[k]) / d[k];
    if (a > b) std::swap(a, b);
    t0 = std::max(t0, a);
    t1 = std::min(t1, b);
  }
  if (!(t1 > t0)) return std::nullopt;
  return Ray{origin, d, t0, t1};
}

int max_stuck_steps(int num_sites) {
  return static_cast<int>(16.0 * std::cbrt(static_cast<double>(std::max(num_sites, 1)))) + 64;
}

int trace(const Ray& ray, const Triangulation& tri, SegmentList& out, int hint) {
  out.clear();
  const double diag = tri.box().diagonal();
  const double eps_step = tolerance::kStepRel * diag;
  const int stuck_limit = max_stuck_steps(tri.num_sites());
  const Vec3 o = ray.origin, d = ray.direction;

  const int start = locate(tri, o + ray.t_min * d, hint < 0 ? 0 : hint);
  int cell = start;
  double t_in = ray.t_min;
  int stuck = 0;
  for (;;) {
    const auto nb = tri.neighbors(cell);
    const auto normals = tri.neighbor_normals(cell);
    const auto offsets = tri.neighbor_offsets(cell);
    // Exit through the nearest bisector plane the ray is moving toward.
    double best = std::numeric_limits<double>::infinity(), second = best;
    int best_k = -1;
    for (size_t k = 0; k < nb.size(); ++k) {
      const double dn = dot(d, normals[k]);
      if (dn <= 0.0) continue;
      const double t = (offsets[k] - dot(o, normals[k])) / dn;
      if (t < best) {
        second = best;
        best = t;
        best_k = static_cast<int>(k);
      } else if (t < second) {
        second = t;
      }
    }
    if (best_k < 0 || best >= ray.t_max) {
      out.push_back({cell, t_in, ray.t_max, false});
      break;
    }
    const double t_out = std::max(best, t_in);
    bool generic = second - best >= eps_step;
    if (generic) {
      // The crossing point must also stay clear of every other face plane,
      // including those the ray is leaving, which the candidate gap misses.
      const Vec3 x = o + t_out * d;
      for (size_t k = 0; k < nb.size(); ++k) {
        if (static_cast<int>(k) == best_k) continue;
        const double dist = (offsets[k] - dot(x, normals[k])) / norm(normals[k]);
        if (dist < eps_step) {
          generic = false;
          break;
        }
      }
    }
    out.push_back({cell, t_in, t_out, generic});
    if (t_out - t_in < eps_step) {
      if (++stuck > stuck_limit)
        throw FoamError(ErrorCode::StuckRay,
                        "no progress after " + std::to_string(stuck) + " steps at t=" + std::to_string(t_in));
    } else {
      stuck = 0;
    }
    cell = nb[static_cast<size_t>(best_k)];
    t_in = t_out;
  }
  return start;
}

SegmentList trace(const Ray& ray, const Triangulation& tri) {
  SegmentList out;
  trace(ray, tri, out);
  return out;
}

CrossingJacobian crossing_jacobian(const Ray& ray, double t, int i, int j, const Vec3& pi,
                                   const Vec3& pj) {
  const double denom = dot(ray.direction, pj - pi);
  if (std::abs(denom) <= 1e-15 * norm(pj - pi))
    throw FoamError(ErrorCode::NonGenericCrossing, "ray parallel to the bisector plane");
  const Vec3 x = ray.origin + t * ray.direction;
  return {i, j, (x - pi) / denom, (pj - x) / denom};
}

CrossingJacobian trace_boundary_jacobian(const Ray& ray, const SegmentList& segments, int entry,
                                         const Triangulation& tri) {
  if (entry < 0 || entry + 1 >= static_cast<int>(segments.size()))
    throw FoamError(ErrorCode::NonGenericCrossing, "segment " + std::to_string(entry) + " has no exit boundary");
  const Segment& s = segments[static_cast<size_t>(entry)];
  if (!s.generic_exit)
    throw FoamError(ErrorCode::NonGenericCrossing, "boundary passes near a face edge");
  const int j = segments[static_cast<size_t>(entry) + 1].cell;
  return crossing_jacobian(ray, s.t_out, s.cell, j, tri.site(s.cell), tri.site(j));
}

}  // namespace semfoam
