#pragma once

#include <optional>
#include <vector>

#include "semfoam/geometry.hpp"
#include "semfoam/vec3.hpp"

namespace semfoam {

/// A ray already clipped to the bounding box: points o + t d for t in
/// [t_min, t_max], with |d| = 1.
struct Ray {
  Vec3 origin;
  Vec3 direction{0, 0, 1};
  double t_min = 0.0;
  double t_max = 0.0;
};

/// Clips the half-line o + t d (t >= 0) against the box. Returns nothing when
/// the ray misses the box or only grazes it. The direction is normalized.
std::optional<Ray> clip_ray(const BoundingBox& box, const Vec3& origin, const Vec3& direction);

struct Segment {
  int cell = 0;
  double t_in = 0.0;
  double t_out = 0.0;
  /// False when the exit through t_out passes within eps_step of a face edge
  /// (or the ray ends there); such boundaries receive no position gradient.
  bool generic_exit = false;

  double delta() const { return t_out - t_in; }
};

using SegmentList = std::vector<Segment>;

namespace tolerance {
/// Contiguity tolerance for segment lists, relative to the box diagonal.
inline constexpr double kSegmentRel = 1e-7;
/// Distance below which a crossing counts as touching a face edge.
inline constexpr double kStepRel = 1e-9;
}  // namespace tolerance

/// Maximum number of consecutive non-advancing steps before StuckRay.
int max_stuck_steps(int num_sites);

/// Walks the ray through the Voronoi cells starting at locate(origin + t_min d).
/// `hint` seeds the point location (any site index; -1 for site 0). Results
/// are written into `out` (cleared first) so callers can reuse storage.
/// Returns the starting cell, which makes a good hint for a neighboring ray.
int trace(const Ray& ray, const Triangulation& tri, SegmentList& out, int hint = -1);
SegmentList trace(const Ray& ray, const Triangulation& tri);

/// Derivatives of a boundary crossing parameter t with respect to the two
/// sites whose bisector the ray crosses there.
struct CrossingJacobian {
  int i = 0;  // cell before the crossing
  int j = 0;  // cell after the crossing
  Vec3 d_pi;
  Vec3 d_pj;
};

/// Closed-form Jacobian of the crossing at parameter t of the bisector of
/// (pi, pj). Throws NonGenericCrossing when the ray is parallel to the plane.
CrossingJacobian crossing_jacobian(const Ray& ray, double t, int i, int j, const Vec3& pi,
                                   const Vec3& pj);

/// Jacobian for the boundary between segments[entry] and segments[entry + 1].
/// Throws NonGenericCrossing when that boundary is not a generic face crossing.
CrossingJacobian trace_boundary_jacobian(const Ray& ray, const SegmentList& segments, int entry,
                                         const Triangulation& tri);

}  // namespace semfoam
