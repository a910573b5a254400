#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "semfoam/vec3.hpp"

namespace semfoam {

/// Axis-aligned scene bounds. Every Voronoi cell and every traced ray is
/// clipped to this box.
struct BoundingBox {
  Vec3 min_corner{0, 0, 0};
  Vec3 max_corner{1, 1, 1};

  Vec3 center() const { return 0.5 * (min_corner + max_corner); }
  Vec3 extent() const { return max_corner - min_corner; }
  double diagonal() const { return norm(max_corner - min_corner); }
  bool valid() const {
    return min_corner.x < max_corner.x && min_corner.y < max_corner.y &&
           min_corner.z < max_corner.z;
  }
  bool contains_strictly(const Vec3& p) const {
    return p.x > min_corner.x && p.y > min_corner.y && p.z > min_corner.z &&
           p.x < max_corner.x && p.y < max_corner.y && p.z < max_corner.z;
  }
  /// Same center, each side scaled by (1 + fraction).
  BoundingBox inflated(double fraction) const {
    const Vec3 half = 0.5 * (1.0 + fraction) * extent();
    return {center() - half, center() + half};
  }
  static BoundingBox around(std::span<const Vec3> points);
};

namespace tolerance {
/// Coincident-site threshold, relative to the box diagonal.
inline constexpr double kSiteRel = 1e-9;
/// Zero band for orientation / in-sphere determinants, relative to their
/// permanent (absolute-value) bound.
inline constexpr double kPredicateRel = 1e-12;
/// Dual-face vertices must sit on the bisector plane within this fraction of
/// the site separation.
inline constexpr double kPlane = 1e-8;
/// Faces whose clipped area is below kFaceAreaRel * diagonal^2 are treated
/// as absent.
inline constexpr double kFaceAreaRel = 1e-14;
}  // namespace tolerance

/// One Voronoi face (equivalently one Delaunay edge whose dual face survives
/// clipping to the bounding box). `i < j` always.
struct FaceEdge {
  int i = 0;
  int j = 0;
  double area = 0.0;
  uint32_t polygon_begin = 0;
  uint32_t polygon_size = 0;
};

/// Delaunay tetrahedralization of the sites together with its dual Voronoi
/// adjacency. Immutable once built; every mutation returns a new object, so a
/// finished triangulation may be read from many threads at once.
///
/// Internally the mesh is enclosed by four far-away auxiliary vertices, which
/// lets any site count >= 1 be triangulated. Auxiliary vertices never reach
/// the bounding box, so the clipped Voronoi faces are exact.
class Triangulation {
 public:
  Triangulation() = default;

  int num_sites() const { return static_cast<int>(points_.size()) - kAux; }
  const BoundingBox& box() const { return box_; }
  const Vec3& site(int i) const { return points_[static_cast<size_t>(i + kAux)]; }
  std::span<const Vec3> sites() const {
    return std::span<const Vec3>(points_).subspan(kAux);
  }

  /// Tetrahedra whose four vertices are all sites (positively oriented).
  std::span<const std::array<int, 4>> tetrahedra() const { return tetrahedra_; }
  /// Voronoi vertex of each entry of tetrahedra().
  std::span<const Vec3> circumcenters() const { return circumcenters_; }

  /// Adjacency entries (one per unordered pair) with clipped face data.
  std::span<const FaceEdge> faces() const { return faces_; }
  std::span<const Vec3> face_polygon(int face) const;

  /// Cells sharing a face with cell i, sorted ascending.
  std::span<const int> neighbors(int i) const;
  /// Face index (into faces()) for each entry of neighbors(i).
  std::span<const int> neighbor_faces(int i) const;
  /// Bisector plane of each neighbor of i: x . normal <= offset inside cell i.
  std::span<const Vec3> neighbor_normals(int i) const;
  std::span<const double> neighbor_offsets(int i) const;

  /// Face index for the unordered pair, or -1.
  int find_face(int i, int j) const;

  /// All Delaunay edges between sites, including those whose dual face lies
  /// outside the box (used by the property checks).
  std::span<const std::array<int, 2>> delaunay_edges() const { return delaunay_edges_; }

  // Mutation entry points used by the free functions below.
  static Triangulation build(std::span<const Vec3> sites, const BoundingBox& box);
  void insert(std::span<const Vec3> new_points);

 private:
  static constexpr int kAux = 4;

  struct Tet {
    std::array<int, 4> v;
    std::array<int, 4> n;  // n[k] is the tet across the face opposite v[k]
  };

  void init_enclosing_tet();
  void insert_point(int p);
  int locate_tet(const Vec3& p);
  int allocate_tet();
  void rebuild_dual();

  bool conflict(const Tet& t, int p) const;
  int orientation(int a, int b, int c, int d) const;

  BoundingBox box_;
  std::vector<Vec3> points_;  // auxiliary vertices first, then sites
  std::vector<Tet> tets_;
  std::vector<uint8_t> alive_;
  std::vector<int> free_;
  int last_tet_ = 0;
  uint32_t walk_rng_ = 0x9e3779b9u;

  // Scratch space for insertion.
  std::vector<uint32_t> stamp_;
  std::vector<uint8_t> in_cavity_;
  uint32_t current_stamp_ = 0;

  // Dual structures, rebuilt after every mutation.
  std::vector<std::array<int, 4>> tetrahedra_;
  std::vector<Vec3> circumcenters_;
  std::vector<std::array<int, 2>> delaunay_edges_;
  std::vector<FaceEdge> faces_;
  std::vector<Vec3> polygon_vertices_;
  std::vector<int> adj_offsets_;
  std::vector<int> adj_neighbors_;
  std::vector<int> adj_faces_;
  std::vector<Vec3> adj_normals_;
  std::vector<double> adj_offsets_plane_;
};

/// Builds the Delaunay tetrahedralization of `sites` inside `box`.
/// Throws DegenerateInput when four or more sites span less than 3D,
/// DuplicateSite for coincident sites and OutOfBounds for sites outside the box.
Triangulation build_delaunay(std::span<const Vec3> sites, const BoundingBox& box);

/// Clipped area of the Voronoi face shared by cells i and j. Throws NotAdjacent.
double face_area(const Triangulation& tri, int i, int j);

/// Nearest site to `point` by greedy walk over the adjacency graph from `hint`.
/// Ties resolve to the lowest index.
int locate(const Triangulation& tri, const Vec3& point, int hint = 0);

struct SiteRemoval {
  std::vector<Vec3> sites;
  Triangulation tri;
  std::vector<int> old_to_new;  // -1 for removed sites
};

/// Rebuilds the triangulation without the listed sites. Survivors keep their
/// relative order. Throws TooFewSites if fewer than 5 sites would remain.
SiteRemoval remove_sites(const Triangulation& tri, std::span<const int> to_remove);

struct SiteInsertion {
  std::vector<Vec3> sites;
  Triangulation tri;
};

/// Incrementally inserts `new_points`; they are appended after the existing
/// sites. Throws DuplicateSite or OutOfBounds.
SiteInsertion insert_sites(const Triangulation& tri, std::span<const Vec3> new_points);

/// Clips a convex planar polygon against the half-space dot(x, normal) <= offset.
void clip_polygon(std::vector<Vec3>& polygon, const Vec3& normal, double offset,
                  std::vector<Vec3>& scratch);

/// Area of a planar polygon given in cyclic order.
double polygon_area(std::span<const Vec3> polygon);

/// Cross-section of the box by the plane dot(x, normal) = offset, as a convex
/// polygon (empty if the plane misses the box).
std::vector<Vec3> box_section(const BoundingBox& box, const Vec3& normal, double offset);

}  // namespace semfoam
