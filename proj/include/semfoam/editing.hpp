#pragma once

#include <span>
#include <vector>

#include "semfoam/geometry.hpp"
#include "semfoam/scene.hpp"
#include "semfoam/vec3.hpp"

namespace semfoam {

inline constexpr double kDefaultDensityThreshold = 1e-2;

/// Cells of one object: dense cells carrying the class label (core) and
/// their same-label neighbors (shell). Both lists are sorted.
struct ObjectSelection {
  int class_id = 0;
  std::vector<int> core;
  std::vector<int> shell;
  double density_threshold = kDefaultDensityThreshold;

  bool empty() const { return core.empty() && shell.empty(); }
  /// core and shell merged, sorted.
  std::vector<int> cells() const;
};

/// Throws EmptyClass when class_id is not a class of the scene's head.
ObjectSelection select_object(const FoamScene& scene, const Triangulation& tri, int class_id,
                              double density_threshold = kDefaultDensityThreshold);

struct Extraction {
  ObjectSelection selection;
  /// Core and shell sites in index order, same head, box = site bounds
  /// inflated by 20%.
  FoamScene object;
};

/// Throws EmptyClass when the core is empty.
Extraction extract_object(const FoamScene& scene, const Triangulation& tri, int class_id,
                          double density_threshold = kDefaultDensityThreshold);

struct EditResult {
  FoamScene scene;
  Triangulation tri;
};

struct Removal : EditResult {
  ObjectSelection selection;
};

/// Deletes core and shell. A class without selected cells leaves the scene
/// unchanged; an unknown class id throws EmptyClass, and fewer than 5
/// survivors throw TooFewSites.
Removal remove_object(const FoamScene& scene, const Triangulation& tri, int class_id,
                      double density_threshold = kDefaultDensityThreshold);

/// x -> scale * rotation * x + translation.
struct SimilarityTransform {
  Mat3 rotation;
  Vec3 translation;
  double scale = 1.0;

  /// `rows` is a row-major 3x4 matrix [R | t]. Throws InvalidArgument unless
  /// R is a proper rotation (to 1e-6) and scale > 0.
  static SimilarityTransform from_rows(std::span<const double> rows, double scale);
  Vec3 apply(const Vec3& p) const { return scale * (rotation * p) + translation; }
};

struct Insertion : EditResult {
  int source_class = -1;  // majority label of the object's dense cells
  int class_id = -1;      // class of the inserted cells in the result
  bool remapped = false;  // true when class_id is a fresh head row
  int deleted = 0;        // host sites removed from the occupied region
  int inserted = 0;
};

/// Inserts a standalone object into a host scene. Host sites inside the
/// convex hull of any connected piece of the transformed object are deleted
/// first. Densities scale by 1 / scale, SH bands of degree >= 1 are rotated,
/// and identities are copied. When the host already has dense cells of the
/// object's class (or the class does not exist in the host) the inserted
/// cells get a fresh class: one head row is appended and the copied
/// identities are shifted along a direction the existing rows ignore (the
/// identity size grows by one when the head leaves no such direction).
/// Throws OutOfBounds when a transformed site leaves the host box and
/// ShapeMismatch on differing SH degree or identity size.
Insertion insert_object(const FoamScene& host, const Triangulation& tri, const FoamScene& object,
                        const SimilarityTransform& transform,
                        double density_threshold = kDefaultDensityThreshold);

/// Least-squares SH rotation: coefficients of f(R^T d) from those of f(d),
/// band by band. Output has (degree + 1)^2 x (degree + 1)^2 entries, row-major.
std::vector<double> sh_rotation_matrix(int degree, const Mat3& rotation);

/// Connected pieces of an object scene: dense cells of `class_id` joined by
/// adjacency, with each remaining cell attached to the piece of its first
/// adjacent dense cell or, failing that, the nearest dense site. Returns a
/// piece id per site.
std::vector<int> object_pieces(const FoamScene& object, const Triangulation& tri, int class_id,
                               double density_threshold);

/// Which of `points` lie inside (or on) the convex hull of `hull_points`.
/// Hulls of fewer than four points or with no volume contain nothing.
std::vector<uint8_t> inside_convex_hull(std::span<const Vec3> hull_points, std::span<const Vec3> points);

}  // namespace semfoam
