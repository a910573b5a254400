#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "semfoam/dataset.hpp"
#include "semfoam/scene.hpp"
#include "semfoam/vec3.hpp"

namespace semfoam {

/// Homogeneous primitive with constant density and albedo.
struct Primitive {
  enum class Kind { Sphere, Box };
  Kind kind = Kind::Sphere;
  Vec3 center;
  double radius = 0.0;  // spheres
  Vec3 half_extent;     // boxes (axis-aligned)
  int class_id = 0;
  Vec3 albedo{1, 1, 1};
  double density = 1.0;

  bool contains(const Vec3& p) const;
};

struct SyntheticSpec {
  std::string name;
  BoundingBox bounds;
  std::vector<Primitive> primitives;
  std::vector<std::string> class_names;
  /// Label rays that hit nothing as class 0 instead of ignoring them.
  bool label_background = false;
  int width = 64;
  int height = 64;
  double fov_x = 0.8;
  int train_views = 30;
  int val_views = 5;
  int test_views = 5;
  double ring_radius = 3.5;
  /// Camera elevations (radians) alternate across this range.
  double min_elevation = -0.35;
  double max_elevation = 0.6;

  /// Throws BadSpec on inconsistent content.
  void validate() const;
};

/// Named presets: "three_objects", "red_sphere", "two_spheres", "vacuum".
SyntheticSpec synthetic_preset(const std::string& name);

/// Analytic front-to-back render of a single ray through the primitives.
/// Overlapping primitives add densities and mix albedos by density. The
/// label is the class of the primitive with the largest compositing weight,
/// or -1 when the ray hits nothing.
struct AnalyticSample {
  double rgb[3] = {0, 0, 0};
  double alpha = 0.0;
  int label = -1;
};
AnalyticSample analytic_trace(const std::vector<Primitive>& prims, const Vec3& origin, const Vec3& direction,
                              double t_max = 1e30);

/// Renders every camera of a ring around the scene center with the analytic
/// tracer. Images are quantized to 8 bits so the in-memory dataset equals its
/// saved form. The seed jitters camera azimuths.
Dataset generate_synthetic(const SyntheticSpec& spec, uint64_t seed);

/// Ring of look-at cameras (train, then val, then test).
std::vector<Camera> synthetic_cameras(const SyntheticSpec& spec, uint64_t seed);

/// Foam with sites at the centers of a res^3 grid over the spec bounds. Each
/// cell takes the summed density and density-weighted albedo of the
/// primitives containing its site (vacuum cells get a negligible density),
/// a one-hot identity of its class scaled by 4, and an identity head. A spec
/// whose boxes align with the grid is tessellated exactly.
FoamScene reference_foam(const SyntheticSpec& spec, int res);

}  // namespace semfoam
