#pragma once

#include "semfoam/vec3.hpp"

namespace semfoam {

/// Pinhole camera, OpenCV convention (x right, y down, z forward in camera
/// space). world_from_camera maps camera coordinates to world: X = R x + t.
struct Camera {
  int width = 0;
  int height = 0;
  double fx = 1.0, fy = 1.0, cx = 0.0, cy = 0.0;
  Mat3 rotation;
  Vec3 translation;

  Vec3 center() const { return translation; }
  /// Unit world-space direction through the center of pixel (u, v).
  Vec3 pixel_direction(int u, int v) const {
    const Vec3 local{(u + 0.5 - cx) / fx, (v + 0.5 - cy) / fy, 1.0};
    return normalized(rotation * local);
  }
  /// Throws InvalidArgument when intrinsics or rotation are invalid.
  void validate() const;

  /// Camera at `eye` looking at `target`; `up` is the approximate world up.
  static Camera look_at(const Vec3& eye, const Vec3& target, const Vec3& up, int width, int height,
                        double fov_x_radians);
};

}  // namespace semfoam
