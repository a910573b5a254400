#include "semfoam/camera.hpp"

#include <cmath>

#include "semfoam/error.hpp"

namespace semfoam {

void Camera::validate() const {
  if (width <= 0 || height <= 0) throw FoamError(ErrorCode::InvalidArgument, "camera size must be positive");
  if (!(fx > 0.0) || !(fy > 0.0)) throw FoamError(ErrorCode::InvalidArgument, "focal lengths must be positive");
  if (!(cx >= 0.0 && cx < width && cy >= 0.0 && cy < height))
    throw FoamError(ErrorCode::InvalidArgument, "principal point outside the image");
  const Mat3 rtr = rotation.transposed() * rotation;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c)
      if (std::abs(rtr(r, c) - (r == c ? 1.0 : 0.0)) > 1e-9)
        throw FoamError(ErrorCode::InvalidArgument, "camera rotation is not orthonormal");
}

Camera Camera::look_at(const Vec3& eye, const Vec3& target, const Vec3& up, int width, int height,
                       double fov_x_radians) {
  const Vec3 z = normalized(target - eye);
  // Image y points down (along -up), and x = y cross z.
  const Vec3 x = normalized(cross(z, up));
  const Vec3 y = cross(z, x);
  Camera cam;
  cam.width = width;
  cam.height = height;
  cam.fx = cam.fy = 0.5 * width / std::tan(0.5 * fov_x_radians);
  cam.cx = 0.5 * width;
  cam.cy = 0.5 * height;
  for (int r = 0; r < 3; ++r) {
    cam.rotation(r, 0) = x[r];
    cam.rotation(r, 1) = y[r];
    cam.rotation(r, 2) = z[r];
  }
  cam.translation = eye;
  return cam;
}

}  // namespace semfoam
