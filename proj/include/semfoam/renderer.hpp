#pragma once

#include <functional>
#include <span>
#include <vector>

#include "semfoam/camera.hpp"
#include "semfoam/geometry.hpp"
#include "semfoam/scene.hpp"
#include "semfoam/tracer.hpp"

namespace semfoam {

struct RenderOptions {
  /// Drop the identity channel's contribution to density and segment-length
  /// gradients.
  bool stop_density_identity = false;
  /// Compositing stops once transmittance falls below this value.
  double early_stop = 1e-7;
};

/// Per-segment inputs of the compositing sum.
struct ShadedSegment {
  double sigma = 0.0;
  double delta = 0.0;
  double rgb[3] = {0, 0, 0};
  const double* identity = nullptr;
};

/// Front-to-back compositing. Writes rgb[3] and identity[dim], returns alpha.
/// `used` receives the number of segments composited before early stop.
double composite(std::span<const ShadedSegment> segs, int dim, double early_stop, double* rgb,
                 double* identity, int* used = nullptr);

struct SegmentAdjoint {
  double d_sigma = 0.0;
  double d_delta = 0.0;
  double d_rgb[3] = {0, 0, 0};
};

/// Reverse mode of composite() for output adjoints (g_rgb, g_alpha, g_id).
/// Fills adj[n] and d_identity[n * dim + d] for every segment n (zeros past
/// the early-stop point).
void composite_backward(std::span<const ShadedSegment> segs, int dim, double early_stop,
                        bool stop_density_identity, const double* g_rgb, double g_alpha, const double* g_id,
                        SegmentAdjoint* adj, double* d_identity);

/// Accumulators congruent to the scene parameters, plus per-cell statistics
/// gathered during the backward pass.
struct GradientBuffer {
  std::vector<Vec3> d_positions;
  std::vector<double> d_density_raw;
  std::vector<double> d_sh;
  std::vector<double> d_identity;
  std::vector<double> d_head_weights;
  std::vector<double> d_head_bias;
  /// Sum of compositing weights per cell.
  std::vector<double> cell_weight;

  void resize_for(const FoamScene& scene);
  void zero();
  void add(const GradientBuffer& other);
  void scale(double s);
  bool all_finite() const;
};

/// Traces and composites single rays against one scene, keeping the forward
/// state for a following backward() call. Not thread-safe; use one per worker.
class RayRenderer {
 public:
  RayRenderer(const FoamScene& scene, const Triangulation& tri, RenderOptions options = {});

  /// Returns false (and zero outputs) when the ray misses the box or the walk
  /// gets stuck. identity must hold id_dim values.
  bool forward(const Vec3& origin, const Vec3& direction, double* rgb, double& alpha, double* identity);
  void backward(const double* g_rgb, double g_alpha, const double* g_id, GradientBuffer& grads);

  int last_start_cell() const { return hint_; }
  const SegmentList& segments() const { return segs_; }

 private:
  const FoamScene& scene_;
  const Triangulation& tri_;
  RenderOptions options_;
  int hint_ = -1;
  bool valid_ = false;
  Ray ray_;
  SegmentList segs_;
  std::vector<ShadedSegment> shaded_;
  std::vector<uint8_t> clamped_;
  double basis_[kMaxShBasis] = {};
  std::vector<SegmentAdjoint> adj_;
  std::vector<double> d_identity_;
};

struct RenderImage {
  int width = 0;
  int height = 0;
  int id_dim = 0;
  std::vector<double> rgb;       // 3 per pixel, row-major
  std::vector<double> alpha;     // 1 per pixel
  std::vector<double> identity;  // id_dim per pixel
};

/// One ray per pixel center, composited over black.
RenderImage render_image(const FoamScene& scene, const Triangulation& tri, const Camera& camera,
                         const RenderOptions& options = {}, int workers = 0);

/// Loss callback for one pixel: receives the rendered values and writes the
/// adjoints; may accumulate head gradients into `grads`. Returns the pixel's
/// loss contribution.
using PixelLoss = std::function<double(int pixel, const double* rgb, double alpha, const double* identity,
                                       double* g_rgb, double& g_alpha, double* g_id, GradientBuffer& grads)>;

/// Renders every pixel, applies `loss` and backpropagates into `grads`
/// (resized and zeroed first). Returns the summed loss. Worker buffers are
/// reduced in worker order.
double render_backward(const FoamScene& scene, const Triangulation& tri, const Camera& camera,
                       const RenderOptions& options, const PixelLoss& loss, GradientBuffer& grads,
                       int workers = 0);

}  // namespace semfoam
