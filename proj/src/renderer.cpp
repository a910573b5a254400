#include "semfoam/renderer.hpp"

#include <algorithm>
#include <cmath>

#include "semfoam/error.hpp"
#include "semfoam/parallel.hpp"

namespace semfoam {

double composite(std::span<const ShadedSegment> segs, int dim, double early_stop, double* rgb,
                 double* identity, int* used) {
  rgb[0] = rgb[1] = rgb[2] = 0.0;
  std::fill(identity, identity + dim, 0.0);
  double T = 1.0;
  int n = 0;
  for (; n < static_cast<int>(segs.size());) {
    const ShadedSegment& s = segs[static_cast<size_t>(n)];
    const double tau = s.sigma * s.delta;
    const double w = -T * std::expm1(-tau);
    for (int c = 0; c < 3; ++c) rgb[c] += w * s.rgb[c];
    for (int d = 0; d < dim; ++d) identity[d] += w * s.identity[d];
    T *= std::exp(-tau);
    ++n;
    if (T < early_stop) break;
  }
  if (used) *used = n;
  return 1.0 - T;
}

void composite_backward(std::span<const ShadedSegment> segs, int dim, double early_stop,
                        bool stop_density_identity, const double* g_rgb, double g_alpha, const double* g_id,
                        SegmentAdjoint* adj, double* d_identity) {
  const int n_all = static_cast<int>(segs.size());
  std::fill(adj, adj + n_all, SegmentAdjoint{});
  std::fill(d_identity, d_identity + static_cast<size_t>(n_all) * static_cast<size_t>(dim), 0.0);

  // Forward replay: transmittance in front of each segment and its weight.
  thread_local std::vector<double> T, w;
  T.assign(static_cast<size_t>(n_all) + 1, 0.0);
  w.assign(static_cast<size_t>(n_all), 0.0);
  T[0] = 1.0;
  int used = 0;
  while (used < n_all) {
    const ShadedSegment& s = segs[static_cast<size_t>(used)];
    const double tau = s.sigma * s.delta;
    w[static_cast<size_t>(used)] = -T[static_cast<size_t>(used)] * std::expm1(-tau);
    T[static_cast<size_t>(used) + 1] = T[static_cast<size_t>(used)] * std::exp(-tau);
    ++used;
    if (T[static_cast<size_t>(used)] < early_stop) break;
  }

  // d/dtau_n of sum_m w_m s_m is T_{n+1} s_n - sum_{m>n} w_m s_m.
  double suffix = 0.0;
  for (int n = used - 1; n >= 0; --n) {
    const ShadedSegment& s = segs[static_cast<size_t>(n)];
    const double wn = w[static_cast<size_t>(n)];
    double sn = g_alpha;
    for (int c = 0; c < 3; ++c) sn += g_rgb[c] * s.rgb[c];
    if (!stop_density_identity)
      for (int d = 0; d < dim; ++d) sn += g_id[d] * s.identity[d];
    const double dtau = T[static_cast<size_t>(n) + 1] * sn - suffix;
    suffix += wn * sn;

    SegmentAdjoint& a = adj[n];
    a.d_sigma = dtau * s.delta;
    a.d_delta = dtau * s.sigma;
    for (int c = 0; c < 3; ++c) a.d_rgb[c] = wn * g_rgb[c];
    double* di = d_identity + static_cast<size_t>(n) * static_cast<size_t>(dim);
    for (int d = 0; d < dim; ++d) di[d] = wn * g_id[d];
  }
}

void GradientBuffer::resize_for(const FoamScene& scene) {
  const auto n = static_cast<size_t>(scene.num_sites());
  d_positions.assign(n, Vec3{});
  d_density_raw.assign(n, 0.0);
  d_sh.assign(scene.sh.size(), 0.0);
  d_identity.assign(scene.identity.size(), 0.0);
  d_head_weights.assign(scene.head.weights.size(), 0.0);
  d_head_bias.assign(scene.head.bias.size(), 0.0);
  cell_weight.assign(n, 0.0);
}

void GradientBuffer::zero() {
  std::fill(d_positions.begin(), d_positions.end(), Vec3{});
  for (auto* v : {&d_density_raw, &d_sh, &d_identity, &d_head_weights, &d_head_bias, &cell_weight})
    std::fill(v->begin(), v->end(), 0.0);
}

void GradientBuffer::add(const GradientBuffer& o) {
  for (size_t i = 0; i < d_positions.size(); ++i) d_positions[i] += o.d_positions[i];
  auto acc = [](std::vector<double>& a, const std::vector<double>& b) {
    for (size_t i = 0; i < a.size(); ++i) a[i] += b[i];
  };
  acc(d_density_raw, o.d_density_raw);
  acc(d_sh, o.d_sh);
  acc(d_identity, o.d_identity);
  acc(d_head_weights, o.d_head_weights);
  acc(d_head_bias, o.d_head_bias);
  acc(cell_weight, o.cell_weight);
}

void GradientBuffer::scale(double s) {
  for (auto& p : d_positions) p *= s;
  for (auto* v : {&d_density_raw, &d_sh, &d_identity, &d_head_weights, &d_head_bias})
    for (double& x : *v) x *= s;
}

bool GradientBuffer::all_finite() const {
  for (const Vec3& p : d_positions)
    if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.z)) return false;
  for (const auto* v : {&d_density_raw, &d_sh, &d_identity, &d_head_weights, &d_head_bias})
    for (double x : *v)
      if (!std::isfinite(x)) return false;
  return true;
}

RayRenderer::RayRenderer(const FoamScene& scene, const Triangulation& tri, RenderOptions options)
    : scene_(scene), tri_(tri), options_(options) {}

bool RayRenderer::forward(const Vec3& origin, const Vec3& direction, double* rgb, double& alpha,
                          double* identity) {
  const int dim = scene_.id_dim;
  valid_ = false;
  shaded_.clear();
  auto clipped = clip_ray(tri_.box(), origin, direction);
  if (clipped) {
    ray_ = *clipped;
    try {
      hint_ = trace(ray_, tri_, segs_, hint_);
      valid_ = true;
    } catch (const FoamError& e) {
      if (e.code() != ErrorCode::StuckRay) throw;
    }
  }
  if (!valid_) {
    rgb[0] = rgb[1] = rgb[2] = 0.0;
    std::fill(identity, identity + dim, 0.0);
    alpha = 0.0;
    return false;
  }

  sh_basis(scene_.sh_degree, ray_.direction, basis_);
  shaded_.resize(segs_.size());
  clamped_.resize(segs_.size() * 3);
  for (size_t n = 0; n < segs_.size(); ++n) {
    const int cell = segs_[n].cell;
    ShadedSegment& s = shaded_[n];
    s.sigma = scene_.density(cell);
    s.delta = segs_[n].delta();
    bool cl[3];
    sh_color(scene_.sh_degree, basis_, scene_.sh_of(cell), s.rgb, cl);
    for (int c = 0; c < 3; ++c) clamped_[n * 3 + static_cast<size_t>(c)] = cl[c];
    s.identity = scene_.identity_of(cell);
  }
  alpha = composite(shaded_, dim, options_.early_stop, rgb, identity);
  return true;
}

void RayRenderer::backward(const double* g_rgb, double g_alpha, const double* g_id, GradientBuffer& grads) {
  if (!valid_) return;
  const int dim = scene_.id_dim;
  const size_t n_seg = shaded_.size();
  adj_.resize(n_seg);
  d_identity_.resize(n_seg * static_cast<size_t>(dim));
  composite_backward(shaded_, dim, options_.early_stop, options_.stop_density_identity, g_rgb, g_alpha, g_id,
                     adj_.data(), d_identity_.data());

  const int nb = scene_.sh_basis();
  // Forward replay of the weights for the per-cell statistics.
  double T = 1.0;
  size_t used = 0;
  while (used < n_seg) {
    const double tau = shaded_[used].sigma * shaded_[used].delta;
    grads.cell_weight[static_cast<size_t>(segs_[used].cell)] += -T * std::expm1(-tau);
    T *= std::exp(-tau);
    ++used;
    if (T < options_.early_stop) break;
  }

  for (size_t n = 0; n < used; ++n) {
    const int cell = segs_[n].cell;
    const auto uc = static_cast<size_t>(cell);
    const SegmentAdjoint& a = adj_[n];
    grads.d_density_raw[uc] += a.d_sigma * softplus_grad(scene_.density_raw[uc]);
    double* dsh = grads.d_sh.data() + uc * static_cast<size_t>(scene_.sh_stride());
    for (int c = 0; c < 3; ++c) {
      if (clamped_[n * 3 + static_cast<size_t>(c)]) continue;
      for (int k = 0; k < nb; ++k) dsh[k * 3 + c] += a.d_rgb[c] * basis_[k];
    }
    double* did = grads.d_identity.data() + uc * static_cast<size_t>(dim);
    const double* src = d_identity_.data() + n * static_cast<size_t>(dim);
    for (int d = 0; d < dim; ++d) did[d] += src[d];

    // Segment lengths depend on the sites through the crossing at t_out.
    if (n + 1 >= n_seg || !segs_[n].generic_exit) continue;
    const double g_t = a.d_delta - (n + 1 < used ? adj_[n + 1].d_delta : 0.0);
    if (g_t == 0.0) continue;
    const int next = segs_[n + 1].cell;
    const CrossingJacobian jac =
        crossing_jacobian(ray_, segs_[n].t_out, cell, next, scene_.positions[uc],
                          scene_.positions[static_cast<size_t>(next)]);
    grads.d_positions[uc] += g_t * jac.d_pi;
    grads.d_positions[static_cast<size_t>(next)] += g_t * jac.d_pj;
  }
}

RenderImage render_image(const FoamScene& scene, const Triangulation& tri, const Camera& camera,
                         const RenderOptions& options, int workers) {
  RenderImage img;
  img.width = camera.width;
  img.height = camera.height;
  img.id_dim = scene.id_dim;
  const size_t np = static_cast<size_t>(camera.width) * static_cast<size_t>(camera.height);
  img.rgb.assign(np * 3, 0.0);
  img.alpha.assign(np, 0.0);
  img.identity.assign(np * static_cast<size_t>(scene.id_dim), 0.0);
  if (workers <= 0) workers = worker_count();
  const Vec3 eye = camera.center();
  parallel_blocks(camera.height, workers, [&](int, int row_begin, int row_end) {
    RayRenderer rr(scene, tri, options);
    for (int v = row_begin; v < row_end; ++v)
      for (int u = 0; u < camera.width; ++u) {
        const size_t p = static_cast<size_t>(v) * static_cast<size_t>(camera.width) + static_cast<size_t>(u);
        rr.forward(eye, camera.pixel_direction(u, v), img.rgb.data() + 3 * p, img.alpha[p],
                   img.identity.data() + p * static_cast<size_t>(scene.id_dim));
      }
  });
  return img;
}

double render_backward(const FoamScene& scene, const Triangulation& tri, const Camera& camera,
                       const RenderOptions& options, const PixelLoss& loss, GradientBuffer& grads, int workers) {
  if (workers <= 0) workers = worker_count();
  workers = std::max(1, std::min(workers, camera.height));
  std::vector<GradientBuffer> local(static_cast<size_t>(workers));
  std::vector<double> loss_sum(static_cast<size_t>(workers), 0.0);
  const int dim = scene.id_dim;
  const Vec3 eye = camera.center();
  parallel_blocks(camera.height, workers, [&](int w, int row_begin, int row_end) {
    GradientBuffer& g = local[static_cast<size_t>(w)];
    g.resize_for(scene);
    RayRenderer rr(scene, tri, options);
    std::vector<double> id(static_cast<size_t>(dim)), g_id(static_cast<size_t>(dim));
    double rgb[3], g_rgb[3], alpha = 0.0;
    double total = 0.0;
    for (int v = row_begin; v < row_end; ++v)
      for (int u = 0; u < camera.width; ++u) {
        const int p = v * camera.width + u;
        rr.forward(eye, camera.pixel_direction(u, v), rgb, alpha, id.data());
        double g_alpha = 0.0;
        g_rgb[0] = g_rgb[1] = g_rgb[2] = 0.0;
        std::fill(g_id.begin(), g_id.end(), 0.0);
        total += loss(p, rgb, alpha, id.data(), g_rgb, g_alpha, g_id.data(), g);
        rr.backward(g_rgb, g_alpha, g_id.data(), g);
      }
    loss_sum[static_cast<size_t>(w)] = total;
  });
  grads = std::move(local[0]);
  double total = loss_sum[0];
  for (size_t w = 1; w < local.size(); ++w) {
    grads.add(local[w]);
    total += loss_sum[w];
  }
  return total;
}

}  // namespace semfoam
