#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "semfoam/renderer.hpp"

using namespace semfoam;

namespace {

/// Midpoint-rule quadrature of the continuous volume-rendering integral with
/// piecewise-constant density and color, `sub` substeps per segment.
void quadrature(const std::vector<ShadedSegment>& segs, int dim, int sub, double* rgb, double* id, double& alpha) {
  double log_t = 0.0;
  rgb[0] = rgb[1] = rgb[2] = 0.0;
  for (int d = 0; d < dim; ++d) id[d] = 0.0;
  for (const auto& s : segs) {
    const double dt = s.delta / sub;
    for (int k = 0; k < sub; ++k) {
      const double t_mid = std::exp(log_t - 0.5 * s.sigma * dt);
      const double w = s.sigma * t_mid * dt;
      for (int c = 0; c < 3; ++c) rgb[c] += w * s.rgb[c];
      for (int d = 0; d < dim; ++d) id[d] += w * s.identity[d];
      log_t -= s.sigma * dt;
    }
  }
  alpha = 1.0 - std::exp(log_t);
}

struct RandomSegments {
  std::vector<ShadedSegment> segs;
  std::vector<double> ids;
};

RandomSegments random_segments(std::mt19937_64& rng, int count, int dim) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  RandomSegments r;
  r.segs.resize(static_cast<size_t>(count));
  r.ids.resize(static_cast<size_t>(count * dim));
  for (auto& x : r.ids) x = 2.0 * u(rng) - 1.0;
  for (int n = 0; n < count; ++n) {
    auto& s = r.segs[static_cast<size_t>(n)];
    s.sigma = 3.0 * u(rng);
    s.delta = 0.2 * u(rng);
    for (double& c : s.rgb) c = u(rng);
    s.identity = r.ids.data() + n * dim;
  }
  return r;
}

double ray_objective(const FoamScene& scene, const Triangulation& tri, const Vec3& o, const Vec3& d,
                     const double* g_rgb, double g_alpha, const std::vector<double>& g_id, const RenderOptions& opt) {
  RayRenderer rr(scene, tri, opt);
  double rgb[3], alpha;
  std::vector<double> id(static_cast<size_t>(scene.id_dim));
  rr.forward(o, d, rgb, alpha, id.data());
  double v = g_alpha * alpha;
  for (int c = 0; c < 3; ++c) v += g_rgb[c] * rgb[c];
  for (int k = 0; k < scene.id_dim; ++k) v += g_id[static_cast<size_t>(k)] * id[static_cast<size_t>(k)];
  return v;
}

}  // namespace

TEST_CASE("single segment closed form") {
  const double f[2] = {1.0, 0.0};
  ShadedSegment s;
  s.sigma = 1.0;
  s.delta = 1.0;
  s.rgb[0] = 1.0;
  s.identity = f;
  double rgb[3], id[2];
  const double alpha = composite(std::span(&s, 1), 2, 1e-7, rgb, id);
  CHECK(rgb[0] == doctest::Approx(1.0 - std::exp(-1.0)).epsilon(1e-15));
  CHECK(rgb[1] == 0.0);
  CHECK(alpha == doctest::Approx(0.63212055882855767).epsilon(1e-15));
  CHECK(id[0] == doctest::Approx(alpha).epsilon(1e-15));
  CHECK(id[1] == 0.0);

  const double g_rgb[3] = {1.0, 0.0, 0.0}, g_id[2] = {0.0, 0.0};
  SegmentAdjoint adj;
  double d_id[2];
  composite_backward(std::span(&s, 1), 2, 1e-7, false, g_rgb, 0.0, g_id, &adj, d_id);
  CHECK(adj.d_sigma == doctest::Approx(std::exp(-1.0)).epsilon(1e-14));
  CHECK(adj.d_rgb[0] == doctest::Approx(alpha).epsilon(1e-15));
}

TEST_CASE("vacuum renders nothing") {
  std::mt19937_64 rng(1);
  auto r = random_segments(rng, 10, 4);
  for (auto& s : r.segs) s.sigma = 0.0;
  double rgb[3], id[4];
  const double alpha = composite(r.segs, 4, 1e-7, rgb, id);
  CHECK(alpha == 0.0);
  CHECK(rgb[0] == 0.0);
  CHECK(id[3] == 0.0);
}

TEST_CASE("compositing matches quadrature and normalizes weights") {
  std::mt19937_64 rng(4);
  const int dim = 3;
  for (int trial = 0; trial < 50; ++trial) {
    auto r = random_segments(rng, 20, dim);
    double rgb[3], id[dim], q_rgb[3], q_id[dim], q_alpha;
    const double alpha = composite(r.segs, dim, 1e-7, rgb, id);
    quadrature(r.segs, dim, 10000, q_rgb, q_id, q_alpha);
    for (int c = 0; c < 3; ++c) CHECK(std::abs(rgb[c] - q_rgb[c]) <= 1e-6);
    for (int d = 0; d < dim; ++d) CHECK(std::abs(id[d] - q_id[d]) <= 1e-6);
    CHECK(std::abs(alpha - q_alpha) <= 1e-6);

    // White radiance makes the color channel the weight sum.
    auto white = r.segs;
    for (auto& s : white) s.rgb[0] = s.rgb[1] = s.rgb[2] = 1.0;
    double w_rgb[3];
    const double a2 = composite(white, dim, 1e-7, w_rgb, id);
    CHECK(std::abs(w_rgb[0] - a2) <= 1e-12);
    CHECK(alpha >= 0.0);
    CHECK(alpha <= 1.0);

    // Identity channel equals color compositing of the same values bit for bit.
    auto as_color = r.segs;
    for (auto& s : as_color)
      for (int c = 0; c < 3; ++c) s.rgb[c] = s.identity[c];
    double c_rgb[3];
    composite(as_color, dim, 1e-7, c_rgb, id);
    composite(r.segs, dim, 1e-7, rgb, q_id);
    for (int c = 0; c < 3; ++c) CHECK(c_rgb[c] == q_id[c]);
  }
}

TEST_CASE("opaque front segment occludes the rest") {
  std::mt19937_64 rng(8);
  auto r = random_segments(rng, 6, 2);
  r.segs[0].sigma = 40.0;
  r.segs[0].delta = 0.5;
  double rgb[3], id[2];
  int used = 0;
  const double alpha = composite(r.segs, 2, 1e-7, rgb, id, &used);
  CHECK(used == 1);
  for (int c = 0; c < 3; ++c) CHECK(std::abs(rgb[c] - alpha * r.segs[0].rgb[c]) < 1e-8);
  // Without early stop, later weights stay below 1e-8.
  const double t1 = std::exp(-20.0);
  CHECK(t1 < 1e-8);
}

TEST_CASE("composite_backward matches finite differences") {
  std::mt19937_64 rng(12);
  const int dim = 4;
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    auto r = random_segments(rng, 10, dim);
    double g_rgb[3] = {u(rng), u(rng), u(rng)}, g_alpha = u(rng), g_id[dim];
    for (double& g : g_id) g = u(rng);
    auto objective = [&](const std::vector<ShadedSegment>& segs) {
      double rgb[3], id[dim];
      const double a = composite(segs, dim, 1e-7, rgb, id);
      double v = g_alpha * a;
      for (int c = 0; c < 3; ++c) v += g_rgb[c] * rgb[c];
      for (int d = 0; d < dim; ++d) v += g_id[d] * id[d];
      return v;
    };
    std::vector<SegmentAdjoint> adj(r.segs.size());
    std::vector<double> d_id(r.segs.size() * dim);
    composite_backward(r.segs, dim, 1e-7, false, g_rgb, g_alpha, g_id, adj.data(), d_id.data());
    const double h = 1e-6;
    auto close = [](double a, double b) { return std::abs(a - b) <= 1e-5 * std::max(std::abs(b), 1e-3); };
    for (size_t n = 0; n < r.segs.size(); ++n) {
      auto p = r.segs, m = r.segs;
      p[n].sigma += h, m[n].sigma -= h;
      CHECK(close(adj[n].d_sigma, (objective(p) - objective(m)) / (2 * h)));
      p = r.segs, m = r.segs;
      p[n].delta += h, m[n].delta -= h;
      CHECK(close(adj[n].d_delta, (objective(p) - objective(m)) / (2 * h)));
      for (int c = 0; c < 3; ++c) {
        p = r.segs, m = r.segs;
        p[n].rgb[c] += h, m[n].rgb[c] -= h;
        CHECK(close(adj[n].d_rgb[c], (objective(p) - objective(m)) / (2 * h)));
      }
      for (int d = 0; d < dim; ++d) {
        std::vector<double> ids_p = r.ids, ids_m = r.ids;
        ids_p[n * dim + static_cast<size_t>(d)] += h;
        ids_m[n * dim + static_cast<size_t>(d)] -= h;
        p = r.segs, m = r.segs;
        for (size_t k = 0; k < p.size(); ++k) {
          p[k].identity = ids_p.data() + k * dim;
          m[k].identity = ids_m.data() + k * dim;
        }
        CHECK(close(d_id[n * dim + static_cast<size_t>(d)], (objective(p) - objective(m)) / (2 * h)));
      }
    }
  }
}

TEST_CASE("stop-density flag removes the identity channel from density gradients") {
  std::mt19937_64 rng(3);
  const int dim = 4;
  auto r = random_segments(rng, 10, dim);
  const double g_rgb[3] = {0, 0, 0};
  const double g_id[dim] = {0.3, -1.0, 0.5, 2.0};
  std::vector<SegmentAdjoint> adj(r.segs.size());
  std::vector<double> d_id(r.segs.size() * dim);
  composite_backward(r.segs, dim, 1e-7, true, g_rgb, 0.0, g_id, adj.data(), d_id.data());
  for (const auto& a : adj) {
    CHECK(a.d_sigma == 0.0);
    CHECK(a.d_delta == 0.0);
  }
  double nonzero = 0.0;
  for (double x : d_id) nonzero += std::abs(x);
  CHECK(nonzero > 0.0);
}

TEST_CASE("scene-level gradients match finite differences") {
  std::mt19937_64 rng(23);
  FoamScene scene = fixture::random_scene(rng, 60, 2, 5, 3);
  const Triangulation tri = build_delaunay(scene.positions, scene.box);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const RenderOptions opt;
  int pos_checked = 0;
  for (int trial = 0; trial < 6; ++trial) {
    const Vec3 o{-0.5, 0.5 + 0.3 * u(rng), 0.5 + 0.3 * u(rng)};
    const Vec3 d = normalized(Vec3{1.0, 0.3 * u(rng), 0.3 * u(rng)});
    double g_rgb[3] = {u(rng), u(rng), u(rng)};
    const double g_alpha = u(rng);
    std::vector<double> g_id(5);
    for (double& g : g_id) g = u(rng);

    GradientBuffer grads;
    grads.resize_for(scene);
    RayRenderer rr(scene, tri, opt);
    double rgb[3], alpha;
    std::vector<double> id(5);
    REQUIRE(rr.forward(o, d, rgb, alpha, id.data()));
    rr.backward(g_rgb, g_alpha, g_id.data(), grads);
    const SegmentList segs = rr.segments();

    const double h = 1e-6;
    auto close = [](double a, double b, double rel) { return std::abs(a - b) <= rel * std::max(std::abs(b), 1e-4); };
    std::set<int> cells;
    for (const auto& s : segs) cells.insert(s.cell);
    for (int cell : cells) {
      const auto uc = static_cast<size_t>(cell);
      FoamScene p = scene, m = scene;
      p.density_raw[uc] += h, m.density_raw[uc] -= h;
      const double fd_s = (ray_objective(p, tri, o, d, g_rgb, g_alpha, g_id, opt) -
                           ray_objective(m, tri, o, d, g_rgb, g_alpha, g_id, opt)) / (2 * h);
      CHECK(close(grads.d_density_raw[uc], fd_s, 1e-5));
      for (int k = 0; k < scene.sh_stride(); ++k) {
        p = scene, m = scene;
        p.sh_of(cell)[k] += h, m.sh_of(cell)[k] -= h;
        const double fd = (ray_objective(p, tri, o, d, g_rgb, g_alpha, g_id, opt) -
                           ray_objective(m, tri, o, d, g_rgb, g_alpha, g_id, opt)) / (2 * h);
        CHECK(close(grads.d_sh[uc * static_cast<size_t>(scene.sh_stride()) + static_cast<size_t>(k)], fd, 1e-5));
      }
      for (int k = 0; k < scene.id_dim; ++k) {
        p = scene, m = scene;
        p.identity_of(cell)[k] += h, m.identity_of(cell)[k] -= h;
        const double fd = (ray_objective(p, tri, o, d, g_rgb, g_alpha, g_id, opt) -
                           ray_objective(m, tri, o, d, g_rgb, g_alpha, g_id, opt)) / (2 * h);
        CHECK(close(grads.d_identity[uc * 5 + static_cast<size_t>(k)], fd, 1e-5));
      }
      for (int c = 0; c < 3; ++c) {
        p = scene, m = scene;
        p.positions[uc][c] += h, m.positions[uc][c] -= h;
        const Triangulation tp = build_delaunay(p.positions, p.box), tm = build_delaunay(m.positions, m.box);
        // Finite differences are only meaningful when the visited cells stay the same.
        RayRenderer rp(p, tp, opt), rm(m, tm, opt);
        double tmp[3], ta;
        std::vector<double> tid(5);
        rp.forward(o, d, tmp, ta, tid.data());
        rm.forward(o, d, tmp, ta, tid.data());
        bool same = rp.segments().size() == segs.size() && rm.segments().size() == segs.size();
        for (size_t k = 0; same && k < segs.size(); ++k)
          same = rp.segments()[k].cell == segs[k].cell && rm.segments()[k].cell == segs[k].cell;
        if (!same) continue;
        const double fd = (ray_objective(p, tp, o, d, g_rgb, g_alpha, g_id, opt) -
                           ray_objective(m, tm, o, d, g_rgb, g_alpha, g_id, opt)) / (2 * h);
        CHECK(close(grads.d_positions[uc][c], fd, 1e-3));
        ++pos_checked;
      }
    }
  }
  CHECK(pos_checked > 50);
}

TEST_CASE("render_image: vacuum and constant fog") {
  FoamScene scene;
  scene.box = BoundingBox{{-1, -1, -1}, {1, 1, 1}};
  scene.id_dim = 2;
  scene.positions = {{0, 0, 0}};
  scene.resize(1);
  scene.head = ClassifierHead::zeros(2, 2);
  scene.density_raw[0] = -80.0;  // softplus underflows to zero density
  const Triangulation tri = build_delaunay(scene.positions, scene.box);
  const Camera cam = Camera::look_at({0, 0, -3}, {0, 0, 0}, {0, 1, 0}, 16, 12, 0.6);
  auto img = render_image(scene, tri, cam, {}, 1);
  for (double a : img.alpha) CHECK(a < 1e-30);

  // Red fog: SH DC chosen so the red channel is 1 and the others 0.
  const double c0 = 0.28209479177387814;
  scene.density_raw[0] = softplus_inverse(0.7);
  scene.sh = {0.5 / c0, -0.5 / c0, -0.5 / c0};
  img = render_image(scene, tri, cam, {}, 1);
  for (int v = 0; v < cam.height; ++v)
    for (int u = 0; u < cam.width; ++u) {
      const auto r = clip_ray(scene.box, cam.center(), cam.pixel_direction(u, v));
      REQUIRE(r);
      const double expected = 1.0 - std::exp(-0.7 * (r->t_max - r->t_min));
      const size_t p = static_cast<size_t>(v * cam.width + u);
      CHECK(img.rgb[3 * p] == doctest::Approx(expected).epsilon(1e-12));
      CHECK(std::abs(img.rgb[3 * p + 1]) < 1e-15);
    }
}

TEST_CASE("render_image is deterministic across worker counts") {
  std::mt19937_64 rng(5);
  FoamScene scene = fixture::random_scene(rng, 300, 1, 4, 3);
  const Triangulation tri = build_delaunay(scene.positions, scene.box);
  const Camera cam = Camera::look_at({0.5, 0.5, -1.5}, {0.5, 0.5, 0.5}, {0, 1, 0}, 24, 20, 0.8);
  const auto a = render_image(scene, tri, cam, {}, 1);
  const auto b = render_image(scene, tri, cam, {}, 3);
  CHECK(a.rgb == b.rgb);
  CHECK(a.alpha == b.alpha);
  CHECK(a.identity == b.identity);
}
