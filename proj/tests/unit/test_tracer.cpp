#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "oracles.hpp"
#include "semfoam/error.hpp"
#include "semfoam/tracer.hpp"

using namespace semfoam;

namespace {

const BoundingBox kUnit{{0, 0, 0}, {1, 1, 1}};

Ray random_ray(std::mt19937_64& rng, const BoundingBox& box) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> g(0.0, 1.0);
  for (;;) {
    const Vec3 f{u(rng), u(rng), u(rng)};
    Vec3 origin;
    if (u(rng) < 0.5) {
      origin = Vec3{box.min_corner.x + box.extent().x * u(rng), box.min_corner.y + box.extent().y * u(rng),
                    box.min_corner.z + box.extent().z * u(rng)};
    } else {
      const Vec3 dir = normalized(Vec3{g(rng), g(rng), g(rng)});
      origin = box.center() + 2.0 * box.diagonal() * dir;
    }
    const Vec3 aim{box.min_corner.x + box.extent().x * f.x, box.min_corner.y + box.extent().y * f.y,
                   box.min_corner.z + box.extent().z * f.z};
    if (norm(aim - origin) < 1e-6) continue;
    if (auto r = clip_ray(box, origin, aim - origin)) return *r;
  }
}

void check_contiguity(const Ray& ray, const SegmentList& segs, const Triangulation& tri) {
  const double eps = tolerance::kSegmentRel * tri.box().diagonal();
  REQUIRE(!segs.empty());
  CHECK(segs.front().t_in == ray.t_min);
  CHECK(segs.back().t_out == ray.t_max);
  double sum = 0.0;
  for (size_t k = 0; k < segs.size(); ++k) {
    CHECK(segs[k].delta() >= 0.0);
    sum += segs[k].delta();
    if (k + 1 < segs.size()) {
      CHECK(std::abs(segs[k + 1].t_in - segs[k].t_out) <= eps);
      CHECK(tri.find_face(segs[k].cell, segs[k + 1].cell) >= 0);
    }
  }
  CHECK(std::abs(sum - (ray.t_max - ray.t_min)) <= eps);
}

}  // namespace

TEST_CASE("clip_ray") {
  auto r = clip_ray(kUnit, {-1, 0.5, 0.5}, {2, 0, 0});
  REQUIRE(r);
  CHECK(r->t_min == doctest::Approx(1.0));
  CHECK(r->t_max == doctest::Approx(2.0));
  CHECK(norm(r->direction) == doctest::Approx(1.0));
  auto inside = clip_ray(kUnit, {0.5, 0.5, 0.5}, {0, 0, 1});
  REQUIRE(inside);
  CHECK(inside->t_min == 0.0);
  CHECK(inside->t_max == doctest::Approx(0.5));
  CHECK_FALSE(clip_ray(kUnit, {-1, 2, 0.5}, {1, 0, 0}));
  CHECK_FALSE(clip_ray(kUnit, {2, 0.5, 0.5}, {1, 0, 0}));
}

TEST_CASE("single cell gives one segment") {
  const std::vector<Vec3> sites{{0.5, 0.5, 0.5}};
  const Triangulation tri = build_delaunay(sites, kUnit);
  const Ray ray = *clip_ray(kUnit, {-1, 0.3, 0.7}, {1, 0.1, -0.05});
  const auto segs = trace(ray, tri);
  REQUIRE(segs.size() == 1);
  CHECK(segs[0].cell == 0);
  CHECK(segs[0].delta() == ray.t_max - ray.t_min);
}

TEST_CASE("two symmetric sites split the axis ray at the bisector") {
  const std::vector<Vec3> sites{{0.25, 0.5, 0.5}, {0.75, 0.5, 0.5}};
  const Triangulation tri = build_delaunay(sites, kUnit);
  const Ray ray = *clip_ray(kUnit, {-1, 0.5, 0.5}, {1, 0, 0});
  const auto segs = trace(ray, tri);
  REQUIRE(segs.size() == 2);
  CHECK(segs[0].cell == 0);
  CHECK(segs[1].cell == 1);
  CHECK(ray.origin.x + segs[0].t_out * ray.direction.x == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(segs[0].generic_exit);

  const auto jac = trace_boundary_jacobian(ray, segs, 0, tri);
  CHECK(jac.i == 0);
  CHECK(jac.j == 1);
  CHECK(jac.d_pi.x == doctest::Approx(0.5));
  CHECK(jac.d_pj.x == doctest::Approx(0.5));
  CHECK(jac.d_pi.y == 0.0);
  CHECK(jac.d_pj.z == 0.0);
  CHECK_THROWS_AS(trace_boundary_jacobian(ray, segs, 1, tri), FoamError);
}

TEST_CASE("random foams agree with dense marching") {
  std::mt19937_64 rng(17);
  int rays = 0;
  for (int inst = 0; inst < 3; ++inst) {
    const auto sites = oracle::random_sites(rng, 200, kUnit);
    const Triangulation tri = build_delaunay(sites, kUnit);
    const oracle::NearestGrid nearest(sites, kUnit);
    const double h = 1e-3 * kUnit.diagonal();
    SegmentList segs;
    for (int k = 0; k < 1000; ++k, ++rays) {
      const Ray ray = random_ray(rng, kUnit);
      trace(ray, tri, segs, k % 200);
      check_contiguity(ray, segs, tri);
      const auto runs = oracle::dense_march(nearest, ray.origin, ray.direction, ray.t_min, ray.t_max, h);
      const auto cmp = oracle::compare_with_march(segs, runs, ray.t_min, h);
      CHECK(cmp.same_sequence);
      CHECK(cmp.max_boundary_error <= h);
    }
  }
  CHECK(rays == 3000);
}

TEST_CASE("tracing is deterministic") {
  std::mt19937_64 rng(2);
  const auto sites = oracle::random_sites(rng, 300, kUnit);
  const Triangulation tri = build_delaunay(sites, kUnit);
  for (int k = 0; k < 50; ++k) {
    const Ray ray = random_ray(rng, kUnit);
    const auto a = trace(ray, tri);
    SegmentList b;
    trace(ray, tri, b, 123);
    REQUIRE(a.size() == b.size());
    for (size_t s = 0; s < a.size(); ++s) {
      CHECK(a[s].cell == b[s].cell);
      CHECK(a[s].t_in == b[s].t_in);
      CHECK(a[s].t_out == b[s].t_out);
    }
  }
}

TEST_CASE("rays through Voronoi vertices and edges do not get stuck") {
  // Cube-corner sites: the center of the box is a Voronoi vertex shared by all
  // eight cells and the axis planes hold many Voronoi edges.
  std::vector<Vec3> sites;
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b)
      for (int c = 0; c < 2; ++c) sites.push_back({0.25 + 0.5 * a, 0.25 + 0.5 * b, 0.25 + 0.5 * c});
  const Triangulation tri = build_delaunay(sites, kUnit);
  const std::vector<std::pair<Vec3, Vec3>> rays{
      {{-1, -1, -1}, {1, 1, 1}}, {{-1, 0.5, 0.5}, {1, 0, 0}}, {{0.5, -1, 0.3}, {0, 1, 0}}, {{0.5, 0.5, 0.5}, {1, 0, 0}}};
  for (const auto& [o, d] : rays) {
    const Ray ray = *clip_ray(kUnit, o, d);
    const auto segs = trace(ray, tri);
    check_contiguity(ray, segs, tri);
    int nongeneric = 0;
    for (size_t k = 0; k + 1 < segs.size(); ++k) nongeneric += segs[k].generic_exit ? 0 : 1;
    CHECK(nongeneric > 0);
  }
}

TEST_CASE("crossing Jacobian matches finite differences") {
  std::mt19937_64 rng(31);
  const auto sites = oracle::random_sites(rng, 100, kUnit);
  const Triangulation tri = build_delaunay(sites, kUnit);
  int checked = 0;
  for (int k = 0; k < 200 && checked < 100; ++k) {
    const Ray ray = random_ray(rng, kUnit);
    const auto segs = trace(ray, tri);
    for (size_t e = 0; e + 1 < segs.size(); ++e) {
      if (!segs[e].generic_exit) continue;
      const auto jac = trace_boundary_jacobian(ray, segs, static_cast<int>(e), tri);
      const Vec3 pi = sites[static_cast<size_t>(jac.i)], pj = sites[static_cast<size_t>(jac.j)];
      // Crossing parameter of the bisector plane written out independently.
      auto t_of = [&](const Vec3& a, const Vec3& b) {
        return (0.5 * (norm2(b) - norm2(a)) - dot(ray.origin, b - a)) / dot(ray.direction, b - a);
      };
      const double step = 1e-6;
      for (int c = 0; c < 3; ++c) {
        Vec3 dp{0, 0, 0};
        dp[c] = step;
        const double fi = (t_of(pi + dp, pj) - t_of(pi - dp, pj)) / (2 * step);
        const double fj = (t_of(pi, pj + dp) - t_of(pi, pj - dp)) / (2 * step);
        CHECK(std::abs(fi - jac.d_pi[c]) <= 1e-5 * std::max(1.0, std::abs(fi)));
        CHECK(std::abs(fj - jac.d_pj[c]) <= 1e-5 * std::max(1.0, std::abs(fj)));
      }
      CHECK(t_of(pi, pj) == doctest::Approx(segs[e].t_out).epsilon(1e-9));
      ++checked;
    }
  }
  CHECK(checked >= 100);
}

TEST_CASE("in-plane displacement of a parallel face has no effect") {
  // Moving both sites by the same vector inside the x = 0.5 bisector leaves
  // the plane, and so the crossing, where it is.
  const Vec3 pi{0.25, 0.5, 0.5}, pj{0.75, 0.5, 0.5};
  const Ray ray{{0.5 - 0.1, 0.0, 0.5}, {0.6, 0.8, 0.0}, 0.0, 1.0};
  const auto jac = crossing_jacobian(ray, 0.1 / 0.6, 0, 1, pi, pj);
  CHECK(jac.d_pi.y == doctest::Approx(-jac.d_pj.y));
  CHECK(jac.d_pi.y + jac.d_pj.y == doctest::Approx(0.0));
  CHECK(jac.d_pi.z == 0.0);
  CHECK(jac.d_pj.z == 0.0);
  const Ray parallel{{0.5, 0.0, 0.5}, {0.0, 1.0, 0.0}, 0.0, 1.0};
  CHECK_THROWS_AS(crossing_jacobian(parallel, 0.5, 0, 1, pi, pj), FoamError);
}
