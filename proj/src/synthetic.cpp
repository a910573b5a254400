#include "semfoam/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "semfoam/error.hpp"
#include "semfoam/image_io.hpp"

namespace semfoam {

bool Primitive::contains(const Vec3& p) const {
  if (kind == Kind::Sphere) return norm2(p - center) < radius * radius;
  const Vec3 d = p - center;
  return std::abs(d.x) < half_extent.x && std::abs(d.y) < half_extent.y && std::abs(d.z) < half_extent.z;
}

void SyntheticSpec::validate() const {
  auto bad = [](const std::string& what) { throw FoamError(ErrorCode::BadSpec, what); };
  if (!bounds.valid()) bad("invalid bounds");
  if (class_names.empty()) bad("no classes");
  if (width <= 0 || height <= 0) bad("image size must be positive");
  if (train_views < 0 || val_views < 0 || test_views < 0 || train_views + val_views + test_views == 0)
    bad("view counts");
  if (!(fov_x > 0.0 && fov_x < std::numbers::pi)) bad("field of view");
  const double half_diag = 0.5 * bounds.diagonal();
  if (!(ring_radius > half_diag)) bad("camera ring intersects the bounds");
  for (const Primitive& p : primitives) {
    if (p.class_id < 0 || p.class_id >= static_cast<int>(class_names.size())) bad("primitive class id out of range");
    if (!(p.density >= 0.0) || !std::isfinite(p.density)) bad("primitive density");
    for (int c = 0; c < 3; ++c)
      if (!(p.albedo[c] >= 0.0 && p.albedo[c] <= 1.0)) bad("albedo outside [0, 1]");
    Vec3 ext;
    if (p.kind == Primitive::Kind::Sphere) {
      if (!(p.radius > 0.0)) bad("sphere radius");
      ext = Vec3{p.radius, p.radius, p.radius};
    } else {
      if (!(p.half_extent.x > 0.0 && p.half_extent.y > 0.0 && p.half_extent.z > 0.0)) bad("box extent");
      ext = p.half_extent;
    }
    if (!bounds.contains_strictly(p.center - ext) || !bounds.contains_strictly(p.center + ext))
      bad("primitive leaves the bounds");
  }
}

SyntheticSpec synthetic_preset(const std::string& name) {
  SyntheticSpec s;
  s.name = name;
  auto sphere = [](Vec3 c, double r, int cls, Vec3 albedo, double sigma) {
    Primitive p;
    p.kind = Primitive::Kind::Sphere;
    p.center = c;
    p.radius = r;
    p.class_id = cls;
    p.albedo = albedo;
    p.density = sigma;
    return p;
  };
  auto box = [](Vec3 c, Vec3 h, int cls, Vec3 albedo, double sigma) {
    Primitive p;
    p.kind = Primitive::Kind::Box;
    p.center = c;
    p.half_extent = h;
    p.class_id = cls;
    p.albedo = albedo;
    p.density = sigma;
    return p;
  };
  if (name == "three_objects") {
    s.bounds = BoundingBox{{-1.1, -1.1, -1.1}, {1.1, 1.1, 1.1}};
    s.class_names = {"background", "sphere", "cube", "ball"};
    s.label_background = true;
    s.primitives = {sphere({-0.45, -0.05, 0.25}, 0.32, 1, {0.9, 0.25, 0.2}, 30.0),
                    box({0.42, -0.15, -0.1}, {0.24, 0.24, 0.24}, 2, {0.25, 0.8, 0.3}, 30.0),
                    sphere({0.1, 0.35, -0.45}, 0.22, 3, {0.2, 0.35, 0.9}, 30.0)};
  } else if (name == "red_sphere") {
    s.bounds = BoundingBox{{-1, -1, -1}, {1, 1, 1}};
    s.class_names = {"background", "sphere"};
    s.label_background = true;
    s.primitives = {sphere({0, 0, 0}, 0.4, 1, {1.0, 0.0, 0.0}, 5.0)};
  } else if (name == "two_spheres") {
    s.bounds = BoundingBox{{-1, -1, -1}, {1, 1, 1}};
    s.class_names = {"background", "left", "right"};
    s.label_background = true;
    s.primitives = {sphere({-0.4, 0, 0}, 0.3, 1, {0.9, 0.6, 0.1}, 8.0),
                    sphere({0.4, 0.1, 0}, 0.25, 2, {0.1, 0.6, 0.9}, 3.0)};
  } else if (name == "vacuum") {
    s.bounds = BoundingBox{{-1, -1, -1}, {1, 1, 1}};
    s.class_names = {"object"};
    s.label_background = false;
  } else {
    throw FoamError(ErrorCode::BadSpec, "unknown synthetic preset '" + name + "'");
  }
  return s;
}

namespace {

// Parameter interval where the ray is inside the primitive; empty if a >= b.
std::pair<double, double> interval(const Primitive& p, const Vec3& o, const Vec3& d) {
  if (p.kind == Primitive::Kind::Sphere) {
    const Vec3 oc = o - p.center;
    const double b = dot(oc, d);
    const double c = norm2(oc) - p.radius * p.radius;
    const double disc = b * b - c;
    if (disc <= 0.0) return {1.0, 0.0};
    const double s = std::sqrt(disc);
    return {-b - s, -b + s};
  }
  double t0 = -1e300, t1 = 1e300;
  for (int k = 0; k < 3; ++k) {
    const double lo = p.center[k] - p.half_extent[k], hi = p.center[k] + p.half_extent[k];
    if (d[k] == 0.0) {
      if (o[k] <= lo || o[k] >= hi) return {1.0, 0.0};
      continue;
    }
    double a = (lo - o[k]) / d[k], b = (hi - o[k]) / d[k];
    if (a > b) std::swap(a, b);
    t0 = std::max(t0, a);
    t1 = std::min(t1, b);
  }
  return {t0, t1};
}

}  // namespace

AnalyticSample analytic_trace(const std::vector<Primitive>& prims, const Vec3& origin, const Vec3& direction,
                              double t_max) {
  const Vec3 d = normalized(direction);
  std::vector<std::pair<double, double>> iv(prims.size());
  std::vector<double> cuts;
  for (size_t k = 0; k < prims.size(); ++k) {
    auto [a, b] = interval(prims[k], origin, d);
    a = std::max(a, 0.0);
    b = std::min(b, t_max);
    iv[k] = {a, b};
    if (a < b) {
      cuts.push_back(a);
      cuts.push_back(b);
    }
  }
  AnalyticSample out;
  if (cuts.empty()) return out;
  std::sort(cuts.begin(), cuts.end());
  int max_class = 0;
  for (const Primitive& p : prims) max_class = std::max(max_class, p.class_id);
  std::vector<double> class_weight(static_cast<size_t>(max_class) + 1, 0.0);
  double T = 1.0;
  for (size_t c = 0; c + 1 < cuts.size(); ++c) {
    const double a = cuts[c], b = cuts[c + 1];
    if (!(b > a)) continue;
    double sigma = 0.0;
    Vec3 col{0, 0, 0};
    for (size_t k = 0; k < prims.size(); ++k) {
      if (iv[k].first <= a && iv[k].second >= b) {
        sigma += prims[k].density;
        col += prims[k].density * prims[k].albedo;
      }
    }
    if (sigma <= 0.0) continue;
    const double w = T * -std::expm1(-sigma * (b - a));
    for (int ch = 0; ch < 3; ++ch) out.rgb[ch] += w * col[ch] / sigma;
    for (size_t k = 0; k < prims.size(); ++k)
      if (iv[k].first <= a && iv[k].second >= b)
        class_weight[static_cast<size_t>(prims[k].class_id)] += w * prims[k].density / sigma;
    T *= std::exp(-sigma * (b - a));
  }
  out.alpha = 1.0 - T;
  // The dominant contributor labels the pixel; the background competes with
  // the transmitted fraction.
  double best = T;
  for (size_t c = 0; c < class_weight.size(); ++c)
    if (class_weight[c] > best) {
      best = class_weight[c];
      out.label = static_cast<int>(c);
    }
  return out;
}

std::vector<Camera> synthetic_cameras(const SyntheticSpec& spec, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> jitter(-0.25, 0.25);
  const int n = spec.train_views + spec.val_views + spec.test_views;
  const Vec3 center = spec.bounds.center();
  std::vector<Camera> cams;
  const double golden = 0.6180339887498949;
  for (int k = 0; k < n; ++k) {
    const double az = 2.0 * std::numbers::pi * (k + 0.5 + jitter(rng)) / n;
    const double frac = std::fmod(k * golden, 1.0);
    const double el = spec.min_elevation + (spec.max_elevation - spec.min_elevation) * frac;
    const Vec3 eye = center + spec.ring_radius * Vec3{std::cos(el) * std::cos(az), std::sin(el),
                                                      std::cos(el) * std::sin(az)};
    cams.push_back(Camera::look_at(eye, center, {0, 1, 0}, spec.width, spec.height, spec.fov_x));
  }
  return cams;
}

Dataset generate_synthetic(const SyntheticSpec& spec, uint64_t seed) {
  spec.validate();
  Dataset ds;
  ds.class_names = spec.class_names;
  ds.num_classes = static_cast<int>(spec.class_names.size());
  ds.background_class = spec.label_background ? 0 : -1;
  ds.bounds = spec.bounds;
  const auto cams = synthetic_cameras(spec, seed);
  const int n = static_cast<int>(cams.size());
  // Spread val and test views evenly around the ring.
  std::vector<Split> split(static_cast<size_t>(n), Split::Train);
  auto spread = [&](int count, double phase, Split s) {
    for (int k = 0; k < count; ++k) {
      int idx = static_cast<int>(std::floor((k + phase) * n / count)) % n;
      while (split[static_cast<size_t>(idx)] != Split::Train) idx = (idx + 1) % n;
      split[static_cast<size_t>(idx)] = s;
    }
  };
  spread(spec.test_views, 0.25, Split::Test);
  spread(spec.val_views, 0.75, Split::Val);

  for (int k = 0; k < n; ++k) {
    View v;
    char name[32];
    std::snprintf(name, sizeof(name), "view_%03d", k);
    v.name = name;
    v.camera = cams[static_cast<size_t>(k)];
    v.split = split[static_cast<size_t>(k)];
    const size_t np = static_cast<size_t>(spec.width) * static_cast<size_t>(spec.height);
    v.rgb.resize(3 * np);
    v.labels.resize(np);
    for (int y = 0; y < spec.height; ++y)
      for (int x = 0; x < spec.width; ++x) {
        const size_t p = static_cast<size_t>(y) * static_cast<size_t>(spec.width) + static_cast<size_t>(x);
        const AnalyticSample s = analytic_trace(spec.primitives, v.camera.center(), v.camera.pixel_direction(x, y));
        for (int c = 0; c < 3; ++c) v.rgb[3 * p + static_cast<size_t>(c)] = quantize(s.rgb[c]) / 255.0;
        if (s.label >= 0)
          v.labels[p] = s.label;
        else
          v.labels[p] = spec.label_background ? 0 : ds.ignore_id();
      }
    ds.views.push_back(std::move(v));
  }
  return ds;
}

FoamScene reference_foam(const SyntheticSpec& spec, int res) {
  spec.validate();
  if (res < 2) throw FoamError(ErrorCode::InvalidArgument, "grid resolution must be at least 2");
  const int k = static_cast<int>(spec.class_names.size());
  FoamScene s;
  s.box = spec.bounds;
  s.sh_degree = 0;
  s.id_dim = k;
  s.resize(res * res * res);
  s.head = ClassifierHead::zeros(k, k);
  for (int c = 0; c < k; ++c) s.head.weights[static_cast<size_t>(c * k + c)] = 1.0;
  const Vec3 lo = spec.bounds.min_corner, ext = spec.bounds.extent();
  int i = 0;
  for (int z = 0; z < res; ++z)
    for (int y = 0; y < res; ++y)
      for (int x = 0; x < res; ++x, ++i) {
        const Vec3 p = lo + Vec3{ext.x * (x + 0.5) / res, ext.y * (y + 0.5) / res, ext.z * (z + 0.5) / res};
        s.positions[static_cast<size_t>(i)] = p;
        double sigma = 0.0, best = 0.0;
        Vec3 col{0, 0, 0};
        int cls = spec.label_background ? 0 : -1;
        for (const Primitive& q : spec.primitives) {
          if (!q.contains(p)) continue;
          sigma += q.density;
          col += q.density * q.albedo;
          if (q.density > best) {
            best = q.density;
            cls = q.class_id;
          }
        }
        s.density_raw[static_cast<size_t>(i)] = softplus_inverse(sigma > 0.0 ? sigma : 1e-8);
        if (sigma > 0.0) col = col / sigma;
        for (int c = 0; c < 3; ++c) s.sh_of(i)[c] = (col[c] - 0.5) / kShC0;
        if (cls >= 0) s.identity_of(i)[cls] = 4.0;
      }
  return s;
}

}  // namespace semfoam
