#include "semfoam/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "semfoam/error.hpp"

namespace semfoam {

namespace {

constexpr double kEps = tolerance::kPredicateRel;

// Sign of det[b-a, c-a, d-a]; zero inside the relative error band.
int orient_sign(const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& d) {
  const Vec3 ba = b - a, ca = c - a, da = d - a;
  const double m0 = ca.y * da.z, m1 = ca.z * da.y;
  const double m2 = ca.z * da.x, m3 = ca.x * da.z;
  const double m4 = ca.x * da.y, m5 = ca.y * da.x;
  const double det = ba.x * (m0 - m1) + ba.y * (m2 - m3) + ba.z * (m4 - m5);
  const double perm = std::abs(ba.x) * (std::abs(m0) + std::abs(m1)) +
                      std::abs(ba.y) * (std::abs(m2) + std::abs(m3)) +
                      std::abs(ba.z) * (std::abs(m4) + std::abs(m5));
  if (det > kEps * perm) return 1;
  if (det < -kEps * perm) return -1;
  return 0;
}

// +1 when e lies inside the circumsphere of the positively oriented tet abcd.
int insphere_sign(const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& d, const Vec3& e) {
  const double aex = a.x - e.x, aey = a.y - e.y, aez = a.z - e.z;
  const double bex = b.x - e.x, bey = b.y - e.y, bez = b.z - e.z;
  const double cex = c.x - e.x, cey = c.y - e.y, cez = c.z - e.z;
  const double dex = d.x - e.x, dey = d.y - e.y, dez = d.z - e.z;

  const double aexbey = aex * bey, bexaey = bex * aey;
  const double bexcey = bex * cey, cexbey = cex * bey;
  const double cexdey = cex * dey, dexcey = dex * cey;
  const double dexaey = dex * aey, aexdey = aex * dey;
  const double aexcey = aex * cey, cexaey = cex * aey;
  const double bexdey = bex * dey, dexbey = dex * bey;

  const double ab = aexbey - bexaey, bc = bexcey - cexbey, cd = cexdey - dexcey;
  const double da = dexaey - aexdey, ac = aexcey - cexaey, bd = bexdey - dexbey;

  const double abc = aez * bc - bez * ac + cez * ab;
  const double bcd = bez * cd - cez * bd + dez * bc;
  const double cda = cez * da + dez * ac + aez * cd;
  const double dab = dez * ab + aez * bd + bez * da;

  const double alift = aex * aex + aey * aey + aez * aez;
  const double blift = bex * bex + bey * bey + bez * bez;
  const double clift = cex * cex + cey * cey + cez * cez;
  const double dlift = dex * dex + dey * dey + dez * dez;

  const double det = (dlift * abc - clift * dab) + (blift * cda - alift * bcd);

  const double aezp = std::abs(aez), bezp = std::abs(bez), cezp = std::abs(cez),
               dezp = std::abs(dez);
  const double abp = std::abs(aexbey) + std::abs(bexaey);
  const double bcp = std::abs(bexcey) + std::abs(cexbey);
  const double cdp = std::abs(cexdey) + std::abs(dexcey);
  const double dap = std::abs(dexaey) + std::abs(aexdey);
  const double acp = std::abs(aexcey) + std::abs(cexaey);
  const double bdp = std::abs(bexdey) + std::abs(dexbey);
  const double perm = (cdp * bezp + bdp * cezp + bcp * dezp) * alift +
                      (dap * cezp + acp * dezp + cdp * aezp) * blift +
                      (abp * dezp + bdp * aezp + dap * bezp) * clift +
                      (bcp * aezp + acp * bezp + abp * cezp) * dlift;

  // The determinant above is negative for interior points of a tet with
  // positive orient_sign.
  if (det < -kEps * perm) return 1;
  if (det > kEps * perm) return -1;
  return 0;
}

Vec3 circumcenter(const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& d) {
  const Vec3 u = b - a, v = c - a, w = d - a;
  const double denom = 2.0 * dot(u, cross(v, w));
  const Vec3 num = norm2(u) * cross(v, w) + norm2(v) * cross(w, u) + norm2(w) * cross(u, v);
  return a + num / denom;
}

uint32_t spread_bits(uint32_t x) {
  x &= 0x3ff;
  x = (x | (x << 16)) & 0x030000ff;
  x = (x | (x << 8)) & 0x0300f00f;
  x = (x | (x << 4)) & 0x030c30c3;
  x = (x | (x << 2)) & 0x09249249;
  return x;
}

// Z-order keeps consecutive insertions spatially close so the locate walk
// stays short.
std::vector<int> spatial_order(std::span<const Vec3> points, const BoundingBox& box) {
  const Vec3 lo = box.min_corner, ext = box.extent();
  std::vector<std::pair<uint32_t, int>> keyed(points.size());
  for (size_t i = 0; i < points.size(); ++i) {
    auto q = [&](double v, double l, double e) {
      const double t = std::clamp((v - l) / e, 0.0, 1.0);
      return static_cast<uint32_t>(t * 1023.0);
    };
    const Vec3& p = points[i];
    const uint32_t key = spread_bits(q(p.x, lo.x, ext.x)) |
                         (spread_bits(q(p.y, lo.y, ext.y)) << 1) |
                         (spread_bits(q(p.z, lo.z, ext.z)) << 2);
    keyed[i] = {key, static_cast<int>(i)};
  }
  std::sort(keyed.begin(), keyed.end());
  std::vector<int> order(points.size());
  for (size_t i = 0; i < keyed.size(); ++i) order[i] = keyed[i].second;
  return order;
}

void check_sites(std::span<const Vec3> sites, const BoundingBox& box) {
  for (size_t i = 0; i < sites.size(); ++i) {
    const Vec3& p = sites[i];
    if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.z))
      throw FoamError(ErrorCode::OutOfBounds, "site " + std::to_string(i) + " is not finite");
    if (!box.contains_strictly(p))
      throw FoamError(ErrorCode::OutOfBounds, "site " + std::to_string(i) + " lies outside the box");
  }
}

// Affine hull must be 3D for four or more sites.
void check_dimension(std::span<const Vec3> sites, const BoundingBox& box) {
  if (sites.size() < 4) return;
  const double tol = 1e-12 * box.diagonal();
  const Vec3 p0 = sites[0];
  size_t i1 = 0;
  double best = 0.0;
  for (size_t i = 1; i < sites.size(); ++i) {
    const double d = norm(sites[i] - p0);
    if (d > best) best = d, i1 = i;
  }
  if (best <= tol) throw FoamError(ErrorCode::DegenerateInput, "all sites coincide");
  const Vec3 axis = normalized(sites[i1] - p0);
  size_t i2 = 0;
  best = 0.0;
  for (size_t i = 1; i < sites.size(); ++i) {
    const double d = norm(cross(sites[i] - p0, axis));
    if (d > best) best = d, i2 = i;
  }
  if (best <= tol) throw FoamError(ErrorCode::DegenerateInput, "sites are collinear");
  const Vec3 normal = normalized(cross(sites[i1] - p0, sites[i2] - p0));
  best = 0.0;
  for (size_t i = 1; i < sites.size(); ++i) best = std::max(best, std::abs(dot(sites[i] - p0, normal)));
  if (best <= tol) throw FoamError(ErrorCode::DegenerateInput, "sites are coplanar");
}

}  // namespace

BoundingBox BoundingBox::around(std::span<const Vec3> points) {
  BoundingBox b{points.empty() ? Vec3{} : points[0], points.empty() ? Vec3{} : points[0]};
  for (const Vec3& p : points) {
    b.min_corner = cwise_min(b.min_corner, p);
    b.max_corner = cwise_max(b.max_corner, p);
  }
  return b;
}

void clip_polygon(std::vector<Vec3>& polygon, const Vec3& normal, double offset,
                  std::vector<Vec3>& scratch) {
  const size_t n = polygon.size();
  if (n == 0) return;
  bool any_out = false;
  for (const Vec3& v : polygon)
    if (dot(v, normal) > offset) {
      any_out = true;
      break;
    }
  if (!any_out) return;
  scratch.clear();
  for (size_t i = 0; i < n; ++i) {
    const Vec3& cur = polygon[i];
    const Vec3& nxt = polygon[(i + 1) % n];
    const double dc = dot(cur, normal) - offset;
    const double dn = dot(nxt, normal) - offset;
    if (dc <= 0.0) scratch.push_back(cur);
    if ((dc <= 0.0) != (dn <= 0.0)) {
      const double t = dc / (dc - dn);
      scratch.push_back(cur + t * (nxt - cur));
    }
  }
  polygon.swap(scratch);
}

double polygon_area(std::span<const Vec3> polygon) {
  if (polygon.size() < 3) return 0.0;
  Vec3 acc{};
  const Vec3& o = polygon[0];
  for (size_t i = 1; i + 1 < polygon.size(); ++i) acc += cross(polygon[i] - o, polygon[i + 1] - o);
  return 0.5 * norm(acc);
}

namespace {

// Square of half-size `half` on the plane dot(x, normal) = offset, centered at
// the projection of `anchor`.
void plane_square(const Vec3& normal, double offset, const Vec3& anchor, double half,
                  std::vector<Vec3>& out) {
  const Vec3 n = normalized(normal);
  const double nn = norm(normal);
  const Vec3 center = anchor - (dot(anchor, normal) - offset) / nn * n;
  const Vec3 helper = std::abs(n.x) < 0.6 ? Vec3{1, 0, 0} : Vec3{0, 1, 0};
  const Vec3 u = normalized(cross(n, helper));
  const Vec3 v = cross(n, u);
  out.clear();
  out.push_back(center + half * (u + v));
  out.push_back(center + half * (-1.0 * u + v));
  out.push_back(center + half * (-1.0 * u - v));
  out.push_back(center + half * (u - v));
}

void clip_to_box(std::vector<Vec3>& poly, const BoundingBox& box, std::vector<Vec3>& scratch) {
  clip_polygon(poly, {1, 0, 0}, box.max_corner.x, scratch);
  clip_polygon(poly, {-1, 0, 0}, -box.min_corner.x, scratch);
  clip_polygon(poly, {0, 1, 0}, box.max_corner.y, scratch);
  clip_polygon(poly, {0, -1, 0}, -box.min_corner.y, scratch);
  clip_polygon(poly, {0, 0, 1}, box.max_corner.z, scratch);
  clip_polygon(poly, {0, 0, -1}, -box.min_corner.z, scratch);
}

}  // namespace

std::vector<Vec3> box_section(const BoundingBox& box, const Vec3& normal, double offset) {
  std::vector<Vec3> poly, scratch;
  plane_square(normal, offset, box.center(), 2.0 * box.diagonal(), poly);
  clip_to_box(poly, box, scratch);
  return poly;
}

// ---------------------------------------------------------------------------
// Triangulation: construction

Triangulation Triangulation::build(std::span<const Vec3> sites, const BoundingBox& box) {
  if (!box.valid()) throw FoamError(ErrorCode::InvalidArgument, "bounding box is empty");
  check_sites(sites, box);
  check_dimension(sites, box);

  Triangulation tri;
  tri.box_ = box;
  tri.points_.reserve(sites.size() + kAux);
  tri.init_enclosing_tet();
  tri.points_.insert(tri.points_.end(), sites.begin(), sites.end());
  tri.tets_.reserve(sites.size() * 7 + 16);
  for (int idx : spatial_order(sites, box)) tri.insert_point(idx + kAux);
  tri.rebuild_dual();
  return tri;
}

void Triangulation::insert(std::span<const Vec3> new_points) {
  check_sites(new_points, box_);
  const int first = static_cast<int>(points_.size());
  points_.insert(points_.end(), new_points.begin(), new_points.end());
  for (int idx : spatial_order(new_points, box_)) insert_point(first + idx);
  rebuild_dual();
}

void Triangulation::init_enclosing_tet() {
  const Vec3 c = box_.center();
  const double s = 30.0 * box_.diagonal();
  points_.push_back(c + s * Vec3{1, 1, 1});
  points_.push_back(c + s * Vec3{1, -1, -1});
  points_.push_back(c + s * Vec3{-1, 1, -1});
  points_.push_back(c + s * Vec3{-1, -1, 1});
  Tet t{{0, 1, 2, 3}, {-1, -1, -1, -1}};
  if (orientation(0, 1, 2, 3) < 0) std::swap(t.v[0], t.v[1]);
  tets_.clear();
  alive_.clear();
  free_.clear();
  tets_.push_back(t);
  alive_.push_back(1);
  last_tet_ = 0;
}

int Triangulation::orientation(int a, int b, int c, int d) const {
  return orient_sign(points_[static_cast<size_t>(a)], points_[static_cast<size_t>(b)],
                     points_[static_cast<size_t>(c)], points_[static_cast<size_t>(d)]);
}

// In-sphere test with symbolic perturbation: on exact (banded) ties the
// vertex with the largest index is treated as perturbed outward.
bool Triangulation::conflict(const Tet& t, int p) const {
  const auto& P = points_;
  const int s = insphere_sign(P[static_cast<size_t>(t.v[0])], P[static_cast<size_t>(t.v[1])],
                              P[static_cast<size_t>(t.v[2])], P[static_cast<size_t>(t.v[3])],
                              P[static_cast<size_t>(p)]);
  if (s != 0) return s > 0;
  std::array<int, 5> order{t.v[0], t.v[1], t.v[2], t.v[3], p};
  std::sort(order.begin(), order.end(), std::greater<>());
  for (int r = 0; r < 2; ++r) {
    const int q = order[static_cast<size_t>(r)];
    if (q == p) return false;
    int k = 0;
    while (t.v[static_cast<size_t>(k)] != q) ++k;
    std::array<int, 4> v = t.v;
    v[static_cast<size_t>(k)] = p;
    const int o = orientation(v[0], v[1], v[2], v[3]);
    if (o != 0) return o > 0;
  }
  return false;
}

int Triangulation::allocate_tet() {
  if (!free_.empty()) {
    const int t = free_.back();
    free_.pop_back();
    alive_[static_cast<size_t>(t)] = 1;
    return t;
  }
  tets_.push_back(Tet{});
  alive_.push_back(1);
  stamp_.push_back(0);
  in_cavity_.push_back(0);
  return static_cast<int>(tets_.size()) - 1;
}

int Triangulation::locate_tet(const Vec3& p) {
  int t = last_tet_;
  if (t < 0 || t >= static_cast<int>(tets_.size()) || !alive_[static_cast<size_t>(t)]) {
    t = 0;
    while (!alive_[static_cast<size_t>(t)]) ++t;
  }
  const auto& P = points_;
  const size_t limit = 4 * tets_.size() + 64;
  for (size_t step = 0; step < limit; ++step) {
    const Tet& T = tets_[static_cast<size_t>(t)];
    walk_rng_ ^= walk_rng_ << 13;
    walk_rng_ ^= walk_rng_ >> 17;
    walk_rng_ ^= walk_rng_ << 5;
    const int start = static_cast<int>(walk_rng_ & 3u);
    int next = -1;
    for (int r = 0; r < 4; ++r) {
      const int k = (start + r) & 3;
      std::array<Vec3, 4> q{P[static_cast<size_t>(T.v[0])], P[static_cast<size_t>(T.v[1])],
                            P[static_cast<size_t>(T.v[2])], P[static_cast<size_t>(T.v[3])]};
      q[static_cast<size_t>(k)] = p;
      if (orient_sign(q[0], q[1], q[2], q[3]) < 0) {
        next = T.n[static_cast<size_t>(k)];
        break;
      }
    }
    if (next < 0) return t;
    t = next;
  }
  // Walk failed to settle (near-degenerate cycle); fall back to any conflicting tet.
  for (size_t i = 0; i < tets_.size(); ++i) {
    if (!alive_[i]) continue;
    const Tet& T = tets_[i];
    const int s = insphere_sign(P[static_cast<size_t>(T.v[0])], P[static_cast<size_t>(T.v[1])],
                                P[static_cast<size_t>(T.v[2])], P[static_cast<size_t>(T.v[3])], p);
    if (s > 0) return static_cast<int>(i);
  }
  throw FoamError(ErrorCode::DegenerateInput, "point location failed");
}

void Triangulation::insert_point(int p) {
  if (stamp_.size() < tets_.size()) {
    stamp_.resize(tets_.size(), 0);
    in_cavity_.resize(tets_.size(), 0);
  }
  const Vec3& pp = points_[static_cast<size_t>(p)];
  const int t0 = locate_tet(pp);

  ++current_stamp_;
  if (current_stamp_ == 0) {
    std::fill(stamp_.begin(), stamp_.end(), 0);
    current_stamp_ = 1;
  }
  const uint32_t stamp = current_stamp_;

  std::vector<int> cavity;
  cavity.reserve(64);
  cavity.push_back(t0);
  stamp_[static_cast<size_t>(t0)] = stamp;
  in_cavity_[static_cast<size_t>(t0)] = 1;
  for (size_t c = 0; c < cavity.size(); ++c) {
    const Tet& T = tets_[static_cast<size_t>(cavity[c])];
    for (int k = 0; k < 4; ++k) {
      const int nb = T.n[static_cast<size_t>(k)];
      if (nb < 0 || stamp_[static_cast<size_t>(nb)] == stamp) continue;
      stamp_[static_cast<size_t>(nb)] = stamp;
      const bool in = conflict(tets_[static_cast<size_t>(nb)], p);
      in_cavity_[static_cast<size_t>(nb)] = in ? 1 : 0;
      if (in) cavity.push_back(nb);
    }
  }

  auto inside = [&](int t) {
    return t >= 0 && stamp_[static_cast<size_t>(t)] == stamp && in_cavity_[static_cast<size_t>(t)];
  };

  struct BoundaryFace {
    std::array<int, 4> v;
    int k;
    int outer;
    int old;
  };
  std::vector<BoundaryFace> boundary;
  for (bool star = false; !star;) {
    star = true;
    boundary.clear();
    for (size_t c = 0; c < cavity.size() && star; ++c) {
      const Tet& T = tets_[static_cast<size_t>(cavity[c])];
      for (int k = 0; k < 4; ++k) {
        const int nb = T.n[static_cast<size_t>(k)];
        if (inside(nb)) continue;
        std::array<int, 4> v = T.v;
        v[static_cast<size_t>(k)] = p;
        if (orientation(v[0], v[1], v[2], v[3]) <= 0) {
          // The cavity is not star-shaped from p; absorb the tet behind the face.
          if (nb < 0) throw FoamError(ErrorCode::DegenerateInput, "cavity escaped the enclosing tet");
          stamp_[static_cast<size_t>(nb)] = stamp;
          in_cavity_[static_cast<size_t>(nb)] = 1;
          cavity.push_back(nb);
          star = false;
          break;
        }
        boundary.push_back({v, k, nb, cavity[c]});
      }
    }
  }

  // Coincidence check against every vertex of the cavity; a coincident site
  // would otherwise end up strictly inside it and be dropped.
  const double eps_site = tolerance::kSiteRel * box_.diagonal();
  for (int c : cavity)
    for (int k = 0; k < 4; ++k) {
      const int q = tets_[static_cast<size_t>(c)].v[static_cast<size_t>(k)];
      if (q == p || q < kAux) continue;
      if (norm(points_[static_cast<size_t>(q)] - pp) <= eps_site)
        throw FoamError(ErrorCode::DuplicateSite,
                        "site " + std::to_string(p - kAux) + " coincides with site " +
                            std::to_string(q - kAux));
    }

  // New tets are allocated before the cavity slots are released so that
  // neighbor back-pointers stay unambiguous.
  std::vector<int> created(boundary.size());
  struct HalfLink {
    int64_t key;
    int tet;
    int face;
  };
  std::vector<HalfLink> links;
  links.reserve(boundary.size() * 3);
  for (size_t b = 0; b < boundary.size(); ++b) {
    const BoundaryFace& f = boundary[b];
    const int nt = allocate_tet();
    if (stamp_.size() < tets_.size()) {
      stamp_.resize(tets_.size(), 0);
      in_cavity_.resize(tets_.size(), 0);
    }
    created[b] = nt;
    Tet& T = tets_[static_cast<size_t>(nt)];
    T.v = f.v;
    T.n = {-1, -1, -1, -1};
    T.n[static_cast<size_t>(f.k)] = f.outer;
    stamp_[static_cast<size_t>(nt)] = 0;
    if (f.outer >= 0) {
      Tet& O = tets_[static_cast<size_t>(f.outer)];
      for (int m = 0; m < 4; ++m)
        if (O.n[static_cast<size_t>(m)] == f.old) {
          O.n[static_cast<size_t>(m)] = nt;
          break;
        }
    }
    for (int m = 0; m < 4; ++m) {
      if (m == f.k) continue;
      int a = -1, c = -1;
      for (int r = 0; r < 4; ++r) {
        if (r == m || r == f.k) continue;
        (a < 0 ? a : c) = f.v[static_cast<size_t>(r)];
      }
      if (a > c) std::swap(a, c);
      links.push_back({static_cast<int64_t>(a) * (int64_t{1} << 32) + c, nt, m});
    }
  }
  std::sort(links.begin(), links.end(), [](const HalfLink& x, const HalfLink& y) {
    return x.key != y.key ? x.key < y.key : x.tet < y.tet;
  });
  for (size_t i = 0; i + 1 < links.size(); i += 2) {
    if (links[i].key != links[i + 1].key)
      throw FoamError(ErrorCode::DegenerateInput, "cavity boundary is not a closed surface");
    tets_[static_cast<size_t>(links[i].tet)].n[static_cast<size_t>(links[i].face)] = links[i + 1].tet;
    tets_[static_cast<size_t>(links[i + 1].tet)].n[static_cast<size_t>(links[i + 1].face)] = links[i].tet;
  }

  for (int t : cavity) {
    alive_[static_cast<size_t>(t)] = 0;
    free_.push_back(t);
  }
  last_tet_ = created.empty() ? 0 : created.back();
}

// ---------------------------------------------------------------------------
// Dual graph

void Triangulation::rebuild_dual() {
  const int n = num_sites();
  tetrahedra_.clear();
  circumcenters_.clear();

  // Delaunay neighbor lists from every live tet, real sites only.
  std::vector<int> count(static_cast<size_t>(n) + 1, 0);
  for (size_t t = 0; t < tets_.size(); ++t) {
    if (!alive_[t]) continue;
    const Tet& T = tets_[t];
    bool real = true;
    for (int k = 0; k < 4; ++k) {
      const int v = T.v[static_cast<size_t>(k)];
      if (v < kAux) {
        real = false;
        continue;
      }
      for (int r = 0; r < 4; ++r)
        if (r != k && T.v[static_cast<size_t>(r)] >= kAux) ++count[static_cast<size_t>(v - kAux)];
    }
    if (real) {
      std::array<int, 4> s{T.v[0] - kAux, T.v[1] - kAux, T.v[2] - kAux, T.v[3] - kAux};
      tetrahedra_.push_back(s);
      circumcenters_.push_back(circumcenter(site(s[0]), site(s[1]), site(s[2]), site(s[3])));
    }
  }
  std::vector<int> start(static_cast<size_t>(n) + 1, 0);
  for (int i = 0; i < n; ++i) start[static_cast<size_t>(i) + 1] = start[static_cast<size_t>(i)] + count[static_cast<size_t>(i)];
  std::vector<int> raw(static_cast<size_t>(start[static_cast<size_t>(n)]));
  std::vector<int> fill(start.begin(), start.end() - 1);
  for (size_t t = 0; t < tets_.size(); ++t) {
    if (!alive_[t]) continue;
    const Tet& T = tets_[t];
    for (int k = 0; k < 4; ++k) {
      const int v = T.v[static_cast<size_t>(k)];
      if (v < kAux) continue;
      for (int r = 0; r < 4; ++r) {
        const int w = T.v[static_cast<size_t>(r)];
        if (r != k && w >= kAux) raw[static_cast<size_t>(fill[static_cast<size_t>(v - kAux)]++)] = w - kAux;
      }
    }
  }
  std::vector<int> dn_offsets(static_cast<size_t>(n) + 1, 0);
  std::vector<int> dn;
  dn.reserve(raw.size() / 3 + 1);
  for (int i = 0; i < n; ++i) {
    auto b = raw.begin() + start[static_cast<size_t>(i)];
    auto e = raw.begin() + start[static_cast<size_t>(i) + 1];
    std::sort(b, e);
    e = std::unique(b, e);
    dn.insert(dn.end(), b, e);
    dn_offsets[static_cast<size_t>(i) + 1] = static_cast<int>(dn.size());
  }

  // Each Voronoi face is the ring of circumcenters around its Delaunay edge.
  // Rings touching an auxiliary vertex, or with unusable circumcenters, are
  // cut out of the bisector plane by clipping instead.
  const double diag = box_.diagonal();
  const double area_eps = tolerance::kFaceAreaRel * diag * diag;
  const Vec3 mid = box_.center();
  const double far2 = 16.0 * diag * diag;
  std::vector<Vec3> cc(tets_.size());
  std::vector<uint8_t> cc_ok(tets_.size(), 0);
  for (size_t t = 0; t < tets_.size(); ++t) {
    if (!alive_[t]) continue;
    const Tet& T = tets_[t];
    if (T.v[0] < kAux || T.v[1] < kAux || T.v[2] < kAux || T.v[3] < kAux) continue;
    cc[t] = circumcenter(points_[static_cast<size_t>(T.v[0])], points_[static_cast<size_t>(T.v[1])],
                         points_[static_cast<size_t>(T.v[2])], points_[static_cast<size_t>(T.v[3])]);
    const Vec3 r = cc[t] - mid;
    cc_ok[t] = std::isfinite(r.x) && std::isfinite(r.y) && std::isfinite(r.z) && norm2(r) < far2;
  }

  struct RawFace {
    int i, j;
    double area;
    uint32_t begin, size;
  };
  std::vector<RawFace> raw_faces;
  std::vector<Vec3> raw_vertices;
  delaunay_edges_.clear();
  std::vector<Vec3> poly, scratch;
  poly.reserve(32);
  scratch.reserve(32);
  static constexpr int kEdges[6][4] = {{0, 1, 2, 3}, {0, 2, 3, 1}, {0, 3, 1, 2},
                                       {1, 2, 0, 3}, {1, 3, 2, 0}, {2, 3, 0, 1}};
  for (size_t t = 0; t < tets_.size(); ++t) {
    if (!alive_[t]) continue;
    const Tet& T = tets_[t];
    for (const auto& e : kEdges) {
      const int va = T.v[static_cast<size_t>(e[0])], vb = T.v[static_cast<size_t>(e[1])];
      if (va < kAux || vb < kAux) continue;
      int c = T.v[static_cast<size_t>(e[2])], d = T.v[static_cast<size_t>(e[3])];
      int cur = static_cast<int>(t);
      bool owner = true, usable = true;
      poly.clear();
      do {
        const Tet& C = tets_[static_cast<size_t>(cur)];
        if (!cc_ok[static_cast<size_t>(cur)]) usable = false;
        if (usable) poly.push_back(cc[static_cast<size_t>(cur)]);
        int k = 0;
        while (C.v[static_cast<size_t>(k)] != c) ++k;
        const int next = C.n[static_cast<size_t>(k)];
        const Tet& N = tets_[static_cast<size_t>(next)];
        int f = -1;
        for (int q = 0; q < 4; ++q) {
          const int w = N.v[static_cast<size_t>(q)];
          if (w != va && w != vb && w != d) f = w;
        }
        c = d;
        d = f;
        cur = next;
        if (cur < static_cast<int>(t)) owner = false;
      } while (owner && cur != static_cast<int>(t));
      if (!owner) continue;

      const int i = std::min(va, vb) - kAux, j = std::max(va, vb) - kAux;
      delaunay_edges_.push_back({i, j});
      const Vec3& pi = site(i);
      const Vec3& pj = site(j);
      if (!usable) {
        const double pi2 = norm2(pi);
        plane_square(pj - pi, 0.5 * (norm2(pj) - pi2), 0.5 * (pi + pj), 2.0 * diag, poly);
        for (int a = dn_offsets[static_cast<size_t>(i)]; a < dn_offsets[static_cast<size_t>(i) + 1] && !poly.empty(); ++a) {
          const int k = dn[static_cast<size_t>(a)];
          if (k == j) continue;
          const Vec3& pk = site(k);
          clip_polygon(poly, pk - pi, 0.5 * (norm2(pk) - pi2), scratch);
        }
        clip_to_box(poly, box_, scratch);
      } else {
        for (const Vec3& v : poly) {
          if (!box_.contains_strictly(v)) {
            clip_to_box(poly, box_, scratch);
            break;
          }
        }
      }
      const double area = polygon_area(poly);
      if (area <= area_eps) continue;
      raw_faces.push_back({i, j, area, static_cast<uint32_t>(raw_vertices.size()), static_cast<uint32_t>(poly.size())});
      raw_vertices.insert(raw_vertices.end(), poly.begin(), poly.end());
    }
  }
  std::sort(delaunay_edges_.begin(), delaunay_edges_.end());
  std::sort(raw_faces.begin(), raw_faces.end(),
            [](const RawFace& a, const RawFace& b) { return a.i != b.i ? a.i < b.i : a.j < b.j; });
  faces_.clear();
  faces_.reserve(raw_faces.size());
  polygon_vertices_.clear();
  polygon_vertices_.reserve(raw_vertices.size());
  for (const RawFace& r : raw_faces) {
    FaceEdge f;
    f.i = r.i;
    f.j = r.j;
    f.area = r.area;
    f.polygon_begin = static_cast<uint32_t>(polygon_vertices_.size());
    f.polygon_size = r.size;
    polygon_vertices_.insert(polygon_vertices_.end(), raw_vertices.begin() + r.begin,
                             raw_vertices.begin() + r.begin + r.size);
    faces_.push_back(f);
  }

  // Symmetric CSR adjacency over surviving faces.
  adj_offsets_.assign(static_cast<size_t>(n) + 1, 0);
  for (const FaceEdge& f : faces_) {
    ++adj_offsets_[static_cast<size_t>(f.i) + 1];
    ++adj_offsets_[static_cast<size_t>(f.j) + 1];
  }
  for (int i = 0; i < n; ++i) adj_offsets_[static_cast<size_t>(i) + 1] += adj_offsets_[static_cast<size_t>(i)];
  const size_t total = static_cast<size_t>(adj_offsets_[static_cast<size_t>(n)]);
  adj_neighbors_.assign(total, 0);
  adj_faces_.assign(total, 0);
  std::vector<int> cursor(adj_offsets_.begin(), adj_offsets_.end() - 1);
  for (size_t fi = 0; fi < faces_.size(); ++fi) {
    const FaceEdge& f = faces_[fi];
    // faces_ is generated in (i, j) lexicographic order, so each row fills sorted
    // for the j > i half; the i < j half is merged below.
    adj_neighbors_[static_cast<size_t>(cursor[static_cast<size_t>(f.i)])] = f.j;
    adj_faces_[static_cast<size_t>(cursor[static_cast<size_t>(f.i)]++)] = static_cast<int>(fi);
    adj_neighbors_[static_cast<size_t>(cursor[static_cast<size_t>(f.j)])] = f.i;
    adj_faces_[static_cast<size_t>(cursor[static_cast<size_t>(f.j)]++)] = static_cast<int>(fi);
  }
  std::vector<std::pair<int, int>> row;
  for (int i = 0; i < n; ++i) {
    const size_t b = static_cast<size_t>(adj_offsets_[static_cast<size_t>(i)]);
    const size_t e = static_cast<size_t>(adj_offsets_[static_cast<size_t>(i) + 1]);
    row.clear();
    for (size_t a = b; a < e; ++a) row.emplace_back(adj_neighbors_[a], adj_faces_[a]);
    std::sort(row.begin(), row.end());
    for (size_t a = b; a < e; ++a) {
      adj_neighbors_[a] = row[a - b].first;
      adj_faces_[a] = row[a - b].second;
    }
  }
  adj_normals_.resize(total);
  adj_offsets_plane_.resize(total);
  for (int i = 0; i < n; ++i) {
    const Vec3& pi = site(i);
    for (int a = adj_offsets_[static_cast<size_t>(i)]; a < adj_offsets_[static_cast<size_t>(i) + 1]; ++a) {
      const Vec3& pj = site(adj_neighbors_[static_cast<size_t>(a)]);
      adj_normals_[static_cast<size_t>(a)] = pj - pi;
      adj_offsets_plane_[static_cast<size_t>(a)] = 0.5 * (norm2(pj) - norm2(pi));
    }
  }
}

std::span<const Vec3> Triangulation::face_polygon(int face) const {
  const FaceEdge& f = faces_.at(static_cast<size_t>(face));
  return std::span<const Vec3>(polygon_vertices_).subspan(f.polygon_begin, f.polygon_size);
}

std::span<const int> Triangulation::neighbors(int i) const {
  const size_t b = static_cast<size_t>(adj_offsets_[static_cast<size_t>(i)]);
  const size_t e = static_cast<size_t>(adj_offsets_[static_cast<size_t>(i) + 1]);
  return std::span<const int>(adj_neighbors_).subspan(b, e - b);
}

std::span<const int> Triangulation::neighbor_faces(int i) const {
  const size_t b = static_cast<size_t>(adj_offsets_[static_cast<size_t>(i)]);
  const size_t e = static_cast<size_t>(adj_offsets_[static_cast<size_t>(i) + 1]);
  return std::span<const int>(adj_faces_).subspan(b, e - b);
}

std::span<const Vec3> Triangulation::neighbor_normals(int i) const {
  const size_t b = static_cast<size_t>(adj_offsets_[static_cast<size_t>(i)]);
  const size_t e = static_cast<size_t>(adj_offsets_[static_cast<size_t>(i) + 1]);
  return std::span<const Vec3>(adj_normals_).subspan(b, e - b);
}

std::span<const double> Triangulation::neighbor_offsets(int i) const {
  const size_t b = static_cast<size_t>(adj_offsets_[static_cast<size_t>(i)]);
  const size_t e = static_cast<size_t>(adj_offsets_[static_cast<size_t>(i) + 1]);
  return std::span<const double>(adj_offsets_plane_).subspan(b, e - b);
}

int Triangulation::find_face(int i, int j) const {
  if (i < 0 || j < 0 || i >= num_sites() || j >= num_sites() || i == j) return -1;
  const auto nb = neighbors(i);
  const auto it = std::lower_bound(nb.begin(), nb.end(), j);
  if (it == nb.end() || *it != j) return -1;
  return neighbor_faces(i)[static_cast<size_t>(it - nb.begin())];
}

// ---------------------------------------------------------------------------
// Free functions

Triangulation build_delaunay(std::span<const Vec3> sites, const BoundingBox& box) {
  return Triangulation::build(sites, box);
}

double face_area(const Triangulation& tri, int i, int j) {
  const int f = tri.find_face(i, j);
  if (f < 0)
    throw FoamError(ErrorCode::NotAdjacent,
                    "cells " + std::to_string(i) + " and " + std::to_string(j) + " share no face");
  return tri.faces()[static_cast<size_t>(f)].area;
}

int locate(const Triangulation& tri, const Vec3& point, int hint) {
  const int n = tri.num_sites();
  int cur = (hint >= 0 && hint < n) ? hint : 0;
  double best = norm2(point - tri.site(cur));
  for (;;) {
    int next = cur;
    double next_d = best;
    for (int j : tri.neighbors(cur)) {
      const double d = norm2(point - tri.site(j));
      if (d < next_d || (d == next_d && j < next)) {
        next = j;
        next_d = d;
      }
    }
    if (next == cur) return cur;
    cur = next;
    best = next_d;
  }
}

SiteRemoval remove_sites(const Triangulation& tri, std::span<const int> to_remove) {
  const int n = tri.num_sites();
  std::vector<uint8_t> drop(static_cast<size_t>(n), 0);
  for (int i : to_remove) {
    if (i < 0 || i >= n)
      throw FoamError(ErrorCode::InvalidArgument, "site index " + std::to_string(i) + " out of range");
    drop[static_cast<size_t>(i)] = 1;
  }
  SiteRemoval out;
  out.old_to_new.assign(static_cast<size_t>(n), -1);
  for (int i = 0; i < n; ++i) {
    if (drop[static_cast<size_t>(i)]) continue;
    out.old_to_new[static_cast<size_t>(i)] = static_cast<int>(out.sites.size());
    out.sites.push_back(tri.site(i));
  }
  if (out.sites.size() < 5)
    throw FoamError(ErrorCode::TooFewSites,
                    "only " + std::to_string(out.sites.size()) + " sites would remain");
  out.tri = Triangulation::build(out.sites, tri.box());
  return out;
}

SiteInsertion insert_sites(const Triangulation& tri, std::span<const Vec3> new_points) {
  SiteInsertion out;
  out.tri = tri;
  if (!new_points.empty()) out.tri.insert(new_points);
  out.sites.assign(out.tri.sites().begin(), out.tri.sites().end());
  return out;
}

}  // namespace semfoam
