#include "semfoam/editing.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <string>

#include <Eigen/Dense>

#include "semfoam/error.hpp"
#include "semfoam/semantics.hpp"

namespace semfoam {

namespace {

// Bounds of the points inflated by 20%, padded where they are flat.
BoundingBox object_box(std::span<const Vec3> points, double reference_diag) {
  BoundingBox b = BoundingBox::around(points).inflated(0.2);
  const double pad = 1e-3 * reference_diag;
  for (int a = 0; a < 3; ++a) {
    double& lo = a == 0 ? b.min_corner.x : a == 1 ? b.min_corner.y : b.min_corner.z;
    double& hi = a == 0 ? b.max_corner.x : a == 1 ? b.max_corner.y : b.max_corner.z;
    if (hi - lo < pad) {
      lo -= pad;
      hi += pad;
    }
  }
  return b;
}

int majority(const std::vector<int>& labels, const std::vector<uint8_t>& use, int num_classes) {
  std::vector<int> count(static_cast<size_t>(num_classes), 0);
  bool any = false;
  for (size_t i = 0; i < labels.size(); ++i)
    if (use[i]) {
      ++count[static_cast<size_t>(labels[i])];
      any = true;
    }
  if (!any) return -1;
  return static_cast<int>(std::max_element(count.begin(), count.end()) - count.begin());
}

double orient(const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& d) {
  return dot(b - a, cross(c - a, d - a));
}

// Fibonacci directions on the unit sphere.
std::vector<Vec3> sphere_directions(int n) {
  std::vector<Vec3> out;
  const double golden = M_PI * (3.0 - std::sqrt(5.0));
  for (int i = 0; i < n; ++i) {
    const double z = 1.0 - 2.0 * (i + 0.5) / n;
    const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    out.push_back({r * std::cos(golden * i), r * std::sin(golden * i), z});
  }
  return out;
}

// Copy with one more identity dimension, zero in every cell and head row.
FoamScene with_extra_identity_dim(const FoamScene& s) {
  FoamScene out = s;
  const int d = s.id_dim, k = s.num_classes();
  out.id_dim = d + 1;
  out.identity.assign(static_cast<size_t>(s.num_sites()) * static_cast<size_t>(d + 1), 0.0);
  for (int i = 0; i < s.num_sites(); ++i) std::copy_n(s.identity_of(i), d, out.identity_of(i));
  out.head.dim = d + 1;
  out.head.weights.assign(static_cast<size_t>(k * (d + 1)), 0.0);
  for (int r = 0; r < k; ++r)
    std::copy_n(s.head.weights.data() + r * d, d, out.head.weights.data() + r * (d + 1));
  return out;
}

}  // namespace

std::vector<int> ObjectSelection::cells() const {
  std::vector<int> all(core);
  all.insert(all.end(), shell.begin(), shell.end());
  std::sort(all.begin(), all.end());
  return all;
}

ObjectSelection select_object(const FoamScene& scene, const Triangulation& tri, int class_id,
                              double density_threshold) {
  if (class_id < 0 || class_id >= scene.num_classes())
    throw FoamError(ErrorCode::EmptyClass, "class " + std::to_string(class_id) + " is not in the head");
  if (tri.num_sites() != scene.num_sites())
    throw FoamError(ErrorCode::ShapeMismatch, "triangulation does not match the scene");
  const std::vector<int> labels = cell_labels(scene);
  ObjectSelection sel;
  sel.class_id = class_id;
  sel.density_threshold = density_threshold;
  const int n = scene.num_sites();
  std::vector<uint8_t> mark(static_cast<size_t>(n), 0);
  for (int i = 0; i < n; ++i)
    if (labels[static_cast<size_t>(i)] == class_id && scene.density(i) >= density_threshold) {
      sel.core.push_back(i);
      mark[static_cast<size_t>(i)] = 1;
    }
  for (int i : sel.core)
    for (int j : tri.neighbors(i))
      if (!mark[static_cast<size_t>(j)] && labels[static_cast<size_t>(j)] == class_id) {
        mark[static_cast<size_t>(j)] = 2;
        sel.shell.push_back(j);
      }
  std::sort(sel.shell.begin(), sel.shell.end());
  return sel;
}

Extraction extract_object(const FoamScene& scene, const Triangulation& tri, int class_id,
                          double density_threshold) {
  Extraction ex;
  ex.selection = select_object(scene, tri, class_id, density_threshold);
  if (ex.selection.core.empty())
    throw FoamError(ErrorCode::EmptyClass, "no cell of class " + std::to_string(class_id) +
                                               " reaches density " + std::to_string(density_threshold));
  FoamScene& obj = ex.object;
  obj.sh_degree = scene.sh_degree;
  obj.id_dim = scene.id_dim;
  obj.head = scene.head;
  obj.resize(0);
  std::vector<Vec3> points;
  for (int i : ex.selection.cells()) {
    obj.append_site(scene, i, scene.positions[static_cast<size_t>(i)]);
    points.push_back(scene.positions[static_cast<size_t>(i)]);
  }
  obj.box = object_box(points, scene.box.diagonal());
  return ex;
}

Removal remove_object(const FoamScene& scene, const Triangulation& tri, int class_id, double density_threshold) {
  ObjectSelection sel = select_object(scene, tri, class_id, density_threshold);
  if (sel.empty()) return Removal{{scene, tri}, std::move(sel)};
  const std::vector<int> cells = sel.cells();
  SiteRemoval removal = remove_sites(tri, cells);
  std::vector<uint8_t> keep(removal.old_to_new.size());
  for (size_t i = 0; i < keep.size(); ++i) keep[i] = removal.old_to_new[i] >= 0;
  FoamScene out = scene;
  out.compact(keep);
  return Removal{{std::move(out), std::move(removal.tri)}, std::move(sel)};
}

SimilarityTransform SimilarityTransform::from_rows(std::span<const double> rows, double scale) {
  if (rows.size() != 12) throw FoamError(ErrorCode::InvalidArgument, "transform needs 12 numbers");
  if (!(scale > 0.0) || !std::isfinite(scale)) throw FoamError(ErrorCode::InvalidArgument, "scale must be positive");
  SimilarityTransform t;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) t.rotation(r, c) = rows[static_cast<size_t>(r * 4 + c)];
  t.translation = {rows[3], rows[7], rows[11]};
  t.scale = scale;
  const Mat3 g = t.rotation.transposed() * t.rotation;
  double err = 0.0;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) err = std::max(err, std::abs(g(r, c) - (r == c ? 1.0 : 0.0)));
  const double det = dot(t.rotation.row(0), cross(t.rotation.row(1), t.rotation.row(2)));
  if (!(err <= 1e-6) || !(det > 0.0))
    throw FoamError(ErrorCode::InvalidArgument, "the 3x3 part is not a rotation");
  return t;
}

std::vector<double> sh_rotation_matrix(int degree, const Mat3& rotation) {
  const int nb = sh_basis_count(degree);
  std::vector<double> out(static_cast<size_t>(nb * nb), 0.0);
  out[0] = 1.0;
  if (degree == 0) return out;
  const std::vector<Vec3> dirs = sphere_directions(64);
  const Mat3 rt = rotation.transposed();
  std::vector<double> y(static_cast<size_t>(nb)), yr(static_cast<size_t>(nb));
  const int n = static_cast<int>(dirs.size());
  Eigen::MatrixXd a_all(n, nb), b_all(n, nb);
  for (int k = 0; k < n; ++k) {
    sh_basis(degree, dirs[static_cast<size_t>(k)], y.data());
    sh_basis(degree, rt * dirs[static_cast<size_t>(k)], yr.data());
    for (int m = 0; m < nb; ++m) {
      a_all(k, m) = y[static_cast<size_t>(m)];
      b_all(k, m) = yr[static_cast<size_t>(m)];
    }
  }
  for (int l = 1; l <= degree; ++l) {
    const int first = l * l, width = 2 * l + 1;
    const Eigen::MatrixXd a = a_all.middleCols(first, width);
    const Eigen::MatrixXd b = b_all.middleCols(first, width);
    const Eigen::MatrixXd m = a.colPivHouseholderQr().solve(b);
    for (int r = 0; r < width; ++r)
      for (int c = 0; c < width; ++c)
        out[static_cast<size_t>((first + r) * nb + first + c)] = m(r, c);
  }
  return out;
}

std::vector<int> object_pieces(const FoamScene& object, const Triangulation& tri, int class_id,
                               double density_threshold) {
  const int n = object.num_sites();
  const std::vector<int> labels = cell_labels(object);
  std::vector<uint8_t> dense(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i)
    dense[static_cast<size_t>(i)] = labels[static_cast<size_t>(i)] == class_id && object.density(i) >= density_threshold;

  std::vector<int> parent(static_cast<size_t>(n));
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](int x) {
    while (parent[static_cast<size_t>(x)] != x) x = parent[static_cast<size_t>(x)] = parent[static_cast<size_t>(parent[static_cast<size_t>(x)])];
    return x;
  };
  for (const FaceEdge& f : tri.faces())
    if (dense[static_cast<size_t>(f.i)] && dense[static_cast<size_t>(f.j)]) {
      const int a = find(f.i), b = find(f.j);
      if (a != b) parent[static_cast<size_t>(std::max(a, b))] = std::min(a, b);
    }

  std::vector<int> piece(static_cast<size_t>(n), -1);
  std::vector<int> root_piece(static_cast<size_t>(n), -1);
  int pieces = 0;
  for (int i = 0; i < n; ++i) {
    if (!dense[static_cast<size_t>(i)]) continue;
    int& rp = root_piece[static_cast<size_t>(find(i))];
    if (rp < 0) rp = pieces++;
    piece[static_cast<size_t>(i)] = rp;
  }
  if (pieces == 0) return std::vector<int>(static_cast<size_t>(n), 0);
  for (int i = 0; i < n; ++i) {
    if (dense[static_cast<size_t>(i)]) continue;
    for (int j : tri.neighbors(i))
      if (dense[static_cast<size_t>(j)]) {
        piece[static_cast<size_t>(i)] = piece[static_cast<size_t>(j)];
        break;
      }
    if (piece[static_cast<size_t>(i)] >= 0) continue;
    double best = std::numeric_limits<double>::infinity();
    for (int j = 0; j < n; ++j) {
      if (!dense[static_cast<size_t>(j)]) continue;
      const double d = norm2(object.positions[static_cast<size_t>(i)] - object.positions[static_cast<size_t>(j)]);
      if (d < best) {
        best = d;
        piece[static_cast<size_t>(i)] = piece[static_cast<size_t>(j)];
      }
    }
  }
  return piece;
}

std::vector<uint8_t> inside_convex_hull(std::span<const Vec3> hull_points, std::span<const Vec3> points) {
  std::vector<uint8_t> inside(points.size(), 0);
  if (hull_points.size() < 4) return inside;
  const BoundingBox hb = BoundingBox::around(hull_points);
  const double diag = hb.diagonal();
  if (!(diag > 0.0)) return inside;
  std::optional<Triangulation> tri;
  try {
    tri = build_delaunay(hull_points, object_box(hull_points, diag));
  } catch (const FoamError& e) {
    if (e.code() == ErrorCode::DegenerateInput) return inside;
    throw;
  }
  // The union of the Delaunay tetrahedra is the hull.
  const auto tets = tri->tetrahedra();
  std::vector<BoundingBox> tet_box(tets.size());
  for (size_t t = 0; t < tets.size(); ++t) {
    const Vec3* v[4];
    for (int k = 0; k < 4; ++k) v[k] = &tri->site(tets[t][static_cast<size_t>(k)]);
    tet_box[t] = {cwise_min(cwise_min(*v[0], *v[1]), cwise_min(*v[2], *v[3])),
                  cwise_max(cwise_max(*v[0], *v[1]), cwise_max(*v[2], *v[3]))};
  }
  const double slack = 1e-12 * diag;
  const double vol_slack = 1e-12 * diag * diag * diag;
  auto in_box = [&](const BoundingBox& b, const Vec3& p) {
    return p.x >= b.min_corner.x - slack && p.y >= b.min_corner.y - slack && p.z >= b.min_corner.z - slack &&
           p.x <= b.max_corner.x + slack && p.y <= b.max_corner.y + slack && p.z <= b.max_corner.z + slack;
  };
  for (size_t q = 0; q < points.size(); ++q) {
    const Vec3& p = points[q];
    if (!in_box(hb, p)) continue;
    for (size_t t = 0; t < tets.size() && !inside[q]; ++t) {
      if (!in_box(tet_box[t], p)) continue;
      const Vec3& a = tri->site(tets[t][0]);
      const Vec3& b = tri->site(tets[t][1]);
      const Vec3& c = tri->site(tets[t][2]);
      const Vec3& d = tri->site(tets[t][3]);
      inside[q] = orient(p, b, c, d) >= -vol_slack && orient(a, p, c, d) >= -vol_slack &&
                  orient(a, b, p, d) >= -vol_slack && orient(a, b, c, p) >= -vol_slack;
    }
  }
  return inside;
}

Insertion insert_object(const FoamScene& host, const Triangulation& tri, const FoamScene& object,
                        const SimilarityTransform& transform, double density_threshold) {
  if (tri.num_sites() != host.num_sites())
    throw FoamError(ErrorCode::ShapeMismatch, "triangulation does not match the scene");
  if (object.num_sites() == 0) return Insertion{{host, tri}};
  if (object.sh_degree != host.sh_degree || object.id_dim != host.id_dim)
    throw FoamError(ErrorCode::ShapeMismatch, "object SH degree or identity size differs from the host");

  const int m = object.num_sites();
  std::vector<Vec3> placed(static_cast<size_t>(m));
  for (int i = 0; i < m; ++i) {
    placed[static_cast<size_t>(i)] = transform.apply(object.positions[static_cast<size_t>(i)]);
    if (!host.box.contains_strictly(placed[static_cast<size_t>(i)]))
      throw FoamError(ErrorCode::OutOfBounds, "transformed object site " + std::to_string(i) + " leaves the host box");
  }

  Insertion out;
  const std::vector<int> obj_labels = cell_labels(object);
  std::vector<uint8_t> dense(static_cast<size_t>(m));
  for (int i = 0; i < m; ++i) dense[static_cast<size_t>(i)] = object.density(i) >= density_threshold;
  out.source_class = majority(obj_labels, dense, object.num_classes());
  if (out.source_class < 0)
    out.source_class = majority(obj_labels, std::vector<uint8_t>(static_cast<size_t>(m), 1), object.num_classes());

  // Occupied region: one convex hull per connected piece.
  const Triangulation obj_tri = build_delaunay(object.positions, object_box(object.positions, host.box.diagonal()));
  const std::vector<int> piece = object_pieces(object, obj_tri, out.source_class, density_threshold);
  const int num_pieces = *std::max_element(piece.begin(), piece.end()) + 1;
  std::vector<uint8_t> doomed(static_cast<size_t>(host.num_sites()), 0);
  for (int p = 0; p < num_pieces; ++p) {
    std::vector<Vec3> hull;
    for (int i = 0; i < m; ++i)
      if (piece[static_cast<size_t>(i)] == p) hull.push_back(placed[static_cast<size_t>(i)]);
    const std::vector<uint8_t> in = inside_convex_hull(hull, host.positions);
    for (size_t h = 0; h < in.size(); ++h) doomed[h] |= in[h];
  }
  std::vector<int> to_remove;
  for (int h = 0; h < host.num_sites(); ++h)
    if (doomed[static_cast<size_t>(h)]) to_remove.push_back(h);
  out.deleted = static_cast<int>(to_remove.size());

  FoamScene scene = host;
  Triangulation base = tri;
  if (!to_remove.empty()) {
    SiteRemoval removal = remove_sites(tri, to_remove);
    std::vector<uint8_t> keep(doomed.size());
    for (size_t i = 0; i < keep.size(); ++i) keep[i] = !doomed[i];
    scene.compact(keep);
    base = std::move(removal.tri);
  }

  bool collision = out.source_class >= scene.num_classes();
  if (!collision) {
    const std::vector<int> host_labels = cell_labels(scene);
    for (int h = 0; h < scene.num_sites() && !collision; ++h)
      collision = host_labels[static_cast<size_t>(h)] == out.source_class && scene.density(h) >= density_threshold;
  }
  out.class_id = out.source_class;

  // Fresh class: row u with W u = 0 for the existing rows, so host logits
  // of the old classes are untouched; the bias keeps every host cell below
  // its current best class and the inserted identities move along u until
  // they clear it. Without a free direction the identity grows by one
  // dimension that nothing reads yet.
  FoamScene padded;
  const FoamScene* source = &object;
  std::vector<double> shift;
  if (collision) {
    const int k = scene.num_classes();
    int d = scene.id_dim;
    Eigen::VectorXd u;
    if (k < d) {
      Eigen::MatrixXd w(k, d);
      for (int r = 0; r < k; ++r)
        for (int c = 0; c < d; ++c) w(r, c) = scene.head.weights[static_cast<size_t>(r * d + c)];
      Eigen::JacobiSVD<Eigen::MatrixXd> svd(w, Eigen::ComputeFullV);
      u = svd.matrixV().col(d - 1);
      if ((w * u).norm() > 1e-9 * (1.0 + w.norm())) u.resize(0);
    }
    if (u.size() == 0) {
      scene = with_extra_identity_dim(scene);
      padded = with_extra_identity_dim(object);
      source = &padded;
      ++d;
      u = Eigen::VectorXd::Unit(d, d - 1);
    }

    constexpr double kMargin = 2.0;
    std::vector<double> logits(static_cast<size_t>(k));
    auto project = [&](const double* f) {
      double s = 0.0;
      for (int c = 0; c < d; ++c) s += u(c) * f[c];
      return s;
    };
    auto best_logit = [&](const FoamScene& sc, const double* f) {
      sc.head.logits(f, logits.data());
      return *std::max_element(logits.begin(), logits.end());
    };
    double bias = std::numeric_limits<double>::infinity();
    for (int h = 0; h < scene.num_sites(); ++h)
      bias = std::min(bias, best_logit(scene, scene.identity_of(h)) - project(scene.identity_of(h)));
    bias -= kMargin;
    double gamma = 0.0;
    for (int i = 0; i < m; ++i)
      gamma = std::max(gamma, best_logit(scene, source->identity_of(i)) - project(source->identity_of(i)) - bias + kMargin);

    for (int c = 0; c < d; ++c) scene.head.weights.push_back(u(c));
    scene.head.bias.push_back(bias);
    scene.head.num_classes = k + 1;
    out.class_id = k;
    out.remapped = true;
    shift.resize(static_cast<size_t>(d));
    for (int c = 0; c < d; ++c) shift[static_cast<size_t>(c)] = gamma * u(c);
  }

  SiteInsertion ins = insert_sites(base, placed);
  const std::vector<double> rot = sh_rotation_matrix(scene.sh_degree, transform.rotation);
  const int nb = scene.sh_basis();
  std::vector<double> rotated(static_cast<size_t>(3 * nb));
  for (int i = 0; i < m; ++i) {
    scene.append_site(*source, i, placed[static_cast<size_t>(i)]);
    const int s = scene.num_sites() - 1;
    if (transform.scale != 1.0)
      scene.density_raw[static_cast<size_t>(s)] = softplus_inverse(object.density(i) / transform.scale);
    double* sh = scene.sh_of(s);
    for (int r = 0; r < nb; ++r)
      for (int ch = 0; ch < 3; ++ch) {
        double acc = 0.0;
        for (int c = 0; c < nb; ++c) acc += rot[static_cast<size_t>(r * nb + c)] * sh[c * 3 + ch];
        rotated[static_cast<size_t>(r * 3 + ch)] = acc;
      }
    std::copy(rotated.begin(), rotated.end(), sh);
    if (!shift.empty()) {
      double* f = scene.identity_of(s);
      for (int c = 0; c < scene.id_dim; ++c) f[c] += shift[static_cast<size_t>(c)];
    }
  }
  out.inserted = m;
  out.scene = std::move(scene);
  out.tri = std::move(ins.tri);
  return out;
}

}  // namespace semfoam
