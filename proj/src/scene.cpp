#include "semfoam/scene.hpp"

#include <algorithm>
#include <cstring>
#include <string>

#include "semfoam/error.hpp"

namespace semfoam {

ClassifierHead ClassifierHead::zeros(int num_classes, int dim) {
  ClassifierHead h;
  h.num_classes = num_classes;
  h.dim = dim;
  h.weights.assign(static_cast<size_t>(num_classes) * static_cast<size_t>(dim), 0.0);
  h.bias.assign(static_cast<size_t>(num_classes), 0.0);
  return h;
}

void ClassifierHead::logits(const double* f, double* out) const {
  for (int k = 0; k < num_classes; ++k) {
    const double* w = weights.data() + static_cast<size_t>(k) * static_cast<size_t>(dim);
    double s = bias[static_cast<size_t>(k)];
    for (int d = 0; d < dim; ++d) s += w[d] * f[d];
    out[k] = s;
  }
}

void FoamScene::resize(int n) {
  const auto un = static_cast<size_t>(n);
  positions.resize(un);
  density_raw.resize(un, 0.0);
  sh.resize(un * static_cast<size_t>(sh_stride()), 0.0);
  identity.resize(un * static_cast<size_t>(id_dim), 0.0);
}

void FoamScene::append_site(const FoamScene& from, int src, const Vec3& p) {
  // `from` may be this scene, so read the source only after each resize.
  const size_t sb = static_cast<size_t>(sh_stride()), db = static_cast<size_t>(id_dim);
  const double sigma_raw = from.density_raw[static_cast<size_t>(src)];
  positions.push_back(p);
  density_raw.push_back(sigma_raw);
  sh.resize(sh.size() + sb);
  std::copy_n(from.sh_of(src), sb, sh.end() - static_cast<std::ptrdiff_t>(sb));
  identity.resize(identity.size() + db);
  std::copy_n(from.identity_of(src), db, identity.end() - static_cast<std::ptrdiff_t>(db));
}

void FoamScene::compact(const std::vector<uint8_t>& keep) {
  const int n = num_sites();
  const size_t sb = static_cast<size_t>(sh_stride()), db = static_cast<size_t>(id_dim);
  size_t w = 0;
  for (int i = 0; i < n; ++i) {
    if (!keep[static_cast<size_t>(i)]) continue;
    const auto ui = static_cast<size_t>(i);
    positions[w] = positions[ui];
    density_raw[w] = density_raw[ui];
    std::memmove(sh.data() + w * sb, sh.data() + ui * sb, sb * sizeof(double));
    std::memmove(identity.data() + w * db, identity.data() + ui * db, db * sizeof(double));
    ++w;
  }
  positions.resize(w);
  density_raw.resize(w);
  sh.resize(w * sb);
  identity.resize(w * db);
}

void FoamScene::validate() const {
  const auto n = static_cast<size_t>(num_sites());
  auto fail = [](const std::string& what) { throw FoamError(ErrorCode::ShapeMismatch, what); };
  if (sh_degree < 0 || sh_degree > kMaxShDegree) fail("sh_degree out of range");
  if (id_dim <= 0) fail("id_dim must be positive");
  if (density_raw.size() != n) fail("density array length");
  if (sh.size() != n * static_cast<size_t>(sh_stride())) fail("sh array length");
  if (identity.size() != n * static_cast<size_t>(id_dim)) fail("identity array length");
  if (head.dim != id_dim) fail("classifier head dimension");
  if (head.weights.size() != static_cast<size_t>(head.num_classes) * static_cast<size_t>(head.dim) ||
      head.bias.size() != static_cast<size_t>(head.num_classes))
    fail("classifier head array length");
}

namespace {
void fnv(uint64_t& h, const void* data, size_t bytes) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (size_t k = 0; k < bytes; ++k) {
    h ^= p[k];
    h *= 1099511628211ull;
  }
}
}  // namespace

uint64_t FoamScene::hash() const {
  uint64_t h = 1469598103934665603ull;
  fnv(h, positions.data(), positions.size() * sizeof(Vec3));
  fnv(h, density_raw.data(), density_raw.size() * sizeof(double));
  fnv(h, sh.data(), sh.size() * sizeof(double));
  fnv(h, identity.data(), identity.size() * sizeof(double));
  fnv(h, head.weights.data(), head.weights.size() * sizeof(double));
  fnv(h, head.bias.data(), head.bias.size() * sizeof(double));
  return h;
}

}  // namespace semfoam
