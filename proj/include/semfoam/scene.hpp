#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "semfoam/geometry.hpp"
#include "semfoam/sh.hpp"
#include "semfoam/vec3.hpp"

namespace semfoam {

/// Linear layer from identity features to class logits: logits = W f + b,
/// W stored row-major as K x D.
struct ClassifierHead {
  int num_classes = 0;
  int dim = 0;
  std::vector<double> weights;
  std::vector<double> bias;

  static ClassifierHead zeros(int num_classes, int dim);
  void logits(const double* f, double* out) const;
};

inline double softplus(double s) { return s > 30.0 ? s : std::log1p(std::exp(s)); }
inline double softplus_grad(double s) { return 1.0 / (1.0 + std::exp(-s)); }
/// Raw parameter whose softplus equals sigma (sigma > 0).
inline double softplus_inverse(double sigma) { return sigma > 30.0 ? sigma : std::log(std::expm1(sigma)); }

/// The trainable model. Per-site arrays are indexed by site; SH coefficients
/// are laid out as sh[(site * B + k) * 3 + channel] with B = (L + 1)^2.
struct FoamScene {
  BoundingBox box;
  int sh_degree = 0;
  int id_dim = 16;
  std::vector<Vec3> positions;
  std::vector<double> density_raw;
  std::vector<double> sh;
  std::vector<double> identity;
  ClassifierHead head;

  int num_sites() const { return static_cast<int>(positions.size()); }
  int num_classes() const { return head.num_classes; }
  int sh_basis() const { return sh_basis_count(sh_degree); }
  int sh_stride() const { return 3 * sh_basis(); }

  double density(int i) const { return softplus(density_raw[static_cast<size_t>(i)]); }
  const double* sh_of(int i) const { return sh.data() + static_cast<size_t>(i) * sh_stride(); }
  double* sh_of(int i) { return sh.data() + static_cast<size_t>(i) * sh_stride(); }
  const double* identity_of(int i) const { return identity.data() + static_cast<size_t>(i) * id_dim; }
  double* identity_of(int i) { return identity.data() + static_cast<size_t>(i) * id_dim; }

  /// Allocates per-site arrays for n sites (zero-filled).
  void resize(int n);
  /// Appends site `src` of `from` (all parameters) at position p.
  void append_site(const FoamScene& from, int src, const Vec3& p);
  /// Keeps only the sites with keep[i] != 0, preserving order.
  void compact(const std::vector<uint8_t>& keep);

  /// Throws ShapeMismatch when array lengths disagree.
  void validate() const;
  /// FNV-1a over the raw bytes of every parameter array.
  uint64_t hash() const;
};

}  // namespace semfoam
