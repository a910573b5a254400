#pragma once

#include <array>

#include "semfoam/vec3.hpp"

namespace semfoam {

inline constexpr int kMaxShDegree = 3;
inline constexpr int kMaxShBasis = (kMaxShDegree + 1) * (kMaxShDegree + 1);
/// Degree-0 basis constant, 1 / (2 sqrt(pi)).
inline constexpr double kShC0 = 0.28209479177387814;

constexpr int sh_basis_count(int degree) { return (degree + 1) * (degree + 1); }

/// Real spherical-harmonics basis up to `degree` at unit direction d, in the
/// ordering and normalization common to radiance-field codebases.
void sh_basis(int degree, const Vec3& d, double* out);

/// Radiance from SH coefficients laid out as coeffs[k * 3 + channel]:
/// rgb = sum_k basis_k * coeffs_k + 0.5, clamped at 0. `clamped[c]` reports
/// which channels hit the clamp (their gradient is zero).
void sh_color(int degree, const double* basis, const double* coeffs, double* rgb, bool* clamped);

}  // namespace semfoam
