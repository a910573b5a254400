#pragma once

#include <span>
#include <vector>

#include "semfoam/geometry.hpp"
#include "semfoam/scene.hpp"

namespace semfoam {

/// Max-subtracted softmax of k logits.
void softmax(const double* logits, int k, double* probs);

/// Class probabilities for one identity vector.
std::vector<double> classify(const double* identity, const ClassifierHead& head);

/// Mean cross-entropy over pixels whose label is not `ignore_id`.
/// probs holds num_classes values per pixel. Returns 0 when every pixel is
/// ignored.
double identity_loss(std::span<const double> probs, std::span<const int> labels, int num_classes, int ignore_id);

/// Cross-entropy of one pixel with label y, divided by `count`. Writes the
/// adjoint with respect to the rendered identity into g_identity and
/// accumulates head gradients into d_weights / d_bias. Returns the scaled loss.
double identity_loss_pixel(const ClassifierHead& head, const double* identity, int label, double count,
                           double* g_identity, double* d_weights, double* d_bias);

/// Face-area-weighted L1 total variation over the adjacency graph:
/// (1 / N) * sum over faces of 2 * |f_i - f_j|_1 * max(A_ij, clamp_min).
/// When `grad` is non-null the adjoint (areas held constant, zero
/// subgradient at ties) is accumulated into it.
double tv_loss(std::span<const double> identities, int dim, int num_sites, std::span<const FaceEdge> faces,
               double clamp_min, double* grad);
double tv_loss(const FoamScene& scene, const Triangulation& tri, double clamp_min, double* grad);

/// argmax class per cell, lowest id on ties.
std::vector<int> cell_labels(const FoamScene& scene);

/// argmax of a logit or probability vector, lowest index on ties.
int argmax(const double* v, int k);

}  // namespace semfoam
