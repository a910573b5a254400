#include "semfoam/semantics.hpp"

#include <algorithm>
#include <cmath>

#include "semfoam/error.hpp"

namespace semfoam {

void softmax(const double* logits, int k, double* probs) {
  double m = logits[0];
  for (int i = 1; i < k; ++i) m = std::max(m, logits[i]);
  double s = 0.0;
  for (int i = 0; i < k; ++i) {
    probs[i] = std::exp(logits[i] - m);
    s += probs[i];
  }
  for (int i = 0; i < k; ++i) probs[i] /= s;
}

std::vector<double> classify(const double* identity, const ClassifierHead& head) {
  std::vector<double> logits(static_cast<size_t>(head.num_classes)), p(logits.size());
  head.logits(identity, logits.data());
  softmax(logits.data(), head.num_classes, p.data());
  return p;
}

double identity_loss(std::span<const double> probs, std::span<const int> labels, int num_classes, int ignore_id) {
  double sum = 0.0;
  long count = 0;
  for (size_t p = 0; p < labels.size(); ++p) {
    const int y = labels[p];
    if (y == ignore_id) continue;
    if (y < 0 || y >= num_classes) throw FoamError(ErrorCode::InvalidArgument, "label out of range");
    sum -= std::log(probs[p * static_cast<size_t>(num_classes) + static_cast<size_t>(y)]);
    ++count;
  }
  return count ? sum / static_cast<double>(count) : 0.0;
}

double identity_loss_pixel(const ClassifierHead& head, const double* identity, int label, double count,
                           double* g_identity, double* d_weights, double* d_bias) {
  const int k = head.num_classes, dim = head.dim;
  double logits[64], p[64];
  std::vector<double> big_l, big_p;
  double* lp = logits;
  double* pp = p;
  if (k > 64) {
    big_l.resize(static_cast<size_t>(k));
    big_p.resize(static_cast<size_t>(k));
    lp = big_l.data();
    pp = big_p.data();
  }
  head.logits(identity, lp);
  // log p_y via log-sum-exp for accuracy when p_y is tiny.
  double m = lp[0];
  for (int c = 1; c < k; ++c) m = std::max(m, lp[c]);
  double s = 0.0;
  for (int c = 0; c < k; ++c) s += std::exp(lp[c] - m);
  const double loss = (m + std::log(s) - lp[label]) / count;
  softmax(lp, k, pp);
  std::fill(g_identity, g_identity + dim, 0.0);
  for (int c = 0; c < k; ++c) {
    const double g = (pp[c] - (c == label ? 1.0 : 0.0)) / count;
    d_bias[c] += g;
    const double* w = head.weights.data() + static_cast<size_t>(c) * static_cast<size_t>(dim);
    double* dw = d_weights + static_cast<size_t>(c) * static_cast<size_t>(dim);
    for (int d = 0; d < dim; ++d) {
      dw[d] += g * identity[d];
      g_identity[d] += g * w[d];
    }
  }
  return loss;
}

double tv_loss(std::span<const double> identities, int dim, int num_sites, std::span<const FaceEdge> faces,
               double clamp_min, double* grad) {
  if (num_sites <= 0) return 0.0;
  const double inv_n = 1.0 / num_sites;
  double sum = 0.0;
  for (const FaceEdge& f : faces) {
    const double a = std::max(f.area, clamp_min);
    const double* fi = identities.data() + static_cast<size_t>(f.i) * static_cast<size_t>(dim);
    const double* fj = identities.data() + static_cast<size_t>(f.j) * static_cast<size_t>(dim);
    double l1 = 0.0;
    for (int d = 0; d < dim; ++d) l1 += std::abs(fi[d] - fj[d]);
    sum += 2.0 * a * l1;
    if (!grad) continue;
    const double scale = 2.0 * a * inv_n;
    double* gi = grad + static_cast<size_t>(f.i) * static_cast<size_t>(dim);
    double* gj = grad + static_cast<size_t>(f.j) * static_cast<size_t>(dim);
    for (int d = 0; d < dim; ++d) {
      const double diff = fi[d] - fj[d];
      const double sg = diff > 0.0 ? scale : (diff < 0.0 ? -scale : 0.0);
      gi[d] += sg;
      gj[d] -= sg;
    }
  }
  return sum * inv_n;
}

double tv_loss(const FoamScene& scene, const Triangulation& tri, double clamp_min, double* grad) {
  return tv_loss(scene.identity, scene.id_dim, scene.num_sites(), tri.faces(), clamp_min, grad);
}

int argmax(const double* v, int k) {
  int best = 0;
  for (int c = 1; c < k; ++c)
    if (v[c] > v[best]) best = c;
  return best;
}

std::vector<int> cell_labels(const FoamScene& scene) {
  const int k = scene.num_classes();
  std::vector<int> labels(static_cast<size_t>(scene.num_sites()));
  std::vector<double> logits(static_cast<size_t>(k));
  for (int i = 0; i < scene.num_sites(); ++i) {
    scene.head.logits(scene.identity_of(i), logits.data());
    labels[static_cast<size_t>(i)] = argmax(logits.data(), k);
  }
  return labels;
}

}  // namespace semfoam
