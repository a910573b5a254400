#pragma once

#include <random>

#include "oracles.hpp"
#include "semfoam/scene.hpp"

namespace fixture {

/// Scene with random sites in the unit box and random parameters.
inline semfoam::FoamScene random_scene(std::mt19937_64& rng, int n, int sh_degree, int id_dim, int classes,
                                       double density_scale = 3.0) {
  semfoam::FoamScene s;
  s.box = semfoam::BoundingBox{{0, 0, 0}, {1, 1, 1}};
  s.sh_degree = sh_degree;
  s.id_dim = id_dim;
  s.positions = oracle::random_sites(rng, n, s.box, 0.02);
  s.resize(n);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::normal_distribution<double> g(0.0, 1.0);
  for (auto& r : s.density_raw) r = semfoam::softplus_inverse(density_scale * (0.05 + std::abs(u(rng))));
  for (auto& c : s.sh) c = 0.3 * u(rng);
  for (auto& f : s.identity) f = g(rng);
  s.head = semfoam::ClassifierHead::zeros(classes, id_dim);
  for (auto& w : s.head.weights) w = 0.5 * g(rng);
  for (auto& b : s.head.bias) b = 0.1 * g(rng);
  return s;
}

}  // namespace fixture
