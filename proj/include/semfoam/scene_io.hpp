#pragma once

#include <string>
#include <vector>

#include "semfoam/scene.hpp"

namespace semfoam {

/// Scene file: the line `FOAM1`, a text header
///   sites N / sh_degree L / id_dim D / classes K /
///   bbox xmin ymin zmin xmax ymax zmax / data
/// one entry per line, then little-endian float64 arrays in order: positions
/// (3N), raw density (N), SH (3 (L+1)^2 N), identity (D N), head weights
/// (K D), head bias (K). Throws BadMagic, VersionMismatch, Truncated or Io.
void save_scene(const std::string& path, const FoamScene& scene);
FoamScene load_scene(const std::string& path);

/// Same content as an in-memory byte string.
std::string serialize_scene(const FoamScene& scene);
FoamScene deserialize_scene(const std::string& bytes);

/// Raw float64 array file with a short header (`FOAMOPT1`, then `count n`,
/// `step t`, `data`), used for optimizer moments next to a checkpoint.
void save_array_file(const std::string& path, long step, const std::vector<double>& values);
std::vector<double> load_array_file(const std::string& path, long* step);

}  // namespace semfoam
