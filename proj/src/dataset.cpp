#include "semfoam/dataset.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "semfoam/error.hpp"
#include "semfoam/image_io.hpp"

namespace semfoam {

namespace fs = std::filesystem;

std::string to_string(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "train";
}

Split parse_split(const std::string& s) {
  if (s == "train") return Split::Train;
  if (s == "val") return Split::Val;
  if (s == "test") return Split::Test;
  throw FoamError(ErrorCode::InvalidArgument, "unknown split '" + s + "'");
}

std::vector<int> Dataset::indices(Split s) const {
  std::vector<int> out;
  for (size_t i = 0; i < views.size(); ++i)
    if (views[i].split == s) out.push_back(static_cast<int>(i));
  return out;
}

void Dataset::validate() const {
  if (num_classes < 1) throw FoamError(ErrorCode::ShapeMismatch, "dataset needs at least one class");
  for (const View& v : views) {
    const size_t np = static_cast<size_t>(v.camera.width) * static_cast<size_t>(v.camera.height);
    if (v.rgb.size() != 3 * np) throw FoamError(ErrorCode::ShapeMismatch, v.name + ": image size mismatch");
    if (v.labels.size() != np) throw FoamError(ErrorCode::ShapeMismatch, v.name + ": mask size mismatch");
    for (int l : v.labels)
      if (l < 0 || l > ignore_id()) throw FoamError(ErrorCode::ShapeMismatch, v.name + ": label out of range");
  }
}

std::string format_camera(const std::string& name, const Camera& c) {
  std::ostringstream os;
  os.precision(17);
  os << name << ' ' << c.width << ' ' << c.height << ' ' << c.fx << ' ' << c.fy << ' ' << c.cx << ' ' << c.cy;
  for (double r : c.rotation.m) os << ' ' << r;
  os << ' ' << c.translation.x << ' ' << c.translation.y << ' ' << c.translation.z;
  return os.str();
}

std::pair<std::string, Camera> parse_camera(const std::string& line) {
  std::istringstream is(line);
  std::string name;
  Camera c;
  is >> name >> c.width >> c.height >> c.fx >> c.fy >> c.cx >> c.cy;
  for (double& r : c.rotation.m) is >> r;
  is >> c.translation.x >> c.translation.y >> c.translation.z;
  if (!is) throw FoamError(ErrorCode::Io, "malformed camera line: " + line);
  c.validate();
  return {name, c};
}

void save_dataset(const std::string& dir, const Dataset& ds) {
  ds.validate();
  fs::create_directories(fs::path(dir) / "images");
  fs::create_directories(fs::path(dir) / "masks");
  std::ofstream cams(fs::path(dir) / "cameras.txt"), split(fs::path(dir) / "split.txt"),
      classes(fs::path(dir) / "classes.txt");
  if (!cams || !split || !classes) throw FoamError(ErrorCode::Io, "cannot write dataset in " + dir);
  for (const auto& name : ds.class_names) classes << name << '\n';
  for (const View& v : ds.views) {
    cams << format_camera(v.name, v.camera) << '\n';
    split << v.name << ' ' << to_string(v.split) << '\n';
    const size_t np = v.labels.size();
    Image8 rgb{v.camera.width, v.camera.height, 3, std::vector<uint8_t>(3 * np)};
    for (size_t k = 0; k < 3 * np; ++k) rgb.data[k] = quantize(v.rgb[k]);
    write_ppm((fs::path(dir) / "images" / (v.name + ".ppm")).string(), rgb);
    Image8 mask{v.camera.width, v.camera.height, 1, std::vector<uint8_t>(np)};
    for (size_t k = 0; k < np; ++k)
      mask.data[k] = v.labels[k] == ds.ignore_id() ? 255 : static_cast<uint8_t>(v.labels[k]);
    write_pgm((fs::path(dir) / "masks" / (v.name + ".pgm")).string(), mask);
  }
  if (ds.bounds) {
    std::ofstream b(fs::path(dir) / "bounds.txt");
    b.precision(17);
    const BoundingBox& bb = *ds.bounds;
    b << bb.min_corner.x << ' ' << bb.min_corner.y << ' ' << bb.min_corner.z << ' ' << bb.max_corner.x << ' '
      << bb.max_corner.y << ' ' << bb.max_corner.z << '\n';
  }
}

Dataset load_dataset(const std::string& dir) {
  const fs::path root(dir);
  if (!fs::is_directory(root)) throw FoamError(ErrorCode::Io, "dataset directory not found: " + dir);
  Dataset ds;
  {
    std::ifstream classes(root / "classes.txt");
    if (!classes) throw FoamError(ErrorCode::Io, "missing classes.txt in " + dir);
    std::string line;
    while (std::getline(classes, line)) {
      if (line.empty()) continue;
      if (line == "background") ds.background_class = static_cast<int>(ds.class_names.size());
      ds.class_names.push_back(line);
    }
    ds.num_classes = static_cast<int>(ds.class_names.size());
  }
  std::map<std::string, Split> splits;
  {
    std::ifstream split(root / "split.txt");
    if (!split) throw FoamError(ErrorCode::Io, "missing split.txt in " + dir);
    std::string name, s;
    while (split >> name >> s) splits[name] = parse_split(s);
  }
  std::ifstream cams(root / "cameras.txt");
  if (!cams) throw FoamError(ErrorCode::Io, "missing cameras.txt in " + dir);
  std::string line;
  while (std::getline(cams, line)) {
    if (line.empty() || line[0] == '#') continue;
    auto [name, cam] = parse_camera(line);
    View v;
    v.name = name;
    v.camera = cam;
    auto it = splits.find(name);
    v.split = it == splits.end() ? Split::Train : it->second;
    const Image8 rgb = read_ppm((root / "images" / (name + ".ppm")).string());
    const Image8 mask = read_pgm((root / "masks" / (name + ".pgm")).string());
    if (rgb.width != cam.width || rgb.height != cam.height || mask.width != cam.width || mask.height != cam.height)
      throw FoamError(ErrorCode::ShapeMismatch, name + ": image size does not match camera");
    v.rgb.resize(rgb.data.size());
    for (size_t k = 0; k < rgb.data.size(); ++k) v.rgb[k] = rgb.data[k] / 255.0;
    v.labels.resize(mask.data.size());
    for (size_t k = 0; k < mask.data.size(); ++k) {
      const int l = mask.data[k];
      v.labels[k] = l == 255 ? ds.ignore_id() : l;
    }
    ds.views.push_back(std::move(v));
  }
  std::ifstream b(root / "bounds.txt");
  if (b) {
    BoundingBox bb;
    b >> bb.min_corner.x >> bb.min_corner.y >> bb.min_corner.z >> bb.max_corner.x >> bb.max_corner.y >>
        bb.max_corner.z;
    if (!b || !bb.valid()) throw FoamError(ErrorCode::Io, "malformed bounds.txt");
    ds.bounds = bb;
  }
  ds.validate();
  return ds;
}

}  // namespace semfoam
