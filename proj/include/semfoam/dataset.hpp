#pragma once

#include <optional>
#include <string>
#include <vector>

#include "semfoam/camera.hpp"
#include "semfoam/geometry.hpp"

namespace semfoam {

enum class Split { Train, Val, Test };

std::string to_string(Split s);
Split parse_split(const std::string& s);

/// One posed view with its RGB image (in [0, 1]) and per-pixel class ids.
struct View {
  std::string name;
  Camera camera;
  Split split = Split::Train;
  std::vector<double> rgb;  // 3 per pixel
  std::vector<int> labels;  // class id, or the dataset's ignore id
};

struct Dataset {
  int num_classes = 0;
  std::vector<std::string> class_names;
  /// Class assigned to pixels whose rays hit nothing, or -1 if such pixels
  /// are ignored.
  int background_class = -1;
  std::optional<BoundingBox> bounds;
  std::vector<View> views;

  int ignore_id() const { return num_classes; }
  std::vector<int> indices(Split s) const;
  /// Throws ShapeMismatch when images or masks disagree with their cameras.
  void validate() const;
};

/// Directory layout: cameras.txt, images/<name>.ppm, masks/<name>.pgm,
/// split.txt, classes.txt, and the optional bounds.txt. Mask value 255 maps to
/// the ignore id. classes.txt holds one class name per line (line k is class
/// k); a class named `background` is the background class. bounds.txt holds
/// `xmin ymin zmin xmax ymax zmax`.
void save_dataset(const std::string& dir, const Dataset& ds);
Dataset load_dataset(const std::string& dir);

/// Camera line: `name w h fx fy cx cy r00 r01 r02 r10 r11 r12 r20 r21 r22 tx ty tz`.
std::string format_camera(const std::string& name, const Camera& cam);
std::pair<std::string, Camera> parse_camera(const std::string& line);

}  // namespace semfoam
