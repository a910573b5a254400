// Command-line front end: dataset synthesis, training, rendering,
// segmentation, evaluation and object edits.

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "semfoam/dataset.hpp"
#include "semfoam/editing.hpp"
#include "semfoam/error.hpp"
#include "semfoam/image_io.hpp"
#include "semfoam/metrics.hpp"
#include "semfoam/parallel.hpp"
#include "semfoam/renderer.hpp"
#include "semfoam/scene_io.hpp"
#include "semfoam/semantics.hpp"
#include "semfoam/synthetic.hpp"
#include "semfoam/training.hpp"

using namespace semfoam;
namespace fs = std::filesystem;

namespace {

struct Options {
  uint64_t seed = 0;
  int workers = 0;

  std::string spec = "three_objects";
  std::string data;
  std::string out;
  std::string scene;
  std::string object;
  std::string split = "test";
  std::string masks;
  int width = 0;
  int height = 0;

  int iters = 2000;
  int target_sites = 0;
  int initial_sites = 0;
  int sh_degree = -1;
  int id_dim = 0;
  double weight_identity = -1.0;
  double weight_tv = -1.0;
  int log_interval = 100;
  bool no_validate = false;

  int class_id = 0;
  double tau = kDefaultDensityThreshold;
  std::vector<double> transform{1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0};
  double scale = 1.0;
};

// Box for a dataset without bounds.txt: the camera centers inflated by 10%.
BoundingBox dataset_box(const Dataset& ds) {
  if (ds.bounds) return *ds.bounds;
  std::vector<Vec3> centers;
  for (const View& v : ds.views) centers.push_back(v.camera.center());
  if (centers.size() < 2) throw FoamError(ErrorCode::InvalidArgument, "dataset has no bounds.txt and too few cameras");
  return BoundingBox::around(centers).inflated(0.1);
}

Triangulation triangulate(const FoamScene& s) { return build_delaunay(s.positions, s.box); }

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw FoamError(ErrorCode::Io, "cannot create " + dir + ": " + ec.message());
}

int run_synth(const Options& o) {
  SyntheticSpec spec = synthetic_preset(o.spec);
  if (o.width > 0) spec.width = o.width;
  if (o.height > 0) spec.height = o.height;
  const Dataset ds = generate_synthetic(spec, o.seed);
  save_dataset(o.out, ds);
  std::printf("views=%zu train=%zu val=%zu test=%zu classes=%d\n", ds.views.size(), ds.indices(Split::Train).size(),
              ds.indices(Split::Val).size(), ds.indices(Split::Test).size(), ds.num_classes);
  return 0;
}

int run_train(const Options& o) {
  const Dataset ds = load_dataset(o.data);
  TrainConfig c = TrainConfig{}.for_iterations(o.iters);
  c.seed = o.seed;
  c.workers = o.workers;
  c.log_interval = o.log_interval;
  if (o.target_sites > 0) c.target_sites = o.target_sites;
  if (o.initial_sites > 0) c.initial_sites = o.initial_sites;
  if (o.sh_degree >= 0) c.sh_degree = o.sh_degree;
  if (o.id_dim > 0) c.id_dim = o.id_dim;
  if (o.weight_identity >= 0.0) c.weight_identity = o.weight_identity;
  if (o.weight_tv >= 0.0) c.weight_tv = o.weight_tv;
  c.validate();

  FoamScene start = o.scene.empty() ? initial_scene(dataset_box(ds), ds.num_classes, c) : load_scene(o.scene);
  const auto t0 = std::chrono::steady_clock::now();
  TrainHooks hooks;
  hooks.validate = !o.no_validate;
  hooks.log = [&](const std::string& line) {
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("%s time=%.1f\n", line.c_str(), s);
    std::fflush(stdout);
  };
  const TrainResult r = train(std::move(start), ds, c, hooks);
  ensure_dir(o.out);
  save_checkpoint((fs::path(o.out) / "final").string(), r.scene, r.optimizer, r.iterations);
  std::printf("wrote %s sites=%d\n", (fs::path(o.out) / "final.foam").string().c_str(), r.scene.num_sites());
  return 0;
}

int run_render(const Options& o, bool labels) {
  const Dataset ds = load_dataset(o.data);
  const FoamScene scene = load_scene(o.scene);
  const Triangulation tri = triangulate(scene);
  const fs::path dir = fs::path(o.out) / (labels ? "masks" : "images");
  ensure_dir(dir.string());
  const Split split = parse_split(o.split);
  for (int idx : ds.indices(split)) {
    const View& v = ds.views[static_cast<size_t>(idx)];
    const RenderImage img = render_image(scene, tri, v.camera, {}, o.workers);
    Image8 out;
    out.width = img.width;
    out.height = img.height;
    if (labels) {
      out.channels = 1;
      for (int l : predicted_labels(img, scene.head)) out.data.push_back(static_cast<uint8_t>(l));
      write_pgm((dir / (v.name + ".pgm")).string(), out);
    } else {
      out.channels = 3;
      for (double x : img.rgb) out.data.push_back(quantize(x));
      write_ppm((dir / (v.name + ".ppm")).string(), out);
    }
  }
  std::printf("wrote %zu %s to %s\n", ds.indices(split).size(), labels ? "masks" : "images", dir.string().c_str());
  return 0;
}

int run_eval(const Options& o) {
  const Dataset ds = load_dataset(o.data);
  const FoamScene scene = load_scene(o.scene);
  if (scene.num_classes() != ds.num_classes)
    throw FoamError(ErrorCode::ShapeMismatch, "scene has " + std::to_string(scene.num_classes()) +
                                                  " classes, dataset " + std::to_string(ds.num_classes));
  const Triangulation tri = triangulate(scene);
  const Split split = parse_split(o.split);
  EvalResult e = evaluate(scene, tri, ds, split, {}, o.workers);
  if (!o.masks.empty()) {
    // Segmentation scores from saved masks instead of fresh renders.
    ConfusionMatrix conf(ds.num_classes);
    for (int idx : ds.indices(split)) {
      const View& v = ds.views[static_cast<size_t>(idx)];
      const Image8 m = read_pgm((fs::path(o.masks) / (v.name + ".pgm")).string());
      if (m.width != v.camera.width || m.height != v.camera.height)
        throw FoamError(ErrorCode::ShapeMismatch, "mask size differs for view " + v.name);
      std::vector<int> pred(m.data.begin(), m.data.end());
      conf.add(v.labels, pred, ds.ignore_id());
    }
    const SegmentationScores s = miou_macc(conf);
    e.miou = s.miou;
    e.macc = s.macc;
  }
  std::printf("mIoU=%.4f mAcc=%.4f PSNR=%.3f\n", e.miou, e.macc, e.psnr);
  return 0;
}

int run_extract(const Options& o) {
  const FoamScene scene = load_scene(o.scene);
  const Extraction ex = extract_object(scene, triangulate(scene), o.class_id, o.tau);
  save_scene(o.out, ex.object);
  std::printf("core=%zu shell=%zu\n", ex.selection.core.size(), ex.selection.shell.size());
  return 0;
}

int run_remove(const Options& o) {
  const FoamScene scene = load_scene(o.scene);
  const Removal r = remove_object(scene, triangulate(scene), o.class_id, o.tau);
  save_scene(o.out, r.scene);
  std::printf("core=%zu shell=%zu sites=%d\n", r.selection.core.size(), r.selection.shell.size(), r.scene.num_sites());
  return 0;
}

int run_insert(const Options& o) {
  const FoamScene host = load_scene(o.scene);
  const FoamScene object = load_scene(o.object);
  const SimilarityTransform t = SimilarityTransform::from_rows(o.transform, o.scale);
  const Insertion ins = insert_object(host, triangulate(host), object, t, o.tau);
  save_scene(o.out, ins.scene);
  std::printf("deleted=%d inserted=%d class=%d sites=%d\n", ins.deleted, ins.inserted, ins.class_id,
              ins.scene.num_sites());
  if (ins.remapped)
    std::printf("note: class %d already present, inserted cells use new class %d\n", ins.source_class, ins.class_id);
  return 0;
}

int run_info(const Options& o) {
  const FoamScene s = load_scene(o.scene);
  std::printf("sites=%d sh_degree=%d id_dim=%d classes=%d\n", s.num_sites(), s.sh_degree, s.id_dim,
              s.num_classes());
  std::printf("bbox=%g %g %g %g %g %g\n", s.box.min_corner.x, s.box.min_corner.y, s.box.min_corner.z,
              s.box.max_corner.x, s.box.max_corner.y, s.box.max_corner.z);
  std::printf("hash=%016llx\n", static_cast<unsigned long long>(s.hash()));
  if (s.num_classes() > 0 && s.num_sites() > 0) {
    std::map<int, std::pair<int, int>> per_class;  // label -> (cells, dense cells)
    const std::vector<int> labels = cell_labels(s);
    for (int i = 0; i < s.num_sites(); ++i) {
      auto& e = per_class[labels[static_cast<size_t>(i)]];
      ++e.first;
      e.second += s.density(i) >= o.tau;
    }
    for (const auto& [c, e] : per_class) std::printf("class %d cells=%d dense=%d\n", c, e.first, e.second);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Semantic Voronoi foam: train, segment and edit radiance fields"};
  app.require_subcommand(1);
  Options o;

  auto seed = [&](CLI::App* c) { c->add_option("--seed", o.seed, "Random seed")->capture_default_str(); };
  auto workers = [&](CLI::App* c) {
    c->add_option("--workers", o.workers, "Worker threads (0 = SEMFOAM_THREADS or all cores)")->capture_default_str();
  };
  auto scene_in = [&](CLI::App* c) { c->add_option("--scene", o.scene, "Scene file")->required(); };
  auto data_in = [&](CLI::App* c) { c->add_option("--data", o.data, "Dataset directory")->required(); };
  auto split = [&](CLI::App* c) { c->add_option("--split", o.split, "train, val or test")->capture_default_str(); };
  auto out = [&](CLI::App* c, const char* what) { c->add_option("--out", o.out, what)->required(); };
  auto klass = [&](CLI::App* c) {
    c->add_option("--class", o.class_id, "Class id")->required();
    c->add_option("--tau", o.tau, "Density threshold for object cells")->capture_default_str();
  };

  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset");
  synth->add_option("--spec", o.spec, "three_objects, red_sphere, two_spheres or vacuum")->capture_default_str();
  synth->add_option("--width", o.width, "Image width override");
  synth->add_option("--height", o.height, "Image height override");
  out(synth, "Dataset directory");
  seed(synth);

  auto* train_cmd = app.add_subcommand("train", "Train a scene on a dataset");
  data_in(train_cmd);
  out(train_cmd, "Run directory (final.foam, final.adam)");
  train_cmd->add_option("--iters", o.iters, "Iterations")->capture_default_str();
  train_cmd->add_option("--scene", o.scene, "Start from this scene instead of random sites");
  train_cmd->add_option("--target-sites", o.target_sites, "Site count reached by densification");
  train_cmd->add_option("--initial-sites", o.initial_sites, "Random initial site count");
  train_cmd->add_option("--sh-degree", o.sh_degree, "Spherical-harmonics degree");
  train_cmd->add_option("--id-dim", o.id_dim, "Identity feature size");
  train_cmd->add_option("--weight-identity", o.weight_identity, "Identity loss weight");
  train_cmd->add_option("--weight-tv", o.weight_tv, "TV loss weight");
  train_cmd->add_option("--log-interval", o.log_interval, "Iterations between log lines")->capture_default_str();
  train_cmd->add_flag("--no-validate", o.no_validate, "Skip validation metrics in the log");
  seed(train_cmd);
  workers(train_cmd);

  auto* render = app.add_subcommand("render", "Render the views of a split to PPM");
  scene_in(render);
  data_in(render);
  split(render);
  out(render, "Output directory");
  workers(render);

  auto* segment = app.add_subcommand("segment", "Write predicted label masks (PGM)");
  scene_in(segment);
  data_in(segment);
  split(segment);
  out(segment, "Output directory");
  workers(segment);

  auto* eval = app.add_subcommand("eval", "Print mIoU, mAcc and PSNR on a split");
  scene_in(eval);
  data_in(eval);
  split(eval);
  eval->add_option("--masks", o.masks, "Score saved masks from this directory");
  workers(eval);

  auto* extract = app.add_subcommand("extract", "Extract one class as a standalone scene");
  scene_in(extract);
  klass(extract);
  out(extract, "Object scene file");

  auto* remove = app.add_subcommand("remove", "Delete one class from a scene");
  scene_in(remove);
  klass(remove);
  out(remove, "Output scene file");

  auto* insert = app.add_subcommand("insert", "Insert an object scene into a host scene");
  scene_in(insert);
  insert->add_option("--object", o.object, "Object scene file")->required();
  insert->add_option("--transform", o.transform, "Row-major 3x4 [R | t] (12 numbers)")->expected(12);
  insert->add_option("--scale", o.scale, "Uniform scale")->capture_default_str();
  insert->add_option("--tau", o.tau, "Density threshold for object cells")->capture_default_str();
  out(insert, "Output scene file");

  auto* info = app.add_subcommand("info", "Summarize a scene file");
  scene_in(info);
  info->add_option("--tau", o.tau, "Density threshold for the dense-cell count")->capture_default_str();

  // Long flags only: reject single-dash options before CLI11 sees them.
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a.size() == 2 && a[0] == '-' && a[1] != '-' && a != "-h") {
      std::fprintf(stderr, "error: short option %s is not supported\n", a.c_str());
      return 2;
    }
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }

  try {
    if (*synth) return run_synth(o);
    if (*train_cmd) return run_train(o);
    if (*render) return run_render(o, false);
    if (*segment) return run_render(o, true);
    if (*eval) return run_eval(o);
    if (*extract) return run_extract(o);
    if (*remove) return run_remove(o);
    if (*insert) return run_insert(o);
    if (*info) return run_info(o);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 1;
}
