#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "semfoam/dataset.hpp"
#include "semfoam/geometry.hpp"
#include "semfoam/renderer.hpp"
#include "semfoam/scene.hpp"

namespace semfoam {

struct TrainConfig {
  int iterations = 20000;

  double lr_position = 2e-4;
  double lr_position_final = 2e-6;
  double lr_density = 1e-1;
  double lr_density_final = 1e-2;
  double lr_sh = 5e-3;
  double lr_sh_final = 5e-4;
  double lr_identity = 5e-3;
  double lr_identity_final = 5e-4;
  /// The classifier head follows the identity schedule unless set.
  std::optional<double> lr_head;
  std::optional<double> lr_head_final;

  /// SH coefficients of degree >= 1 stay at initialization for the first
  /// ceil(fraction * iterations) iterations.
  double sh_warmup_fraction = 0.25;
  /// Positions stop moving for the final iterations.
  int freeze_positions_last = 2000;

  double weight_rgb = 1.0;
  double weight_alpha = 0.1;
  double weight_quantile = 0.0;  // only 0 is supported
  double weight_identity = 1000.0;
  double weight_tv = 1.0;
  double tv_clamp_min = 1.0;
  /// TV weight is multiplied by tv_decay_factor at tv_decay_start,
  /// tv_decay_start + tv_decay_interval, ...
  int tv_decay_start = 2000;
  int tv_decay_interval = 1000;
  double tv_decay_factor = 0.99;

  /// Densify/prune events run after the optimizer step of every iteration
  /// it with densify_start <= it <= densify_stop and
  /// (it - densify_start) % densify_interval == 0.
  int densify_start = 2000;
  int densify_stop = 10000;
  int densify_interval = 500;
  int target_sites = 4096;
  double prune_density = 1e-3;
  double prune_weight = 1e-4;
  /// Children are placed at split_scale * (mean distance to adjacent sites).
  double split_scale = 0.3;

  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;

  uint64_t seed = 0;
  int initial_sites = 1024;
  int sh_degree = 3;
  int id_dim = 16;
  double initial_density = 0.1;
  double initial_identity_std = 1e-2;

  bool stop_density_identity = true;
  double early_stop = 1e-7;
  int log_interval = 100;
  int workers = 1;

  /// Copy with `iterations` replaced and every iteration-valued field
  /// (freeze window, TV decay, densify window) scaled by n / iterations.
  TrainConfig for_iterations(int n) const;
  /// Throws InvalidArgument on inconsistent values.
  void validate() const;

  double head_lr() const { return lr_head.value_or(lr_identity); }
  double head_lr_final() const { return lr_head_final.value_or(lr_identity_final); }
};

/// Cosine annealing from `initial` at iteration 0 to `final` at
/// iteration total - 1 (both endpoints exact).
double cosine_lr(double initial, double final, int iteration, int total);

/// Closed-form schedule values at one iteration.
struct ScheduleState {
  double lr_position = 0.0;
  double lr_density = 0.0;
  double lr_sh = 0.0;
  double lr_identity = 0.0;
  double lr_head = 0.0;
  double weight_tv = 0.0;
  bool sh_rest_active = false;
  bool positions_frozen = false;
  bool densify_event = false;
};
ScheduleState schedule_at(const TrainConfig& config, int iteration);
int sh_warmup_end(const TrainConfig& config);
/// Densify event count and the index of the event at `iteration` (-1 when
/// there is none).
int densify_event_count(const TrainConfig& config);
int densify_event_index(const TrainConfig& config, int iteration);
/// Linear ramp target for the site count after densify event e.
int densify_target(const TrainConfig& config, int initial_sites, int event);

/// Builds the triangulation of a scene on demand and caches it until the
/// positions change.
class TriangulationCache {
 public:
  const Triangulation& get(const FoamScene& scene);
  void invalidate() { valid_ = false; }
  bool valid() const { return valid_; }

 private:
  bool valid_ = false;
  std::optional<Triangulation> tri_;
};

struct LossWeights {
  double rgb = 1.0;
  double alpha = 0.1;
  double identity = 1000.0;
  double tv = 1.0;
};

struct LossBreakdown {
  double rgb = 0.0;       // mean L1 over RGB values
  double alpha = 0.0;     // mean L1 of alpha vs. foreground coverage
  double identity = 0.0;  // mean cross-entropy over labelled pixels
  double tv = 0.0;
  double total = 0.0;     // weighted sum
  double psnr = 0.0;      // of the rendered batch, unquantized
};

struct LossOptions {
  LossWeights weights;
  double tv_clamp_min = 1.0;
  RenderOptions render;
  int workers = 1;
};

/// Weighted loss over a batch of views with all parameter adjoints in
/// `grads` (resized and zeroed first). Per-view terms are averaged over the
/// batch; TV is added once. Foreground coverage for the alpha term is 1 on
/// pixels whose label is neither ignore nor the background class.
LossBreakdown total_loss(const FoamScene& scene, const Triangulation& tri, const std::vector<const View*>& batch,
                         const Dataset& dataset, const LossOptions& options, GradientBuffer& grads);

struct AdamMoments {
  std::vector<double> m;
  std::vector<double> v;
  long step = 0;
};

/// Optimizer state, one moment pair per parameter array. SH degree 0 and
/// degree >= 1 keep separate step counters because the latter start late.
struct AdamState {
  AdamMoments positions;
  AdamMoments density;
  AdamMoments sh_dc;
  AdamMoments sh_rest;
  AdamMoments identity;
  AdamMoments head_weights;
  AdamMoments head_bias;

  void resize_for(const FoamScene& scene);
  /// Mirrors FoamScene::compact.
  void compact(const FoamScene& before, const std::vector<uint8_t>& keep);
  std::vector<double> flatten() const;
  static AdamState unflatten(const std::vector<double>& values, const FoamScene& scene);
};

/// One Adam update with the learning rates and gates of `schedule`. Throws
/// NonFiniteGradient when any adjoint is not finite.
void adam_step(FoamScene& scene, const GradientBuffer& grads, AdamState& state, const ScheduleState& schedule,
               const TrainConfig& config);

/// Per-site statistics gathered between densify events.
struct DensifyStats {
  std::vector<double> grad_norm;  // sum over iterations of |dL/dp_i|
  std::vector<double> weight;     // sum over iterations of compositing weight
  int iterations = 0;

  void resize(int n);
  void reset(int n);
  void accumulate(const GradientBuffer& grads);
};

/// Removes sites with sigma < prune_density whose mean compositing weight
/// over the interval is < prune_weight and whose adjacent cells all have
/// sigma < prune_density. Never leaves fewer than 5 sites. Returns the keep
/// mask (all ones when nothing is pruned).
std::vector<uint8_t> prune_mask(const FoamScene& scene, const Triangulation& tri, const DensifyStats& stats,
                                const TrainConfig& config);

/// Clones the k sites with the largest accumulated position-gradient norm
/// (lowest index first on ties). Each child copies its parent's parameters
/// and sits at parent + split_scale * mean_neighbor_distance * u for a random
/// unit vector u, pulled back toward the parent until it is inside the box.
/// Returns the parents in child order.
std::vector<int> densify(FoamScene& scene, const Triangulation& tri, const DensifyStats& stats, int k,
                         const TrainConfig& config, std::mt19937_64& rng);

/// Uniform random sites in the box with the configured initial values.
FoamScene initial_scene(const BoundingBox& box, int num_classes, const TrainConfig& config);

struct IterationInfo {
  int iteration = 0;
  ScheduleState schedule;
  LossBreakdown loss;
  int num_sites = 0;
  int pruned = 0;
  int added = 0;
};

struct EvalResult {
  double psnr = 0.0;
  double miou = 0.0;
  double macc = 0.0;
};

/// Gradient source for one iteration. The default renders the view and
/// calls total_loss.
using GradientSource = std::function<LossBreakdown(const FoamScene& scene, TriangulationCache& tri, int iteration,
                                                   const View& view, GradientBuffer& grads)>;

struct TrainHooks {
  GradientSource gradients;
  /// Called after every iteration (after densify/prune).
  std::function<void(const IterationInfo&, const FoamScene&)> on_iteration;
  /// Receives metrics log lines.
  std::function<void(const std::string&)> log;
  /// Evaluate on the validation split every log_interval iterations.
  bool validate = true;
};

struct TrainResult {
  FoamScene scene;
  AdamState optimizer;
  int iterations = 0;
};

/// Runs the optimization loop. Views of the train split are visited in a
/// seeded random order, one per iteration.
TrainResult train(FoamScene scene, const Dataset& dataset, const TrainConfig& config, const TrainHooks& hooks = {});

/// Renders every view of a split and scores it against the dataset: PSNR of
/// 8-bit quantized renders (mean squared error pooled over the split) and
/// mIoU / mAcc of argmax labels over non-ignore pixels.
EvalResult evaluate(const FoamScene& scene, const Triangulation& tri, const Dataset& dataset, Split split,
                    const RenderOptions& options = {}, int workers = 0);

/// Per-pixel argmax labels of a rendered identity image.
std::vector<int> predicted_labels(const RenderImage& image, const ClassifierHead& head);

/// `<prefix>.foam` holds the scene and `<prefix>.adam` the optimizer state.
void save_checkpoint(const std::string& prefix, const FoamScene& scene, const AdamState& state, long iteration);
std::pair<FoamScene, AdamState> load_checkpoint(const std::string& prefix, long* iteration);

}  // namespace semfoam
