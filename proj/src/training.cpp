#include "semfoam/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <numeric>

#include "semfoam/error.hpp"
#include "semfoam/image_io.hpp"
#include "semfoam/metrics.hpp"
#include "semfoam/scene_io.hpp"
#include "semfoam/semantics.hpp"

namespace semfoam {

// ---------------------------------------------------------------------------
// Configuration and schedules

TrainConfig TrainConfig::for_iterations(int n) const {
  TrainConfig c = *this;
  c.iterations = n;
  if (iterations <= 0) return c;
  const double r = static_cast<double>(n) / static_cast<double>(iterations);
  auto scaled = [r](int v) { return static_cast<int>(std::lround(v * r)); };
  auto scaled_interval = [r](int v) { return std::max(1, static_cast<int>(std::lround(v * r))); };
  c.freeze_positions_last = scaled(freeze_positions_last);
  c.tv_decay_start = scaled(tv_decay_start);
  c.tv_decay_interval = scaled_interval(tv_decay_interval);
  c.densify_start = scaled(densify_start);
  c.densify_stop = scaled(densify_stop);
  c.densify_interval = scaled_interval(densify_interval);
  return c;
}

void TrainConfig::validate() const {
  auto bad = [](const std::string& what) { throw FoamError(ErrorCode::InvalidArgument, "train config: " + what); };
  if (iterations < 0) bad("iterations must be >= 0");
  for (double lr : {lr_position, lr_position_final, lr_density, lr_density_final, lr_sh, lr_sh_final, lr_identity,
                    lr_identity_final, head_lr(), head_lr_final()})
    if (!(lr > 0.0) || !std::isfinite(lr)) bad("learning rates must be positive");
  if (!(sh_warmup_fraction >= 0.0 && sh_warmup_fraction <= 1.0)) bad("sh_warmup_fraction outside [0, 1]");
  if (freeze_positions_last < 0) bad("freeze_positions_last must be >= 0");
  for (double w : {weight_rgb, weight_alpha, weight_identity, weight_tv, tv_clamp_min})
    if (!(w >= 0.0) || !std::isfinite(w)) bad("loss weights must be finite and >= 0");
  if (weight_quantile != 0.0) bad("the quantile loss is not implemented; weight_quantile must be 0");
  if (tv_decay_start < 0 || tv_decay_interval <= 0) bad("tv decay schedule");
  if (!(tv_decay_factor > 0.0)) bad("tv_decay_factor must be positive");
  if (densify_start < 0 || densify_interval <= 0) bad("densify schedule");
  if (target_sites < 1) bad("target_sites must be >= 1");
  if (!(prune_density >= 0.0) || !(prune_weight >= 0.0)) bad("prune thresholds");
  if (!(split_scale > 0.0)) bad("split_scale must be positive");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0) || !(adam_eps > 0.0))
    bad("adam parameters");
  if (initial_sites < 1) bad("initial_sites must be >= 1");
  if (sh_degree < 0 || sh_degree > kMaxShDegree) bad("sh_degree must be in [0, 3]");
  if (id_dim < 1) bad("id_dim must be >= 1");
  if (!(initial_density > 0.0)) bad("initial_density must be positive");
  if (!(early_stop >= 0.0 && early_stop < 1.0)) bad("early_stop outside [0, 1)");
  if (log_interval < 1) bad("log_interval must be >= 1");
  if (workers < 0) bad("workers must be >= 0");
}

double cosine_lr(double initial, double final, int iteration, int total) {
  if (total <= 1) return initial;
  const double w = 0.5 * (1.0 + std::cos(std::numbers::pi * iteration / (total - 1)));
  return initial * w + final * (1.0 - w);
}

int sh_warmup_end(const TrainConfig& c) {
  return static_cast<int>(std::ceil(c.sh_warmup_fraction * c.iterations - 1e-9));
}

int densify_event_count(const TrainConfig& c) {
  const int last = std::min(c.densify_stop, c.iterations - 1);
  if (last < c.densify_start) return 0;
  return (last - c.densify_start) / c.densify_interval + 1;
}

int densify_event_index(const TrainConfig& c, int it) {
  if (it < c.densify_start || it > c.densify_stop || it >= c.iterations) return -1;
  if ((it - c.densify_start) % c.densify_interval != 0) return -1;
  return (it - c.densify_start) / c.densify_interval;
}

int densify_target(const TrainConfig& c, int initial_sites, int event) {
  const int events = densify_event_count(c);
  if (events == 0 || c.target_sites <= initial_sites) return initial_sites;
  const long grow = static_cast<long>(c.target_sites - initial_sites) * (event + 1) / events;
  return initial_sites + static_cast<int>(grow);
}

ScheduleState schedule_at(const TrainConfig& c, int it) {
  ScheduleState s;
  const int t = c.iterations;
  s.lr_position = cosine_lr(c.lr_position, c.lr_position_final, it, t);
  s.lr_density = cosine_lr(c.lr_density, c.lr_density_final, it, t);
  s.lr_sh = cosine_lr(c.lr_sh, c.lr_sh_final, it, t);
  s.lr_identity = cosine_lr(c.lr_identity, c.lr_identity_final, it, t);
  s.lr_head = cosine_lr(c.head_lr(), c.head_lr_final(), it, t);
  const int decays = it < c.tv_decay_start ? 0 : (it - c.tv_decay_start) / c.tv_decay_interval + 1;
  s.weight_tv = c.weight_tv * std::pow(c.tv_decay_factor, decays);
  s.sh_rest_active = it >= sh_warmup_end(c);
  s.positions_frozen = it >= t - c.freeze_positions_last;
  s.densify_event = densify_event_index(c, it) >= 0;
  return s;
}

const Triangulation& TriangulationCache::get(const FoamScene& scene) {
  if (!valid_) {
    tri_.emplace(Triangulation::build(scene.positions, scene.box));
    valid_ = true;
  }
  return *tri_;
}

// ---------------------------------------------------------------------------
// Losses

LossBreakdown total_loss(const FoamScene& scene, const Triangulation& tri, const std::vector<const View*>& batch,
                         const Dataset& dataset, const LossOptions& opt, GradientBuffer& grads) {
  if (batch.empty()) throw FoamError(ErrorCode::InvalidArgument, "empty batch");
  if (tri.num_sites() != scene.num_sites())
    throw FoamError(ErrorCode::ShapeMismatch, "triangulation does not match the scene");
  if (scene.num_classes() != dataset.num_classes)
    throw FoamError(ErrorCode::ShapeMismatch, "classifier head and dataset disagree on the class count");
  grads.resize_for(scene);
  grads.zero();
  const LossWeights& w = opt.weights;
  const double nb = static_cast<double>(batch.size());
  const int ignore = dataset.ignore_id();
  const int k = scene.num_classes();
  LossBreakdown out;
  double se = 0.0, se_count = 0.0;
  GradientBuffer vg;
  for (const View* view : batch) {
    const Camera& cam = view->camera;
    const size_t np = static_cast<size_t>(cam.width) * static_cast<size_t>(cam.height);
    if (view->rgb.size() != 3 * np || view->labels.size() != np)
      throw FoamError(ErrorCode::ShapeMismatch, "view " + view->name + " does not match its camera");
    const double n_px = static_cast<double>(np);
    double labelled = 0.0;
    for (int l : view->labels) labelled += l != ignore;
    std::vector<double> rgb_term(np, 0.0), alpha_term(np, 0.0), id_term(np, 0.0), sq(np, 0.0);

    const PixelLoss loss = [&](int pixel, const double* rgb, double alpha, const double* identity, double* g_rgb,
                               double& g_alpha, double* g_id, GradientBuffer& g) {
      const auto p = static_cast<size_t>(pixel);
      const double* gt = view->rgb.data() + 3 * p;
      double l1 = 0.0, s2 = 0.0;
      for (int c = 0; c < 3; ++c) {
        const double d = rgb[c] - gt[c];
        l1 += std::abs(d);
        s2 += d * d;
        g_rgb[c] = w.rgb * ((d > 0.0) - (d < 0.0)) / (3.0 * n_px * nb);
      }
      rgb_term[p] = l1 / (3.0 * n_px);
      sq[p] = s2;
      const int label = view->labels[p];
      const double coverage = label != ignore && label != dataset.background_class ? 1.0 : 0.0;
      const double da = alpha - coverage;
      alpha_term[p] = std::abs(da) / n_px;
      g_alpha = w.alpha * ((da > 0.0) - (da < 0.0)) / (n_px * nb);
      if (label != ignore) {
        if (w.identity > 0.0) {
          const double scaled = identity_loss_pixel(scene.head, identity, label, labelled * nb / w.identity, g_id,
                                                    g.d_head_weights.data(), g.d_head_bias.data());
          id_term[p] = scaled * nb / w.identity;
        } else {
          std::vector<double> logits(static_cast<size_t>(k)), probs(static_cast<size_t>(k));
          scene.head.logits(identity, logits.data());
          softmax(logits.data(), k, probs.data());
          id_term[p] = -std::log(std::max(probs[static_cast<size_t>(label)], 1e-300)) / labelled;
        }
      }
      return 0.0;
    };
    render_backward(scene, tri, cam, opt.render, loss, vg, opt.workers);
    grads.add(vg);
    for (size_t p = 0; p < np; ++p) {
      out.rgb += rgb_term[p] / nb;
      out.alpha += alpha_term[p] / nb;
      out.identity += id_term[p] / nb;
      se += sq[p];
    }
    se_count += 3.0 * n_px;
  }
  if (w.tv > 0.0) {
    std::vector<double> g(scene.identity.size(), 0.0);
    out.tv = tv_loss(scene, tri, opt.tv_clamp_min, g.data());
    for (size_t q = 0; q < g.size(); ++q) grads.d_identity[q] += w.tv * g[q];
  } else {
    out.tv = tv_loss(scene, tri, opt.tv_clamp_min, nullptr);
  }
  out.total = w.rgb * out.rgb + w.alpha * out.alpha + w.identity * out.identity + w.tv * out.tv;
  out.psnr = psnr_from_mse(se / se_count);
  return out;
}

// ---------------------------------------------------------------------------
// Optimizer

namespace {

void fit(AdamMoments& a, size_t n) {
  a.m.resize(n, 0.0);
  a.v.resize(n, 0.0);
}

void check_finite(const std::vector<double>& v, const char* what) {
  for (size_t k = 0; k < v.size(); ++k)
    if (!std::isfinite(v[k]))
      throw FoamError(ErrorCode::NonFiniteGradient,
                      std::string("non-finite gradient in ") + what + " at element " + std::to_string(k));
}

struct AdamCoefficients {
  double lr, beta1, beta2, eps, bc1, bc2;
};

AdamCoefficients coefficients(AdamMoments& s, double lr, const TrainConfig& c) {
  ++s.step;
  const double t = static_cast<double>(s.step);
  return {lr, c.adam_beta1, c.adam_beta2, c.adam_eps, 1.0 - std::pow(c.adam_beta1, t),
          1.0 - std::pow(c.adam_beta2, t)};
}

inline void adam_one(double& p, double g, double& m, double& v, const AdamCoefficients& k) {
  m = k.beta1 * m + (1.0 - k.beta1) * g;
  v = k.beta2 * v + (1.0 - k.beta2) * g * g;
  p -= k.lr * (m / k.bc1) / (std::sqrt(v / k.bc2) + k.eps);
}

void adam_array(double* p, const double* g, AdamMoments& s, size_t n, double lr, const TrainConfig& c) {
  const AdamCoefficients k = coefficients(s, lr, c);
  for (size_t q = 0; q < n; ++q) adam_one(p[q], g[q], s.m[q], s.v[q], k);
}

}  // namespace

void AdamState::resize_for(const FoamScene& scene) {
  const size_t n = static_cast<size_t>(scene.num_sites());
  const size_t rest = 3 * static_cast<size_t>(scene.sh_basis() - 1);
  fit(positions, 3 * n);
  fit(density, n);
  fit(sh_dc, 3 * n);
  fit(sh_rest, rest * n);
  fit(identity, static_cast<size_t>(scene.id_dim) * n);
  fit(head_weights, scene.head.weights.size());
  fit(head_bias, scene.head.bias.size());
}

void AdamState::compact(const FoamScene& before, const std::vector<uint8_t>& keep) {
  auto squeeze = [&](AdamMoments& a, size_t per_site) {
    size_t w = 0;
    for (size_t i = 0; i < keep.size(); ++i) {
      if (!keep[i]) continue;
      for (size_t q = 0; q < per_site; ++q) {
        a.m[w * per_site + q] = a.m[i * per_site + q];
        a.v[w * per_site + q] = a.v[i * per_site + q];
      }
      ++w;
    }
    a.m.resize(w * per_site);
    a.v.resize(w * per_site);
  };
  squeeze(positions, 3);
  squeeze(density, 1);
  squeeze(sh_dc, 3);
  squeeze(sh_rest, 3 * static_cast<size_t>(before.sh_basis() - 1));
  squeeze(identity, static_cast<size_t>(before.id_dim));
}

std::vector<double> AdamState::flatten() const {
  const AdamMoments* groups[] = {&positions, &density, &sh_dc, &sh_rest, &identity, &head_weights, &head_bias};
  std::vector<double> out;
  for (const AdamMoments* g : groups) out.push_back(static_cast<double>(g->step));
  for (const AdamMoments* g : groups) {
    out.insert(out.end(), g->m.begin(), g->m.end());
    out.insert(out.end(), g->v.begin(), g->v.end());
  }
  return out;
}

AdamState AdamState::unflatten(const std::vector<double>& values, const FoamScene& scene) {
  AdamState s;
  s.resize_for(scene);
  AdamMoments* groups[] = {&s.positions, &s.density, &s.sh_dc, &s.sh_rest, &s.identity, &s.head_weights,
                           &s.head_bias};
  size_t expect = 7;
  for (AdamMoments* g : groups) expect += 2 * g->m.size();
  if (values.size() != expect) throw FoamError(ErrorCode::ShapeMismatch, "optimizer state does not match the scene");
  size_t at = 0;
  for (AdamMoments* g : groups) g->step = static_cast<long>(values[at++]);
  for (AdamMoments* g : groups) {
    std::copy_n(values.begin() + static_cast<std::ptrdiff_t>(at), g->m.size(), g->m.begin());
    at += g->m.size();
    std::copy_n(values.begin() + static_cast<std::ptrdiff_t>(at), g->v.size(), g->v.begin());
    at += g->v.size();
  }
  return s;
}

void adam_step(FoamScene& scene, const GradientBuffer& grads, AdamState& st, const ScheduleState& sched,
               const TrainConfig& c) {
  const size_t n = static_cast<size_t>(scene.num_sites());
  if (grads.d_positions.size() != n || grads.d_density_raw.size() != n || grads.d_sh.size() != scene.sh.size() ||
      grads.d_identity.size() != scene.identity.size() || grads.d_head_weights.size() != scene.head.weights.size() ||
      grads.d_head_bias.size() != scene.head.bias.size())
    throw FoamError(ErrorCode::ShapeMismatch, "gradient buffer does not match the scene");
  for (size_t i = 0; i < n; ++i)
    if (!std::isfinite(grads.d_positions[i].x) || !std::isfinite(grads.d_positions[i].y) ||
        !std::isfinite(grads.d_positions[i].z))
      throw FoamError(ErrorCode::NonFiniteGradient, "non-finite gradient in positions at site " + std::to_string(i));
  check_finite(grads.d_density_raw, "density");
  check_finite(grads.d_sh, "sh");
  check_finite(grads.d_identity, "identity");
  check_finite(grads.d_head_weights, "head weights");
  check_finite(grads.d_head_bias, "head bias");
  st.resize_for(scene);

  if (!sched.positions_frozen) {
    // A coordinate update that would leave the (slightly inset) box is
    // dropped; clamping instead could stack sites on the boundary.
    const AdamCoefficients k = coefficients(st.positions, sched.lr_position, c);
    const double margin = tolerance::kSiteRel * scene.box.diagonal();
    for (size_t i = 0; i < n; ++i) {
      Vec3& p = scene.positions[i];
      for (int a = 0; a < 3; ++a) {
        double x = p[a];
        adam_one(x, grads.d_positions[i][a], st.positions.m[3 * i + static_cast<size_t>(a)],
                 st.positions.v[3 * i + static_cast<size_t>(a)], k);
        if (x > scene.box.min_corner[a] + margin && x < scene.box.max_corner[a] - margin) p[a] = x;
      }
    }
  }
  adam_array(scene.density_raw.data(), grads.d_density_raw.data(), st.density, n, sched.lr_density, c);

  const size_t stride = static_cast<size_t>(scene.sh_stride());
  const size_t rest = stride - 3;
  {
    const AdamCoefficients k = coefficients(st.sh_dc, sched.lr_sh, c);
    for (size_t i = 0; i < n; ++i)
      for (size_t q = 0; q < 3; ++q)
        adam_one(scene.sh[i * stride + q], grads.d_sh[i * stride + q], st.sh_dc.m[3 * i + q], st.sh_dc.v[3 * i + q], k);
  }
  if (rest > 0 && sched.sh_rest_active) {
    const AdamCoefficients k = coefficients(st.sh_rest, sched.lr_sh, c);
    for (size_t i = 0; i < n; ++i)
      for (size_t q = 0; q < rest; ++q)
        adam_one(scene.sh[i * stride + 3 + q], grads.d_sh[i * stride + 3 + q], st.sh_rest.m[rest * i + q],
                 st.sh_rest.v[rest * i + q], k);
  }
  adam_array(scene.identity.data(), grads.d_identity.data(), st.identity, scene.identity.size(), sched.lr_identity,
             c);
  adam_array(scene.head.weights.data(), grads.d_head_weights.data(), st.head_weights, scene.head.weights.size(),
             sched.lr_head, c);
  adam_array(scene.head.bias.data(), grads.d_head_bias.data(), st.head_bias, scene.head.bias.size(), sched.lr_head,
             c);
}

// ---------------------------------------------------------------------------
// Densification and pruning

void DensifyStats::resize(int n) {
  grad_norm.resize(static_cast<size_t>(n), 0.0);
  weight.resize(static_cast<size_t>(n), 0.0);
}

void DensifyStats::reset(int n) {
  grad_norm.assign(static_cast<size_t>(n), 0.0);
  weight.assign(static_cast<size_t>(n), 0.0);
  iterations = 0;
}

void DensifyStats::accumulate(const GradientBuffer& grads) {
  const size_t n = grad_norm.size();
  if (grads.d_positions.size() == n)
    for (size_t i = 0; i < n; ++i) grad_norm[i] += norm(grads.d_positions[i]);
  if (grads.cell_weight.size() == n)
    for (size_t i = 0; i < n; ++i) weight[i] += grads.cell_weight[i];
  ++iterations;
}

std::vector<uint8_t> prune_mask(const FoamScene& scene, const Triangulation& tri, const DensifyStats& stats,
                                const TrainConfig& c) {
  const int n = scene.num_sites();
  std::vector<uint8_t> keep(static_cast<size_t>(n), 1);
  if (stats.iterations == 0 || static_cast<int>(stats.weight.size()) != n) return keep;
  auto low = [&](int i) { return scene.density(i) < c.prune_density; };
  int remaining = n;
  for (int i = 0; i < n && remaining > 5; ++i) {
    if (!low(i) || stats.weight[static_cast<size_t>(i)] / stats.iterations >= c.prune_weight) continue;
    bool quiet = true;
    for (int j : tri.neighbors(i)) quiet = quiet && low(j);
    if (!quiet) continue;
    keep[static_cast<size_t>(i)] = 0;
    --remaining;
  }
  return keep;
}

std::vector<int> densify(FoamScene& scene, const Triangulation& tri, const DensifyStats& stats, int k,
                         const TrainConfig& c, std::mt19937_64& rng) {
  const int n = scene.num_sites();
  if (tri.num_sites() != n) throw FoamError(ErrorCode::ShapeMismatch, "triangulation does not match the scene");
  k = std::clamp(k, 0, n);
  std::vector<int> order(static_cast<size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  const bool have_stats = static_cast<int>(stats.grad_norm.size()) == n;
  if (have_stats)
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
      return stats.grad_norm[static_cast<size_t>(a)] > stats.grad_norm[static_cast<size_t>(b)];
    });
  order.resize(static_cast<size_t>(k));
  std::normal_distribution<double> g(0.0, 1.0);
  const BoundingBox& box = scene.box;
  for (int parent : order) {
    const Vec3 p = scene.positions[static_cast<size_t>(parent)];
    double mean = 0.0;
    const auto nb = tri.neighbors(parent);
    for (int j : nb) mean += norm(scene.positions[static_cast<size_t>(j)] - p);
    mean = nb.empty() ? 0.01 * box.diagonal() : mean / static_cast<double>(nb.size());
    Vec3 u{g(rng), g(rng), g(rng)};
    u = norm(u) > 0.0 ? normalized(u) : Vec3{1, 0, 0};
    double r = c.split_scale * mean;
    Vec3 child = p + r * u;
    for (int tries = 0; tries < 60 && !box.contains_strictly(child); ++tries) {
      r *= 0.5;
      child = p + r * u;
    }
    scene.append_site(scene, parent, child);
  }
  return order;
}

FoamScene initial_scene(const BoundingBox& box, int num_classes, const TrainConfig& c) {
  c.validate();
  if (!box.valid()) throw FoamError(ErrorCode::InvalidArgument, "bounding box is empty");
  std::mt19937_64 rng(c.seed ^ 0x5eedf0a3c0ffeeULL);
  FoamScene s;
  s.box = box;
  s.sh_degree = c.sh_degree;
  s.id_dim = c.id_dim;
  s.resize(c.initial_sites);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const Vec3 lo = box.min_corner, ext = box.extent();
  for (Vec3& p : s.positions) {
    do {
      p = lo + Vec3{ext.x * u(rng), ext.y * u(rng), ext.z * u(rng)};
    } while (!box.contains_strictly(p));
  }
  std::fill(s.density_raw.begin(), s.density_raw.end(), softplus_inverse(c.initial_density));
  std::normal_distribution<double> g(0.0, c.initial_identity_std);
  for (double& f : s.identity) f = g(rng);
  s.head = ClassifierHead::zeros(num_classes, c.id_dim);
  return s;
}

// ---------------------------------------------------------------------------
// Evaluation

std::vector<int> predicted_labels(const RenderImage& image, const ClassifierHead& head) {
  if (image.id_dim != head.dim) throw FoamError(ErrorCode::ShapeMismatch, "identity dimension mismatch");
  const size_t np = static_cast<size_t>(image.width) * static_cast<size_t>(image.height);
  std::vector<int> out(np);
  std::vector<double> logits(static_cast<size_t>(head.num_classes));
  for (size_t p = 0; p < np; ++p) {
    head.logits(image.identity.data() + p * static_cast<size_t>(image.id_dim), logits.data());
    out[p] = argmax(logits.data(), head.num_classes);
  }
  return out;
}

EvalResult evaluate(const FoamScene& scene, const Triangulation& tri, const Dataset& dataset, Split split,
                    const RenderOptions& options, int workers) {
  const std::vector<int> idx = dataset.indices(split);
  if (idx.empty()) throw FoamError(ErrorCode::InvalidArgument, "split '" + to_string(split) + "' has no views");
  if (scene.num_classes() != dataset.num_classes)
    throw FoamError(ErrorCode::ShapeMismatch, "classifier head and dataset disagree on the class count");
  ConfusionMatrix conf(dataset.num_classes);
  double se = 0.0, count = 0.0;
  for (int v : idx) {
    const View& view = dataset.views[static_cast<size_t>(v)];
    const RenderImage img = render_image(scene, tri, view.camera, options, workers);
    for (size_t q = 0; q < img.rgb.size(); ++q) {
      const double d = (quantize(img.rgb[q]) - quantize(view.rgb[q])) / 255.0;
      se += d * d;
    }
    count += static_cast<double>(img.rgb.size());
    conf.add(view.labels, predicted_labels(img, scene.head), dataset.ignore_id());
  }
  EvalResult r;
  r.psnr = psnr_from_mse(se / count);
  const SegmentationScores s = miou_macc(conf);
  r.miou = s.miou;
  r.macc = s.macc;
  return r;
}

// ---------------------------------------------------------------------------
// Training loop

TrainResult train(FoamScene scene, const Dataset& dataset, const TrainConfig& config, const TrainHooks& hooks) {
  config.validate();
  scene.validate();
  dataset.validate();
  TrainResult result;
  if (config.iterations == 0) {
    result.scene = std::move(scene);
    result.optimizer.resize_for(result.scene);
    return result;
  }
  if (dataset.views.size() < 2) throw FoamError(ErrorCode::InvalidArgument, "training needs at least 2 views");
  const std::vector<int> train_idx = dataset.indices(Split::Train);
  if (train_idx.empty()) throw FoamError(ErrorCode::InvalidArgument, "dataset has no training views");
  if (scene.num_classes() != dataset.num_classes)
    throw FoamError(ErrorCode::ShapeMismatch, "classifier head and dataset disagree on the class count");
  const bool validate = hooks.validate && !dataset.indices(Split::Val).empty();

  std::mt19937_64 rng(config.seed);
  AdamState state;
  state.resize_for(scene);
  TriangulationCache cache;
  DensifyStats stats;
  stats.reset(scene.num_sites());
  const int initial_sites = scene.num_sites();

  LossOptions lo;
  lo.weights = {config.weight_rgb, config.weight_alpha, config.weight_identity, config.weight_tv};
  lo.tv_clamp_min = config.tv_clamp_min;
  lo.render.stop_density_identity = config.stop_density_identity;
  lo.render.early_stop = config.early_stop;
  lo.workers = config.workers;

  std::vector<int> order;
  size_t cursor = 0;
  GradientBuffer grads;
  for (int it = 0; it < config.iterations; ++it) {
    if (cursor == order.size()) {
      order = train_idx;
      std::shuffle(order.begin(), order.end(), rng);
      cursor = 0;
    }
    const View& view = dataset.views[static_cast<size_t>(order[cursor++])];
    IterationInfo info;
    info.iteration = it;
    info.schedule = schedule_at(config, it);
    lo.weights.tv = info.schedule.weight_tv;

    if (hooks.gradients) {
      info.loss = hooks.gradients(scene, cache, it, view, grads);
    } else {
      const std::vector<const View*> batch{&view};
      info.loss = total_loss(scene, cache.get(scene), batch, dataset, lo, grads);
    }
    stats.accumulate(grads);
    adam_step(scene, grads, state, info.schedule, config);
    if (!info.schedule.positions_frozen) cache.invalidate();

    const int event = densify_event_index(config, it);
    if (event >= 0) {
      const std::vector<uint8_t> keep = prune_mask(scene, cache.get(scene), stats, config);
      info.pruned = static_cast<int>(std::count(keep.begin(), keep.end(), 0));
      if (info.pruned > 0) {
        state.compact(scene, keep);
        scene.compact(keep);
        cache.invalidate();
        DensifyStats kept;
        kept.iterations = stats.iterations;
        for (size_t i = 0; i < keep.size(); ++i)
          if (keep[i]) {
            kept.grad_norm.push_back(stats.grad_norm[i]);
            kept.weight.push_back(stats.weight[i]);
          }
        stats = std::move(kept);
      }
      const int k = densify_target(config, initial_sites, event) - scene.num_sites();
      if (k > 0) {
        info.added = static_cast<int>(densify(scene, cache.get(scene), stats, k, config, rng).size());
        state.resize_for(scene);
        cache.invalidate();
      }
      stats.reset(scene.num_sites());
    }
    info.num_sites = scene.num_sites();
    if (hooks.on_iteration) hooks.on_iteration(info, scene);

    const bool last = it + 1 == config.iterations;
    if (hooks.log && ((it + 1) % config.log_interval == 0 || last)) {
      char line[512];
      int len = std::snprintf(line, sizeof(line),
                              "iter=%d loss=%.6g rgb=%.6g alpha=%.6g identity=%.6g tv=%.6g sites=%d train_psnr=%.3f",
                              it + 1, info.loss.total, info.loss.rgb, info.loss.alpha, info.loss.identity, info.loss.tv,
                              info.num_sites, info.loss.psnr);
      if (validate) {
        const EvalResult e = evaluate(scene, cache.get(scene), dataset, Split::Val, lo.render, config.workers);
        std::snprintf(line + len, sizeof(line) - static_cast<size_t>(len), " val_psnr=%.3f val_miou=%.4f val_macc=%.4f",
                      e.psnr, e.miou, e.macc);
      }
      hooks.log(line);
    }
  }
  result.scene = std::move(scene);
  result.optimizer = std::move(state);
  result.iterations = config.iterations;
  return result;
}

// ---------------------------------------------------------------------------
// Checkpoints

void save_checkpoint(const std::string& prefix, const FoamScene& scene, const AdamState& state, long iteration) {
  save_scene(prefix + ".foam", scene);
  save_array_file(prefix + ".adam", iteration, state.flatten());
}

std::pair<FoamScene, AdamState> load_checkpoint(const std::string& prefix, long* iteration) {
  FoamScene scene = load_scene(prefix + ".foam");
  AdamState state = AdamState::unflatten(load_array_file(prefix + ".adam", iteration), scene);
  return {std::move(scene), std::move(state)};
}

}  // namespace semfoam
