// Acceptance gate: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails. Criterion 7 and the trained part of 8 need a desk-scale
// training run (about 5000 steps); pass --checkpoint to evaluate an existing
// run instead.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include <CLI11.hpp>
#include <json.hpp>

#include "adaptive_conv.hpp"
#include "checkpoint.hpp"
#include "core/autograd.hpp"
#include "core/error.hpp"
#include "core/log.hpp"
#include "evaluation.hpp"
#include "image_io.hpp"
#include "localization.hpp"
#include "losses.hpp"
#include "pairing.hpp"
#include "synthdata.hpp"
#include "trainer.hpp"

namespace fs = std::filesystem;
using namespace mduit;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

int g_failures = 0;

void report(const std::string& id, bool pass, const std::string& detail) {
  std::printf("%s criterion %s: %s\n", pass ? "PASS" : "FAIL", id.c_str(), detail.c_str());
  std::fflush(stdout);
  if (!pass) ++g_failures;
}

void info(const std::string& what) {
  std::printf("INFO %s\n", what.c_str());
  std::fflush(stdout);
}

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

Tensor random_tensor(std::mt19937_64& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> u(lo, hi);
  for (double& v : t.values()) v = u(rng);
  return t;
}

std::vector<double> random_unit(std::mt19937_64& rng, int n) {
  std::normal_distribution<double> g;
  std::vector<double> v(n);
  double s = 0.0;
  for (double& x : v) {
    x = g(rng);
    s += x * x;
  }
  for (double& x : v) x /= std::sqrt(s);
  return v;
}

// ---------------------------------------------------------------- 1

Tensor brute_force_conv(const Tensor& x, const Tensor& w, const Tensor* b, int groups) {
  const int h = x.dim(1), wd = x.dim(2);
  const int cout = w.dim(0), cpg = w.dim(1), k = w.dim(2), pad = (k - 1) / 2;
  const int opg = cout / groups;
  Tensor y(Shape{cout, h, wd});
  for (int o = 0; o < cout; ++o)
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < wd; ++j) {
        double s = b ? (*b)[o] : 0.0;
        for (int c = 0; c < cpg; ++c)
          for (int u = 0; u < k; ++u)
            for (int v = 0; v < k; ++v) {
              const int yy = i + u - pad, xx = j + v - pad;
              if (yy < 0 || yy >= h || xx < 0 || xx >= wd) continue;
              s += w[((static_cast<std::size_t>(o) * cpg + c) * k + u) * k + v] *
                   x.at((o / opg) * cpg + c, yy, xx);
            }
        y.at(o, i, j) = s;
      }
  return y;
}

void criterion_convolution() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(1001);
  std::uniform_int_distribution<int> cdist(1, 8), kdist(0, 3), hdist(3, 9);
  double worst = 0.0;
  const int instances = 200;
  for (int n = 0; n < instances; ++n) {
    const int c = cdist(rng);
    std::vector<int> divisors;
    for (int g = 1; g <= c; ++g)
      if (c % g == 0) divisors.push_back(g);
    const int groups = divisors[std::uniform_int_distribution<std::size_t>(
        0, divisors.size() - 1)(rng)];
    const int k = 2 * kdist(rng) + 1;
    AppearanceFilter f;
    f.groups = groups;
    f.weights = ag::Var(random_tensor(rng, {c, c / groups, k, k}));
    if (n % 2) f.bias = ag::Var(random_tensor(rng, {c}));
    const Tensor x = random_tensor(rng, {c, hdist(rng), hdist(rng)});
    const Tensor y = apply(ag::Var(x), f).value();
    const Tensor oracle =
        brute_force_conv(x, f.weights.value(), n % 2 ? &f.bias.value() : nullptr, groups);
    AppearanceFilter dense;
    dense.weights = ag::Var(expand_block_diagonal(f));
    dense.bias = f.bias;
    dense.groups = 1;
    const Tensor yd = apply(ag::Var(x), dense).value();
    worst = std::max({worst, max_abs_diff(y, oracle), max_abs_diff(yd, oracle)});
  }
  const double secs = seconds_since(t0);
  report("1", worst < 1e-6 && secs < 10.0,
         std::to_string(instances) + " instances, max abs error " + fmt("%.3g", worst) +
             ", " + fmt("%.2f", secs) + " s");
}

// ---------------------------------------------------------------- 2

void criterion_normalization() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(1002);
  double worst = 0.0;
  for (int n = 0; n < 50; ++n) {
    const int c = 1 + n % 8, h = 3 + n % 5, w = 4 + n % 3;
    const Tensor x = random_tensor(rng, {c, h, w}, -3.0, 2.0);
    Tensor sm(Shape{c}), ss(Shape{c}), tm = random_tensor(rng, {c}, -1.0, 1.0),
        ts = random_tensor(rng, {c}, 0.1, 2.0);
    const int plane = h * w;
    for (int ch = 0; ch < c; ++ch) {
      double m = 0.0, v = 0.0;
      for (int i = 0; i < plane; ++i) m += x[ch * plane + i];
      m /= plane;
      for (int i = 0; i < plane; ++i) v += (x[ch * plane + i] - m) * (x[ch * plane + i] - m);
      sm[ch] = m;
      ss[ch] = std::sqrt(v / plane);
    }
    const Tensor y = apply(ag::Var(x), statistics_transfer_filter(sm, ss, tm, ts)).value();
    // Channel-wise affine restyling written out directly.
    for (int ch = 0; ch < c; ++ch)
      for (int i = 0; i < plane; ++i) {
        const double expect = (x[ch * plane + i] - sm[ch]) / ss[ch] * ts[ch] + tm[ch];
        worst = std::max(worst, std::abs(y[ch * plane + i] - expect));
      }
  }
  const double secs = seconds_since(t0);
  report("2", worst < 1e-6 && secs < 1.0,
         "1x1 statistics filter vs affine restyling, max abs error " + fmt("%.3g", worst) +
             ", " + fmt("%.3f", secs) + " s");
}

// ---------------------------------------------------------------- 3

struct GradResult {
  double rel_error;
  std::size_t elements;
};

GradResult grad_check(const std::function<ag::Var(const std::vector<ag::Var>&)>& f,
                      const std::vector<Tensor>& inputs, double eps) {
  std::vector<ag::Var> vars;
  for (const auto& t : inputs) vars.emplace_back(t, true);
  ag::backward(f(vars));
  double diff = 0.0, na = 0.0, nn = 0.0;
  std::size_t elements = 0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    elements += inputs[k].size();
    for (std::size_t i = 0; i < inputs[k].size(); ++i) {
      const double a = vars[k].has_grad() ? vars[k].grad()[i] : 0.0;
      auto eval = [&](double delta) {
        std::vector<ag::Var> shifted;
        for (std::size_t j = 0; j < inputs.size(); ++j) {
          Tensor t = inputs[j];
          if (j == k) t[i] += delta;
          shifted.emplace_back(std::move(t), false);
        }
        ag::NoGradGuard guard;
        return f(shifted).item();
      };
      const double n = (eval(eps) - eval(-eps)) / (2.0 * eps);
      diff += (a - n) * (a - n);
      na += a * a;
      nn += n * n;
    }
  }
  return {std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nn), 1e-12}), elements};
}

ag::Var weighted(const ag::Var& y, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const Tensor w = random_tensor(rng, y.shape());
  return ag::make_op(
      Tensor::scalar([&] {
        double s = 0.0;
        for (std::size_t i = 0; i < w.size(); ++i) s += w[i] * y.value()[i];
        return s;
      }()),
      {y}, [w](ag::Node& self) {
        ag::Node& p = *self.parents[0];
        for (std::size_t i = 0; i < w.size(); ++i) p.grad_buffer()[i] += self.grad[0] * w[i];
      });
}

void criterion_gradients() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(1003);
  using F = std::function<ag::Var(const std::vector<ag::Var>&)>;
  namespace L = losses;
  FilterSpec spec{4, 2, 3, true};
  auto prob = [&] { return random_tensor(rng, {1, 3, 3}, 0.05, 0.95); };
  auto vec6 = [&] { return random_tensor(rng, {6}); };
  struct Case {
    std::string name;
    F f;
    std::vector<Tensor> inputs;
  };
  std::vector<Case> cases;
  for (int trial = 0; trial < 3; ++trial) {
    const std::string tag = "#" + std::to_string(trial);
    cases.push_back({"adaptive_conv" + tag,
                     [spec](auto& v) {
                       const AppearanceFilter f =
                           generate_filter(v[1], FilterEncoderParams{v[2], v[3], v[4], v[5]}, spec);
                       return weighted(apply(v[0], f), 11);
                     },
                     {random_tensor(rng, {4, 4, 4}), random_tensor(rng, {3, 3, 3}),
                      random_tensor(rng, {5, 3}), random_tensor(rng, {5}, 0.1, 1.0),
                      random_tensor(rng, {spec.output_count(), 5}),
                      random_tensor(rng, {spec.output_count()})}});
    cases.push_back({"gem_pool" + tag,
                     [](auto& v) { return weighted(ag::gem_pool(v[0], v[1], 1e-6), 12); },
                     {random_tensor(rng, {4, 5, 5}, 0.05, 1.0),
                      Tensor::scalar(std::uniform_real_distribution<double>(1.5, 4.0)(rng))}});
    cases.push_back({"adv_image" + tag,
                     [](auto& v) { return L::adv_image(v[0], v[1], v[2]).discriminator; },
                     {prob(), prob(), prob()}});
    cases.push_back({"adv_appearance" + tag,
                     [](auto& v) { return L::adv_appearance(v[0], v[1]).discriminator; },
                     {prob(), prob()}});
    cases.push_back({"adv_generator" + tag, [](auto& v) { return L::adv_generator(v[0]); },
                     {prob()}});
    cases.push_back({"rec_self" + tag, [](auto& v) { return L::rec_self(v[0], v[1]); },
                     {random_tensor(rng, {3, 4, 4}), random_tensor(rng, {3, 4, 4})}});
    cases.push_back({"rec_cycle" + tag, [](auto& v) { return L::rec_cycle(v[0], v[1]); },
                     {random_tensor(rng, {3, 4, 4}), random_tensor(rng, {3, 4, 4})}});
    cases.push_back({"cons_content" + tag,
                     [](auto& v) { return L::cons_content(v[0], v[1], v[2], 10.0); },
                     {vec6(), vec6(), vec6()}});
    cases.push_back({"cons_appearance" + tag,
                     [](auto& v) { return L::cons_appearance(v[0], v[1], v[2]); },
                     {vec6(), vec6(), vec6()}});
    cases.push_back({"nce" + tag,
                     [](auto& v) {
                       std::vector<ag::Var> negs;
                       for (std::size_t i = 2; i < v.size(); ++i)
                         negs.push_back(ag::l2_normalize(v[i]));
                       return L::nce(ag::l2_normalize(v[0]), ag::l2_normalize(v[1]), negs, 0.5);
                     },
                     {vec6(), vec6(), vec6(), vec6(), vec6()}});
  }
  double worst = 0.0;
  std::string worst_name;
  std::size_t largest = 0;
  for (const auto& c : cases) {
    const GradResult r = grad_check(c.f, c.inputs, 1e-5);
    largest = std::max(largest, r.elements);
    if (r.rel_error >= worst) {
      worst = r.rel_error;
      worst_name = c.name;
    }
  }
  const double secs = seconds_since(t0);
  report("3", worst < 1e-3 && largest <= 1000 && secs < 60.0,
         std::to_string(cases.size()) + " checks, worst relative error " + fmt("%.3g", worst) +
             " (" + worst_name + "), largest instance " + std::to_string(largest) +
             " elements, " + fmt("%.2f", secs) + " s");
}

// ---------------------------------------------------------------- 4

ag::Var basis(int dim, int i) {
  Tensor t(Shape{dim}, 0.0);
  t[i] = 1.0;
  return ag::Var(t);
}

ag::Var scalar(double v) { return ag::Var(Tensor::scalar(v)); }

void criterion_loss_values() {
  namespace L = losses;
  std::vector<std::string> failed;
  auto expect = [&](bool ok, const std::string& what) {
    if (!ok) failed.push_back(what);
  };

  const ag::Var z = basis(8, 3);
  const double equal = L::nce(z, z, std::vector<ag::Var>{z}, 0.07).item();
  expect(std::abs(equal - std::log(2.0)) <= 1e-9, "nce log 2");

  std::vector<ag::Var> orth;
  for (int i = 1; i <= 16; ++i) orth.push_back(basis(32, i));
  const double closed = std::log1p(16.0 * std::exp(-1.0 / 0.07));
  const double got = L::nce(basis(32, 0), basis(32, 0), orth, 0.07).item();
  expect(std::abs(got - closed) <= 1e-7 && std::abs(closed - 9.9e-6) < 1e-6,
         "nce 16 orthogonal negatives");

  const ag::Var zeros(Tensor(Shape{4}, 0.0));
  expect(L::cons_content(zeros, zeros, ag::Var(Tensor(Shape{4}, 2.0)), 0.1).item() == 0.0,
         "content hinge zero");
  expect(L::cons_content(zeros, zeros, zeros, 0.1).item() == 0.1, "content hinge margin");
  const ag::Var e0 = basis(4, 0), e1 = basis(4, 1);
  expect(L::cons_appearance(e0, e0, e1).item() == 0.0, "appearance hinge zero");
  expect(L::cons_appearance(e0, e0, e0).item() == 1.0, "appearance hinge margin");

  std::mt19937_64 rng(1004);
  std::uniform_real_distribution<double> u(0.0, 3.0);
  const LossWeights betas;  // 100, 100, 10, 1, 1
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const double v[7] = {u(rng), u(rng), u(rng), u(rng), u(rng), u(rng), u(rng)};
    L::GeneratorTerms t{scalar(v[0]), scalar(v[1]), scalar(v[2]), scalar(v[3]),
                        scalar(v[4]), scalar(v[5]), scalar(v[6])};
    const double oracle =
        v[0] + v[1] + 100.0 * v[2] + 100.0 * v[3] + 10.0 * v[4] + 1.0 * v[5] + 1.0 * v[6];
    worst = std::max(worst, std::abs(L::generator_total(t, betas).item() - oracle));
  }
  expect(betas.rec_self == 100.0 && betas.rec_cycle == 100.0 && betas.cons_content == 10.0 &&
             betas.cons_appearance == 1.0 && betas.nce == 1.0 && worst <= 1e-9,
         "weighted total");

  std::string detail = "nce equal-logit error " + fmt("%.2g", std::abs(equal - std::log(2.0))) +
                       ", 16-negative value " + fmt("%.6g", got) + " vs " + fmt("%.6g", closed) +
                       ", total max error " + fmt("%.2g", worst);
  for (const auto& f : failed) detail += "; failed: " + f;
  report("4", failed.empty(), detail);
}

// ---------------------------------------------------------------- 5

PoseAnnotation random_pose(std::mt19937_64& rng, double spread) {
  const auto q = random_unit(rng, 4);
  // Keep rotations mostly small so both sides of the 8 degree bound occur.
  const double s = std::uniform_real_distribution<double>(0.0, 1.0)(rng) < 0.7 ? 0.05 : 1.0;
  const double n = std::sqrt(1.0 + s * s * (q[1] * q[1] + q[2] * q[2] + q[3] * q[3]));
  std::uniform_real_distribution<double> u(-spread, spread);
  return PoseAnnotation::make({1.0 / n, s * q[1] / n, s * q[2] / n, s * q[3] / n},
                              {u(rng), u(rng), u(rng)});
}

double angle_deg(const PoseAnnotation& a, const PoseAnnotation& b) {
  double dot = 0.0;
  for (int i = 0; i < 4; ++i) dot += a.rotation[i] * b.rotation[i];
  return 2.0 * std::acos(std::min(1.0, std::abs(dot))) * 180.0 / M_PI;
}

double dist_m(const PoseAnnotation& a, const PoseAnnotation& b) {
  double s = 0.0;
  for (int i = 0; i < 3; ++i) s += (a.translation[i] - b.translation[i]) * (a.translation[i] - b.translation[i]);
  return std::sqrt(s);
}

void criterion_pairing() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(1005);
  const int n = 200, k = 20;
  const char* names[] = {"day", "snow", "night"};
  int mismatches = 0, positives = 0, bad_positive = 0, same_domain = 0;
  for (int set = 0; set < 5; ++set) {
    std::vector<DatasetRecord> recs;
    std::vector<Embedding> emb;
    for (int i = 0; i < n; ++i) {
      DatasetRecord r;
      r.image_path = std::to_string(i) + ".png";
      const int d = static_cast<int>(rng() % 3);
      r.domain = {names[d], d};
      r.pose = random_pose(rng, 8.0);
      r.is_reference = true;
      recs.push_back(r);
      emb.emplace_back(random_unit(rng, 8));
    }
    const auto mined = mine_positives(recs, emb, k, 8.0, 7.0);
    for (int q = 0; q < n; ++q) {
      // O(n^2) enumeration: rank everything, take the top k, split by pose.
      std::vector<int> order;
      for (int j = 0; j < n; ++j)
        if (j != q) order.push_back(j);
      std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return emb[q].dot(emb[a]) > emb[q].dot(emb[b]);
      });
      std::vector<int> pos, neg;
      for (int i = 0; i < k; ++i) {
        const int c = order[i];
        (angle_deg(*recs[q].pose, *recs[c].pose) <= 8.0 && dist_m(*recs[q].pose, *recs[c].pose) <= 7.0
             ? pos
             : neg)
            .push_back(c);
      }
      std::sort(pos.begin(), pos.end());
      std::sort(neg.begin(), neg.end());
      if (pos != mined[q].positives || neg != mined[q].negatives) ++mismatches;
      for (int p : mined[q].positives) {
        ++positives;
        const PoseDistance d = pose_distance(*recs[q].pose, *recs[p].pose);
        if (d.angle_deg > 8.0 || d.dist_m > 7.0) ++bad_positive;
      }
    }
    const auto assigned = refresh_source_target(recs, emb);
    for (int s = 0; s < n; ++s) {
      int best = -1;
      for (int t = 0; t < n; ++t)
        if (recs[t].domain.name != recs[s].domain.name &&
            (best < 0 || emb[s].dot(emb[t]) > emb[s].dot(emb[best])))
          best = t;
      if (assigned[s].target_idx != best) ++mismatches;
      if (recs[assigned[s].target_idx].domain.name == recs[s].domain.name) ++same_domain;
    }
  }
  const double secs = seconds_since(t0);
  report("5", mismatches == 0 && bad_positive == 0 && same_domain == 0 && positives > 0 &&
                  secs < 30.0,
         "5 sets of 200 records: " + std::to_string(mismatches) + " mismatches, " +
             std::to_string(positives) + " positives (" + std::to_string(bad_positive) +
             " outside thresholds), " + std::to_string(same_domain) +
             " same-domain assignments, " + fmt("%.2f", secs) + " s");
}

// ---------------------------------------------------------------- 6

TrainConfig toy_config() {
  TrainConfig cfg;
  cfg.image_size = 32;
  cfg.content_channels = 8;
  cfg.base_channels = 4;
  cfg.embed_dim = 8;
  cfg.filter_hidden = 8;
  cfg.disc_channels = 4;
  cfg.k_candidates = 2;
  cfg.hp.n_neg = 2;
  cfg.hp.epochs_flat = 2;
  cfg.hp.epochs_decay = 2;
  cfg.hp.init_std = 0.05;
  return cfg;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void criterion_determinism(const fs::path& work) {
  synth::DatasetOptions opts;
  opts.n_scenes = 4;
  opts.height = opts.width = 32;
  opts.domains = synth::parse_domain_spec("day,snow,night");
  const Manifest m = load_manifest(synth::generate_dataset(opts, work / "toy"));
  const TrainConfig cfg = toy_config();

  FitOptions a, b, first, second;
  a.out_dir = work / "fit_a";
  b.out_dir = work / "fit_b";
  fit(m, cfg, a);
  fit(m, cfg, b);
  const std::string log_a = read_file(a.out_dir / "metrics.jsonl");
  const bool same = !log_a.empty() && log_a == read_file(b.out_dir / "metrics.jsonl");

  first.out_dir = second.out_dir = work / "fit_resumed";
  first.stop_after_epoch = 2;
  second.resume_from = fit(m, cfg, first);
  fit(m, cfg, second);
  const bool replay = log_a == read_file(second.out_dir / "metrics.jsonl");
  const bool final_same =
      read_file(a.out_dir / "final.ckpt") == read_file(second.out_dir / "final.ckpt");
  const long lines = std::count(log_a.begin(), log_a.end(), '\n');
  report("6", same && replay && final_same,
         std::to_string(lines) + " logged steps; repeated fit " +
             (same ? "identical" : "DIFFERS") + "; resume from epoch 2 " +
             (replay ? "identical" : "DIFFERS") + "; final checkpoints " +
             (final_same ? "byte-identical" : "DIFFER"));
}

// ---------------------------------------------------------------- 7, 8

struct DeskData {
  Manifest train, held_out;
  std::vector<Image> train_images, held_images;
  // Extra query positions a quarter spacing either side of the held-out
  // ones; localization uses all three sets.
  std::vector<Manifest> extra_queries;
};

DeskData make_desk_data(const fs::path& work) {
  synth::DatasetOptions opts;
  opts.n_scenes = 20;
  opts.domains = synth::parse_domain_spec("day,snow,night");
  DeskData d;
  d.train = load_manifest(synth::generate_dataset(opts, work / "desk_train"));
  synth::DatasetOptions held = opts;
  held.phase = 0.5;
  held.first_scene_id = 1000;
  held.poses_for_all = true;
  d.held_out = load_manifest(synth::generate_dataset(held, work / "desk_held_out"));
  for (const double phase : {0.25, 0.75}) {
    held.phase = phase;
    held.first_scene_id += 100;
    d.extra_queries.push_back(load_manifest(synth::generate_dataset(
        held, work / ("desk_queries_" + std::to_string(held.first_scene_id)))));
  }
  for (const auto& r : d.train.records) d.train_images.push_back(read_png(d.train.resolve(r)));
  for (const auto& r : d.held_out.records)
    d.held_images.push_back(read_png(d.held_out.resolve(r)));
  return d;
}

// Scaled so that 20 scenes x 3 domains gives about 5000 steps with the same
// flat:decay proportion as the default schedule. The default init and lr
// leave the normalization-free networks far from converged in that budget.
TrainConfig desk_config() {
  TrainConfig cfg;
  cfg.hp.epochs_flat = 58;
  cfg.hp.epochs_decay = 25;
  cfg.hp.lr = 1e-3;
  cfg.init_scheme = "fan_in";
  return cfg;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double cosine(const Tensor& a, const Tensor& b) {
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  return ab / std::sqrt(aa * bb);
}

double mean_of(const Tensor& t) {
  double s = 0.0;
  for (double v : t.values()) s += v;
  return s / static_cast<double>(t.size());
}

void training_progress(const fs::path& metrics) {
  std::ifstream in(metrics);
  std::vector<double> g;
  for (std::string line; std::getline(in, line);)
    if (!line.empty()) g.push_back(nlohmann::json::parse(line)["generator_total"].get<double>());
  if (g.size() < 200) {
    info("training progress: fewer than 200 logged steps");
    return;
  }
  const double first = median({g.begin(), g.begin() + 100});
  const double last = median({g.end() - 100, g.end()});
  info("training progress: generator total median first 100 steps " + fmt("%.4g", first) +
       ", last 100 steps " + fmt("%.4g", last) + " (" + std::to_string(g.size()) + " steps)");
}

void criterion_training(const Model& model, const DeskData& d) {
  const auto& held = d.held_out.records;
  const int n = static_cast<int>(held.size());

  // a. self-reconstruction
  double l1 = 0.0;
  for (const auto& img : d.held_images) {
    const Image rec = model.translate(img, img);
    double s = 0.0;
    for (std::size_t i = 0; i < img.tensor().size(); ++i)
      s += std::abs(rec.tensor()[i] - img.tensor()[i]);
    l1 += s / static_cast<double>(img.tensor().size());
  }
  l1 /= n;
  report("7a", l1 < 0.08, "held-out self-reconstruction L1 " + fmt("%.4f", l1) + " (< 0.08)");

  // b, c. translate every held-out image to one target of each other domain.
  ColorStatsClassifier clf;
  std::vector<int> labels;
  for (const auto& r : d.train.records) labels.push_back(r.domain.id);
  clf.fit(d.train_images, labels, static_cast<int>(d.train.domain_names().size()));
  int correct = 0, total = 0, real_correct = 0;
  double edge = 0.0;
  std::map<std::string, std::vector<int>> by_domain;
  for (int i = 0; i < n; ++i) by_domain[held[i].domain.name].push_back(i);
  for (int i = 0; i < n; ++i) {
    real_correct += clf.predict(d.held_images[i]) == held[i].domain.id;
    for (const auto& [name, members] : by_domain) {
      if (name == held[i].domain.name) continue;
      const int t = members[(i * 7 + 3) % members.size()];
      const Image out = model.translate(d.held_images[i], d.held_images[t]);
      correct += clf.predict(out) == held[t].domain.id;
      edge += synth::edge_agreement(d.held_images[i], out);
      ++total;
    }
  }
  info("color classifier on real held-out images: " + std::to_string(real_correct) + "/" +
       std::to_string(n));
  const double acc = static_cast<double>(correct) / total;
  report("7b", acc >= 0.8,
         "translated images classified as target domain " + std::to_string(correct) + "/" +
             std::to_string(total) + " = " + fmt("%.3f", acc) + " (>= 0.80)");
  edge /= total;
  report("7c", edge >= 0.9,
         "mean source/translation edge agreement " + fmt("%.4f", edge) + " (>= 0.90)");

  // d. content distances.
  double same_scene = 0.0, cross_scene = 0.0;
  int n_same = 0, n_cross = 0;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      const bool scene_eq = held[i].scene == held[j].scene;
      const bool domain_eq = held[i].domain == held[j].domain;
      if (scene_eq && !domain_eq) {
        same_scene += content_distance(model, d.held_images[i], d.held_images[j]);
        ++n_same;
      } else if (!scene_eq && domain_eq) {
        cross_scene += content_distance(model, d.held_images[i], d.held_images[j]);
        ++n_cross;
      }
    }
  same_scene /= n_same;
  cross_scene /= n_cross;
  report("7d", same_scene < cross_scene,
         "content distance same-scene/cross-domain " + fmt("%.4g", same_scene) +
             " vs cross-scene/same-domain " + fmt("%.4g", cross_scene));

  // Post-training diagnostics, reported but not gated.
  double cos_same = 0.0, cos_cross = 0.0;
  int c_same = 0, c_cross = 0;
  std::vector<Tensor> filters;
  {
    ag::NoGradGuard guard;
    for (const auto& img : d.held_images)
      filters.push_back(model.appearance_filter(ag::Var(img.tensor())).weights.value());
  }
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      const double c = cosine(filters[i], filters[j]);
      if (held[i].domain == held[j].domain) {
        cos_same += c;
        ++c_same;
      } else {
        cos_cross += c;
        ++c_cross;
      }
    }
  info("appearance filter cosine same-domain " + fmt("%.4f", cos_same / c_same) +
       " vs cross-domain " + fmt("%.4f", cos_cross / c_cross));
  double d_real = 0.0, d_fake = 0.0, a_same = 0.0, a_cross = 0.0;
  {
    ag::NoGradGuard guard;
    for (int i = 0; i < n; ++i) {
      const auto& members = by_domain[held[i].domain.name];
      const int same = members[(i + 1) % members.size()] == i
                           ? members[(i + 2) % members.size()]
                           : members[(i + 1) % members.size()];
      const int other = (i + n / 3) % n;
      const ag::Var x(d.held_images[i].tensor());
      const ag::Var fake(model.translate(d.held_images[other], d.held_images[i]).tensor());
      d_real += mean_of(model.discriminate_image(x).value());
      d_fake += mean_of(model.discriminate_image(fake).value());
      a_same += mean_of(
          model.discriminate_appearance(x, ag::Var(d.held_images[same].tensor())).value());
      a_cross += mean_of(model.discriminate_appearance(x, fake).value());
    }
  }
  info("image discriminator real " + fmt("%.4f", d_real / n) + " vs translated " +
       fmt("%.4f", d_fake / n));
  info("appearance discriminator same-domain " + fmt("%.4f", a_same / n) +
       " vs cross-domain " + fmt("%.4f", a_cross / n));
}

void criterion_localization(const Model& trained, const Model& untrained, const DeskData& d,
                            const std::string& hard_domain) {
  std::vector<std::string> failed;
  // Hand-counted example.
  auto offset = [](double dist, double yaw) {
    return PoseEstimate{"q", PoseAnnotation::from_yaw(yaw, {dist, 0, 0}),
                        PoseAnnotation::from_yaw(0.0, {0, 0, 0})};
  };
  const std::vector<PoseEstimate> hand{offset(0.1, 1.0), offset(0.4, 3.0), offset(6.0, 1.0)};
  const GroupRecall& g = recall_report(hand).group("q");
  const bool hand_ok = g.queries == 3 && g.hits == std::array<int, 3>{1, 2, 2} &&
                       g.recall(0) == 1.0 / 3.0 && g.recall(1) == 2.0 / 3.0 &&
                       g.recall(2) == 2.0 / 3.0;
  if (!hand_ok) failed.push_back("hand count");

  // Monotonicity on randomized query sets.
  std::mt19937_64 rng(1008);
  std::uniform_int_distribution<int> size(1, 30);
  std::uniform_real_distribution<double> dist(0.0, 8.0), yaw(-20.0, 20.0);
  int violations = 0;
  for (int s = 0; s < 1000; ++s) {
    std::vector<PoseEstimate> est;
    for (int i = 0, m = size(rng); i < m; ++i) {
      const auto truth = random_pose(rng, 50.0);
      auto e = truth;
      e.translation[0] += dist(rng);
      const auto spin = PoseAnnotation::from_yaw(yaw(rng), {0, 0, 0});
      e = PoseAnnotation::make(quat_multiply(spin.rotation, truth.rotation), e.translation);
      est.push_back({i % 3 ? "a" : "b", e, truth});
    }
    for (const auto& gr : recall_report(est).groups)
      if (gr.recall(0) > gr.recall(1) || gr.recall(1) > gr.recall(2)) ++violations;
  }
  if (violations) failed.push_back("monotonicity");

  // Trained vs untrained on the hard held-out domain. 20 queries would
  // quantize recall in steps of 0.05 around a chance level near 0.1, so
  // three trajectory phases are pooled.
  std::vector<LocalizationQuery> queries;
  for (Manifest hard : {d.held_out, d.extra_queries.at(0), d.extra_queries.at(1)}) {
    std::erase_if(hard.records,
                  [&](const DatasetRecord& r) { return r.domain.name != hard_domain; });
    for (auto& q : load_queries(hard)) queries.push_back(std::move(q));
  }
  const auto db_trained = build_reference_db(d.train, trained);
  const auto db_untrained = build_reference_db(d.train, untrained);
  const RecallReport rt = evaluate(queries, db_trained, trained);
  const RecallReport ru = evaluate(queries, db_untrained, untrained);
  const double coarse_t = rt.group(hard_domain).recall(2);
  const double coarse_u = ru.group(hard_domain).recall(2);
  if (!(coarse_t > coarse_u)) failed.push_back("trained recall");
  std::string detail = std::string("hand count ") + (hand_ok ? "exact" : "WRONG") + "; " +
                       std::to_string(violations) + " monotonicity violations in 1000 sets; " +
                       hard_domain + " coarse (5 m, 10 deg) recall trained " +
                       fmt("%.3f", coarse_t) + " vs untrained " + fmt("%.3f", coarse_u);
  for (const auto& f : failed) detail += "; failed: " + f;
  report("8", failed.empty(), detail);
  info("trained recall table (" + hard_domain + " queries):\n" + rt.to_table());
  info("untrained recall table:\n" + ru.to_table());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::string work_arg, checkpoint;
  bool keep = false;
  app.add_option("--work", work_arg, "Working directory (default: fresh temp dir)");
  app.add_option("--checkpoint", checkpoint,
                 "Evaluate this desk-scale checkpoint instead of training one");
  app.add_flag("--keep", keep, "Keep the working directory");
  CLI11_PARSE(app, argc, argv);

  const fs::path work = work_arg.empty() ? fs::temp_directory_path() /
                                               ("mduit_acceptance_" + std::to_string(::getpid()))
                                         : fs::path(work_arg);
  fs::create_directories(work);
  log::set_verbosity(log::Level::kQuiet);

  try {
    criterion_convolution();
    criterion_normalization();
    criterion_gradients();
    criterion_loss_values();
    criterion_pairing();
    criterion_determinism(work);

    const auto t0 = Clock::now();
    const DeskData desk = make_desk_data(work);
    fs::path ckpt = checkpoint;
    if (ckpt.empty()) {
      FitOptions o;
      o.out_dir = work / "desk_run";
      log::set_verbosity(log::Level::kInfo);
      ckpt = fit(desk.train, desk_config(), o);
      log::set_verbosity(log::Level::kQuiet);
      info("desk training took " + fmt("%.0f", seconds_since(t0)) + " s");
      training_progress(o.out_dir / "metrics.jsonl");
    } else {
      info("evaluating existing checkpoint " + ckpt.string());
      training_progress(ckpt.parent_path() / "metrics.jsonl");
    }
    Checkpoint ck = load_checkpoint(ckpt);
    const Model untrained(ck.config.network(), init_params(ck.config));
    const Model model(ck.config.network(), std::move(ck.params));
    criterion_training(model, desk);
    criterion_localization(model, untrained, desk, "night");
  } catch (const std::exception& e) {
    std::printf("FAIL acceptance aborted: %s\n", e.what());
    ++g_failures;
  }
  if (!keep && work_arg.empty()) fs::remove_all(work);
  std::printf("%s: %d criterion line(s) failed\n", g_failures ? "FAILED" : "PASSED", g_failures);
  return g_failures ? 1 : 0;
}
