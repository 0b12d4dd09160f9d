#include "synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <random>
#include <sstream>

#include "core/error.hpp"
#include "core/hash.hpp"
#include "core/log.hpp"
#include "image_io.hpp"

namespace mduit::synth {

namespace {

constexpr double kCellSize = 10.0;
constexpr double kMaxPrimitiveReach = 9.0;  // cell center to farthest point

double segment_distance(double px, double py, const std::array<double, 2>& a,
                        const std::array<double, 2>& b) {
  const double vx = b[0] - a[0], vy = b[1] - a[1];
  const double wx = px - a[0], wy = py - a[1];
  const double len2 = vx * vx + vy * vy;
  double t = len2 > 0.0 ? (wx * vx + wy * vy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double dx = wx - t * vx, dy = wy - t * vy;
  return std::sqrt(dx * dx + dy * dy);
}

std::array<double, 3> primitive_color(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> chroma(-0.07, 0.07);
  const double lum = (rng() & 1) ? kLevel : -kLevel;
  const double a = chroma(rng), b = chroma(rng);
  // Zero-sum chroma keeps luminance exactly at +-kLevel.
  return {lum + a, lum + b, lum - a - b};
}

Primitive cell_primitive(std::mt19937_64& rng, double cx, double cy) {
  std::uniform_real_distribution<double> offset(-2.5, 2.5);
  std::uniform_real_distribution<double> size(1.5, 4.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Primitive p;
  p.center = {cx + offset(rng), cy + offset(rng)};
  const double kind = unit(rng);
  if (kind < 0.4) {
    p.kind = PrimitiveKind::kRect;
    p.half_extent = {size(rng), size(rng)};
  } else if (kind < 0.75) {
    p.kind = PrimitiveKind::kCircle;
    p.radius = size(rng);
  } else {
    p.kind = PrimitiveKind::kPolyline;
    std::uniform_real_distribution<double> reach(-5.0, 5.0);
    const int n = 2 + static_cast<int>(rng() % 2);
    for (int i = 0; i < n; ++i)
      p.points.push_back({p.center[0] + reach(rng), p.center[1] + reach(rng)});
    p.line_width = 1.2 + 0.8 * unit(rng);
  }
  p.color = primitive_color(rng);
  return p;
}

// Rotates (x, y, 0) by the pose quaternion and adds its translation.
std::array<double, 2> camera_to_world(const PoseAnnotation& pose, double x,
                                      double y) {
  const auto& q = pose.rotation;
  const double w = q[0], qx = q[1], qy = q[2], qz = q[3];
  // Rotation matrix rows 0 and 1 applied to (x, y, 0).
  const double r00 = 1 - 2 * (qy * qy + qz * qz), r01 = 2 * (qx * qy - qz * w);
  const double r10 = 2 * (qx * qy + qz * w), r11 = 1 - 2 * (qx * qx + qz * qz);
  return {r00 * x + r01 * y + pose.translation[0],
          r10 * x + r11 * y + pose.translation[1]};
}

std::uint64_t pose_hash(const PoseAnnotation& pose) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&h](double v) {
    h = fnv1a64(std::span<const unsigned char>(
                    reinterpret_cast<const unsigned char*>(&v), sizeof v),
                h);
  };
  for (double v : pose.rotation) feed(v);
  for (double v : pose.translation) feed(v);
  return h;
}

double parse_double(const std::string& s, const std::string& what) {
  std::size_t pos = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  require(pos == s.size() && !s.empty(),
          "domain spec: cannot parse " + what + " '" + s + "'",
          ErrorCode::kParse);
  return v;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(s);
  while (std::getline(is, cur, sep)) out.push_back(cur);
  return out;
}

}  // namespace

bool Primitive::contains(double x, double y) const {
  switch (kind) {
    case PrimitiveKind::kRect:
      return std::abs(x - center[0]) <= half_extent[0] &&
             std::abs(y - center[1]) <= half_extent[1];
    case PrimitiveKind::kCircle: {
      const double dx = x - center[0], dy = y - center[1];
      return dx * dx + dy * dy <= radius * radius;
    }
    case PrimitiveKind::kPolyline:
      for (std::size_t i = 0; i + 1 < points.size(); ++i)
        if (segment_distance(x, y, points[i], points[i + 1]) <=
            0.5 * line_width)
          return true;
      return false;
  }
  return false;
}

SceneSpec make_scene(std::uint64_t seed, const PoseAnnotation& pose, int height,
                     int width, double meters_per_pixel) {
  pose.validate();
  require(height > 0 && width > 0 && meters_per_pixel > 0.0,
          "scene view size must be positive");
  SceneSpec scene;
  scene.seed = seed;
  scene.camera_pose = pose;
  scene.meters_per_pixel = meters_per_pixel;

  const double half_diag =
      0.5 * meters_per_pixel * std::hypot(double(height), double(width));
  const double reach = half_diag + kMaxPrimitiveReach;
  const double px = pose.translation[0], py = pose.translation[1];
  const auto lo_x = static_cast<long>(std::floor((px - reach) / kCellSize));
  const auto hi_x = static_cast<long>(std::floor((px + reach) / kCellSize));
  const auto lo_y = static_cast<long>(std::floor((py - reach) / kCellSize));
  const auto hi_y = static_cast<long>(std::floor((py + reach) / kCellSize));
  // Row-major over world cells gives one global draw order shared by all
  // views, so overlaps resolve identically from nearby poses.
  for (long cy = lo_y; cy <= hi_y; ++cy) {
    for (long cx = lo_x; cx <= hi_x; ++cx) {
      std::mt19937_64 rng(mix_seed(mix_seed(seed, static_cast<std::uint64_t>(cx)),
                                   static_cast<std::uint64_t>(cy)));
      std::uniform_real_distribution<double> unit(0.0, 1.0);
      if (unit(rng) > 0.75) continue;
      Primitive p = cell_primitive(rng, (cx + 0.5) * kCellSize,
                                   (cy + 0.5) * kCellSize);
      const double d = std::hypot(p.center[0] - px, p.center[1] - py);
      if (d <= reach) scene.layout.push_back(std::move(p));
    }
  }
  return scene;
}

Image render(const SceneSpec& scene, const AppearanceSpec& appearance,
             int height, int width) {
  require(!scene.layout.empty(), "scene layout is empty");
  require(height > 0 && width > 0, "render size must be positive");
  require(appearance.contrast > 0.0 && appearance.noise_sigma >= 0.0,
          "appearance needs contrast > 0 and noise_sigma >= 0");
  Tensor t(Shape{3, height, width});
  std::mt19937_64 noise_rng(
      mix_seed(mix_seed(scene.seed, fnv1a64(appearance.domain.name)),
               pose_hash(scene.camera_pose)));
  std::normal_distribution<double> noise(0.0, 1.0);
  const double mpp = scene.meters_per_pixel;
  for (int v = 0; v < height; ++v) {
    for (int u = 0; u < width; ++u) {
      const double cx = (u + 0.5 - 0.5 * width) * mpp;
      const double cy = (0.5 * height - v - 0.5) * mpp;
      const auto w = camera_to_world(scene.camera_pose, cx, cy);
      std::array<double, 3> color{0.0, 0.0, 0.0};
      for (const auto& p : scene.layout)
        if (p.contains(w[0], w[1])) color = p.color;
      for (int c = 0; c < 3; ++c) {
        double val = appearance.contrast * color[c] + appearance.brightness +
                     appearance.global_tint[c];
        if (appearance.noise_sigma > 0.0)
          val += appearance.noise_sigma * noise(noise_rng);
        t.at(c, v, u) = val;
      }
    }
  }
  return Image::clamped(std::move(t));
}

std::vector<std::uint8_t> edge_map(const Image& image, double threshold) {
  const int h = image.height(), w = image.width();
  std::vector<double> lum(static_cast<std::size_t>(h) * w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      lum[static_cast<std::size_t>(y) * w + x] =
          (image.at(y, x, 0) + image.at(y, x, 1) + image.at(y, x, 2)) / 3.0;
  auto L = [&](int y, int x) {
    y = std::clamp(y, 0, h - 1);
    x = std::clamp(x, 0, w - 1);
    return lum[static_cast<std::size_t>(y) * w + x];
  };
  std::vector<std::uint8_t> out(lum.size(), 0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double gx = (L(y - 1, x + 1) + 2 * L(y, x + 1) + L(y + 1, x + 1)) -
                        (L(y - 1, x - 1) + 2 * L(y, x - 1) + L(y + 1, x - 1));
      const double gy = (L(y + 1, x - 1) + 2 * L(y + 1, x) + L(y + 1, x + 1)) -
                        (L(y - 1, x - 1) + 2 * L(y - 1, x) + L(y - 1, x + 1));
      out[static_cast<std::size_t>(y) * w + x] =
          std::hypot(gx, gy) > threshold ? 1 : 0;
    }
  }
  return out;
}

double edge_agreement(const Image& a, const Image& b, double threshold) {
  require(a.height() == b.height() && a.width() == b.width(),
          "edge_agreement: image size mismatch");
  const auto ea = edge_map(a, threshold), eb = edge_map(b, threshold);
  std::size_t same = 0;
  for (std::size_t i = 0; i < ea.size(); ++i) same += ea[i] == eb[i];
  return static_cast<double>(same) / static_cast<double>(ea.size());
}

AppearanceSpec preset_domain(const std::string& name) {
  AppearanceSpec a;
  a.domain.name = name;
  a.noise_sigma = 0.01;
  if (name == "day") {
    a.global_tint = {0.05, 0.03, -0.05};
    a.brightness = 0.1;
    a.contrast = 1.0;
  } else if (name == "dusk") {
    a.global_tint = {0.15, -0.02, -0.12};
    a.brightness = -0.15;
    a.contrast = 0.8;
  } else if (name == "snow") {
    a.global_tint = {-0.05, 0.0, 0.1};
    a.brightness = 0.3;
    a.contrast = 0.6;
  } else if (name == "night") {
    a.global_tint = {-0.1, -0.05, 0.1};
    a.brightness = -0.5;
    a.contrast = 0.5;
  } else {
    fail(ErrorCode::kParse, "unknown domain preset '" + name +
                                "' (expected day, dusk, snow or night)");
  }
  return a;
}

std::vector<AppearanceSpec> parse_domain_spec(const std::string& spec) {
  std::vector<AppearanceSpec> out;
  for (const std::string& entry : split(spec, ',')) {
    require(!entry.empty(), "domain spec has an empty entry", ErrorCode::kParse);
    const auto parts = split(entry, ':');
    AppearanceSpec a;
    if (parts.size() == 1) {
      a = preset_domain(parts[0]);
    } else {
      require(parts.size() == 5,
              "custom domain must be name:r/g/b:brightness:contrast:noise, got '" +
                  entry + "'",
              ErrorCode::kParse);
      a.domain.name = parts[0];
      const auto tint = split(parts[1], '/');
      require(tint.size() == 3, "tint must be r/g/b in '" + entry + "'",
              ErrorCode::kParse);
      for (int c = 0; c < 3; ++c) a.global_tint[c] = parse_double(tint[c], "tint");
      a.brightness = parse_double(parts[2], "brightness");
      a.contrast = parse_double(parts[3], "contrast");
      a.noise_sigma = parse_double(parts[4], "noise");
      require(a.contrast > 0.0 && a.noise_sigma >= 0.0,
              "domain '" + a.domain.name + "' needs contrast > 0, noise >= 0",
              ErrorCode::kParse);
    }
    for (const auto& prev : out)
      require(prev.domain.name != a.domain.name,
              "duplicate domain '" + a.domain.name + "'", ErrorCode::kParse);
    a.domain.id = static_cast<int>(out.size());
    out.push_back(a);
  }
  return out;
}

PoseAnnotation scene_pose(const DatasetOptions& opts, int scene_index) {
  const int id = opts.first_scene_id + scene_index;
  std::mt19937_64 rng(mix_seed(opts.seed ^ 0x5ce7e5ULL,
                               static_cast<std::uint64_t>(id)));
  std::normal_distribution<double> n01(0.0, 1.0);
  const double jx = n01(rng), jy = n01(rng), jyaw = n01(rng);
  const auto& j = opts.jitter;
  return PoseAnnotation::from_yaw(
      j.yaw_sigma_deg * jyaw,
      {(scene_index + opts.phase) * j.spacing_m + j.trans_sigma_m * jx,
       j.trans_sigma_m * jy, 0.0});
}

std::filesystem::path generate_dataset(const DatasetOptions& opts,
                                       const std::filesystem::path& out_dir) {
  require(opts.n_scenes >= 2, "generate_dataset needs at least 2 scenes");
  require(opts.domains.size() >= 2, "generate_dataset needs at least 2 domains");
  require(opts.height % 8 == 0 && opts.width % 8 == 0 && opts.height > 0,
          "image size must be a positive multiple of 8");
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec)
    fail(ErrorCode::kIo,
         "cannot create output directory " + out_dir.string() + ": " +
             ec.message());
  std::vector<DatasetRecord> records;
  for (std::size_t d = 0; d < opts.domains.size(); ++d) {
    const auto& app = opts.domains[d];
    const auto dir = out_dir / "images" / app.domain.name;
    std::filesystem::create_directories(dir, ec);
    if (ec)
      fail(ErrorCode::kIo, "cannot create " + dir.string() + ": " + ec.message());
    for (int i = 0; i < opts.n_scenes; ++i) {
      const PoseAnnotation pose = scene_pose(opts, i);
      const SceneSpec scene = make_scene(opts.seed, pose, opts.height,
                                         opts.width, opts.meters_per_pixel);
      const Image img = render(scene, app, opts.height, opts.width);
      char name[32];
      std::snprintf(name, sizeof name, "scene_%04d.png",
                    opts.first_scene_id + i);
      write_png(dir / name, img);
      DatasetRecord r;
      r.image_path = (std::filesystem::path("images") / app.domain.name / name)
                         .generic_string();
      r.domain = app.domain;
      r.domain.id = static_cast<int>(d);
      r.is_reference = d == 0;
      if (r.is_reference || opts.poses_for_all) r.pose = pose;
      r.scene = opts.first_scene_id + i;
      records.push_back(std::move(r));
    }
  }
  const auto manifest = out_dir / opts.manifest_name;
  save_manifest(manifest, records);
  log::info("wrote " + std::to_string(records.size()) + " records to " +
            manifest.string());
  return manifest;
}

}  // namespace mduit::synth
