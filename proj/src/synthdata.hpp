#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "datamodel.hpp"

// Procedural multi-domain dataset. Scenes are top-down views of an infinite,
// seed-determined world of flat-colored primitives; the camera pose decides
// what is in view, so nearby poses see overlapping content. Appearance
// domains are global affine color changes plus sensor noise, which leave
// the luminance edge structure of a scene untouched.
namespace mduit::synth {

enum class PrimitiveKind { kRect, kCircle, kPolyline };

struct Primitive {
  PrimitiveKind kind = PrimitiveKind::kRect;
  std::array<double, 2> center{};       // world meters
  std::array<double, 2> half_extent{};  // rect
  double radius = 0.0;                  // circle
  std::vector<std::array<double, 2>> points;  // polyline vertices
  double line_width = 0.0;                    // polyline
  std::array<double, 3> color{};              // canonical RGB

  bool contains(double x, double y) const;
};

struct SceneSpec {
  std::uint64_t seed = 0;
  std::vector<Primitive> layout;  // world frame, in draw order
  PoseAnnotation camera_pose;
  double meters_per_pixel = 0.5;
};

struct AppearanceSpec {
  DomainLabel domain;
  std::array<double, 3> global_tint{};
  double brightness = 0.0;
  double contrast = 1.0;
  double noise_sigma = 0.0;
};

struct PoseJitter {
  double spacing_m = 4.0;      // trajectory step between consecutive scenes
  double trans_sigma_m = 0.5;  // Gaussian translation jitter per axis (x, y)
  double yaw_sigma_deg = 2.0;  // Gaussian heading jitter
};

// Background luminance is 0; primitive luminance is +-kLevel.
inline constexpr double kLevel = 0.6;
// Sobel-magnitude threshold on luminance used for ground-truth edges.
inline constexpr double kEdgeThreshold = 0.25;

// Pure function of (seed, pose, view size).
SceneSpec make_scene(std::uint64_t seed, const PoseAnnotation& pose, int height,
                     int width, double meters_per_pixel = 0.5);

// Deterministic in (scene, appearance, size). Throws on an empty layout.
Image render(const SceneSpec& scene, const AppearanceSpec& appearance,
             int height, int width);

// Binary map (1 = edge) of Sobel magnitude on mean-RGB luminance, borders
// replicated.
std::vector<std::uint8_t> edge_map(const Image& image,
                                   double threshold = kEdgeThreshold);
double edge_agreement(const Image& a, const Image& b,
                      double threshold = kEdgeThreshold);

// Presets: day, dusk, snow, night. Custom entries use
// name:r/g/b:brightness:contrast:noise. Ids follow list order.
std::vector<AppearanceSpec> parse_domain_spec(const std::string& spec);
AppearanceSpec preset_domain(const std::string& name);

struct DatasetOptions {
  std::uint64_t seed = 7;
  int n_scenes = 20;
  std::vector<AppearanceSpec> domains;  // domains[0] is the reference domain
  PoseJitter jitter;
  int height = 64;
  int width = 64;
  double meters_per_pixel = 0.5;
  // Offset of the trajectory in units of spacing; 0.5 places scenes halfway
  // between those of a phase-0 set built from the same seed.
  double phase = 0.0;
  int first_scene_id = 0;
  // Poses are normally only written for reference records; evaluation query
  // sets need ground truth on every record.
  bool poses_for_all = false;
  std::string manifest_name = "manifest.jsonl";
};

PoseAnnotation scene_pose(const DatasetOptions& opts, int scene_index);

// Writes PNGs under out_dir/images/<domain>/ plus the manifest; returns the
// manifest path.
std::filesystem::path generate_dataset(const DatasetOptions& opts,
                                       const std::filesystem::path& out_dir);

}  // namespace mduit::synth
