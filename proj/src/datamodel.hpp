#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "core/tensor.hpp"

namespace mduit {

/// RGB picture stored channel-planar as a (3, H, W) tensor with every value
/// finite and inside [-1, 1].
class Image {
 public:
  Image() = default;
  Image(int height, int width, double fill = 0.0);
  explicit Image(Tensor chw);

  int height() const { return pixels_.empty() ? 0 : pixels_.dim(1); }
  int width() const { return pixels_.empty() ? 0 : pixels_.dim(2); }
  double at(int y, int x, int c) const { return pixels_.at(c, y, x); }
  const Tensor& tensor() const { return pixels_; }

  // Clamps into [-1, 1]; non-finite input is still rejected.
  static Image clamped(Tensor chw);

  friend bool operator==(const Image& a, const Image& b) {
    return a.pixels_ == b.pixels_;
  }

 private:
  Tensor pixels_;
};

// Encoder and discriminator strides demand H and W be multiples of `factor`.
void check_image_size(const Image& image, int factor);

struct DomainLabel {
  std::string name;
  int id = 0;
  friend bool operator==(const DomainLabel&, const DomainLabel&) = default;
};

struct PoseAnnotation {
  std::array<double, 4> rotation{1.0, 0.0, 0.0, 0.0};  // unit quaternion w,x,y,z
  std::array<double, 3> translation{0.0, 0.0, 0.0};    // meters

  // Throws a validation error unless |q| = 1 within 1e-6.
  static PoseAnnotation make(std::array<double, 4> q, std::array<double, 3> t);
  // Rotation by `yaw_deg` about +z.
  static PoseAnnotation from_yaw(double yaw_deg, std::array<double, 3> t);
  void validate() const;

  friend bool operator==(const PoseAnnotation&,
                         const PoseAnnotation&) = default;
};

struct PoseDistance {
  double angle_deg = 0.0;
  double dist_m = 0.0;
};

// Geodesic angle 2*acos(|<qa, qb>|) and Euclidean translation gap.
PoseDistance pose_distance(const PoseAnnotation& a, const PoseAnnotation& b);

// Hamilton product; used to move whole pose sets rigidly.
std::array<double, 4> quat_multiply(const std::array<double, 4>& a,
                                    const std::array<double, 4>& b);

struct DatasetRecord {
  std::string image_path;
  DomainLabel domain;
  std::optional<PoseAnnotation> pose;
  bool is_reference = false;
  // Synthetic sets know which records show the same content; real data
  // leaves this empty.
  std::optional<int> scene;

  void validate() const;
  friend bool operator==(const DatasetRecord&, const DatasetRecord&) = default;
};

struct Manifest {
  std::vector<DatasetRecord> records;
  std::filesystem::path base_dir;  // relative image paths resolve against it

  std::filesystem::path resolve(const DatasetRecord& r) const;
  std::vector<std::string> domain_names() const;  // ordered by id
};

// Line-delimited JSON: {"path", "domain", "reference", optional "pose":
// {"q": [w,x,y,z], "t": [x,y,z]}, optional "scene"}. Domain ids are assigned
// in order of first appearance.
Manifest load_manifest(const std::filesystem::path& path);
void save_manifest(const std::filesystem::path& path,
                   const std::vector<DatasetRecord>& records);

/// Unit-L2-norm descriptor from the contrastive head.
class Embedding {
 public:
  Embedding() = default;
  // Throws unless |values| = 1 within 1e-5.
  explicit Embedding(std::vector<double> values);

  const std::vector<double>& values() const { return values_; }
  std::size_t dim() const { return values_.size(); }
  double dot(const Embedding& other) const;

 private:
  std::vector<double> values_;
};

struct LossWeights {
  double rec_self = 100.0;
  double rec_cycle = 100.0;
  double cons_content = 10.0;
  double cons_appearance = 1.0;
  double nce = 1.0;
};

struct HyperParams {
  double margin_content = 0.1;
  double temperature = 0.07;
  int n_neg = 16;
  LossWeights betas;
  int filter_k = 5;
  double rot_thresh_deg = 8.0;
  double trans_thresh_m = 7.0;
  double adam_beta1 = 0.5;
  double adam_beta2 = 0.999;
  double lr = 2e-4;
  int epochs_flat = 35;
  int epochs_decay = 15;
  int batch_size = 1;
  double init_std = 0.001;

  int total_epochs() const { return epochs_flat + epochs_decay; }
  void validate() const;
};

}  // namespace mduit
