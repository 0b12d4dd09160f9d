#include "datamodel.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include <json.hpp>

#include "core/error.hpp"

namespace mduit {

using nlohmann::json;

Image::Image(int height, int width, double fill)
    : Image(Tensor(Shape{3, height, width}, fill)) {}

Image::Image(Tensor chw) : pixels_(std::move(chw)) {
  require(pixels_.rank() == 3 && pixels_.dim(0) == 3,
          "image tensor must be (3, H, W), got " + shape_str(pixels_.shape()));
  require(pixels_.dim(1) > 0 && pixels_.dim(2) > 0, "image has zero size");
  for (double v : pixels_.values())
    require(std::isfinite(v) && v >= -1.0 && v <= 1.0,
            "image pixel outside [-1, 1] or non-finite");
}

Image Image::clamped(Tensor chw) {
  for (double& v : chw.values()) {
    require(std::isfinite(v), "image pixel is non-finite");
    v = std::clamp(v, -1.0, 1.0);
  }
  return Image(std::move(chw));
}

void check_image_size(const Image& image, int factor) {
  require(image.height() % factor == 0 && image.width() % factor == 0,
          "image size " + std::to_string(image.height()) + "x" +
              std::to_string(image.width()) + " is not a multiple of " +
              std::to_string(factor));
}

PoseAnnotation PoseAnnotation::make(std::array<double, 4> q,
                                    std::array<double, 3> t) {
  PoseAnnotation p;
  p.rotation = q;
  p.translation = t;
  p.validate();
  return p;
}

PoseAnnotation PoseAnnotation::from_yaw(double yaw_deg,
                                        std::array<double, 3> t) {
  const double half = yaw_deg * M_PI / 360.0;
  return make({std::cos(half), 0.0, 0.0, std::sin(half)}, t);
}

void PoseAnnotation::validate() const {
  double n2 = 0.0;
  for (double v : rotation) n2 += v * v;
  require(std::isfinite(n2) && std::abs(std::sqrt(n2) - 1.0) <= 1e-6,
          "pose rotation is not a unit quaternion");
  for (double v : translation)
    require(std::isfinite(v), "pose translation is non-finite");
}

PoseDistance pose_distance(const PoseAnnotation& a, const PoseAnnotation& b) {
  a.validate();
  b.validate();
  double dot = 0.0;
  for (int i = 0; i < 4; ++i) dot += a.rotation[i] * b.rotation[i];
  const double c = std::min(std::abs(dot), 1.0);
  double d2 = 0.0;
  for (int i = 0; i < 3; ++i) {
    const double d = a.translation[i] - b.translation[i];
    d2 += d * d;
  }
  return {2.0 * std::acos(c) * 180.0 / M_PI, std::sqrt(d2)};
}

std::array<double, 4> quat_multiply(const std::array<double, 4>& a,
                                    const std::array<double, 4>& b) {
  return {a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3],
          a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2],
          a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1],
          a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0]};
}

void DatasetRecord::validate() const {
  require(!image_path.empty(), "record has an empty image path");
  require(!domain.name.empty(), "record has an empty domain");
  require(!is_reference || pose.has_value(),
          "reference record '" + image_path + "' lacks a pose");
  if (pose) pose->validate();
}

std::filesystem::path Manifest::resolve(const DatasetRecord& r) const {
  std::filesystem::path p(r.image_path);
  return p.is_absolute() ? p : base_dir / p;
}

std::vector<std::string> Manifest::domain_names() const {
  std::map<int, std::string> by_id;
  for (const auto& r : records) by_id[r.domain.id] = r.domain.name;
  std::vector<std::string> out;
  for (auto& [id, name] : by_id) out.push_back(name);
  return out;
}

namespace {

template <std::size_t N>
std::array<double, N> read_array(const json& j, const char* key) {
  require(j.is_array() && j.size() == N,
          std::string("pose field '") + key + "' must have " +
              std::to_string(N) + " numbers",
          ErrorCode::kParse);
  std::array<double, N> out{};
  for (std::size_t i = 0; i < N; ++i) {
    require(j[i].is_number(), std::string("pose field '") + key +
                                  "' must be numeric",
            ErrorCode::kParse);
    out[i] = j[i].get<double>();
  }
  return out;
}

}  // namespace

Manifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::kIo, "cannot open manifest " + path.string());
  Manifest m;
  m.base_dir = path.parent_path();
  std::map<std::string, int> ids;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    const std::string where =
        path.string() + ":" + std::to_string(lineno) + ": ";
    DatasetRecord r;
    try {
      const json j = json::parse(line);
      require(j.is_object(), "expected a JSON object", ErrorCode::kParse);
      require(j.contains("path") && j["path"].is_string(),
              "missing string key 'path'", ErrorCode::kParse);
      require(j.contains("domain") && j["domain"].is_string(),
              "missing string key 'domain'", ErrorCode::kParse);
      require(j.contains("reference") && j["reference"].is_boolean(),
              "missing boolean key 'reference'", ErrorCode::kParse);
      r.image_path = j["path"].get<std::string>();
      r.domain.name = j["domain"].get<std::string>();
      r.is_reference = j["reference"].get<bool>();
      if (j.contains("pose") && !j["pose"].is_null()) {
        const json& p = j["pose"];
        require(p.is_object() && p.contains("q") && p.contains("t"),
                "pose must be {\"q\": [...], \"t\": [...]}", ErrorCode::kParse);
        PoseAnnotation pose;
        pose.rotation = read_array<4>(p["q"], "q");
        pose.translation = read_array<3>(p["t"], "t");
        r.pose = pose;
      }
      if (j.contains("scene") && !j["scene"].is_null()) {
        require(j["scene"].is_number_integer(), "'scene' must be an integer",
                ErrorCode::kParse);
        r.scene = j["scene"].get<int>();
      }
    } catch (const json::exception& e) {
      fail(ErrorCode::kParse, where + e.what());
    } catch (const Error& e) {
      fail(e.code(), where + e.what());
    }
    auto [it, inserted] =
        ids.emplace(r.domain.name, static_cast<int>(ids.size()));
    r.domain.id = it->second;
    try {
      r.validate();
    } catch (const Error& e) {
      fail(ErrorCode::kValidation, where + e.what());
    }
    m.records.push_back(std::move(r));
  }
  return m;
}

void save_manifest(const std::filesystem::path& path,
                   const std::vector<DatasetRecord>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::kIo, "cannot write manifest " + path.string());
  for (const auto& r : records) {
    r.validate();
    json j;
    j["path"] = r.image_path;
    j["domain"] = r.domain.name;
    j["reference"] = r.is_reference;
    if (r.pose) {
      j["pose"] = {{"q", r.pose->rotation}, {"t", r.pose->translation}};
    }
    if (r.scene) j["scene"] = *r.scene;
    out << j.dump() << '\n';
  }
  if (!out) fail(ErrorCode::kIo, "failed writing manifest " + path.string());
}

Embedding::Embedding(std::vector<double> values) : values_(std::move(values)) {
  double n2 = 0.0;
  for (double v : values_) {
    require(std::isfinite(v), "embedding has non-finite entries");
    n2 += v * v;
  }
  require(!values_.empty() && std::abs(std::sqrt(n2) - 1.0) <= 1e-5,
          "embedding is not unit norm");
}

double Embedding::dot(const Embedding& other) const {
  require(other.values_.size() == values_.size(), "embedding size mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < values_.size(); ++i)
    s += values_[i] * other.values_[i];
  return s;
}

void HyperParams::validate() const {
  auto positive = [](double v, const char* name) {
    require(std::isfinite(v) && v > 0.0,
            std::string("hyperparameter '") + name + "' must be positive",
            ErrorCode::kConfig);
  };
  positive(margin_content, "m_c");
  positive(temperature, "tau");
  positive(n_neg, "n_neg");
  positive(betas.rec_self, "beta_rs");
  positive(betas.rec_cycle, "beta_rc");
  positive(betas.cons_content, "beta_cc");
  positive(betas.cons_appearance, "beta_ca");
  positive(betas.nce, "beta_nce");
  positive(filter_k, "filter_k");
  require(filter_k % 2 == 1, "filter_k must be odd (same padding undefined)",
          ErrorCode::kConfig);
  positive(rot_thresh_deg, "rot_thresh_deg");
  positive(trans_thresh_m, "trans_thresh_m");
  positive(adam_beta1, "adam_beta1");
  positive(adam_beta2, "adam_beta2");
  require(adam_beta1 < 1.0 && adam_beta2 < 1.0, "Adam betas must be < 1",
          ErrorCode::kConfig);
  positive(lr, "lr");
  positive(epochs_flat, "epochs_flat");
  positive(epochs_decay, "epochs_decay");
  require(batch_size == 1, "only batch_size = 1 is supported",
          ErrorCode::kConfig);
  positive(init_std, "init_std");
}

}  // namespace mduit
