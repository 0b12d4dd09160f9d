#include "evaluation.hpp"

#include <cmath>

#include <Eigen/Dense>

#include "core/error.hpp"

namespace mduit {

namespace {
constexpr int kFeatures = 7;
}

std::vector<double> color_statistics(const Image& image) {
  std::vector<double> f(kFeatures, 0.0);
  const int n = image.height() * image.width();
  const auto& v = image.tensor().values();
  for (int c = 0; c < 3; ++c) {
    double s = 0.0, s2 = 0.0;
    for (int i = 0; i < n; ++i) {
      const double x = v[static_cast<std::size_t>(c) * n + i];
      s += x;
      s2 += x * x;
    }
    const double mean = s / n;
    f[c] = mean;
    f[3 + c] = std::sqrt(std::max(s2 / n - mean * mean, 0.0));
  }
  f[6] = 1.0;
  return f;
}

void ColorStatsClassifier::fit(const std::vector<Image>& images,
                               const std::vector<int>& labels, int n_classes) {
  require(!images.empty() && images.size() == labels.size(),
          "classifier needs one label per image", ErrorCode::kInvalidArgument);
  require(n_classes >= 2, "classifier needs at least 2 classes",
          ErrorCode::kInvalidArgument);
  const int n = static_cast<int>(images.size());
  Eigen::MatrixXd x(n, kFeatures);
  Eigen::MatrixXd y = Eigen::MatrixXd::Zero(n, n_classes);
  for (int i = 0; i < n; ++i) {
    const auto f = color_statistics(images[i]);
    for (int j = 0; j < kFeatures; ++j) x(i, j) = f[j];
    require(labels[i] >= 0 && labels[i] < n_classes, "label out of range",
            ErrorCode::kInvalidArgument);
    y(i, labels[i]) = 1.0;
  }
  const Eigen::MatrixXd w = x.completeOrthogonalDecomposition().solve(y);
  n_classes_ = n_classes;
  weights_.assign(w.data(), w.data() + w.size());  // column-major
}

int ColorStatsClassifier::predict(const Image& image) const {
  require(n_classes_ > 0, "classifier is not fitted", ErrorCode::kInvalidArgument);
  const auto f = color_statistics(image);
  int best = 0;
  double best_score = 0.0;
  for (int k = 0; k < n_classes_; ++k) {
    double s = 0.0;
    for (int j = 0; j < kFeatures; ++j) s += f[j] * weights_[k * kFeatures + j];
    if (k == 0 || s > best_score) {
      best = k;
      best_score = s;
    }
  }
  return best;
}

double content_distance(const Model& model, const Image& a, const Image& b) {
  ag::NoGradGuard guard;
  const Tensor fa = model.encode_content(ag::Var(a.tensor())).value();
  const Tensor fb = model.encode_content(ag::Var(b.tensor())).value();
  require(fa.shape() == fb.shape(), "content feature shapes differ");
  double s = 0.0;
  for (std::size_t i = 0; i < fa.size(); ++i) s += (fa[i] - fb[i]) * (fa[i] - fb[i]);
  return s / static_cast<double>(fa.size());
}

}  // namespace mduit
