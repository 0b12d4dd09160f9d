#pragma once

#include <vector>

#include "core/tensor.hpp"
#include "datamodel.hpp"
#include "networks.hpp"

namespace mduit {

// Per-channel mean and standard deviation followed by a constant 1.
std::vector<double> color_statistics(const Image& image);

// Linear least-squares fit of one-hot domain labels on color statistics;
// prediction is the argmax of the fitted scores.
class ColorStatsClassifier {
 public:
  void fit(const std::vector<Image>& images, const std::vector<int>& labels,
           int n_classes);
  int predict(const Image& image) const;
  int classes() const { return n_classes_; }

 private:
  int n_classes_ = 0;
  std::vector<double> weights_;  // column k holds the weights of class k
};

// Mean squared difference of the content features of two images.
double content_distance(const Model& model, const Image& a, const Image& b);

}  // namespace mduit
