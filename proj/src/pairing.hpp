#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "datamodel.hpp"

namespace mduit {

struct PairAssignment {
  int source_idx = 0;
  int target_idx = 0;
  double similarity = 0.0;
  friend bool operator==(const PairAssignment&, const PairAssignment&) = default;
};

struct MinedPairs {
  std::vector<int> positives;  // ascending
  std::vector<int> negatives;  // ascending
};

// Indices of the `k` most similar embeddings to `query` (self excluded),
// most similar first; equal similarities keep the lower index first.
std::vector<int> nearest_candidates(std::span<const Embedding> embeddings,
                                    int query, int k);

// For each query, its k most similar references are split into positives
// (pose within both thresholds, inclusive) and negatives.
std::vector<MinedPairs> mine_positives(std::span<const DatasetRecord> records,
                                       std::span<const Embedding> embeddings,
                                       int k_candidates, double rot_thresh_deg,
                                       double trans_thresh_m);

// `n_neg` distinct indices from [0, dataset_size) avoiding the query and
// every index in `excluded`. Reproducible given `seed`.
std::vector<int> sample_nce_negatives(int query_idx, int dataset_size,
                                      std::span<const int> excluded, int n_neg,
                                      std::uint64_t seed);

// Each record paired with its most similar record from another domain;
// ties go to the lowest index.
std::vector<PairAssignment> refresh_source_target(
    std::span<const DatasetRecord> records,
    std::span<const Embedding> embeddings);

}  // namespace mduit
