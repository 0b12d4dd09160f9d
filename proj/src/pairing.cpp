#include "pairing.hpp"

#include <algorithm>
#include <random>

#include "core/error.hpp"

namespace mduit {

std::vector<int> nearest_candidates(std::span<const Embedding> embeddings,
                                    int query, int k) {
  const int n = static_cast<int>(embeddings.size());
  require(query >= 0 && query < n, "query index out of range",
          ErrorCode::kInvalidArgument);
  require(k >= 0, "k_candidates must be non-negative",
          ErrorCode::kInvalidArgument);
  std::vector<std::pair<double, int>> scored;
  scored.reserve(n);
  for (int j = 0; j < n; ++j)
    if (j != query) scored.emplace_back(embeddings[query].dot(embeddings[j]), j);
  const auto better = [](const auto& a, const auto& b) {
    return a.first > b.first || (a.first == b.first && a.second < b.second);
  };
  const auto take = std::min<std::size_t>(k, scored.size());
  std::partial_sort(scored.begin(), scored.begin() + take, scored.end(), better);
  std::vector<int> out(take);
  for (std::size_t i = 0; i < take; ++i) out[i] = scored[i].second;
  return out;
}

std::vector<MinedPairs> mine_positives(std::span<const DatasetRecord> records,
                                       std::span<const Embedding> embeddings,
                                       int k_candidates, double rot_thresh_deg,
                                       double trans_thresh_m) {
  require(records.size() == embeddings.size(),
          "mine_positives: records and embeddings differ in length",
          ErrorCode::kInvalidArgument);
  for (const auto& r : records)
    require(r.pose.has_value(),
            "mine_positives: record '" + r.image_path + "' lacks a pose");
  std::vector<MinedPairs> out(records.size());
  for (int q = 0; q < static_cast<int>(records.size()); ++q) {
    for (int c : nearest_candidates(embeddings, q, k_candidates)) {
      const PoseDistance d = pose_distance(*records[q].pose, *records[c].pose);
      if (d.angle_deg <= rot_thresh_deg && d.dist_m <= trans_thresh_m)
        out[q].positives.push_back(c);
      else
        out[q].negatives.push_back(c);
    }
    std::sort(out[q].positives.begin(), out[q].positives.end());
    std::sort(out[q].negatives.begin(), out[q].negatives.end());
  }
  return out;
}

std::vector<int> sample_nce_negatives(int query_idx, int dataset_size,
                                      std::span<const int> excluded, int n_neg,
                                      std::uint64_t seed) {
  require(n_neg > 0, "n_neg must be positive", ErrorCode::kInvalidArgument);
  std::vector<char> blocked(std::max(dataset_size, 0), 0);
  if (query_idx >= 0 && query_idx < dataset_size) blocked[query_idx] = 1;
  for (int e : excluded)
    if (e >= 0 && e < dataset_size) blocked[e] = 1;
  std::vector<int> pool;
  for (int i = 0; i < dataset_size; ++i)
    if (!blocked[i]) pool.push_back(i);
  require(static_cast<int>(pool.size()) >= n_neg,
          "not enough records for " + std::to_string(n_neg) +
              " negatives (eligible: " + std::to_string(pool.size()) + ")");
  // Partial Fisher-Yates.
  std::mt19937_64 rng(seed);
  for (int i = 0; i < n_neg; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
    std::swap(pool[i], pool[pick(rng)]);
  }
  pool.resize(n_neg);
  return pool;
}

std::vector<PairAssignment> refresh_source_target(
    std::span<const DatasetRecord> records,
    std::span<const Embedding> embeddings) {
  require(records.size() == embeddings.size(),
          "refresh_source_target: records and embeddings differ in length",
          ErrorCode::kInvalidArgument);
  require(records.size() >= 2, "refresh_source_target: need at least 2 records");
  const int n = static_cast<int>(records.size());
  std::vector<PairAssignment> out;
  out.reserve(n);
  for (int s = 0; s < n; ++s) {
    int best = -1;
    double best_sim = 0.0;
    for (int t = 0; t < n; ++t) {
      if (records[t].domain.name == records[s].domain.name) continue;
      const double sim = embeddings[s].dot(embeddings[t]);
      if (best < 0 || sim > best_sim) {
        best = t;
        best_sim = sim;
      }
    }
    require(best >= 0, "record '" + records[s].image_path +
                           "' has no candidate in another domain");
    out.push_back({s, best, best_sim});
  }
  return out;
}

}  // namespace mduit
