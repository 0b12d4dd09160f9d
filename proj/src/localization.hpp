#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "datamodel.hpp"
#include "networks.hpp"

namespace mduit {

struct ReferenceEntry {
  Embedding embedding;
  PoseAnnotation pose;
};

struct RecallBucket {
  double dist_m;
  double angle_deg;
};

// Nested thresholds, finest first.
inline constexpr std::array<RecallBucket, 3> kRecallBuckets{
    {{0.25, 2.0}, {0.5, 5.0}, {5.0, 10.0}}};

struct GroupRecall {
  std::string name;
  int queries = 0;
  std::array<int, 3> hits{};

  double recall(int bucket) const {
    return queries == 0 ? 0.0 : static_cast<double>(hits[bucket]) / queries;
  }
};

struct RecallReport {
  std::vector<GroupRecall> groups;  // first-seen order, then "all"

  const GroupRecall& group(const std::string& name) const;
  nlohmann::json to_json() const;
  std::string to_table() const;
};

// Index of the most similar reference (lowest index on ties).
int retrieve(const Embedding& query, std::span<const ReferenceEntry> db);

PoseAnnotation localize(const Image& query, std::span<const ReferenceEntry> db,
                        const Model& model);

struct PoseEstimate {
  std::string group;
  PoseAnnotation estimate;
  PoseAnnotation truth;
};

// A query lands in a bucket when both its translation and rotation errors
// are within that bucket's bounds.
RecallReport recall_report(std::span<const PoseEstimate> estimates);

struct LocalizationQuery {
  Image image;
  PoseAnnotation truth;
  std::string group;
};

RecallReport evaluate(std::span<const LocalizationQuery> queries,
                      std::span<const ReferenceEntry> db, const Model& model);

// Embeds the records of `references` flagged as reference; other records
// are skipped.
std::vector<ReferenceEntry> build_reference_db(const Manifest& references,
                                               const Model& model);
// Queries grouped by domain name; every record must carry a pose.
std::vector<LocalizationQuery> load_queries(const Manifest& queries);

}  // namespace mduit
