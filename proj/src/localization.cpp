#include "localization.hpp"

#include <cstdio>

#include "core/error.hpp"
#include "image_io.hpp"

namespace mduit {

const GroupRecall& RecallReport::group(const std::string& name) const {
  for (const auto& g : groups)
    if (g.name == name) return g;
  fail(ErrorCode::kInvalidArgument, "no query group '" + name + "'");
}

nlohmann::json RecallReport::to_json() const {
  nlohmann::ordered_json buckets = nlohmann::ordered_json::array();
  for (const auto& b : kRecallBuckets)
    buckets.push_back({{"dist_m", b.dist_m}, {"angle_deg", b.angle_deg}});
  nlohmann::ordered_json groups_json = nlohmann::ordered_json::array();
  for (const auto& g : groups) {
    nlohmann::ordered_json recalls = nlohmann::ordered_json::array();
    for (int i = 0; i < 3; ++i) recalls.push_back(g.recall(i));
    groups_json.push_back({{"group", g.name},
                           {"queries", g.queries},
                           {"hits", g.hits},
                           {"recall", recalls}});
  }
  nlohmann::ordered_json j;
  j["buckets"] = buckets;
  j["groups"] = groups_json;
  return j;
}

std::string RecallReport::to_table() const {
  std::string out;
  char line[160];
  std::snprintf(line, sizeof line, "%-12s %7s  %-22s\n", "group", "queries",
                "0.25m/2   0.5m/5   5m/10 (%)");
  out += line;
  for (const auto& g : groups) {
    std::snprintf(line, sizeof line, "%-12s %7d  %6.1f / %5.1f / %5.1f\n",
                  g.name.c_str(), g.queries, 100.0 * g.recall(0),
                  100.0 * g.recall(1), 100.0 * g.recall(2));
    out += line;
  }
  return out;
}

int retrieve(const Embedding& query, std::span<const ReferenceEntry> db) {
  require(!db.empty(), "reference database is empty");
  int best = 0;
  double best_sim = query.dot(db[0].embedding);
  for (int i = 1; i < static_cast<int>(db.size()); ++i) {
    const double s = query.dot(db[i].embedding);
    if (s > best_sim) {
      best = i;
      best_sim = s;
    }
  }
  return best;
}

PoseAnnotation localize(const Image& query, std::span<const ReferenceEntry> db,
                        const Model& model) {
  require(!db.empty(), "reference database is empty");
  return db[retrieve(model.embedding_of(query), db)].pose;
}

RecallReport recall_report(std::span<const PoseEstimate> estimates) {
  RecallReport report;
  GroupRecall all{"all"};
  auto slot = [&report](const std::string& name) -> GroupRecall& {
    for (auto& g : report.groups)
      if (g.name == name) return g;
    report.groups.push_back({name});
    return report.groups.back();
  };
  for (const auto& e : estimates) {
    const PoseDistance d = pose_distance(e.estimate, e.truth);
    GroupRecall& g = slot(e.group);
    ++g.queries;
    ++all.queries;
    for (int i = 0; i < 3; ++i) {
      if (d.dist_m <= kRecallBuckets[i].dist_m &&
          d.angle_deg <= kRecallBuckets[i].angle_deg) {
        ++g.hits[i];
        ++all.hits[i];
      }
    }
  }
  report.groups.push_back(all);
  return report;
}

RecallReport evaluate(std::span<const LocalizationQuery> queries,
                      std::span<const ReferenceEntry> db, const Model& model) {
  require(!db.empty(), "reference database is empty");
  std::vector<PoseEstimate> estimates;
  estimates.reserve(queries.size());
  for (const auto& q : queries)
    estimates.push_back({q.group, localize(q.image, db, model), q.truth});
  return recall_report(estimates);
}

std::vector<ReferenceEntry> build_reference_db(const Manifest& references,
                                               const Model& model) {
  std::vector<ReferenceEntry> db;
  for (const auto& r : references.records) {
    if (!r.is_reference) continue;
    require(r.pose.has_value(), "reference '" + r.image_path + "' lacks a pose");
    db.push_back({model.embedding_of(read_png(references.resolve(r))), *r.pose});
  }
  require(!db.empty(), "reference manifest has no reference records");
  return db;
}

std::vector<LocalizationQuery> load_queries(const Manifest& queries) {
  std::vector<LocalizationQuery> out;
  for (const auto& r : queries.records) {
    require(r.pose.has_value(),
            "query '" + r.image_path + "' lacks a ground-truth pose");
    out.push_back({read_png(queries.resolve(r)), *r.pose, r.domain.name});
  }
  return out;
}

}  // namespace mduit
