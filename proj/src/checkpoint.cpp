#include "checkpoint.hpp"

#include <cstdio>

#include "core/archive.hpp"
#include "core/error.hpp"

namespace mduit {

namespace {

constexpr const char* kFormat = "mduit-checkpoint-1";

std::string hex(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const TrainConfig& config,
                     const ModelParams& params, const Adam& optimizer, int epoch,
                     long step) {
  TensorArchive ar;
  ar.meta["format"] = kFormat;
  ar.meta["config"] = config.dump();
  ar.meta["config_hash"] = hex(config.hash());
  ar.meta["epoch"] = epoch;
  ar.meta["step"] = step;
  ar.meta["adam_steps"] = optimizer.step_counts();
  for (const ParamCollection* pc : params.all())
    for (const auto& p : pc->entries()) ar.tensors.emplace_back(p.name, p.var.value());
  for (const auto& [name, t] : optimizer.first_moments())
    ar.tensors.emplace_back("adam.m." + name, t);
  for (const auto& [name, t] : optimizer.second_moments())
    ar.tensors.emplace_back("adam.v." + name, t);
  write_archive(path, ar);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const TensorArchive ar = read_archive(path);
  const auto& meta = ar.meta;
  require(meta.value("format", "") == kFormat,
          path.string() + " is not a checkpoint", ErrorCode::kParse);
  Checkpoint ck;
  try {
    apply_config_text(ck.config, meta.at("config").get<std::string>(),
                      path.string() + " (config)");
    require(hex(ck.config.hash()) == meta.at("config_hash").get<std::string>(),
            "config hash mismatch in " + path.string(), ErrorCode::kParse);
    ck.epoch = meta.at("epoch").get<int>();
    ck.step = meta.at("step").get<long>();
    ck.optimizer = Adam(ck.config.hp.adam_beta1, ck.config.hp.adam_beta2);
    ck.optimizer.step_counts() =
        meta.at("adam_steps").get<std::map<std::string, int>>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kParse, path.string() + ": bad checkpoint metadata: " + e.what());
  }
  ck.params = allocate_params(ck.config.network());
  for (ParamCollection* pc : ck.params.all()) {
    for (auto& p : pc->entries()) {
      require(ar.contains(p.name), path.string() + ": missing tensor " + p.name,
              ErrorCode::kParse);
      const Tensor& t = ar.get(p.name);
      require(t.shape() == p.var.shape(),
              path.string() + ": shape mismatch for " + p.name + ": " +
                  shape_str(t.shape()) + " vs " + shape_str(p.var.shape()),
              ErrorCode::kParse);
      p.var.mutable_value() = t;
    }
  }
  for (const auto& [name, t] : ar.tensors) {
    if (name.rfind("adam.m.", 0) == 0)
      ck.optimizer.first_moments().emplace(name.substr(7), t);
    else if (name.rfind("adam.v.", 0) == 0)
      ck.optimizer.second_moments().emplace(name.substr(7), t);
  }
  return ck;
}

Model load_model(const std::filesystem::path& path) {
  Checkpoint ck = load_checkpoint(path);
  return Model(ck.config.network(), std::move(ck.params));
}

}  // namespace mduit
