#include "mduit/mduit.h"

#include <cstdlib>
#include <cstring>
#include <fstream>
#include <optional>
#include <string>

#include <json.hpp>

#include "checkpoint.hpp"
#include "config.hpp"
#include "core/error.hpp"
#include "image_io.hpp"
#include "localization.hpp"
#include "pairing.hpp"
#include "synthdata.hpp"
#include "trainer.hpp"

struct mduit_config {
  mduit::TrainConfig value;
};

struct mduit_model {
  std::optional<mduit::Model> model;
  mduit::TrainConfig config;
};

namespace {

thread_local std::string g_last_error;

mduit_status to_status(mduit::ErrorCode code) {
  using mduit::ErrorCode;
  switch (code) {
    case ErrorCode::kInvalidArgument: return MDUIT_ERR_INVALID_ARGUMENT;
    case ErrorCode::kIo: return MDUIT_ERR_IO;
    case ErrorCode::kParse: return MDUIT_ERR_PARSE;
    case ErrorCode::kValidation: return MDUIT_ERR_VALIDATION;
    case ErrorCode::kConfig: return MDUIT_ERR_CONFIG;
    case ErrorCode::kNumeric: return MDUIT_ERR_NUMERIC;
  }
  return MDUIT_ERR_INTERNAL;
}

template <typename F>
mduit_status guarded(F&& body) {
  g_last_error.clear();
  try {
    body();
    return MDUIT_OK;
  } catch (const mduit::Error& e) {
    g_last_error = e.what();
    return to_status(e.code());
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
  } catch (const std::exception& e) {
    g_last_error = e.what();
  } catch (...) {
    g_last_error = "unknown error";
  }
  return MDUIT_ERR_INTERNAL;
}

void need(const void* p, const char* what) {
  if (p == nullptr)
    mduit::fail(mduit::ErrorCode::kInvalidArgument,
                std::string(what) + " must not be null");
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out == nullptr) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

void put_string(char** out, const std::string& s) {
  if (out != nullptr) *out = dup_string(s);
}

const mduit::Model& model_of(const mduit_model* m) {
  need(m, "model");
  return *m->model;
}

}  // namespace

extern "C" {

const char* mduit_version(void) { return "0.1.0"; }

const char* mduit_last_error(void) { return g_last_error.c_str(); }

const char* mduit_status_name(mduit_status status) {
  switch (status) {
    case MDUIT_OK: return "ok";
    case MDUIT_ERR_INVALID_ARGUMENT: return "invalid argument";
    case MDUIT_ERR_IO: return "i/o error";
    case MDUIT_ERR_PARSE: return "parse error";
    case MDUIT_ERR_VALIDATION: return "validation error";
    case MDUIT_ERR_CONFIG: return "config error";
    case MDUIT_ERR_NUMERIC: return "numeric error";
    case MDUIT_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

void mduit_free_string(char* s) { std::free(s); }

mduit_status mduit_config_create(mduit_config** out) {
  return guarded([&] {
    need(out, "out");
    *out = new mduit_config{};
  });
}

mduit_status mduit_config_load(const char* path, mduit_config** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    *out = new mduit_config{mduit::load_config(path)};
  });
}

mduit_status mduit_config_set(mduit_config* config, const char* key,
                              const char* value) {
  return guarded([&] {
    need(config, "config");
    need(key, "key");
    need(value, "value");
    config->value.set(key, value);
  });
}

mduit_status mduit_config_apply_text(mduit_config* config, const char* text) {
  return guarded([&] {
    need(config, "config");
    need(text, "text");
    mduit::apply_config_text(config->value, text);
  });
}

mduit_status mduit_config_get(const mduit_config* config, const char* key,
                              char** value) {
  return guarded([&] {
    need(config, "config");
    need(key, "key");
    need(value, "value");
    put_string(value, config->value.get(key));
  });
}

mduit_status mduit_config_dump(const mduit_config* config, char** text) {
  return guarded([&] {
    need(config, "config");
    need(text, "text");
    put_string(text, config->value.dump());
  });
}

mduit_status mduit_config_validate(const mduit_config* config) {
  return guarded([&] {
    need(config, "config");
    config->value.validate();
  });
}

void mduit_config_free(mduit_config* config) { delete config; }

void mduit_synth_options_init(mduit_synth_options* o) {
  if (o == nullptr) return;
  const mduit::synth::DatasetOptions d;
  o->seed = d.seed;
  o->scenes = d.n_scenes;
  o->domains = "day,dusk,snow,night";
  o->image_size = d.height;
  o->meters_per_pixel = d.meters_per_pixel;
  o->spacing_m = d.jitter.spacing_m;
  o->trans_sigma_m = d.jitter.trans_sigma_m;
  o->yaw_sigma_deg = d.jitter.yaw_sigma_deg;
  o->phase = d.phase;
  o->first_scene_id = d.first_scene_id;
  o->poses_for_all = d.poses_for_all ? 1 : 0;
}

mduit_status mduit_generate_synthetic(const mduit_synth_options* o,
                                      const char* out_dir,
                                      char** manifest_path) {
  return guarded([&] {
    need(o, "options");
    need(out_dir, "out_dir");
    need(o->domains, "options.domains");
    mduit::synth::DatasetOptions d;
    d.seed = o->seed;
    d.n_scenes = o->scenes;
    d.domains = mduit::synth::parse_domain_spec(o->domains);
    d.height = d.width = o->image_size;
    d.meters_per_pixel = o->meters_per_pixel;
    d.jitter = {o->spacing_m, o->trans_sigma_m, o->yaw_sigma_deg};
    d.phase = o->phase;
    d.first_scene_id = o->first_scene_id;
    d.poses_for_all = o->poses_for_all != 0;
    put_string(manifest_path,
               mduit::synth::generate_dataset(d, out_dir).string());
  });
}

mduit_status mduit_train(const char* manifest, const mduit_config* config,
                         const char* out_dir, const char* resume_from,
                         char** checkpoint_path) {
  return guarded([&] {
    need(manifest, "manifest");
    need(config, "config");
    need(out_dir, "out_dir");
    mduit::FitOptions opts;
    opts.out_dir = out_dir;
    if (resume_from != nullptr) opts.resume_from = resume_from;
    const auto path =
        mduit::fit(mduit::load_manifest(manifest), config->value, opts);
    put_string(checkpoint_path, path.string());
  });
}

mduit_status mduit_model_load(const char* checkpoint, mduit_model** out) {
  return guarded([&] {
    need(checkpoint, "checkpoint");
    need(out, "out");
    mduit::Checkpoint ck = mduit::load_checkpoint(checkpoint);
    auto* m = new mduit_model{};
    m->config = ck.config;
    m->model.emplace(ck.config.network(), std::move(ck.params));
    *out = m;
  });
}

void mduit_model_free(mduit_model* model) { delete model; }

mduit_status mduit_model_describe(const mduit_model* model, char** report) {
  return guarded([&] {
    need(report, "report");
    put_string(report, model_of(model).parameter_report());
  });
}

mduit_status mduit_model_config(const mduit_model* model, char** text) {
  return guarded([&] {
    need(model, "model");
    need(text, "text");
    put_string(text, model->config.dump());
  });
}

mduit_status mduit_translate(const mduit_model* model, const char* source_png,
                             const char* target_png, const char* out_png) {
  return guarded([&] {
    const mduit::Model& m = model_of(model);
    need(source_png, "source_png");
    need(target_png, "target_png");
    need(out_png, "out_png");
    const mduit::Image out =
        m.translate(mduit::read_png(source_png), mduit::read_png(target_png));
    mduit::write_png(out_png, out);
  });
}

mduit_status mduit_grid(const mduit_model* model,
                        const char* const* source_pngs, size_t n_sources,
                        const char* const* target_pngs, size_t n_targets,
                        const char* out_png) {
  return guarded([&] {
    const mduit::Model& m = model_of(model);
    need(out_png, "out_png");
    mduit::require(n_sources > 0 && n_targets > 0,
                   "grid needs at least one source and one target",
                   mduit::ErrorCode::kInvalidArgument);
    need(source_pngs, "source_pngs");
    need(target_pngs, "target_pngs");
    std::vector<mduit::Image> sources, targets;
    for (size_t i = 0; i < n_sources; ++i) {
      need(source_pngs[i], "source path");
      sources.push_back(mduit::read_png(source_pngs[i]));
    }
    for (size_t j = 0; j < n_targets; ++j) {
      need(target_pngs[j], "target path");
      targets.push_back(mduit::read_png(target_pngs[j]));
    }
    const int h = sources[0].height(), w = sources[0].width();
    for (const auto* list : {&sources, &targets})
      for (const auto& img : *list)
        mduit::require(img.height() == h && img.width() == w,
                       "grid images must all share one size");
    const int rows = static_cast<int>(n_sources);
    const int cols = static_cast<int>(n_targets);
    mduit::Tensor tile(mduit::Shape{3, rows * h, cols * w});
    for (int i = 0; i < rows; ++i) {
      for (int j = 0; j < cols; ++j) {
        const mduit::Image cell = m.translate(sources[i], targets[j]);
        for (int c = 0; c < 3; ++c)
          for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
              tile[(static_cast<std::size_t>(c) * rows * h + i * h + y) *
                       cols * w +
                   j * w + x] = cell.at(y, x, c);
      }
    }
    mduit::write_png(out_png, mduit::Image(std::move(tile)));
  });
}

mduit_status mduit_mine_pairs(const mduit_model* model, const char* manifest,
                              const char* out_jsonl) {
  return guarded([&] {
    const mduit::Model& m = model_of(model);
    need(manifest, "manifest");
    need(out_jsonl, "out_jsonl");
    const mduit::Manifest man = mduit::load_manifest(manifest);
    std::vector<mduit::Embedding> emb;
    for (const auto& r : man.records)
      emb.push_back(m.embedding_of(mduit::read_png(man.resolve(r))));
    const auto pairs = mduit::refresh_source_target(man.records, emb);

    std::vector<int> refs;
    for (int i = 0; i < static_cast<int>(man.records.size()); ++i)
      if (man.records[i].is_reference) refs.push_back(i);
    std::vector<std::vector<int>> positives(man.records.size());
    if (refs.size() >= 2) {
      std::vector<mduit::DatasetRecord> rr;
      std::vector<mduit::Embedding> re;
      for (int i : refs) {
        rr.push_back(man.records[i]);
        re.push_back(emb[i]);
      }
      const auto& hp = model->config.hp;
      const auto mined =
          mduit::mine_positives(rr, re, model->config.k_candidates,
                                hp.rot_thresh_deg, hp.trans_thresh_m);
      for (std::size_t q = 0; q < refs.size(); ++q)
        for (int p : mined[q].positives) positives[refs[q]].push_back(refs[p]);
    }

    std::ofstream out(out_jsonl);
    if (!out)
      mduit::fail(mduit::ErrorCode::kIo, std::string("cannot write ") + out_jsonl);
    for (const auto& a : pairs) {
      nlohmann::ordered_json j;
      j["source"] = man.records[a.source_idx].image_path;
      j["target"] = man.records[a.target_idx].image_path;
      j["similarity"] = a.similarity;
      if (man.records[a.source_idx].is_reference) {
        nlohmann::json pos = nlohmann::json::array();
        for (int p : positives[a.source_idx]) pos.push_back(man.records[p].image_path);
        j["positives"] = pos;
      }
      out << j.dump() << '\n';
    }
    if (!out)
      mduit::fail(mduit::ErrorCode::kIo, std::string("failed writing ") + out_jsonl);
  });
}

mduit_status mduit_localize_eval(const mduit_model* model,
                                 const char* queries_manifest,
                                 const char* references_manifest,
                                 const char* out_json, char** table) {
  return guarded([&] {
    const mduit::Model& m = model_of(model);
    need(queries_manifest, "queries_manifest");
    need(references_manifest, "references_manifest");
    need(out_json, "out_json");
    const auto db =
        mduit::build_reference_db(mduit::load_manifest(references_manifest), m);
    const auto queries = mduit::load_queries(mduit::load_manifest(queries_manifest));
    const mduit::RecallReport report = mduit::evaluate(queries, db, m);
    std::ofstream out(out_json);
    if (!out) mduit::fail(mduit::ErrorCode::kIo, std::string("cannot write ") + out_json);
    out << report.to_json().dump(2) << '\n';
    if (!out)
      mduit::fail(mduit::ErrorCode::kIo, std::string("failed writing ") + out_json);
    put_string(table, report.to_table());
  });
}

}  // extern "C"
