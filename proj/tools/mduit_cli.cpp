// Command-line front end. Talks to the library only through mduit.h.
#include <cstdint>
#include <cstdio>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "mduit/mduit.h"

namespace {

struct Failure {
  std::string message;
};

void check(mduit_status s) {
  if (s != MDUIT_OK) throw Failure{mduit_last_error()};
}

// Owns a library-allocated string.
class LibString {
 public:
  LibString() = default;
  ~LibString() { mduit_free_string(p_); }
  LibString(const LibString&) = delete;
  LibString& operator=(const LibString&) = delete;
  char** out() { return &p_; }
  std::string str() const { return p_ ? p_ : ""; }

 private:
  char* p_ = nullptr;
};

class ModelHandle {
 public:
  explicit ModelHandle(const std::string& checkpoint) {
    check(mduit_model_load(checkpoint.c_str(), &m_));
  }
  ~ModelHandle() { mduit_model_free(m_); }
  ModelHandle(const ModelHandle&) = delete;
  ModelHandle& operator=(const ModelHandle&) = delete;
  const mduit_model* get() const { return m_; }

 private:
  mduit_model* m_ = nullptr;
};

class ConfigHandle {
 public:
  ConfigHandle() { check(mduit_config_create(&c_)); }
  explicit ConfigHandle(const std::string& path) {
    check(mduit_config_load(path.c_str(), &c_));
  }
  ~ConfigHandle() { mduit_config_free(c_); }
  ConfigHandle(const ConfigHandle&) = delete;
  ConfigHandle& operator=(const ConfigHandle&) = delete;
  mduit_config* get() { return c_; }

 private:
  mduit_config* c_ = nullptr;
};

using Settings = std::vector<std::pair<std::string, std::string>>;

void print_resolved(const std::string& command, const Settings& settings) {
  std::cout << "# " << command << '\n';
  for (const auto& [k, v] : settings) std::cout << k << " = " << v << '\n';
  std::cout << std::flush;
}

std::string join(const std::vector<std::string>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + v[i];
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-domain unsupervised image-to-image translation"};
  app.require_subcommand(1);
  app.fallthrough();
  std::optional<std::uint64_t> seed;
  app.add_option("--seed", seed, "Seed for every random choice of the command");
  app.set_version_flag("--version", std::string(mduit_version()));

  mduit_synth_options synth;
  mduit_synth_options_init(&synth);
  std::string domains = synth.domains;
  std::string synth_out;
  bool poses_for_all = false;
  auto* gen = app.add_subcommand("generate-synthetic",
                                 "Render a procedural multi-domain dataset");
  gen->add_option("--scenes", synth.scenes, "Number of scenes")->capture_default_str();
  gen->add_option("--domains", domains, "Domain list; the first is the reference")
      ->capture_default_str();
  gen->add_option("--out", synth_out, "Output directory")->required();
  gen->add_option("--size", synth.image_size, "Image side in pixels")
      ->capture_default_str();
  gen->add_option("--meters-per-pixel", synth.meters_per_pixel)->capture_default_str();
  gen->add_option("--spacing", synth.spacing_m, "Meters between scenes")
      ->capture_default_str();
  gen->add_option("--trans-jitter", synth.trans_sigma_m)->capture_default_str();
  gen->add_option("--yaw-jitter", synth.yaw_sigma_deg)->capture_default_str();
  gen->add_option("--phase", synth.phase, "Trajectory offset in scene spacings")
      ->capture_default_str();
  gen->add_option("--first-scene", synth.first_scene_id)->capture_default_str();
  gen->add_flag("--poses-for-all", poses_for_all,
                "Write poses for every record, not only the reference domain");

  std::string manifest, checkpoint, out, config_path, resume;
  std::vector<std::string> overrides;
  auto* train = app.add_subcommand("train", "Train a model on a manifest");
  train->add_option("--manifest", manifest)->required();
  train->add_option("--config", config_path, "key = value config file");
  train->add_option("--out", out, "Output directory")->required();
  train->add_option("--resume", resume, "Checkpoint to continue from");
  train->add_option("--set", overrides, "KEY=VALUE override (repeatable)");

  auto* mine = app.add_subcommand("mine-pairs",
                                  "Dump source/target assignments and positives");
  mine->add_option("--manifest", manifest)->required();
  mine->add_option("--checkpoint", checkpoint)->required();
  mine->add_option("--out", out)->required();

  std::string source, target;
  auto* translate = app.add_subcommand("translate",
                                       "Render source content in target appearance");
  translate->add_option("--checkpoint", checkpoint)->required();
  translate->add_option("--source", source)->required();
  translate->add_option("--target", target)->required();
  translate->add_option("--out", out)->required();

  std::vector<std::string> sources, targets;
  auto* grid = app.add_subcommand("grid", "Source (rows) x target (columns) tile");
  grid->add_option("--checkpoint", checkpoint)->required();
  grid->add_option("--sources", sources, "Comma-separated images")
      ->required()
      ->delimiter(',');
  grid->add_option("--targets", targets, "Comma-separated images")
      ->required()
      ->delimiter(',');
  grid->add_option("--out", out)->required();

  std::string queries, references;
  auto* loc = app.add_subcommand("localize-eval",
                                 "Retrieval localization recall report");
  loc->add_option("--checkpoint", checkpoint)->required();
  loc->add_option("--queries", queries, "Query manifest (poses required)")->required();
  loc->add_option("--references", references, "Reference manifest")->required();
  loc->add_option("--out", out, "Report JSON")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  const std::string seed_str = seed ? std::to_string(*seed) : "default";
  try {
    if (*gen) {
      if (seed) synth.seed = *seed;
      synth.domains = domains.c_str();
      synth.poses_for_all = poses_for_all ? 1 : 0;
      print_resolved("generate-synthetic",
                     {{"seed", std::to_string(synth.seed)},
                      {"scenes", std::to_string(synth.scenes)},
                      {"domains", domains},
                      {"size", std::to_string(synth.image_size)},
                      {"meters_per_pixel", std::to_string(synth.meters_per_pixel)},
                      {"spacing", std::to_string(synth.spacing_m)},
                      {"trans_jitter", std::to_string(synth.trans_sigma_m)},
                      {"yaw_jitter", std::to_string(synth.yaw_sigma_deg)},
                      {"phase", std::to_string(synth.phase)},
                      {"first_scene", std::to_string(synth.first_scene_id)},
                      {"poses_for_all", poses_for_all ? "true" : "false"},
                      {"out", synth_out}});
      LibString path;
      check(mduit_generate_synthetic(&synth, synth_out.c_str(), path.out()));
      std::cout << "wrote " << path.str() << '\n';
    } else if (*train) {
      ConfigHandle cfg = config_path.empty() ? ConfigHandle() : ConfigHandle(config_path);
      for (const auto& kv : overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) {
          std::cerr << "error: --set expects KEY=VALUE, got '" << kv << "'\n";
          return 2;
        }
        check(mduit_config_set(cfg.get(), kv.substr(0, eq).c_str(),
                               kv.substr(eq + 1).c_str()));
      }
      if (seed) check(mduit_config_set(cfg.get(), "seed", std::to_string(*seed).c_str()));
      check(mduit_config_validate(cfg.get()));
      LibString dump;
      check(mduit_config_dump(cfg.get(), dump.out()));
      std::cout << "# train\nmanifest = " << manifest << "\nout = " << out << '\n';
      if (!resume.empty()) std::cout << "resume = " << resume << '\n';
      std::cout << dump.str() << std::flush;
      LibString ck;
      check(mduit_train(manifest.c_str(), cfg.get(), out.c_str(),
                        resume.empty() ? nullptr : resume.c_str(), ck.out()));
      std::cout << "checkpoint " << ck.str() << '\n';
    } else if (*mine) {
      print_resolved("mine-pairs", {{"seed", seed_str},
                                    {"manifest", manifest},
                                    {"checkpoint", checkpoint},
                                    {"out", out}});
      ModelHandle model(checkpoint);
      check(mduit_mine_pairs(model.get(), manifest.c_str(), out.c_str()));
    } else if (*translate) {
      print_resolved("translate", {{"seed", seed_str},
                                   {"checkpoint", checkpoint},
                                   {"source", source},
                                   {"target", target},
                                   {"out", out}});
      ModelHandle model(checkpoint);
      check(mduit_translate(model.get(), source.c_str(), target.c_str(), out.c_str()));
    } else if (*grid) {
      print_resolved("grid", {{"seed", seed_str},
                              {"checkpoint", checkpoint},
                              {"sources", join(sources)},
                              {"targets", join(targets)},
                              {"out", out}});
      ModelHandle model(checkpoint);
      std::vector<const char*> s, t;
      for (const auto& p : sources) s.push_back(p.c_str());
      for (const auto& p : targets) t.push_back(p.c_str());
      check(mduit_grid(model.get(), s.data(), s.size(), t.data(), t.size(),
                       out.c_str()));
    } else if (*loc) {
      print_resolved("localize-eval", {{"seed", seed_str},
                                       {"checkpoint", checkpoint},
                                       {"queries", queries},
                                       {"references", references},
                                       {"out", out}});
      ModelHandle model(checkpoint);
      LibString table;
      check(mduit_localize_eval(model.get(), queries.c_str(), references.c_str(),
                                out.c_str(), table.out()));
      std::cout << table.str();
    }
  } catch (const Failure& f) {
    std::string msg = f.message;
    for (char& c : msg)
      if (c == '\n') c = ' ';
    std::cerr << "error: " << msg << '\n';
    return 1;
  }
  return 0;
}
