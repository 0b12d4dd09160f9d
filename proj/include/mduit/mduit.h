/* C interface to the mduit library.
 *
 * Every function returns MDUIT_OK or an error code; on error a one-line
 * message is available from mduit_last_error() (per thread) until the next
 * call on that thread. Strings returned through char** out-parameters are
 * owned by the caller and must be released with mduit_free_string().
 */
#ifndef MDUIT_MDUIT_H
#define MDUIT_MDUIT_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#if defined(MDUIT_BUILDING_LIBRARY)
#define MDUIT_API __declspec(dllexport)
#else
#define MDUIT_API __declspec(dllimport)
#endif
#else
#define MDUIT_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum mduit_status {
  MDUIT_OK = 0,
  MDUIT_ERR_INVALID_ARGUMENT = 1,
  MDUIT_ERR_IO = 2,
  MDUIT_ERR_PARSE = 3,
  MDUIT_ERR_VALIDATION = 4,
  MDUIT_ERR_CONFIG = 5,
  MDUIT_ERR_NUMERIC = 6,
  MDUIT_ERR_INTERNAL = 7
} mduit_status;

typedef struct mduit_config mduit_config;
typedef struct mduit_model mduit_model;

MDUIT_API const char* mduit_version(void);
MDUIT_API const char* mduit_last_error(void);
MDUIT_API const char* mduit_status_name(mduit_status status);
MDUIT_API void mduit_free_string(char* s);

/* Training configuration: flat `key = value` settings. */
MDUIT_API mduit_status mduit_config_create(mduit_config** out);
MDUIT_API mduit_status mduit_config_load(const char* path, mduit_config** out);
MDUIT_API mduit_status mduit_config_set(mduit_config* config, const char* key,
                                        const char* value);
/* Applies `key = value` lines (comments with #). */
MDUIT_API mduit_status mduit_config_apply_text(mduit_config* config,
                                               const char* text);
MDUIT_API mduit_status mduit_config_get(const mduit_config* config,
                                        const char* key, char** value);
MDUIT_API mduit_status mduit_config_dump(const mduit_config* config,
                                         char** text);
MDUIT_API mduit_status mduit_config_validate(const mduit_config* config);
MDUIT_API void mduit_config_free(mduit_config* config);

/* Procedural multi-domain dataset. */
typedef struct mduit_synth_options {
  uint64_t seed;
  int scenes;
  /* Comma-separated presets (day, dusk, snow, night) or custom
   * name:r/g/b:brightness:contrast:noise entries; the first is the
   * reference domain. */
  const char* domains;
  int image_size;
  double meters_per_pixel;
  double spacing_m;
  double trans_sigma_m;
  double yaw_sigma_deg;
  double phase;
  int first_scene_id;
  int poses_for_all;
} mduit_synth_options;

MDUIT_API void mduit_synth_options_init(mduit_synth_options* options);
/* Writes images and manifest.jsonl under out_dir; *manifest_path may be
 * NULL. */
MDUIT_API mduit_status mduit_generate_synthetic(
    const mduit_synth_options* options, const char* out_dir,
    char** manifest_path);

/* Trains on a manifest. resume_from may be NULL. *checkpoint_path receives
 * the last checkpoint written and may be NULL. */
MDUIT_API mduit_status mduit_train(const char* manifest,
                                   const mduit_config* config,
                                   const char* out_dir, const char* resume_from,
                                   char** checkpoint_path);

MDUIT_API mduit_status mduit_model_load(const char* checkpoint,
                                        mduit_model** out);
MDUIT_API void mduit_model_free(mduit_model* model);
/* Tensor shapes and per-network parameter counts. */
MDUIT_API mduit_status mduit_model_describe(const mduit_model* model,
                                            char** report);
/* Canonical config text stored in the checkpoint. */
MDUIT_API mduit_status mduit_model_config(const mduit_model* model,
                                          char** text);

/* Renders source content with target appearance into out_png. */
MDUIT_API mduit_status mduit_translate(const mduit_model* model,
                                       const char* source_png,
                                       const char* target_png,
                                       const char* out_png);

/* Source x target matrix: row i, column j holds source i rendered with
 * target j. All images must share one size. */
MDUIT_API mduit_status mduit_grid(const mduit_model* model,
                                  const char* const* source_pngs,
                                  size_t n_sources,
                                  const char* const* target_pngs,
                                  size_t n_targets, const char* out_png);

/* Line-delimited JSON: one line per record with its cross-domain target
 * and, for reference records, the mined pose positives. */
MDUIT_API mduit_status mduit_mine_pairs(const mduit_model* model,
                                        const char* manifest,
                                        const char* out_jsonl);

/* Retrieval localization of every query against the references; writes the
 * recall report as JSON and optionally returns it as a text table. */
MDUIT_API mduit_status mduit_localize_eval(const mduit_model* model,
                                           const char* queries_manifest,
                                           const char* references_manifest,
                                           const char* out_json, char** table);

#ifdef __cplusplus
}
#endif

#endif /* MDUIT_MDUIT_H */
