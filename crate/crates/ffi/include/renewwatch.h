#ifndef RENEWWATCH_H
#define RENEWWATCH_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

// Result of a C API call.
typedef enum RwStatus {
  RW_STATUS_OK = 0,
  // A required pointer argument was null.
  RW_STATUS_NULL_ARGUMENT = 1,
  // A string argument was not valid UTF-8.
  RW_STATUS_INVALID_UTF8 = 2,
  // Bad configuration value or unreadable config file.
  RW_STATUS_CONFIG = 3,
  // A stage ran before the stage it depends on.
  RW_STATUS_DEPENDENCY = 4,
  // Input data missing or malformed.
  RW_STATUS_DATA = 5,
  // The library panicked; the handle that was passed in should be freed.
  RW_STATUS_INTERNAL = 6,
} RwStatus;

// Pipeline configuration.
typedef struct RwConfig RwConfig;

// Manifest returned by a stage run.
typedef struct RwManifest RwManifest;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null. The pointer
// stays valid until the next failing call on the same thread.
const char *rw_last_error(void);

// Library version as a static string.
const char *rw_version(void);

// New configuration holding the defaults. Never null.
struct RwConfig *rw_config_default(void);

// Reads a TOML configuration file into `*out`.
//
// # Safety
// `path` must be a NUL-terminated string and `out` a valid pointer.
enum RwStatus rw_config_load(const char *path, struct RwConfig **out);

// Parses configuration text into `*out`.
//
// # Safety
// `toml` must be a NUL-terminated string and `out` a valid pointer.
enum RwStatus rw_config_parse(const char *toml, struct RwConfig **out);

// # Safety
// `cfg` must come from this library and not be used afterwards. Null is
// ignored.
void rw_config_free(struct RwConfig *cfg);

// # Safety
// `cfg` must be a live handle and `dir` a NUL-terminated string.
enum RwStatus rw_config_set_stage_dir(struct RwConfig *cfg, const char *dir);

// Worker threads; 0 uses every core.
//
// # Safety
// `cfg` must be a live handle.
enum RwStatus rw_config_set_workers(struct RwConfig *cfg, uintptr_t workers);

// # Safety
// `cfg` must be a live handle.
enum RwStatus rw_config_set_seed(struct RwConfig *cfg, uint64_t seed);

// Checks every range and path in the configuration.
//
// # Safety
// `cfg` must be a live handle.
enum RwStatus rw_config_validate(const struct RwConfig *cfg);

// Effective configuration as TOML. Release with [`rw_string_free`].
//
// # Safety
// `cfg` must be a live handle.
char *rw_config_to_toml(const struct RwConfig *cfg);

// Runs one stage by its CLI name (`synth`, `train-scorer`, ... `bench`)
// and stores its manifest in `*out`. `out` may be null when the manifest
// is not wanted.
//
// # Safety
// `cfg` must be a live handle, `stage` a NUL-terminated string and `out`
// null or valid.
enum RwStatus rw_run_stage(const struct RwConfig *cfg, const char *stage, struct RwManifest **out);

// Number of output files recorded in the manifest.
//
// # Safety
// `m` must be a live handle.
uintptr_t rw_manifest_file_count(const struct RwManifest *m);

// Quads scored per second, or a negative value when the stage scores none.
//
// # Safety
// `m` must be a live handle.
double rw_manifest_quads_per_second(const struct RwManifest *m);

// Manifest as JSON, the same document the stage wrote to disk. Release
// with [`rw_string_free`].
//
// # Safety
// `m` must be a live handle.
char *rw_manifest_json(const struct RwManifest *m);

// # Safety
// `m` must come from this library and not be used afterwards. Null is
// ignored.
void rw_manifest_free(struct RwManifest *m);

// # Safety
// `s` must be a string returned by this library, or null.
void rw_string_free(char *s);

// F2 score from precision and recall; 0 when both are 0.
double rw_f2(double precision, double recall);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RENEWWATCH_H */
