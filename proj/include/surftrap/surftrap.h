/* C interface to the surftrap library. All strings are UTF-8; functions returning an
 * st_status set a thread-local message readable with st_last_error(). */
#ifndef SURFTRAP_H
#define SURFTRAP_H

#include <stddef.h>

#if defined(SURFTRAP_BUILDING)
#define ST_API __attribute__((visibility("default")))
#else
#define ST_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

/* Values match the CLI exit codes. */
typedef enum st_status {
    ST_OK = 0,
    ST_ERR_INTERNAL = 1,
    ST_ERR_CONFIG = 2,
    ST_ERR_NUMERIC = 3,
    ST_ERR_IO = 4
} st_status;

typedef struct st_config st_config; /* trap configuration */
typedef struct st_result st_result; /* outcome of one command run */

ST_API const char* st_version(void);
ST_API int st_config_schema_version(void);

/* Message of the last failed call on this thread ("" if none). */
ST_API const char* st_last_error(void);

/* Configurations. path NULL or "" selects $SURFTRAP_CONFIG, else the built-in trap. */
ST_API st_status st_config_load(const char* path, st_config** out);
ST_API st_status st_config_parse(const char* json_text, st_config** out);
ST_API st_status st_config_canonical(st_config** out);
/* Serialized JSON; free with st_string_free. */
ST_API st_status st_config_to_json(const st_config* config, char** out);
ST_API void st_config_free(st_config* config);

/* Secular potential (eV) at (x, y, z) in meters for the configuration's voltages. */
ST_API st_status st_secular_potential_ev(const st_config* config, double x, double y, double z, double* out);

/* Commands: fields, characterize, scan-vtop, lifetime, tickle, compensate.
 * options_json is a JSON object (NULL for defaults). */
ST_API size_t st_command_count(void);
ST_API const char* st_command_name(size_t index);
ST_API st_status st_run(const char* command, const char* options_json, st_result** out);

ST_API const char* st_result_summary(const st_result* result);
ST_API const char* st_result_manifest(const st_result* result);
ST_API size_t st_result_output_count(const st_result* result);
ST_API const char* st_result_output(const st_result* result, size_t index);
ST_API void st_result_free(st_result* result);

ST_API void st_string_free(char* s);

#ifdef __cplusplus
}
#endif

#endif
