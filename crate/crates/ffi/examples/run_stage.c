/* Runs one pipeline stage through the C API.
 *
 *   cc run_stage.c -I../include -L<target>/release -lrenewwatch_ffi -o run_stage
 *   ./run_stage synth ./run
 */
#include <stdio.h>

#include "renewwatch.h"

int main(int argc, char **argv) {
    if (argc < 3) {
        fprintf(stderr, "usage: %s <stage> <stage-dir> [config.toml]\n", argv[0]);
        return 64;
    }
    RwConfig *cfg = NULL;
    if (argc > 3) {
        if (rw_config_load(argv[3], &cfg) != RW_STATUS_OK) {
            fprintf(stderr, "%s\n", rw_last_error());
            return 2;
        }
    } else {
        cfg = rw_config_default();
    }
    rw_config_set_stage_dir(cfg, argv[2]);

    RwManifest *m = NULL;
    RwStatus st = rw_run_stage(cfg, argv[1], &m);
    if (st != RW_STATUS_OK) {
        fprintf(stderr, "error %d: %s\n", (int)st, rw_last_error());
        rw_config_free(cfg);
        return (int)st;
    }
    printf("%s: %zu files\n", argv[1], (size_t)rw_manifest_file_count(m));
    rw_manifest_free(m);
    rw_config_free(cfg);
    return 0;
}
