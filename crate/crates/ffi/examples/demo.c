/* Simulate, estimate and round-trip a path through the C API. */
#include <stdio.h>
#include <stdlib.h>

#include "sglde.h"

int main(int argc, char **argv) {
    SgldeParams params = {1.0, 2.0, 0.05};
    SgldePath *path = NULL;
    if (sglde_simulate(params, 0.05, 0.0, 10.0, 10000, 7, &path) != SGLDE_STATUS_OK) {
        fprintf(stderr, "simulate: %s\n", sglde_last_error_message());
        return 1;
    }
    SgldeEstimate est;
    if (sglde_estimate_joint(path, &est) != SGLDE_STATUS_OK) {
        fprintf(stderr, "estimate: %s\n", sglde_last_error_message());
        return 1;
    }
    printf("%s\n", sglde_version());
    printf("alpha=%.6f m=%.6f sigma=%.6f converged=%d\n", est.alpha, est.m, est.sigma, est.converged);

    if (argc > 1 && sglde_path_write_csv(path, argv[1]) != SGLDE_STATUS_OK) {
        fprintf(stderr, "write: %s\n", sglde_last_error_message());
        return 1;
    }
    if (sglde_path_values(path, NULL, 0) != SGLDE_STATUS_BUFFER_TOO_SMALL) {
        return 1;
    }
    sglde_path_free(path);
    return 0;
}
