#include <stdio.h>
#include <stdlib.h>

#include "fgc.h"

int main(void) {
    FgcDataset *ds = NULL;
    FgcFit *fit = NULL;
    if (fgc_dataset_generate(16, 2, 2, 400, 0.0, 0.2, 3, &ds) != FGC_STATUS_OK) {
        fprintf(stderr, "generate: %s\n", fgc_last_error_message());
        return 1;
    }
    if (fgc_fit(ds, "corr", NULL, &fit) != FGC_STATUS_OK) {
        fprintf(stderr, "fit: %s\n", fgc_last_error_message());
        fgc_dataset_free(ds);
        return 1;
    }
    size_t n = fgc_fit_num_nodes(fit);
    size_t *labels = malloc(n * sizeof *labels);
    FgcMetrics m;
    if (fgc_fit_labels(fit, labels, n) != FGC_STATUS_OK || fgc_fit_metrics(fit, ds, &m) != FGC_STATUS_OK) {
        fprintf(stderr, "read: %s\n", fgc_last_error_message());
        return 1;
    }
    printf("fgc %s nodes=%zu first=%zu ce=%.3f\n", fgc_version(), n, labels[0], m.ce);
    if (fgc_fit(ds, "nope", NULL, &fit) != FGC_STATUS_INVALID_ARGUMENT || fit != NULL) {
        return 1;
    }
    free(labels);
    fgc_dataset_free(ds);
    return 0;
}
