#include <math.h>
#include <stdio.h>
#include <string.h>

#include "hqr.h"

#define CHECK(cond)                                                   \
    do {                                                              \
        if (!(cond)) {                                                \
            fprintf(stderr, "check failed: %s (%s)\n", #cond,         \
                    hqr_last_error());                                \
            return 1;                                                 \
        }                                                             \
    } while (0)

int main(void) {
    const double data[6] = {3.0, 4.0, 0.0, 1.0, 2.0, 2.0};
    HqrMatrix *a = NULL;
    CHECK(hqr_matrix_from_col_major(3, 2, data, &a) == HQR_STATUS_OK);
    CHECK(hqr_matrix_rows(a) == 3 && hqr_matrix_cols(a) == 2);

    HqrFactorization *f = NULL;
    CHECK(hqr_factor(a, HQR_ROUTINE_MHT, 0, &f) == HQR_STATUS_OK);
    double residual = 1.0, orth = 1.0;
    CHECK(hqr_factorization_check(a, f, &residual, &orth) == HQR_STATUS_OK);
    CHECK(residual < 1e-14 && orth < 1e-14);

    HqrMatrix *r = NULL;
    CHECK(hqr_factorization_r(f, &r) == HQR_STATUS_OK);
    double r00 = 0.0;
    CHECK(hqr_matrix_get(r, 0, 0, &r00) == HQR_STATUS_OK);
    CHECK(fabs(fabs(r00) - 5.0) < 1e-14);

    HqrMatrix *wide = NULL;
    HqrFactorization *g = NULL;
    CHECK(hqr_matrix_new(2, 3, &wide) == HQR_STATUS_OK);
    CHECK(hqr_factor(wide, HQR_ROUTINE_HT, 0, &g) == HQR_STATUS_WIDE_MATRIX);
    CHECK(strstr(hqr_last_error(), "wide") != NULL);

    uint64_t cycles = 0;
    CHECK(hqr_simulate_cycles(HQR_ROUTINE_MHT, 8, 8, &cycles) == HQR_STATUS_OK);
    CHECK(cycles > 0);

    hqr_matrix_free(wide);
    hqr_matrix_free(r);
    hqr_factorization_free(f);
    hqr_matrix_free(a);
    printf("ok\n");
    return 0;
}
