/* cc -Icrates/ffi/include crates/ffi/examples/neumann.c target/release/libcwsl_ffi.a -lm -lpthread -ldl */
#include <stdio.h>
#include "cwsl.h"

static const char *PROBLEM =
    "{\"schema_version\": 1, \"mode\": \"relaxed\", \"problem\": {"
    "\"T\": 1.0, \"b\": 0.5, \"q\": {\"expression\": \"zero\"},"
    "\"a1\": [1, 0], \"a2\": [1, 0], \"h\": [0, 0], \"H\": [0, 0], \"d1\": [1, 0], \"d2\": [0, 0]}}";

int main(void) {
    CwslProblem *p = NULL;
    CwslSpectrum *s = NULL;
    if (cwsl_problem_from_json(PROBLEM, &p) != CWSL_STATUS_OK || cwsl_forward(p, 5, 0, &s) != CWSL_STATUS_OK) {
        fprintf(stderr, "%s\n", cwsl_last_error());
        cwsl_problem_free(p);
        return 1;
    }
    for (size_t i = 0; i < cwsl_spectrum_len(s); i++) {
        CwslEigenvalue e;
        cwsl_spectrum_get(s, i, &e);
        printf("k=%zu lambda=%.10g%+.3gi\n", e.k, e.lambda_re, e.lambda_im);
    }
    cwsl_spectrum_free(s);
    cwsl_problem_free(p);
    return 0;
}
