#include <math.h>
#include <stdio.h>
#include <string.h>
#include "tubempc.h"

int main(void) {
    double g[] = {1, 0, -1, 0, 0, 1, 0, -1};
    double h[] = {1, 1, 1, 1};
    TmpcPolytope *p = NULL;
    if (tmpc_polytope_new(g, h, 4, 2, &p) != TMPC_STATUS_OK) return 1;
    double d[] = {1, 1};
    double s = 0;
    if (tmpc_polytope_support(p, d, 2, &s) != TMPC_STATUS_OK || fabs(s - 2.0) > 1e-9) return 2;
    bool in = false;
    if (tmpc_polytope_contains(p, NULL, 2, 0.0, &in) != TMPC_STATUS_NULL_POINTER) return 3;
    if (strlen(tmpc_last_error()) == 0) return 4;
    tmpc_polytope_free(p);
    printf("%s\n", tmpc_version());
    return 0;
}
