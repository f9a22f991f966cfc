#include <math.h>
#include <stdio.h>

#include "gemservo.h"

#define CHECK(expr)                                                  \
    do {                                                             \
        if (!(expr)) {                                               \
            char msg[256];                                           \
            gs_last_error(msg, sizeof msg);                          \
            fprintf(stderr, "%s:%d: %s (%s)\n", __FILE__, __LINE__,  \
                    #expr, msg);                                     \
            return 1;                                                \
        }                                                            \
    } while (0)

int main(void) {
    const double num[] = {0.1267};
    const double den[] = {1.0, 34.72, 2018.0};
    GsTransferFunction *tf = NULL;
    CHECK(gs_tf_new(num, 1, den, 3, &tf) == GS_STATUS_OK);

    double gain = 0.0;
    CHECK(gs_tf_dc_gain(tf, &gain) == GS_STATUS_OK);
    CHECK(fabs(gain - 0.1267 / 2018.0) < 1e-15);

    GsTransferFunction *pos = NULL;
    size_t type = 0;
    CHECK(gs_tf_with_integrator(tf, &pos) == GS_STATUS_OK);
    CHECK(gs_tf_system_type(pos, &type) == GS_STATUS_OK && type == 1);
    gs_tf_free(pos);
    gs_tf_free(tf);

    GsPid *pid = NULL;
    double u = 0.0, u_sat = 0.0;
    CHECK(gs_pid_new(1.0, 0.0, 0.0, 100.0, 0.0, 350000.0, &pid) == GS_STATUS_OK);
    CHECK(gs_pid_step(pid, -5.0, 0.01, &u, &u_sat) == GS_STATUS_OK);
    CHECK(u == -5.0 && u_sat == 0.0);
    gs_pid_free(pid);

    CHECK(gs_tf_new(NULL, 1, den, 3, &tf) == GS_STATUS_NULL_POINTER);
    CHECK(gs_last_error(NULL, 0) > 0);

    GsGeometry g;
    double xyz[3], th[2];
    CHECK(gs_geometry_default(&g) == GS_STATUS_OK);
    CHECK(gs_kin_direct(&g, 0.2, 0.4, xyz) == GS_STATUS_OK);
    CHECK(gs_kin_inverse(&g, xyz[0], xyz[1], xyz[2], th) == GS_STATUS_OK);
    CHECK(fabs(th[0] - 0.2) < 1e-9 && fabs(th[1] - 0.4) < 1e-9);

    puts("ok");
    return 0;
}
