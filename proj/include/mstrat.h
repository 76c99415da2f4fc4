#ifndef MSTRAT_H
#define MSTRAT_H

/* C interface to the Morse-Smale stratification toolkit. All functions that
 * can fail return a status code; on failure a thread-local message is
 * available from mstrat_last_error(). Strings returned through out-params
 * are heap-allocated and must be released with mstrat_string_free(). */

#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef struct mstrat_diagram mstrat_diagram;
typedef struct mstrat_report mstrat_report;

typedef enum {
    MSTRAT_OK = 0,
    MSTRAT_ERR_INVALID_ARGUMENT = 1,
    MSTRAT_ERR_PARSE = 2,
    MSTRAT_ERR_IO = 3,
    MSTRAT_ERR_DOMAIN = 4,
    MSTRAT_ERR_INTERNAL = 5
} mstrat_status;

const char* mstrat_version(void);

/* Message for the most recent failing call on this thread; never NULL. */
const char* mstrat_last_error(void);

/* -- diagrams ------------------------------------------------------------ */

mstrat_status mstrat_diagram_from_json(const char* json_text, mstrat_diagram** out);
mstrat_status mstrat_diagram_load(const char* path, mstrat_diagram** out);
mstrat_status mstrat_diagram_synthesize(int k, int l, uint64_t seed,
                                        mstrat_diagram** out);
mstrat_status mstrat_diagram_to_json(const mstrat_diagram* d, char** out);
void mstrat_diagram_free(mstrat_diagram* d);

/* -- validation and verification ------------------------------------------ */

/* Runs the diagram validity checks. *passed gets 1/0; when report_json is
 * non-NULL it receives the full report. */
mstrat_status mstrat_validate(const mstrat_diagram* d, int* passed,
                              char** report_json);

/* suite: "diagram", "flow", "pushin", "continuity", "strata", or "all". */
mstrat_status mstrat_verify(const mstrat_diagram* d, const char* suite,
                            int samples, double tol, uint64_t seed,
                            mstrat_report** out);

int mstrat_report_passed(const mstrat_report* r);
mstrat_status mstrat_report_to_json(const mstrat_report* r, char** out);
void mstrat_report_free(mstrat_report* r);

/* -- geometry exports ------------------------------------------------------ */

/* kind: "surface" (Wavefront OBJ of the pushed-in boundary), "tags"
 * (per-vertex piece tags of that mesh, JSON sidecar), "cones" (the 2K cone
 * section circles, JSON polylines), or "curves" (pushed-in curves and wall
 * edges, JSON polylines). detail <= 0 selects the default resolution. */
mstrat_status mstrat_export(const mstrat_diagram* d, const char* kind, int detail,
                            char** out);

void mstrat_string_free(char* s);

#ifdef __cplusplus
}
#endif

#endif /* MSTRAT_H */
