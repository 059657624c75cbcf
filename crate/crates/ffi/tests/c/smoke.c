#include <math.h>
#include <stdio.h>
#include <string.h>

#include "vl.h"

#define CHECK(cond)                                                    \
  do {                                                                 \
    if (!(cond)) {                                                     \
      fprintf(stderr, "check failed at line %d: %s (%s)\n", __LINE__, \
              #cond, vl_last_error() ? vl_last_error() : "");          \
      return 1;                                                        \
    }                                                                  \
  } while (0)

int main(void) {
  VlEngine *engine = NULL;
  CHECK(vl_engine_new(2, 0, &engine) == VL_STATUS_OK);
  CHECK(vl_engine_upsert_json(engine, "{\"id\":\"e1\",\"title\":\"chair\",\"vector\":[1,0]}") == VL_STATUS_OK);
  CHECK(vl_engine_upsert_json(engine, "{\"id\":\"e2\",\"title\":\"lamp\",\"vector\":[0,1]}") == VL_STATUS_OK);
  CHECK(vl_engine_count(engine) == 2);

  char *out = NULL;
  CHECK(vl_engine_search_json(engine, "{\"terms\":[{\"text\":\"fixture:0,1\",\"weight\":1}],\"k\":1}", false, &out) ==
        VL_STATUS_OK);
  CHECK(strstr(out, "\"id\":\"e2\"") != NULL);
  vl_string_free(out);

  CHECK(vl_engine_recommend_json(engine, "{\"seed_ids\":[\"nope\"]}", &out) == VL_STATUS_NOT_FOUND);
  CHECK(strstr(vl_last_error(), "nope") != NULL);

  double a[2] = {1, 0}, b[2] = {0, 1}, r[2];
  CHECK(vl_slerp(a, b, 2, 0.75, r) == VL_STATUS_OK);
  CHECK(fabs(r[0] - 0.3826834323650898) < 1e-12 && fabs(r[1] - 0.9238795325112867) < 1e-12);
  double anti[2] = {-1, 0};
  CHECK(vl_slerp(a, anti, 2, 0.5, r) == VL_STATUS_DEGENERATE_QUERY);

  vl_engine_free(engine);
  puts("ok");
  return 0;
}
