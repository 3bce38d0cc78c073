/* SPDX-License-Identifier: Apache-2.0 */
/* Exercises the exported surface from plain C. */
#include <math.h>
#include <stdio.h>
#include <stdlib.h>
#include <string.h>

#include "oie/oie.h"

static int failures = 0;

#define EXPECT(cond)                                              \
  do {                                                            \
    if (!(cond)) {                                                \
      fprintf(stderr, "%s:%d: expected %s\n", __FILE__, __LINE__, #cond); \
      ++failures;                                                 \
    }                                                             \
  } while (0)

int main(void) {
  EXPECT(strlen(oie_version()) > 0);

  oie_config* cfg = NULL;
  EXPECT(oie_config_default(&cfg) == OIE_OK);
  EXPECT(cfg != NULL);

  EXPECT(oie_config_patch(cfg, "{\"train\": {\"steps\": 7}}") == OIE_OK);
  char* json = NULL;
  EXPECT(oie_config_to_json(cfg, &json) == OIE_OK);
  EXPECT(json != NULL && strstr(json, "\"steps\": 7") != NULL);
  oie_string_free(json);

  EXPECT(oie_config_patch(cfg, "{\"inference_steps\": 0}") == OIE_ERR_CONFIG);
  EXPECT(strstr(oie_last_error(), "inference_steps") != NULL);
  EXPECT(oie_config_patch(cfg, "{\"nonsense\": 1}") == OIE_ERR_CONFIG);
  EXPECT(oie_config_patch(cfg, "not json") == OIE_ERR_CONFIG);
  EXPECT(oie_config_patch(NULL, "{}") == OIE_ERR_CONFIG);
  EXPECT(oie_config_load("/nonexistent/config.json", NULL) == OIE_ERR_CONFIG);

  oie_config* loaded = NULL;
  EXPECT(oie_config_load("/nonexistent/config.json", &loaded) == OIE_ERR_CONFIG);
  EXPECT(loaded == NULL);

  double pct = 0.0;
  EXPECT(oie_overhead_pct(14.28602e9, 14.36269e9, &pct) == OIE_OK);
  EXPECT(fabs(pct - 0.5367) < 5e-5);
  EXPECT(oie_overhead_pct(0.0, 1.0, &pct) == OIE_ERR_CONFIG);

  oie_model* model = NULL;
  EXPECT(oie_model_load("/nonexistent/checkpoint", 0, &model) == OIE_ERR_CONFIG);
  EXPECT(model == NULL);
  EXPECT(oie_train(cfg, "/nonexistent/manifest.json", "/tmp", NULL, NULL, NULL) == OIE_ERR_RUNTIME);

  oie_config_free(cfg);
  oie_model_free(NULL);
  oie_config_free(NULL);

  if (failures) {
    fprintf(stderr, "%d C API checks failed\n", failures);
    return 1;
  }
  printf("C API checks passed\n");
  return 0;
}
