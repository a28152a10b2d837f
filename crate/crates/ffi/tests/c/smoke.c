#include <stdio.h>
#include <string.h>
#include "tgs.h"

#define CHECK(x) do { if (!(x)) { fprintf(stderr, "failed: %s\n", #x); return 1; } } while (0)

int main(void) {
    TgsBox a = {0, 0, 10, 10}, b = {5, 5, 15, 15};
    double v = 0.0;
    CHECK(tgs_iou(&a, &b, &v) == TGS_STATUS_OK);
    CHECK(v > 0.1428 && v < 0.1429);

    CHECK(tgs_token_f1("green icon", "icon", &v) == TGS_STATUS_OK);
    CHECK(v > 0.6666 && v < 0.6667);

    CHECK(tgs_iou(NULL, &b, &v) == TGS_STATUS_NULL_POINTER);
    char *msg = tgs_last_error_message();
    CHECK(msg != NULL && strlen(msg) > 0);
    tgs_string_free(msg);

    TgsScene *scene = NULL;
    CHECK(tgs_scene_generate(7, &scene) == TGS_STATUS_OK);
    uint32_t w = 0, h = 0;
    CHECK(tgs_scene_size(scene, &w, &h) == TGS_STATUS_OK && w > 0 && h > 0);

    TgsModel *model = NULL;
    CHECK(tgs_model_new(3, &model) == TGS_STATUS_OK);
    char *ans = NULL;
    CHECK(tgs_model_answer(model, scene, 6, "<image>\nWhere on the screen is the icon named <ref>bell</ref>?", &ans) == TGS_STATUS_OK);
    CHECK(ans != NULL);
    tgs_string_free(ans);
    tgs_model_free(model);
    tgs_scene_free(scene);
    printf("ok %s\n", tgs_version());
    return 0;
}
