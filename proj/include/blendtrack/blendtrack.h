#ifndef BLENDTRACK_BLENDTRACK_H
#define BLENDTRACK_BLENDTRACK_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define BTRK_API __declspec(dllexport)
#else
#define BTRK_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum btrk_status {
  BTRK_OK = 0,
  BTRK_ERR_INVALID_ARGUMENT = 1,
  BTRK_ERR_IO = 2,
  BTRK_ERR_PARSE = 3,
  BTRK_ERR_DATA = 4,
  BTRK_ERR_NUMERIC = 5,
  BTRK_ERR_INTERNAL = 6
} btrk_status;

#define BTRK_BLENDSHAPE_COUNT 52
#define BTRK_SIDE_COUNT 18
#define BTRK_CENTER_COUNT 16
#define BTRK_HALF_FACE_COUNT 34
#define BTRK_EVAL_VERTEX_COUNT 13

/* Message of the last failed call on this thread; "" when none. */
BTRK_API const char* btrk_last_error(void);
/* Category name of a status ("invalid_argument", "io", ...). */
BTRK_API const char* btrk_status_name(btrk_status status);
BTRK_API const char* btrk_version(void);

/* Blend-shape catalogue in canonical order. */
BTRK_API const char* btrk_blendshape_name(size_t index); /* NULL when out of range */
BTRK_API btrk_status btrk_blendshape_index(const char* name, size_t* out_index);
/* 0 = left block, 1 = right block, 2 = center block, -1 when out of range. */
BTRK_API int btrk_blendshape_partition(size_t index);

/* Full 52-vector from two half predictions in canonical orientation. */
BTRK_API btrk_status btrk_merge_half(const double left_side[BTRK_SIDE_COUNT],
                                     const double left_center[BTRK_CENTER_COUNT],
                                     const double right_side[BTRK_SIDE_COUNT],
                                     const double right_center[BTRK_CENTER_COUNT],
                                     double out[BTRK_BLENDSHAPE_COUNT]);

/* Regressor models. */
typedef struct btrk_model btrk_model;

BTRK_API btrk_status btrk_model_create(uint32_t height, uint32_t width, uint64_t seed, btrk_model** out);
BTRK_API btrk_status btrk_model_load(const char* path, btrk_model** out);
BTRK_API btrk_status btrk_model_save(const btrk_model* model, const char* path);
BTRK_API void btrk_model_destroy(btrk_model* model);
BTRK_API btrk_status btrk_model_input_size(const btrk_model* model, uint32_t* height, uint32_t* width);
/* batch: n images, NHWC float values in [0, 1]; out: n * 34 values. */
BTRK_API btrk_status btrk_model_forward(const btrk_model* model, const float* batch, size_t n, double* out);
/* Raw 8-bit RGB (HWC) images from the left and right cameras, same size. */
BTRK_API btrk_status btrk_predict_full_face(const btrk_model* model, const uint8_t* left_rgb,
                                            const uint8_t* right_rgb, uint32_t height, uint32_t width,
                                            double out[BTRK_BLENDSHAPE_COUNT]);

/* Face meshes and vertex error. */
typedef struct btrk_mesh btrk_mesh;

BTRK_API btrk_status btrk_mesh_default(btrk_mesh** out);
BTRK_API btrk_status btrk_mesh_load(const char* path, btrk_mesh** out);
BTRK_API btrk_status btrk_mesh_save(const btrk_mesh* mesh, const char* path);
BTRK_API void btrk_mesh_destroy(btrk_mesh* mesh);
BTRK_API btrk_status btrk_vertex_error(const btrk_mesh* mesh, double icd_mm, const double gt[BTRK_BLENDSHAPE_COUNT],
                                       const double pred[BTRK_BLENDSHAPE_COUNT],
                                       double out_mm[BTRK_EVAL_VERTEX_COUNT]);

/* Command results: the JSON document written to the output location and a
   one-line summary. Strings live until the report is destroyed. */
typedef struct btrk_report btrk_report;

BTRK_API const char* btrk_report_json(const btrk_report* report);
BTRK_API const char* btrk_report_summary(const btrk_report* report);
BTRK_API void btrk_report_destroy(btrk_report* report);

/* Options. Optional path fields accept NULL. */
typedef struct btrk_synth_options {
  uint32_t subjects;
  uint32_t clips_per_location;
  uint64_t seed;
  double duration_s;
  int64_t clock_offset_ms;
  uint32_t image_size;
  double invalid_fraction;
  const char* out_dir;
} btrk_synth_options;

typedef struct btrk_run_options {
  const char* data_dir;
  const char* config_path;
  const char* model_path;
  const char* test_subject;
  const char* mesh_path;
  double icd_mm;
  const double* fractions;
  size_t fraction_count;
  const char* out;
} btrk_run_options;

typedef struct btrk_bench_options {
  const char* model_path;
  uint32_t image_size;
  uint32_t pairs;
  uint64_t seed;
  const char* out;
} btrk_bench_options;

BTRK_API void btrk_synth_options_init(btrk_synth_options* options);
BTRK_API void btrk_run_options_init(btrk_run_options* options);
BTRK_API void btrk_bench_options_init(btrk_bench_options* options);

BTRK_API btrk_status btrk_cmd_synth(const btrk_synth_options* options, btrk_report** out);
/* data_dir, config_path, out */
BTRK_API btrk_status btrk_cmd_sync(const btrk_run_options* options, btrk_report** out);
/* data_dir, config_path, test_subject, mesh_path, icd_mm, out (directory) */
BTRK_API btrk_status btrk_cmd_train(const btrk_run_options* options, btrk_report** out);
/* as train plus model_path */
BTRK_API btrk_status btrk_cmd_calibrate(const btrk_run_options* options, btrk_report** out);
/* as calibrate plus fractions; out is a file */
BTRK_API btrk_status btrk_cmd_curve(const btrk_run_options* options, btrk_report** out);
/* model_path, data_dir, config_path, optional test_subject, mesh_path, icd_mm, out */
BTRK_API btrk_status btrk_cmd_eval(const btrk_run_options* options, btrk_report** out);
BTRK_API btrk_status btrk_cmd_bench(const btrk_bench_options* options, btrk_report** out);

#ifdef __cplusplus
}
#endif

#endif
