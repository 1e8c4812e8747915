/*
 * flowstyle C API.
 *
 * Every object is an opaque handle created by a fs_*_create/load/... call and
 * released by the matching fs_*_destroy. Functions return an fs_status; on
 * failure fs_last_error() holds a one-line description for the calling
 * thread. Output handles are written only on success.
 */
#ifndef FLOWSTYLE_FLOWSTYLE_H
#define FLOWSTYLE_FLOWSTYLE_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define FS_API __declspec(dllexport)
#else
#define FS_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum fs_status {
  FS_OK = 0,
  FS_ERR_INVALID_ARGUMENT = 1,
  FS_ERR_IO = 2,
  FS_ERR_BAD_MAGIC = 3,
  FS_ERR_VERSION_UNSUPPORTED = 4,
  FS_ERR_SHAPE_MISMATCH = 5,
  FS_ERR_TRUNCATED_FILE = 6,
  FS_ERR_TRAILING_DATA = 7,
  FS_ERR_UNKNOWN_LAYER = 8,
  FS_ERR_SIZE_MISMATCH = 9,
  FS_ERR_IMAGE_TOO_SMALL = 10,
  FS_ERR_EMPTY_MASK = 11,
  FS_ERR_ALL_TERMS_ZERO = 12,
  FS_ERR_NON_FINITE_ENERGY = 13,
  FS_ERR_CHANNEL_MISMATCH = 14,
  FS_ERR_EMPTY_SEQUENCE = 15,
  FS_ERR_LENGTH_MISMATCH = 16,
  FS_ERR_MISSING_FRAME = 17,
  FS_ERR_FLOW_UNAVAILABLE = 18,
  FS_ERR_PARSE = 19,
  FS_ERR_INTERNAL = 100
} fs_status;

typedef struct fs_image fs_image;
typedef struct fs_network fs_network;
typedef struct fs_flow fs_flow;
typedef struct fs_weights fs_weights;

FS_API const char* fs_version(void);
FS_API const char* fs_last_error(void);
FS_API const char* fs_status_name(fs_status status);
/* Frees strings returned through char** out-parameters. */
FS_API void fs_string_free(char* s);

/* ---- images: H x W x C floats, row-major, channel-interleaved ---------- */

/* data may be NULL for a zero image; otherwise h*w*c floats are copied. */
FS_API fs_status fs_image_create(int height, int width, int channels, const float* data, fs_image** out);
FS_API fs_status fs_image_noise(int height, int width, int channels, uint64_t seed, fs_image** out);
/* PNG (8-bit) or binary PPM (P6). */
FS_API fs_status fs_image_load(const char* path, fs_image** out);
/* ".ppm" writes P6, anything else PNG. Values are clamped to [0,1]. */
FS_API fs_status fs_image_save(const fs_image* image, const char* path);
FS_API int fs_image_height(const fs_image* image);
FS_API int fs_image_width(const fs_image* image);
FS_API int fs_image_channels(const fs_image* image);
FS_API const float* fs_image_data(const fs_image* image);
FS_API void fs_image_destroy(fs_image* image);

/* Loads frame_%05d.png|ppm from dir into a malloc'ed handle array. */
FS_API fs_status fs_frames_load(const char* dir, fs_image*** out, size_t* count);
/* Writes frame_%05d<ext> for each image into dir (created if missing). */
FS_API fs_status fs_frames_save(const fs_image* const* images, size_t count, const char* dir, const char* ext);
FS_API void fs_image_array_free(fs_image** images, size_t count);

/* ---- feature network ---------------------------------------------------- */

typedef enum fs_layer_kind { FS_LAYER_CONV = 0, FS_LAYER_RELU = 1, FS_LAYER_POOL = 2 } fs_layer_kind;

FS_API fs_status fs_network_tiny_vgg(fs_network** out);
FS_API fs_status fs_network_load(const char* spec_path, const char* weights_path, fs_network** out);
/* Writes the tiny-vgg text spec and NSWT weight file. */
FS_API fs_status fs_network_write_tiny_vgg(const char* spec_path, const char* weights_path);
FS_API size_t fs_network_layer_count(const fs_network* net);
/* Empty string when index is out of range. */
FS_API const char* fs_network_layer_name(const fs_network* net, size_t index);
FS_API fs_layer_kind fs_network_layer_kind(const fs_network* net, size_t index);
/* Conv shape (out, in, kh, kw); zeros for other kinds. */
FS_API fs_status fs_network_layer_shape(const fs_network* net, size_t index, int shape[4]);
FS_API int fs_network_input_channels(const fs_network* net);
FS_API void fs_network_destroy(fs_network* net);

/* ---- loss weights ------------------------------------------------------- */

typedef enum fs_temporal_kind { FS_TEMPORAL_SQUARED = 0, FS_TEMPORAL_CHARBONNIER = 1 } fs_temporal_kind;

/* Defaults: content conv4_2 = 1; style conv1_1..conv5_1 = 0.2; tv = 1e-3. */
FS_API fs_status fs_weights_default(fs_weights** out);
FS_API fs_status fs_weights_set_content(fs_weights* w, const char* layer, float value);
FS_API fs_status fs_weights_set_style(fs_weights* w, const char* layer, float value);
FS_API fs_status fs_weights_clear(fs_weights* w);
FS_API fs_status fs_weights_set_tv(fs_weights* w, float value);
FS_API fs_status fs_weights_set_temporal(fs_weights* w, float value, fs_temporal_kind kind, float epsilon);
/* JSON rendering of the weights (same keys as the job file). */
FS_API fs_status fs_weights_to_json(const fs_weights* w, char** out);
/* Applies a JSON weights object on top of w; "content"/"style" objects
 * replace the whole layer map. */
FS_API fs_status fs_weights_apply_json(fs_weights* w, const char* json_text);
FS_API void fs_weights_destroy(fs_weights* w);

/* ---- single-image rendering -------------------------------------------- */

typedef enum fs_init_kind { FS_INIT_CONTENT = 0, FS_INIT_NOISE = 1 } fs_init_kind;

typedef struct fs_render_options {
  int iterations;
  float step_size;
  int auto_balance;
  fs_init_kind init;
  uint64_t seed; /* noise init only */
} fs_render_options;

typedef struct fs_energy {
  double content;
  double style;
  double tv;
  double temporal;
  double total;
} fs_energy;

FS_API void fs_render_options_default(fs_render_options* options);
/* start/end may be NULL. The output is clamped to [0,1]. */
FS_API fs_status fs_render_image(const fs_network* net, const fs_image* content, const fs_image* style,
                                 const fs_weights* weights, const fs_render_options* options, fs_image** out,
                                 fs_energy* start, fs_energy* end);

/* Runs a JSON render job (see README); relative paths resolve against
 * base_dir. coherence may be NULL. */
FS_API fs_status fs_render_video(const char* job_json, const char* base_dir, double* coherence);

/* ---- optical flow ------------------------------------------------------- */

typedef struct fs_hs_config {
  float alpha;
  int levels;
  int iterations;
  float downscale;
} fs_hs_config;

FS_API void fs_hs_config_default(fs_hs_config* cfg);
/* uv may be NULL for a zero field; otherwise h*w*2 floats (u,v interleaved). */
FS_API fs_status fs_flow_create(int height, int width, const float* uv, fs_flow** out);
FS_API fs_status fs_flow_read(const char* path, fs_flow** out);
FS_API fs_status fs_flow_write(const fs_flow* flow, const char* path);
FS_API int fs_flow_height(const fs_flow* flow);
FS_API int fs_flow_width(const fs_flow* flow);
FS_API const float* fs_flow_data(const fs_flow* flow);
FS_API void fs_flow_destroy(fs_flow* flow);
/* Loads flow_%05d.flo for t = 1..frame_count-1. */
FS_API fs_status fs_flows_load(const char* dir, size_t frame_count, fs_flow*** out, size_t* count);
FS_API void fs_flow_array_free(fs_flow** flows, size_t count);

/* Flow taking a toward b. cfg may be NULL for defaults. */
FS_API fs_status fs_flow_estimate(const fs_image* a, const fs_image* b, const fs_hs_config* cfg, fs_flow** out);
/* Backward-warp field that carries prev into next's geometry. */
FS_API fs_status fs_flow_for_warp(const fs_image* prev, const fs_image* next, const fs_hs_config* cfg,
                                  fs_flow** out);
/* out(p) = bilinear(image, p + flow(p)); mask (1 channel, 1 = in bounds) may be NULL. */
FS_API fs_status fs_warp(const fs_image* image, const fs_flow* flow, fs_image** out, fs_image** mask);
/* flows[t] maps frame t+1 back to frame t; count(flows) = count(frames) - 1. */
FS_API fs_status fs_coherence(const fs_image* const* frames, size_t frame_count, const fs_flow* const* flows,
                              size_t flow_count, double* out);

/* ---- color and sequence helpers ---------------------------------------- */

FS_API fs_status fs_histmatch(const fs_image* source, const fs_image* reference, int bins, fs_image** out);
/* out receives frame_count new handles. */
FS_API fs_status fs_style_movie(const fs_image* style, const fs_image* const* frames, size_t frame_count, int bins,
                                fs_image** out);
/* Writes up to capacity indices; *count receives the total found. */
FS_API fs_status fs_scene_cuts(const fs_image* const* frames, size_t frame_count, double threshold, int* indices,
                               size_t capacity, size_t* count);

#ifdef __cplusplus
}
#endif

#endif /* FLOWSTYLE_FLOWSTYLE_H */
