/* chorus_kit: C interface to the chorus-detection toolkit.
 *
 * Every function returning int uses the shared status contract:
 *   CK_OK       success
 *   CK_EUSAGE   caller error (bad arguments, missing inputs)
 *   CK_EFORMAT  unreadable or malformed data
 *   CK_ENUMERIC numeric failure (non-finite loss and similar)
 * On failure ck_last_error() describes the problem for the calling thread.
 */
#ifndef CHORUS_KIT_H
#define CHORUS_KIT_H

#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#define CK_OK 0
#define CK_EUSAGE 1
#define CK_EFORMAT 2
#define CK_ENUMERIC 3

/* Toolkit semantic version plus the on-disk format tags it reads/writes. */
const char* ck_version(void);

/* Message for the most recent failure on this thread; never NULL. */
const char* ck_last_error(void);

/* ---- features ---- */

/* WAV in, DCF1 feature file out. log_compress != 0 applies log(1+m). */
int ck_extract_features(const char* wav_path, const char* dcf_path, int log_compress);

/* ---- synthetic corpus ---- */

/* Writes .dcf + .tsv per song and manifest.tsv (train/val/test split). */
int ck_synth_corpus(const char* out_dir, long n_songs, uint64_t seed);

/* ---- training ---- */

typedef struct ck_train_options {
    long batch_size;      /* 4 */
    long crop_frames;     /* 3096 */
    double lr;            /* 1e-4 */
    long validate_every;  /* 50 */
    long patience;        /* 500 */
    long max_iterations;  /* 20000 */
    uint64_t seed;        /* 7 */
    const char* preset;   /* "small" or "paper" */
    int single_scale;     /* 0; 1 replaces the branches by a matched stack */
    int no_attention;     /* 0; 1 replaces attention by a matched conv */
} ck_train_options;

/* Fills in the defaults above. */
void ck_train_options_init(ck_train_options* opts);

/* Trains on the manifest's train split, validating on val; out_dir receives
 * log.tsv, best.dckp and config.txt. best_val_f1 may be NULL. */
int ck_train(const char* manifest_path, const ck_train_options* opts,
             const char* out_dir, double* best_val_f1);

/* ---- models ---- */

typedef struct ck_model ck_model;

int ck_model_open(const char* checkpoint_path, ck_model** out);
void ck_model_close(ck_model* model);
long ck_model_param_count(const ck_model* model);
const char* ck_model_preset(const ck_model* model);

#define CK_SMOOTH_MEDIAN 0
#define CK_SMOOTH_TRIMMED_MEAN 1
#define CK_THRESHOLD_LITERAL 0
#define CK_THRESHOLD_MIDPOINT 1

/* Runs the model on a DCF1 file and writes the per-second curve CSV
 * (second, probability, binary). Detected chorus spans are returned as
 * [start,end) second pairs in segments (2*max_segments longs); n_segments
 * receives the span count even when it exceeds max_segments. Any of the
 * segment arguments may be NULL/0. */
int ck_model_detect(const ck_model* model, const char* dcf_path,
                    const char* curve_csv_path, int smooth_kind, int threshold_kind,
                    long* segments, long max_segments, long* n_segments);

/* Evaluates one manifest split ("train"/"val"/"test") and writes report.tsv
 * (per-song rows plus MEAN). mean_f1/mean_auc may be NULL; mean_auc is NaN
 * when no song had both classes. */
int ck_model_eval(const ck_model* model, const char* manifest_path,
                  const char* split, const char* report_path, double* mean_f1,
                  double* mean_auc);

#define CK_DISTANCE_EUCLIDEAN 0
#define CK_DISTANCE_COSINE 1

/* Self-similarity matrix of the embedding after SA-Conv block `stage`
 * (0 = multi-scale trunk output), written as CSV. */
int ck_model_ssm(const ck_model* model, const char* dcf_path, long stage,
                 int distance, const char* csv_path);

/* ---- plotting ---- */

/* Renders curve.csv as an SVG: probability polyline, adaptive-threshold rule,
 * shaded ground truth when annotation_tsv is non-NULL. */
int ck_plot_curve(const char* curve_csv_path, const char* annotation_tsv,
                  const char* svg_path);

#ifdef __cplusplus
}
#endif

#endif /* CHORUS_KIT_H */
