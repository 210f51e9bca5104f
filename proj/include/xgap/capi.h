/* C interface to the xgap core. Every entry point returns an error code
 * (XGAP_OK on success); the message for the most recent failure on the
 * calling thread is available via xgap_last_error(). Handles are opaque and
 * must be released with their matching _free call. */
#ifndef XGAP_CAPI_H
#define XGAP_CAPI_H

#ifdef __cplusplus
extern "C" {
#endif

enum xgap_status {
    XGAP_OK = 0,
    XGAP_EINVAL = 1,   /* bad arguments or contract violation */
    XGAP_EIO = 2,      /* missing files, bad magic, truncation */
    XGAP_ENUMERIC = 3, /* NaN/Inf surfaced in a computation */
    XGAP_EINTERNAL = 4
};

const char* xgap_version(void);
const char* xgap_last_error(void);

/* corpus generation: spec_file is a key=value corpus spec */
int xgap_gen_data(const char* spec_file, const char* out_dir);

/* training; scope is "all" or "projections_only", log_csv may be NULL */
int xgap_pretrain(const char* corpus_dir, const char* loss, double tau, int steps, int batch,
                  double lr, unsigned long long seed, const char* scope, const char* out_ckpt,
                  const char* log_csv);

/* projection-only fine-tuning at the given temperature */
int xgap_finetune(const char* ckpt, const char* corpus_dir, double tau, int steps, double lr,
                  unsigned long long seed, const char* out_ckpt, const char* log_csv);

/* native features of a corpus split; modality is "image" or "text" */
int xgap_encode(const char* ckpt, const char* corpus_dir, const char* split,
                const char* modality, const char* out_feats);

/* modality inversion over a corpus split; mode is "oti" or "ovi"; count is
 * R or P; include_gallery additionally inverts the gallery split (intra-OTI
 * protocol); traj_csv may be NULL */
int xgap_invert(const char* ckpt, const char* corpus_dir, const char* mode, const char* split,
                int count, int steps, unsigned long long seed, int include_gallery,
                const char* out_feats, const char* traj_csv);

/* evaluation; task is img2img | txt2txt | zeroshot | imgtxt. query_native
 * may be NULL; when given with 0 <= alpha <= 1 the query features are the
 * normalized mix alpha*query + (1-alpha)*query_native (matched by id). */
int xgap_eval(const char* task, const char* query_feats, const char* gallery_feats,
              const char* query_native_feats, double alpha, double tau, const char* report_csv);

/* modality gap, similarity histograms and inversion trajectories */
int xgap_diagnose(const char* ckpt, const char* corpus_dir, const char* report_dir, int samples,
                  int steps, unsigned long long seed);

/* end-to-end preset from a config file */
int xgap_run_experiment(const char* config_path);

/* opaque model handle */
typedef struct xgap_model xgap_model;
int xgap_model_open(const char* ckpt, xgap_model** out);
void xgap_model_free(xgap_model* model);
unsigned long long xgap_model_digest(const xgap_model* model);
int xgap_model_dim(const xgap_model* model);
long xgap_model_param_count(const xgap_model* model);

/* opaque feature-set handle */
typedef struct xgap_featureset xgap_featureset;
int xgap_featureset_open(const char* path, xgap_featureset** out);
void xgap_featureset_free(xgap_featureset* fs);
int xgap_featureset_size(const xgap_featureset* fs);
int xgap_featureset_dim(const xgap_featureset* fs);
const char* xgap_featureset_modality(const xgap_featureset* fs);

#ifdef __cplusplus
}
#endif

#endif /* XGAP_CAPI_H */
