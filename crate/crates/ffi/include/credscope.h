/* C interface for the credscope scoring pipeline.
 *
 * Maintained by hand alongside crates/ffi/src/lib.rs; the ffi_smoke test
 * compiles and runs a C program against this header to keep them in sync.
 *
 * Conventions:
 *   - every function returns CREDSCOPE_OK (0) on success;
 *   - constructors write an opaque handle through an out pointer, released
 *     with the matching *_free (all *_free accept NULL);
 *   - credscope_last_error() copies this thread's last error message;
 *   - string buffers receive NUL-terminated UTF-8, with the required size
 *     reported through the `written` out parameter.
 */
#ifndef CREDSCOPE_H
#define CREDSCOPE_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum credscope_status {
  CREDSCOPE_OK = 0,
  CREDSCOPE_NULL_ARGUMENT = 1,
  CREDSCOPE_INVALID_UTF8 = 2,
  CREDSCOPE_IO_ERROR = 3,
  CREDSCOPE_PARSE_ERROR = 4,
  CREDSCOPE_OUT_OF_RANGE = 5,
  CREDSCOPE_BUFFER_TOO_SMALL = 6,
  CREDSCOPE_INTERNAL_ERROR = 7
} credscope_status;

typedef struct CredscopeLexicon CredscopeLexicon;
typedef struct CredscopeBag CredscopeBag;
typedef struct CredscopeModel CredscopeModel;
typedef struct CredscopeCheckpoint CredscopeCheckpoint;

/* Library version as a static NUL-terminated string. */
const char *credscope_version(void);

/* Copies the calling thread's last error message into buf (if it fits) and
 * returns the size the message needs including the NUL, or 0 when no error
 * has been recorded. */
size_t credscope_last_error(char *buf, size_t buf_len);

/* Term dictionary: one UTF-8 term per line. */
credscope_status credscope_lexicon_load(const char *path, CredscopeLexicon **out);
credscope_status credscope_lexicon_term_count(const CredscopeLexicon *lex, uint64_t *out);
void credscope_lexicon_free(CredscopeLexicon *lex);

/* Greedy longest-match bag-of-words extraction over UTF-8 text. */
credscope_status credscope_bag_extract(const CredscopeLexicon *lex, const char *text,
                                       CredscopeBag **out);
credscope_status credscope_bag_total(const CredscopeBag *bag, uint64_t *out);
credscope_status credscope_bag_count(const CredscopeBag *bag, const char *term, uint64_t *out);
void credscope_bag_free(CredscopeBag *bag);

/* Fitted topic model dump (lda_model.v1.bin). */
credscope_status credscope_model_load(const char *path, CredscopeModel **out);
credscope_status credscope_model_topic_count(const CredscopeModel *model, uint32_t *out);
/* Keyword `rank` (0-based, descending probability) of `topic`. */
credscope_status credscope_model_keyword(const CredscopeModel *model, uint32_t topic,
                                         uint32_t rank, char *buf, size_t buf_len,
                                         size_t *written);
void credscope_model_free(CredscopeModel *model);

/* Trained network checkpoint (train_checkpoint.v1.bin). */
credscope_status credscope_checkpoint_load(const char *path, CredscopeCheckpoint **out);
/* Number of f64 pixels one feature image must supply (rows x 11). */
credscope_status credscope_checkpoint_image_len(const CredscopeCheckpoint *ckpt, size_t *out);
/* Scores one company from its row-major feature image and its raw count of
 * mentioning articles; the score lands strictly inside (0, 1). */
credscope_status credscope_checkpoint_score(const CredscopeCheckpoint *ckpt,
                                            const double *pixels, size_t pixel_count,
                                            uint64_t article_count, double *out_score);
void credscope_checkpoint_free(CredscopeCheckpoint *ckpt);

#ifdef __cplusplus
}
#endif

#endif /* CREDSCOPE_H */
