/* Fused LSTM cell pointwise kernels. Gate layout per row: i | f | g | o,
 * each M wide. Built with -ffast-math so the tanh loops map onto the
 * vector math library. */
#include <math.h>
#include "_lstm_kernels.h"

#define DEFINE_FWD(NAME, T, TANH)                                              \
void NAME(T *a, const T *c_prev, T *c, T *h, T *tc, ptrdiff_t B, ptrdiff_t M)  \
{                                                                              \
    for (ptrdiff_t b = 0; b < B; b++) {                                        \
        T *restrict ai = a + b * 4 * M;                                        \
        T *restrict ag = ai + 2 * M;                                           \
        T *restrict ao = ai + 3 * M;                                           \
        const T *restrict cp = c_prev + b * M;                                 \
        T *restrict cr = c + b * M;                                            \
        T *restrict hr = h + b * M;                                            \
        T *restrict tr = tc + b * M;                                           \
        for (ptrdiff_t m = 0; m < 2 * M; m++)   /* i and f are adjacent */     \
            ai[m] = (T)0.5 * ((T)1 + TANH((T)0.5 * ai[m]));                    \
        for (ptrdiff_t m = 0; m < M; m++)                                      \
            ag[m] = TANH(ag[m]);                                               \
        for (ptrdiff_t m = 0; m < M; m++)                                      \
            ao[m] = (T)0.5 * ((T)1 + TANH((T)0.5 * ao[m]));                    \
        for (ptrdiff_t m = 0; m < M; m++)                                      \
            cr[m] = ai[M + m] * cp[m] + ai[m] * ag[m];                         \
        for (ptrdiff_t m = 0; m < M; m++)                                      \
            tr[m] = TANH(cr[m]);                                               \
        for (ptrdiff_t m = 0; m < M; m++)                                      \
            hr[m] = ao[m] * tr[m];                                             \
    }                                                                          \
}

#define DEFINE_BWD(NAME, T)                                                    \
void NAME(const T *dh, const T *dc, const T *gates, const T *c_prev,           \
          const T *tc, T *da, T *dcp, ptrdiff_t B, ptrdiff_t M)                \
{                                                                              \
    for (ptrdiff_t b = 0; b < B; b++) {                                        \
        const T *restrict gi = gates + b * 4 * M, *restrict gf = gi + M,       \
                *restrict gg = gf + M, *restrict go = gg + M;                  \
        T *restrict di = da + b * 4 * M, *restrict df = di + M,                \
          *restrict dg = df + M, *restrict dO = dg + M;                        \
        const T *restrict dhr = dh + b * M, *restrict dcr = dc + b * M,        \
                *restrict cp = c_prev + b * M, *restrict tr = tc + b * M;      \
        T *restrict dcpr = dcp + b * M;                                        \
        for (ptrdiff_t m = 0; m < M; m++) {                                    \
            T t = tr[m];                                                       \
            T d = dcr[m] + dhr[m] * go[m] * ((T)1 - t * t);                    \
            di[m] = d * gg[m] * gi[m] * ((T)1 - gi[m]);                        \
            df[m] = d * cp[m] * gf[m] * ((T)1 - gf[m]);                        \
            dg[m] = d * gi[m] * ((T)1 - gg[m] * gg[m]);                        \
            dO[m] = dhr[m] * t * go[m] * ((T)1 - go[m]);                       \
            dcpr[m] = d * gf[m];                                               \
        }                                                                      \
    }                                                                          \
}

DEFINE_FWD(lstm_fwd_f32, float, tanhf)
DEFINE_FWD(lstm_fwd_f64, double, tanh)
DEFINE_BWD(lstm_bwd_f32, float)
DEFINE_BWD(lstm_bwd_f64, double)
