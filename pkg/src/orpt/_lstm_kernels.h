#ifndef ORPT_LSTM_KERNELS_H
#define ORPT_LSTM_KERNELS_H

#include <stddef.h>

void lstm_fwd_f32(float *a, const float *c_prev, float *c, float *h, float *tc,
                  ptrdiff_t B, ptrdiff_t M);
void lstm_fwd_f64(double *a, const double *c_prev, double *c, double *h, double *tc,
                  ptrdiff_t B, ptrdiff_t M);
void lstm_bwd_f32(const float *dh, const float *dc, const float *gates,
                  const float *c_prev, const float *tc, float *da, float *dcp,
                  ptrdiff_t B, ptrdiff_t M);
void lstm_bwd_f64(const double *dh, const double *dc, const double *gates,
                  const double *c_prev, const double *tc, double *da, double *dcp,
                  ptrdiff_t B, ptrdiff_t M);

#endif
