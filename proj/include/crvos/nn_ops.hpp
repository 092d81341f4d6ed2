#pragma once

#include <vector>

#include "crvos/autograd.hpp"
#include "crvos/tensor.hpp"

namespace crvos::nn {

// ---------------------------------------------------------------------------
// Value kernels. Weight layouts:
//   conv2d:   w = (out_c, in_c, k*k), b = (out_c,1,1)
//   deconv2d: w = (in_c, out_c, 16), b = (out_c,1,1); fixed 4x4 kernel,
//             stride 2, pad 1 -> exact 2x upscale.
// ---------------------------------------------------------------------------

Tensor conv2d_fwd(const Tensor& x, const Tensor& w, const Tensor& b, int k, int stride, int pad);
void conv2d_bwd(const Tensor& x, const Tensor& w, const Tensor& gout, int k, int stride, int pad,
                Tensor* gx, Tensor* gw, Tensor* gb);

Tensor deconv2d_fwd(const Tensor& x, const Tensor& w, const Tensor& b);
void deconv2d_bwd(const Tensor& x, const Tensor& w, const Tensor& gout,
                  Tensor* gx, Tensor* gw, Tensor* gb);

Tensor relu_fwd(const Tensor& x);

// Parameter-free bilinear upscale by an integer factor (half-pixel centers).
Tensor upsample_bilinear_fwd(const Tensor& x, int factor);
void upsample_bilinear_bwd(const Tensor& gout, int factor, Tensor* gx);

// Non-overlapping block mean; h and w must be divisible by k.
Tensor avgpool_fwd(const Tensor& x, int k);
void avgpool_bwd(const Tensor& gout, int k, Tensor* gx);

Tensor softmax_channels_fwd(const Tensor& x);

// ---------------------------------------------------------------------------
// Tape ops.
// ---------------------------------------------------------------------------

Var conv2d(const Var& x, const Var& w, const Var& b, int k, int stride, int pad);
Var deconv2d(const Var& x, const Var& w, const Var& b);
Var relu(const Var& x);
Var upsample_bilinear(const Var& x, int factor);
Var avgpool(const Var& x, int k);
Var concat_channels(const std::vector<Var>& xs);
Var add(const Var& a, const Var& b);
Var scale(const Var& x, double s);
Var softmax_channels(const Var& x);

// Mean over pixels of -log(pred[target channel]), clamped at eps before log.
// pred is a (2,h,w) soft mask (channel 0 = fg); target is binary {0,1}.
// Throws NumericError on non-finite pred values.
Var nll_loss_graph(const Var& pred, const MaskMap& target, double eps = 1e-7);

}  // namespace crvos::nn
