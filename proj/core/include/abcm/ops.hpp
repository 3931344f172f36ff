#ifndef ABCM_OPS_HPP
#define ABCM_OPS_HPP

#include "abcm/tensor.hpp"

namespace abcm {

// Cross-correlation. input [B,Cin,H,W], kernel [Cout,Cin,k,k], bias [Cout],
// symmetric zero padding. Per output element the terms accumulate in a fixed
// order: bias first, then in-channel-major, kernel row, kernel column. The
// pruning equivalence guarantee depends on that order; do not reorder the
// loops or introduce reassociating optimizations.
Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias,
              int stride, int padding);

// Transposed convolution, adjoint of conv2d for matching geometry. kernel
// [Cin,Cout,k,k]. Output spatial size (H-1)*stride - 2*padding + k +
// output_padding. Same per-output-element accumulation order as conv2d.
Tensor deconv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias,
                int stride, int padding, int output_padding);

// Generalized divisive normalization across channels, per pixel:
//   y_i = x_i / sqrt(beta_i + sum_j gamma_ij * x_j^2)
// inverse=true multiplies by the square root instead. beta and gamma are the
// effective (already positive) parameters; beta_i > 0 and gamma_ij >= 0 are
// preconditions. The j sum runs in ascending channel order after the beta
// term, again so pruned models reproduce kept partial sums bit for bit.
Tensor gdn(const Tensor& input, const Tensor& beta, const Tensor& gamma,
           bool inverse);

}  // namespace abcm

#endif  // ABCM_OPS_HPP
