#include "abcm/ops.hpp"

#include <cmath>

namespace abcm {

namespace {

// Division helpers that round toward -inf / +inf for negative numerators.
// Denominator must be positive.
int floor_div(int a, int b) { return a >= 0 ? a / b : -((-a + b - 1) / b); }
int ceil_div(int a, int b) { return a >= 0 ? (a + b - 1) / b : -((-a) / b); }

void require(bool ok, const std::string& what) {
  if (!ok) throw DimensionError(what);
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias,
              int stride, int padding) {
  require(input.ndim() == 4, "conv2d: input must be 4-d, got " + shape_str(input.shape()));
  require(kernel.ndim() == 4, "conv2d: kernel must be 4-d, got " + shape_str(kernel.shape()));
  require(bias.ndim() == 1, "conv2d: bias must be 1-d, got " + shape_str(bias.shape()));
  const int B = input.dim(0), Cin = input.dim(1), H = input.dim(2), W = input.dim(3);
  const int Cout = kernel.dim(0), k = kernel.dim(2);
  require(kernel.dim(1) == Cin, "conv2d: kernel in-channels " + std::to_string(kernel.dim(1)) +
                                    " vs input channels " + std::to_string(Cin));
  require(kernel.dim(3) == k, "conv2d: kernel must be square, got " + shape_str(kernel.shape()));
  require(bias.dim(0) == Cout, "conv2d: bias size " + std::to_string(bias.dim(0)) +
                                   " vs out-channels " + std::to_string(Cout));
  require(stride >= 1 && padding >= 0, "conv2d: stride must be >=1 and padding >=0");
  const int Hout = (H + 2 * padding - k) / stride + 1;
  const int Wout = (W + 2 * padding - k) / stride + 1;
  require(H + 2 * padding >= k && W + 2 * padding >= k && Hout >= 1 && Wout >= 1,
          "conv2d: kernel " + std::to_string(k) + " exceeds padded input " +
              shape_str(input.shape()));

  const int s = stride, p = padding;
  std::vector<float> out(static_cast<size_t>(B) * Cout * Hout * Wout);
  const float* in = input.data().data();
  const float* kw = kernel.data().data();
  const float* bv = bias.data().data();

  for (int b = 0; b < B; ++b) {
    for (int co = 0; co < Cout; ++co) {
      float* plane = out.data() + (static_cast<size_t>(b) * Cout + co) * Hout * Wout;
      for (int i = 0; i < Hout * Wout; ++i) plane[i] = bv[co];
      for (int ci = 0; ci < Cin; ++ci) {
        const float* iplane = in + (static_cast<size_t>(b) * Cin + ci) * H * W;
        const float* krow = kw + ((static_cast<size_t>(co) * Cin + ci) * k) * k;
        for (int ky = 0; ky < k; ++ky) {
          const int oy_lo = std::max(0, ceil_div(p - ky, s));
          const int oy_hi = std::min(Hout - 1, floor_div(H - 1 + p - ky, s));
          for (int oy = oy_lo; oy <= oy_hi; ++oy) {
            const float* irow = iplane + (oy * s - p + ky) * W;
            float* orow = plane + oy * Wout;
            for (int kx = 0; kx < k; ++kx) {
              const float w = krow[ky * k + kx];
              const int ox_lo = std::max(0, ceil_div(p - kx, s));
              const int ox_hi = std::min(Wout - 1, floor_div(W - 1 + p - kx, s));
              for (int ox = ox_lo; ox <= ox_hi; ++ox)
                orow[ox] += w * irow[ox * s - p + kx];
            }
          }
        }
      }
    }
  }

  auto pin = input.impl(), pker = kernel.impl(), pbias = bias.impl();
  auto back = [pin, pker, pbias, B, Cin, H, W, Cout, k, s, p, Hout,
               Wout](detail::TensorImpl& self) {
    const float* g = self.grad.data();
    const float* in = pin->values.data();
    const float* kw = pker->values.data();
    if (pbias->requires_grad) {
      pbias->ensure_grad();
      for (int b = 0; b < B; ++b)
        for (int co = 0; co < Cout; ++co) {
          const float* gp = g + (static_cast<size_t>(b) * Cout + co) * Hout * Wout;
          float acc = 0.0f;
          for (int i = 0; i < Hout * Wout; ++i) acc += gp[i];
          pbias->grad[co] += acc;
        }
    }
    if (pker->requires_grad) pker->ensure_grad();
    if (pin->requires_grad) pin->ensure_grad();
    if (!pker->requires_grad && !pin->requires_grad) return;
    for (int b = 0; b < B; ++b) {
      for (int co = 0; co < Cout; ++co) {
        const float* gplane = g + (static_cast<size_t>(b) * Cout + co) * Hout * Wout;
        for (int ci = 0; ci < Cin; ++ci) {
          const float* iplane = in + (static_cast<size_t>(b) * Cin + ci) * H * W;
          float* diplane = pin->requires_grad
                               ? pin->grad.data() + (static_cast<size_t>(b) * Cin + ci) * H * W
                               : nullptr;
          const size_t koff = (static_cast<size_t>(co) * Cin + ci) * k * k;
          for (int ky = 0; ky < k; ++ky) {
            const int oy_lo = std::max(0, ceil_div(p - ky, s));
            const int oy_hi = std::min(Hout - 1, floor_div(H - 1 + p - ky, s));
            for (int kx = 0; kx < k; ++kx) {
              const int ox_lo = std::max(0, ceil_div(p - kx, s));
              const int ox_hi = std::min(Wout - 1, floor_div(W - 1 + p - kx, s));
              const float w = kw[koff + ky * k + kx];
              float wacc = 0.0f;
              for (int oy = oy_lo; oy <= oy_hi; ++oy) {
                const float* irow = iplane + (oy * s - p + ky) * W;
                const float* grow = gplane + oy * Wout;
                if (diplane) {
                  float* dirow = diplane + (oy * s - p + ky) * W;
                  for (int ox = ox_lo; ox <= ox_hi; ++ox) {
                    const float gv = grow[ox];
                    wacc += gv * irow[ox * s - p + kx];
                    dirow[ox * s - p + kx] += w * gv;
                  }
                } else {
                  for (int ox = ox_lo; ox <= ox_hi; ++ox)
                    wacc += grow[ox] * irow[ox * s - p + kx];
                }
              }
              if (pker->requires_grad) pker->grad[koff + ky * k + kx] += wacc;
            }
          }
        }
      }
    }
  };
  return detail::make_result({B, Cout, Hout, Wout}, std::move(out),
                             {input, kernel, bias}, std::move(back));
}

Tensor deconv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias,
                int stride, int padding, int output_padding) {
  require(input.ndim() == 4, "deconv2d: input must be 4-d, got " + shape_str(input.shape()));
  require(kernel.ndim() == 4, "deconv2d: kernel must be 4-d, got " + shape_str(kernel.shape()));
  require(bias.ndim() == 1, "deconv2d: bias must be 1-d, got " + shape_str(bias.shape()));
  const int B = input.dim(0), Cin = input.dim(1), H = input.dim(2), W = input.dim(3);
  const int Cout = kernel.dim(1), k = kernel.dim(2);
  require(kernel.dim(0) == Cin, "deconv2d: kernel in-channels " +
                                    std::to_string(kernel.dim(0)) + " vs input channels " +
                                    std::to_string(Cin));
  require(kernel.dim(3) == k, "deconv2d: kernel must be square, got " + shape_str(kernel.shape()));
  require(bias.dim(0) == Cout, "deconv2d: bias size " + std::to_string(bias.dim(0)) +
                                   " vs out-channels " + std::to_string(Cout));
  require(stride >= 1 && padding >= 0 && output_padding >= 0 && output_padding < stride,
          "deconv2d: need stride>=1, padding>=0, 0<=output_padding<stride");
  const int s = stride, p = padding;
  const int Hout = (H - 1) * s - 2 * p + k + output_padding;
  const int Wout = (W - 1) * s - 2 * p + k + output_padding;
  require(Hout >= 1 && Wout >= 1, "deconv2d: empty output for input " + shape_str(input.shape()));

  std::vector<float> out(static_cast<size_t>(B) * Cout * Hout * Wout);
  const float* in = input.data().data();
  const float* kw = kernel.data().data();
  const float* bv = bias.data().data();

  for (int b = 0; b < B; ++b)
    for (int co = 0; co < Cout; ++co) {
      float* plane = out.data() + (static_cast<size_t>(b) * Cout + co) * Hout * Wout;
      for (int i = 0; i < Hout * Wout; ++i) plane[i] = bv[co];
    }
  for (int b = 0; b < B; ++b) {
    for (int ci = 0; ci < Cin; ++ci) {
      const float* iplane = in + (static_cast<size_t>(b) * Cin + ci) * H * W;
      for (int co = 0; co < Cout; ++co) {
        float* oplane = out.data() + (static_cast<size_t>(b) * Cout + co) * Hout * Wout;
        const float* kpl = kw + (static_cast<size_t>(ci) * Cout + co) * k * k;
        for (int ky = 0; ky < k; ++ky) {
          const int iy_lo = std::max(0, ceil_div(p - ky, s));
          const int iy_hi = std::min(H - 1, floor_div(Hout - 1 + p - ky, s));
          for (int iy = iy_lo; iy <= iy_hi; ++iy) {
            const float* irow = iplane + iy * W;
            float* orow = oplane + (iy * s - p + ky) * Wout;
            for (int kx = 0; kx < k; ++kx) {
              const float w = kpl[ky * k + kx];
              const int ix_lo = std::max(0, ceil_div(p - kx, s));
              const int ix_hi = std::min(W - 1, floor_div(Wout - 1 + p - kx, s));
              for (int ix = ix_lo; ix <= ix_hi; ++ix)
                orow[ix * s - p + kx] += w * irow[ix];
            }
          }
        }
      }
    }
  }

  auto pin = input.impl(), pker = kernel.impl(), pbias = bias.impl();
  auto back = [pin, pker, pbias, B, Cin, H, W, Cout, k, s, p, Hout,
               Wout](detail::TensorImpl& self) {
    const float* g = self.grad.data();
    const float* in = pin->values.data();
    const float* kw = pker->values.data();
    if (pbias->requires_grad) {
      pbias->ensure_grad();
      for (int b = 0; b < B; ++b)
        for (int co = 0; co < Cout; ++co) {
          const float* gp = g + (static_cast<size_t>(b) * Cout + co) * Hout * Wout;
          float acc = 0.0f;
          for (int i = 0; i < Hout * Wout; ++i) acc += gp[i];
          pbias->grad[co] += acc;
        }
    }
    if (pker->requires_grad) pker->ensure_grad();
    if (pin->requires_grad) pin->ensure_grad();
    if (!pker->requires_grad && !pin->requires_grad) return;
    for (int b = 0; b < B; ++b) {
      for (int ci = 0; ci < Cin; ++ci) {
        const float* iplane = in + (static_cast<size_t>(b) * Cin + ci) * H * W;
        float* diplane = pin->requires_grad
                             ? pin->grad.data() + (static_cast<size_t>(b) * Cin + ci) * H * W
                             : nullptr;
        for (int co = 0; co < Cout; ++co) {
          const float* gplane = g + (static_cast<size_t>(b) * Cout + co) * Hout * Wout;
          const size_t koff = (static_cast<size_t>(ci) * Cout + co) * k * k;
          for (int ky = 0; ky < k; ++ky) {
            const int iy_lo = std::max(0, ceil_div(p - ky, s));
            const int iy_hi = std::min(H - 1, floor_div(Hout - 1 + p - ky, s));
            for (int kx = 0; kx < k; ++kx) {
              const int ix_lo = std::max(0, ceil_div(p - kx, s));
              const int ix_hi = std::min(W - 1, floor_div(Wout - 1 + p - kx, s));
              const float w = kw[koff + ky * k + kx];
              float wacc = 0.0f;
              for (int iy = iy_lo; iy <= iy_hi; ++iy) {
                const float* irow = iplane + iy * W;
                const float* grow = gplane + (iy * s - p + ky) * Wout;
                if (diplane) {
                  float* dirow = diplane + iy * W;
                  for (int ix = ix_lo; ix <= ix_hi; ++ix) {
                    const float gv = grow[ix * s - p + kx];
                    wacc += gv * irow[ix];
                    dirow[ix] += w * gv;
                  }
                } else {
                  for (int ix = ix_lo; ix <= ix_hi; ++ix)
                    wacc += grow[ix * s - p + kx] * irow[ix];
                }
              }
              if (pker->requires_grad) pker->grad[koff + ky * k + kx] += wacc;
            }
          }
        }
      }
    }
  };
  return detail::make_result({B, Cout, Hout, Wout}, std::move(out),
                             {input, kernel, bias}, std::move(back));
}

Tensor gdn(const Tensor& input, const Tensor& beta, const Tensor& gamma,
           bool inverse) {
  require(input.ndim() == 4, "gdn: input must be 4-d, got " + shape_str(input.shape()));
  const int B = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
  require(beta.ndim() == 1 && beta.dim(0) == C,
          "gdn: beta " + shape_str(beta.shape()) + " vs channels " + std::to_string(C));
  require(gamma.ndim() == 2 && gamma.dim(0) == C && gamma.dim(1) == C,
          "gdn: gamma " + shape_str(gamma.shape()) + " vs channels " + std::to_string(C));
  const float* bv = beta.data().data();
  const float* gv = gamma.data().data();
  for (int i = 0; i < C; ++i)
    if (!(bv[i] > 0.0f)) throw ContractError("gdn: beta[" + std::to_string(i) + "] not positive");
  for (int i = 0; i < C * C; ++i)
    if (!(gv[i] >= 0.0f)) throw ContractError("gdn: negative gamma entry");
  const float* x = input.data().data();
  const size_t plane = static_cast<size_t>(H) * W;
  for (std::int64_t i = 0; i < input.numel(); ++i)
    if (!std::isfinite(x[i])) throw NumericError("gdn: non-finite input");

  std::vector<float> out(input.numel());
  std::vector<float> sq(C);
  for (int b = 0; b < B; ++b) {
    const float* xb = x + static_cast<size_t>(b) * C * plane;
    float* ob = out.data() + static_cast<size_t>(b) * C * plane;
    for (size_t px = 0; px < plane; ++px) {
      for (int j = 0; j < C; ++j) {
        const float v = xb[j * plane + px];
        sq[j] = v * v;
      }
      for (int i = 0; i < C; ++i) {
        const float* grow = gv + static_cast<size_t>(i) * C;
        float z = bv[i];
        for (int j = 0; j < C; ++j) z += grow[j] * sq[j];
        const float r = std::sqrt(z);
        ob[i * plane + px] = inverse ? xb[i * plane + px] * r : xb[i * plane + px] / r;
      }
    }
  }

  auto pin = input.impl(), pbeta = beta.impl(), pgamma = gamma.impl();
  auto back = [pin, pbeta, pgamma, B, C, plane, inverse](detail::TensorImpl& self) {
    const bool need_x = pin->requires_grad;
    const bool need_b = pbeta->requires_grad;
    const bool need_g = pgamma->requires_grad;
    if (!need_x && !need_b && !need_g) return;
    if (need_x) pin->ensure_grad();
    if (need_b) pbeta->ensure_grad();
    if (need_g) pgamma->ensure_grad();
    const float* x = pin->values.data();
    const float* bv = pbeta->values.data();
    const float* gv = pgamma->values.data();
    const float* g = self.grad.data();
    std::vector<float> sq(C), zv(C), t(C);
    for (int b = 0; b < B; ++b) {
      const float* xb = x + static_cast<size_t>(b) * C * plane;
      const float* gb = g + static_cast<size_t>(b) * C * plane;
      float* dxb = need_x ? pin->grad.data() + static_cast<size_t>(b) * C * plane : nullptr;
      for (size_t px = 0; px < plane; ++px) {
        for (int j = 0; j < C; ++j) {
          const float v = xb[j * plane + px];
          sq[j] = v * v;
        }
        for (int i = 0; i < C; ++i) {
          const float* grow = gv + static_cast<size_t>(i) * C;
          float z = bv[i];
          for (int j = 0; j < C; ++j) z += grow[j] * sq[j];
          zv[i] = z;
          const float gi = gb[i * plane + px];
          const float xi = xb[i * plane + px];
          // t_i carries g_i * x_i * z^{-3/2} (forward) or g_i * x_i * z^{-1/2}
          // (inverse); beta and gamma grads are -+t_i/2 times {1, sq_j}.
          const float r = std::sqrt(z);
          t[i] = inverse ? gi * xi / r : gi * xi / (z * r);
        }
        const float bsign = inverse ? 0.5f : -0.5f;
        if (need_b)
          for (int i = 0; i < C; ++i) pbeta->grad[i] += bsign * t[i];
        if (need_g)
          for (int i = 0; i < C; ++i) {
            float* dgrow = pgamma->grad.data() + static_cast<size_t>(i) * C;
            const float ti = bsign * t[i];
            for (int j = 0; j < C; ++j) dgrow[j] += ti * sq[j];
          }
        if (need_x)
          for (int j = 0; j < C; ++j) {
            float acc = 0.0f;
            for (int i = 0; i < C; ++i) acc += gv[i * C + j] * t[i];
            const float xj = xb[j * plane + px];
            const float gj = gb[j * plane + px];
            const float rj = std::sqrt(zv[j]);
            dxb[j * plane + px] += inverse ? gj * rj + xj * acc : gj / rj - xj * acc;
          }
      }
    }
  };
  return detail::make_result({B, C, H, W}, std::move(out), {input, beta, gamma},
                             std::move(back));
}

}  // namespace abcm
