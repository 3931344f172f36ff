#include "abcm/gate.hpp"

#include <cmath>

namespace abcm {

namespace {

// Overflow-safe logistic function.
float stable_sigmoid(float x) {
  if (x >= 0.0f) {
    const float e = std::exp(-x);
    return 1.0f / (1.0f + e);
  }
  const float e = std::exp(x);
  return e / (1.0f + e);
}

}  // namespace

void GateConfig::validate() const {
  if (!(std::isfinite(epsilon) && epsilon > 0.0f))
    throw ContractError("gate config: epsilon must be finite and positive");
  if (!(std::isfinite(tau) && tau > 0.0f))
    throw ContractError("gate config: tau must be finite and positive");
}

Tensor gate(const Tensor& alpha, const GateConfig& cfg, Phase phase, RngState* rng) {
  (void)phase;
  (void)rng;
  cfg.validate();
  if (cfg.mode != GateMode::Deterministic)
    throw ContractError("gate: config is not in deterministic mode");
  if (alpha.ndim() != 1)
    throw DimensionError("gate: alpha must be 1-d, got " + shape_str(alpha.shape()));
  const int C = alpha.dim(0);
  std::vector<float> out(C);
  for (int c = 0; c < C; ++c) out[c] = alpha.data()[c] >= 0.0f ? 1.0f : 0.0f;
  auto pa = alpha.impl();
  const float eps = cfg.epsilon;
  return detail::make_result({C}, std::move(out), {alpha},
                             [pa, eps, C](detail::TensorImpl& self) {
                               if (!pa->requires_grad) return;
                               pa->ensure_grad();
                               for (int c = 0; c < C; ++c) {
                                 const float s = stable_sigmoid(eps * pa->values[c]);
                                 pa->grad[c] += self.grad[c] * eps * s * (1.0f - s);
                               }
                             });
}

Tensor gate_stochastic(const Tensor& logits, const GateConfig& cfg, Phase phase,
                       RngState* rng) {
  cfg.validate();
  if (cfg.mode != GateMode::Stochastic)
    throw ContractError("gate_stochastic: config is not in stochastic mode");
  if (logits.ndim() != 2 || logits.dim(0) != 2)
    throw DimensionError("gate_stochastic: logits must be [2,C], got " +
                         shape_str(logits.shape()));
  const int C = logits.dim(1);
  const float* lv = logits.data().data();

  if (phase == Phase::Eval) {
    std::vector<float> out(C);
    for (int c = 0; c < C; ++c) out[c] = lv[C + c] >= lv[c] ? 1.0f : 0.0f;
    return Tensor::from_vector({C}, std::move(out));
  }

  if (rng == nullptr)
    throw ContractError("gate_stochastic: train phase needs an rng");
  // Two-class concrete sample, reduced to a logistic perturbation of the
  // logit difference: sigmoid((on - off + g_on - g_off) / tau).
  std::vector<float> out(C);
  std::vector<float> dsig(C);
  for (int c = 0; c < C; ++c) {
    const float g_on = -std::log(-std::log(rng->uniform_open()));
    const float g_off = -std::log(-std::log(rng->uniform_open()));
    const float d = (lv[C + c] - lv[c] + g_on - g_off) / cfg.tau;
    const float y = stable_sigmoid(d);
    out[c] = y;
    dsig[c] = y * (1.0f - y) / cfg.tau;
  }
  auto pl = logits.impl();
  return detail::make_result({C}, std::move(out), {logits},
                             [pl, dsig = std::move(dsig), C](detail::TensorImpl& self) {
                               if (!pl->requires_grad) return;
                               pl->ensure_grad();
                               for (int c = 0; c < C; ++c) {
                                 const float g = self.grad[c] * dsig[c];
                                 pl->grad[C + c] += g;
                                 pl->grad[c] -= g;
                               }
                             });
}

Tensor apply_mask(const Tensor& x, const Tensor& mask) {
  if (x.ndim() != 4)
    throw DimensionError("apply_mask: x must be 4-d, got " + shape_str(x.shape()));
  if (mask.ndim() != 1 || mask.dim(0) != x.dim(1))
    throw DimensionError("apply_mask: mask " + shape_str(mask.shape()) +
                         " vs channels " + std::to_string(x.dim(1)));
  const int B = x.dim(0), C = x.dim(1);
  const size_t plane = static_cast<size_t>(x.dim(2)) * x.dim(3);
  std::vector<float> out(x.numel());
  const float* xv = x.data().data();
  const float* mv = mask.data().data();
  for (int b = 0; b < B; ++b)
    for (int c = 0; c < C; ++c) {
      const size_t off = (static_cast<size_t>(b) * C + c) * plane;
      const float m = mv[c];
      for (size_t i = 0; i < plane; ++i) out[off + i] = xv[off + i] * m;
    }
  auto px = x.impl(), pm = mask.impl();
  return detail::make_result(
      x.shape(), std::move(out), {x, mask}, [px, pm, B, C, plane](detail::TensorImpl& self) {
        if (px->requires_grad) {
          px->ensure_grad();
          for (int b = 0; b < B; ++b)
            for (int c = 0; c < C; ++c) {
              const size_t off = (static_cast<size_t>(b) * C + c) * plane;
              const float m = pm->values[c];
              for (size_t i = 0; i < plane; ++i) px->grad[off + i] += self.grad[off + i] * m;
            }
        }
        if (pm->requires_grad) {
          pm->ensure_grad();
          for (int b = 0; b < B; ++b)
            for (int c = 0; c < C; ++c) {
              const size_t off = (static_cast<size_t>(b) * C + c) * plane;
              float acc = 0.0f;
              for (size_t i = 0; i < plane; ++i) acc += self.grad[off + i] * px->values[off + i];
              pm->grad[c] += acc;
            }
        }
      });
}

Tensor sparsity_term(const Tensor& mask) {
  if (mask.ndim() != 1)
    throw DimensionError("sparsity_term: mask must be 1-d, got " + shape_str(mask.shape()));
  const int C = mask.dim(0);
  if (C == 0) throw DimensionError("sparsity_term: empty mask");
  double acc = 0.0;
  for (float v : mask.data()) acc += v;
  auto pm = mask.impl();
  return detail::make_result(Shape{}, {static_cast<float>(acc / C)}, {mask},
                             [pm, C](detail::TensorImpl& self) {
                               if (!pm->requires_grad) return;
                               pm->ensure_grad();
                               const float g = self.grad[0] / static_cast<float>(C);
                               for (auto& gv : pm->grad) gv += g;
                             });
}

}  // namespace abcm
