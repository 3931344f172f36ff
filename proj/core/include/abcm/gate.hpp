#ifndef ABCM_GATE_HPP
#define ABCM_GATE_HPP

#include "abcm/rng.hpp"
#include "abcm/tensor.hpp"

namespace abcm {

enum class Phase { Train, Eval };

enum class GateMode { Deterministic, Stochastic };

// Knobs of one channel-masking slot. epsilon sharpens the sigmoid surrogate
// in deterministic mode; tau is the relaxation temperature in stochastic
// mode.
struct GateConfig {
  GateMode mode = GateMode::Deterministic;
  float epsilon = 4.0f;
  float tau = 1.0f;

  void validate() const;
};

// Deterministic binary gate over importance values. The forward value is
// hard in both phases: 1 where alpha >= 0, else 0. The backward pass uses
// the derivative of sigmoid(epsilon * alpha) as a straight-through
// surrogate.
Tensor gate(const Tensor& alpha, const GateConfig& cfg, Phase phase,
            RngState* rng = nullptr);

// Stochastic variant over a [2,C] logit matrix (row 0 "off", row 1 "on").
// Train phase draws a relaxed two-class concrete sample at temperature tau
// and returns the "on" coordinate; eval phase is hard, gating on when the
// on-logit >= off-logit (ties gate on). Eval output carries no gradient.
Tensor gate_stochastic(const Tensor& logits, const GateConfig& cfg, Phase phase,
                       RngState* rng);

// Channel-wise product: channel c of x scaled by mask[c]. Gradients flow to
// both operands. A mask of ones returns bit-identical values.
Tensor apply_mask(const Tensor& x, const Tensor& mask);

// Fraction of gated-on channels: sum(mask) / C, as a scalar in the graph.
Tensor sparsity_term(const Tensor& mask);

}  // namespace abcm

#endif  // ABCM_GATE_HPP
