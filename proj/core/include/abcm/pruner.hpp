#ifndef ABCM_PRUNER_HPP
#define ABCM_PRUNER_HPP

#include <vector>

#include "abcm/codec.hpp"
#include "abcm/plan.hpp"

namespace abcm {

// Channel widths after applying `plan` to `base`: masked layer widths
// shrink to their keep-list sizes, endpoints and the latent stay put.
ChannelConfig pruned_config(const ChannelConfig& base, const KeepPlan& plan);

// Keep lists read off the model's hard gates (deterministic: alpha >= 0;
// stochastic: on-logit >= off-logit). A model without gates keeps every
// channel. A slot keeping zero channels raises a degenerate-plan error
// naming it.
KeepPlan extract_plan(const CodecModel& model);

// Clone whose gates realize exactly `plan` (importances +-1, or the
// equivalent logit rows in stochastic mode).
CodecModel with_plan_gates(const CodecModel& model, const KeepPlan& plan);

// Structurally slimmer model: masked conv filters, biases, normalization
// rows/columns, and downstream input channels are sliced to the keep
// sets; unmasked layers and the entropy model are copied verbatim. The
// result carries no gates and records the plan.
CodecModel prune(const CodecModel& model, const KeepPlan& plan);

struct EquivalenceInput {
  double max_latent_diff = 0.0;
  double max_recon_diff = 0.0;
  double rate_masked = 0.0;
  double rate_pruned = 0.0;
  double mse_masked = 0.0;
  double mse_pruned = 0.0;
  double psnr_masked = 0.0;  // +inf for an exact reconstruction
  double psnr_pruned = 0.0;
  bool pass = false;
};

struct EquivalenceReport {
  std::vector<EquivalenceInput> inputs;
  double tolerance = 0.0;
  double max_abs_diff = 0.0;
  int worst_input = -1;
  bool pass = false;
};

// Runs both models in eval phase on each [3,H,W] input and compares
// latents and reconstructions elementwise; passes iff the largest
// absolute difference is <= tol on every input.
EquivalenceReport verify_equivalence(const CodecModel& masked, const CodecModel& pruned,
                                     const std::vector<Tensor>& inputs, double tol);

}  // namespace abcm

#endif
