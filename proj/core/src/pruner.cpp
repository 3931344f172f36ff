#include "abcm/pruner.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "abcm/errors.hpp"

namespace abcm {
namespace {

int slot_width(const ChannelConfig& cfg, int slot) {
  return slot < 3 ? cfg.ga_widths[slot + 1] : cfg.gs_widths[slot - 2];
}

void validate_plan(const ChannelConfig& cfg, const KeepPlan& plan) {
  if (plan.keep.size() != 6) {
    throw ContractError("plan does not match model: expected 6 keep lists, got " +
                        std::to_string(plan.keep.size()));
  }
  for (int s = 0; s < 6; ++s) {
    const auto& keep = plan.keep[s];
    const int width = slot_width(cfg, s);
    if (keep.empty()) {
      throw DegeneratePlanError("plan keeps no channels of " + CodecModel::slot_name(s));
    }
    int prev = -1;
    for (int idx : keep) {
      if (idx < 0 || idx >= width) {
        throw ContractError("plan does not match model: channel " + std::to_string(idx) +
                            " out of range for " + CodecModel::slot_name(s) + " (width " +
                            std::to_string(width) + ")");
      }
      if (idx <= prev) {
        throw ContractError("plan does not match model: keep list for " +
                            CodecModel::slot_name(s) + " is not strictly increasing");
      }
      prev = idx;
    }
  }
}

std::vector<int> all_channels(int count) {
  std::vector<int> idx(static_cast<size_t>(count));
  std::iota(idx.begin(), idx.end(), 0);
  return idx;
}

// [C] gather; null keep copies verbatim.
Tensor slice_vec(const Tensor& t, const std::vector<int>* keep) {
  if (keep == nullptr) return t.clone_leaf();
  std::vector<float> out;
  out.reserve(keep->size());
  const auto src = t.data();
  for (int idx : *keep) out.push_back(src[static_cast<size_t>(idx)]);
  return Tensor::from_vector({static_cast<int>(keep->size())}, std::move(out), true);
}

// [C,C] gather on both axes.
Tensor slice_square(const Tensor& t, const std::vector<int>& keep) {
  const int c = t.dim(0);
  const int n = static_cast<int>(keep.size());
  std::vector<float> out;
  out.reserve(static_cast<size_t>(n) * n);
  const auto src = t.data();
  for (int r : keep) {
    for (int col : keep) out.push_back(src[static_cast<size_t>(r) * c + col]);
  }
  return Tensor::from_vector({n, n}, std::move(out), true);
}

// [A,B,kh,kw] gather on the two leading axes; null keeps copy an axis whole.
Tensor slice_kernel(const Tensor& t, const std::vector<int>* axis0,
                    const std::vector<int>* axis1) {
  if (axis0 == nullptr && axis1 == nullptr) return t.clone_leaf();
  const int d0 = t.dim(0);
  const int d1 = t.dim(1);
  const int kh = t.dim(2);
  const int kw = t.dim(3);
  const std::vector<int> rows = axis0 ? *axis0 : all_channels(d0);
  const std::vector<int> cols = axis1 ? *axis1 : all_channels(d1);
  const size_t tap = static_cast<size_t>(kh) * kw;
  std::vector<float> out;
  out.reserve(rows.size() * cols.size() * tap);
  const auto src = t.data();
  for (int r : rows) {
    for (int c : cols) {
      const size_t base = (static_cast<size_t>(r) * d1 + c) * tap;
      out.insert(out.end(), src.begin() + base, src.begin() + base + tap);
    }
  }
  return Tensor::from_vector(
      {static_cast<int>(rows.size()), static_cast<int>(cols.size()), kh, kw},
      std::move(out), true);
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError("equivalence comparison on mismatched shapes " +
                         shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  const auto da = a.data();
  const auto db = b.data();
  double worst = 0.0;
  for (size_t i = 0; i < da.size(); ++i) {
    const double d = std::fabs(static_cast<double>(da[i]) - db[i]);
    if (std::isnan(d)) return std::numeric_limits<double>::quiet_NaN();
    if (d > worst) worst = d;
  }
  return worst;
}

}  // namespace

ChannelConfig pruned_config(const ChannelConfig& base, const KeepPlan& plan) {
  validate_plan(base, plan);
  ChannelConfig cfg = base;
  for (int s = 0; s < 3; ++s) {
    cfg.ga_widths[s + 1] = static_cast<int>(plan.keep[s].size());
    cfg.gs_widths[s + 1] = static_cast<int>(plan.keep[s + 3].size());
  }
  cfg.validate();
  return cfg;
}

KeepPlan extract_plan(const CodecModel& model) {
  KeepPlan plan;
  plan.keep.resize(6);
  if (model.slots.empty()) {
    // Nothing is masked, so every channel survives.
    for (int s = 0; s < 6; ++s) plan.keep[s] = all_channels(slot_width(model.config, s));
    return plan;
  }
  for (int s = 0; s < 6; ++s) {
    const AbcmSlot& slot = model.slots[static_cast<size_t>(s)];
    const int width = slot_width(model.config, s);
    auto& keep = plan.keep[s];
    if (model.gating == Gating::Deterministic) {
      const auto alpha = slot.alpha.data();
      for (int c = 0; c < width; ++c) {
        if (alpha[static_cast<size_t>(c)] >= 0.0f) keep.push_back(c);
      }
    } else {
      const auto logits = slot.logits.data();
      for (int c = 0; c < width; ++c) {
        const float off = logits[static_cast<size_t>(c)];
        const float on = logits[static_cast<size_t>(width + c)];
        if (on >= off) keep.push_back(c);
      }
    }
    if (keep.empty()) {
      throw DegeneratePlanError("pruning would remove every channel of " +
                                CodecModel::slot_name(s));
    }
  }
  return plan;
}

CodecModel with_plan_gates(const CodecModel& model, const KeepPlan& plan) {
  if (model.slots.empty()) {
    throw ContractError("model has no gates to set");
  }
  validate_plan(model.config, plan);
  CodecModel out = clone_model(model);
  for (int s = 0; s < 6; ++s) {
    const int width = slot_width(model.config, s);
    std::vector<char> kept(static_cast<size_t>(width), 0);
    for (int idx : plan.keep[s]) kept[static_cast<size_t>(idx)] = 1;
    AbcmSlot& slot = out.slots[static_cast<size_t>(s)];
    if (model.gating == Gating::Deterministic) {
      std::vector<float> alpha(static_cast<size_t>(width));
      for (int c = 0; c < width; ++c) alpha[c] = kept[c] ? 1.0f : -1.0f;
      slot.alpha = Tensor::from_vector({width}, std::move(alpha), true);
    } else {
      std::vector<float> logits(static_cast<size_t>(2 * width));
      for (int c = 0; c < width; ++c) {
        logits[c] = kept[c] ? -1.0f : 1.0f;
        logits[width + c] = kept[c] ? 1.0f : -1.0f;
      }
      slot.logits = Tensor::from_vector({2, width}, std::move(logits), true);
    }
  }
  return out;
}

CodecModel prune(const CodecModel& model, const KeepPlan& plan) {
  validate_plan(model.config, plan);
  CodecModel out;
  out.config = pruned_config(model.config, plan);
  out.gating = Gating::None;
  out.gate_epsilon = model.gate_epsilon;
  out.gate_tau = model.gate_tau;
  out.pruned_from = plan;

  // Analysis side: slice out-channels of the three masked convs, carry the
  // same keep into the next conv's in-channels. The latent conv keeps its
  // out-channels whole.
  const std::vector<int>* in_keep = nullptr;
  for (int i = 0; i < 4; ++i) {
    const std::vector<int>* out_keep = i < 3 ? &plan.keep[static_cast<size_t>(i)] : nullptr;
    out.ga_convs.push_back({slice_kernel(model.ga_convs[static_cast<size_t>(i)].kernel,
                                         out_keep, in_keep),
                            slice_vec(model.ga_convs[static_cast<size_t>(i)].bias, out_keep)});
    if (i < 3) {
      const auto& keep = plan.keep[static_cast<size_t>(i)];
      out.ga_gdns.push_back(
          {slice_vec(model.ga_gdns[static_cast<size_t>(i)].beta_raw, &keep),
           slice_square(model.ga_gdns[static_cast<size_t>(i)].gamma_raw, keep)});
      in_keep = &keep;
    }
  }

  // Synthesis side mirrors it; deconv kernels store [Cin,Cout,k,k], so the
  // out-channel keep lands on axis 1. The final deconv keeps all 3 outputs.
  in_keep = nullptr;
  for (int i = 0; i < 4; ++i) {
    const std::vector<int>* out_keep =
        i < 3 ? &plan.keep[static_cast<size_t>(3 + i)] : nullptr;
    out.gs_deconvs.push_back({slice_kernel(model.gs_deconvs[static_cast<size_t>(i)].kernel,
                                           in_keep, out_keep),
                              slice_vec(model.gs_deconvs[static_cast<size_t>(i)].bias,
                                        out_keep)});
    if (i < 3) {
      const auto& keep = plan.keep[static_cast<size_t>(3 + i)];
      out.gs_gdns.push_back(
          {slice_vec(model.gs_gdns[static_cast<size_t>(i)].beta_raw, &keep),
           slice_square(model.gs_gdns[static_cast<size_t>(i)].gamma_raw, keep)});
      in_keep = &keep;
    }
  }

  out.entropy.mu = model.entropy.mu.clone_leaf();
  out.entropy.b_raw = model.entropy.b_raw.clone_leaf();
  return out;
}

EquivalenceReport verify_equivalence(const CodecModel& masked, const CodecModel& pruned,
                                     const std::vector<Tensor>& inputs, double tol) {
  if (inputs.empty()) {
    throw ContractError("verify_equivalence needs at least one input");
  }
  NoGradGuard no_grad;
  EquivalenceReport report;
  report.tolerance = tol;
  report.pass = true;
  const ForwardOptions opts;
  for (size_t i = 0; i < inputs.size(); ++i) {
    const Tensor& image = inputs[i];
    Tensor batch;
    if (image.ndim() == 3) {
      std::vector<float> values(image.data().begin(), image.data().end());
      batch = Tensor::from_vector({1, image.dim(0), image.dim(1), image.dim(2)},
                                  std::move(values));
    } else if (image.ndim() == 4) {
      batch = image;
    } else {
      throw DimensionError("equivalence input must be [3,H,W] or [B,3,H,W], got " +
                           shape_str(image.shape()));
    }
    const CodecResult a = run_codec(masked, batch, opts);
    const CodecResult b = run_codec(pruned, batch, opts);

    EquivalenceInput row;
    row.max_latent_diff = max_abs_diff(a.y_hat, b.y_hat);
    row.max_recon_diff = max_abs_diff(a.x_hat, b.x_hat);
    row.rate_masked = a.rate.item();
    row.rate_pruned = b.rate.item();
    row.mse_masked = a.mse_value;
    row.mse_pruned = b.mse_value;
    row.psnr_masked = a.mse_value > 0.0 ? psnr(a.mse_value)
                                        : std::numeric_limits<double>::infinity();
    row.psnr_pruned = b.mse_value > 0.0 ? psnr(b.mse_value)
                                        : std::numeric_limits<double>::infinity();
    const double worst =
        std::isnan(row.max_latent_diff) || std::isnan(row.max_recon_diff)
            ? std::numeric_limits<double>::quiet_NaN()
            : std::max(row.max_latent_diff, row.max_recon_diff);
    row.pass = worst <= tol;
    if (!row.pass) report.pass = false;
    if (!(worst <= report.max_abs_diff) || report.worst_input < 0) {
      report.max_abs_diff = worst;
      report.worst_input = static_cast<int>(i);
    }
    report.inputs.push_back(row);
  }
  return report;
}

}  // namespace abcm
