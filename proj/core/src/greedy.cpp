#include "abcm/greedy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "abcm/errors.hpp"
#include "abcm/pruner.hpp"
#include "abcm/report.hpp"

namespace abcm {

void SearchConfig::validate() const {
  if (!std::isfinite(psnr_drop_threshold) || psnr_drop_threshold < 0.0) {
    throw ContractError("search config: threshold must be finite and >= 0, got " +
                        std::to_string(psnr_drop_threshold));
  }
  if (!order.empty()) {
    if (order.size() != 6) {
      throw ContractError("search config: order must list all 6 slots");
    }
    std::vector<bool> seen(6, false);
    for (int s : order) {
      if (s < 0 || s >= 6 || seen[static_cast<size_t>(s)]) {
        throw ContractError("search config: order is not a permutation of the slots");
      }
      seen[static_cast<size_t>(s)] = true;
    }
  }
}

std::vector<int> layer_order(const CodecModel&) {
  // Pairs by distance from the image: (gs2, ga0), (gs1, ga1), (gs0, ga2),
  // synthesis side first within each pair.
  return {5, 0, 4, 1, 3, 2};
}

SearchResult greedy_search(const CodecModel& model, const std::vector<Tensor>& images,
                           const SearchConfig& cfg) {
  cfg.validate();
  if (images.empty()) {
    throw ContractError("greedy_search: evaluation set is empty");
  }
  NoGradGuard no_grad;

  std::vector<Tensor> batches;
  for (const auto& image : images) {
    if (image.ndim() == 3) {
      std::vector<float> values(image.data().begin(), image.data().end());
      batches.push_back(Tensor::from_vector({1, image.dim(0), image.dim(1), image.dim(2)},
                                            std::move(values)));
    } else if (image.ndim() == 4) {
      batches.push_back(image);
    } else {
      throw DimensionError("greedy_search: input must be [3,H,W] or [B,3,H,W], got " +
                           shape_str(image.shape()));
    }
  }

  // Search state starts at the model's own hard gates and flips channels off
  // through mask overrides; the model itself is never modified.
  const KeepPlan start = extract_plan(model);
  std::vector<std::vector<float>> on(6);
  int total = 0;
  for (int s = 0; s < 6; ++s) {
    const int width = model.slot_channels(s);
    on[static_cast<size_t>(s)].assign(static_cast<size_t>(width), 0.0f);
    for (int idx : start.keep[static_cast<size_t>(s)]) {
      on[static_cast<size_t>(s)][static_cast<size_t>(idx)] = 1.0f;
    }
    total += width;
  }

  auto mean_psnr = [&]() {
    std::vector<Tensor> masks;
    masks.reserve(6);
    for (int s = 0; s < 6; ++s) {
      masks.push_back(Tensor::from_vector({model.slot_channels(s)},
                                          std::vector<float>(on[static_cast<size_t>(s)])));
    }
    ForwardOptions opts;
    opts.masks = MaskMode::Override;
    opts.mask_override = &masks;
    double acc = 0.0;
    for (const auto& batch : batches) {
      const Tensor y_hat = quantize(analyze(model, batch, opts), Phase::Eval);
      const Tensor x_hat = synthesize(model, y_hat, opts);
      acc += psnr(distortion_mse(batch, x_hat).item());
    }
    return acc / static_cast<double>(batches.size());
  };

  SearchResult res;
  res.total_channels = total;
  res.baseline_psnr = mean_psnr();

  const std::vector<int> order = cfg.order.empty() ? layer_order(model) : cfg.order;
  int removed = 0;
  for (int s : order) {
    auto& slot_on = on[static_cast<size_t>(s)];
    while (true) {
      std::vector<CandidateDrop> candidates;
      int best = -1;
      double best_drop = std::numeric_limits<double>::infinity();
      for (size_t c = 0; c < slot_on.size(); ++c) {
        if (slot_on[c] == 0.0f) continue;
        slot_on[c] = 0.0f;
        const double p = mean_psnr();
        slot_on[c] = 1.0f;
        ++res.candidate_evaluations;
        const double drop = (res.baseline_psnr - p) / res.baseline_psnr * 100.0;
        candidates.push_back({static_cast<int>(c), drop});
        if (drop < best_drop) {
          best_drop = drop;
          best = static_cast<int>(c);
        }
      }
      if (best < 0 || best_drop > cfg.psnr_drop_threshold) break;
      slot_on[static_cast<size_t>(best)] = 0.0f;
      ++removed;
      res.removals.push_back({s, best, best_drop,
                              static_cast<double>(removed) / total,
                              std::move(candidates)});
    }
  }

  res.plan.keep.resize(6);
  for (int s = 0; s < 6; ++s) {
    for (size_t c = 0; c < on[static_cast<size_t>(s)].size(); ++c) {
      if (on[static_cast<size_t>(s)][c] == 1.0f) {
        res.plan.keep[static_cast<size_t>(s)].push_back(static_cast<int>(c));
      }
    }
  }
  return res;
}

std::string curve_csv(const SearchResult& result) {
  std::vector<std::vector<double>> rows;
  rows.reserve(result.removals.size());
  for (const auto& step : result.removals) {
    rows.push_back({step.ratio, step.drop_percent});
  }
  return csv_table({"pruning_ratio", "psnr_drop_percent"}, rows);
}

std::string curve_svg(const SearchResult& result) {
  PlotSeries series;
  series.label = "greedy";
  for (const auto& step : result.removals) {
    series.x.push_back(step.ratio);
    series.y.push_back(step.drop_percent);
  }
  return line_plot_svg("Greedy channel search", "pruning ratio", "PSNR drop (%)",
                       {series});
}

}  // namespace abcm
