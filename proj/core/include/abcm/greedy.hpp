#ifndef ABCM_GREEDY_HPP
#define ABCM_GREEDY_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "abcm/codec.hpp"
#include "abcm/plan.hpp"

namespace abcm {

struct SearchConfig {
  // Maximum tolerated reconstruction quality drop, in percent of the
  // baseline PSNR.
  double psnr_drop_threshold = 1.0;
  // Slot visitation order; empty means layer_order(model).
  std::vector<int> order;

  void validate() const;
};

// Deterministic slot ordering: pair slots by distance from the image, the
// pair nearest the image first, and within a pair the synthesis slot before
// the analysis slot. For the six maskable slots that is
// [gs2, ga0, gs1, ga1, gs0, ga2].
std::vector<int> layer_order(const CodecModel& model);

struct CandidateDrop {
  int channel = 0;
  double drop_percent = 0.0;
};

struct RemovalStep {
  int slot = 0;
  int channel = 0;
  double drop_percent = 0.0;  // state after this removal, vs baseline
  double ratio = 0.0;         // channels removed so far / total maskable
  std::vector<CandidateDrop> candidates;  // every channel evaluated this step
};

struct SearchResult {
  double baseline_psnr = 0.0;
  int total_channels = 0;
  KeepPlan plan;  // channels still on per slot
  std::vector<RemovalStep> removals;
  std::int64_t candidate_evaluations = 0;

  double pruning_ratio() const {
    return total_channels == 0
               ? 0.0
               : static_cast<double>(removals.size()) / total_channels;
  }
};

// One channel at a time, in slot order: evaluate the PSNR with each still-on
// channel of the slot masked off, permanently drop the channel with the
// smallest drop while that drop stays within the threshold (ties to the
// lowest index), then move to the next slot. Search masks are temporary
// overrides; the model is untouched.
SearchResult greedy_search(const CodecModel& model, const std::vector<Tensor>& images,
                           const SearchConfig& cfg);

// Two columns, one row per removal: cumulative pruning ratio and the PSNR
// drop percentage after that removal.
std::string curve_csv(const SearchResult& result);
std::string curve_svg(const SearchResult& result);

}  // namespace abcm

#endif
