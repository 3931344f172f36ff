#ifndef ABCM_PLAN_HPP
#define ABCM_PLAN_HPP

#include <string>
#include <vector>

namespace abcm {

// Which channels survive pruning, one sorted index list per masked conv.
// Slot order: the three masked analysis convs, then the three masked
// synthesis deconvs.
struct KeepPlan {
  std::vector<std::vector<int>> keep;

  bool empty() const { return keep.empty(); }

  std::string to_string() const {
    std::string s;
    for (size_t i = 0; i < keep.size(); ++i) {
      if (i) s += "; ";
      s += "slot " + std::to_string(i) + ": [";
      for (size_t j = 0; j < keep[i].size(); ++j) {
        if (j) s += ",";
        s += std::to_string(keep[i][j]);
      }
      s += "]";
    }
    return s;
  }
};

}  // namespace abcm

#endif  // ABCM_PLAN_HPP
