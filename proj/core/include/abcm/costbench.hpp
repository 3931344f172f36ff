#ifndef ABCM_COSTBENCH_HPP
#define ABCM_COSTBENCH_HPP

#include <string>
#include <vector>

#include "abcm/codec.hpp"

namespace abcm {

// Counting conventions, frozen so reports stay comparable:
//   one multiply-add = 2 FLOPs; sqrt and divide = 1 FLOP each;
//   conv cost lands at its output resolution, deconv at its input
//   resolution, bias adds at the output resolution either way.
long long conv_params(int cin, int cout, int kernel);
long long gdn_params(int channels);
long long conv_flops(int cin, int cout, int kernel, int out_h, int out_w);
long long deconv_flops(int cin, int cout, int kernel, int in_h, int in_w, int out_h,
                       int out_w);
// Squares (C), weighted sum (2C^2 per element is the MAC part), beta add,
// sqrt, divide: (2C^2 + 4C) per spatial site.
long long gdn_flops(int channels, int h, int w);
// Two logistic bin-edge evaluations plus the bit count: 16 per element.
long long entropy_flops(int channels, int h, int w);
// One multiply per masked element.
long long mask_flops(int channels, int h, int w);

struct CountRow {
  std::string layer;
  long long value = 0;
};

struct CountTable {
  std::vector<CountRow> rows;
  long long total = 0;

  long long value_of(const std::string& layer) const;
};

// Pure functions of the channel configuration and gating mode; weights are
// never consulted.
CountTable count_params(const CodecModel& model);
CountTable count_flops(const CodecModel& model, int height, int width);

struct CostReport {
  CountTable baseline_params;
  CountTable pruned_params;
  CountTable baseline_flops;
  CountTable pruned_flops;
  double params_ratio = 1.0;  // baseline / pruned
  double flops_ratio = 1.0;
  double psnr_baseline = 0.0;
  double psnr_pruned = 0.0;
  double psnr_drop_percent = 0.0;  // of baseline PSNR
  double bpp_baseline = 0.0;
  double bpp_pruned = 0.0;
};

// Evaluates both models on the same images and sizes them at the given
// input geometry.
CostReport compare(const CodecModel& baseline, const CodecModel& pruned,
                   const std::vector<Tensor>& images, int height, int width);

struct TimingReport {
  int warmup = 10;
  int rounds = 10;
  std::vector<double> samples_ms;  // timed rounds only
  double mean_ms = 0.0;
};

// Wall-clock protocol: one fixed input reused every round, `warmup` untimed
// rounds, then `rounds` timed rounds covering analysis, quantization, rate,
// and synthesis only.
TimingReport bench(const CodecModel& model, int height, int width, int warmup = 10,
                   int rounds = 10);

double speedup(const TimingReport& baseline, const TimingReport& pruned);

std::string cost_csv(const CodecModel& model, int height, int width);
std::string compare_csv(const CostReport& report, const std::string& quality_tag);
std::string timing_csv(const TimingReport& baseline, const TimingReport& pruned);
std::string flops_svg(const CodecModel& model, int height, int width);

}  // namespace abcm

#endif
