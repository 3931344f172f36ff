#ifndef ABCM_TRAINER_HPP
#define ABCM_TRAINER_HPP

#include <cstdint>
#include <vector>

#include "abcm/codec.hpp"
#include "abcm/data.hpp"

namespace abcm {

struct TrainConfig {
  float lambda = 0.01f;  // distortion weight
  float gamma = 0.01f;   // sparsity weight
  float lr = 1e-3f;
  int steps = 200;
  int batch = 4;
  int patch = 64;
  std::uint64_t seed = 1;
  // Step index at which the learning rate is halved, once; negative
  // disables the halving.
  int halve_lr_at = -1;
  void validate() const;
};

// One logged step of the joint objective. `total` is rate (bits per pixel)
// plus lambda times distortion plus gamma times mean gate sparsity.
struct LossBreakdown {
  double rate_bpp = 0.0;
  double distortion = 0.0;
  double sparsity_mean = 0.0;
  double total = 0.0;
};

struct EvalSummary {
  double bpp = 0.0;
  double mse = 0.0;
  double psnr = 0.0;
  int images = 0;
};

struct TrainReport {
  std::vector<LossBreakdown> curve;  // one entry per completed step
  ChannelUsage final_usage;
  EvalSummary holdout;
  bool diverged = false;
  long long diverged_step = -1;
};

struct SweepRow {
  float gamma = 0.0f;
  double psnr = 0.0;
  double bpp = 0.0;
  double mean_sparsity = 0.0;
};

struct SweepReport {
  std::vector<SweepRow> rows;
  std::vector<TrainReport> reports;  // parallel to rows
};

struct MatchResult {
  CodecModel model;  // fine-tuned at the returned lambda
  float lambda = 0.0f;
  double achieved_bpp = 0.0;
  double residual = 0.0;  // achieved - target
  int probes = 0;
  bool converged = false;
};

// Hand-rolled adaptive-moment optimizer over a fixed parameter list.
class Adam {
 public:
  explicit Adam(std::vector<Tensor> params, float beta1 = 0.9f, float beta2 = 0.999f,
                float eps = 1e-8f);
  // Applies one update from the gradients currently on the parameters.
  void step(float lr);

 private:
  struct Slot {
    Tensor param;
    std::vector<float> m, v;
  };
  std::vector<Slot> slots_;
  float beta1_, beta2_, eps_;
  long long t_ = 0;
};

// [B,3,patch,patch] of random crops; draws 3 values from rng per crop
// (image index, row, column).
Tensor sample_batch(const std::vector<Tensor>& images, int batch, int patch, RngState& rng);

// One forward/backward pass of the joint objective on `batch` (train
// phase). Zeroes parameter gradients and backpropagates unless `backprop`
// is false. A non-finite total raises a training error carrying `step`.
LossBreakdown loss_step(const CodecModel& model, const Tensor& batch, const TrainConfig& cfg,
                        RngState& rng, long long step = 0, bool backprop = true);

// Mean bpp/mse over the images plus the mean of per-image PSNR, all in
// eval phase with the model's own gates.
EvalSummary evaluate(const CodecModel& model, const std::vector<Tensor>& images);

// Full optimization run; deterministic given (config, dataset, seed).
// Divergence stops early and returns the partial report with the diverged
// flag set. The holdout is the trailing max(1, n/8) images.
TrainReport train(CodecModel& model, const std::vector<ImageRecord>& dataset,
                  const TrainConfig& cfg);

// Trains one clone of `base` per gamma, same seed and initialization.
SweepReport gamma_sweep(const CodecModel& base, const std::vector<ImageRecord>& dataset,
                        const TrainConfig& cfg, const std::vector<float>& gammas);

// Geometric bisection on lambda in [lambda/4, 4*lambda], fine-tuning a
// clone per probe, until the holdout bpp is within 0.005 of the target or
// 8 probes are spent; returns the best probe.
MatchResult match_bitrate(const CodecModel& model, const std::vector<ImageRecord>& dataset,
                          double target_bpp, const TrainConfig& cfg);

}  // namespace abcm

#endif
