#ifndef ABCM_CODEC_HPP
#define ABCM_CODEC_HPP

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "abcm/gate.hpp"
#include "abcm/ops.hpp"
#include "abcm/plan.hpp"
#include "abcm/rng.hpp"
#include "abcm/tensor.hpp"

namespace abcm {

// Widths of the four analysis convs and four synthesis deconvs, stored as
// chained width lists (5 entries each). The analysis side starts at 3 image
// channels; the synthesis side ends at 3.
struct ChannelConfig {
  int kernel = 5;
  int stride = 2;
  std::vector<int> ga_widths;  // {3, n1, n2, n3, M}
  std::vector<int> gs_widths;  // {M, m1, m2, m3, 3}

  // Small configuration that trains in minutes on a CPU.
  static ChannelConfig desk(int hidden = 8, int latent = 12);
  // Builds from explicit (in, out) pairs, validating that adjacent layers
  // chain.
  static ChannelConfig from_pairs(const std::vector<std::pair<int, int>>& ga,
                                  const std::vector<std::pair<int, int>>& gs,
                                  int kernel = 5, int stride = 2);
  void validate() const;

  int latent_channels() const { return ga_widths.back(); }
  // Total spatial reduction of the analysis transform.
  int downsample_factor() const { return stride * stride * stride * stride; }
};

// Per-latent-channel logistic density: location mu and a raw scale whose
// effective value is b_raw^2 + 1e-6, keeping the scale positive.
struct EntropyModel {
  Tensor mu;     // [M]
  Tensor b_raw;  // [M]
};

struct ConvLayer {
  Tensor kernel;
  Tensor bias;
};

// Normalization parameters stored raw; effective beta = beta_raw^2 + 1e-6,
// effective gamma = gamma_raw^2.
struct GdnLayer {
  Tensor beta_raw;   // [C]
  Tensor gamma_raw;  // [C,C]
};

enum class Gating { None, Deterministic, Stochastic };

// Learnable state of one channel-masking slot. Which tensor is defined
// depends on the model's gating mode.
struct AbcmSlot {
  Tensor alpha;   // [C], deterministic mode
  Tensor logits;  // [2,C], stochastic mode
};

// The full compression network: four strided convs with GDN between them on
// the analysis side, the mirror image with inverse GDN on the synthesis
// side, a masking slot after every conv except the final one of each
// transform, and the entropy model over the latent.
struct CodecModel {
  ChannelConfig config;
  std::vector<ConvLayer> ga_convs;    // 4
  std::vector<GdnLayer> ga_gdns;      // 3
  std::vector<ConvLayer> gs_deconvs;  // 4, kernels stored [Cin,Cout,k,k]
  std::vector<GdnLayer> gs_gdns;      // 3, applied inverse
  EntropyModel entropy;

  Gating gating = Gating::Deterministic;
  float gate_epsilon = 4.0f;
  float gate_tau = 1.0f;
  std::vector<AbcmSlot> slots;  // 6 when gating != None, else empty

  // Set on models produced by pruning: which channels were kept.
  std::optional<KeepPlan> pruned_from;

  // Every learnable leaf, in a stable order (optimizer state keys off it).
  std::vector<Tensor> parameters() const;
  GateConfig gate_config() const;
  // Channel count gated by slot `i` (out-channels of the conv it follows).
  int slot_channels(int slot) const;
  static std::string slot_name(int slot);
};

// Fresh model with randomized conv weights, identity-leaning normalization,
// and all channels gated on. `alpha_init` sets the starting importance (or
// the on-logit margin in stochastic mode); smaller positive values let
// sparsity pressure flip channels sooner.
CodecModel build_model(const ChannelConfig& config, RngState& rng,
                       Gating gating = Gating::Deterministic,
                       float gate_epsilon = 4.0f, float gate_tau = 1.0f,
                       float alpha_init = 0.5f);

// Deep copy: every parameter becomes an independent leaf with the same
// values, so two copies can be trained apart.
CodecModel clone_model(const CodecModel& model);

enum class MaskMode {
  Gates,     // the model's own gates; a no-op for ungated models
  Disabled,  // no masking at all
  Override,  // caller-supplied per-slot masks
};

struct ForwardOptions {
  Phase phase = Phase::Eval;
  MaskMode masks = MaskMode::Gates;
  // Six [C] tensors in slot order; required iff masks == Override.
  const std::vector<Tensor>* mask_override = nullptr;
};

// Analysis transform: image [B,3,H,W] with H, W divisible by the
// downsample factor -> latent [B,M,H/f,W/f]. Masks actually applied are
// appended to out_masks (slots 0..2) when given.
Tensor analyze(const CodecModel& model, const Tensor& image,
               const ForwardOptions& opts = {}, RngState* rng = nullptr,
               std::vector<Tensor>* out_masks = nullptr);

// Synthesis transform: latent [B,M,h,w] -> image [B,3,f*h,f*w]. Masks used
// are appended to out_masks (slots 3..5).
Tensor synthesize(const CodecModel& model, const Tensor& y_hat,
                  const ForwardOptions& opts = {}, RngState* rng = nullptr,
                  std::vector<Tensor>* out_masks = nullptr);

// Train phase adds i.i.d. uniform noise in [-0.5, 0.5) with identity
// gradient to y; eval phase rounds to nearest integer, ties to even, and
// returns a detached tensor.
Tensor quantize(const Tensor& y, Phase phase, RngState* rng = nullptr);

// Bits to code y_hat under per-channel logistic bin masses:
//   -log2(CDF(y+0.5) - CDF(y-0.5)), each bin mass clamped at 2^-32.
// mu and b_eff are per-channel [M]; b_eff must be positive.
Tensor logistic_rate_bits(const Tensor& y_hat, const Tensor& mu, const Tensor& b_eff);

// Same, composing the effective scale from the entropy model in-graph.
Tensor rate_bits(const EntropyModel& entropy, const Tensor& y_hat);

// Mean squared error on the 0-255 scale: 255^2 * mean((x - x_hat)^2) for
// inputs stored in [0,1].
Tensor distortion_mse(const Tensor& x, const Tensor& x_hat);

// 10*log10(255^2 / mse). Throws NumericError for mse <= 0.
double psnr(double mse);

// total_bits / (batch * height * width) of the coded images.
double bpp(double total_bits, const Tensor& image);

struct CodecResult {
  Tensor y;          // latent
  Tensor y_hat;      // quantized latent
  Tensor x_hat;      // reconstruction
  Tensor rate;       // scalar, bits (in the graph)
  Tensor distortion; // scalar, 0-255 scale MSE (in the graph)
  std::vector<Tensor> masks;  // all six when masking was applied
  double bpp_value = 0.0;
  double mse_value = 0.0;
};

// Full pass: analyze, quantize, rate, synthesize, distortion.
CodecResult run_codec(const CodecModel& model, const Tensor& image,
                      const ForwardOptions& opts = {}, RngState* rng = nullptr);

// Hard-gate keep counts per slot and their mean keep ratio.
struct SlotChannels {
  std::string layer;
  int keep = 0;
  int total = 0;
};
struct ChannelUsage {
  std::vector<SlotChannels> slots;
  double mean_ratio = 1.0;
};
ChannelUsage effective_channels(const CodecModel& model);

}  // namespace abcm

#endif  // ABCM_CODEC_HPP
