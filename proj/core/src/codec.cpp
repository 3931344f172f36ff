#include "abcm/codec.hpp"

#include <cmath>

namespace abcm {

namespace {

float stable_sigmoid(float x) {
  if (x >= 0.0f) {
    const float e = std::exp(-x);
    return 1.0f / (1.0f + e);
  }
  const float e = std::exp(x);
  return e / (1.0f + e);
}

Tensor effective_beta(const GdnLayer& g) { return affine(square(g.beta_raw), 1.0f, 1e-6f); }
Tensor effective_gamma(const GdnLayer& g) { return square(g.gamma_raw); }

constexpr float kMinBinMass = 0x1.0p-32f;

}  // namespace

ChannelConfig ChannelConfig::desk(int hidden, int latent) {
  ChannelConfig c;
  c.ga_widths = {3, hidden, hidden, hidden, latent};
  c.gs_widths = {latent, hidden, hidden, hidden, 3};
  c.validate();
  return c;
}

ChannelConfig ChannelConfig::from_pairs(const std::vector<std::pair<int, int>>& ga,
                                        const std::vector<std::pair<int, int>>& gs,
                                        int kernel, int stride) {
  auto chain = [](const std::vector<std::pair<int, int>>& pairs, const char* side) {
    std::vector<int> widths;
    for (size_t i = 0; i < pairs.size(); ++i) {
      if (i > 0 && pairs[i - 1].second != pairs[i].first)
        throw DimensionError(std::string(side) + " layers " + std::to_string(i - 1) + " and " +
                             std::to_string(i) + " do not chain: " +
                             std::to_string(pairs[i - 1].second) + " vs " +
                             std::to_string(pairs[i].first));
      widths.push_back(pairs[i].first);
    }
    if (!pairs.empty()) widths.push_back(pairs.back().second);
    return widths;
  };
  ChannelConfig c;
  c.kernel = kernel;
  c.stride = stride;
  c.ga_widths = chain(ga, "analysis");
  c.gs_widths = chain(gs, "synthesis");
  c.validate();
  return c;
}

void ChannelConfig::validate() const {
  if (kernel < 1 || kernel % 2 == 0)
    throw ContractError("channel config: kernel must be odd and positive, got " +
                        std::to_string(kernel));
  if (stride < 1) throw ContractError("channel config: stride must be positive");
  if (ga_widths.size() != 5 || gs_widths.size() != 5)
    throw DimensionError("channel config: four conv stages per transform expected");
  for (int w : ga_widths)
    if (w < 1) throw DimensionError("channel config: analysis width < 1");
  for (int w : gs_widths)
    if (w < 1) throw DimensionError("channel config: synthesis width < 1");
  if (ga_widths.front() != 3)
    throw DimensionError("channel config: analysis must start at 3 image channels");
  if (gs_widths.back() != 3)
    throw DimensionError("channel config: synthesis must end at 3 image channels");
  if (ga_widths.back() != gs_widths.front())
    throw DimensionError("channel config: latent width mismatch " +
                         std::to_string(ga_widths.back()) + " vs " +
                         std::to_string(gs_widths.front()));
}

std::vector<Tensor> CodecModel::parameters() const {
  std::vector<Tensor> out;
  for (const auto& l : ga_convs) {
    out.push_back(l.kernel);
    out.push_back(l.bias);
  }
  for (const auto& g : ga_gdns) {
    out.push_back(g.beta_raw);
    out.push_back(g.gamma_raw);
  }
  for (const auto& l : gs_deconvs) {
    out.push_back(l.kernel);
    out.push_back(l.bias);
  }
  for (const auto& g : gs_gdns) {
    out.push_back(g.beta_raw);
    out.push_back(g.gamma_raw);
  }
  out.push_back(entropy.mu);
  out.push_back(entropy.b_raw);
  for (const auto& s : slots) {
    if (gating == Gating::Deterministic) out.push_back(s.alpha);
    if (gating == Gating::Stochastic) out.push_back(s.logits);
  }
  return out;
}

GateConfig CodecModel::gate_config() const {
  GateConfig cfg;
  cfg.mode = gating == Gating::Stochastic ? GateMode::Stochastic : GateMode::Deterministic;
  cfg.epsilon = gate_epsilon;
  cfg.tau = gate_tau;
  return cfg;
}

int CodecModel::slot_channels(int slot) const {
  if (slot < 0 || slot >= 6) throw ContractError("slot index out of range");
  return slot < 3 ? config.ga_widths[slot + 1] : config.gs_widths[slot - 2];
}

std::string CodecModel::slot_name(int slot) {
  static const char* names[6] = {"ga0", "ga1", "ga2", "gs0", "gs1", "gs2"};
  if (slot < 0 || slot >= 6) throw ContractError("slot index out of range");
  return names[slot];
}

CodecModel build_model(const ChannelConfig& config, RngState& rng, Gating gating,
                       float gate_epsilon, float gate_tau, float alpha_init) {
  config.validate();
  CodecModel m;
  m.config = config;
  m.gating = gating;
  m.gate_epsilon = gate_epsilon;
  m.gate_tau = gate_tau;

  const int k = config.kernel;
  auto normal_kernel = [&](Shape shape, int fan_in) {
    std::vector<float> v(shape_numel(shape));
    const float scale = std::sqrt(1.0f / static_cast<float>(fan_in));
    for (auto& x : v) x = rng.normal() * scale;
    return Tensor::from_vector(std::move(shape), std::move(v), true);
  };
  auto gdn_layer = [&](int c) {
    GdnLayer g;
    g.beta_raw = Tensor::full({c}, 1.0f, true);
    std::vector<float> diag(static_cast<size_t>(c) * c, 0.0f);
    const float d = std::sqrt(0.1f);
    for (int i = 0; i < c; ++i) diag[static_cast<size_t>(i) * c + i] = d;
    g.gamma_raw = Tensor::from_vector({c, c}, std::move(diag), true);
    return g;
  };

  for (int i = 0; i < 4; ++i) {
    const int cin = config.ga_widths[i], cout = config.ga_widths[i + 1];
    ConvLayer l;
    l.kernel = normal_kernel({cout, cin, k, k}, cin * k * k);
    l.bias = Tensor::zeros({cout}, true);
    m.ga_convs.push_back(std::move(l));
    if (i < 3) m.ga_gdns.push_back(gdn_layer(cout));
  }
  for (int i = 0; i < 4; ++i) {
    const int cin = config.gs_widths[i], cout = config.gs_widths[i + 1];
    ConvLayer l;
    l.kernel = normal_kernel({cin, cout, k, k}, cin * k * k);
    l.bias = Tensor::zeros({cout}, true);
    m.gs_deconvs.push_back(std::move(l));
    if (i < 3) m.gs_gdns.push_back(gdn_layer(cout));
  }
  const int latent = config.latent_channels();
  m.entropy.mu = Tensor::zeros({latent}, true);
  m.entropy.b_raw = Tensor::full({latent}, 1.0f, true);

  if (gating != Gating::None) {
    for (int s = 0; s < 6; ++s) {
      AbcmSlot slot;
      const int c = m.slot_channels(s);
      if (gating == Gating::Deterministic) {
        slot.alpha = Tensor::full({c}, alpha_init, true);
      } else {
        std::vector<float> lv(static_cast<size_t>(2) * c);
        for (int i = 0; i < c; ++i) {
          lv[i] = -alpha_init;   // off row
          lv[c + i] = alpha_init;  // on row
        }
        slot.logits = Tensor::from_vector({2, c}, std::move(lv), true);
      }
      m.slots.push_back(std::move(slot));
    }
  }
  return m;
}

CodecModel clone_model(const CodecModel& model) {
  CodecModel c;
  c.config = model.config;
  c.gating = model.gating;
  c.gate_epsilon = model.gate_epsilon;
  c.gate_tau = model.gate_tau;
  c.pruned_from = model.pruned_from;
  auto conv = [](const ConvLayer& l) {
    return ConvLayer{l.kernel.clone_leaf(), l.bias.clone_leaf()};
  };
  auto gdn = [](const GdnLayer& g) {
    return GdnLayer{g.beta_raw.clone_leaf(), g.gamma_raw.clone_leaf()};
  };
  for (const auto& l : model.ga_convs) c.ga_convs.push_back(conv(l));
  for (const auto& g : model.ga_gdns) c.ga_gdns.push_back(gdn(g));
  for (const auto& l : model.gs_deconvs) c.gs_deconvs.push_back(conv(l));
  for (const auto& g : model.gs_gdns) c.gs_gdns.push_back(gdn(g));
  c.entropy.mu = model.entropy.mu.clone_leaf();
  c.entropy.b_raw = model.entropy.b_raw.clone_leaf();
  for (const auto& s : model.slots) {
    AbcmSlot slot;
    if (s.alpha.defined()) slot.alpha = s.alpha.clone_leaf();
    if (s.logits.defined()) slot.logits = s.logits.clone_leaf();
    c.slots.push_back(std::move(slot));
  }
  return c;
}

namespace {

// Mask for one slot under the given options; undefined tensor = no mask.
Tensor slot_mask(const CodecModel& model, int slot, const ForwardOptions& opts,
                 RngState* rng) {
  switch (opts.masks) {
    case MaskMode::Disabled:
      return {};
    case MaskMode::Override: {
      if (opts.mask_override == nullptr || opts.mask_override->size() != 6)
        throw ContractError("forward: mask override must supply six masks");
      const Tensor& m = (*opts.mask_override)[slot];
      if (!m.defined() || m.ndim() != 1 || m.dim(0) != model.slot_channels(slot))
        throw DimensionError("forward: override mask for slot " + std::to_string(slot) +
                             " has wrong width");
      return m;
    }
    case MaskMode::Gates: {
      if (model.gating == Gating::None) return {};
      const auto cfg = model.gate_config();
      if (model.gating == Gating::Deterministic)
        return gate(model.slots[slot].alpha, cfg, opts.phase, rng);
      return gate_stochastic(model.slots[slot].logits, cfg, opts.phase, rng);
    }
  }
  return {};
}

}  // namespace

Tensor analyze(const CodecModel& model, const Tensor& image, const ForwardOptions& opts,
               RngState* rng, std::vector<Tensor>* out_masks) {
  if (image.ndim() != 4 || image.dim(1) != 3)
    throw DimensionError("analyze: image must be [B,3,H,W], got " + shape_str(image.shape()));
  const int f = model.config.downsample_factor();
  if (image.dim(2) % f != 0 || image.dim(3) % f != 0)
    throw GeometryError("analyze: spatial size " + std::to_string(image.dim(2)) + "x" +
                        std::to_string(image.dim(3)) + " not divisible by " +
                        std::to_string(f));
  const int pad = (model.config.kernel - 1) / 2;
  Tensor h = image;
  for (int i = 0; i < 4; ++i) {
    h = conv2d(h, model.ga_convs[i].kernel, model.ga_convs[i].bias, model.config.stride, pad);
    if (i < 3) {
      Tensor m = slot_mask(model, i, opts, rng);
      if (m.defined()) {
        h = apply_mask(h, m);
        if (out_masks) out_masks->push_back(m);
      }
      h = gdn(h, effective_beta(model.ga_gdns[i]), effective_gamma(model.ga_gdns[i]), false);
    }
  }
  return h;
}

Tensor synthesize(const CodecModel& model, const Tensor& y_hat, const ForwardOptions& opts,
                  RngState* rng, std::vector<Tensor>* out_masks) {
  if (y_hat.ndim() != 4 || y_hat.dim(1) != model.config.latent_channels())
    throw DimensionError("synthesize: latent must be [B," +
                         std::to_string(model.config.latent_channels()) + ",h,w], got " +
                         shape_str(y_hat.shape()));
  const int pad = (model.config.kernel - 1) / 2;
  const int opad = model.config.stride - 1;
  Tensor h = y_hat;
  for (int i = 0; i < 4; ++i) {
    h = deconv2d(h, model.gs_deconvs[i].kernel, model.gs_deconvs[i].bias, model.config.stride,
                 pad, opad);
    if (i < 3) {
      Tensor m = slot_mask(model, 3 + i, opts, rng);
      if (m.defined()) {
        h = apply_mask(h, m);
        if (out_masks) out_masks->push_back(m);
      }
      h = gdn(h, effective_beta(model.gs_gdns[i]), effective_gamma(model.gs_gdns[i]), true);
    }
  }
  return h;
}

Tensor quantize(const Tensor& y, Phase phase, RngState* rng) {
  for (float v : y.data())
    if (!std::isfinite(v)) throw NumericError("quantize: non-finite input");
  if (phase == Phase::Train) {
    if (rng == nullptr) throw ContractError("quantize: train phase needs an rng");
    std::vector<float> noise(y.numel());
    for (auto& n : noise) n = rng->uniform() - 0.5f;
    return add(y, Tensor::from_vector(y.shape(), std::move(noise)));
  }
  std::vector<float> out(y.numel());
  for (std::int64_t i = 0; i < y.numel(); ++i) {
    const float v = y.data()[i];
    const float f = std::floor(v);
    const float diff = v - f;
    if (diff > 0.5f)
      out[i] = f + 1.0f;
    else if (diff < 0.5f)
      out[i] = f;
    else
      out[i] = std::fmod(f, 2.0f) == 0.0f ? f : f + 1.0f;
  }
  return Tensor::from_vector(y.shape(), std::move(out));
}

Tensor logistic_rate_bits(const Tensor& y_hat, const Tensor& mu, const Tensor& b_eff) {
  if (y_hat.ndim() != 4)
    throw DimensionError("rate: latent must be 4-d, got " + shape_str(y_hat.shape()));
  const int M = y_hat.dim(1);
  if (mu.ndim() != 1 || mu.dim(0) != M || b_eff.ndim() != 1 || b_eff.dim(0) != M)
    throw DimensionError("rate: mu/b must be [" + std::to_string(M) + "]");
  for (float b : b_eff.data())
    if (!(b > 0.0f)) throw ContractError("rate: scale must be positive");

  const int B = y_hat.dim(0);
  const size_t plane = static_cast<size_t>(y_hat.dim(2)) * y_hat.dim(3);
  const float* yv = y_hat.data().data();
  const float* muv = mu.data().data();
  const float* bv = b_eff.data().data();
  const double inv_ln2 = 1.0 / std::log(2.0);

  double total = 0.0;
  for (int b = 0; b < B; ++b)
    for (int c = 0; c < M; ++c) {
      const size_t off = (static_cast<size_t>(b) * M + c) * plane;
      for (size_t i = 0; i < plane; ++i) {
        const float y = yv[off + i];
        const float mass = stable_sigmoid((y + 0.5f - muv[c]) / bv[c]) -
                           stable_sigmoid((y - 0.5f - muv[c]) / bv[c]);
        total += -std::log(std::max(mass, kMinBinMass)) * inv_ln2;
      }
    }

  auto py = y_hat.impl(), pmu = mu.impl(), pb = b_eff.impl();
  auto back = [py, pmu, pb, B, M, plane](detail::TensorImpl& self) {
    const bool ny = py->requires_grad, nm = pmu->requires_grad, nb = pb->requires_grad;
    if (!ny && !nm && !nb) return;
    if (ny) py->ensure_grad();
    if (nm) pmu->ensure_grad();
    if (nb) pb->ensure_grad();
    const float g = self.grad[0];
    const float inv_ln2f = 1.4426950408889634f;
    for (int b = 0; b < B; ++b)
      for (int c = 0; c < M; ++c) {
        const size_t off = (static_cast<size_t>(b) * M + c) * plane;
        const float bc = pb->values[c];
        for (size_t i = 0; i < plane; ++i) {
          const float y = py->values[off + i];
          const float dp = (y + 0.5f - pmu->values[c]) / bc;
          const float dm = (y - 0.5f - pmu->values[c]) / bc;
          const float sp = stable_sigmoid(dp);
          const float sm = stable_sigmoid(dm);
          const float mass = sp - sm;
          if (!(mass > kMinBinMass)) continue;  // clamped bin, constant rate
          const float common = -g * inv_ln2f / mass;
          const float pp = sp * (1.0f - sp);
          const float pm = sm * (1.0f - sm);
          if (ny) py->grad[off + i] += common * (pp - pm) / bc;
          if (nm) pmu->grad[c] -= common * (pp - pm) / bc;
          if (nb) pb->grad[c] -= common * (pp * dp - pm * dm) / bc;
        }
      }
  };
  return detail::make_result(Shape{}, {static_cast<float>(total)}, {y_hat, mu, b_eff},
                             std::move(back));
}

Tensor rate_bits(const EntropyModel& entropy, const Tensor& y_hat) {
  return logistic_rate_bits(y_hat, entropy.mu, affine(square(entropy.b_raw), 1.0f, 1e-6f));
}

Tensor distortion_mse(const Tensor& x, const Tensor& x_hat) {
  if (x.shape() != x_hat.shape())
    throw DimensionError("distortion: shape mismatch " + shape_str(x.shape()) + " vs " +
                         shape_str(x_hat.shape()));
  const std::int64_t n = x.numel();
  if (n == 0) throw DimensionError("distortion: empty tensors");
  double acc = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    const double d = static_cast<double>(x.data()[i]) - x_hat.data()[i];
    acc += d * d;
  }
  const double value = 65025.0 * acc / static_cast<double>(n);
  auto px = x.impl(), ph = x_hat.impl();
  auto back = [px, ph, n](detail::TensorImpl& self) {
    const bool nx = px->requires_grad, nh = ph->requires_grad;
    if (!nx && !nh) return;
    if (nx) px->ensure_grad();
    if (nh) ph->ensure_grad();
    const float k = self.grad[0] * static_cast<float>(2.0 * 65025.0 / static_cast<double>(n));
    for (std::int64_t i = 0; i < n; ++i) {
      const float d = k * (px->values[i] - ph->values[i]);
      if (nx) px->grad[i] += d;
      if (nh) ph->grad[i] -= d;
    }
  };
  return detail::make_result(Shape{}, {static_cast<float>(value)}, {x, x_hat}, std::move(back));
}

double psnr(double mse) {
  if (!(mse > 0.0)) throw NumericError("psnr: mse must be positive");
  return 10.0 * std::log10(65025.0 / mse);
}

double bpp(double total_bits, const Tensor& image) {
  if (image.ndim() != 4)
    throw DimensionError("bpp: image must be 4-d, got " + shape_str(image.shape()));
  const double pixels = static_cast<double>(image.dim(0)) * image.dim(2) * image.dim(3);
  return total_bits / pixels;
}

CodecResult run_codec(const CodecModel& model, const Tensor& image, const ForwardOptions& opts,
                      RngState* rng) {
  CodecResult r;
  r.y = analyze(model, image, opts, rng, &r.masks);
  r.y_hat = quantize(r.y, opts.phase, rng);
  r.rate = rate_bits(model.entropy, r.y_hat);
  r.x_hat = synthesize(model, r.y_hat, opts, rng, &r.masks);
  r.distortion = distortion_mse(image, r.x_hat);
  r.bpp_value = bpp(r.rate.item(), image);
  r.mse_value = r.distortion.item();
  return r;
}

ChannelUsage effective_channels(const CodecModel& model) {
  ChannelUsage usage;
  if (model.slots.empty()) return usage;
  double ratio_sum = 0.0;
  for (size_t s = 0; s < model.slots.size(); ++s) {
    const int total = model.slot_channels(static_cast<int>(s));
    int keep = 0;
    if (model.gating == Gating::Deterministic) {
      for (float a : model.slots[s].alpha.data())
        if (a >= 0.0f) ++keep;
    } else {
      const float* lv = model.slots[s].logits.data().data();
      for (int c = 0; c < total; ++c)
        if (lv[total + c] >= lv[c]) ++keep;
    }
    usage.slots.push_back({CodecModel::slot_name(static_cast<int>(s)), keep, total});
    ratio_sum += static_cast<double>(keep) / total;
  }
  usage.mean_ratio = ratio_sum / static_cast<double>(usage.slots.size());
  return usage;
}

}  // namespace abcm
