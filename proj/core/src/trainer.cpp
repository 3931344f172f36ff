#include "abcm/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

#include "abcm/errors.hpp"

namespace abcm {

void TrainConfig::validate() const {
  if (!std::isfinite(lambda) || lambda < 0.0f)
    throw ContractError("train config: lambda must be finite and >= 0");
  if (!std::isfinite(gamma) || gamma < 0.0f)
    throw ContractError("train config: gamma must be finite and >= 0");
  if (!std::isfinite(lr) || lr <= 0.0f)
    throw ContractError("train config: learning rate must be finite and > 0");
  if (steps < 1) throw ContractError("train config: step count must be >= 1");
  if (batch < 1) throw ContractError("train config: batch size must be >= 1");
  if (patch < 1) throw ContractError("train config: patch size must be >= 1");
}

Adam::Adam(std::vector<Tensor> params, float beta1, float beta2, float eps)
    : beta1_(beta1), beta2_(beta2), eps_(eps) {
  slots_.reserve(params.size());
  for (auto& p : params) {
    Slot s;
    const size_t n = static_cast<size_t>(p.numel());
    s.param = std::move(p);
    s.m.assign(n, 0.0f);
    s.v.assign(n, 0.0f);
    slots_.push_back(std::move(s));
  }
}

void Adam::step(float lr) {
  ++t_;
  const float c1 = 1.0f - std::pow(beta1_, static_cast<float>(t_));
  const float c2 = 1.0f - std::pow(beta2_, static_cast<float>(t_));
  for (auto& s : slots_) {
    auto g = s.param.grad();
    if (g.empty()) continue;
    auto p = s.param.mutable_data();
    for (size_t i = 0; i < p.size(); ++i) {
      const float gi = g[i];
      s.m[i] = beta1_ * s.m[i] + (1.0f - beta1_) * gi;
      s.v[i] = beta2_ * s.v[i] + (1.0f - beta2_) * gi * gi;
      const float mhat = s.m[i] / c1;
      const float vhat = s.v[i] / c2;
      p[i] -= lr * mhat / (std::sqrt(vhat) + eps_);
    }
  }
}

Tensor sample_batch(const std::vector<Tensor>& images, int batch, int patch, RngState& rng) {
  if (images.empty()) throw ContractError("sample_batch: no images");
  if (batch < 1 || patch < 1) throw ContractError("sample_batch: batch and patch must be >= 1");
  std::vector<float> out(static_cast<size_t>(batch) * 3 * patch * patch);
  const size_t plane = static_cast<size_t>(patch) * patch;
  for (int b = 0; b < batch; ++b) {
    const auto& img = images[rng.uniform_index(static_cast<std::uint32_t>(images.size()))];
    if (img.ndim() != 3 || img.dim(0) != 3)
      throw DimensionError("sample_batch: images must be [3,H,W]");
    const int h = img.dim(1), w = img.dim(2);
    if (h < patch || w < patch)
      throw GeometryError("sample_batch: image " + std::to_string(w) + "x" + std::to_string(h) +
                          " smaller than patch " + std::to_string(patch));
    const int oy = static_cast<int>(rng.uniform_index(static_cast<std::uint32_t>(h - patch + 1)));
    const int ox = static_cast<int>(rng.uniform_index(static_cast<std::uint32_t>(w - patch + 1)));
    auto src = img.data();
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < patch; ++y) {
        const float* row = src.data() + (static_cast<size_t>(c) * h + oy + y) * w + ox;
        float* dst =
            out.data() + ((static_cast<size_t>(b) * 3 + c) * plane) + static_cast<size_t>(y) * patch;
        for (int x = 0; x < patch; ++x) dst[x] = row[x];
      }
  }
  return Tensor::from_vector({batch, 3, patch, patch}, std::move(out));
}

LossBreakdown loss_step(const CodecModel& model, const Tensor& batch, const TrainConfig& cfg,
                        RngState& rng, long long step, bool backprop) {
  cfg.validate();
  if (batch.ndim() != 4) throw DimensionError("loss_step: batch must be [B,3,H,W]");
  {
    auto v = batch.data();
    for (float x : v)
      if (x < 0.0f || x > 1.0f) throw ContractError("loss_step: batch pixels must lie in [0,1]");
  }

  ForwardOptions fo;
  fo.phase = Phase::Train;
  fo.masks = MaskMode::Gates;
  std::vector<Tensor> masks;
  auto y = analyze(model, batch, fo, &rng, &masks);
  auto y_hat = quantize(y, Phase::Train, &rng);
  auto bits = rate_bits(model.entropy, y_hat);
  const double pixels = static_cast<double>(batch.dim(0)) * batch.dim(2) * batch.dim(3);
  auto rate_bpp = affine(bits, static_cast<float>(1.0 / pixels), 0.0f);
  auto x_hat = synthesize(model, y_hat, fo, &rng, &masks);
  auto dist = distortion_mse(batch, x_hat);

  auto total = add(rate_bpp, affine(dist, cfg.lambda, 0.0f));
  Tensor s_mean;
  if (!masks.empty()) {
    Tensor s_sum;
    for (const auto& m : masks) {
      auto s = sparsity_term(m);
      s_sum = s_sum.defined() ? add(s_sum, s) : s;
    }
    s_mean = affine(s_sum, 1.0f / static_cast<float>(masks.size()), 0.0f);
    total = add(total, affine(s_mean, cfg.gamma, 0.0f));
  }

  LossBreakdown out;
  out.rate_bpp = rate_bpp.item();
  out.distortion = dist.item();
  out.sparsity_mean = s_mean.defined() ? s_mean.item() : 0.0;
  out.total = total.item();
  if (!std::isfinite(out.total))
    throw TrainingError("loss diverged to a non-finite value", step);

  if (backprop) {
    for (auto& p : model.parameters()) p.zero_grad();
    backward(total);
  }
  return out;
}

namespace {

std::vector<Tensor> holdout_slice(const std::vector<Tensor>& images) {
  const size_t n = images.size();
  const size_t take = std::max<size_t>(1, n / 8);
  return std::vector<Tensor>(images.end() - static_cast<std::ptrdiff_t>(take), images.end());
}

}  // namespace

EvalSummary evaluate(const CodecModel& model, const std::vector<Tensor>& images) {
  if (images.empty()) throw ContractError("evaluate: no images");
  NoGradGuard guard;
  EvalSummary sum;
  ForwardOptions fo;
  fo.phase = Phase::Eval;
  fo.masks = MaskMode::Gates;
  for (const auto& img : images) {
    if (img.ndim() != 3 || img.dim(0) != 3)
      throw DimensionError("evaluate: images must be [3,H,W]");
    std::vector<float> v(img.data().begin(), img.data().end());
    auto batched = Tensor::from_vector({1, 3, img.dim(1), img.dim(2)}, std::move(v));
    auto r = run_codec(model, batched, fo, nullptr);
    sum.bpp += r.bpp_value;
    sum.mse += r.mse_value;
    sum.psnr += psnr(r.mse_value);
  }
  const double n = static_cast<double>(images.size());
  sum.bpp /= n;
  sum.mse /= n;
  sum.psnr /= n;
  sum.images = static_cast<int>(images.size());
  return sum;
}

TrainReport train(CodecModel& model, const std::vector<ImageRecord>& dataset,
                  const TrainConfig& cfg) {
  cfg.validate();
  if (dataset.empty()) throw ContractError("train: dataset must be non-empty");
  const auto images = to_tensors(dataset);

  RngState rng(cfg.seed);
  Adam opt(model.parameters());
  TrainReport report;
  report.curve.reserve(static_cast<size_t>(cfg.steps));
  float lr = cfg.lr;
  for (int step = 0; step < cfg.steps; ++step) {
    if (step == cfg.halve_lr_at) lr *= 0.5f;
    auto batch = sample_batch(images, cfg.batch, cfg.patch, rng);
    LossBreakdown row;
    try {
      row = loss_step(model, batch, cfg, rng, step);
    } catch (const TrainingError& e) {
      report.diverged = true;
      report.diverged_step = e.step();
      break;
    } catch (const NumericError&) {
      // Parameters already blew up on an earlier step; same failure mode.
      report.diverged = true;
      report.diverged_step = step;
      break;
    }
    opt.step(lr);
    report.curve.push_back(row);
  }
  report.final_usage = effective_channels(model);
  if (!report.diverged) report.holdout = evaluate(model, holdout_slice(images));
  return report;
}

SweepReport gamma_sweep(const CodecModel& base, const std::vector<ImageRecord>& dataset,
                        const TrainConfig& cfg, const std::vector<float>& gammas) {
  if (gammas.empty()) throw ContractError("gamma_sweep: no gamma values");
  SweepReport out;
  for (float g : gammas) {
    CodecModel arm = clone_model(base);
    TrainConfig arm_cfg = cfg;
    arm_cfg.gamma = g;
    TrainReport rep = train(arm, dataset, arm_cfg);
    SweepRow row;
    row.gamma = g;
    row.psnr = rep.holdout.psnr;
    row.bpp = rep.holdout.bpp;
    row.mean_sparsity = rep.final_usage.mean_ratio;
    out.rows.push_back(row);
    out.reports.push_back(std::move(rep));
  }
  return out;
}

MatchResult match_bitrate(const CodecModel& model, const std::vector<ImageRecord>& dataset,
                          double target_bpp, const TrainConfig& cfg) {
  cfg.validate();
  if (!(target_bpp > 0.0)) throw ContractError("match_bitrate: target bpp must be > 0");
  if (dataset.empty()) throw ContractError("match_bitrate: dataset must be non-empty");
  constexpr int kMaxProbes = 8;
  constexpr double kTolerance = 0.005;

  const auto holdout = holdout_slice(to_tensors(dataset));
  const double current = evaluate(model, holdout).bpp;
  MatchResult best;
  best.lambda = cfg.lambda;
  best.achieved_bpp = current;
  best.residual = current - target_bpp;
  if (std::abs(best.residual) < kTolerance) {
    best.model = clone_model(model);
    best.converged = true;
    return best;
  }

  // bpp grows with lambda: heavier distortion weight spends more bits.
  double lo = static_cast<double>(cfg.lambda) / 4.0;
  double hi = static_cast<double>(cfg.lambda) * 4.0;
  bool have_model = false;
  for (int probe = 1; probe <= kMaxProbes; ++probe) {
    const float lam = static_cast<float>(std::sqrt(lo * hi));
    CodecModel work = clone_model(model);
    TrainConfig probe_cfg = cfg;
    probe_cfg.lambda = lam;
    TrainReport rep = train(work, dataset, probe_cfg);
    const double achieved = rep.holdout.bpp;
    const double residual = achieved - target_bpp;
    if (!have_model || std::abs(residual) < std::abs(best.residual)) {
      best.model = std::move(work);
      best.lambda = lam;
      best.achieved_bpp = achieved;
      best.residual = residual;
      best.probes = probe;
      have_model = true;
    }
    if (std::abs(residual) < kTolerance) {
      best.probes = probe;
      best.converged = true;
      return best;
    }
    if (achieved < target_bpp) {
      lo = lam;
    } else {
      hi = lam;
    }
  }
  if (!have_model) best.model = clone_model(model);
  best.probes = kMaxProbes;
  return best;
}

}  // namespace abcm
