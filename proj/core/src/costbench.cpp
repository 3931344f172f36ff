#include "abcm/costbench.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <string>

#include "abcm/errors.hpp"
#include "abcm/report.hpp"
#include "abcm/trainer.hpp"

namespace abcm {

long long conv_params(int cin, int cout, int kernel) {
  return static_cast<long long>(cout) * cin * kernel * kernel + cout;
}

long long gdn_params(int channels) {
  return static_cast<long long>(channels) * channels + channels;
}

long long conv_flops(int cin, int cout, int kernel, int out_h, int out_w) {
  const long long sites = static_cast<long long>(out_h) * out_w;
  return (2LL * cin * kernel * kernel * cout + cout) * sites;
}

long long deconv_flops(int cin, int cout, int kernel, int in_h, int in_w, int out_h,
                       int out_w) {
  return 2LL * cin * cout * kernel * kernel * in_h * in_w +
         static_cast<long long>(cout) * out_h * out_w;
}

long long gdn_flops(int channels, int h, int w) {
  return (2LL * channels * channels + 4LL * channels) * h * w;
}

long long entropy_flops(int channels, int h, int w) {
  return 16LL * channels * h * w;
}

long long mask_flops(int channels, int h, int w) {
  return static_cast<long long>(channels) * h * w;
}

long long CountTable::value_of(const std::string& layer) const {
  for (const auto& row : rows) {
    if (row.layer == layer) return row.value;
  }
  throw ContractError("no cost row named '" + layer + "'");
}

namespace {

int gate_param_count(const CodecModel& model, int slot) {
  const int width = model.slot_channels(slot);
  return model.gating == Gating::Stochastic ? 2 * width : width;
}

void check_geometry(const CodecModel& model, int height, int width) {
  const int f = model.config.downsample_factor();
  if (height < f || width < f || height % f != 0 || width % f != 0) {
    throw GeometryError("input geometry " + std::to_string(height) + "x" +
                        std::to_string(width) + " not divisible by " + std::to_string(f));
  }
}

}  // namespace

CountTable count_params(const CodecModel& model) {
  const auto& cfg = model.config;
  CountTable table;
  auto push = [&](std::string name, long long value) {
    table.rows.push_back({std::move(name), value});
    table.total += value;
  };
  for (int i = 0; i < 4; ++i) {
    push("ga_conv" + std::to_string(i),
         conv_params(cfg.ga_widths[i], cfg.ga_widths[i + 1], cfg.kernel));
    if (i < 3) push("ga_gdn" + std::to_string(i), gdn_params(cfg.ga_widths[i + 1]));
  }
  for (int i = 0; i < 4; ++i) {
    push("gs_deconv" + std::to_string(i),
         conv_params(cfg.gs_widths[i], cfg.gs_widths[i + 1], cfg.kernel));
    if (i < 3) push("gs_gdn" + std::to_string(i), gdn_params(cfg.gs_widths[i + 1]));
  }
  push("entropy", 2LL * cfg.latent_channels());
  if (model.gating != Gating::None) {
    for (int s = 0; s < 6; ++s) {
      push("gate_" + CodecModel::slot_name(s), gate_param_count(model, s));
    }
  }
  return table;
}

CountTable count_flops(const CodecModel& model, int height, int width) {
  check_geometry(model, height, width);
  const auto& cfg = model.config;
  const int stride = cfg.stride;
  CountTable table;
  auto push = [&](std::string name, long long value) {
    table.rows.push_back({std::move(name), value});
    table.total += value;
  };

  int h = height, w = width;
  for (int i = 0; i < 4; ++i) {
    h /= stride;
    w /= stride;
    push("ga_conv" + std::to_string(i),
         conv_flops(cfg.ga_widths[i], cfg.ga_widths[i + 1], cfg.kernel, h, w));
    if (i < 3) {
      push("ga_gdn" + std::to_string(i), gdn_flops(cfg.ga_widths[i + 1], h, w));
      if (model.gating != Gating::None) {
        push("gate_ga" + std::to_string(i), mask_flops(cfg.ga_widths[i + 1], h, w));
      }
    }
  }
  push("entropy", entropy_flops(cfg.latent_channels(), h, w));
  for (int i = 0; i < 4; ++i) {
    const int out_h = h * stride;
    const int out_w = w * stride;
    push("gs_deconv" + std::to_string(i),
         deconv_flops(cfg.gs_widths[i], cfg.gs_widths[i + 1], cfg.kernel, h, w, out_h,
                      out_w));
    h = out_h;
    w = out_w;
    if (i < 3) {
      push("gs_gdn" + std::to_string(i), gdn_flops(cfg.gs_widths[i + 1], h, w));
      if (model.gating != Gating::None) {
        push("gate_gs" + std::to_string(i), mask_flops(cfg.gs_widths[i + 1], h, w));
      }
    }
  }
  return table;
}

CostReport compare(const CodecModel& baseline, const CodecModel& pruned,
                   const std::vector<Tensor>& images, int height, int width) {
  if (images.empty()) throw ContractError("compare: evaluation set is empty");
  CostReport report;
  report.baseline_params = count_params(baseline);
  report.pruned_params = count_params(pruned);
  report.baseline_flops = count_flops(baseline, height, width);
  report.pruned_flops = count_flops(pruned, height, width);
  report.params_ratio = static_cast<double>(report.baseline_params.total) /
                        static_cast<double>(report.pruned_params.total);
  report.flops_ratio = static_cast<double>(report.baseline_flops.total) /
                       static_cast<double>(report.pruned_flops.total);
  const EvalSummary base_eval = evaluate(baseline, images);
  const EvalSummary pruned_eval = evaluate(pruned, images);
  report.psnr_baseline = base_eval.psnr;
  report.psnr_pruned = pruned_eval.psnr;
  report.psnr_drop_percent =
      (base_eval.psnr - pruned_eval.psnr) / base_eval.psnr * 100.0;
  report.bpp_baseline = base_eval.bpp;
  report.bpp_pruned = pruned_eval.bpp;
  return report;
}

namespace {

// Keeps the benched results observable so the rounds cannot be elided.
volatile double bench_sink = 0.0;

}  // namespace

TimingReport bench(const CodecModel& model, int height, int width, int warmup,
                   int rounds) {
  if (warmup < 0 || rounds < 1) {
    throw ContractError("bench: warmup must be >= 0 and rounds >= 1");
  }
  check_geometry(model, height, width);
  NoGradGuard no_grad;

  RngState rng(0xBE11C);
  std::vector<float> pixels(static_cast<size_t>(3) * height * width);
  for (auto& v : pixels) v = rng.uniform();
  const Tensor input = Tensor::from_vector({1, 3, height, width}, std::move(pixels));

  TimingReport report;
  report.warmup = warmup;
  report.rounds = rounds;
  const ForwardOptions opts;
  double acc = 0.0;
  for (int round = 0; round < warmup + rounds; ++round) {
    const auto start = std::chrono::steady_clock::now();
    const Tensor y_hat = quantize(analyze(model, input, opts), Phase::Eval);
    const Tensor bits = rate_bits(model.entropy, y_hat);
    const Tensor x_hat = synthesize(model, y_hat, opts);
    const auto stop = std::chrono::steady_clock::now();
    acc += static_cast<double>(bits.item()) + x_hat.data()[0];
    if (round >= warmup) {
      report.samples_ms.push_back(
          std::chrono::duration<double, std::milli>(stop - start).count());
    }
  }
  bench_sink = acc;
  double sum = 0.0;
  for (double s : report.samples_ms) sum += s;
  report.mean_ms = sum / static_cast<double>(report.samples_ms.size());
  return report;
}

double speedup(const TimingReport& baseline, const TimingReport& pruned) {
  if (pruned.mean_ms <= 0.0) {
    throw ContractError("speedup: pruned mean duration must be positive");
  }
  return baseline.mean_ms / pruned.mean_ms;
}

namespace {

constexpr const char* kConvention =
    "# conventions: 1 multiply-add = 2 FLOPs; sqrt and divide = 1 FLOP each\n";

}  // namespace

std::string cost_csv(const CodecModel& model, int height, int width) {
  const CountTable params = count_params(model);
  const CountTable flops = count_flops(model, height, width);
  std::string out = kConvention;
  out += "layer,params,flops\n";
  for (const auto& row : params.rows) {
    long long f = 0;
    for (const auto& frow : flops.rows) {
      if (frow.layer == row.layer) {
        f = frow.value;
        break;
      }
    }
    out += row.layer + "," + std::to_string(row.value) + "," + std::to_string(f) + "\n";
  }
  out += "total," + std::to_string(params.total) + "," + std::to_string(flops.total) + "\n";
  return out;
}

std::string compare_csv(const CostReport& report, const std::string& quality_tag) {
  std::string out = kConvention;
  out +=
      "quality,psnr_drop_percent,params_ratio,flops_ratio,psnr_baseline,psnr_pruned,"
      "bpp_baseline,bpp_pruned\n";
  const std::vector<double> cells = {report.psnr_drop_percent, report.params_ratio,
                                     report.flops_ratio,       report.psnr_baseline,
                                     report.psnr_pruned,       report.bpp_baseline,
                                     report.bpp_pruned};
  std::string numeric = csv_table({"a", "b", "c", "d", "e", "f", "g"}, {cells});
  out += quality_tag + "," + numeric.substr(numeric.find('\n') + 1);
  return out;
}

std::string timing_csv(const TimingReport& baseline, const TimingReport& pruned) {
  std::string out = "model,warmup_rounds,timed_rounds,mean_ms,speedup\n";
  const double ratio = speedup(baseline, pruned);
  auto row = [](const std::string& name, const TimingReport& r, double s) {
    std::string line = name + "," + std::to_string(r.warmup) + "," +
                       std::to_string(r.rounds) + ",";
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6f", r.mean_ms);
    line += buf;
    std::snprintf(buf, sizeof(buf), "%.6f", s);
    line += std::string(",") + buf + "\n";
    return line;
  };
  out += row("baseline", baseline, 1.0);
  out += row("pruned", pruned, ratio);
  return out;
}

std::string flops_svg(const CodecModel& model, int height, int width) {
  const CountTable flops = count_flops(model, height, width);
  std::vector<std::pair<std::string, double>> bars;
  for (const auto& row : flops.rows) {
    bars.emplace_back(row.layer, static_cast<double>(row.value));
  }
  return bar_chart_svg("FLOPs per layer at " + std::to_string(height) + "x" +
                           std::to_string(width),
                       "FLOPs", bars);
}

}  // namespace abcm
