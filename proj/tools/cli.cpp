#include "cli.hpp"

#include <CLI11.hpp>

#include <charconv>
#include <type_traits>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "abcm/costbench.hpp"
#include "abcm/data.hpp"
#include "abcm/errors.hpp"
#include "abcm/greedy.hpp"
#include "abcm/pruner.hpp"
#include "abcm/report.hpp"
#include "abcm/serialize.hpp"
#include "abcm/trainer.hpp"

namespace fs = std::filesystem;

namespace abcm {
namespace {

std::string fmt(double v) {
  char buf[48];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string fmt(float v) {
  char buf[48];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string default_out_dir() {
  const char* env = std::getenv("ABCM_OUT_DIR");
  return env && *env ? env : ".";
}

Gating parse_gate_mode(const std::string& name) {
  if (name == "none") return Gating::None;
  if (name == "deterministic") return Gating::Deterministic;
  if (name == "stochastic") return Gating::Stochastic;
  throw ContractError("gate_mode must be deterministic, stochastic, or none, got '" +
                      name + "'");
}

std::string trim(const std::string& s) {
  size_t b = 0, e = s.size();
  while (b < e && (s[b] == ' ' || s[b] == '\t')) ++b;
  while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r')) --e;
  return s.substr(b, e - b);
}

// `key = value` defaults applied before flag parsing, so flags win. Applied
// to every subcommand's fields; keys no subcommand consumes are typos.
class FileConfig {
 public:
  FileConfig() = default;

  explicit FileConfig(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file '" + path + "'");
    std::string line;
    while (std::getline(in, line)) {
      const std::string stripped = trim(line);
      if (stripped.empty() || stripped[0] == '#') continue;
      const size_t eq = stripped.find('=');
      if (eq == std::string::npos) {
        throw ParseError("config line without '=': '" + stripped + "'");
      }
      values_[trim(stripped.substr(0, eq))] = trim(stripped.substr(eq + 1));
    }
  }

  bool apply(const char* key, std::string& out) {
    const std::string* v = take(key);
    if (v) out = *v;
    return v != nullptr;
  }
  bool apply(const char* key, int& out) {
    const std::string* v = take(key);
    if (v) out = static_cast<int>(parse_ll(key, *v));
    return v != nullptr;
  }
  bool apply(const char* key, std::uint64_t& out) {
    const std::string* v = take(key);
    if (v) out = static_cast<std::uint64_t>(parse_ll(key, *v));
    return v != nullptr;
  }
  bool apply(const char* key, float& out) {
    const std::string* v = take(key);
    if (v) out = static_cast<float>(parse_d(key, *v));
    return v != nullptr;
  }
  bool apply(const char* key, double& out) {
    const std::string* v = take(key);
    if (v) out = parse_d(key, *v);
    return v != nullptr;
  }
  bool apply(const char* key, std::vector<float>& out) {
    const std::string* v = take(key);
    if (!v) return false;
    out.clear();
    size_t pos = 0;
    while (pos <= v->size()) {
      size_t comma = v->find(',', pos);
      if (comma == std::string::npos) comma = v->size();
      out.push_back(static_cast<float>(parse_d(key, trim(v->substr(pos, comma - pos)))));
      pos = comma + 1;
    }
    return true;
  }

  void reject_unconsumed() const {
    for (const auto& [key, value] : values_) {
      if (!consumed_.count(key)) {
        throw ParseError("unknown config key '" + key + "'");
      }
    }
  }

 private:
  const std::string* take(const char* key) {
    auto it = values_.find(key);
    if (it == values_.end()) return nullptr;
    consumed_.insert(key);
    return &it->second;
  }

  static long long parse_ll(const char* key, const std::string& text) {
    long long value = 0;
    auto res = std::from_chars(text.data(), text.data() + text.size(), value);
    if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
      throw ParseError("config value for '" + std::string(key) +
                       "' is not an integer: '" + text + "'");
    }
    return value;
  }

  static double parse_d(const char* key, const std::string& text) {
    double value = 0.0;
    auto res = std::from_chars(text.data(), text.data() + text.size(), value);
    if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
      throw ParseError("config value for '" + std::string(key) + "' is not a number: '" +
                       text + "'");
    }
    return value;
  }

  std::map<std::string, std::string> values_;
  std::set<std::string> consumed_;
};

std::string config_path_from(const std::vector<std::string>& args) {
  for (size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) return args[i + 1];
    if (args[i].rfind("--config=", 0) == 0) return args[i].substr(9);
  }
  return "";
}

// Effective configuration echoed into every artifact.
class Provenance {
 public:
  Provenance(const std::string& subcommand) {
    add(std::string("subcommand"), subcommand);
    add(std::string("tool_version"), kToolVersion);
  }
  void add(const std::string& key, const std::string& value) {
    pairs_.emplace_back(key, value);
  }
  void add(const std::string& key, const char* value) { pairs_.emplace_back(key, value); }
  void add(const std::string& key, float v) { pairs_.emplace_back(key, fmt(v)); }
  void add(const std::string& key, double v) { pairs_.emplace_back(key, fmt(v)); }
  template <typename T, std::enable_if_t<std::is_integral_v<T>, int> = 0>
  void add(const std::string& key, T v) {
    pairs_.emplace_back(key, std::to_string(v));
  }

  std::string csv_block() const {
    std::string out;
    for (const auto& [k, v] : pairs_) out += "# " + k + " = " + v + "\n";
    return out;
  }

  // Inserted after the opening svg tag. "--" cannot appear inside an XML
  // comment, so it is defanged.
  std::string annotate_svg(const std::string& svg) const {
    std::string comment = "<!--\n";
    for (const auto& [k, v] : pairs_) {
      std::string clean = k + " = " + v;
      size_t pos;
      while ((pos = clean.find("--")) != std::string::npos) clean.replace(pos, 2, "»");
      comment += clean + "\n";
    }
    comment += "-->\n";
    const size_t nl = svg.find('\n');
    if (nl == std::string::npos) return svg + comment;
    return svg.substr(0, nl + 1) + comment + svg.substr(nl + 1);
  }

  MetaPairs meta() const { return pairs_; }

 private:
  MetaPairs pairs_;
};

void write_text(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  out.flush();
  if (!out) throw IoError("short write to '" + path.string() + "'");
}

fs::path artifact_path(const std::string& out_dir, const std::string& name) {
  fs::create_directories(out_dir);
  return fs::path(out_dir) / name;
}

// Options shared by the two subcommands that optimize models.
struct FitOpts {
  std::string data = "synthetic:1:8:64";
  std::string out_dir = default_out_dir();
  std::uint64_t seed = 1;
  int steps = 200;
  float lambda = 0.01f;
  float lr = 1e-3f;
  int batch = 4;
  int patch = 64;
  int halve_lr_at = -1;
  int hidden = 8;
  int latent = 12;
  std::string gate_mode = "deterministic";
  float epsilon = 4.0f;
  float tau = 1.0f;
  float alpha_init = 0.5f;
};

void add_fit_options(CLI::App* sub, FitOpts& o) {
  sub->add_option("--data", o.data, "PPM file/directory or synthetic:<seed>:<count>:<size>")
      ->capture_default_str();
  sub->add_option("--out_dir", o.out_dir, "Artifact directory (default $ABCM_OUT_DIR or .)")
      ->capture_default_str();
  sub->add_option("--seed", o.seed, "Run seed")->capture_default_str();
  sub->add_option("--steps", o.steps, "Optimization steps")->capture_default_str();
  sub->add_option("--lambda", o.lambda, "Distortion weight")->capture_default_str();
  sub->add_option("--lr", o.lr, "Learning rate")->capture_default_str();
  sub->add_option("--batch", o.batch, "Crops per step")->capture_default_str();
  sub->add_option("--patch", o.patch, "Crop size")->capture_default_str();
  sub->add_option("--halve_lr_at", o.halve_lr_at, "Step at which lr halves; negative = never")
      ->capture_default_str();
  sub->add_option("--hidden", o.hidden, "Hidden conv width")->capture_default_str();
  sub->add_option("--latent", o.latent, "Latent channels")->capture_default_str();
  sub->add_option("--gate_mode", o.gate_mode, "Channel gating flavor")
      ->check(CLI::IsMember({"deterministic", "stochastic", "none"}))
      ->capture_default_str();
  sub->add_option("--epsilon", o.epsilon, "Gate surrogate slope")->capture_default_str();
  sub->add_option("--tau", o.tau, "Stochastic gate temperature")->capture_default_str();
  sub->add_option("--alpha_init", o.alpha_init, "Initial channel importance")
      ->capture_default_str();
}

void add_config_file(CLI::App* sub, std::string& path) {
  sub->add_option("--config", path, "Read `key = value` defaults from a file; flags win");
}

void apply_file(FileConfig& f, FitOpts& o) {
  f.apply("data", o.data);
  f.apply("out_dir", o.out_dir);
  f.apply("seed", o.seed);
  f.apply("steps", o.steps);
  f.apply("lambda", o.lambda);
  f.apply("lr", o.lr);
  f.apply("batch", o.batch);
  f.apply("patch", o.patch);
  f.apply("halve_lr_at", o.halve_lr_at);
  f.apply("hidden", o.hidden);
  f.apply("latent", o.latent);
  f.apply("gate_mode", o.gate_mode);
  f.apply("epsilon", o.epsilon);
  f.apply("tau", o.tau);
  f.apply("alpha_init", o.alpha_init);
}

void fill_provenance(Provenance& prov, const FitOpts& o) {
  prov.add("data", o.data);
  prov.add("out_dir", o.out_dir);
  prov.add("seed", o.seed);
  prov.add("steps", o.steps);
  prov.add("lambda", o.lambda);
  prov.add("lr", o.lr);
  prov.add("batch", o.batch);
  prov.add("patch", o.patch);
  prov.add("halve_lr_at", o.halve_lr_at);
  prov.add("hidden", o.hidden);
  prov.add("latent", o.latent);
  prov.add("gate_mode", o.gate_mode);
  prov.add("epsilon", o.epsilon);
  prov.add("tau", o.tau);
  prov.add("alpha_init", o.alpha_init);
}

TrainConfig fit_config(const FitOpts& o, float gamma) {
  TrainConfig cfg;
  cfg.lambda = o.lambda;
  cfg.gamma = gamma;
  cfg.lr = o.lr;
  cfg.steps = o.steps;
  cfg.batch = o.batch;
  cfg.patch = o.patch;
  cfg.seed = o.seed;
  cfg.halve_lr_at = o.halve_lr_at;
  cfg.validate();
  return cfg;
}

CodecModel fresh_model(const FitOpts& o) {
  RngState rng(o.seed);
  return build_model(ChannelConfig::desk(o.hidden, o.latent), rng,
                     parse_gate_mode(o.gate_mode), o.epsilon, o.tau, o.alpha_init);
}

struct TrainOpts {
  FitOpts fit;
  float gamma = 0.01f;
  std::string model_out = "model.abcm";
};

int run_train(const TrainOpts& o) {
  const auto dataset = load_images(o.fit.data);
  CodecModel model = fresh_model(o.fit);
  const TrainConfig cfg = fit_config(o.fit, o.gamma);
  const TrainReport report = train(model, dataset, cfg);

  Provenance prov("train");
  fill_provenance(prov, o.fit);
  prov.add("gamma", o.gamma);
  prov.add("model_out", o.model_out);

  Provenance results = prov;
  results.add("holdout_bpp", report.holdout.bpp);
  results.add("holdout_mse", report.holdout.mse);
  results.add("holdout_psnr", report.holdout.psnr);
  results.add("holdout_images", report.holdout.images);
  results.add("mean_channel_ratio", report.final_usage.mean_ratio);
  results.add("diverged", report.diverged ? "1" : "0");

  std::vector<std::vector<double>> rows;
  for (size_t i = 0; i < report.curve.size(); ++i) {
    const auto& step = report.curve[i];
    rows.push_back({static_cast<double>(i), step.rate_bpp, step.distortion,
                    step.sparsity_mean, step.total});
  }
  write_text(artifact_path(o.fit.out_dir, "train_curve.csv"),
             results.csv_block() +
                 csv_table({"step", "rate_bpp", "distortion", "sparsity_mean", "total"},
                           rows));

  if (report.diverged) {
    std::fprintf(stderr, "error: training diverged at step %lld, no model written\n",
                 report.diverged_step);
    return 3;
  }
  const fs::path model_path = artifact_path(o.fit.out_dir, o.model_out);
  save_model(model, model_path.string(), results.meta());
  std::printf("trained %d steps: holdout bpp %.4f, psnr %.2f dB, kept %.0f%% channels\n",
              o.fit.steps, report.holdout.bpp, report.holdout.psnr,
              100.0 * report.final_usage.mean_ratio);
  std::printf("model: %s\n", model_path.string().c_str());
  return 0;
}

struct PruneOpts {
  std::string model;
  std::string data = "synthetic:1:8:64";
  std::string out_dir = default_out_dir();
  double tolerance = 0.0;
  std::string model_out = "pruned.abcm";
};

int run_prune(const PruneOpts& o) {
  const CodecModel model = load_model(o.model);
  const KeepPlan plan = extract_plan(model);
  const CodecModel pruned = prune(model, plan);
  const auto images = to_tensors(load_images(o.data));
  const EquivalenceReport eq = verify_equivalence(model, pruned, images, o.tolerance);

  Provenance prov("prune");
  prov.add("model", o.model);
  prov.add("data", o.data);
  prov.add("out_dir", o.out_dir);
  prov.add("tolerance", eq.tolerance);
  prov.add("model_out", o.model_out);

  std::vector<std::vector<double>> diff_rows;
  std::string diff_csv = prov.csv_block() + "layer,baseline_channels,pruned_channels\n";
  for (int s = 0; s < 6; ++s) {
    diff_csv += CodecModel::slot_name(s) + "," + std::to_string(model.slot_channels(s)) +
                "," + std::to_string(pruned.slot_channels(s)) + "\n";
  }
  write_text(artifact_path(o.out_dir, "prune_diff.csv"), diff_csv);

  Provenance eq_prov = prov;
  eq_prov.add("max_abs_diff", eq.max_abs_diff);
  eq_prov.add("pass", eq.pass ? "1" : "0");
  std::vector<std::vector<double>> rows;
  for (size_t i = 0; i < eq.inputs.size(); ++i) {
    const auto& in = eq.inputs[i];
    rows.push_back({static_cast<double>(i), in.max_latent_diff, in.max_recon_diff,
                    in.rate_masked, in.rate_pruned, in.mse_masked, in.mse_pruned,
                    in.psnr_masked, in.psnr_pruned, in.pass ? 1.0 : 0.0});
  }
  write_text(artifact_path(o.out_dir, "equivalence.csv"),
             eq_prov.csv_block() +
                 csv_table({"input", "max_latent_diff", "max_recon_diff", "rate_masked",
                            "rate_pruned", "mse_masked", "mse_pruned", "psnr_masked",
                            "psnr_pruned", "pass"},
                           rows));

  if (!eq.pass) {
    std::fprintf(stderr,
                 "error: pruned model deviates from masked baseline "
                 "(max diff %g > tolerance %g), no model written; raise --tolerance to "
                 "accept\n",
                 eq.max_abs_diff, eq.tolerance);
    return 4;
  }
  const fs::path model_path = artifact_path(o.out_dir, o.model_out);
  save_model(pruned, model_path.string(), prov.meta());
  int kept = 0, total = 0;
  for (int s = 0; s < 6; ++s) {
    kept += pruned.slot_channels(s);
    total += model.slot_channels(s);
  }
  std::printf("pruned %d of %d masked channels, equivalence max diff %g\n", total - kept,
              total, eq.max_abs_diff);
  std::printf("model: %s\n", model_path.string().c_str());
  return 0;
}

struct SearchOpts {
  std::string model;
  std::string data = "synthetic:1:8:64";
  std::string out_dir = default_out_dir();
  double threshold = 1.0;
};

int run_search(const SearchOpts& o) {
  const CodecModel model = load_model(o.model);
  const auto images = to_tensors(load_images(o.data));
  SearchConfig cfg;
  cfg.psnr_drop_threshold = o.threshold;
  const SearchResult result = greedy_search(model, images, cfg);

  Provenance prov("search");
  prov.add("model", o.model);
  prov.add("data", o.data);
  prov.add("out_dir", o.out_dir);
  prov.add("threshold", o.threshold);

  Provenance results = prov;
  results.add("baseline_psnr", result.baseline_psnr);
  results.add("total_channels", result.total_channels);
  results.add("removed_channels", static_cast<long long>(result.removals.size()));
  results.add("pruning_ratio", result.pruning_ratio());
  results.add("candidate_evaluations", result.candidate_evaluations);
  for (size_t s = 0; s < result.plan.keep.size(); ++s) {
    std::string kept;
    for (size_t i = 0; i < result.plan.keep[s].size(); ++i) {
      if (i) kept += ',';
      kept += std::to_string(result.plan.keep[s][i]);
    }
    results.add("keep." + std::to_string(s), kept);
  }

  write_text(artifact_path(o.out_dir, "search_curve.csv"),
             results.csv_block() + curve_csv(result));
  write_text(artifact_path(o.out_dir, "search_curve.svg"),
             results.annotate_svg(curve_svg(result)));
  std::printf("greedy search removed %zu of %d channels (%.1f%%) within %.2f%% PSNR\n",
              result.removals.size(), result.total_channels,
              100.0 * result.pruning_ratio(), o.threshold);
  return 0;
}

struct BenchOpts {
  std::string model;
  std::string pruned;
  std::string data = "synthetic:1:8:64";
  std::string out_dir = default_out_dir();
  std::string quality = "pruned";
  int height = 256;
  int width = 256;
  int warmup = 10;
  int rounds = 10;
};

int run_bench(const BenchOpts& o) {
  const CodecModel base = load_model(o.model);

  Provenance prov("bench");
  prov.add("model", o.model);
  prov.add("pruned", o.pruned);
  prov.add("data", o.data);
  prov.add("out_dir", o.out_dir);
  prov.add("quality", o.quality);
  prov.add("height", o.height);
  prov.add("width", o.width);
  prov.add("warmup", o.warmup);
  prov.add("rounds", o.rounds);

  write_text(artifact_path(o.out_dir, "costs.csv"),
             prov.csv_block() + cost_csv(base, o.height, o.width));
  write_text(artifact_path(o.out_dir, "flops.svg"),
             prov.annotate_svg(flops_svg(base, o.height, o.width)));

  const TimingReport tb = bench(base, o.height, o.width, o.warmup, o.rounds);
  if (o.pruned.empty()) {
    std::string csv = timing_csv(tb, tb);
    csv.resize(csv.find('\n', csv.find('\n') + 1) + 1);
    write_text(artifact_path(o.out_dir, "timing.csv"), prov.csv_block() + csv);
    std::printf("benchmarked %s: mean %.3f ms over %d rounds\n", o.model.c_str(),
                tb.mean_ms, o.rounds);
    return 0;
  }

  const CodecModel slim = load_model(o.pruned);
  const TimingReport tp = bench(slim, o.height, o.width, o.warmup, o.rounds);
  write_text(artifact_path(o.out_dir, "timing.csv"),
             prov.csv_block() + timing_csv(tb, tp));
  const auto images = to_tensors(load_images(o.data));
  const CostReport report = compare(base, slim, images, o.height, o.width);
  write_text(artifact_path(o.out_dir, "compare.csv"),
             prov.csv_block() + compare_csv(report, o.quality));
  std::printf(
      "speedup %.2fx (%.3f -> %.3f ms), flops ratio %.2fx, psnr drop %.2f%%\n",
      speedup(tb, tp), tb.mean_ms, tp.mean_ms, report.flops_ratio,
      report.psnr_drop_percent);
  return 0;
}

struct EvalOpts {
  std::string model;
  std::string data = "synthetic:1:8:64";
  std::string out_dir = default_out_dir();
};

int run_eval(const EvalOpts& o) {
  const CodecModel model = load_model(o.model);
  const auto images = to_tensors(load_images(o.data));
  const EvalSummary summary = evaluate(model, images);

  Provenance prov("eval");
  prov.add("model", o.model);
  prov.add("data", o.data);
  prov.add("out_dir", o.out_dir);

  write_text(artifact_path(o.out_dir, "eval.csv"),
             prov.csv_block() +
                 csv_table({"images", "bpp", "mse", "psnr"},
                           {{static_cast<double>(summary.images), summary.bpp,
                             summary.mse, summary.psnr}}));
  std::printf("%d images: bpp %.4f, mse %.2f, psnr %.2f dB\n", summary.images,
              summary.bpp, summary.mse, summary.psnr);
  return 0;
}

struct SweepOpts {
  FitOpts fit;
  std::vector<float> gammas = {0.0f, 0.01f, 0.1f};
};

int run_sweep(const SweepOpts& o) {
  const auto dataset = load_images(o.fit.data);
  const CodecModel base = fresh_model(o.fit);
  const TrainConfig cfg = fit_config(o.fit, 0.0f);
  const SweepReport sweep = gamma_sweep(base, dataset, cfg, o.gammas);

  Provenance prov("sweep");
  fill_provenance(prov, o.fit);
  std::string gamma_list;
  for (size_t i = 0; i < o.gammas.size(); ++i) {
    if (i) gamma_list += ',';
    gamma_list += fmt(o.gammas[i]);
  }
  prov.add("gammas", gamma_list);

  std::vector<std::vector<double>> rows;
  PlotSeries ratio_series;
  ratio_series.label = "kept ratio";
  for (size_t i = 0; i < sweep.rows.size(); ++i) {
    const auto& row = sweep.rows[i];
    const auto& report = sweep.reports[i];
    rows.push_back({row.gamma, row.bpp, row.psnr, row.mean_sparsity,
                    report.final_usage.mean_ratio, report.diverged ? 1.0 : 0.0});
    ratio_series.x.push_back(row.gamma);
    ratio_series.y.push_back(report.final_usage.mean_ratio);
  }
  write_text(artifact_path(o.fit.out_dir, "gamma_sweep.csv"),
             prov.csv_block() +
                 csv_table({"gamma", "bpp", "psnr", "mean_sparsity", "channel_ratio",
                            "diverged"},
                           rows));
  write_text(
      artifact_path(o.fit.out_dir, "gamma_sweep.svg"),
      prov.annotate_svg(line_plot_svg("Sparsity pressure ablation", "gamma",
                                      "kept channel ratio", {ratio_series})));
  std::printf("swept %zu sparsity weights over %d steps each\n", o.gammas.size(),
              o.fit.steps);
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"Learned image codec with adaptive binary channel masking"};
  app.require_subcommand(1);

  int rc = 0;
  std::string config_path;
  TrainOpts train_opts;
  PruneOpts prune_opts;
  SearchOpts search_opts;
  BenchOpts bench_opts;
  EvalOpts eval_opts;
  SweepOpts sweep_opts;
  bool model_from_file[4] = {false, false, false, false};
  try {
    FileConfig file;
    const std::string found = config_path_from(args);
    if (!found.empty()) file = FileConfig(found);
    apply_file(file, train_opts.fit);
    file.apply("gamma", train_opts.gamma);
    file.apply("model_out", train_opts.model_out);
    model_from_file[0] = file.apply("model", prune_opts.model);
    file.apply("data", prune_opts.data);
    file.apply("out_dir", prune_opts.out_dir);
    file.apply("tolerance", prune_opts.tolerance);
    file.apply("model_out", prune_opts.model_out);
    model_from_file[1] = file.apply("model", search_opts.model);
    file.apply("data", search_opts.data);
    file.apply("out_dir", search_opts.out_dir);
    file.apply("threshold", search_opts.threshold);
    model_from_file[2] = file.apply("model", bench_opts.model);
    file.apply("pruned", bench_opts.pruned);
    file.apply("data", bench_opts.data);
    file.apply("out_dir", bench_opts.out_dir);
    file.apply("quality", bench_opts.quality);
    file.apply("height", bench_opts.height);
    file.apply("width", bench_opts.width);
    file.apply("warmup", bench_opts.warmup);
    file.apply("rounds", bench_opts.rounds);
    model_from_file[3] = file.apply("model", eval_opts.model);
    file.apply("data", eval_opts.data);
    file.apply("out_dir", eval_opts.out_dir);
    apply_file(file, sweep_opts.fit);
    file.apply("gammas", sweep_opts.gammas);
    file.reject_unconsumed();
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }

  CLI::App* train_cmd =
      app.add_subcommand("train", "Optimize a model and emit it with its loss curve");
  add_fit_options(train_cmd, train_opts.fit);
  train_cmd->add_option("--gamma", train_opts.gamma, "Sparsity weight")
      ->capture_default_str();
  train_cmd->add_option("--model_out", train_opts.model_out, "Model file name")
      ->capture_default_str();
  add_config_file(train_cmd, config_path);
  train_cmd->callback([&] { rc = run_train(train_opts); });

  CLI::App* prune_cmd = app.add_subcommand(
      "prune", "Slice away gated-off channels and verify exact equivalence");
  {
    auto* opt = prune_cmd->add_option("--model", prune_opts.model, "Gated model to prune");
    if (!model_from_file[0]) opt->required();
  }
  prune_cmd->add_option("--data", prune_opts.data, "Verification images")
      ->capture_default_str();
  prune_cmd->add_option("--out_dir", prune_opts.out_dir, "Artifact directory")
      ->capture_default_str();
  prune_cmd
      ->add_option("--tolerance", prune_opts.tolerance,
                   "Max reconstruction deviation accepted")
      ->capture_default_str();
  prune_cmd->add_option("--model_out", prune_opts.model_out, "Pruned model file name")
      ->capture_default_str();
  add_config_file(prune_cmd, config_path);
  prune_cmd->callback([&] { rc = run_prune(prune_opts); });

  CLI::App* search_cmd = app.add_subcommand(
      "search", "Greedy per-channel sensitivity search under a PSNR drop budget");
  {
    auto* opt = search_cmd->add_option("--model", search_opts.model, "Model to search");
    if (!model_from_file[1]) opt->required();
  }
  search_cmd->add_option("--data", search_opts.data, "Evaluation images")
      ->capture_default_str();
  search_cmd->add_option("--out_dir", search_opts.out_dir, "Artifact directory")
      ->capture_default_str();
  search_cmd
      ->add_option("--threshold", search_opts.threshold,
                   "Tolerated PSNR drop, percent of baseline")
      ->capture_default_str();
  add_config_file(search_cmd, config_path);
  search_cmd->callback([&] { rc = run_search(search_opts); });

  CLI::App* bench_cmd = app.add_subcommand(
      "bench", "Wall-clock timing, cost tables, and baseline/pruned comparison");
  {
    auto* opt = bench_cmd->add_option("--model", bench_opts.model, "Baseline model");
    if (!model_from_file[2]) opt->required();
  }
  bench_cmd->add_option("--pruned", bench_opts.pruned, "Pruned model to compare against")
      ->capture_default_str();
  bench_cmd->add_option("--data", bench_opts.data, "Images for the quality comparison")
      ->capture_default_str();
  bench_cmd->add_option("--out_dir", bench_opts.out_dir, "Artifact directory")
      ->capture_default_str();
  bench_cmd->add_option("--quality", bench_opts.quality, "Tag for the comparison row")
      ->capture_default_str();
  bench_cmd->add_option("--height", bench_opts.height, "Input height")
      ->capture_default_str();
  bench_cmd->add_option("--width", bench_opts.width, "Input width")->capture_default_str();
  bench_cmd->add_option("--warmup", bench_opts.warmup, "Untimed rounds")
      ->capture_default_str();
  bench_cmd->add_option("--rounds", bench_opts.rounds, "Timed rounds")
      ->capture_default_str();
  add_config_file(bench_cmd, config_path);
  bench_cmd->callback([&] { rc = run_bench(bench_opts); });

  CLI::App* eval_cmd =
      app.add_subcommand("eval", "Rate and distortion of a model on an image set");
  {
    auto* opt = eval_cmd->add_option("--model", eval_opts.model, "Model to evaluate");
    if (!model_from_file[3]) opt->required();
  }
  eval_cmd->add_option("--data", eval_opts.data, "Images")->capture_default_str();
  eval_cmd->add_option("--out_dir", eval_opts.out_dir, "Artifact directory")
      ->capture_default_str();
  add_config_file(eval_cmd, config_path);
  eval_cmd->callback([&] { rc = run_eval(eval_opts); });

  CLI::App* sweep_cmd = app.add_subcommand(
      "sweep", "Train one arm per sparsity weight and tabulate the ablation");
  add_fit_options(sweep_cmd, sweep_opts.fit);
  sweep_cmd->add_option("--gammas", sweep_opts.gammas, "Sparsity weights to sweep")
      ->delimiter(',')
      ->capture_default_str();
  add_config_file(sweep_cmd, config_path);
  sweep_cmd->callback([&] { rc = run_sweep(sweep_opts); });

  std::vector<const char*> argv;
  argv.push_back("abcm");
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return rc;
}

}  // namespace abcm
