#include <doctest.h>

#include <cmath>
#include <string>
#include <vector>

#include "abcm/costbench.hpp"
#include "abcm/pruner.hpp"
#include "abcm/rng.hpp"

using namespace abcm;

namespace {

std::vector<int> first_n(int n) {
  std::vector<int> v;
  for (int c = 0; c < n; ++c) v.push_back(c);
  return v;
}

KeepPlan half_plan(const CodecModel& model) {
  KeepPlan plan;
  for (int s = 0; s < 6; ++s) plan.keep.push_back(first_n(model.slot_channels(s) / 2));
  return plan;
}

std::vector<Tensor> random_images(int count, int size, RngState& rng) {
  std::vector<Tensor> images;
  for (int i = 0; i < count; ++i) {
    std::vector<float> px(static_cast<size_t>(3) * size * size);
    for (auto& v : px) v = rng.uniform();
    images.push_back(Tensor::from_vector({3, size, size}, std::move(px)));
  }
  return images;
}

std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> lines;
  size_t pos = 0;
  while (pos < text.size()) {
    size_t nl = text.find('\n', pos);
    if (nl == std::string::npos) nl = text.size();
    lines.push_back(text.substr(pos, nl - pos));
    pos = nl + 1;
  }
  return lines;
}

}  // namespace

TEST_SUITE("costbench") {

TEST_CASE("parameter formulas match hand counts") {
  CHECK(conv_params(3, 8, 5) == 8 * 3 * 25 + 8);
  CHECK(conv_params(3, 8, 5) == 608);
  CHECK(gdn_params(8) == 8 * 8 + 8);
  CHECK(gdn_params(8) == 72);
  CHECK(conv_params(1, 1, 1) == 2);
  CHECK(gdn_params(1) == 2);
}

TEST_CASE("flop formulas match hand counts") {
  // Smallest possible conv: one MAC and one bias add.
  CHECK(conv_flops(1, 1, 1, 1, 1) == 3);
  CHECK(conv_flops(3, 8, 5, 32, 32) == (2LL * 3 * 25 * 8 + 8) * 32 * 32);
  CHECK(deconv_flops(12, 8, 5, 4, 4, 8, 8) == 2LL * 12 * 8 * 25 * 16 + 8LL * 64);
  CHECK(gdn_flops(8, 16, 16) == (2LL * 64 + 4 * 8) * 256);
  CHECK(entropy_flops(12, 4, 4) == 16LL * 12 * 16);
  CHECK(mask_flops(8, 32, 32) == 8LL * 1024);
}

TEST_CASE("parameter table itemizes the desk model") {
  RngState rng(7);
  const CodecModel model = build_model(ChannelConfig::desk(), rng);
  const CountTable table = count_params(model);

  CHECK(table.value_of("ga_conv0") == 608);
  CHECK(table.value_of("ga_gdn0") == 72);
  CHECK(table.value_of("ga_conv1") == 8 * 8 * 25 + 8);
  CHECK(table.value_of("ga_conv3") == 12 * 8 * 25 + 12);
  CHECK(table.value_of("gs_deconv0") == 8 * 12 * 25 + 8);
  CHECK(table.value_of("gs_deconv3") == 3 * 8 * 25 + 3);
  CHECK(table.value_of("entropy") == 24);
  CHECK(table.value_of("gate_ga0") == 8);
  CHECK(table.value_of("gate_gs2") == 8);
  CHECK_THROWS_AS((void)table.value_of("nonexistent"), ContractError);

  long long sum = 0;
  for (const auto& row : table.rows) sum += row.value;
  CHECK(table.total == sum);
  // 14 weight layers, entropy, and 6 gate vectors.
  CHECK(table.rows.size() == 21);
  CHECK(table.total == 12919 + 48);
}

TEST_CASE("stochastic gates count two logits per channel") {
  RngState rng(7);
  const CodecModel model =
      build_model(ChannelConfig::desk(), rng, Gating::Stochastic);
  const CountTable table = count_params(model);
  CHECK(table.value_of("gate_ga0") == 16);
  CHECK(table.total == 12919 + 96);
}

TEST_CASE("identity pruning sheds exactly the gate parameters") {
  RngState rng(11);
  const CodecModel gated = build_model(ChannelConfig::desk(), rng);
  KeepPlan plan;
  for (int s = 0; s < 6; ++s) plan.keep.push_back(first_n(gated.slot_channels(s)));
  const CodecModel pruned = prune(gated, plan);

  const CountTable before = count_params(gated);
  const CountTable after = count_params(pruned);
  CHECK(after.total == before.total - 48);
  // Ungated tables carry no gate rows.
  CHECK(after.rows.size() == 15);
  CHECK_THROWS_AS((void)after.value_of("gate_ga0"), ContractError);
}

TEST_CASE("flop table matches a hand recount of the desk model at 64x64") {
  RngState rng(3);
  const CodecModel model = build_model(ChannelConfig::desk(), rng);
  const CountTable table = count_flops(model, 64, 64);

  CHECK(table.value_of("ga_conv0") == (2LL * 3 * 25 * 8 + 8) * 32 * 32);
  CHECK(table.value_of("ga_gdn0") == (2LL * 64 + 32) * 32 * 32);
  CHECK(table.value_of("gate_ga0") == 8LL * 32 * 32);
  CHECK(table.value_of("ga_conv1") == (2LL * 8 * 25 * 8 + 8) * 16 * 16);
  CHECK(table.value_of("ga_conv2") == (2LL * 8 * 25 * 8 + 8) * 8 * 8);
  CHECK(table.value_of("ga_conv3") == (2LL * 8 * 25 * 12 + 12) * 4 * 4);
  CHECK(table.value_of("entropy") == 16LL * 12 * 4 * 4);
  CHECK(table.value_of("gs_deconv0") == 2LL * 12 * 8 * 25 * 4 * 4 + 8LL * 8 * 8);
  CHECK(table.value_of("gs_gdn0") == (2LL * 64 + 32) * 8 * 8);
  CHECK(table.value_of("gate_gs0") == 8LL * 8 * 8);
  CHECK(table.value_of("gs_deconv1") == 2LL * 8 * 8 * 25 * 8 * 8 + 8LL * 16 * 16);
  CHECK(table.value_of("gs_deconv2") == 2LL * 8 * 8 * 25 * 16 * 16 + 8LL * 32 * 32);
  CHECK(table.value_of("gs_deconv3") == 2LL * 8 * 3 * 25 * 32 * 32 + 3LL * 64 * 64);

  long long sum = 0;
  for (const auto& row : table.rows) sum += row.value;
  CHECK(table.total == sum);
  CHECK(table.rows.size() == 21);
}

TEST_CASE("doubling the input dimensions quadruples every flop row") {
  RngState rng(3);
  const CodecModel model = build_model(ChannelConfig::desk(), rng);
  const CountTable small = count_flops(model, 64, 64);
  const CountTable big = count_flops(model, 128, 128);
  REQUIRE(big.rows.size() == small.rows.size());
  for (size_t i = 0; i < small.rows.size(); ++i) {
    CHECK(big.rows[i].layer == small.rows[i].layer);
    CHECK(big.rows[i].value == 4 * small.rows[i].value);
  }
  CHECK(big.total == 4 * small.total);
}

TEST_CASE("counts depend on structure only, never on weights") {
  RngState rng_a(1), rng_b(999);
  const ChannelConfig cfg =
      ChannelConfig::from_pairs({{3, 4}, {4, 6}, {6, 5}, {5, 7}},
                                {{7, 5}, {5, 6}, {6, 4}, {4, 3}});
  CodecModel a = build_model(cfg, rng_a);
  CodecModel b = build_model(cfg, rng_b);
  for (Tensor p : b.parameters()) {
    auto vals = p.mutable_data();
    for (auto& v : vals) v += 3.5f;
  }
  const CountTable pa = count_params(a);
  const CountTable pb = count_params(b);
  CHECK(pa.total == pb.total);
  const CountTable fa = count_flops(a, 32, 48);
  const CountTable fb = count_flops(b, 32, 48);
  CHECK(fa.total == fb.total);
  for (size_t i = 0; i < fa.rows.size(); ++i) CHECK(fa.rows[i].value == fb.rows[i].value);
}

TEST_CASE("geometry must divide the downsample factor") {
  RngState rng(5);
  const CodecModel model = build_model(ChannelConfig::desk(), rng);
  CHECK_THROWS_AS((void)count_flops(model, 30, 32), GeometryError);
  CHECK_THROWS_AS((void)count_flops(model, 32, 30), GeometryError);
  CHECK_THROWS_AS((void)count_flops(model, 0, 0), GeometryError);
  CHECK_NOTHROW((void)count_flops(model, 16, 16));
}

TEST_CASE("comparing a model against itself lands on exact unit ratios") {
  RngState rng(17);
  const CodecModel model = build_model(ChannelConfig::desk(), rng);
  RngState img_rng(21);
  const auto images = random_images(2, 32, img_rng);
  const CostReport report = compare(model, model, images, 32, 32);

  CHECK(report.params_ratio == 1.0);
  CHECK(report.flops_ratio == 1.0);
  CHECK(report.psnr_drop_percent == 0.0);
  CHECK(report.psnr_baseline == report.psnr_pruned);
  CHECK(report.bpp_baseline == report.bpp_pruned);
  CHECK(report.baseline_params.total == report.pruned_params.total);
  CHECK_THROWS_AS((void)compare(model, model, {}, 32, 32), ContractError);
}

TEST_CASE("halving every masked width lands the flop ratio in (1, 4]") {
  RngState rng(23);
  const CodecModel base = build_model(ChannelConfig::desk(), rng);
  const CodecModel masked = with_plan_gates(base, half_plan(base));
  const CodecModel pruned = prune(masked, half_plan(base));

  RngState img_rng(29);
  const auto images = random_images(2, 32, img_rng);
  const CostReport report = compare(base, pruned, images, 64, 64);

  CHECK(report.flops_ratio > 1.0);
  CHECK(report.flops_ratio <= 4.0);
  CHECK(report.params_ratio > 1.0);
  // The ratio is recomputable straight from the tables it carries.
  const double recount = static_cast<double>(count_flops(base, 64, 64).total) /
                         static_cast<double>(count_flops(pruned, 64, 64).total);
  CHECK(report.flops_ratio == recount);

  const CostReport swapped = compare(pruned, base, images, 64, 64);
  CHECK(swapped.flops_ratio == doctest::Approx(1.0 / report.flops_ratio).epsilon(1e-12));
  CHECK(swapped.params_ratio == doctest::Approx(1.0 / report.params_ratio).epsilon(1e-12));
  CHECK(swapped.psnr_baseline == report.psnr_pruned);
}

TEST_CASE("bench keeps exactly the requested timed rounds") {
  RngState rng(31);
  const CodecModel model = build_model(ChannelConfig::desk(), rng);

  const TimingReport single = bench(model, 32, 32, 2, 1);
  CHECK(single.samples_ms.size() == 1);
  CHECK(single.mean_ms == single.samples_ms[0]);
  CHECK(single.mean_ms > 0.0);

  const TimingReport several = bench(model, 32, 32, 1, 4);
  CHECK(several.warmup == 1);
  CHECK(several.rounds == 4);
  CHECK(several.samples_ms.size() == 4);
  double sum = 0.0;
  for (double s : several.samples_ms) {
    CHECK(s > 0.0);
    sum += s;
  }
  CHECK(several.mean_ms == doctest::Approx(sum / 4.0).epsilon(1e-12));

  CHECK_THROWS_AS((void)bench(model, 30, 30, 1, 1), GeometryError);
  CHECK_THROWS_AS((void)bench(model, 32, 32, -1, 1), ContractError);
  CHECK_THROWS_AS((void)bench(model, 32, 32, 1, 0), ContractError);
}

TEST_CASE("halving the network shows up as wall clock speedup") {
  RngState rng(37);
  const CodecModel base = build_model(ChannelConfig::desk(), rng);
  const CodecModel pruned = prune(with_plan_gates(base, half_plan(base)), half_plan(base));

  const TimingReport tb = bench(base, 96, 96, 3, 8);
  const TimingReport tp = bench(pruned, 96, 96, 3, 8);
  CHECK(speedup(tb, tp) > 1.0);
  CHECK(speedup(tp, tb) == doctest::Approx(1.0 / speedup(tb, tp)).epsilon(1e-12));
}

TEST_CASE("cost csv ends with a total row that sums its columns") {
  RngState rng(41);
  const CodecModel model = build_model(ChannelConfig::desk(), rng);
  const std::string csv = cost_csv(model, 64, 64);
  const auto lines = split_lines(csv);

  REQUIRE(lines.size() >= 4);
  CHECK(lines[0].rfind("# ", 0) == 0);
  CHECK(lines[1] == "layer,params,flops");
  CHECK(lines.back().rfind("total,", 0) == 0);

  long long params_sum = 0, flops_sum = 0;
  for (size_t i = 2; i + 1 < lines.size(); ++i) {
    const size_t c1 = lines[i].find(',');
    const size_t c2 = lines[i].find(',', c1 + 1);
    REQUIRE(c2 != std::string::npos);
    params_sum += std::stoll(lines[i].substr(c1 + 1, c2 - c1 - 1));
    flops_sum += std::stoll(lines[i].substr(c2 + 1));
  }
  CHECK(lines.back() ==
        "total," + std::to_string(params_sum) + "," + std::to_string(flops_sum));
  CHECK(params_sum == count_params(model).total);
  CHECK(flops_sum == count_flops(model, 64, 64).total);
  // Reruns are byte identical.
  CHECK(cost_csv(model, 64, 64) == csv);
}

TEST_CASE("comparison and timing csvs carry one row per subject") {
  RngState rng(43);
  const CodecModel base = build_model(ChannelConfig::desk(), rng);
  const CodecModel pruned = prune(with_plan_gates(base, half_plan(base)), half_plan(base));
  RngState img_rng(47);
  const auto images = random_images(2, 32, img_rng);

  const CostReport report = compare(base, pruned, images, 64, 64);
  const std::string ccsv = compare_csv(report, "half");
  const auto clines = split_lines(ccsv);
  REQUIRE(clines.size() == 3);
  CHECK(clines[1].rfind("quality,", 0) == 0);
  CHECK(clines[2].rfind("half,", 0) == 0);
  // Tagged row has the full column count.
  int commas = 0;
  for (char c : clines[2]) commas += c == ',';
  CHECK(commas == 7);

  const TimingReport tb = bench(base, 32, 32, 1, 2);
  const TimingReport tp = bench(pruned, 32, 32, 1, 2);
  const auto tlines = split_lines(timing_csv(tb, tp));
  REQUIRE(tlines.size() == 3);
  CHECK(tlines[0] == "model,warmup_rounds,timed_rounds,mean_ms,speedup");
  CHECK(tlines[1].rfind("baseline,1,2,", 0) == 0);
  CHECK(tlines[2].rfind("pruned,1,2,", 0) == 0);
}

TEST_CASE("flop chart draws one bar per layer") {
  RngState rng(53);
  const CodecModel model = build_model(ChannelConfig::desk(), rng);
  const std::string svg = flops_svg(model, 64, 64);
  CHECK(svg.rfind("<svg", 0) == 0);
  CHECK(svg.find("ga_conv0") != std::string::npos);
  CHECK(svg.find("gs_deconv3") != std::string::npos);
  CHECK(svg.find("entropy") != std::string::npos);
  const size_t rows = count_flops(model, 64, 64).rows.size();
  size_t bars = 0;
  for (size_t pos = svg.find("<rect"); pos != std::string::npos;
       pos = svg.find("<rect", pos + 1)) {
    ++bars;
  }
  // Background and frame rects plus one bar per row.
  CHECK(bars == rows + 2);
  CHECK(svg.substr(svg.size() - 7) == "</svg>\n");
}

}  // TEST_SUITE
