#include <doctest.h>

#include <cmath>
#include <cstring>

#include "abcm/codec.hpp"
#include "oracles.hpp"

using namespace abcm;
using oracles::close_rel;
using oracles::random_tensor;

namespace {

bool bit_equal(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape() &&
         std::memcmp(a.data().data(), b.data().data(),
                     static_cast<size_t>(a.numel()) * sizeof(float)) == 0;
}

double logistic_cdf(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

TEST_SUITE_BEGIN("codec_models");

TEST_CASE("channel config chains and validates endpoints") {
  auto cfg = ChannelConfig::from_pairs({{3, 35}, {35, 40}, {40, 33}, {33, 128}},
                                       {{128, 65}, {65, 53}, {53, 34}, {34, 3}});
  CHECK(cfg.ga_widths == std::vector<int>{3, 35, 40, 33, 128});
  CHECK(cfg.gs_widths == std::vector<int>{128, 65, 53, 34, 3});
  CHECK(cfg.latent_channels() == 128);
  CHECK(cfg.downsample_factor() == 16);

  // Broken chain.
  CHECK_THROWS_AS(ChannelConfig::from_pairs({{3, 8}, {9, 8}, {8, 8}, {8, 12}},
                                            {{12, 8}, {8, 8}, {8, 8}, {8, 3}}),
                  DimensionError);
  // Wrong endpoints.
  CHECK_THROWS_AS(ChannelConfig::from_pairs({{4, 8}, {8, 8}, {8, 8}, {8, 12}},
                                            {{12, 8}, {8, 8}, {8, 8}, {8, 3}}),
                  DimensionError);
  CHECK_THROWS_AS(ChannelConfig::from_pairs({{3, 8}, {8, 8}, {8, 8}, {8, 12}},
                                            {{12, 8}, {8, 8}, {8, 8}, {8, 4}}),
                  DimensionError);
  // Latent mismatch between the two sides.
  CHECK_THROWS_AS(ChannelConfig::from_pairs({{3, 8}, {8, 8}, {8, 8}, {8, 12}},
                                            {{10, 8}, {8, 8}, {8, 8}, {8, 3}}),
                  DimensionError);
  // Wrong stage count.
  CHECK_THROWS_AS(ChannelConfig::from_pairs({{3, 8}, {8, 12}},
                                            {{12, 8}, {8, 3}}),
                  DimensionError);
}

TEST_CASE("fresh model has the documented structure") {
  RngState rng(1);
  auto m = build_model(ChannelConfig::desk(), rng);
  CHECK(m.ga_convs.size() == 4);
  CHECK(m.ga_gdns.size() == 3);
  CHECK(m.gs_deconvs.size() == 4);
  CHECK(m.gs_gdns.size() == 3);
  REQUIRE(m.slots.size() == 6);
  for (int s = 0; s < 6; ++s) {
    CHECK(m.slot_channels(s) == (s < 3 ? m.config.ga_widths[s + 1] : m.config.gs_widths[s - 2]));
    CHECK(m.slots[s].alpha.dim(0) == m.slot_channels(s));
    for (float a : m.slots[s].alpha.data()) CHECK(a == 0.5f);
  }
  CHECK(m.parameters().size() == 36);
  CHECK(m.entropy.mu.dim(0) == 12);

  auto ungated = build_model(ChannelConfig::desk(), rng, Gating::None);
  CHECK(ungated.slots.empty());
  CHECK(ungated.parameters().size() == 30);
}

TEST_CASE("analysis maps zero images to zero latents") {
  RngState rng(2);
  auto m = build_model(ChannelConfig::desk(), rng);
  auto latent = analyze(m, Tensor::zeros({1, 3, 32, 32}));
  for (float v : latent.data()) CHECK(v == 0.0f);
  auto recon = synthesize(m, Tensor::zeros({1, 12, 2, 2}));
  for (float v : recon.data()) CHECK(v == 0.0f);
}

TEST_CASE("transform geometry scales by the stride product") {
  RngState rng(3);
  auto m = build_model(ChannelConfig::desk(), rng);
  auto x = random_tensor({1, 3, 64, 64}, rng, 0, 1, false);
  auto y = analyze(m, x);
  CHECK(y.shape() == Shape{1, 12, 4, 4});
  auto back = synthesize(m, y);
  CHECK(back.shape() == Shape{1, 3, 64, 64});

  for (int hw : {16, 48}) {
    auto xi = random_tensor({2, 3, hw, hw}, rng, 0, 1, false);
    auto yi = analyze(m, xi);
    CHECK(yi.shape() == Shape{2, 12, hw / 16, hw / 16});
    auto ri = synthesize(m, yi);
    CHECK(ri.shape() == xi.shape());
  }

  CHECK_THROWS_AS(analyze(m, random_tensor({1, 3, 24, 32}, rng, 0, 1, false)), GeometryError);
  CHECK_THROWS_AS(analyze(m, random_tensor({1, 1, 32, 32}, rng, 0, 1, false)), DimensionError);
  CHECK_THROWS_AS(synthesize(m, random_tensor({1, 5, 2, 2}, rng, 0, 1, false)), DimensionError);
}

TEST_CASE("all-ones masks change nothing against disabled masking") {
  RngState rng(4);
  auto m = build_model(ChannelConfig::desk(), rng);
  auto x = random_tensor({1, 3, 32, 32}, rng, 0, 1, false);

  ForwardOptions off;
  off.masks = MaskMode::Disabled;
  std::vector<Tensor> ones;
  for (int s = 0; s < 6; ++s) ones.push_back(Tensor::full({m.slot_channels(s)}, 1.0f));
  ForwardOptions ov;
  ov.masks = MaskMode::Override;
  ov.mask_override = &ones;

  auto y_off = analyze(m, x, off);
  auto y_ones = analyze(m, x, ov);
  CHECK(bit_equal(y_off, y_ones));

  // Fresh gates are all-on too.
  auto y_gated = analyze(m, x);
  CHECK(bit_equal(y_off, y_gated));

  auto r_off = synthesize(m, y_off, off);
  auto r_ones = synthesize(m, y_off, ov);
  CHECK(bit_equal(r_off, r_ones));

  std::vector<Tensor> five(5);
  ForwardOptions bad;
  bad.masks = MaskMode::Override;
  bad.mask_override = &five;
  CHECK_THROWS_AS(analyze(m, x, bad), ContractError);
}

TEST_CASE("quantize rounds half to even in eval") {
  auto y = Tensor::from_vector({1, 1, 2, 4},
                               {1.4f, -2.5f, 2.5f, 0.5f, 1.5f, -0.5f, -1.5f, 3.49f});
  auto q = quantize(y, Phase::Eval);
  const float want[8] = {1.0f, -2.0f, 2.0f, 0.0f, 2.0f, 0.0f, -2.0f, 3.0f};
  for (int i = 0; i < 8; ++i) CHECK(q.data()[i] == want[i]);
  CHECK_FALSE(q.requires_grad());
}

TEST_CASE("quantize train noise is bounded and reproducible") {
  RngState rng(55);
  auto y = random_tensor({2, 3, 4, 4}, rng, -5, 5, false);
  RngState q1(9), q2(9), q3(10);
  auto a = quantize(y, Phase::Train, &q1);
  auto b = quantize(y, Phase::Train, &q2);
  auto c = quantize(y, Phase::Train, &q3);
  for (std::int64_t i = 0; i < y.numel(); ++i) {
    const float d = a.data()[i] - y.data()[i];
    CHECK(d >= -0.5f);
    CHECK(d < 0.5f);
  }
  CHECK(bit_equal(a, b));
  CHECK_FALSE(bit_equal(a, c));

  CHECK_THROWS_AS(quantize(y, Phase::Train, nullptr), ContractError);
  auto bad = Tensor::from_vector({1, 1, 1, 1}, {INFINITY});
  CHECK_THROWS_AS(quantize(bad, Phase::Eval), NumericError);
}

TEST_CASE("rate of a centered element matches the closed form") {
  auto y = Tensor::zeros({1, 1, 1, 1});
  auto mu = Tensor::zeros({1});
  auto b = Tensor::full({1}, 1.0f);
  const double mass = logistic_cdf(0.5) - logistic_cdf(-0.5);
  const double want = -std::log2(mass);
  auto rate = logistic_rate_bits(y, mu, b);
  CHECK(rate.item() == doctest::Approx(want).epsilon(1e-6));
  CHECK(rate.item() == doctest::Approx(2.0297).epsilon(1e-3));
  CHECK(mass == doctest::Approx(0.2449).epsilon(1e-3));

  // Through the entropy-model wrapper with its reparameterized scale.
  EntropyModel em;
  em.mu = Tensor::zeros({1});
  em.b_raw = Tensor::full({1}, 1.0f);
  CHECK(rate_bits(em, y).item() == doctest::Approx(want).epsilon(1e-4));
}

TEST_CASE("an empty bin clamps to 32 bits") {
  auto y = Tensor::full({1, 1, 1, 1}, 1000.0f);
  auto rate = logistic_rate_bits(y, Tensor::zeros({1}), Tensor::full({1}, 1.0f));
  CHECK(rate.item() == 32.0f);

  // Clamped bins contribute no gradient.
  auto mu = Tensor::zeros({1}, true);
  backward(logistic_rate_bits(y, mu, Tensor::full({1}, 1.0f)));
  CHECK(mu.grad()[0] == 0.0f);
}

TEST_CASE("total rate is the sum of per-element rates and stays in bounds") {
  RngState rng(66);
  auto y = random_tensor({2, 3, 2, 2}, rng, -4, 4, false);
  auto q = quantize(y, Phase::Eval);
  auto mu = random_tensor({3}, rng, -1, 1, false);
  auto b = random_tensor({3}, rng, 0.3f, 1.5f, false);
  const double total = logistic_rate_bits(q, mu, b).item();

  double elementwise = 0.0;
  for (int bi = 0; bi < 2; ++bi)
    for (int c = 0; c < 3; ++c)
      for (int i = 0; i < 4; ++i) {
        const float v = q.data()[(static_cast<size_t>(bi) * 3 + c) * 4 + i];
        auto one = Tensor::from_vector({1, 1, 1, 1}, {v});
        auto mc = Tensor::from_vector({1}, {mu.data()[c]});
        auto bc = Tensor::from_vector({1}, {b.data()[c]});
        elementwise += logistic_rate_bits(one, mc, bc).item();
      }
  CHECK(close_rel(total, elementwise, 1e-5, 1.0));
  CHECK(total >= 0.0);
  CHECK(total <= 32.0 * 24);

  CHECK_THROWS_AS(logistic_rate_bits(q, mu, Tensor::zeros({3})), ContractError);
  CHECK_THROWS_AS(logistic_rate_bits(q, Tensor::zeros({4}), b), DimensionError);
}

TEST_CASE("rate gradients match finite differences") {
  RngState rng(71);
  auto y = random_tensor({1, 2, 3, 3}, rng, -3, 3, true);
  auto mu = random_tensor({2}, rng, -0.5f, 0.5f, true);
  auto b = random_tensor({2}, rng, 0.4f, 1.2f, true);
  auto build = [&]() { return logistic_rate_bits(y, mu, b); };
  RngState pick(21);
  auto m = oracles::check_gradients({y, mu, b}, build, pick, 12, 1e-3, 1e-2, 0.1);
  REQUIRE_MESSAGE(m.ok, "leaf ", m.leaf, " index ", m.index, ": ", m.analytic, " vs ",
                  m.numeric);
}

TEST_CASE("distortion is scaled mean squared error") {
  RngState rng(81);
  auto x = random_tensor({1, 3, 4, 4}, rng, 0, 1, false);
  CHECK(distortion_mse(x, x).item() == 0.0f);

  auto zero = Tensor::zeros({1, 1, 1, 1});
  auto one = Tensor::full({1, 1, 1, 1}, 1.0f);
  CHECK(distortion_mse(zero, one).item() == 65025.0f);

  // Independent reference: reverse-order double accumulation.
  auto a = random_tensor({2, 3, 5, 5}, rng, 0, 1, false);
  auto bb = random_tensor({2, 3, 5, 5}, rng, 0, 1, false);
  double acc = 0.0;
  for (std::int64_t i = a.numel() - 1; i >= 0; --i) {
    const double d = static_cast<double>(a.data()[i]) - bb.data()[i];
    acc += d * d;
  }
  const double want = 65025.0 * acc / static_cast<double>(a.numel());
  CHECK(close_rel(distortion_mse(a, bb).item(), want, 1e-6, 1e-9));

  CHECK_THROWS_AS(distortion_mse(x, zero), DimensionError);
}

TEST_CASE("psnr follows the decibel definition") {
  CHECK(psnr(65025.0) == doctest::Approx(0.0));
  CHECK(psnr(650.25) == doctest::Approx(20.0));
  CHECK(psnr(1.0) == doctest::Approx(10.0 * std::log10(65025.0)));
  CHECK(psnr(1.0) == doctest::Approx(48.13).epsilon(1e-3));
  CHECK_THROWS_AS(psnr(0.0), NumericError);
  CHECK_THROWS_AS(psnr(-3.0), NumericError);
}

TEST_CASE("bits per pixel normalizes by batch and area") {
  auto img1 = Tensor::zeros({1, 3, 256, 256});
  CHECK(bpp(65536.0, img1) == doctest::Approx(1.0));
  CHECK(bpp(0.0, img1) == 0.0);
  auto img2 = Tensor::zeros({2, 3, 256, 256});
  CHECK(bpp(65536.0, img2) == doctest::Approx(0.5));
}

TEST_CASE("full pass is deterministic under a fixed seed") {
  RngState rng(90);
  auto m = build_model(ChannelConfig::desk(), rng);
  auto x = random_tensor({1, 3, 32, 32}, rng, 0, 1, false);
  ForwardOptions fo;
  fo.phase = Phase::Train;
  RngState r1(7), r2(7);
  auto a = run_codec(m, x, fo, &r1);
  auto b = run_codec(m, x, fo, &r2);
  CHECK(bit_equal(a.y, b.y));
  CHECK(bit_equal(a.y_hat, b.y_hat));
  CHECK(bit_equal(a.x_hat, b.x_hat));
  CHECK(a.rate.item() == b.rate.item());
  CHECK(a.bpp_value == b.bpp_value);
  CHECK(a.masks.size() == 6);
}

TEST_CASE("joint rate-distortion gradients pass finite-difference spot checks") {
  RngState rng(1234);
  auto m = build_model(ChannelConfig::desk(), rng);
  // Small image and weight keep the loss magnitude low enough that the
  // finite-difference quotient is not swamped by float32 roundoff.
  auto x = random_tensor({1, 3, 16, 16}, rng, 0, 1, false);

  auto build = [&]() {
    RngState q(777);
    ForwardOptions fo;
    fo.phase = Phase::Train;
    auto y = analyze(m, x, fo);
    auto yq = quantize(y, Phase::Train, &q);
    auto rate = rate_bits(m.entropy, yq);
    auto xh = synthesize(m, yq, fo);
    auto dist = distortion_mse(x, xh);
    return add(rate, affine(dist, 0.001f, 0.0f));
  };

  // All transform and entropy parameters; the gate importances are excluded
  // because their straight-through surrogate deliberately disagrees with the
  // true (flat) derivative.
  auto params = m.parameters();
  params.resize(params.size() - m.slots.size());
  RngState pick(31);
  auto r = oracles::check_gradients(params, build, pick, 12, 3e-3, 2e-2, 0.2);
  REQUIRE_MESSAGE(r.ok, "leaf ", r.leaf, " index ", r.index, ": ", r.analytic, " vs ",
                  r.numeric);
}

TEST_CASE("effective channel report tracks the hard gates") {
  RngState rng(10);
  auto m = build_model(ChannelConfig::desk(), rng);
  auto usage = effective_channels(m);
  REQUIRE(usage.slots.size() == 6);
  for (const auto& s : usage.slots) CHECK(s.keep == s.total);
  CHECK(usage.mean_ratio == doctest::Approx(1.0));
  CHECK(usage.slots[0].layer == "ga0");
  CHECK(usage.slots[3].layer == "gs0");

  // Force one slot fully off, another half off.
  auto a1 = m.slots[1].alpha.mutable_data();
  for (size_t i = 0; i < a1.size(); ++i) a1[i] = -1.0f;
  auto a4 = m.slots[4].alpha.mutable_data();
  for (size_t i = 0; i < a4.size(); ++i) a4[i] = (i % 2 == 0) ? 1.0f : -1.0f;
  usage = effective_channels(m);
  CHECK(usage.slots[1].keep == 0);
  CHECK(usage.slots[4].keep == 4);

  double hand = 0.0;
  for (const auto& s : usage.slots) hand += static_cast<double>(s.keep) / s.total;
  hand /= 6.0;
  CHECK(usage.mean_ratio == doctest::Approx(hand).epsilon(1e-12));

  auto plain = build_model(ChannelConfig::desk(), rng, Gating::None);
  auto u2 = effective_channels(plain);
  CHECK(u2.slots.empty());
  CHECK(u2.mean_ratio == 1.0);
}

TEST_SUITE_END();
