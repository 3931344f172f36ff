#ifndef ABCM_TESTS_ORACLES_HPP
#define ABCM_TESTS_ORACLES_HPP

// Reference implementations the tests trust. Written independently of the
// production kernels: direct gather loops with bounds checks, double
// accumulation, no shared helpers. Keep them dumb.

#include <cmath>
#include <cstddef>
#include <functional>
#include <vector>

#include "abcm/rng.hpp"
#include "abcm/tensor.hpp"

namespace oracles {

// Direct cross-correlation, one gather per output element.
inline std::vector<float> reference_conv2d(const std::vector<float>& in, int B, int Cin,
                                           int H, int W, const std::vector<float>& ker,
                                           int Cout, int k, const std::vector<float>& bias,
                                           int s, int p, int Hout, int Wout) {
  std::vector<float> out(static_cast<size_t>(B) * Cout * Hout * Wout);
  for (int b = 0; b < B; ++b)
    for (int co = 0; co < Cout; ++co)
      for (int oy = 0; oy < Hout; ++oy)
        for (int ox = 0; ox < Wout; ++ox) {
          double acc = bias[co];
          for (int ci = 0; ci < Cin; ++ci)
            for (int ky = 0; ky < k; ++ky)
              for (int kx = 0; kx < k; ++kx) {
                const int iy = oy * s - p + ky;
                const int ix = ox * s - p + kx;
                if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
                const double w = ker[((static_cast<size_t>(co) * Cin + ci) * k + ky) * k + kx];
                const double v = in[((static_cast<size_t>(b) * Cin + ci) * H + iy) * W + ix];
                acc += w * v;
              }
          out[((static_cast<size_t>(b) * Cout + co) * Hout + oy) * Wout + ox] =
              static_cast<float>(acc);
        }
  return out;
}

inline bool close_rel(double a, double b, double rtol, double floor_scale) {
  const double scale = std::max({std::fabs(a), std::fabs(b), floor_scale});
  return std::fabs(a - b) <= rtol * scale;
}

// Central difference of a scalar-valued rebuild around one coordinate of a
// leaf. The closure must rebuild the graph from current leaf values.
inline double central_difference(const std::function<double()>& eval, abcm::Tensor& leaf,
                                 size_t index, double h) {
  const float saved = leaf.mutable_data()[index];
  leaf.mutable_data()[index] = static_cast<float>(saved + h);
  const double fp = eval();
  leaf.mutable_data()[index] = static_cast<float>(saved - h);
  const double fm = eval();
  leaf.mutable_data()[index] = saved;
  return (fp - fm) / (2.0 * h);
}

struct GradMismatch {
  bool ok = true;
  size_t leaf = 0;
  size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

// Compares analytic gradients of `build` against central differences at
// `samples` random coordinates spread over the leaves.
inline GradMismatch check_gradients(std::vector<abcm::Tensor> leaves,
                                    const std::function<abcm::Tensor()>& build,
                                    abcm::RngState& rng, int samples, double h,
                                    double rtol, double floor_scale) {
  for (auto& l : leaves) l.zero_grad();
  abcm::backward(build());
  auto eval = [&]() {
    abcm::NoGradGuard ng;
    return static_cast<double>(build().item());
  };
  for (int n = 0; n < samples; ++n) {
    const size_t li = rng.uniform_index(static_cast<std::uint32_t>(leaves.size()));
    auto& leaf = leaves[li];
    const size_t idx = rng.uniform_index(static_cast<std::uint32_t>(leaf.numel()));
    const double analytic = leaf.grad()[idx];
    const double numeric = central_difference(eval, leaf, idx, h);
    if (!close_rel(analytic, numeric, rtol, floor_scale))
      return {false, li, idx, analytic, numeric};
  }
  return {};
}

inline abcm::Tensor random_tensor(abcm::Shape shape, abcm::RngState& rng, float lo,
                                  float hi, bool requires_grad) {
  std::vector<float> v(abcm::shape_numel(shape));
  for (auto& x : v) x = rng.uniform_range(lo, hi);
  return abcm::Tensor::from_vector(std::move(shape), std::move(v), requires_grad);
}

}  // namespace oracles

#endif  // ABCM_TESTS_ORACLES_HPP
