#ifndef ABCM_DATA_HPP
#define ABCM_DATA_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "abcm/rng.hpp"
#include "abcm/tensor.hpp"

namespace abcm {

// One 8-bit RGB image, interleaved row-major samples.
struct ImageRecord {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> samples;  // 3 * width * height bytes
  std::string source;
};

// True when the string is a synthetic:<seed>:<count>:<size> spec.
bool is_synthetic_spec(const std::string& spec);

// Deterministic texture images (smooth gradients plus Gaussian blobs),
// identical bytes for identical arguments.
std::vector<ImageRecord> synthetic_images(std::uint64_t seed, int count, int size);

// Parses a binary PPM (P6, maxval 255). Errors report the byte offset of
// the first malformed element.
ImageRecord parse_ppm(const std::vector<std::uint8_t>& bytes, const std::string& source);
ImageRecord load_ppm(const std::string& path);

// Synthetic spec, a single .ppm file, or a directory of .ppm files in
// lexicographic path order.
std::vector<ImageRecord> load_images(const std::string& path_or_spec);

// [3,H,W] float tensor in [0,1] (samples / 255).
Tensor to_tensor(const ImageRecord& image);
std::vector<Tensor> to_tensors(const std::vector<ImageRecord>& images);

}  // namespace abcm

#endif
