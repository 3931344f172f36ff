#ifndef ABCM_SERIALIZE_HPP
#define ABCM_SERIALIZE_HPP

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "abcm/codec.hpp"

namespace abcm {

inline constexpr const char* kToolVersion = "0.1.0";
inline constexpr std::uint16_t kContainerVersion = 1;

// Free-form provenance recorded as `meta.<key> = value` manifest lines.
// Ignored on load; keys must not contain '=' or whitespace, values no
// newlines.
using MetaPairs = std::vector<std::pair<std::string, std::string>>;

// Container layout, all integers little-endian:
//   bytes 0..3   magic "ABCM"
//   bytes 4..5   container version, u16
//   bytes 6..9   manifest byte length, u32
//   manifest     UTF-8 `key = value` lines: format, tool_version, kernel,
//                stride, ga_widths, gs_widths, gate_mode, epsilon, tau,
//                keep.0..keep.5 when the model records a pruning plan,
//                meta.* provenance, and one `tensor.N = name d0 d1 ...`
//                line per parameter
//   payload      float32 values for each tensor, in manifest order
std::string serialize_model(const CodecModel& model, const MetaPairs& meta = {});
CodecModel deserialize_model(const std::string& bytes);

void save_model(const CodecModel& model, const std::string& path,
                const MetaPairs& meta = {});
CodecModel load_model(const std::string& path);

}  // namespace abcm

#endif
