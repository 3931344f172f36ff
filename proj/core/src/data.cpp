#include "abcm/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "abcm/errors.hpp"

namespace abcm {

namespace {

constexpr const char* kSyntheticPrefix = "synthetic:";

float clamp01(float v) { return v < 0.0f ? 0.0f : (v > 1.0f ? 1.0f : v); }

// Parses a decimal field of a synthetic spec; offset points at the field.
std::uint64_t spec_field(const std::string& spec, size_t begin, size_t end) {
  std::uint64_t value = 0;
  auto [ptr, ec] = std::from_chars(spec.data() + begin, spec.data() + end, value);
  if (ec != std::errc{} || ptr != spec.data() + end || begin == end) {
    throw ParseError("synthetic spec: bad numeric field in '" + spec + "'",
                     static_cast<std::int64_t>(begin));
  }
  return value;
}

}  // namespace

bool is_synthetic_spec(const std::string& spec) {
  return spec.rfind(kSyntheticPrefix, 0) == 0;
}

std::vector<ImageRecord> synthetic_images(std::uint64_t seed, int count, int size) {
  if (count < 1 || size < 1) throw ContractError("synthetic_images: count and size must be >= 1");
  std::vector<ImageRecord> out;
  out.reserve(static_cast<size_t>(count));
  RngState rng(seed);
  const float s = static_cast<float>(size);
  for (int n = 0; n < count; ++n) {
    RngState img = rng.split(static_cast<std::uint64_t>(n));
    float base[3], gx[3], gy[3];
    for (int c = 0; c < 3; ++c) {
      base[c] = img.uniform_range(0.25f, 0.75f);
      gx[c] = img.uniform_range(-0.4f, 0.4f);
      gy[c] = img.uniform_range(-0.4f, 0.4f);
    }
    struct Blob {
      float cx, cy, inv2r2, amp[3];
    };
    std::vector<Blob> blobs(2 + img.uniform_index(4));
    for (auto& b : blobs) {
      b.cx = img.uniform() * s;
      b.cy = img.uniform() * s;
      const float r = img.uniform_range(s / 8.0f, s / 3.0f);
      b.inv2r2 = 1.0f / (2.0f * r * r);
      for (int c = 0; c < 3; ++c) b.amp[c] = img.uniform_range(-0.5f, 0.5f);
    }
    ImageRecord rec;
    rec.width = size;
    rec.height = size;
    rec.samples.resize(static_cast<size_t>(3) * size * size);
    {
      std::ostringstream name;
      name << kSyntheticPrefix << seed << ":" << count << ":" << size << "#" << n;
      rec.source = name.str();
    }
    size_t idx = 0;
    for (int y = 0; y < size; ++y) {
      for (int x = 0; x < size; ++x) {
        const float fx = (static_cast<float>(x) - s * 0.5f) / s;
        const float fy = (static_cast<float>(y) - s * 0.5f) / s;
        for (int c = 0; c < 3; ++c) {
          float v = base[c] + gx[c] * fx + gy[c] * fy;
          for (const auto& b : blobs) {
            const float dx = static_cast<float>(x) - b.cx;
            const float dy = static_cast<float>(y) - b.cy;
            v += b.amp[c] * std::exp(-(dx * dx + dy * dy) * b.inv2r2);
          }
          rec.samples[idx++] =
              static_cast<std::uint8_t>(std::lround(clamp01(v) * 255.0f));
        }
      }
    }
    out.push_back(std::move(rec));
  }
  return out;
}

namespace {

std::vector<ImageRecord> parse_synthetic_spec(const std::string& spec) {
  // synthetic:<seed>:<count>:<size>
  const size_t p0 = std::strlen(kSyntheticPrefix);
  const size_t c1 = spec.find(':', p0);
  if (c1 == std::string::npos)
    throw ParseError("synthetic spec: expected 3 ':'-separated fields",
                     static_cast<std::int64_t>(spec.size()));
  const size_t c2 = spec.find(':', c1 + 1);
  if (c2 == std::string::npos)
    throw ParseError("synthetic spec: expected 3 ':'-separated fields",
                     static_cast<std::int64_t>(spec.size()));
  const std::uint64_t seed = spec_field(spec, p0, c1);
  const std::uint64_t count = spec_field(spec, c1 + 1, c2);
  const std::uint64_t size = spec_field(spec, c2 + 1, spec.size());
  if (count < 1 || count > 100000)
    throw ParseError("synthetic spec: count out of range", static_cast<std::int64_t>(c1 + 1));
  if (size < 1 || size > 16384)
    throw ParseError("synthetic spec: size out of range", static_cast<std::int64_t>(c2 + 1));
  return synthetic_images(seed, static_cast<int>(count), static_cast<int>(size));
}

bool is_ppm_space(std::uint8_t c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

}  // namespace

ImageRecord parse_ppm(const std::vector<std::uint8_t>& bytes, const std::string& source) {
  const size_t n = bytes.size();
  auto fail = [&](size_t offset, const std::string& what) -> void {
    throw ParseError(source + ": " + what, static_cast<std::int64_t>(offset));
  };
  if (n < 2 || bytes[0] != 'P' || bytes[1] != '6') fail(0, "expected P6 magic");

  size_t pos = 2;
  auto skip_space = [&]() {
    while (pos < n) {
      if (is_ppm_space(bytes[pos])) {
        ++pos;
      } else if (bytes[pos] == '#') {
        while (pos < n && bytes[pos] != '\n') ++pos;
      } else {
        break;
      }
    }
  };
  auto read_int = [&](const char* what) -> long {
    skip_space();
    const size_t start = pos;
    long value = 0;
    while (pos < n && bytes[pos] >= '0' && bytes[pos] <= '9') {
      value = value * 10 + (bytes[pos] - '0');
      if (value > 1000000000L) fail(start, std::string(what) + " out of range");
      ++pos;
    }
    if (pos == start) fail(start, std::string("expected ") + what);
    return value;
  };

  const long width = read_int("width");
  const long height = read_int("height");
  const size_t maxval_at = pos;
  const long maxval = read_int("maxval");
  if (width < 1 || height < 1) fail(2, "dimensions must be positive");
  if (maxval != 255) fail(maxval_at, "unsupported maxval (only 255)");
  if (pos >= n || !is_ppm_space(bytes[pos])) fail(pos, "expected single whitespace after maxval");
  ++pos;

  const size_t expected = static_cast<size_t>(3) * width * height;
  if (n - pos < expected) {
    std::ostringstream msg;
    msg << "payload truncated: expected " << expected << " bytes, got " << (n - pos);
    fail(pos, msg.str());
  }
  ImageRecord rec;
  rec.width = static_cast<int>(width);
  rec.height = static_cast<int>(height);
  rec.samples.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                     bytes.begin() + static_cast<std::ptrdiff_t>(pos + expected));
  rec.source = source;
  return rec;
}

ImageRecord load_ppm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return parse_ppm(bytes, path);
}

std::vector<ImageRecord> load_images(const std::string& path_or_spec) {
  if (is_synthetic_spec(path_or_spec)) return parse_synthetic_spec(path_or_spec);

  namespace fs = std::filesystem;
  fs::path p(path_or_spec);
  if (fs::is_regular_file(p)) return {load_ppm(path_or_spec)};
  if (!fs::is_directory(p)) throw IoError("no such file or directory: " + path_or_spec);

  std::vector<std::string> paths;
  for (const auto& entry : fs::directory_iterator(p)) {
    if (!entry.is_regular_file()) continue;
    auto ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (ext == ".ppm") paths.push_back(entry.path().string());
  }
  if (paths.empty()) throw IoError("no .ppm files in " + path_or_spec);
  std::sort(paths.begin(), paths.end());
  std::vector<ImageRecord> out;
  out.reserve(paths.size());
  for (const auto& path : paths) out.push_back(load_ppm(path));
  return out;
}

Tensor to_tensor(const ImageRecord& image) {
  if (image.width < 1 || image.height < 1 ||
      image.samples.size() != static_cast<size_t>(3) * image.width * image.height) {
    throw DimensionError("image record has inconsistent sample count");
  }
  const int w = image.width, h = image.height;
  std::vector<float> v(static_cast<size_t>(3) * w * h);
  const float inv = 1.0f / 255.0f;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c)
        v[(static_cast<size_t>(c) * h + y) * w + x] =
            static_cast<float>(image.samples[(static_cast<size_t>(y) * w + x) * 3 + c]) * inv;
  return Tensor::from_vector({3, h, w}, std::move(v));
}

std::vector<Tensor> to_tensors(const std::vector<ImageRecord>& images) {
  std::vector<Tensor> out;
  out.reserve(images.size());
  for (const auto& im : images) out.push_back(to_tensor(im));
  return out;
}

}  // namespace abcm
