#include "abcm/serialize.hpp"

#include <charconv>
#include <cstring>
#include <fstream>
#include <map>
#include <vector>

#include "abcm/errors.hpp"

namespace abcm {
namespace {

struct TensorSpec {
  std::string name;
  Shape shape;
};

// Single source of truth for what a container holds and in which order;
// save and load both walk this list.
std::vector<TensorSpec> tensor_layout(const ChannelConfig& cfg, Gating gating) {
  const int k = cfg.kernel;
  std::vector<TensorSpec> specs;
  for (int i = 0; i < 4; ++i) {
    const std::string base = "ga_conv" + std::to_string(i);
    specs.push_back({base + ".kernel", {cfg.ga_widths[i + 1], cfg.ga_widths[i], k, k}});
    specs.push_back({base + ".bias", {cfg.ga_widths[i + 1]}});
    if (i < 3) {
      const std::string gdn = "ga_gdn" + std::to_string(i);
      const int c = cfg.ga_widths[i + 1];
      specs.push_back({gdn + ".beta", {c}});
      specs.push_back({gdn + ".gamma", {c, c}});
    }
  }
  for (int i = 0; i < 4; ++i) {
    const std::string base = "gs_deconv" + std::to_string(i);
    specs.push_back({base + ".kernel", {cfg.gs_widths[i], cfg.gs_widths[i + 1], k, k}});
    specs.push_back({base + ".bias", {cfg.gs_widths[i + 1]}});
    if (i < 3) {
      const std::string gdn = "gs_gdn" + std::to_string(i);
      const int c = cfg.gs_widths[i + 1];
      specs.push_back({gdn + ".beta", {c}});
      specs.push_back({gdn + ".gamma", {c, c}});
    }
  }
  specs.push_back({"entropy.mu", {cfg.latent_channels()}});
  specs.push_back({"entropy.b", {cfg.latent_channels()}});
  if (gating != Gating::None) {
    for (int s = 0; s < 6; ++s) {
      const int c = s < 3 ? cfg.ga_widths[s + 1] : cfg.gs_widths[s - 2];
      const std::string base = "gate_" + CodecModel::slot_name(s);
      if (gating == Gating::Deterministic) {
        specs.push_back({base + ".alpha", {c}});
      } else {
        specs.push_back({base + ".logits", {2, c}});
      }
    }
  }
  return specs;
}

// Model tensors in the same order as tensor_layout.
std::vector<Tensor> tensor_values(const CodecModel& model) {
  std::vector<Tensor> out;
  for (int i = 0; i < 4; ++i) {
    out.push_back(model.ga_convs[i].kernel);
    out.push_back(model.ga_convs[i].bias);
    if (i < 3) {
      out.push_back(model.ga_gdns[i].beta_raw);
      out.push_back(model.ga_gdns[i].gamma_raw);
    }
  }
  for (int i = 0; i < 4; ++i) {
    out.push_back(model.gs_deconvs[i].kernel);
    out.push_back(model.gs_deconvs[i].bias);
    if (i < 3) {
      out.push_back(model.gs_gdns[i].beta_raw);
      out.push_back(model.gs_gdns[i].gamma_raw);
    }
  }
  out.push_back(model.entropy.mu);
  out.push_back(model.entropy.b_raw);
  if (model.gating != Gating::None) {
    for (int s = 0; s < 6; ++s) {
      out.push_back(model.gating == Gating::Deterministic ? model.slots[s].alpha
                                                          : model.slots[s].logits);
    }
  }
  return out;
}

std::string format_float(float v) {
  char buf[48];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string join_ints(const std::vector<int>& values) {
  std::string out;
  for (size_t i = 0; i < values.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(values[i]);
  }
  return out;
}

std::vector<int> split_ints(const std::string& text) {
  std::vector<int> out;
  size_t pos = 0;
  while (pos <= text.size()) {
    size_t comma = text.find(',', pos);
    if (comma == std::string::npos) comma = text.size();
    const std::string piece = text.substr(pos, comma - pos);
    int value = 0;
    auto res = std::from_chars(piece.data(), piece.data() + piece.size(), value);
    if (res.ec != std::errc() || res.ptr != piece.data() + piece.size()) {
      throw ParseError("not an integer list element: '" + piece + "'");
    }
    out.push_back(value);
    pos = comma + 1;
  }
  return out;
}

const char* gate_mode_name(Gating gating) {
  switch (gating) {
    case Gating::None: return "none";
    case Gating::Deterministic: return "deterministic";
    case Gating::Stochastic: return "stochastic";
  }
  return "none";
}

Gating parse_gate_mode(const std::string& name) {
  if (name == "none") return Gating::None;
  if (name == "deterministic") return Gating::Deterministic;
  if (name == "stochastic") return Gating::Stochastic;
  throw ParseError("unknown gate_mode '" + name + "'");
}

void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xFF));
  out.push_back(static_cast<char>((v >> 8) & 0xFF));
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_f32(std::string& out, float v) {
  std::uint32_t u = 0;
  std::memcpy(&u, &v, sizeof(u));
  put_u32(out, u);
}

std::uint32_t get_u32(const std::string& bytes, size_t pos) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) {
    v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[pos + i])) << (8 * i);
  }
  return v;
}

float get_f32(const std::string& bytes, size_t pos) {
  const std::uint32_t u = get_u32(bytes, pos);
  float v = 0.0f;
  std::memcpy(&v, &u, sizeof(v));
  return v;
}

int parse_int(const std::string& text) {
  int value = 0;
  auto res = std::from_chars(text.data(), text.data() + text.size(), value);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
    throw ParseError("not an integer: '" + text + "'");
  }
  return value;
}

float parse_float(const std::string& text) {
  float value = 0.0f;
  auto res = std::from_chars(text.data(), text.data() + text.size(), value);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
    throw ParseError("not a number: '" + text + "'");
  }
  return value;
}

std::string trim(const std::string& s) {
  size_t b = 0, e = s.size();
  while (b < e && (s[b] == ' ' || s[b] == '\t')) ++b;
  while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r')) --e;
  return s.substr(b, e - b);
}

}  // namespace

std::string serialize_model(const CodecModel& model, const MetaPairs& meta) {
  model.config.validate();
  const auto specs = tensor_layout(model.config, model.gating);
  const auto values = tensor_values(model);

  std::string manifest;
  manifest += "format = abcm-model\n";
  manifest += std::string("tool_version = ") + kToolVersion + "\n";
  manifest += "kernel = " + std::to_string(model.config.kernel) + "\n";
  manifest += "stride = " + std::to_string(model.config.stride) + "\n";
  manifest += "ga_widths = " + join_ints(model.config.ga_widths) + "\n";
  manifest += "gs_widths = " + join_ints(model.config.gs_widths) + "\n";
  manifest += std::string("gate_mode = ") + gate_mode_name(model.gating) + "\n";
  manifest += "epsilon = " + format_float(model.gate_epsilon) + "\n";
  manifest += "tau = " + format_float(model.gate_tau) + "\n";
  if (model.pruned_from) {
    for (size_t s = 0; s < model.pruned_from->keep.size(); ++s) {
      manifest += "keep." + std::to_string(s) + " = " +
                  join_ints(model.pruned_from->keep[s]) + "\n";
    }
  }
  for (const auto& [key, value] : meta) {
    if (key.empty() || key.find_first_of("= \t\n") != std::string::npos ||
        value.find('\n') != std::string::npos) {
      throw ContractError("meta entry '" + key + "' cannot be written as a manifest line");
    }
    manifest += "meta." + key + " = " + value + "\n";
  }
  for (size_t i = 0; i < specs.size(); ++i) {
    manifest += "tensor." + std::to_string(i) + " = " + specs[i].name;
    for (int d : specs[i].shape) manifest += " " + std::to_string(d);
    manifest += "\n";
  }

  std::string out = "ABCM";
  put_u16(out, kContainerVersion);
  put_u32(out, static_cast<std::uint32_t>(manifest.size()));
  out += manifest;
  for (size_t i = 0; i < specs.size(); ++i) {
    if (values[i].shape() != specs[i].shape) {
      throw ContractError("tensor '" + specs[i].name +
                          "' does not match the model's configuration");
    }
    for (float v : values[i].data()) put_f32(out, v);
  }
  return out;
}

CodecModel deserialize_model(const std::string& bytes) {
  if (bytes.size() < 4 || bytes.compare(0, 4, "ABCM") != 0) {
    throw ParseError("bad magic, not a model container", 0);
  }
  if (bytes.size() < 10) {
    throw ParseError("truncated container header", static_cast<long long>(bytes.size()));
  }
  const std::uint16_t version =
      static_cast<std::uint16_t>(static_cast<unsigned char>(bytes[4]) |
                                 (static_cast<unsigned char>(bytes[5]) << 8));
  if (version != kContainerVersion) {
    throw ParseError("unsupported container version " + std::to_string(version), 4);
  }
  const std::uint32_t manifest_len = get_u32(bytes, 6);
  if (bytes.size() < 10 + static_cast<size_t>(manifest_len)) {
    throw ParseError("manifest length " + std::to_string(manifest_len) +
                         " exceeds file size",
                     6);
  }
  const std::string manifest = bytes.substr(10, manifest_len);

  std::map<std::string, std::string> fields;
  std::vector<std::pair<std::string, Shape>> listed;
  std::map<int, std::vector<int>> keeps;
  size_t pos = 0;
  while (pos < manifest.size()) {
    size_t nl = manifest.find('\n', pos);
    if (nl == std::string::npos) nl = manifest.size();
    const std::string line = manifest.substr(pos, nl - pos);
    pos = nl + 1;
    if (trim(line).empty()) continue;
    const size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw ParseError("manifest line without '=': '" + line + "'");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.rfind("tensor.", 0) == 0) {
      if (parse_int(key.substr(7)) != static_cast<int>(listed.size())) {
        throw ParseError("tensor entries out of order at '" + key + "'");
      }
      Shape shape;
      size_t cursor = 0;
      std::vector<std::string> words;
      while (cursor < value.size()) {
        size_t sp = value.find(' ', cursor);
        if (sp == std::string::npos) sp = value.size();
        if (sp > cursor) words.push_back(value.substr(cursor, sp - cursor));
        cursor = sp + 1;
      }
      if (words.size() < 2) {
        throw ParseError("tensor entry needs a name and dimensions: '" + value + "'");
      }
      for (size_t w = 1; w < words.size(); ++w) shape.push_back(parse_int(words[w]));
      listed.emplace_back(words[0], std::move(shape));
    } else if (key.rfind("keep.", 0) == 0) {
      keeps[parse_int(key.substr(5))] = split_ints(value);
    } else if (key.rfind("meta.", 0) == 0) {
      continue;
    } else {
      if (fields.count(key)) throw ParseError("duplicate manifest key '" + key + "'");
      fields[key] = value;
    }
  }

  auto require = [&](const char* key) -> const std::string& {
    auto it = fields.find(key);
    if (it == fields.end()) {
      throw ParseError("missing manifest key '" + std::string(key) + "'");
    }
    return it->second;
  };
  if (require("format") != "abcm-model") {
    throw ParseError("unknown format '" + fields["format"] + "'");
  }
  ChannelConfig cfg;
  cfg.kernel = parse_int(require("kernel"));
  cfg.stride = parse_int(require("stride"));
  cfg.ga_widths = split_ints(require("ga_widths"));
  cfg.gs_widths = split_ints(require("gs_widths"));
  cfg.validate();
  const Gating gating = parse_gate_mode(require("gate_mode"));

  const auto specs = tensor_layout(cfg, gating);
  if (listed.size() != specs.size()) {
    throw ParseError("manifest lists " + std::to_string(listed.size()) +
                     " tensors, configuration needs " + std::to_string(specs.size()));
  }
  std::vector<Tensor> loaded;
  size_t cursor = 10 + manifest_len;
  for (size_t i = 0; i < specs.size(); ++i) {
    if (listed[i].first != specs[i].name || listed[i].second != specs[i].shape) {
      throw ParseError("tensor " + std::to_string(i) + " is '" + listed[i].first +
                       "', configuration expects '" + specs[i].name + "'");
    }
    std::int64_t numel = 1;
    for (int d : specs[i].shape) numel *= d;
    const size_t need = static_cast<size_t>(numel) * 4;
    if (bytes.size() - cursor < need) {
      throw ParseError("payload ends inside tensor '" + specs[i].name + "'",
                       static_cast<long long>(bytes.size()));
    }
    std::vector<float> values(static_cast<size_t>(numel));
    for (auto& v : values) {
      v = get_f32(bytes, cursor);
      cursor += 4;
    }
    loaded.push_back(Tensor::from_vector(specs[i].shape, std::move(values), true));
  }
  if (cursor != bytes.size()) {
    throw ParseError("payload has " + std::to_string(bytes.size() - cursor) +
                         " trailing bytes",
                     static_cast<long long>(cursor));
  }

  CodecModel model;
  model.config = cfg;
  model.gating = gating;
  model.gate_epsilon = parse_float(require("epsilon"));
  model.gate_tau = parse_float(require("tau"));
  size_t next = 0;
  for (int i = 0; i < 4; ++i) {
    ConvLayer conv;
    conv.kernel = loaded[next++];
    conv.bias = loaded[next++];
    model.ga_convs.push_back(std::move(conv));
    if (i < 3) {
      GdnLayer gdn;
      gdn.beta_raw = loaded[next++];
      gdn.gamma_raw = loaded[next++];
      model.ga_gdns.push_back(std::move(gdn));
    }
  }
  for (int i = 0; i < 4; ++i) {
    ConvLayer conv;
    conv.kernel = loaded[next++];
    conv.bias = loaded[next++];
    model.gs_deconvs.push_back(std::move(conv));
    if (i < 3) {
      GdnLayer gdn;
      gdn.beta_raw = loaded[next++];
      gdn.gamma_raw = loaded[next++];
      model.gs_gdns.push_back(std::move(gdn));
    }
  }
  model.entropy.mu = loaded[next++];
  model.entropy.b_raw = loaded[next++];
  if (gating != Gating::None) {
    for (int s = 0; s < 6; ++s) {
      AbcmSlot slot;
      if (gating == Gating::Deterministic) {
        slot.alpha = loaded[next++];
      } else {
        slot.logits = loaded[next++];
      }
      model.slots.push_back(std::move(slot));
    }
  }
  if (!keeps.empty()) {
    if (keeps.size() != 6 || keeps.begin()->first != 0 || keeps.rbegin()->first != 5) {
      throw ParseError("keep plan needs entries keep.0 through keep.5");
    }
    KeepPlan plan;
    for (int s = 0; s < 6; ++s) plan.keep.push_back(keeps.at(s));
    model.pruned_from = std::move(plan);
  }
  return model;
}

void save_model(const CodecModel& model, const std::string& path, const MetaPairs& meta) {
  const std::string bytes = serialize_model(model, meta);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  out.flush();
  if (!out) throw IoError("short write to '" + path + "'");
}

CodecModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failure on '" + path + "'");
  return deserialize_model(bytes);
}

}  // namespace abcm
