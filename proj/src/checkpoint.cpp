#include <bit>
#include <cstring>
#include <fstream>
#include <nlohmann/json.hpp>

#include "spinal/checkpoint.hpp"

namespace spinal {

namespace {

constexpr char kMagic[8] = {'S', 'P', 'I', 'N', 'A', 'L', 'C', 'K'};

static_assert(std::endian::native == std::endian::little,
              "checkpoint format is little-endian; add byte swapping for "
              "big-endian hosts");

nlohmann::json config_to_json(const nn::ModelConfig& cfg) {
  nlohmann::json j;
  j["input_height"] = cfg.input_height;
  j["input_width"] = cfg.input_width;
  j["conv_channels"] = cfg.conv_channels;
  j["fc_sizes"] = cfg.fc_sizes;
  j["n_landmarks"] = cfg.n_landmarks;
  j["dropout_rate"] = cfg.dropout_rate;
  j["leaky_slope"] = cfg.leaky_slope;
  j["bn_eps"] = cfg.bn_eps;
  j["bn_momentum"] = cfg.bn_momentum;
  return j;
}

nn::ModelConfig config_from_json(const nlohmann::json& j) {
  nn::ModelConfig cfg;
  cfg.input_height = j.at("input_height").get<Index>();
  cfg.input_width = j.at("input_width").get<Index>();
  cfg.conv_channels = j.at("conv_channels").get<std::vector<Index>>();
  cfg.fc_sizes = j.at("fc_sizes").get<std::vector<Index>>();
  cfg.n_landmarks = j.at("n_landmarks").get<Index>();
  cfg.dropout_rate = j.at("dropout_rate").get<double>();
  cfg.leaky_slope = j.at("leaky_slope").get<double>();
  cfg.bn_eps = j.at("bn_eps").get<double>();
  cfg.bn_momentum = j.at("bn_momentum").get<double>();
  return cfg;
}

void directory_entry(nlohmann::json& dir, const std::string& name,
                     const Tensor& t, Index& offset) {
  nlohmann::json e;
  e["name"] = name;
  e["shape"] = t.shape();
  e["offset"] = offset;
  dir.push_back(e);
  offset += t.size();
}

}  // namespace

std::string fnv1a_hex(const std::string& text) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  nlohmann::json header;
  header["format_version"] = ckpt.format_version;
  header["model_config"] = config_to_json(ckpt.config);
  header["train_digest"] = ckpt.train_digest;

  nlohmann::json dir = nlohmann::json::array();
  Index offset = 0;
  std::vector<const Tensor*> payload;
  for (const auto& [name, t] : ckpt.params) {
    directory_entry(dir, "param/" + name, t, offset);
    payload.push_back(&t);
  }
  if (ckpt.adam) {
    header["adam"] = {{"step_count", ckpt.adam->step_count},
                      {"lr", ckpt.adam->hyper.lr},
                      {"beta1", ckpt.adam->hyper.beta1},
                      {"beta2", ckpt.adam->hyper.beta2},
                      {"eps", ckpt.adam->hyper.eps}};
    for (const auto& [name, t] : ckpt.adam->first_moment) {
      directory_entry(dir, "adam.m/" + name, t, offset);
      payload.push_back(&t);
    }
    for (const auto& [name, t] : ckpt.adam->second_moment) {
      directory_entry(dir, "adam.v/" + name, t, offset);
      payload.push_back(&t);
    }
  }
  header["tensors"] = dir;
  header["payload_doubles"] = offset;
  const std::string header_str = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("save_checkpoint: cannot open " + path.string());
  out.write(kMagic, 8);
  const std::uint64_t hlen = header_str.size();
  out.write(reinterpret_cast<const char*>(&hlen), 8);
  out.write(header_str.data(), static_cast<std::streamsize>(hlen));
  for (const Tensor* t : payload)
    out.write(reinterpret_cast<const char*>(t->data()),
              static_cast<std::streamsize>(t->size()) * 8);
  if (!out) throw IoError("save_checkpoint: write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("load_checkpoint: cannot open " + path.string());
  char magic[8];
  in.read(magic, 8);
  if (in.gcount() != 8 || std::memcmp(magic, kMagic, 8) != 0)
    throw IoError("load_checkpoint: bad magic in " + path.string());
  std::uint64_t hlen = 0;
  in.read(reinterpret_cast<char*>(&hlen), 8);
  if (in.gcount() != 8 || hlen == 0 || hlen > (1u << 26))
    throw IoError("load_checkpoint: bad header length in " + path.string());
  std::string header_str(hlen, '\0');
  in.read(header_str.data(), static_cast<std::streamsize>(hlen));
  if (in.gcount() != static_cast<std::streamsize>(hlen))
    throw IoError("load_checkpoint: truncated header in " + path.string());

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(header_str);
  } catch (const nlohmann::json::exception& e) {
    throw IoError("load_checkpoint: malformed header: " + std::string(e.what()));
  }
  Checkpoint ckpt;
  ckpt.format_version = header.at("format_version").get<int>();
  if (ckpt.format_version != 1)
    throw IoError("load_checkpoint: unsupported format_version " +
                  std::to_string(ckpt.format_version));
  ckpt.config = config_from_json(header.at("model_config"));
  ckpt.train_digest = header.value("train_digest", "");

  const Index declared = header.at("payload_doubles").get<Index>();
  std::vector<double> payload(static_cast<size_t>(declared));
  in.read(reinterpret_cast<char*>(payload.data()),
          static_cast<std::streamsize>(declared) * 8);
  if (in.gcount() != static_cast<std::streamsize>(declared) * 8)
    throw IoError("load_checkpoint: truncated payload in " + path.string() +
                  ": expected " + std::to_string(declared * 8) + " bytes, got " +
                  std::to_string(in.gcount()));

  if (header.contains("adam")) {
    AdamState state;
    state.step_count = header["adam"].at("step_count").get<long>();
    state.hyper.lr = header["adam"].at("lr").get<double>();
    state.hyper.beta1 = header["adam"].at("beta1").get<double>();
    state.hyper.beta2 = header["adam"].at("beta2").get<double>();
    state.hyper.eps = header["adam"].at("eps").get<double>();
    ckpt.adam = std::move(state);
  }

  Index consumed = 0;
  for (const auto& entry : header.at("tensors")) {
    const std::string name = entry.at("name").get<std::string>();
    const auto shape = entry.at("shape").get<std::vector<Index>>();
    const Index offset = entry.at("offset").get<Index>();
    Tensor t(shape);
    if (offset != consumed || offset + t.size() > declared)
      throw IoError("load_checkpoint: directory/payload mismatch at " + name);
    std::memcpy(t.data(), payload.data() + offset,
                static_cast<size_t>(t.size()) * 8);
    consumed += t.size();
    if (name.starts_with("param/")) {
      ckpt.params[name.substr(6)] = std::move(t);
    } else if (name.starts_with("adam.m/")) {
      if (!ckpt.adam) throw IoError("load_checkpoint: moment without adam header");
      ckpt.adam->first_moment[name.substr(7)] = std::move(t);
    } else if (name.starts_with("adam.v/")) {
      if (!ckpt.adam) throw IoError("load_checkpoint: moment without adam header");
      ckpt.adam->second_moment[name.substr(7)] = std::move(t);
    } else {
      throw IoError("load_checkpoint: unknown tensor section in " + name);
    }
  }
  if (consumed != declared)
    throw IoError("load_checkpoint: payload length mismatch: declared " +
                  std::to_string(declared) + " doubles, directory covers " +
                  std::to_string(consumed));
  return ckpt;
}

}  // namespace spinal
