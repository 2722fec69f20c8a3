#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "spade/errors.hpp"
#include "spade/model.hpp"

namespace spade {

namespace {

constexpr char kMagic[8] = {'S', 'P', 'A', 'D', 'E', 'C', 'K', 'P'};
constexpr std::uint32_t kVersion = 1;

nlohmann::json config_to_json(const ModelConfig& c) {
  nlohmann::json j;
  j["variant"] = variant_name(c.variant);
  j["past_channels"] = c.past_channels;
  j["static_dim"] = c.static_dim;
  j["covariate_channels"] = c.covariate_channels;
  j["conv_layers"] = c.conv_layers;
  j["conv_filters"] = c.conv_filters;
  j["kernel_size"] = c.kernel_size;
  j["static_hidden"] = c.static_hidden;
  j["future_hidden"] = c.future_hidden;
  j["agnostic_hidden"] = c.agnostic_hidden;
  j["specific_hidden"] = c.specific_hidden;
  j["attention_dim"] = c.attention_dim;
  j["attention_heads"] = c.attention_heads;
  j["series_scaling"] = c.series_scaling;
  j["quantiles"] = c.quantiles;
  nlohmann::json hs = nlohmann::json::array();
  for (const HorizonSpec& h : c.horizons) hs.push_back({h.lead, h.span});
  j["horizons"] = hs;
  return j;
}

ModelConfig config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  try {
    c.variant = variant_from_name(j.at("variant").get<std::string>());
    c.past_channels = j.at("past_channels").get<int>();
    c.static_dim = j.at("static_dim").get<int>();
    c.covariate_channels = j.at("covariate_channels").get<int>();
    c.conv_layers = j.at("conv_layers").get<int>();
    c.conv_filters = j.at("conv_filters").get<int>();
    c.kernel_size = j.at("kernel_size").get<int>();
    c.static_hidden = j.at("static_hidden").get<int>();
    c.future_hidden = j.at("future_hidden").get<int>();
    c.agnostic_hidden = j.at("agnostic_hidden").get<int>();
    c.specific_hidden = j.at("specific_hidden").get<int>();
    c.attention_dim = j.at("attention_dim").get<int>();
    c.attention_heads = j.at("attention_heads").get<int>();
    c.series_scaling = j.at("series_scaling").get<bool>();
    c.quantiles = j.at("quantiles").get<std::vector<double>>();
    c.horizons.clear();
    for (const auto& h : j.at("horizons")) {
      c.horizons.push_back(HorizonSpec{h.at(0).get<int>(), h.at(1).get<int>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed checkpoint config: ") + e.what());
  }
  return c;
}

void write_u32(std::ostream& out, std::uint32_t v) {
  char buf[4];
  for (int i = 0; i < 4; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(buf, 4);
}

void write_u64(std::ostream& out, std::uint64_t v) {
  char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(buf, 8);
}

void write_f64(std::ostream& out, double v) {
  std::uint64_t bits = 0;
  std::memcpy(&bits, &v, 8);
  write_u64(out, bits);
}

std::uint32_t read_u32(std::istream& in, const std::string& path) {
  char buf[4];
  if (!in.read(buf, 4)) throw DataError("truncated checkpoint " + path);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[i])) << (8 * i);
  return v;
}

std::uint64_t read_u64(std::istream& in, const std::string& path) {
  char buf[8];
  if (!in.read(buf, 8)) throw DataError("truncated checkpoint " + path);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[i])) << (8 * i);
  return v;
}

double read_f64(std::istream& in, const std::string& path) {
  const std::uint64_t bits = read_u64(in, path);
  double v = 0.0;
  std::memcpy(&v, &bits, 8);
  return v;
}

std::string read_string(std::istream& in, const std::string& path) {
  const std::uint64_t n = read_u64(in, path);
  if (n > (1ull << 24)) throw DataError("implausible string length in checkpoint " + path);
  std::string s(static_cast<std::size_t>(n), '\0');
  if (!in.read(s.data(), static_cast<std::streamsize>(n))) {
    throw DataError("truncated checkpoint " + path);
  }
  return s;
}

}  // namespace

void SpadeModel::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  out.write(kMagic, 8);
  write_u32(out, kVersion);
  const std::string cfg = config_to_json(config_).dump();
  write_u64(out, cfg.size());
  out.write(cfg.data(), static_cast<std::streamsize>(cfg.size()));
  write_u64(out, params_.size());
  for (const Parameter& p : params_) {
    write_u64(out, p.name.size());
    out.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    write_u32(out, static_cast<std::uint32_t>(p.tensor.shape.size()));
    for (int d : p.tensor.shape) write_u32(out, static_cast<std::uint32_t>(d));
    for (double v : p.tensor.values) write_f64(out, v);
  }
  if (!out) throw DataError("failed while writing " + path);
}

SpadeModel SpadeModel::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0) {
    throw DataError(path + " is not a model checkpoint");
  }
  const std::uint32_t version = read_u32(in, path);
  if (version != kVersion) {
    throw DataError(path + " has checkpoint version " + std::to_string(version) + "; expected " +
                    std::to_string(kVersion));
  }
  const std::string cfg_text = read_string(in, path);
  nlohmann::json cfg_json = nlohmann::json::parse(cfg_text, nullptr, false);
  if (cfg_json.is_discarded()) throw DataError(path + " has a malformed config block");
  SpadeModel model(config_from_json(cfg_json), 0);

  const std::uint64_t n = read_u64(in, path);
  if (n != model.params_.size()) {
    throw DataError(path + " stores " + std::to_string(n) + " parameters; config implies " +
                    std::to_string(model.params_.size()));
  }
  std::vector<bool> seen(model.params_.size(), false);
  std::size_t loaded = 0;
  for (std::uint64_t i = 0; i < n; ++i) {
    const std::string name = read_string(in, path);
    const std::uint32_t ndim = read_u32(in, path);
    if (ndim > 8) throw DataError(path + ": implausible rank for parameter " + name);
    Shape shape;
    for (std::uint32_t d = 0; d < ndim; ++d) shape.push_back(static_cast<int>(read_u32(in, path)));
    Parameter* target = nullptr;
    for (std::size_t k = 0; k < model.params_.size(); ++k) {
      if (model.params_[k].name == name) {
        if (seen[k]) throw DataError(path + " stores parameter " + name + " twice");
        seen[k] = true;
        target = &model.params_[k];
        break;
      }
    }
    if (!target) throw DataError(path + " stores unknown parameter " + name);
    if (target->tensor.shape != shape) {
      throw DataError(path + ": parameter " + name + " has shape " + shape_str(shape) +
                      "; model expects " + shape_str(target->tensor.shape));
    }
    for (double& v : target->tensor.values) v = read_f64(in, path);
    ++loaded;
  }
  if (loaded != model.params_.size()) throw DataError(path + " is missing parameters");
  return model;
}

std::string SpadeModel::checksum() const {
  std::uint64_t h = 1469598103934665603ull;
  auto feed = [&h](const void* data, std::size_t n) {
    const unsigned char* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= p[i];
      h *= 1099511628211ull;
    }
  };
  for (const Parameter& p : params_) {
    feed(p.name.data(), p.name.size());
    for (double v : p.tensor.values) {
      std::uint64_t bits = 0;
      std::memcpy(&bits, &v, 8);
      char le[8];
      for (int i = 0; i < 8; ++i) le[i] = static_cast<char>((bits >> (8 * i)) & 0xff);
      feed(le, 8);
    }
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace spade
