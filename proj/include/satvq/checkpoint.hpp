#pragma once

// Checkpoint container.
//
//   bytes 0..7    magic "SATVQCKP"
//   bytes 8..11   format version, uint32 little-endian
//   bytes 12..19  header length L, uint64 little-endian
//   next L bytes  JSON header: config snapshot, architecture, training
//                 position, and a manifest of tensors (name, shape, dtype,
//                 byte offset into the payload)
//   rest          payload: float32 little-endian, column-major per tensor

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "satvq/config.hpp"
#include "satvq/io.hpp"
#include "satvq/pipeline.hpp"

namespace satvq::checkpoint {

inline constexpr char kMagic[8] = {'S', 'A', 'T', 'V', 'Q', 'C', 'K', 'P'};
inline constexpr std::uint32_t kVersion = 1;

struct TrainingState {
  int epochs_done = 0;
  std::int64_t adam_steps = 0;
};

inline nlohmann::ordered_json architecture_json(const nets::Architecture& a) {
  nlohmann::ordered_json j;
  j["side"] = a.side;
  auto stages = nlohmann::ordered_json::array();
  for (const auto& s : a.encoder) stages.push_back({s.channels, s.kernel, s.stride, s.pad});
  j["encoder"] = stages;
  return j;
}

namespace detail {

template <typename Int>
void put_le(std::string& out, Int v) {
  for (std::size_t b = 0; b < sizeof(Int); ++b) out.push_back(static_cast<char>((v >> (8 * b)) & 0xff));
}

template <typename Int>
Int get_le(std::string_view bytes, std::size_t at) {
  Int v = 0;
  for (std::size_t b = 0; b < sizeof(Int); ++b) v |= Int(static_cast<unsigned char>(bytes[at + b])) << (8 * b);
  return v;
}

}  // namespace detail

/// Model tensors, then Adam first and second moments under "adam.m." / "adam.v.".
inline std::string encode(const config::RunConfig& cfg, const pipeline::Model<float>& model,
                          const pipeline::Optimizer<float>& opt, const TrainingState& state) {
  nlohmann::ordered_json header;
  header["format"] = "satvq-checkpoint";
  header["config"] = config::to_json(cfg);
  header["architecture"] = architecture_json(model.cfg.arch);
  header["variant"] = model.cfg.variant.name();
  header["epochs_done"] = state.epochs_done;
  header["adam_steps"] = state.adam_steps;
  auto tensors = nlohmann::ordered_json::array();
  std::string payload;
  auto add = [&](const std::string& name, std::span<const float> data, Eigen::Index rows, Eigen::Index cols) {
    tensors.push_back({{"name", name}, {"shape", {rows, cols}}, {"dtype", "f32"}, {"offset", payload.size()}});
    io::append_f32_le(payload, data);
  };
  std::size_t i = 0;
  model.visit([&](const std::string& name, const Mat<float>& m) {
    add(name, flat(m), m.rows(), m.cols());
    if (i < opt.slots.size() && opt.slots[i].m.size() == static_cast<std::size_t>(m.size())) {
      add("adam.m." + name, opt.slots[i].m, m.rows(), m.cols());
      add("adam.v." + name, opt.slots[i].v, m.rows(), m.cols());
    }
    ++i;
  });
  header["tensors"] = tensors;
  header["payload_bytes"] = payload.size();
  const std::string h = header.dump();
  std::string out(kMagic, 8);
  detail::put_le<std::uint32_t>(out, kVersion);
  detail::put_le<std::uint64_t>(out, h.size());
  out += h;
  out += payload;
  return out;
}

struct Loaded {
  config::RunConfig cfg;
  pipeline::Model<float> model;
  pipeline::Optimizer<float> optimizer;
  TrainingState state;
};

inline Loaded decode(std::string_view bytes) {
  if (bytes.size() < 20 || std::string_view(bytes.data(), 8) != std::string_view(kMagic, 8))
    throw FormatError("checkpoint: bad magic (not a checkpoint file)");
  const auto version = detail::get_le<std::uint32_t>(bytes, 8);
  if (version != kVersion) throw FormatError("checkpoint: unsupported version " + std::to_string(version));
  const auto hlen = detail::get_le<std::uint64_t>(bytes, 12);
  if (hlen > bytes.size() - 20) throw FormatError("checkpoint: header length exceeds file size");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(20, hlen));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint: header is not valid JSON: ") + e.what());
  }
  const std::string_view payload = bytes.substr(20 + hlen);
  Loaded out;
  try {
    out.cfg = config::from_json(header.at("config"));
    out.state.epochs_done = header.at("epochs_done").get<int>();
    out.state.adam_steps = header.at("adam_steps").get<std::int64_t>();
    if (header.at("payload_bytes").get<std::size_t>() != payload.size())
      throw FormatError("checkpoint: payload is " + std::to_string(payload.size()) + " bytes, header says " +
                        header.at("payload_bytes").dump());
    const auto mc = config::model_config(out.cfg);
    if (nlohmann::json(architecture_json(mc.arch)) != header.at("architecture"))
      throw FormatError("checkpoint: stored architecture does not match its config snapshot");
    Rng rng(0);
    out.model = pipeline::build_variant<float>(mc, rng);
    std::map<std::string, std::pair<std::vector<std::int64_t>, std::size_t>> index;
    for (const auto& t : header.at("tensors")) {
      if (t.at("dtype") != "f32") throw FormatError("checkpoint: unsupported dtype " + t.at("dtype").dump());
      index[t.at("name").get<std::string>()] = {t.at("shape").get<std::vector<std::int64_t>>(),
                                                t.at("offset").get<std::size_t>()};
    }
    auto fetch = [&](const std::string& name, Eigen::Index rows, Eigen::Index cols) -> std::optional<std::vector<float>> {
      const auto it = index.find(name);
      if (it == index.end()) return std::nullopt;
      const auto& [shape, offset] = it->second;
      if (shape.size() != 2 || shape[0] != rows || shape[1] != cols)
        throw FormatError("checkpoint: tensor " + name + " has the wrong shape");
      const std::size_t bytes_needed = static_cast<std::size_t>(rows * cols) * 4;
      if (offset + bytes_needed > payload.size()) throw FormatError("checkpoint: tensor " + name + " is truncated");
      return io::parse_f32_le(payload.substr(offset, bytes_needed));
    };
    out.optimizer = pipeline::Optimizer<float>(AdamOptions{.lr = out.cfg.learning_rate});
    out.model.visit([&](const std::string& name, Mat<float>& m) {
      const auto values = fetch(name, m.rows(), m.cols());
      if (!values) throw FormatError("checkpoint: missing tensor " + name);
      std::copy(values->begin(), values->end(), m.data());
      AdamSlot<float> slot;
      auto first = fetch("adam.m." + name, m.rows(), m.cols());
      auto second = fetch("adam.v." + name, m.rows(), m.cols());
      if (first && second) {
        slot.m = std::move(*first);
        slot.v = std::move(*second);
      }
      out.optimizer.slots.push_back(std::move(slot));
    });
    out.optimizer.adam.set_steps(out.state.adam_steps);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint: malformed header: ") + e.what());
  } catch (const config::ConfigError& e) {
    throw FormatError(std::string("checkpoint: bad config snapshot: ") + e.what());
  }
  return out;
}

inline void save(const std::filesystem::path& path, const config::RunConfig& cfg, const pipeline::Model<float>& model,
                 const pipeline::Optimizer<float>& opt, const TrainingState& state) {
  io::write_file(path, encode(cfg, model, opt, state));
}

inline Loaded load(const std::filesystem::path& path) { return decode(io::read_file(path)); }

}  // namespace satvq::checkpoint
