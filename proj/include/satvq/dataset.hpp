#pragma once

// On-disk RPM datasets: a JSON manifest describing every problem plus one
// raw little-endian float32 payload holding the rendered panels.
//
// Payload layout, in manifest order, problem after problem:
//   contexts (M panels) | answer (1 panel) | candidates (8 panels)
// each panel side*side floats, row-major, values in [0,1].

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "satvq/io.hpp"
#include "satvq/rpm.hpp"

namespace satvq::data {

inline constexpr int kFormatVersion = 1;
inline constexpr int kCandidates = 8;

struct ProblemRecord {
  rpm::SymbolicProblem problem;
  rpm::CandidateSet candidates;
};

struct Dataset {
  int side = 24;
  int contexts = 8;  // M: the last M grid cells before the answer
  std::uint64_t seed = 0;
  rpm::GenConfig config;
  std::vector<ProblemRecord> records;
  std::vector<float> pixels;

  int panels_per_problem() const { return contexts + 1 + kCandidates; }
  std::size_t panel_size() const { return static_cast<std::size_t>(side) * side; }
  std::size_t size() const { return records.size(); }

  std::span<const float> panel(std::size_t problem, int slot) const {
    return {pixels.data() + (problem * panels_per_problem() + slot) * panel_size(), panel_size()};
  }
  std::span<const float> context(std::size_t problem, int i) const { return panel(problem, i); }
  std::span<const float> answer(std::size_t problem) const { return panel(problem, contexts); }
  std::span<const float> candidate(std::size_t problem, int i) const { return panel(problem, contexts + 1 + i); }
};

inline std::uint64_t problem_seed(std::uint64_t seed, std::size_t index) { return derive_seed(seed, index); }

inline Dataset generate(const rpm::GenConfig& cfg, std::size_t count, std::uint64_t seed, int side, int contexts) {
  require(count > 0, "generate: count must be positive");
  require(contexts >= 1 && contexts <= 8, "generate: context count must be in [1, 8]");
  Dataset ds;
  ds.side = side;
  ds.contexts = contexts;
  ds.seed = seed;
  ds.config = cfg;
  ds.records.reserve(count);
  ds.pixels.reserve(count * ds.panels_per_problem() * ds.panel_size());
  auto put = [&](const rpm::AttributeSpec& a) {
    const auto px = rpm::render_any(a, side, cfg);
    ds.pixels.insert(ds.pixels.end(), px.begin(), px.end());
  };
  for (std::size_t i = 0; i < count; ++i) {
    const auto s = problem_seed(seed, i);
    ProblemRecord r{rpm::sample_problem(cfg, s), {}};
    r.candidates = rpm::make_candidates(r.problem, derive_seed(s, 1), cfg);
    for (int c = 8 - contexts; c < 8; ++c) put(r.problem.grid[c]);
    put(r.problem.answer());
    for (const auto& c : r.candidates.candidates) put(c);
    ds.records.push_back(r);
  }
  return ds;
}

namespace detail {

using nlohmann::json;

inline json attrs_json(const rpm::AttributeSpec& a) { return json::array({a[0], a[1], a[2]}); }

inline rpm::AttributeSpec attrs_from(const json& j) {
  if (!j.is_array() || j.size() != rpm::kAttributes) throw FormatError("dataset: attribute triple expected");
  return {j[0].get<int>(), j[1].get<int>(), j[2].get<int>()};
}

inline rpm::RuleKind rule_kind_from(const std::string& name) {
  for (int k = 0; k < 4; ++k)
    if (name == rpm::kRuleNames[k]) return static_cast<rpm::RuleKind>(k);
  throw FormatError("dataset: unknown rule '" + name + "'");
}

}  // namespace detail

inline std::string payload_name() { return "panels.f32"; }

inline nlohmann::json manifest(const Dataset& ds) {
  using detail::json;
  json m;
  m["format"] = "satvq-rpm";
  m["version"] = kFormatVersion;
  m["count"] = ds.size();
  m["side"] = ds.side;
  m["contexts"] = ds.contexts;
  m["panels_per_problem"] = ds.panels_per_problem();
  m["seed"] = ds.seed;
  m["cardinality"] = ds.config.cardinality;
  json allowed = json::array();
  for (int k = 0; k < 4; ++k)
    if (ds.config.allowed[k]) allowed.push_back(rpm::kRuleNames[k]);
  m["rules_allowed"] = allowed;
  m["payload"] = payload_name();
  m["payload_bytes"] = ds.pixels.size() * 4;
  json problems = json::array();
  for (const auto& r : ds.records) {
    json p;
    p["seed"] = r.problem.seed;
    json rules = json::object();
    for (int a = 0; a < rpm::kAttributes; ++a)
      rules[rpm::kAttrNames[a]] = {{"kind", rpm::kRuleNames[static_cast<int>(r.problem.rules[a].kind)]},
                                   {"param", r.problem.rules[a].param}};
    p["rules"] = rules;
    json grid = json::array();
    for (const auto& g : r.problem.grid) grid.push_back(detail::attrs_json(g));
    p["grid"] = grid;
    json cands = json::array();
    for (const auto& c : r.candidates.candidates) cands.push_back(detail::attrs_json(c));
    p["candidates"] = cands;
    p["answer_index"] = r.candidates.answer_index;
    problems.push_back(p);
  }
  m["problems"] = problems;
  return m;
}

inline void write_dataset(const Dataset& ds, const std::filesystem::path& dir) {
  std::string payload;
  payload.reserve(ds.pixels.size() * 4);
  io::append_f32_le(payload, ds.pixels);
  io::write_file(dir / payload_name(), payload);
  io::write_file(dir / "manifest.json", manifest(ds).dump(1) + "\n");
}

inline Dataset read_dataset(const std::filesystem::path& dir) {
  using detail::json;
  json m;
  try {
    m = json::parse(io::read_file(dir / "manifest.json"));
  } catch (const json::exception& e) {
    throw FormatError(std::string("dataset manifest: ") + e.what());
  }
  try {
    if (m.at("format") != "satvq-rpm") throw FormatError("dataset: not an RPM dataset manifest");
    if (m.at("version").get<int>() != kFormatVersion)
      throw FormatError("dataset: unsupported format version " + m.at("version").dump());
    Dataset ds;
    ds.side = m.at("side").get<int>();
    ds.contexts = m.at("contexts").get<int>();
    ds.seed = m.at("seed").get<std::uint64_t>();
    ds.config.cardinality = m.at("cardinality").get<std::array<int, rpm::kAttributes>>();
    ds.config.allowed = {false, false, false, false};
    for (const auto& r : m.at("rules_allowed")) ds.config.allowed[static_cast<int>(detail::rule_kind_from(r))] = true;
    if (m.at("panels_per_problem").get<int>() != ds.panels_per_problem())
      throw FormatError("dataset: panels_per_problem does not match contexts + 9");
    const auto count = m.at("count").get<std::size_t>();
    const auto& problems = m.at("problems");
    if (problems.size() != count) throw FormatError("dataset: manifest lists a different number of problems than count");
    for (const auto& p : problems) {
      ProblemRecord r;
      r.problem.seed = p.at("seed").get<std::uint64_t>();
      for (int a = 0; a < rpm::kAttributes; ++a) {
        const auto& rule = p.at("rules").at(rpm::kAttrNames[a]);
        r.problem.rules[a] = {detail::rule_kind_from(rule.at("kind").get<std::string>()), rule.at("param").get<int>()};
      }
      const auto& grid = p.at("grid");
      if (grid.size() != 9) throw FormatError("dataset: grid must have 9 cells");
      for (int i = 0; i < 9; ++i) r.problem.grid[i] = detail::attrs_from(grid[i]);
      const auto& cands = p.at("candidates");
      if (cands.size() != kCandidates) throw FormatError("dataset: expected 8 candidates");
      for (int i = 0; i < kCandidates; ++i) r.candidates.candidates[i] = detail::attrs_from(cands[i]);
      r.candidates.answer_index = p.at("answer_index").get<int>();
      ds.records.push_back(r);
    }
    const std::string payload = io::read_file(dir / m.at("payload").get<std::string>());
    const std::size_t expected = count * ds.panels_per_problem() * ds.panel_size() * 4;
    if (payload.size() != expected)
      throw FormatError("dataset: payload is " + std::to_string(payload.size()) + " bytes, expected " +
                        std::to_string(expected) + " (" + std::to_string(count) + " problems)");
    ds.pixels = io::parse_f32_le(payload);
    return ds;
  } catch (const json::exception& e) {
    throw FormatError(std::string("dataset manifest: ") + e.what());
  }
}

}  // namespace satvq::data
