#pragma once

// Side-by-side comparison of generated answers across variants: one row per
// problem laid out as contexts | one column per variant | ground truth.

#include <algorithm>
#include <optional>
#include <sstream>
#include <vector>

#include <nlohmann/json.hpp>

#include "satvq/pgm.hpp"
#include "satvq/pipeline.hpp"

namespace satvq::report {

inline constexpr int kGap = 2;
inline constexpr float kGapShade = 0.5f;
inline constexpr float kMissingShade = 0.0f;

struct VariantColumn {
  std::string variant;
  std::vector<double> mse;  // per problem, empty if the variant is missing
  bool present() const { return !mse.empty(); }
};

struct Report {
  pgm::Canvas grid{0, 0};
  std::vector<VariantColumn> columns;
  std::vector<std::string> missing;
};

inline double median(std::vector<double> v) {
  require(!v.empty(), "median: empty input");
  std::sort(v.begin(), v.end());
  const std::size_t h = v.size() / 2;
  return v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

inline double mean(const std::vector<double>& v) {
  require(!v.empty(), "mean: empty input");
  double s = 0;
  for (double x : v) s += x;
  return s / v.size();
}

/// `models[i]` generates column `variants[i]`; a null entry becomes a blank
/// column and is listed in `missing`.
inline Report build(const std::vector<std::string>& variants,
                    const std::vector<const pipeline::Model<float>*>& models, const data::Dataset& ds,
                    std::size_t first, std::size_t count, std::uint64_t seed) {
  require(variants.size() == models.size(), "report: one model slot per variant");
  require(first + count <= ds.size() && count > 0, "report: problem range exceeds the dataset");
  const int s = ds.side;
  const int cols = ds.contexts + static_cast<int>(variants.size()) + 1;
  const int cell = s + kGap;
  Report r;
  r.grid = pgm::Canvas(cols * cell + kGap, static_cast<int>(count) * cell + kGap, kGapShade);
  for (std::size_t v = 0; v < variants.size(); ++v) {
    r.columns.push_back({variants[v], {}});
    if (!models[v]) r.missing.push_back(variants[v]);
  }
  const std::vector<float> blank(ds.panel_size(), kMissingShade);
  for (std::size_t row = 0; row < count; ++row) {
    const std::size_t i = first + row;
    const int y = kGap + static_cast<int>(row) * cell;
    for (int c = 0; c < ds.contexts; ++c) r.grid.paste(ds.context(i, c), s, kGap + c * cell, y);
    const auto prob = pipeline::load_problem<float>(ds, i);
    for (std::size_t v = 0; v < variants.size(); ++v) {
      const int x = kGap + (ds.contexts + static_cast<int>(v)) * cell;
      if (!models[v]) {
        r.grid.paste(blank, s, x, y);
        continue;
      }
      const auto inf = pipeline::infer(*models[v], prob.contexts, pipeline::eval_seed(seed, i));
      r.columns[v].mse.push_back(nets::pixel_mse(inf.generated, prob.answer));
      r.grid.paste(flat(inf.generated.data), s, x, y);
    }
    r.grid.paste(ds.answer(i), s, kGap + (cols - 1) * cell, y);
  }
  return r;
}

/// True when `ours` has a strictly lower mean MSE than the median MSE of
/// every other present column. Empty when `ours` or all others are absent.
inline std::optional<bool> beats_medians(const Report& r, const std::string& ours) {
  const auto it = std::find_if(r.columns.begin(), r.columns.end(), [&](const auto& c) { return c.variant == ours; });
  if (it == r.columns.end() || !it->present()) return std::nullopt;
  const double m = mean(it->mse);
  bool any = false, all = true;
  for (const auto& c : r.columns) {
    if (c.variant == ours || !c.present()) continue;
    any = true;
    all = all && m < median(c.mse);
  }
  if (!any) return std::nullopt;
  return all;
}

inline nlohmann::ordered_json summary_json(const Report& r, const std::string& ours) {
  nlohmann::ordered_json j;
  auto cols = nlohmann::ordered_json::array();
  for (const auto& c : r.columns) {
    nlohmann::ordered_json e;
    e["variant"] = c.variant;
    e["present"] = c.present();
    if (c.present()) {
      e["mean_mse"] = mean(c.mse);
      e["median_mse"] = median(c.mse);
      e["mse"] = c.mse;
    }
    cols.push_back(e);
  }
  j["columns"] = cols;
  j["missing"] = r.missing;
  const auto b = beats_medians(r, ours);
  j["reference"] = ours;
  j["reference_below_every_median"] = b ? nlohmann::ordered_json(*b) : nlohmann::ordered_json();
  return j;
}

inline std::string summary_text(const Report& r, const std::string& ours) {
  std::ostringstream os;
  os << "variant            mean_mse    median_mse\n";
  for (const auto& c : r.columns) {
    os << c.variant << std::string(c.variant.size() < 19 ? 19 - c.variant.size() : 1, ' ');
    if (c.present())
      os << mean(c.mse) << "    " << median(c.mse) << "\n";
    else
      os << "missing\n";
  }
  const auto b = beats_medians(r, ours);
  os << ours << " below every other variant's median: " << (b ? (*b ? "yes" : "no") : "n/a") << "\n";
  return os.str();
}

}  // namespace satvq::report
