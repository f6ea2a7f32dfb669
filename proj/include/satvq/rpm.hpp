#pragma once

// Synthetic single-object RPM problems: attribute model, row-wise rules,
// a symbolic solver used as ground truth, rasterization, and candidate
// sets built by hierarchical attribute perturbation.

#include <array>
#include <cmath>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "satvq/core.hpp"

namespace satvq::rpm {

inline constexpr int kAttributes = 3;
enum class Attr { shape = 0, size = 1, color = 2 };
inline constexpr std::array<const char*, kAttributes> kAttrNames{"shape", "size", "color"};
inline constexpr std::array<const char*, 5> kShapeNames{"triangle", "square", "pentagon", "hexagon", "circle"};

/// Shape, size and color indices of one panel.
using AttributeSpec = std::array<int, kAttributes>;

enum class RuleKind { constant = 0, progression = 1, arithmetic = 2, distribute_three = 3 };
inline constexpr std::array<const char*, 4> kRuleNames{"constant", "progression", "arithmetic", "distribute_three"};

struct Rule {
  RuleKind kind = RuleKind::constant;
  int param = 0;  // progression step, arithmetic sign (+1/-1), distribute-three shift (1/2)

  friend bool operator==(const Rule&, const Rule&) = default;
};

using RuleSpec = std::array<Rule, kAttributes>;

struct GenConfig {
  std::array<int, kAttributes> cardinality{5, 4, 6};
  std::array<bool, 4> allowed{true, true, true, true};  // indexed by RuleKind
  int max_attempts = 1000;

  static GenConfig constant_progression() {
    GenConfig c;
    c.allowed = {true, true, false, false};
    return c;
  }
};

/// Row-major 3x3 grid; index 8 is the answer.
struct SymbolicProblem {
  std::array<AttributeSpec, 9> grid{};
  RuleSpec rules{};
  std::uint64_t seed = 0;

  AttributeSpec answer() const { return grid[8]; }
};

class AmbiguousError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class InconsistentError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

using Row = std::array<int, 3>;

inline bool row_fits(const Rule& r, const Row& v, int card) {
  for (int x : v)
    if (x < 0 || x >= card) return false;
  switch (r.kind) {
    case RuleKind::constant:
      return v[0] == v[1] && v[1] == v[2];
    case RuleKind::progression:
      return v[1] - v[0] == r.param && v[2] - v[1] == r.param;
    case RuleKind::arithmetic:
      return v[2] == v[0] + r.param * v[1];
    case RuleKind::distribute_three:
      return v[0] != v[1] && v[1] != v[2] && v[0] != v[2];
  }
  return false;
}

/// Values of one attribute across the grid, row-major.
inline std::array<int, 9> column_of(const std::array<AttributeSpec, 9>& grid, int a) {
  std::array<int, 9> v{};
  for (int i = 0; i < 9; ++i) v[i] = grid[i][a];
  return v;
}

inline bool grid_fits(const Rule& r, const std::array<int, 9>& v, int card) {
  for (int row = 0; row < 3; ++row)
    if (!row_fits(r, {v[3 * row], v[3 * row + 1], v[3 * row + 2]}, card)) return false;
  if (r.kind == RuleKind::constant) return v[0] == v[3] && v[3] == v[6];
  if (r.kind == RuleKind::distribute_three) {
    // Every row holds the same three values and each row is row 0 shifted by
    // `param` more positions than the previous one.
    for (int row = 1; row < 3; ++row)
      for (int c = 0; c < 3; ++c)
        if (v[3 * row + c] != v[(c + row * r.param) % 3]) return false;
  }
  return true;
}

inline std::vector<Rule> rule_instances(RuleKind kind) {
  switch (kind) {
    case RuleKind::constant:
      return {{kind, 0}};
    case RuleKind::progression:
      return {{kind, -2}, {kind, -1}, {kind, 1}, {kind, 2}};
    case RuleKind::arithmetic:
      return {{kind, 1}, {kind, -1}};
    case RuleKind::distribute_three:
      return {{kind, 1}, {kind, 2}};
  }
  return {};
}

struct Completion {
  RuleKind kind;
  int answer;
};

/// All (family, answer) pairs consistent with the first eight values.
inline std::vector<Completion> completions(const std::array<int, 9>& ctx, int card) {
  std::vector<Completion> out;
  for (int k = 0; k < 4; ++k)
    for (const Rule& r : rule_instances(static_cast<RuleKind>(k)))
      for (int a = 0; a < card; ++a) {
        auto v = ctx;
        v[8] = a;
        if (grid_fits(r, v, card)) out.push_back({r.kind, a});
      }
  return out;
}

}  // namespace detail

inline bool validate(const SymbolicProblem& p, const GenConfig& cfg = {}) {
  for (int a = 0; a < kAttributes; ++a)
    if (!detail::grid_fits(p.rules[a], detail::column_of(p.grid, a), cfg.cardinality[a])) return false;
  return true;
}

/// Unique completion of the eight context panels. Throws AmbiguousError if
/// more than one rule family (or answer) fits, InconsistentError if none does.
inline AttributeSpec solve_symbolic(const std::array<AttributeSpec, 8>& contexts, const GenConfig& cfg = {}) {
  AttributeSpec answer{};
  for (int a = 0; a < kAttributes; ++a) {
    std::array<int, 9> v{};
    for (int i = 0; i < 8; ++i) v[i] = contexts[i][a];
    const auto fits = detail::completions(v, cfg.cardinality[a]);
    if (fits.empty()) throw InconsistentError(std::string("no rule fits attribute ") + kAttrNames[a]);
    for (const auto& f : fits)
      if (f.kind != fits[0].kind || f.answer != fits[0].answer)
        throw AmbiguousError(std::string("several rules fit attribute ") + kAttrNames[a]);
    answer[a] = fits[0].answer;
  }
  return answer;
}

namespace detail {

/// Grid for one attribute whose answer cell (index 8) equals `answer`.
inline std::optional<std::array<int, 9>> sample_attribute(const Rule& r, int card, int answer, Rng& rng) {
  std::array<int, 9> v{};
  auto pick = [&] { return static_cast<int>(rng.index(card)); };
  switch (r.kind) {
    case RuleKind::constant:
      v.fill(answer);
      break;
    case RuleKind::progression: {
      const int span = 2 * std::abs(r.param);
      if (span >= card) return std::nullopt;
      for (int row = 0; row < 3; ++row) {
        int start = static_cast<int>(rng.index(card - span));
        if (r.param < 0) start += span;
        if (row == 2) start = answer - 2 * r.param;
        for (int c = 0; c < 3; ++c) v[3 * row + c] = start + c * r.param;
      }
      break;
    }
    case RuleKind::arithmetic:
      for (int row = 0; row < 3; ++row) {
        const int x = pick();
        const int y = row == 2 ? r.param * (answer - x) : pick();
        v[3 * row] = x;
        v[3 * row + 1] = y;
        v[3 * row + 2] = x + r.param * y;
      }
      break;
    case RuleKind::distribute_three: {
      if (card < 3) return std::nullopt;
      std::vector<int> vals;
      for (int i = 0; i < card; ++i)
        if (i != answer) vals.push_back(i);
      rng.shuffle(vals.begin(), vals.end());
      vals.resize(2);
      // The answer cell reads vals[(2 + 2 * shift) % 3].
      vals.insert(vals.begin() + (2 + 2 * r.param) % 3, answer);
      for (int row = 0; row < 3; ++row)
        for (int c = 0; c < 3; ++c) v[3 * row + c] = vals[(c + row * r.param) % 3];
      break;
    }
  }
  if (!grid_fits(r, v, card)) return std::nullopt;
  return v;
}

}  // namespace detail

/// Draws one rule per attribute and fills the grid. The answer value of each
/// attribute is drawn uniformly first and the grid is built around it, so
/// answer values carry no information a distractor could not also carry.
/// Grids whose contexts admit more than one completion are resampled, so
/// solve_symbolic always recovers the generated answer.
inline SymbolicProblem sample_problem(const GenConfig& cfg, std::uint64_t seed) {
  std::vector<RuleKind> kinds;
  for (int k = 0; k < 4; ++k)
    if (cfg.allowed[k]) kinds.push_back(static_cast<RuleKind>(k));
  require(!kinds.empty(), "sample_problem: no rule family allowed");
  for (int c : cfg.cardinality) require(c >= 2, "sample_problem: cardinalities must be >= 2");

  Rng rng(seed);
  SymbolicProblem p;
  p.seed = seed;
  for (int a = 0; a < kAttributes; ++a) {
    const int answer = static_cast<int>(rng.index(cfg.cardinality[a]));
    bool done = false;
    for (int attempt = 0; attempt < cfg.max_attempts && !done; ++attempt) {
      const auto inst = detail::rule_instances(kinds[rng.index(kinds.size())]);
      const Rule r = inst[rng.index(inst.size())];
      const auto v = detail::sample_attribute(r, cfg.cardinality[a], answer, rng);
      if (!v) continue;
      const auto fits = detail::completions(*v, cfg.cardinality[a]);
      if (fits.size() != 1) continue;
      p.rules[a] = r;
      for (int i = 0; i < 9; ++i) p.grid[i][a] = (*v)[i];
      done = true;
    }
    if (!done) throw std::runtime_error(std::string("sample_problem: attempts exhausted for ") + kAttrNames[a]);
  }
  return p;
}

// ---------------------------------------------------------------- rendering

inline constexpr int kMinRenderSide = 16;

/// Gray levels for the color attribute; white is reserved for background.
inline double gray_level(int color, int cardinality) {
  return 0.75 * color / std::max(1, cardinality - 1);
}

/// Circumradius as a fraction of half the panel side.
inline double size_fraction(int size, int cardinality) {
  return 0.4 + 0.5 * size / std::max(1, cardinality - 1);
}

namespace detail {

inline bool inside_polygon(double x, double y, int sides, double radius) {
  // Regular polygon with a vertex pointing up, centered at the origin.
  const double pi = std::numbers::pi;
  for (int i = 0; i < sides; ++i) {
    const double a0 = -pi / 2 + 2 * pi * i / sides;
    const double a1 = -pi / 2 + 2 * pi * (i + 1) / sides;
    const double x0 = radius * std::cos(a0), y0 = radius * std::sin(a0);
    const double x1 = radius * std::cos(a1), y1 = radius * std::sin(a1);
    if ((x1 - x0) * (y - y0) - (y1 - y0) * (x - x0) < 0) return false;
  }
  return true;
}

}  // namespace detail

/// side*side pixels, row-major, background 1.0.
inline std::vector<float> render_panel(const AttributeSpec& attrs, int side, const GenConfig& cfg = {}) {
  require(side >= kMinRenderSide, "render_panel: side must be >= 16");
  for (int a = 0; a < kAttributes; ++a)
    require(attrs[a] >= 0 && attrs[a] < cfg.cardinality[a], "render_panel: attribute out of range");
  std::vector<float> px(static_cast<std::size_t>(side) * side, 1.0f);
  const double c = side / 2.0;
  const double radius = size_fraction(attrs[1], cfg.cardinality[1]) * c;
  const float gray = static_cast<float>(gray_level(attrs[2], cfg.cardinality[2]));
  const int shape = attrs[0] % 5;
  for (int y = 0; y < side; ++y)
    for (int x = 0; x < side; ++x) {
      const double dx = x + 0.5 - c, dy = y + 0.5 - c;
      const bool in = shape == 4 ? dx * dx + dy * dy <= radius * radius
                                 : detail::inside_polygon(dx, dy, shape + 3, radius);
      if (in) px[static_cast<std::size_t>(y) * side + x] = gray;
    }
  return px;
}

/// Box-filter downsampling by an integer factor.
inline std::vector<float> downsample(const std::vector<float>& px, int side, int factor) {
  require(factor >= 1 && side % factor == 0, "downsample: side must be divisible by factor");
  const int out = side / factor;
  std::vector<float> r(static_cast<std::size_t>(out) * out, 0.0f);
  for (int y = 0; y < side; ++y)
    for (int x = 0; x < side; ++x) r[(y / factor) * out + x / factor] += px[static_cast<std::size_t>(y) * side + x];
  for (auto& v : r) v /= static_cast<float>(factor * factor);
  return r;
}

/// Renders at max(side, 16)-ish resolution and box-filters down for small panels.
inline std::vector<float> render_any(const AttributeSpec& attrs, int side, const GenConfig& cfg = {}) {
  if (side >= kMinRenderSide) return render_panel(attrs, side, cfg);
  const int factor = (kMinRenderSide + side - 1) / side;
  return downsample(render_panel(attrs, side * factor, cfg), side * factor, factor);
}

// --------------------------------------------------------------- candidates

struct CandidateSet {
  std::array<AttributeSpec, 8> candidates{};
  int answer_index = 0;
};

/// Answer plus seven distractors: a three-level binary tree where level a
/// either keeps the answer's value of attribute a or replaces it with one
/// alternative value. Every attribute is split 4/4 across the eight
/// candidates, so no value holds a strict majority.
inline CandidateSet make_candidates(const SymbolicProblem& p, std::uint64_t seed, const GenConfig& cfg = {}) {
  for (int c : cfg.cardinality)
    if (c < 2) throw std::runtime_error("make_candidates: every attribute needs at least two values");
  Rng rng(seed);
  const AttributeSpec answer = p.answer();
  AttributeSpec alt{};
  for (int a = 0; a < kAttributes; ++a) {
    int v = static_cast<int>(rng.index(cfg.cardinality[a] - 1));
    alt[a] = v >= answer[a] ? v + 1 : v;
  }
  std::array<int, 8> order{0, 1, 2, 3, 4, 5, 6, 7};
  rng.shuffle(order.begin(), order.end());
  CandidateSet out;
  for (int slot = 0; slot < 8; ++slot) {
    const int leaf = order[slot];
    AttributeSpec c = answer;
    for (int a = 0; a < kAttributes; ++a)
      if ((leaf >> a) & 1) c[a] = alt[a];
    out.candidates[slot] = c;
    if (leaf == 0) out.answer_index = slot;
  }
  return out;
}

/// Context-blind guess: per attribute take the most frequent value (ties go
/// to the value seen first), then the first candidate matching the most of
/// those values.
inline int majority_heuristic(const std::array<AttributeSpec, 8>& candidates) {
  AttributeSpec mode{};
  for (int a = 0; a < kAttributes; ++a) {
    int best_count = -1;
    for (const auto& c : candidates) {
      int count = 0;
      for (const auto& d : candidates) count += d[a] == c[a];
      if (count > best_count) {
        best_count = count;
        mode[a] = c[a];
      }
    }
  }
  int best = 0, best_score = -1;
  for (int i = 0; i < 8; ++i) {
    int score = 0;
    for (int a = 0; a < kAttributes; ++a) score += candidates[i][a] == mode[a];
    if (score > best_score) {
      best_score = score;
      best = i;
    }
  }
  return best;
}

}  // namespace satvq::rpm
