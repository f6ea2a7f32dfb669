// satvq command-line tool: gen-data, train, eval, gradcheck, maxsat-bench, report.

#include <CLI11.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include <nlohmann/json.hpp>

#include "satvq/bench.hpp"
#include "satvq/checkpoint.hpp"
#include "satvq/config.hpp"
#include "satvq/dataset.hpp"
#include "satvq/gradcheck.hpp"
#include "satvq/report.hpp"
#include "satvq/train.hpp"

namespace fs = std::filesystem;
using namespace satvq;
using json = nlohmann::ordered_json;

namespace {

enum Exit : int { kOk = 0, kConfig = 2, kIo = 3, kCheck = 4, kFormat = 5 };

/// A failed check: reported and mapped to its own exit code.
struct CheckFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Common {
  std::string config_path;
  std::string preset;
  std::optional<std::uint64_t> seed;
  std::string out;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config_path, "JSON run configuration");
  cmd->add_option("--preset", c.preset, "micro | desk | paper-scale");
  cmd->add_option("--seed", c.seed, "Override the seed");
  cmd->add_option("--out", c.out, "Output path");
}

/// Preset first, then the config file; a preset named in both must agree.
config::RunConfig resolve(const Common& c) {
  config::RunConfig cfg = config::preset(c.preset.empty() ? "desk" : c.preset);
  if (!c.config_path.empty()) {
    cfg = config::parse(io::read_file(c.config_path));
    if (!c.preset.empty() && c.preset != cfg.preset)
      throw config::ConfigError("--preset " + c.preset + " conflicts with preset " + cfg.preset + " in " +
                                c.config_path);
  }
  return cfg;
}

std::string need_out(const Common& c, const std::string& cmd) {
  if (c.out.empty()) throw config::ConfigError(cmd + ": --out is required");
  return c.out;
}

void append_line(const fs::path& path, const json& record) {
  std::ofstream f(path, std::ios::app);
  if (!f) throw io::IoError("cannot open " + path.string() + " for appending");
  f << record.dump() << "\n";
  if (!f) throw io::IoError("write failed: " + path.string());
}

json loss_json(const pipeline::LossReport& l) {
  return {{"abst", l.abst}, {"recon", l.recon}, {"reason", l.reason}, {"total", l.total}};
}

json metrics_json(const pipeline::Metrics& m) {
  json j;
  j["problems"] = m.problems;
  j["generation_mse"] = m.generation_mse;
  j["bit_accuracy"] = std::isnan(m.bit_accuracy) ? json() : json(m.bit_accuracy);
  j["discriminative_accuracy"] = m.discriminative_accuracy;
  return j;
}

void check_dataset_fits(const config::RunConfig& cfg, const data::Dataset& ds, const std::string& what) {
  if (ds.side != cfg.side || ds.contexts != cfg.contexts)
    throw config::ConfigError(what + " expects " + std::to_string(cfg.side) + "px panels with " +
                              std::to_string(cfg.contexts) + " contexts (preset " + cfg.preset +
                              ") but the dataset has " + std::to_string(ds.side) + "px panels with " +
                              std::to_string(ds.contexts));
}

// ---------------------------------------------------------------- gen-data

struct GenFlags {
  Common common;
  long long count = -1;
};

int gen_data(const GenFlags& f) {
  auto cfg = resolve(f.common);
  if (f.common.seed) cfg.data_seed = *f.common.seed;
  if (f.count <= 0) throw config::ConfigError("gen-data: --count must be a positive integer");
  const auto out = need_out(f.common, "gen-data");
  const auto ds = data::generate(config::generator(cfg), static_cast<std::size_t>(f.count), cfg.data_seed, cfg.side,
                                 cfg.contexts);
  data::write_dataset(ds, out);
  std::cout << "wrote " << ds.size() << " problems to " << out << " (preset " << cfg.preset << ", side " << ds.side
            << ", contexts " << ds.contexts << ", rules " << cfg.rules << ", seed " << cfg.data_seed << ")\n";
  return kOk;
}

// ---------------------------------------------------------------- train

struct TrainFlags {
  Common common;
  std::string dataset;
  std::string resume;
  std::optional<int> epochs;
  std::optional<double> lr;
  std::optional<int> batch_size;
  std::optional<std::string> variant;
  std::optional<double> time_budget;
  std::optional<long long> train_count;
  std::string eval_dataset;
};

fs::path checkpoint_path(const fs::path& dir, int epoch) {
  char name[32];
  std::snprintf(name, sizeof name, "epoch-%04d.ckpt", epoch);
  return dir / name;
}

int train_cmd(const TrainFlags& f) {
  const fs::path out = need_out(f.common, "train");
  config::RunConfig cfg;
  std::optional<checkpoint::Loaded> resumed;
  if (!f.resume.empty()) {
    resumed = checkpoint::load(f.resume);
    cfg = resumed->cfg;
    if (!f.common.config_path.empty() || !f.common.preset.empty())
      std::cerr << "train: resuming, the configuration stored in " << f.resume << " is used\n";
  } else {
    cfg = resolve(f.common);
    if (f.common.seed) cfg.seed = *f.common.seed;
    if (f.variant) cfg.variant = *f.variant;
    if (f.lr) cfg.learning_rate = *f.lr;
    if (f.batch_size) cfg.batch_size = *f.batch_size;
  }
  if (f.epochs) cfg.epochs = *f.epochs;
  if (f.time_budget) cfg.time_budget_minutes = *f.time_budget;
  config::validate(cfg);
  if (f.dataset.empty()) throw config::ConfigError("train: --dataset is required");
  const auto ds = data::read_dataset(f.dataset);
  check_dataset_fits(cfg, ds, "train");
  std::size_t n = ds.size();
  if (f.train_count) {
    if (*f.train_count <= 0 || static_cast<std::size_t>(*f.train_count) > ds.size())
      throw config::ConfigError("train: --train-count must be in [1, dataset size]");
    n = static_cast<std::size_t>(*f.train_count);
  }
  std::optional<data::Dataset> eval_ds;
  if (!f.eval_dataset.empty()) {
    eval_ds = data::read_dataset(f.eval_dataset);
    check_dataset_fits(cfg, *eval_ds, "train");
  }

  pipeline::Model<float> model;
  pipeline::Optimizer<float> opt(AdamOptions{.lr = cfg.learning_rate});
  int start = 0;
  if (resumed) {
    model = std::move(resumed->model);
    opt = std::move(resumed->optimizer);
    start = resumed->state.epochs_done;
  } else {
    Rng rng(cfg.seed);
    model = pipeline::build_variant<float>(config::model_config(cfg), rng);
  }

  fs::create_directories(out);
  io::write_file(out / "config.json", config::serialize(cfg));
  const fs::path log = out / "metrics.jsonl";
  const auto problems = train::load_all<float>(ds, 0, n);
  train::FitOptions fo{cfg.epochs, cfg.batch_size, cfg.seed, cfg.time_budget_minutes * 60.0};
  std::cout << "training " << cfg.variant << " on " << n << " problems, epochs " << start << ".." << cfg.epochs
            << "\n";
  const int done = train::fit(
      model, opt, problems, fo, start,
      [&](const train::BatchRecord& b) {
        json r{{"type", "batch"}, {"epoch", b.epoch}, {"batch", b.batch}, {"size", b.size}};
        r.update(loss_json(b.loss));
        r["accepted"] = b.accepted;
        if (!b.accepted) r["diagnostic"] = b.diagnostic;
        append_line(log, r);
      },
      [&](const train::EpochRecord& e) {
        json r{{"type", "epoch"}, {"epoch", e.epoch}};
        r.update(loss_json(e.loss));
        r["batches"] = e.batches;
        r["rejected"] = e.rejected;
        r["seconds"] = e.seconds;
        if (eval_ds) r["eval"] = metrics_json(pipeline::evaluate(model, *eval_ds, 0, eval_ds->size(), cfg.eval_seed));
        append_line(log, r);
        std::cout << "epoch " << e.epoch << " loss " << e.loss.total << " (abst " << e.loss.abst << ", recon "
                  << e.loss.recon << ", reason " << e.loss.reason << ") " << e.seconds << "s\n";
        const int finished = e.epoch + 1;
        const checkpoint::TrainingState st{finished, opt.adam.steps()};
        if (finished % cfg.save_every == 0) checkpoint::save(checkpoint_path(out, finished), cfg, model, opt, st);
        checkpoint::save(out / "latest.ckpt", cfg, model, opt, st);
      });
  if (done == start) checkpoint::save(out / "latest.ckpt", cfg, model, opt, {done, opt.adam.steps()});
  if (done < cfg.epochs) std::cout << "time budget reached after " << done << " epochs\n";
  return kOk;
}

// ---------------------------------------------------------------- eval

struct EvalFlags {
  Common common;
  std::string checkpoint;
  std::string dataset;
  long long first = 0;
  long long count = -1;
  bool oracle = false;
};

int eval_cmd(const EvalFlags& f) {
  if (f.checkpoint.empty() || f.dataset.empty()) throw config::ConfigError("eval: --checkpoint and --dataset are required");
  const auto ck = checkpoint::load(f.checkpoint);
  if (!f.common.preset.empty() && f.common.preset != ck.cfg.preset)
    throw config::ConfigError("eval: --preset " + f.common.preset + " but the checkpoint was trained on " + ck.cfg.preset);
  const auto ds = data::read_dataset(f.dataset);
  check_dataset_fits(ck.cfg, ds, "checkpoint");
  const std::size_t first = static_cast<std::size_t>(std::max(0LL, f.first));
  if (f.first < 0 || first > ds.size()) throw config::ConfigError("eval: --first out of range");
  const std::size_t count = f.count < 0 ? ds.size() - first : static_cast<std::size_t>(f.count);
  if (first + count > ds.size() || count == 0) throw config::ConfigError("eval: problem range exceeds the dataset");
  if (f.oracle && !ck.model.quantized()) throw config::ConfigError("eval: --oracle needs a vq variant");
  const std::uint64_t seed = f.common.seed.value_or(ck.cfg.eval_seed);
  const auto m = pipeline::evaluate(ck.model, ds, first, count, seed, f.oracle);
  json r{{"checkpoint", f.checkpoint}, {"dataset", f.dataset}, {"variant", ck.cfg.variant},
         {"epochs_done", ck.state.epochs_done}, {"oracle", f.oracle}, {"first", first}, {"seed", seed}};
  r.update(metrics_json(m));
  const std::string line = r.dump();
  std::cout << line << "\n";
  if (!f.common.out.empty()) io::write_file(f.common.out, line + "\n");
  return kOk;
}

// ---------------------------------------------------------------- gradcheck

struct GradFlags {
  Common common;
  int trials = 20;
  double corrupt = 1.0;
};

int gradcheck_cmd(const GradFlags& f) {
  const auto cfg = resolve(f.common);
  if (cfg.preset != "micro") throw config::ConfigError("gradcheck: runs on the micro preset only");
  if (f.trials < 1) throw config::ConfigError("gradcheck: --trials must be >= 1");
  const std::uint64_t seed = f.common.seed.value_or(100);
  satnet::backward_corruption() = f.corrupt;
  const std::vector<gradcheck::CheckResult> results{
      gradcheck::satnet_layer(f.trials, seed), gradcheck::encode_decode(std::max(1, f.trials / 4), seed + 200),
      gradcheck::micro_pipeline(f.trials, seed + 300)};
  satnet::backward_corruption() = 1.0;
  bool ok = true;
  json all = json::array();
  for (const auto& r : results) {
    std::cout << (r.passed() ? "PASS " : "FAIL ") << r.name << "  max relative error " << r.worst << " (tolerance "
              << r.tolerance << ", " << r.checked << " entries, " << r.skipped << " skipped at ReLU kinks)\n";
    all.push_back({{"check", r.name}, {"max_relative_error", r.worst}, {"tolerance", r.tolerance},
                   {"entries", r.checked}, {"skipped", r.skipped}, {"passed", r.passed()}});
    ok = ok && r.passed();
  }
  if (!f.common.out.empty()) io::write_file(f.common.out, all.dump(2) + "\n");
  if (!ok) throw CheckFailure("gradcheck: at least one check failed");
  return kOk;
}

// ---------------------------------------------------------------- maxsat-bench

struct BenchFlags {
  Common common;
  bench::BenchOptions opts;
};

int bench_cmd(BenchFlags f) {
  if (f.common.seed) f.opts.seed = *f.common.seed;
  if (f.opts.instances < 1 || f.opts.max_vars < 1 || f.opts.max_clauses < 1 || f.opts.rounds < 1)
    throw config::ConfigError("maxsat-bench: sizes must be positive");
  if (f.opts.max_vars > maxsat::kBruteForceMaxVars)
    throw config::ConfigError("maxsat-bench: --max-vars above the brute-force limit of " +
                              std::to_string(maxsat::kBruteForceMaxVars));
  const auto s = bench::run(f.opts);
  std::ostringstream table;
  table << "id,n,m,opt,achieved,gap,sweeps,monotone\n";
  for (const auto& r : s.rows)
    table << r.id << "," << r.n << "," << r.m << "," << r.opt << "," << r.achieved << "," << r.gap() << "," << r.sweeps
          << "," << (r.monotone ? 1 : 0) << "\n";
  if (!f.common.out.empty())
    io::write_file(f.common.out, table.str());
  else
    std::cout << table.str();
  std::cout << "instances " << s.rows.size() << "  match rate " << s.match_rate << "  max gap " << s.max_gap
            << "  monotonicity violations " << s.monotonicity_violations << "  seconds " << s.seconds << "\n";
  return kOk;
}

// ---------------------------------------------------------------- report

struct ReportFlags {
  Common common;
  std::string dataset;
  std::vector<std::string> checkpoints;
  long long first = 0;
  long long count = 20;
};

int report_cmd(const ReportFlags& f) {
  const fs::path out = need_out(f.common, "report");
  if (f.dataset.empty()) throw config::ConfigError("report: --dataset is required");
  const auto ds = data::read_dataset(f.dataset);
  if (f.first < 0 || f.count < 1 || static_cast<std::size_t>(f.first + f.count) > ds.size())
    throw config::ConfigError("report: problem range exceeds the dataset");
  std::vector<std::string> names;
  for (const auto& v : pipeline::comparison_variants()) names.push_back(v.name());
  std::vector<std::optional<checkpoint::Loaded>> loaded(names.size());
  for (const auto& path : f.checkpoints) {
    if (!fs::exists(path)) {
      std::cerr << "warning: checkpoint " << path << " not found, skipped\n";
      continue;
    }
    auto ck = checkpoint::load(path);
    check_dataset_fits(ck.cfg, ds, "checkpoint " + path);
    const auto it = std::find(names.begin(), names.end(), ck.model.cfg.variant.name());
    if (it == names.end()) throw config::ConfigError("report: unexpected variant in " + path);
    loaded[it - names.begin()] = std::move(ck);
  }
  std::vector<const pipeline::Model<float>*> models;
  for (auto& l : loaded) models.push_back(l ? &l->model : nullptr);
  if (std::all_of(models.begin(), models.end(), [](auto* p) { return p == nullptr; }))
    throw config::ConfigError("report: no usable checkpoint");
  const std::uint64_t seed = f.common.seed.value_or(1);
  const auto r = report::build(names, models, ds, static_cast<std::size_t>(f.first), static_cast<std::size_t>(f.count), seed);
  for (const auto& m : r.missing) std::cerr << "warning: no checkpoint for variant " << m << ", column left blank\n";
  const std::string ours = pipeline::VariantSpec{}.name();
  fs::create_directories(out);
  pgm::write(out / "grid.pgm", r.grid);
  io::write_file(out / "summary.json", report::summary_json(r, ours).dump(2) + "\n");
  const auto text = report::summary_text(r, ours);
  io::write_file(out / "summary.txt", text);
  std::cout << text;
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Generative abstract reasoning with a vector-quantized codebook and a MAXSAT layer"};
  app.require_subcommand(1);

  GenFlags gen;
  auto* g = app.add_subcommand("gen-data", "Generate a synthetic matrix-reasoning dataset");
  add_common(g, gen.common);
  g->add_option("--count", gen.count, "Number of problems")->required();

  TrainFlags tr;
  auto* t = app.add_subcommand("train", "Train a variant; writes checkpoints and metrics.jsonl into --out");
  add_common(t, tr.common);
  t->add_option("--dataset", tr.dataset, "Training dataset directory");
  t->add_option("--resume", tr.resume, "Checkpoint to continue from");
  t->add_option("--epochs", tr.epochs, "Total epochs");
  t->add_option("--lr", tr.lr, "Learning rate");
  t->add_option("--batch-size", tr.batch_size, "Batch size");
  t->add_option("--variant", tr.variant, "encoder+reasoner, e.g. vq+satnet");
  t->add_option("--time-budget", tr.time_budget, "Wall-clock budget in minutes (0 = none)");
  t->add_option("--train-count", tr.train_count, "Use only the first N problems");
  t->add_option("--eval-dataset", tr.eval_dataset, "Evaluate on this dataset after every epoch");

  EvalFlags ev;
  auto* e = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
  add_common(e, ev.common);
  e->add_option("--checkpoint", ev.checkpoint, "Checkpoint file");
  e->add_option("--dataset", ev.dataset, "Dataset directory");
  e->add_option("--first", ev.first, "First problem index");
  e->add_option("--count", ev.count, "Number of problems (default: the rest)");
  e->add_flag("--oracle", ev.oracle, "Replace the reasoner output by the true answer's encoding");

  GradFlags gr;
  gr.common.preset = "micro";
  auto* gc = app.add_subcommand("gradcheck", "Finite-difference checks of every backward pass");
  add_common(gc, gr.common);
  gc->add_option("--trials", gr.trials, "Seeded trials per check");
  gc->add_option("--corrupt-backward", gr.corrupt, "Scale the layer's weight gradient (fault injection)");

  BenchFlags be;
  auto* b = app.add_subcommand("maxsat-bench", "Mixing method + rounding against brute force");
  add_common(b, be.common);
  b->add_option("--instances", be.opts.instances, "Number of formulas");
  b->add_option("--max-vars", be.opts.max_vars, "Largest variable count");
  b->add_option("--max-clauses", be.opts.max_clauses, "Largest clause count");
  b->add_option("--rounds", be.opts.rounds, "Rounding draws per instance");

  ReportFlags rp;
  auto* r = app.add_subcommand("report", "Comparison grid of generated answers across variants");
  add_common(r, rp.common);
  r->add_option("--dataset", rp.dataset, "Dataset directory");
  r->add_option("--checkpoint", rp.checkpoints, "Checkpoint of one variant (repeatable)");
  r->add_option("--first", rp.first, "First problem index");
  r->add_option("--count", rp.count, "Number of problems");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? kOk : kConfig;
  }

  try {
    if (*g) return gen_data(gen);
    if (*t) return train_cmd(tr);
    if (*e) return eval_cmd(ev);
    if (*gc) return gradcheck_cmd(gr);
    if (*b) return bench_cmd(be);
    if (*r) return report_cmd(rp);
  } catch (const config::ConfigError& err) {
    std::cerr << "config error: " << err.what() << "\n";
    return kConfig;
  } catch (const CheckFailure& err) {
    std::cerr << err.what() << "\n";
    return kCheck;
  } catch (const FormatError& err) {
    std::cerr << "format error: " << err.what() << "\n";
    return kFormat;
  } catch (const io::IoError& err) {
    std::cerr << "i/o error: " << err.what() << "\n";
    return kIo;
  } catch (const fs::filesystem_error& err) {
    std::cerr << "i/o error: " << err.what() << "\n";
    return kIo;
  } catch (const ContractError& err) {
    std::cerr << "config error: " << err.what() << "\n";
    return kConfig;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 1;
  }
  return kOk;
}
