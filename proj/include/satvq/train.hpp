#pragma once

// Epoch loop shared by the CLI and the acceptance run.

#include <chrono>
#include <functional>
#include <numeric>
#include <vector>

#include "satvq/dataset.hpp"
#include "satvq/pipeline.hpp"

namespace satvq::train {

struct BatchRecord {
  int epoch = 0;
  int batch = 0;
  std::size_t size = 0;
  pipeline::LossReport loss;
  bool accepted = true;
  std::string diagnostic;
};

struct EpochRecord {
  int epoch = 0;
  pipeline::LossReport loss;  // mean over accepted problems
  int batches = 0;
  int rejected = 0;
  double seconds = 0;
};

/// Visiting order of the problems in a given epoch.
inline std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, int epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(seed, static_cast<std::uint64_t>(epoch), 0x0de7));
  rng.shuffle(order.begin(), order.end());
  return order;
}

/// Seed for the layer's random initialization on problem `index` in `epoch`.
inline std::uint64_t layer_seed(std::uint64_t seed, int epoch, std::size_t index) {
  return derive_seed(seed, static_cast<std::uint64_t>(epoch) + 1, index);
}

template <typename T>
EpochRecord run_epoch(pipeline::Model<T>& model, pipeline::Optimizer<T>& opt,
                      const std::vector<pipeline::Problem<T>>& problems, int batch_size, std::uint64_t seed, int epoch,
                      const std::function<void(const BatchRecord&)>& on_batch = {}) {
  require(batch_size >= 1 && !problems.empty(), "run_epoch: need problems and a positive batch size");
  const auto start = std::chrono::steady_clock::now();
  const auto order = epoch_order(problems.size(), seed, epoch);
  EpochRecord rec;
  rec.epoch = epoch;
  std::size_t seen = 0;
  for (std::size_t b = 0; b < order.size(); b += batch_size) {
    std::vector<const pipeline::Problem<T>*> batch;
    std::vector<std::uint64_t> seeds;
    for (std::size_t j = b; j < std::min(order.size(), b + batch_size); ++j) {
      batch.push_back(&problems[order[j]]);
      seeds.push_back(layer_seed(seed, epoch, order[j]));
    }
    const auto r = pipeline::train_step(model, opt, batch, seeds);
    BatchRecord br{epoch, rec.batches, batch.size(), r.loss, r.accepted, r.diagnostic};
    ++rec.batches;
    if (r.accepted) {
      const double w = static_cast<double>(batch.size());
      rec.loss.abst += w * r.loss.abst;
      rec.loss.recon += w * r.loss.recon;
      rec.loss.reason += w * r.loss.reason;
      seen += batch.size();
    } else {
      ++rec.rejected;
    }
    if (on_batch) on_batch(br);
  }
  if (seen > 0) {
    rec.loss.abst /= seen;
    rec.loss.recon /= seen;
    rec.loss.reason /= seen;
  }
  rec.loss.total = rec.loss.abst + rec.loss.recon + rec.loss.reason;
  rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rec;
}

struct FitOptions {
  int epochs = 1;  // total, including epochs already done
  int batch_size = 32;
  std::uint64_t seed = 7;
  double time_budget_seconds = 0;  // 0 = no limit
};

/// Runs epochs [start_epoch, epochs). With a time budget, no epoch is started
/// that the previous epoch's duration says would overrun it. Returns the
/// number of epochs done.
template <typename T>
int fit(pipeline::Model<T>& model, pipeline::Optimizer<T>& opt, const std::vector<pipeline::Problem<T>>& problems,
        const FitOptions& o, int start_epoch, const std::function<void(const BatchRecord&)>& on_batch = {},
        const std::function<void(const EpochRecord&)>& on_epoch = {}) {
  const auto start = std::chrono::steady_clock::now();
  double last = 0;
  int epoch = start_epoch;
  for (; epoch < o.epochs; ++epoch) {
    const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (o.time_budget_seconds > 0 && elapsed + last > o.time_budget_seconds) break;
    const auto rec = run_epoch(model, opt, problems, o.batch_size, o.seed, epoch, on_batch);
    last = rec.seconds;
    if (on_epoch) on_epoch(rec);
  }
  return epoch;
}

template <typename T>
std::vector<pipeline::Problem<T>> load_all(const data::Dataset& ds, std::size_t first, std::size_t count) {
  std::vector<pipeline::Problem<T>> out;
  out.reserve(count);
  for (std::size_t i = first; i < first + count; ++i) out.push_back(pipeline::load_problem<T>(ds, i));
  return out;
}

}  // namespace satvq::train
