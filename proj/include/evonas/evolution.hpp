// Copyright 2026 The evonas Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Generational search: training and scoring individuals, the halve / clone /
// elitism / crossover / mutation schedule, and the top-level search loop.

#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "evonas/compiler.hpp"
#include "evonas/genome.hpp"
#include "evonas/genome_json.hpp"
#include "evonas/optim.hpp"
#include "evonas/tasks.hpp"
#include "evonas/variation.hpp"
#include "evonas/weights.hpp"

namespace evonas {

struct SearchConfig {
  std::size_t initial_population = 32;
  std::size_t min_population = 8;
  std::size_t elites = 2;
  double crossover_prob = 0.5;
  double mutation_rate = 0.5;
  std::int64_t train_iters = 20000;
  std::size_t minibatch = 8;
  std::size_t val_minibatches = 1000;
  double wall_clock_budget_seconds = 7200;
  std::int64_t mem_limit_elements = 65536;
  /// An individual is abandoned when its first `time_budget_iterations`
  /// iterations take longer than `time_budget_seconds` (scaled down
  /// proportionally when it trains for fewer iterations).
  double time_budget_seconds = 50;
  std::int64_t time_budget_iterations = 1000;
  int max_generations = 20;
  /// Worker threads for training a generation; 0 means one per core.
  int threads = 0;
  bool deterministic = false;
  /// Reuse the result of a genome trained earlier in the run instead of
  /// training it again. Training is seeded by the genome, so a rerun would
  /// reproduce the same weights and fitness.
  bool reuse_trained = true;
  std::uint64_t seed = 0;
  GenomeConfig genome;

  /// Throws std::invalid_argument naming the first offending field.
  void validate() const {
    auto fail = [](const std::string& field, const std::string& why) {
      throw std::invalid_argument(field + ": " + why);
    };
    if (min_population < 2) fail("min_population", "must be at least 2");
    if (initial_population < min_population) fail("initial_population", "must be >= min_population");
    if (elites >= min_population) fail("elites", "must be smaller than min_population");
    if (!(crossover_prob >= 0 && crossover_prob <= 1)) fail("crossover_prob", "must lie in [0, 1]");
    if (!(mutation_rate >= 0 && mutation_rate <= 1)) fail("mutation_rate", "must lie in [0, 1]");
    if (train_iters < 0) fail("train_iters", "must be non-negative");
    if (minibatch < 1) fail("minibatch", "must be positive");
    if (val_minibatches < 1) fail("val_minibatches", "must be positive");
    if (!(wall_clock_budget_seconds >= 0)) fail("wall_clock_budget_seconds", "must be non-negative");
    if (mem_limit_elements < 1) fail("mem_limit_elements", "must be positive");
    if (!(time_budget_seconds > 0)) fail("time_budget_seconds", "must be positive");
    if (time_budget_iterations < 1) fail("time_budget_iterations", "must be positive");
    if (max_generations < 1) fail("max_generations", "must be positive");
    if (threads < 0) fail("threads", "must be non-negative");
    if (genome.min_nodes < 2 || genome.max_nodes < genome.min_nodes) fail("genome", "need 2 <= min_nodes <= max_nodes");
  }

  int worker_threads() const {
    if (deterministic) return 1;
    if (threads > 0) return threads;
    return std::max(1u, std::thread::hardware_concurrency());
  }
};

struct FitnessRecord {
  std::uint64_t id = 0;
  int generation = 0;
  std::vector<std::uint64_t> parents;
  double val_mse = std::numeric_limits<double>::infinity();
  double val_psnr = -std::numeric_limits<double>::infinity();
  std::vector<double> train_loss;
  bool time_exceeded = false;
  bool mem_truncated = false;
  bool numeric_failure = false;
  std::int64_t parameter_count = 0;
  std::int64_t memory_elements = 0;
  std::int64_t iterations_run = 0;
  double seconds = 0;
  bool reused = false;

  std::string flags() const {
    std::string s;
    auto add = [&s](bool on, const char* name) {
      if (!on) return;
      if (!s.empty()) s += "|";
      s += name;
    };
    add(time_exceeded, "time_exceeded");
    add(mem_truncated, "mem_truncated");
    add(numeric_failure, "numeric_failure");
    return s;
  }
};

/// Lower is better; failed individuals rank last.
inline double fitness_key(const FitnessRecord& r) {
  return std::isnan(r.val_mse) ? std::numeric_limits<double>::infinity() : r.val_mse;
}

inline void set_fitness(FitnessRecord& r, double mse) {
  r.val_mse = std::isfinite(mse) ? mse : std::numeric_limits<double>::infinity();
  r.val_psnr = std::isfinite(r.val_mse) ? psnr(r.val_mse) : -std::numeric_limits<double>::infinity();
}

struct TrainedModel {
  ExecutionPlan plan;
  ModelParams<float> params;
  FitnessRecord record;
};

/// Forward pass without gradient recording.
inline Tensor<float> predict(const ExecutionPlan& plan, ModelParams<float>& mp, const Tensor<float>& input) {
  Tape<float> tape(false);
  const Shape s = input.shape();
  return execute(plan, mp, tape.constant(input), Shape3{3, s.h, s.w}, false).value();
}

/// Mean squared error over a set of batches, weighted by element count.
/// Returns +inf when the network produces non-finite values.
inline double evaluate_mse(const ExecutionPlan& plan, ModelParams<float>& mp, const std::vector<Batch>& batches) {
  double total = 0;
  std::int64_t count = 0;
  try {
    for (const Batch& b : batches) {
      const Tensor<float> out = predict(plan, mp, b.input);
      total += mse_of(out, b.target) * static_cast<double>(out.numel());
      count += out.numel();
    }
  } catch (const NumericError&) {
    return std::numeric_limits<double>::infinity();
  }
  if (count == 0) return std::numeric_limits<double>::infinity();
  const double mse = total / static_cast<double>(count);
  return std::isfinite(mse) ? mse : std::numeric_limits<double>::infinity();
}

/// `count` minibatches drawn from a split with a fixed seed.
inline std::vector<Batch> make_eval_batches(const ImageDataset& ds, Split split, const RestorationTask& task,
                                            std::size_t count, std::size_t batch_size, std::uint64_t seed) {
  Rng rng = make_rng(seed);
  std::vector<Batch> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(sample_batch(ds, split, batch_size, task, rng));
  return out;
}

inline std::uint64_t genome_seed(std::uint64_t run_seed, const Genome& g) {
  return derive_seed(run_seed, hash_string(serialize(g)));
}

/// Trains `g` for cfg.train_iters minibatch steps with its own optimizer
/// genes, then scores it on `eval`. Never throws for numeric trouble: the
/// record is flagged and carries the worst fitness.
inline TrainedModel train_individual(const Genome& g, const ImageDataset& data, const RestorationTask& task,
                                     const SearchConfig& cfg, const std::vector<Batch>& eval, std::uint64_t seed) {
  using Clock = std::chrono::steady_clock;
  const auto start = Clock::now();
  const Shape3 img = data.image_shape();
  TrainedModel tm;
  tm.plan = compile(g, Shape3{task.input_channels(), img.h, img.w}, cfg.mem_limit_elements);
  Rng rng = make_rng(seed);
  tm.params = init_params<float>(tm.plan, rng);
  FitnessRecord& rec = tm.record;
  rec.parameter_count = tm.plan.parameter_count;
  rec.memory_elements = tm.plan.memory_elements;
  rec.mem_truncated = tm.plan.truncated_at.has_value();

  OptimizerState<float> opt(g.optimizer.kind, g.optimizer.lr0, g.optimizer.decay);
  const auto pointers = tm.params.pointers();
  const std::int64_t window = std::min(cfg.train_iters, cfg.time_budget_iterations);
  const double window_budget =
      cfg.time_budget_seconds * static_cast<double>(window) / static_cast<double>(cfg.time_budget_iterations);
  rec.train_loss.reserve(static_cast<std::size_t>(cfg.train_iters));
  try {
    for (std::int64_t it = 0; it < cfg.train_iters; ++it) {
      const Batch batch = sample_batch(data, Split::Train, cfg.minibatch, task, rng);
      Tape<float> tape;
      const Var<float> x = tape.constant(batch.input);
      const Var<float> y = execute(tm.plan, tm.params, x, Shape3{3, img.h, img.w}, true);
      const Var<float> loss = mse_loss(y, tape.constant(batch.target));
      const double lv = loss.value()[0];
      if (!std::isfinite(lv)) throw NumericError("non-finite training loss");
      tm.params.zero_grad();
      tape.backward(loss);
      opt.step(pointers);
      rec.train_loss.push_back(lv);
      rec.iterations_run = it + 1;
      if (it < window) {
        const double elapsed = std::chrono::duration<double>(Clock::now() - start).count();
        if (elapsed > window_budget) {
          rec.time_exceeded = true;
          break;
        }
      }
    }
  } catch (const NumericError&) {
    rec.numeric_failure = true;
  }
  if (rec.time_exceeded || rec.numeric_failure) {
    set_fitness(rec, std::numeric_limits<double>::infinity());
  } else {
    const double mse = evaluate_mse(tm.plan, tm.params, eval);
    if (!std::isfinite(mse)) rec.numeric_failure = true;
    set_fitness(rec, mse);
  }
  rec.seconds = std::chrono::duration<double>(Clock::now() - start).count();
  return tm;
}

// ---------------------------------------------------------------------------
// Population schedule

struct Individual {
  std::uint64_t id = 0;
  Genome genome;
  std::vector<std::uint64_t> parents;
  std::optional<FitnessRecord> record;
  bool elite = false;
};

/// Strict ranking: validation MSE, then parameter count, then id.
inline bool ranks_before(const Individual& a, const Individual& b) {
  const double fa = a.record ? fitness_key(*a.record) : std::numeric_limits<double>::infinity();
  const double fb = b.record ? fitness_key(*b.record) : std::numeric_limits<double>::infinity();
  if (fa != fb) return fa < fb;
  const std::int64_t pa = a.record ? a.record->parameter_count : 0;
  const std::int64_t pb = b.record ? b.record->parameter_count : 0;
  if (pa != pb) return pa < pb;
  return a.id < b.id;
}

inline std::vector<Individual> ranked(std::vector<Individual> pop) {
  std::sort(pop.begin(), pop.end(), ranks_before);
  return pop;
}

/// Size of the next generation for a population of `size`.
inline std::size_t next_population_size(std::size_t size, std::size_t min_population) {
  const std::size_t half = std::max<std::size_t>(size / 2, 1);
  return half < min_population ? 2 * half : half;
}

/// Kills the worst half, clones everything when below the minimum size,
/// keeps the top elites untouched and varies every other slot.
inline std::vector<Individual> step_generation(const std::vector<Individual>& pop, const SearchConfig& cfg, Rng& rng,
                                               std::uint64_t& next_id) {
  if (pop.empty()) return {};
  const std::vector<Individual> order = ranked(pop);
  std::vector<Individual> survivors(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(std::max<std::size_t>(order.size() / 2, 1)));
  std::vector<Individual> next = survivors;
  if (survivors.size() < cfg.min_population) {
    for (const Individual& s : survivors) {
      Individual clone = s;
      clone.id = next_id++;
      clone.parents = {s.id};
      next.push_back(std::move(clone));
    }
  }
  const std::size_t elites = std::min(cfg.elites, next.size());
  for (std::size_t k = 0; k < next.size(); ++k) {
    Individual& ind = next[k];
    ind.record.reset();
    ind.elite = k < elites;
    if (ind.elite) continue;
    const std::uint64_t parent = ind.id;
    ind.parents = {parent};
    if (bernoulli(rng, cfg.crossover_prob)) {
      const auto j = static_cast<std::size_t>(uniform_int(rng, 0, static_cast<std::int64_t>(survivors.size()) - 1));
      ind.genome = crossover(ind.genome, survivors[j].genome, rng);
      ind.parents.push_back(survivors[j].id);
    }
    ind.genome = mutate(ind.genome, cfg.mutation_rate, rng);
    ind.id = next_id++;
  }
  return next;
}

// ---------------------------------------------------------------------------
// Search loop

struct GenerationSummary {
  int generation = 0;
  std::size_t population = 0;
  double best_mse = std::numeric_limits<double>::infinity();
  double best_psnr = -std::numeric_limits<double>::infinity();
  double best_ever_mse = std::numeric_limits<double>::infinity();
  double best_ever_psnr = -std::numeric_limits<double>::infinity();
  std::size_t time_exceeded = 0;
  std::size_t mem_truncated = 0;
  std::size_t numeric_failures = 0;
  double seconds = 0;
};

struct SearchResult {
  Genome best_genome;
  std::uint64_t best_id = 0;
  std::shared_ptr<TrainedModel> best;
  std::vector<GenerationSummary> generations;
  std::vector<FitnessRecord> records;
  std::vector<std::vector<Individual>> populations;  // evaluated, per generation
};

inline std::string individuals_csv_header() {
  return "generation,id,parents,val_mse,val_psnr,params,memory,flags,iterations,seconds,reused";
}

inline std::string format_double(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

inline std::string individual_csv_row(const FitnessRecord& r) {
  std::ostringstream os;
  os << r.generation << "," << r.id << ",";
  for (std::size_t i = 0; i < r.parents.size(); ++i) os << (i ? ";" : "") << r.parents[i];
  os << "," << format_double(r.val_mse) << "," << format_double(r.val_psnr) << "," << r.parameter_count << ","
     << r.memory_elements << "," << r.flags() << "," << r.iterations_run << "," << std::fixed << std::setprecision(3)
     << r.seconds << "," << (r.reused ? 1 : 0);
  return os.str();
}

inline std::string generations_csv_header() {
  return "generation,population,best_mse,best_psnr,best_ever_mse,best_ever_psnr,time_exceeded,mem_truncated,"
         "numeric_failures,seconds";
}

inline std::string generation_csv_row(const GenerationSummary& g) {
  std::ostringstream os;
  os << g.generation << "," << g.population << "," << format_double(g.best_mse) << "," << format_double(g.best_psnr)
     << "," << format_double(g.best_ever_mse) << "," << format_double(g.best_ever_psnr) << "," << g.time_exceeded
     << "," << g.mem_truncated << "," << g.numeric_failures << "," << std::fixed << std::setprecision(3) << g.seconds;
  return os.str();
}

struct SearchHooks {
  /// Directory receiving individuals.csv, generations.csv and elite
  /// checkpoints as the search progresses. Empty disables file output.
  std::string output_dir;
  std::function<void(const GenerationSummary&)> on_generation;
};

/// Evolves architectures for `task` on `data` until the generation cap or
/// the wall-clock budget is reached; generation 0 is always evaluated.
inline SearchResult run_search(const SearchConfig& cfg, const RestorationTask& task, const ImageDataset& data,
                               const SearchHooks& hooks = {}) {
  namespace fs = std::filesystem;
  using Clock = std::chrono::steady_clock;
  cfg.validate();
  if (data.split_size(Split::Train) == 0 || data.split_size(Split::Validation) == 0) {
    throw std::invalid_argument("dataset needs non-empty training and validation splits");
  }
  const auto start = Clock::now();
  const std::vector<Batch> eval =
      make_eval_batches(data, Split::Validation, task, cfg.val_minibatches, cfg.minibatch, derive_seed(cfg.seed, 0xe7a1));

  std::ofstream individuals_log, generations_log;
  if (!hooks.output_dir.empty()) {
    fs::create_directories(hooks.output_dir);
    individuals_log.open(fs::path(hooks.output_dir) / "individuals.csv");
    generations_log.open(fs::path(hooks.output_dir) / "generations.csv");
    if (!individuals_log || !generations_log) throw std::runtime_error(hooks.output_dir + ": cannot write logs");
    individuals_log << individuals_csv_header() << "\n";
    generations_log << generations_csv_header() << "\n";
  }

  SearchResult result;
  std::uint64_t next_id = 0;
  std::vector<Individual> pop;
  {
    Rng init = make_rng(derive_seed(cfg.seed, 0x1a17));
    for (std::size_t i = 0; i < cfg.initial_population; ++i) {
      Individual ind;
      ind.id = next_id++;
      ind.genome = random_genome(cfg.genome, init);
      pop.push_back(std::move(ind));
    }
  }
  std::map<std::string, std::shared_ptr<TrainedModel>> cache;
  double best_ever = std::numeric_limits<double>::infinity();

  for (int gen = 0;; ++gen) {
    const auto gen_start = Clock::now();
    std::vector<std::shared_ptr<TrainedModel>> models(pop.size());
    std::vector<std::string> keys(pop.size());
    std::vector<std::size_t> todo;
    for (std::size_t k = 0; k < pop.size(); ++k) {
      keys[k] = serialize(pop[k].genome);
      auto it = cache.find(keys[k]);
      if (cfg.reuse_trained && it != cache.end()) {
        models[k] = it->second;
      } else if (std::find_if(todo.begin(), todo.end(), [&](std::size_t j) { return keys[j] == keys[k]; }) == todo.end()) {
        todo.push_back(k);
      }
    }
    std::atomic<std::size_t> cursor{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto worker = [&]() {
      for (std::size_t t = cursor++; t < todo.size(); t = cursor++) {
        const std::size_t k = todo[t];
        try {
          models[k] = std::make_shared<TrainedModel>(
              train_individual(pop[k].genome, data, task, cfg, eval, genome_seed(cfg.seed, pop[k].genome)));
        } catch (...) {
          std::lock_guard<std::mutex> lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    };
    const int nthreads = std::min<int>(cfg.worker_threads(), static_cast<int>(std::max<std::size_t>(todo.size(), 1)));
    if (nthreads <= 1) {
      worker();
    } else {
      std::vector<std::thread> threads;
      for (int t = 0; t < nthreads; ++t) threads.emplace_back(worker);
      for (auto& t : threads) t.join();
    }
    if (failure) std::rethrow_exception(failure);

    GenerationSummary summary;
    summary.generation = gen;
    summary.population = pop.size();
    for (std::size_t k = 0; k < pop.size(); ++k) {
      bool reused = false;
      if (!models[k]) {  // duplicate genome within this generation
        for (std::size_t j = 0; j < k; ++j)
          if (keys[j] == keys[k]) models[k] = models[j];
        reused = true;
      } else if (std::find(todo.begin(), todo.end(), k) == todo.end()) {
        reused = true;
      }
      cache[keys[k]] = models[k];
      FitnessRecord rec = models[k]->record;
      rec.id = pop[k].id;
      rec.generation = gen;
      rec.parents = pop[k].parents;
      rec.reused = reused;
      pop[k].record = rec;
      result.records.push_back(rec);
      summary.time_exceeded += rec.time_exceeded;
      summary.mem_truncated += rec.mem_truncated;
      summary.numeric_failures += rec.numeric_failure;
      if (individuals_log.is_open()) individuals_log << individual_csv_row(rec) << "\n";
    }
    const std::vector<Individual> order = ranked(pop);
    const Individual& top = order.front();
    summary.best_mse = fitness_key(*top.record);
    summary.best_psnr = top.record->val_psnr;
    const bool improved = !result.best || summary.best_mse < best_ever;
    if (improved) {
      best_ever = summary.best_mse;
      result.best = cache[serialize(top.genome)];
      result.best_genome = top.genome;
      result.best_id = top.id;
    }
    summary.best_ever_mse = best_ever;
    summary.best_ever_psnr = std::isfinite(best_ever) ? psnr(best_ever) : -std::numeric_limits<double>::infinity();
    summary.seconds = std::chrono::duration<double>(Clock::now() - gen_start).count();
    result.generations.push_back(summary);
    result.populations.push_back(pop);
    if (generations_log.is_open()) {
      generations_log << generation_csv_row(summary) << "\n";
      generations_log.flush();
      individuals_log.flush();
      const fs::path ckpt = fs::path(hooks.output_dir) / "checkpoints" / ("gen_" + std::to_string(gen));
      fs::create_directories(ckpt);
      for (std::size_t e = 0; e < std::min(cfg.elites, order.size()); ++e) {
        const std::string stem = "elite_" + std::to_string(e);
        std::ofstream(ckpt / (stem + ".json")) << serialize(order[e].genome);
        save_weights((ckpt / (stem + ".bin")).string(), cache[serialize(order[e].genome)]->params);
      }
    }
    if (hooks.on_generation) hooks.on_generation(summary);

    const double elapsed = std::chrono::duration<double>(Clock::now() - start).count();
    if (gen + 1 >= cfg.max_generations || elapsed >= cfg.wall_clock_budget_seconds) break;

    Rng var = make_rng(derive_seed(cfg.seed, 0x9e4 + static_cast<std::uint64_t>(gen)));
    pop = step_generation(pop, cfg, var, next_id);
    if (!cfg.reuse_trained) {
      cache.clear();
    } else {
      // Keep only what the next generation or the best-ever entry can use.
      std::map<std::string, std::shared_ptr<TrainedModel>> kept;
      for (const Individual& ind : pop) {
        const std::string key = serialize(ind.genome);
        auto it = cache.find(key);
        if (it != cache.end()) kept.insert(*it);
      }
      cache.swap(kept);
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// Split scores

inline double psnr_or_worst(double mse) {
  if (std::isnan(mse) || mse == std::numeric_limits<double>::infinity()) return -std::numeric_limits<double>::infinity();
  return psnr(mse);
}

struct SplitScore {
  Split split = Split::Train;
  double mse = 0;
  double psnr = 0;
  double corrupted_mse = 0;
  double corrupted_psnr = 0;
};

/// Restored and corrupted-input PSNR over every image of each split, with
/// degradations seeded per image so the three numbers are comparable.
inline std::vector<SplitScore> score_splits(const ExecutionPlan& plan, ModelParams<float>& mp, const ImageDataset& ds,
                                            const RestorationTask& task, std::uint64_t seed) {
  std::vector<SplitScore> out;
  for (const Split sp : {Split::Train, Split::Validation, Split::Test}) {
    if (ds.split_size(sp) == 0) continue;
    const auto batches = split_batches(ds, sp, 16, task, seed);
    SplitScore sc;
    sc.split = sp;
    sc.mse = evaluate_mse(plan, mp, batches);
    sc.psnr = psnr_or_worst(sc.mse);
    double total = 0;
    std::int64_t count = 0;
    for (const Batch& b : batches) {
      const Image vis = visible_channels(b.input);
      total += mse_of(vis, b.target) * static_cast<double>(vis.numel());
      count += vis.numel();
    }
    sc.corrupted_mse = total / static_cast<double>(count);
    sc.corrupted_psnr = psnr_or_worst(sc.corrupted_mse);
    out.push_back(sc);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Fixed comparator network

/// A small three-level encoder-decoder with skip concatenations, PReLU
/// activations and batch norm, expressed as a genome.
inline Genome baseline_genome() {
  auto conv = [](ChannelRule ch, int stride, bool transposed, Activation act, Norm norm) {
    ConvGene g;
    g.channels = ch;
    g.stride = stride;
    g.transposed = transposed;
    g.activation = act;
    g.norm = norm;
    return NodeGene::conv_block(g);
  };
  Genome g;
  g.nodes = {
      NodeGene::input(),
      conv(ChannelRule::Quadruple, 1, false, Activation::PReLU, Norm::BatchNorm),  // 1: 12 @ h
      conv(ChannelRule::Double, 2, false, Activation::PReLU, Norm::BatchNorm),     // 2: 24 @ h/2
      conv(ChannelRule::Double, 2, false, Activation::PReLU, Norm::BatchNorm),     // 3: 48 @ h/4
      conv(ChannelRule::Half, 2, true, Activation::PReLU, Norm::BatchNorm),        // 4: 24 @ h/2
      NodeGene::connective(NodeKind::Concat, ResizeTarget::First),                 // 5: concat(2, 4)
      conv(ChannelRule::Quarter, 2, true, Activation::PReLU, Norm::BatchNorm),     // 6: 12 @ h
      NodeGene::connective(NodeKind::Concat, ResizeTarget::First),                 // 7: concat(1, 6)
      conv(ChannelRule::Three, 1, false, Activation::None, Norm::None),            // 8: 3 @ h
  };
  g.adjacency = Adjacency(g.nodes.size());
  const std::pair<std::size_t, std::size_t> edges[] = {{1, 0}, {2, 1}, {3, 2}, {4, 3}, {5, 2},
                                                       {5, 4}, {6, 5}, {7, 1}, {7, 6}, {8, 7}};
  for (const auto& [i, j] : edges) g.adjacency.set(i, j, true);
  g.optimizer = OptimizerGenes{OptimizerKind::Adam, 1e-3, 0.0};
  return g;
}

}  // namespace evonas
