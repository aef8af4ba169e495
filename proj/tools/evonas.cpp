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

// evonas command-line tool.
//
//   evonas search  --config run.json --output runs/a
//   evonas train   --genome g.json --task denoise_gaussian --iters 200 --output runs/b
//   evonas train   --baseline --config run.json --output runs/a/baseline
//   evonas degrade --task checkerboard --input clean/ --output corrupted/ --seed 3
//   evonas synth   --count 10 --size 16 --output clean/
//   evonas report  --run runs/a
//
// Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "evonas/evonas.hpp"

namespace fs = std::filesystem;
using namespace evonas;

namespace {

constexpr int kOk = 0;
constexpr int kRuntime = 1;
constexpr int kUsage = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  bool deterministic = false;
  std::optional<double> budget_seconds;
  std::optional<std::int64_t> mem_limit;
  std::string task;
  std::optional<std::int64_t> size;
  std::string output;
};

void add_common(CLI::App* cmd, CommonFlags& f, bool with_search_flags) {
  cmd->add_option("--config", f.config, "JSON run configuration");
  cmd->add_option("--seed", f.seed, "Run seed");
  cmd->add_option("--task", f.task, "Task: identity, superres, denoise_uniform, denoise_gaussian, deblur, "
                                    "compressive_sensing, checkerboard");
  cmd->add_option("--size", f.size, "Image side length");
  cmd->add_option("--output", f.output, "Output directory")->required();
  cmd->add_option("--mem-limit", f.mem_limit, "Activation memory limit in elements per sample");
  if (with_search_flags) {
    cmd->add_option("--threads", f.threads, "Worker threads (default: one per core)");
    cmd->add_flag("--deterministic", f.deterministic, "Single-threaded reproducible run");
    cmd->add_option("--budget-seconds", f.budget_seconds, "Wall-clock search budget");
  }
}

RunConfig resolve_config(const CommonFlags& f) {
  RunConfig rc;
  if (!f.config.empty()) {
    if (!fs::exists(f.config)) throw ConfigError("--config", "file not found: " + f.config);
    rc = load_config(f.config);
  }
  if (f.seed) rc.search.seed = *f.seed;
  if (f.threads) rc.search.threads = *f.threads;
  if (f.deterministic) rc.search.deterministic = true;
  if (f.budget_seconds) rc.search.wall_clock_budget_seconds = *f.budget_seconds;
  if (f.mem_limit) rc.search.mem_limit_elements = *f.mem_limit;
  if (!f.task.empty()) {
    const auto k = parse_task(f.task);
    if (!k) throw ConfigError("--task", "unknown task '" + f.task + "'");
    rc.task.kind = *k;
  }
  if (f.size) rc.data.size = *f.size;
  try {
    rc.search.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError("search", e.what());
  }
  return rc;
}

nlohmann::json psnr_json(double v) {
  if (std::isfinite(v)) return v;
  return v > 0 ? nlohmann::json("exact") : nlohmann::json("failed");
}

std::string psnr_text(double v) {
  if (std::isfinite(v)) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(4) << v;
    return os.str();
  }
  return v > 0 ? "exact" : "failed";
}

nlohmann::json scores_json(const std::vector<SplitScore>& scores) {
  nlohmann::json out = nlohmann::json::object();
  for (const SplitScore& s : scores) {
    out[std::string(name_of(s.split))] = {{"psnr", psnr_json(s.psnr)},
                                          {"mse", std::isfinite(s.mse) ? nlohmann::json(s.mse) : nlohmann::json()},
                                          {"corrupted_psnr", psnr_json(s.corrupted_psnr)},
                                          {"corrupted_mse", s.corrupted_mse}};
  }
  return out;
}

void print_scores(const std::vector<SplitScore>& scores) {
  for (const SplitScore& s : scores) {
    std::cout << std::left << std::setw(11) << name_of(s.split) << " PSNR " << psnr_text(s.psnr)
              << " dB (corrupted input " << psnr_text(s.corrupted_psnr) << " dB)\n";
  }
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p);
  if (!out) throw std::runtime_error(p.string() + ": cannot open for writing");
  out << text;
}

std::uint64_t score_seed(std::uint64_t seed) { return derive_seed(seed, 0x5c0e); }

nlohmann::json run_header(const char* mode, const RunConfig& rc, const ImageDataset& ds) {
  const Shape3 s = ds.image_shape();
  return {{"mode", mode},
          {"task", std::string(name_of(rc.task.kind))},
          {"image_shape", {s.c, s.h, s.w}},
          {"images", ds.size()},
          {"seed", rc.search.seed},
          {"data", rc.data.folder.empty() ? "synthetic" : rc.data.folder}};
}

// ---------------------------------------------------------------------------

int cmd_search(const CommonFlags& f) {
  const RunConfig rc = resolve_config(f);
  const ImageDataset ds = load_dataset(rc.data);
  const fs::path out = f.output;
  fs::create_directories(out);
  write_manifest((out / "manifest.json").string(), ds);

  SearchHooks hooks;
  hooks.output_dir = out.string();
  hooks.on_generation = [](const GenerationSummary& g) {
    std::cout << "generation " << g.generation << ": population " << g.population << ", best "
              << psnr_text(g.best_psnr) << " dB, best so far " << psnr_text(g.best_ever_psnr) << " dB ("
              << std::fixed << std::setprecision(1) << g.seconds << " s)" << std::endl;
  };
  SearchResult res = run_search(rc.search, rc.task, ds, hooks);

  TrainedModel& best = *res.best;
  write_text(out / "best_genome.json", serialize(res.best_genome));
  save_weights((out / "best_weights.bin").string(), best.params);
  write_text(out / "plan.md", format_plan(res.best_genome, best.plan));
  const auto scores = score_splits(best.plan, best.params, ds, rc.task, score_seed(rc.search.seed));
  nlohmann::json summary = run_header("search", rc, ds);
  summary["best_id"] = res.best_id;
  summary["generations"] = res.generations.size();
  summary["validation_fitness_psnr"] = psnr_json(best.record.val_psnr);
  summary["parameters"] = best.plan.parameter_count;
  summary["splits"] = scores_json(scores);
  write_text(out / "summary.json", summary.dump(2) + "\n");

  std::cout << "best individual " << res.best_id << ": validation fitness " << psnr_text(best.record.val_psnr)
            << " dB, " << best.plan.parameter_count << " parameters\n";
  print_scores(scores);
  std::cout << "final best PSNR " << psnr_text(best.record.val_psnr) << " dB\n";
  return kOk;
}

int cmd_train(const CommonFlags& f, const std::string& genome_path, bool baseline, std::optional<std::int64_t> iters) {
  if (baseline == !genome_path.empty()) throw UsageError("train needs exactly one of --genome or --baseline");
  RunConfig rc = resolve_config(f);
  if (iters) {
    if (*iters < 0) throw ConfigError("--iters", "must be non-negative");
    rc.search.train_iters = *iters;
  }
  Genome g;
  if (baseline) {
    g = baseline_genome();
  } else {
    std::ifstream in(genome_path);
    if (!in) throw ConfigError("--genome", "cannot open " + genome_path);
    std::stringstream ss;
    ss << in.rdbuf();
    g = deserialize(ss.str());
  }
  const ImageDataset ds = load_dataset(rc.data);
  const auto eval = make_eval_batches(ds, Split::Validation, rc.task, rc.search.val_minibatches, rc.search.minibatch,
                                      derive_seed(rc.search.seed, 0xe7a1));
  TrainedModel tm = train_individual(g, ds, rc.task, rc.search, eval, genome_seed(rc.search.seed, g));
  const fs::path out = f.output;
  fs::create_directories(out);
  save_weights((out / "weights.bin").string(), tm.params);
  write_text(out / "genome.json", serialize(g));
  write_text(out / "plan.md", format_plan(g, tm.plan));
  const auto scores = score_splits(tm.plan, tm.params, ds, rc.task, score_seed(rc.search.seed));
  nlohmann::json summary = run_header(baseline ? "baseline" : "train", rc, ds);
  summary["iterations"] = tm.record.iterations_run;
  summary["flags"] = tm.record.flags();
  summary["parameters"] = tm.plan.parameter_count;
  summary["validation_fitness_psnr"] = psnr_json(tm.record.val_psnr);
  summary["splits"] = scores_json(scores);
  write_text(out / "summary.json", summary.dump(2) + "\n");
  std::cout << (baseline ? "baseline" : "genome") << ": " << tm.plan.parameter_count << " parameters, "
            << tm.record.iterations_run << " iterations";
  if (!tm.record.flags().empty()) std::cout << " [" << tm.record.flags() << "]";
  std::cout << "\n";
  print_scores(scores);
  return tm.record.numeric_failure ? kRuntime : kOk;
}

int cmd_degrade(const std::string& task_name, const std::string& input, const std::string& output, std::uint64_t seed,
                std::int64_t size) {
  const auto kind = parse_task(task_name);
  if (!kind) throw ConfigError("--task", "unknown task '" + task_name + "'");
  const RestorationTask task{*kind, {}};
  const ImageDataset ds = load_image_folder(input, size);
  fs::create_directories(output);
  std::ostringstream csv;
  csv << "file,mse,psnr\n" << std::setprecision(17);
  double total = 0;
  std::int64_t count = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const Image corrupted = degrade(ds.images[i], task, derive_seed(seed, i));
    const Image vis = visible_channels(corrupted);
    write_png((fs::path(output) / ds.sources[i]).string(), vis);
    if (corrupted.shape().c == 6) {
      Image mask(Shape{1, 3, vis.shape().h, vis.shape().w});
      std::copy_n(corrupted.data() + vis.numel(), vis.numel(), mask.data());
      write_png((fs::path(output) / (fs::path(ds.sources[i]).stem().string() + "_mask.png")).string(), mask);
    }
    const double mse = mse_of(vis, ds.images[i]);
    total += mse * static_cast<double>(vis.numel());
    count += vis.numel();
    csv << ds.sources[i] << "," << mse << "," << psnr_text(psnr(mse)) << "\n";
  }
  const double mean = total / static_cast<double>(count);
  csv << "all," << mean << "," << psnr_text(psnr(mean)) << "\n";
  write_text(fs::path(output) / "psnr.csv", csv.str());
  std::cout << ds.size() << " images degraded (" << name_of(*kind) << "), corrupted-input PSNR "
            << psnr_text(psnr(mean)) << " dB\n";
  return kOk;
}

int cmd_synth(std::size_t count, std::int64_t size, std::uint64_t seed, const std::string& output) {
  const ImageDataset ds = synth_dataset(seed, count, size);
  fs::create_directories(output);
  const int width = static_cast<int>(std::to_string(std::max<std::size_t>(count, 1) - 1).size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    std::ostringstream name;
    name << "img_" << std::setw(width) << std::setfill('0') << i << ".png";
    write_png((fs::path(output) / name.str()).string(), ds.images[i]);
  }
  std::cout << count << " images written to " << output << "\n";
  return kOk;
}

std::optional<nlohmann::json> read_summary(const fs::path& p) {
  if (!fs::is_regular_file(p)) return std::nullopt;
  std::ifstream in(p);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::runtime_error(p.string() + ": " + e.what());
  }
}

std::string cell(const nlohmann::json& summary, const std::string& split, const char* key) {
  if (!summary.contains("splits") || !summary["splits"].contains(split)) return "n/a";
  const auto& v = summary["splits"][split][key];
  if (v.is_number()) return psnr_text(v.get<double>());
  return v.is_string() ? v.get<std::string>() : "n/a";
}

int cmd_report(const std::string& run, const std::string& output) {
  if (!fs::is_directory(run)) throw std::runtime_error(run + ": not a directory");
  // A run directory, or a directory whose subdirectories are runs.
  std::vector<fs::path> runs;
  if (fs::exists(fs::path(run) / "summary.json")) {
    runs.push_back(run);
  } else {
    for (const auto& e : fs::directory_iterator(run))
      if (e.is_directory() && fs::exists(e.path() / "summary.json")) runs.push_back(e.path());
    std::sort(runs.begin(), runs.end());
  }
  // Comparator runs fill the Baseline column of the run with the same task.
  std::map<std::string, nlohmann::json> shared_baselines;
  std::erase_if(runs, [&](const fs::path& r) {
    const nlohmann::json s = *read_summary(r / "summary.json");
    if (s.value("mode", "") != "baseline") return false;
    shared_baselines.emplace(s.value("task", "?"), s);
    return true;
  });
  if (runs.empty()) throw std::runtime_error(run + ": no summary.json found (run `evonas search` first)");

  std::ostringstream md, fitness;
  md << "# Mean PSNR (dB)\n\n| Task | Subset | Corrupted input | Baseline | Evolved |\n|---|---|---|---|---|\n";
  fitness << "run,generation,population,best_psnr,best_ever_psnr\n";
  for (const fs::path& r : runs) {
    const nlohmann::json s = *read_summary(r / "summary.json");
    const std::string task = s.value("task", "?");
    std::optional<nlohmann::json> base = read_summary(r / "baseline" / "summary.json");
    if (!base && shared_baselines.count(task)) base = shared_baselines.at(task);
    const std::pair<const char*, const char*> subsets[] = {
        {"train", "Training"}, {"validation", "Validation"}, {"test", "Test"}};
    for (const auto& [key, label] : subsets) {
      md << "| " << task << " | " << label << " | " << cell(s, key, "corrupted_psnr") << " | "
         << (base ? cell(*base, key, "psnr") : "n/a") << " | " << cell(s, key, "psnr") << " |\n";
    }
    const fs::path gens = r / "generations.csv";
    if (s.value("mode", "") == "search") {
      std::ifstream in(gens);
      if (!in) throw std::runtime_error(gens.string() + ": missing generation log");
      std::string line;
      std::getline(in, line);  // header
      while (std::getline(in, line)) {
        std::vector<std::string> cols;
        std::stringstream ls(line);
        for (std::string c; std::getline(ls, c, ',');) cols.push_back(c);
        if (cols.size() < 6) throw std::runtime_error(gens.string() + ": malformed row '" + line + "'");
        fitness << r.filename().string() << "," << cols[0] << "," << cols[1] << "," << cols[3] << "," << cols[5] << "\n";
      }
    }
  }
  const fs::path dest = output.empty() ? fs::path(run) : fs::path(output);
  fs::create_directories(dest);
  write_text(dest / "report.md", md.str());
  write_text(dest / "fitness.csv", fitness.str());
  std::cout << md.str();
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Evolutionary architecture search for image restoration"};
  app.require_subcommand(1);

  CommonFlags search_flags;
  CLI::App* search = app.add_subcommand("search", "Run an architecture search");
  add_common(search, search_flags, true);

  CommonFlags train_flags;
  std::string genome_path;
  bool baseline = false;
  std::optional<std::int64_t> iters;
  CLI::App* train = app.add_subcommand("train", "Train one genome (or the fixed comparator) and score it");
  add_common(train, train_flags, false);
  train->add_option("--genome", genome_path, "Genome JSON file");
  train->add_flag("--baseline", baseline, "Train the built-in encoder-decoder comparator");
  train->add_option("--iters", iters, "Training iterations (overrides the config)");

  std::string deg_task, deg_in, deg_out;
  std::uint64_t deg_seed = 0;
  std::int64_t deg_size = 0;
  CLI::App* deg = app.add_subcommand("degrade", "Corrupt a folder of PNG images");
  deg->add_option("--task", deg_task, "Task name")->required();
  deg->add_option("--input", deg_in, "Folder of clean PNG images")->required();
  deg->add_option("--output", deg_out, "Destination folder")->required();
  deg->add_option("--seed", deg_seed, "Degradation seed");
  deg->add_option("--size", deg_size, "Centre-crop and resize to this side (0 keeps the size)");

  std::size_t syn_count = 10;
  std::int64_t syn_size = 16;
  std::uint64_t syn_seed = 0;
  std::string syn_out;
  CLI::App* syn = app.add_subcommand("synth", "Write procedural images as PNG files");
  syn->add_option("--count", syn_count, "Number of images");
  syn->add_option("--size", syn_size, "Image side: 8, 16, 32 or 64");
  syn->add_option("--seed", syn_seed, "Generator seed");
  syn->add_option("--output", syn_out, "Destination folder")->required();

  std::string rep_run, rep_out;
  CLI::App* rep = app.add_subcommand("report", "Summarise a finished run");
  rep->add_option("--run", rep_run, "Run directory")->required();
  rep->add_option("--output", rep_out, "Where to write report.md and fitness.csv (default: the run directory)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*search) return cmd_search(search_flags);
    if (*train) return cmd_train(train_flags, genome_path, baseline, iters);
    if (*deg) return cmd_degrade(deg_task, deg_in, deg_out, deg_seed, deg_size);
    if (*syn) return cmd_synth(syn_count, syn_size, syn_seed, syn_out);
    if (*rep) return cmd_report(rep_run, rep_out);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntime;
  }
  return kUsage;
}
