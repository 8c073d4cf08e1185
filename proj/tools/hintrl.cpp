// hintrl: train / eval / metrics / compare front end for the simulator.

#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "hintrl/harness.hpp"

namespace {

std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  // "1,2,3" or a range "1-5"
  std::vector<std::uint64_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    const auto dash = item.find('-');
    try {
      if (dash != std::string::npos && dash > 0) {
        const auto lo = std::stoull(item.substr(0, dash));
        const auto hi = std::stoull(item.substr(dash + 1));
        if (hi < lo) throw hintrl::ConfigError("bad seed range '" + item + "'");
        for (auto s = lo; s <= hi; ++s) out.push_back(s);
      } else {
        out.push_back(std::stoull(item));
      }
    } catch (const std::logic_error& e) {
      if (dynamic_cast<const hintrl::ConfigError*>(&e)) throw;
      throw hintrl::ConfigError("bad seed '" + item + "'");
    }
  }
  if (out.empty()) throw hintrl::ConfigError("no seeds given");
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hint-guided GRPO simulator"};
  app.require_subcommand(1);

  std::string config_path, mode_name = "hint", seeds_text = "1", out_dir = "runs/hint";
  auto* train = app.add_subcommand("train", "train one guidance mode over a list of seeds");
  train->add_option("--config", config_path, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
  train->add_option("--mode", mode_name, "grpo | hint | answer-prefix | inject")->required();
  train->add_option("--seeds", seeds_text, "comma list and/or ranges, e.g. 1-5");
  train->add_option("--out", out_dir, "run directory (relative paths use HINTRL_OUT_ROOT)");

  std::string checkpoint_path, tasks_path, split_name = "test";
  auto* eval = app.add_subcommand("eval", "hint-free greedy accuracy of a checkpoint");
  eval->add_option("--checkpoint", checkpoint_path)->required()->check(CLI::ExistingFile);
  eval->add_option("--tasks", tasks_path, "tasks.jsonl")->required()->check(CLI::ExistingFile);
  eval->add_option("--split", split_name, "train | test | all");

  std::string trace_path;
  double delta = 0.0;
  auto* metrics = app.add_subcommand("metrics", "recompute the metrics log from a trace");
  metrics->add_option("--trace", trace_path)->required()->check(CLI::ExistingFile);
  auto* delta_opt = metrics->add_option("--delta", delta, "override the recorded trust-region half-width");

  std::vector<std::string> dirs;
  auto* cmp = app.add_subcommand("compare", "comparison table (CSV) over run directories");
  cmp->add_option("dirs", dirs)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed()) {
      const auto cfg = hintrl::load_config(config_path);
      const auto mode = hintrl::parse_mode(mode_name);
      const auto seeds = parse_seeds(seeds_text);
      const auto out = hintrl::resolve_out(out_dir);
      const auto threads = hintrl::env_threads();
      std::cerr << "train mode=" << hintrl::to_string(mode) << " seeds=" << seeds.size() << " steps=" << cfg.steps
                << " threads=" << threads << " out=" << out.string() << '\n';
      hintrl::run(cfg, mode, seeds, out, threads);
      std::cout << std::ifstream(out / "summary.csv").rdbuf();
    } else if (eval->parsed()) {
      const auto ck = hintrl::load_checkpoint(checkpoint_path);
      auto tasks = hintrl::read_tasks(tasks_path);
      if (split_name != "all") tasks = hintrl::select_split(tasks, hintrl::parse_split(split_name));
      for (const auto& t : tasks) {
        if (t.difficulty.length != ck.difficulty.length || t.difficulty.vocab != ck.difficulty.vocab) {
          throw hintrl::InputError("task " + std::to_string(t.task_id) + " does not match the checkpoint shape");
        }
      }
      nlohmann::json j{{"checkpoint", checkpoint_path},
                       {"step", ck.step},
                       {"split", split_name},
                       {"tasks", tasks.size()},
                       {"accuracy", hintrl::evaluate(ck.params, tasks)},
                       {"expected_accuracy", hintrl::expected_accuracy(ck.params, tasks)}};
      std::cout << j.dump() << '\n';
    } else if (metrics->parsed()) {
      const auto recs =
          hintrl::recompute_from_trace(trace_path, delta_opt->count() ? std::optional<double>(delta) : std::nullopt);
      for (const auto& r : recs) std::cout << hintrl::record_to_json(r).dump() << '\n';
    } else if (cmp->parsed()) {
      std::vector<std::filesystem::path> paths(dirs.begin(), dirs.end());
      std::cout << hintrl::compare(paths);
    }
  } catch (const hintrl::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const hintrl::InputError& e) {
    std::cerr << "input error: " << e.what() << '\n';
    return 3;
  } catch (const hintrl::DivergenceError& e) {
    std::cerr << "diverged: " << e.what() << '\n';
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
