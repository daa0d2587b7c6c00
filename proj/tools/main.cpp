// cta: train, evaluate, and inspect contextual temporal attention models.

#include <iostream>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "commands.hpp"
#include "cta/error.hpp"

namespace {

void add_config_options(CLI::App* cmd, cta::cli::ConfigSources& src,
                        std::vector<std::string>& sets) {
  cmd->add_option("--preset", src.preset, "Base preset: desk, paper, paper-momentum")
      ->capture_default_str();
  cmd->add_option("--config", src.file, "INI config file");
  cmd->add_option("--set", sets, "Override a config key, e.g. --set train.max_epochs=5");
}

}  // namespace

int main(int argc, char** argv) {
  using namespace cta::cli;
  CLI::App app{"Contextual temporal attention for sequential recommendation"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "cta 0.1.0");

  std::vector<std::string> sets;

  StatsOptions stats;
  auto* c_stats = app.add_subcommand("stats", "Dataset summary and interval histogram");
  c_stats->add_option("--data", stats.data, "Event log (TSV)")->required();
  c_stats->add_option("--out", stats.out, "Output directory")->required();
  c_stats->add_flag("--filter", stats.apply_filters, "Apply the configured preprocessing filters");
  add_config_options(c_stats, stats.config, sets);

  TrainOptions tr;
  std::string kernels, loss;
  std::size_t window = 0;
  auto* c_train = app.add_subcommand("train", "Preprocess, split, and train");
  c_train->add_option("--data", tr.data, "Event log (TSV)")->required();
  c_train->add_option("--out", tr.out, "Output directory")->required();
  c_train->add_option("--kernels", kernels, "Kernel bank, e.g. exp5,lin5");
  c_train->add_option("--loss", loss, "nll, bpr or top1");
  c_train->add_option("--window", window, "Window length L");
  add_config_options(c_train, tr.config, sets);

  EvalOptions ev;
  std::string baselines, cutoffs = "1,5,10,20";
  std::string eval_out;
  auto* c_eval = app.add_subcommand("eval", "Rank the test split with a checkpoint and baselines");
  c_eval->add_option("--checkpoint", ev.checkpoint, "checkpoint.json from train")->required();
  c_eval->add_option("--data", ev.data, "Event log (TSV)")->required();
  c_eval->add_option("--baselines", baselines, "Comma list of pop, spop, markov");
  c_eval->add_option("--k", cutoffs, "Comma list of cutoffs")->capture_default_str();
  c_eval->add_option("--out", eval_out, "Write the report as JSON");

  VisualizeOptions vis;
  auto* c_vis = app.add_subcommand("visualize", "Export per-window attention scores as CSV");
  c_vis->add_option("--checkpoint", vis.checkpoint, "checkpoint.json from train")->required();
  c_vis->add_option("--data", vis.data, "Event log (TSV)")->required();
  c_vis->add_option("--user", vis.user, "User id from the test split")->required();
  c_vis->add_option("--out", vis.out, "Output directory")->required();

  GradcheckOptions gc;
  auto* c_gc = app.add_subcommand("gradcheck", "Finite-difference check of every model gradient");
  c_gc->add_option("--seed", gc.seed)->capture_default_str();
  c_gc->add_option("--size", gc.size, "desk or toy")->capture_default_str();
  c_gc->add_option("--tolerance", gc.tolerance)->capture_default_str();
  c_gc->add_option("--step", gc.step, "Finite-difference step")->capture_default_str();
  c_gc->add_option("--floor", gc.absolute_floor, "Magnitude below which error is absolute")
      ->capture_default_str();
  c_gc->add_option("--flip-grad", gc.flip_grad)->group("");

  SynthOptions syn;
  auto* c_syn = app.add_subcommand("synth", "Write a synthetic repeat-heavy event log");
  c_syn->add_option("--out", syn.out, "Output TSV")->required();
  c_syn->add_option("--users", syn.users)->capture_default_str();
  c_syn->add_option("--events", syn.events, "Events per user")->capture_default_str();
  c_syn->add_option("--items", syn.items)->capture_default_str();
  c_syn->add_option("--seed", syn.seed)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    auto collect_sets = [&](ConfigSources& src) {
      for (const auto& s : sets) src.overrides.push_back(parse_assignment(s));
    };
    if (c_stats->parsed()) {
      collect_sets(stats.config);
      run_stats(stats, std::cout);
    } else if (c_train->parsed()) {
      collect_sets(tr.config);
      if (!kernels.empty()) tr.config.overrides.emplace_back("model.kernels", kernels);
      if (!loss.empty()) tr.config.overrides.emplace_back("train.loss", loss);
      if (window != 0) tr.config.overrides.emplace_back("model.window", std::to_string(window));
      run_train(tr, std::cout);
    } else if (c_eval->parsed()) {
      if (!baselines.empty()) {
        std::stringstream ss(baselines);
        std::string b;
        while (std::getline(ss, b, ',')) ev.baselines.push_back(b);
      }
      ev.cutoffs = parse_cutoffs(cutoffs);
      if (!eval_out.empty()) ev.out = eval_out;
      run_eval(ev, std::cout);
    } else if (c_vis->parsed()) {
      run_visualize(vis, std::cout);
    } else if (c_gc->parsed()) {
      run_gradcheck(gc, std::cout);
    } else if (c_syn->parsed()) {
      run_synth(syn, std::cout);
    }
  } catch (const cta::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
