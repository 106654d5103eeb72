// Command-line front end: train / attack / evaluate / sweep / show-examples.

#include <CLI11.hpp>
#include <iostream>

#include "advseq/runner.hpp"

using namespace advseq;

namespace {

IniConfig load_config(const std::string& path, const std::vector<std::string>& sets) {
  IniConfig cfg = IniConfig::parse_file(path);
  for (const std::string& s : sets) cfg.set_dotted(s);
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Black-box adversarial attacks on categorical sequence classifiers"};
  app.require_subcommand(1);

  std::string config_path, out_dir;
  std::vector<std::string> sets;
  app.add_option("--config", config_path, "experiment config file")->required();
  app.add_option("--out", out_dir, "output root (default $ADVSEQ_OUT_ROOT or ./runs)");
  app.add_option("--set", sets, "override, e.g. --set attack.n=50")->take_all();

  auto* train = app.add_subcommand("train", "train all models and write checkpoints");

  auto* attack = app.add_subcommand("attack", "run an attack over a split");
  std::string method = "cascada", split = "test";
  bool with_trace = false;
  int jobs = 1, limit = 0, n_override = -1;
  attack->add_option("--method", method,
                     "random_walk | mcmc | cascada | hotflip");
  attack->add_option("--n", n_override, "candidate budget per example");
  attack->add_flag("--trace", with_trace, "persist full candidate traces");
  attack->add_option("--split", split, "train | test");
  attack->add_option("--jobs", jobs, "worker threads");
  attack->add_option("--limit", limit, "cap number of examples");

  auto* evaluate = app.add_subcommand("evaluate", "compute the metric suite");
  std::string eval_method = "cascada", results_path;
  evaluate->add_option("--method", eval_method, "attack results to score");
  evaluate->add_option("--results", results_path, "explicit results JSONL path");

  auto* sweep = app.add_subcommand("sweep", "hyperparameter reliability sweep");

  auto* show = app.add_subcommand("show-examples", "print original/adversarial pairs");
  std::string show_method = "cascada";
  int show_limit = 8;
  show->add_option("--method", show_method, "attack results to display");
  show->add_option("--limit", show_limit, "pairs to print");

  CLI11_PARSE(app, argc, argv);

  try {
    IniConfig cfg = load_config(config_path, sets);
    std::string out_root = resolve_out_root(out_dir);

    if (train->parsed()) {
      cmd_train(cfg, out_root, std::cerr);
      std::cout << run_paths(cfg, out_root).root << std::endl;
    } else if (attack->parsed()) {
      if (n_override > 0) cfg.set("attack", "n", std::to_string(n_override));
      cmd_attack(cfg, out_root, attack_method_from_name(method), with_trace, jobs,
                 limit, split, std::cerr);
    } else if (evaluate->parsed()) {
      MetricsReport rep =
          cmd_evaluate(cfg, out_root, eval_method, results_path, std::cerr);
      std::cout << rep.to_json().dump(2) << std::endl;
    } else if (sweep->parsed()) {
      cmd_sweep(cfg, out_root, std::cerr);
    } else if (show->parsed()) {
      cmd_show_examples(cfg, out_root, show_method, show_limit, std::cout);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 1;
  }
  return 0;
}
