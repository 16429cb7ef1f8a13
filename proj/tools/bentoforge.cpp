// bentoforge: dataset generation, training, generation, evaluation, and
// gradient checking for the bento composition pipelines.
//
// Exit codes: 0 success, 1 usage error, 2 validation/data error,
// 3 gradient-check failure.

#include <CLI11.hpp>

#include <cstdint>
#include <iostream>
#include <string>

#include "bento/cli.hpp"

int main(int argc, char** argv) {
  // Determinism default: one intra-op worker unless the caller overrides.
  bento::thread_cap();

  CLI::App app{"bentoforge: synthetic lunchbox composition pipelines"};
  app.require_subcommand(1);

  std::string type_spec = "mixed";
  int count = 10;
  uint64_t seed = 1;
  std::string out_dir;
  auto* gen_data = app.add_subcommand("gen_data", "write synthetic scenes");
  gen_data->add_option("--type", type_spec, "scene type: 1|2|3|mixed")
      ->check(CLI::IsMember({"1", "2", "3", "mixed"}));
  gen_data->add_option("--count", count, "number of scenes")->required();
  gen_data->add_option("--seed", seed, "root seed");
  gen_data->add_option("--out", out_dir, "output directory")->required();

  std::string pipeline;
  std::string config_path;
  std::string data_dir;
  std::string resume_path;
  bool force = false;
  auto* train = app.add_subcommand("train", "run a training loop");
  train->add_option("--pipeline", pipeline, "layout|t2i")
      ->required()
      ->check(CLI::IsMember({"layout", "t2i"}));
  train->add_option("--config", config_path, "key = value config file");
  train->add_option("--data", data_dir, "dataset directory");
  train->add_option("--out", out_dir, "output directory");
  train->add_option("--resume", resume_path, "checkpoint to resume from");
  train->add_flag("--force", force, "resume despite a config-hash mismatch");

  std::string checkpoint_path;
  std::string input;
  int samples = 1;
  auto* generate = app.add_subcommand("generate", "frozen-phase generation");
  generate->add_option("--pipeline", pipeline, "layout|t2i")
      ->required()
      ->check(CLI::IsMember({"layout", "t2i"}));
  generate->add_option("--checkpoint", checkpoint_path, "checkpoint file")
      ->required();
  generate->add_option("--input", input, "annotation json (layout) or caption text file (t2i)")
      ->required();
  generate->add_option("--samples", samples, "samples per input");
  generate->add_option("--seed", seed, "noise seed");
  generate->add_option("--out", out_dir, "output directory")->required();

  auto* eval = app.add_subcommand("eval", "score a checkpoint on a dataset");
  eval->add_option("--pipeline", pipeline, "layout|t2i")
      ->required()
      ->check(CLI::IsMember({"layout", "t2i"}));
  eval->add_option("--checkpoint", checkpoint_path, "checkpoint file")->required();
  eval->add_option("--data", data_dir, "dataset directory")->required();

  std::string module = "all";
  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference checks");
  gradcheck->add_option("--module", module,
                        "all|tensor|nn|stn|gan|composition|corrupt");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (gen_data->parsed()) {
      auto res = bento::cli::cmd_gen_data(type_spec, count, seed, out_dir);
      std::cout << "wrote " << res.count << " scenes to " << res.dir << "\n";
      return 0;
    }
    if (train->parsed()) {
      auto sum = bento::cli::cmd_train(pipeline, config_path, data_dir, out_dir,
                                       resume_path, force);
      std::cout << "trained to step " << sum.final_step << ", best "
                << sum.best << (sum.reached_target ? " (target reached)" : "")
                << "\n";
      return 0;
    }
    if (generate->parsed()) {
      int n = bento::cli::cmd_generate(pipeline, checkpoint_path, input,
                                       samples, seed, out_dir);
      std::cout << "wrote " << n << " samples to " << out_dir << "\n";
      return 0;
    }
    if (eval->parsed()) {
      std::cout << bento::cli::cmd_eval(pipeline, checkpoint_path, data_dir);
      return 0;
    }
    if (gradcheck->parsed()) {
      int failed = bento::cli::cmd_gradcheck(module, std::cout);
      return failed == 0 ? 0 : 3;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
