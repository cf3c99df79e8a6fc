#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "alphappo/alpha_dsl.hpp"
#include "alphappo/common.hpp"
#include "alphappo/pipeline.hpp"

namespace fs = std::filesystem;
using namespace alphappo;

namespace {

void print_written(const std::vector<fs::path>& paths) {
  for (const auto& p : paths) std::cout << "wrote " << p.string() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"alphappo: formulaic alphas, PPO alpha weighting and backtests"};
  app.require_subcommand(1);

  std::string config_path;
  std::string data_override;
  std::string output_override;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("-c,--config", config_path, "run configuration (JSON)")->required()->check(CLI::ExistingFile);
    sub->add_option("--data", data_override, "override data_path");
    sub->add_option("-o,--output-dir", output_override, "override output_dir");
  };

  auto* features = app.add_subcommand("features", "compute indicator and risk columns, write features.csv");
  auto* eval = app.add_subcommand("eval-alphas", "IC, MI and gain importance per alpha on the training split");
  auto* select = app.add_subcommand("select", "apply the configured alpha selection");
  auto* train = app.add_subcommand("train", "train the PPO weight policy, write a checkpoint");
  auto* backtest = app.add_subcommand("backtest", "evaluate a checkpoint on the test split");
  auto* report = app.add_subcommand("report", "summarize the artifacts in output_dir");
  for (auto* sub : {features, eval, select, train, backtest, report}) add_common(sub);

  std::string checkpoint;
  backtest->add_option("--checkpoint", checkpoint, "checkpoint file (default: output_dir/checkpoint.json)");

  auto* prompt = app.add_subcommand("prompt", "render the alpha-generation prompt for a feature list");
  std::vector<std::string> prompt_features;
  prompt->add_option("features", prompt_features, "feature names")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (prompt->parsed()) {
      std::cout << render_prompt(prompt_features);
      return 0;
    }
    auto config = pipeline::load_config(config_path);
    if (!data_override.empty()) config.data_path = data_override;
    if (!output_override.empty()) config.output_dir = output_override;

    if (features->parsed()) print_written(pipeline::cmd_features(config));
    if (eval->parsed()) print_written(pipeline::cmd_eval_alphas(config));
    if (select->parsed()) print_written(pipeline::cmd_select(config));
    if (train->parsed()) print_written(pipeline::cmd_train(config));
    if (backtest->parsed()) {
      std::optional<fs::path> cp;
      if (!checkpoint.empty()) cp = checkpoint;
      print_written(pipeline::cmd_backtest(config, cp));
    }
    if (report->parsed()) std::cout << pipeline::cmd_report(config);
    return 0;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "failure: " << e.what() << "\n";
    return 2;
  }
}
