#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "mixerflow/substrate/errors.hpp"
#include "mixerflow/train/commands.hpp"

int main(int argc, char** argv) {
  CLI::App app{"MixerFlow: normalizing flows on patch mixer matrices"};
  app.require_subcommand(1);

  mixerflow::TrainOptions train;
  std::string train_data, train_shuffle, train_out;
  std::uint64_t train_steps = 0, train_seed = 0;
  std::size_t train_batch = 0;
  auto* train_cmd = app.add_subcommand("train", "train a model from a config file");
  train_cmd->add_option("--config", train.config, "key = value config file")->required()->check(CLI::ExistingFile);
  auto* o_data = train_cmd->add_option("--data-dir", train_data, "dataset directory");
  auto* o_steps = train_cmd->add_option("--steps", train_steps, "optimizer steps");
  auto* o_batch = train_cmd->add_option("--batch-size", train_batch, "batch size");
  auto* o_seed = train_cmd->add_option("--seed", train_seed, "run seed");
  auto* o_shuffle = train_cmd->add_option("--shuffle", train_shuffle, "pixel shuffle")->check(CLI::IsMember({"none", "local", "global"}));
  auto* o_out = train_cmd->add_option("--out", train_out, "output directory");

  std::string eval_checkpoint, eval_data, eval_split = "val";
  auto* eval_cmd = app.add_subcommand("eval", "bits per dimension of a checkpoint on a split");
  eval_cmd->add_option("--checkpoint", eval_checkpoint)->required();
  auto* o_eval_data = eval_cmd->add_option("--data-dir", eval_data);
  eval_cmd->add_option("--split", eval_split)->check(CLI::IsMember({"train", "val", "test"}));

  std::string sample_checkpoint, sample_out = "samples";
  std::size_t sample_count = 16;
  std::uint64_t sample_seed = 0;
  auto* sample_cmd = app.add_subcommand("sample", "draw images from a checkpoint");
  sample_cmd->add_option("--checkpoint", sample_checkpoint)->required();
  sample_cmd->add_option("--count", sample_count);
  sample_cmd->add_option("--seed", sample_seed);
  sample_cmd->add_option("--out", sample_out);

  std::string check_scope = "all";
  auto* check_cmd = app.add_subcommand("check", "run the verification suite");
  check_cmd->add_option("--scope", check_scope)->check(CLI::IsMember({"layers", "model", "gradients", "data", "all"}));

  std::string gradcheck_config;
  auto* gradcheck_cmd = app.add_subcommand("gradcheck", "finite-difference check of a configured model");
  gradcheck_cmd->add_option("--config", gradcheck_config)->required()->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train_cmd) {
      if (*o_data) train.data_dir = train_data;
      if (*o_steps) train.steps = train_steps;
      if (*o_batch) train.batch_size = train_batch;
      if (*o_seed) train.seed = train_seed;
      if (*o_shuffle) train.shuffle = train_shuffle;
      if (*o_out) train.out_dir = train_out;
      return mixerflow::train_command(train, std::cout);
    }
    if (*eval_cmd) {
      std::optional<std::string> dir;
      if (*o_eval_data) dir = eval_data;
      return mixerflow::eval_command(eval_checkpoint, dir, eval_split, std::cout);
    }
    if (*sample_cmd) return mixerflow::sample_command(sample_checkpoint, sample_count, sample_seed, sample_out, std::cout);
    if (*check_cmd) return mixerflow::check_command(check_scope, std::cout);
    if (*gradcheck_cmd) return mixerflow::gradcheck_command(gradcheck_config, std::cout);
  } catch (const mixerflow::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const mixerflow::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
