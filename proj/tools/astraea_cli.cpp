#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "astraea/config.hpp"
#include "astraea/error.hpp"

namespace {

// Options left unset on the command line do not override the config file.
template <typename T>
void put(nlohmann::json& overrides, const std::string& key, const std::optional<T>& value) {
  if (value) overrides[key] = *value;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Self-balancing federated learning simulator"};
  app.set_version_flag("--version", std::string(ASTRAEA_VERSION));

  std::optional<std::string> config_path, mode, optimizer, out_dir, dataset, idx_images, idx_labels;
  std::optional<std::size_t> k, b, c, gamma, local_epochs, mediator_epochs, rounds, threads;
  std::optional<std::uint64_t> seed;
  std::optional<double> alpha, lr, target;
  bool static_schedule = false;

  app.add_option("--config", config_path, "JSON config file")->check(CLI::ExistingFile);
  app.add_option("--mode", mode, "astraea | fedavg | proposition-check | schedule-only");
  app.add_option("--k", k, "number of clients K");
  app.add_option("--b", b, "mini-batch size B");
  app.add_option("--c", c, "clients sampled per round");
  app.add_option("--alpha", alpha, "augmentation strength in [0, 1]");
  app.add_option("--gamma", gamma, "max clients per mediator");
  app.add_option("--local-epochs", local_epochs, "local epochs E");
  app.add_option("--mediator-epochs", mediator_epochs, "mediator epochs E_m");
  app.add_option("--rounds", rounds, "communication rounds R");
  app.add_option("--seed", seed, "root seed");
  app.add_option("--optimizer", optimizer, "sgd | adam");
  app.add_option("--lr", lr, "learning rate");
  app.add_flag("--static-schedule", static_schedule, "compute one schedule and reuse it every round");
  app.add_option("--out-dir", out_dir, "output directory");
  app.add_option("--dataset", dataset, "synthetic | idx");
  app.add_option("--idx-images", idx_images, "IDX image file");
  app.add_option("--idx-labels", idx_labels, "IDX label file");
  app.add_option("--threads", threads, "worker threads for mediators");
  app.add_option("--target-accuracy", target, "report traffic needed to reach this accuracy");

  CLI11_PARSE(app, argc, argv);

  nlohmann::json overrides = nlohmann::json::object();
  put(overrides, "mode", mode);
  put(overrides, "k", k);
  put(overrides, "b", b);
  put(overrides, "c", c);
  put(overrides, "alpha", alpha);
  put(overrides, "gamma", gamma);
  put(overrides, "local_epochs", local_epochs);
  put(overrides, "mediator_epochs", mediator_epochs);
  put(overrides, "rounds", rounds);
  put(overrides, "seed", seed);
  put(overrides, "optimizer", optimizer);
  put(overrides, "lr", lr);
  put(overrides, "out_dir", out_dir);
  put(overrides, "dataset", dataset);
  put(overrides, "idx_images", idx_images);
  put(overrides, "idx_labels", idx_labels);
  put(overrides, "threads", threads);
  put(overrides, "target_accuracy", target);
  if (static_schedule) overrides["static_schedule"] = true;

  try {
    std::optional<std::filesystem::path> path;
    if (config_path) path = *config_path;
    const astraea::RunConfig config = astraea::resolve_config(path, overrides);
    return astraea::run(config, std::cout);
  } catch (const astraea::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}
