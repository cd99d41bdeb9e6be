// er: command-line experiment runner.
//
//   er run --algo er-alg2 --dataset mnist --dims 784,256,64,10 --alpha 0.03
//          --init-scale 0.1 --data-dir data/mnist-sample --out runs/alg2
//   er run --preset mnist-small --out runs/small
//   er compare --algos er-alg2,er-alg1 --preset mnist-small

#include <cstdio>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "er/harness.hpp"

namespace {

struct Preset {
  const char* name;
  const char* description;
  er::ExperimentConfig config;
};

er::ExperimentConfig preset_config(er::DatasetKind dataset, std::vector<er::Index> dims,
                                   er::Algorithm algo, double alpha, std::size_t epochs) {
  er::ExperimentConfig c;
  c.dataset = dataset;
  c.dims = std::move(dims);
  c.train.algorithm = algo;
  c.train.alpha = alpha;
  c.train.epochs = epochs;
  c.train.seed = 42;
  return c;
}

std::vector<Preset> presets() {
  std::vector<Preset> out;

  auto small = preset_config(er::DatasetKind::mnist, {784, 256, 64, 10}, er::Algorithm::er_alg2,
                             0.03, 1);
  small.train_rows = 10000;
  small.init_scale = 0.1;
  small.data_dir = "data/mnist-sample";
  out.push_back({"mnist-small", "one full-batch step, 784-256-64-10 on up to 10k rows", small});

  auto mini = small;
  mini.train.algorithm = er::Algorithm::er_minibatch;
  mini.train.alpha = 1.0;
  mini.train.eta = 0.1;
  mini.train.batch_size = 128;
  mini.train.epochs = 10;
  out.push_back({"mnist-minibatch", "alpha 1, eta 0.1, batch 128, 10 epochs", mini});

  auto full = preset_config(er::DatasetKind::mnist, {784, 1750, 475, 10}, er::Algorithm::er_alg2,
                             0.03, 100);
  full.init_scale = 0.1;
  out.push_back({"mnist-full", "full MNIST, 784-1750-475-10, 100 updates", full});

  auto cifar = preset_config(er::DatasetKind::cifar10, {3072, 2750, 250, 10},
                             er::Algorithm::er_alg2, 0.03, 100);
  cifar.init_scale = 0.1;
  out.push_back({"cifar-full", "full CIFAR-10, 3072-2750-250-10, 100 updates", cifar});

  auto moons = preset_config(er::DatasetKind::moons, {2, 8, 4, 1}, er::Algorithm::er_alg2, 0.0, 1);
  moons.train.seed = 0;
  out.push_back({"moons", "two moons, 400 points, 2-8-4-1 binary output", moons});
  return out;
}

std::vector<er::Index> parse_dims(const std::string& text) {
  std::vector<er::Index> dims;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      const long long v = std::stoll(item, &used);
      if (used != item.size()) throw std::invalid_argument(item);
      dims.push_back(static_cast<er::Index>(v));
    } catch (const std::logic_error&) {
      throw er::ConfigError("--dims: '" + item + "' is not an integer");
    }
  }
  return dims;
}

// Flags shared by `run` and `compare`. Presets are applied first; explicit
// flags then override individual fields.
struct Flags {
  std::string preset;
  std::string algo;
  std::string dataset;
  std::string dims;
  double alpha = 0.0;
  double eta = 1.0;
  long long batch = 0;
  std::size_t epochs = 1;
  std::uint64_t seed = 0;
  std::string data_dir;
  std::string out;
  long long train_rows = 0;
  long long test_rows = 0;
  double init_scale = 1.0;
  bool bias = false;
  bool no_timing = false;
  std::string checkpoint;

  std::vector<CLI::Option*> opts;

  void attach(CLI::App* app, bool with_algo) {
    app->add_option("--preset", preset, "Start from a named preset (see `er presets`)");
    if (with_algo) {
      opts.push_back(app->add_option("--algo", algo, "bp|er-single|er-alg1|er-alg2|er-naive|er-minibatch"));
    }
    opts.push_back(app->add_option("--dataset", dataset, "mnist|cifar10|moons"));
    opts.push_back(app->add_option("--dims", dims, "Layer sizes, e.g. 784,256,64,10"));
    opts.push_back(app->add_option("--alpha", alpha, "Ridge coefficient"));
    opts.push_back(app->add_option("--eta", eta, "BP learning rate or mini-batch interpolation rate"));
    opts.push_back(app->add_option("--batch", batch, "Batch size (bp, er-minibatch)"));
    opts.push_back(app->add_option("--epochs", epochs, "Training epochs / full-batch steps"));
    opts.push_back(app->add_option("--seed", seed, "Seed for init, shuffling and subsets"));
    opts.push_back(app->add_option("--data-dir", data_dir, "Directory holding the dataset files"));
    opts.push_back(app->add_option("--out", out, "Output directory for metrics.csv and summary.json"));
    opts.push_back(app->add_option("--train-rows", train_rows, "Stratified training subset size"));
    opts.push_back(app->add_option("--test-rows", test_rows, "Stratified test subset size"));
    opts.push_back(app->add_option("--init-scale", init_scale, "Init std is scale / sqrt(fan_in)"));
    opts.push_back(app->add_flag("--bias", bias, "Append a constant-1 input column"));
    opts.push_back(app->add_flag("--no-timing", no_timing, "Record wall_ms as 0"));
    opts.push_back(app->add_option("--checkpoint", checkpoint, "Write final weights here"));
  }

  bool given(const char* name) const {
    for (auto* o : opts) {
      if (o->check_name(name)) return o->count() > 0;
    }
    return false;
  }

  er::ExperimentConfig build() const {
    er::ExperimentConfig c;
    if (!preset.empty()) {
      bool found = false;
      for (const auto& p : presets()) {
        if (preset == p.name) {
          c = p.config;
          found = true;
        }
      }
      if (!found) throw er::ConfigError("unknown preset '" + preset + "'");
    }
    if (given("--algo")) c.train.algorithm = er::parse_algorithm(algo);
    if (given("--dataset")) c.dataset = er::parse_dataset(dataset);
    if (given("--dims")) c.dims = parse_dims(dims);
    if (given("--alpha")) c.train.alpha = alpha;
    if (given("--eta")) c.train.eta = eta;
    if (given("--batch")) {
      if (batch < 1) throw er::ConfigError("--batch must be positive");
      c.train.batch_size = batch;
    }
    if (given("--epochs")) c.train.epochs = epochs;
    if (given("--seed")) c.train.seed = seed;
    if (given("--data-dir")) c.data_dir = data_dir;
    if (given("--out")) c.out = out;
    if (given("--train-rows")) c.train_rows = train_rows;
    if (given("--test-rows")) c.test_rows = test_rows;
    if (given("--init-scale")) c.init_scale = init_scale;
    if (bias) c.bias = true;
    if (no_timing) c.record_wall_time = false;
    if (given("--checkpoint")) c.checkpoint = checkpoint;
    if (c.dims.empty()) throw er::ConfigError("--dims is required without a preset");
    return c;
  }
};

void print_run(const er::RunMetrics& m) {
  std::printf("%5s %12s %12s %10s\n", "epoch", "train_error", "test_error", "wall_ms");
  for (const auto& r : m.records) {
    std::printf("%5zu %11.2f%% %11.2f%% %10lld\n", r.epoch, 100 * r.train_error,
                100 * r.test_error, static_cast<long long>(r.wall_ms));
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Expectation Reflection training and comparison runs"};
  app.require_subcommand(1);

  Flags run_flags;
  auto* run = app.add_subcommand("run", "Train one configuration and record per-epoch errors");
  run_flags.attach(run, true);

  Flags cmp_flags;
  std::string algos;
  auto* cmp = app.add_subcommand("compare", "Run several algorithms on one shared setup");
  cmp_flags.attach(cmp, false);
  cmp->add_option("--algos", algos, "Comma-separated algorithms, at least two")->required();

  auto* list = app.add_subcommand("presets", "List the built-in presets");

  CLI11_PARSE(app, argc, argv);

  try {
    if (list->parsed()) {
      for (const auto& p : presets()) std::printf("%-16s %s\n", p.name, p.description);
      return 0;
    }
    if (run->parsed()) {
      const auto config = run_flags.build();
      print_run(er::run_experiment(config));
      if (!config.out.empty()) std::printf("wrote %s\n", config.out.string().c_str());
      return 0;
    }
    const auto base = cmp_flags.build();
    std::vector<er::ExperimentConfig> configs;
    std::stringstream ss(algos);
    std::string name;
    while (std::getline(ss, name, ',')) {
      auto c = base;
      c.train.algorithm = er::parse_algorithm(name);
      c.label = name;
      if (!base.out.empty()) c.out = base.out / name;
      configs.push_back(std::move(c));
    }
    std::fputs(er::format_table(er::compare_algorithms(configs)).c_str(), stdout);
    return 0;
  } catch (const er::ConfigError& e) {
    std::fprintf(stderr, "configuration error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
