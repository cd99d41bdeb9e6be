#pragma once

// Experiment runner: loads a dataset, trains with one of the learning
// rules, and records misclassification per epoch (epoch 0 is the untrained
// network). Metrics go to <out>/metrics.csv, flushed after every epoch, and
// <out>/summary.json, which also echoes the full configuration.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "er/data.hpp"
#include "er/errors.hpp"
#include "er/network.hpp"
#include "er/trainers.hpp"

namespace er {

enum class DatasetKind { mnist, cifar10, moons };

inline std::string_view dataset_name(DatasetKind d) {
  switch (d) {
    case DatasetKind::mnist: return "mnist";
    case DatasetKind::cifar10: return "cifar10";
    case DatasetKind::moons: return "moons";
  }
  return "?";
}

inline DatasetKind parse_dataset(std::string_view name) {
  for (auto d : {DatasetKind::mnist, DatasetKind::cifar10, DatasetKind::moons}) {
    if (dataset_name(d) == name) return d;
  }
  throw ConfigError("unknown dataset '" + std::string(name) + "' (expected mnist, cifar10 or moons)");
}

struct ExperimentConfig {
  std::string label;
  TrainConfig train;
  DatasetKind dataset = DatasetKind::moons;
  std::vector<Index> dims;
  std::filesystem::path data_dir;
  /// Output directory; nothing is written when empty.
  std::filesystem::path out;
  std::optional<std::filesystem::path> checkpoint;
  /// Stratified subsets, drawn with the training seed.
  std::optional<Index> train_rows;
  std::optional<Index> test_rows;
  double init_scale = 1.0;
  /// Append a constant-1 input column; dims[0] counts it.
  bool bias = false;
  /// When false every wall_ms is 0, making reruns byte-identical.
  bool record_wall_time = true;
  Index moons_samples = 400;
  double moons_noise = 0.1;

  Index input_features() const {
    switch (dataset) {
      case DatasetKind::mnist: return 784;
      case DatasetKind::cifar10: return static_cast<Index>(kCifarPixels);
      case DatasetKind::moons: return 2;
    }
    return 0;
  }

  /// Rejects inconsistent settings before any data is touched.
  void validate() const {
    train.validate();
    validate_dims(dims);
    if (!(init_scale > 0.0) || !std::isfinite(init_scale)) {
      throw ConfigError("init scale must be a positive finite number");
    }
    const Index expected_in = input_features() + (bias ? 1 : 0);
    if (dims.front() != expected_in) {
      throw ConfigError("first layer size " + std::to_string(dims.front()) + " does not match " +
                        std::to_string(expected_in) + " input features of " +
                        std::string(dataset_name(dataset)) + (bias ? " plus bias column" : ""));
    }
    const Index classes = dataset == DatasetKind::moons ? 2 : 10;
    const bool binary_ok = dataset == DatasetKind::moons && dims.back() == 1;
    if (dims.back() != classes && !binary_ok) {
      throw ConfigError("last layer size " + std::to_string(dims.back()) + " does not match " +
                        std::to_string(classes) + " classes");
    }
    if (train.algorithm == Algorithm::er_single && dims.size() != 2) {
      throw ConfigError("er-single trains a network without hidden layers; give two layer sizes");
    }
    if (dataset != DatasetKind::moons && !std::filesystem::is_directory(data_dir)) {
      throw ConfigError("data directory '" + data_dir.string() + "' does not exist");
    }
    if (train_rows && *train_rows < 1) throw ConfigError("train rows must be positive");
    if (test_rows && *test_rows < 1) throw ConfigError("test rows must be positive");
    if (dataset == DatasetKind::moons && (moons_samples < 2 || moons_samples % 2 != 0)) {
      throw ConfigError("moons sample count must be an even number >= 2");
    }
  }
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_error = 0.0;
  double test_error = 0.0;
  std::int64_t wall_ms = 0;
  std::vector<double> dw_norms;

  bool operator==(const EpochRecord&) const = default;
};

struct RunMetrics {
  nlohmann::json config;
  std::vector<EpochRecord> records;
  /// 0.5 * ||y_hat - Y||^2 on the training set, one entry per record.
  std::vector<double> train_loss;

  const EpochRecord& final_record() const { return records.back(); }
  bool operator==(const RunMetrics&) const = default;
};

inline nlohmann::json to_json(const ExperimentConfig& c) {
  nlohmann::json j;
  j["label"] = c.label;
  j["algorithm"] = std::string(algorithm_name(c.train.algorithm));
  j["alpha"] = c.train.alpha;
  j["eta"] = c.train.eta;
  j["batch_size"] = c.train.batch_size ? nlohmann::json(*c.train.batch_size) : nlohmann::json("full");
  j["epochs"] = c.train.epochs;
  j["seed"] = c.train.seed;
  j["dataset"] = std::string(dataset_name(c.dataset));
  j["dims"] = c.dims;
  j["data_dir"] = c.data_dir.string();
  j["train_rows"] = c.train_rows ? nlohmann::json(*c.train_rows) : nlohmann::json("all");
  j["test_rows"] = c.test_rows ? nlohmann::json(*c.test_rows) : nlohmann::json("all");
  j["init_scale"] = c.init_scale;
  j["bias"] = c.bias;
  if (c.dataset == DatasetKind::moons) {
    j["moons_samples"] = c.moons_samples;
    j["moons_noise"] = c.moons_noise;
  }
  return j;
}

// ---------------------------------------------------------------------------
// Serialization

inline constexpr const char* kCsvHeader = "epoch,train_error,test_error,wall_ms,dw_norms";

namespace detail {

inline std::string exact(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace detail

inline std::string csv_row(const EpochRecord& r) {
  std::string row = std::to_string(r.epoch) + "," + detail::exact(r.train_error) + "," +
                    detail::exact(r.test_error) + "," + std::to_string(r.wall_ms) + ",";
  for (std::size_t i = 0; i < r.dw_norms.size(); ++i) {
    if (i > 0) row += ";";
    row += detail::exact(r.dw_norms[i]);
  }
  return row;
}

inline std::string to_csv(const RunMetrics& m) {
  std::string out = std::string(kCsvHeader) + "\n";
  for (const auto& r : m.records) out += csv_row(r) + "\n";
  return out;
}

/// Parses the CSV written by to_csv. Only the per-epoch records are
/// carried by CSV; config and losses live in the JSON summary.
inline std::vector<EpochRecord> records_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kCsvHeader) {
    throw FormatError("metrics CSV: missing or wrong header", 0);
  }
  std::vector<EpochRecord> records;
  std::size_t offset = line.size() + 1;
  while (std::getline(in, line)) {
    if (line.empty()) {
      offset += 1;
      continue;
    }
    std::vector<std::string> fields;
    std::size_t start = 0;
    for (;;) {
      const auto comma = line.find(',', start);
      fields.push_back(line.substr(start, comma - start));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    if (fields.size() != 5) throw FormatError("metrics CSV: expected 5 fields", offset);
    try {
      EpochRecord r;
      r.epoch = std::stoul(fields[0]);
      r.train_error = std::stod(fields[1]);
      r.test_error = std::stod(fields[2]);
      r.wall_ms = std::stoll(fields[3]);
      std::size_t pos = 0;
      while (pos < fields[4].size()) {
        const auto semi = fields[4].find(';', pos);
        r.dw_norms.push_back(std::stod(fields[4].substr(pos, semi - pos)));
        if (semi == std::string::npos) break;
        pos = semi + 1;
      }
      records.push_back(std::move(r));
    } catch (const std::logic_error&) {
      throw FormatError("metrics CSV: malformed number", offset);
    }
    offset += line.size() + 1;
  }
  return records;
}

inline nlohmann::json to_json(const RunMetrics& m) {
  nlohmann::json j;
  j["config"] = m.config;
  auto& epochs = j["epochs"] = nlohmann::json::array();
  for (std::size_t i = 0; i < m.records.size(); ++i) {
    const auto& r = m.records[i];
    epochs.push_back({{"epoch", r.epoch},
                      {"train_error", r.train_error},
                      {"test_error", r.test_error},
                      {"wall_ms", r.wall_ms},
                      {"dw_norms", r.dw_norms},
                      {"train_loss", i < m.train_loss.size() ? m.train_loss[i] : 0.0}});
  }
  if (!m.records.empty()) {
    j["summary"] = {{"epochs_run", m.records.back().epoch},
                    {"initial_test_error", m.records.front().test_error},
                    {"final_train_error", m.records.back().train_error},
                    {"final_test_error", m.records.back().test_error}};
  }
  return j;
}

inline RunMetrics metrics_from_json(const nlohmann::json& j) {
  RunMetrics m;
  m.config = j.at("config");
  for (const auto& e : j.at("epochs")) {
    EpochRecord r;
    r.epoch = e.at("epoch").get<std::size_t>();
    r.train_error = e.at("train_error").get<double>();
    r.test_error = e.at("test_error").get<double>();
    r.wall_ms = e.at("wall_ms").get<std::int64_t>();
    r.dw_norms = e.at("dw_norms").get<std::vector<double>>();
    m.records.push_back(std::move(r));
    m.train_loss.push_back(e.at("train_loss").get<double>());
  }
  return m;
}

// ---------------------------------------------------------------------------
// Running

/// Loads (or generates) the train/test split an experiment asks for,
/// after subsetting and the optional bias column.
inline DatasetSplit prepare_data(const ExperimentConfig& c) {
  DatasetSplit split;
  switch (c.dataset) {
    case DatasetKind::mnist: split = load_mnist(c.data_dir); break;
    case DatasetKind::cifar10: split = load_cifar10(c.data_dir); break;
    case DatasetKind::moons:
      split.train = synth_two_moons(c.moons_samples, c.moons_noise, c.train.seed);
      split.test = synth_two_moons(c.moons_samples, c.moons_noise, c.train.seed + 1);
      split.test.name = "two-moons-test";
      if (c.dims.back() == 1) {
        split.train = binary_targets(split.train);
        split.test = binary_targets(split.test);
      }
      break;
  }
  if (c.train_rows && *c.train_rows < split.train.rows()) {
    split.train = subset(split.train, *c.train_rows, c.train.seed);
  }
  if (c.test_rows && *c.test_rows < split.test.rows()) {
    split.test = subset(split.test, *c.test_rows, c.train.seed);
  }
  if (c.bias) {
    split.train = with_bias_column(split.train);
    split.test = with_bias_column(split.test);
  }
  return split;
}

namespace detail {

inline StepReport train_one_epoch(MlpState& state, const Dataset& train, const TrainConfig& t,
                                  std::size_t epoch_index) {
  switch (t.algorithm) {
    case Algorithm::bp:
      if (t.batch_size) {
        return bp_epoch(state, train.x, train.y_hat, t.eta, *t.batch_size, t.seed, epoch_index);
      }
      return bp_step(state, train.x, train.y_hat, t.eta);
    case Algorithm::er_single: return er_single_step(state, train.x, train.y_hat, t.alpha);
    case Algorithm::er_alg1: return er_alg1_step(state, train.x, train.y_hat, t.alpha);
    case Algorithm::er_alg2: return er_alg2_step(state, train.x, train.y_hat, t.alpha);
    case Algorithm::er_naive_target:
      return er_naive_target_step(state, train.x, train.y_hat, t.alpha);
    case Algorithm::er_minibatch:
      return er_minibatch_epoch(state, train.x, train.y_hat, t, epoch_index);
  }
  throw ConfigError("unhandled algorithm");
}

}  // namespace detail

/// Trains on an already prepared split. Writes nothing.
inline RunMetrics run_on(const ExperimentConfig& c, const DatasetSplit& data,
                         MlpState* final_state = nullptr, std::ostream* csv = nullptr) {
  c.validate();
  RunMetrics metrics;
  metrics.config = to_json(c);
  metrics.config["train_rows_used"] = data.train.rows();
  metrics.config["test_rows_used"] = data.test.rows();
  MlpState state = init(c.dims, InitSpec{c.train.seed, c.init_scale});

  const auto evaluate = [&](std::size_t epoch, std::int64_t wall_ms, std::vector<double> norms) {
    const Matrix y_train = predict(state, data.train.x);
    EpochRecord r{epoch, misclassification_rate(y_train, data.train.y_hat),
                  misclassification_rate(predict(state, data.test.x), data.test.y_hat),
                  c.record_wall_time ? wall_ms : 0, std::move(norms)};
    metrics.train_loss.push_back(half_squared_error(y_train, data.train.y_hat));
    if (csv != nullptr) *csv << csv_row(r) << "\n" << std::flush;
    metrics.records.push_back(std::move(r));
  };

  evaluate(0, 0, {});
  for (std::size_t e = 1; e <= c.train.epochs; ++e) {
    const auto t0 = std::chrono::steady_clock::now();
    StepReport report = detail::train_one_epoch(state, data.train, c.train, e - 1);
    const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                        std::chrono::steady_clock::now() - t0)
                        .count();
    evaluate(e, ms, std::move(report.dw_norms));
  }
  if (final_state != nullptr) *final_state = std::move(state);
  return metrics;
}

/// Validates, loads data, trains, and writes metrics (and an optional
/// checkpoint) under c.out.
inline RunMetrics run_experiment(const ExperimentConfig& c) {
  c.validate();
  const DatasetSplit data = prepare_data(c);
  std::ofstream csv;
  if (!c.out.empty()) {
    std::filesystem::create_directories(c.out);
    csv.open(c.out / "metrics.csv", std::ios::trunc);
    if (!csv) throw Error("cannot write " + (c.out / "metrics.csv").string());
    csv << kCsvHeader << "\n" << std::flush;
  }
  MlpState state;
  RunMetrics metrics = run_on(c, data, &state, c.out.empty() ? nullptr : &csv);
  if (!c.out.empty()) {
    std::ofstream json(c.out / "summary.json", std::ios::trunc);
    json << to_json(metrics).dump(2) << "\n";
  }
  if (c.checkpoint) save_checkpoint(state, *c.checkpoint);
  return metrics;
}

struct ComparisonRow {
  std::string label;
  std::string algorithm;
  double initial_test_error = 0.0;
  double first_train_error = 0.0;
  double first_test_error = 0.0;
  double final_train_error = 0.0;
  double final_test_error = 0.0;

  bool operator==(const ComparisonRow&) const = default;
};

struct ComparisonTable {
  std::vector<ComparisonRow> rows;
  std::vector<RunMetrics> runs;

  bool operator==(const ComparisonTable&) const = default;
};

inline ComparisonTable compare_algorithms(const std::vector<ExperimentConfig>& configs) {
  if (configs.size() < 2) throw ConfigError("compare_algorithms needs at least two configurations");
  for (const auto& c : configs) c.validate();
  ComparisonTable table;
  for (const auto& c : configs) {
    RunMetrics m = run_experiment(c);
    const auto& first = m.records.size() > 1 ? m.records[1] : m.records[0];
    table.rows.push_back({c.label.empty() ? std::string(algorithm_name(c.train.algorithm)) : c.label,
                          std::string(algorithm_name(c.train.algorithm)),
                          m.records.front().test_error, first.train_error, first.test_error,
                          m.final_record().train_error, m.final_record().test_error});
    table.runs.push_back(std::move(m));
  }
  return table;
}

/// Fixed-width text rendering, errors in percent.
inline std::string format_table(const ComparisonTable& t) {
  std::string out;
  char line[200];
  std::snprintf(line, sizeof(line), "%-20s %-13s %9s %9s %9s %9s %9s\n", "run", "algorithm",
                "test@0", "train@1", "test@1", "train", "test");
  out += line;
  for (const auto& r : t.rows) {
    std::snprintf(line, sizeof(line), "%-20s %-13s %8.2f%% %8.2f%% %8.2f%% %8.2f%% %8.2f%%\n",
                  r.label.c_str(), r.algorithm.c_str(), 100 * r.initial_test_error,
                  100 * r.first_train_error, 100 * r.first_test_error, 100 * r.final_train_error,
                  100 * r.final_test_error);
    out += line;
  }
  return out;
}

}  // namespace er
