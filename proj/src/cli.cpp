#include "fedcollab/cli.hpp"

#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <memory>
#include <sstream>
#include <tuple>

#include <CLI11.hpp>

#include "fedcollab/errors.hpp"
#include "fedcollab/pate.hpp"
#include "fedcollab/synthetic.hpp"

namespace fedcollab {

namespace {

// Stream labels for the independent randomness each stage derives from the
// master seed.
constexpr std::uint64_t kSynthTrainStream = 11;
constexpr std::uint64_t kSynthTestStream = 12;
constexpr std::uint64_t kSubsetTrainStream = 13;
constexpr std::uint64_t kSubsetTestStream = 14;
constexpr std::uint64_t kLabelStream = 15;

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

[[noreturn]] void invalid_value(const std::string& where, const std::string& key,
                                const std::string& value) {
  throw ConfigError(where + ": invalid value '" + value + "' for " + key);
}

std::uint64_t parse_count(const std::string& value, const std::string& where,
                          const std::string& key, std::uint64_t min_value) {
  if (value.empty() || !std::isdigit(static_cast<unsigned char>(value[0]))) {
    invalid_value(where, key, value);
  }
  errno = 0;
  char* end = nullptr;
  const std::uint64_t parsed = std::strtoull(value.c_str(), &end, 10);
  if (errno != 0 || end != value.c_str() + value.size() || parsed < min_value) {
    invalid_value(where, key, value);
  }
  return parsed;
}

double parse_real(const std::string& value, const std::string& where, const std::string& key) {
  if (value.empty()) invalid_value(where, key, value);
  errno = 0;
  char* end = nullptr;
  const double parsed = std::strtod(value.c_str(), &end);
  if (errno != 0 || end != value.c_str() + value.size() || !std::isfinite(parsed)) {
    invalid_value(where, key, value);
  }
  return parsed;
}

std::vector<std::size_t> parse_size_list(const std::string& value, const std::string& where,
                                         const std::string& key) {
  std::vector<std::size_t> sizes;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    sizes.push_back(parse_count(item, where, key, 1));
  }
  if (sizes.empty()) invalid_value(where, key, value);
  return sizes;
}

// Applies one key to the config. `where` identifies the source ("line 3" or
// "flag --workers") so every error names both the location and the key.
void apply_key(ExperimentConfig& cfg, const std::string& key, const std::string& value,
               const std::string& where) {
  if (key == "workers") {
    cfg.protocol.workers = parse_count(value, where, key, 1);
  } else if (key == "epochs") {
    cfg.protocol.train.epochs = parse_count(value, where, key, 0);
  } else if (key == "batch_size") {
    cfg.protocol.train.batch_size = parse_count(value, where, key, 1);
  } else if (key == "learning_rate") {
    const double lr = parse_real(value, where, key);
    if (lr <= 0.0) invalid_value(where, key, value);
    cfg.protocol.train.learning_rate = lr;
  } else if (key == "seed") {
    cfg.protocol.train.seed = parse_count(value, where, key, 0);
  } else if (key == "hidden_sizes") {
    cfg.protocol.train.hidden_sizes = parse_size_list(value, where, key);
  } else if (key == "reduction") {
    if (value == "sum") {
      cfg.protocol.reduction = Reduction::Sum;
    } else if (value == "average") {
      cfg.protocol.reduction = Reduction::Average;
    } else {
      invalid_value(where, key, value);
    }
  } else if (key == "fractional_bits") {
    cfg.protocol.fractional_bits = static_cast<unsigned>(parse_count(value, where, key, 1));
  } else if (key == "gamma") {
    if (value == "inf" || value == "infinity") {
      cfg.gamma = std::numeric_limits<double>::infinity();
    } else {
      const double g = parse_real(value, where, key);
      if (g <= 0.0) invalid_value(where, key, value);
      cfg.gamma = g;
    }
  } else if (key == "queries") {
    cfg.queries = parse_count(value, where, key, 0);
  } else if (key == "dataset") {
    if (value != "synthetic" && value != "idx") invalid_value(where, key, value);
    cfg.dataset = value;
  } else if (key == "data_dir") {
    cfg.data_dir = value;
  } else if (key == "train_images") {
    cfg.train_images = value;
  } else if (key == "train_labels") {
    cfg.train_labels = value;
  } else if (key == "test_images") {
    cfg.test_images = value;
  } else if (key == "test_labels") {
    cfg.test_labels = value;
  } else if (key == "train_limit") {
    cfg.train_limit = parse_count(value, where, key, 0);
  } else if (key == "test_limit") {
    cfg.test_limit = parse_count(value, where, key, 0);
  } else if (key == "metrics_out") {
    cfg.metrics_out = value;
  } else if (key == "labels_out") {
    cfg.labels_out = value;
  } else if (key == "message_log_out") {
    cfg.message_log_out = value;
  } else {
    throw ConfigError(where + ": unknown key '" + key + "'");
  }
}

std::string format_real(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

std::ofstream open_output(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot open for writing: " + path);
  return out;
}

void run_train(Action action, const ExperimentConfig& config, std::ostream& out) {
  const auto [train, test] = load_datasets(config);
  const Mode mode = action == Action::TrainFedAvg ? Mode::FedAvg : Mode::FedCollab;
  const TrainingResult result = run_training(mode, config.protocol, train, test);
  for (const auto& entry : result.timeline) {
    double mean_acc = 0.0;
    for (double a : entry.worker_accuracy) mean_acc += a;
    mean_acc /= static_cast<double>(entry.worker_accuracy.size());
    out << "epoch " << entry.round << ": agg_loss=" << format_real(entry.agg_loss)
        << " mean_worker_accuracy=" << format_real(mean_acc)
        << " ensemble_accuracy=" << format_real(entry.ensemble_accuracy) << "\n";
  }
  {
    std::ofstream file = open_output(config.metrics_out);
    write_metrics_csv(result.timeline, file);
  }
  out << "wrote metrics to " << config.metrics_out << "\n";
  if (!config.message_log_out.empty()) {
    std::ofstream file = open_output(config.message_log_out);
    result.log.dump_csv(file);
    out << "wrote message log to " << config.message_log_out << "\n";
  }
}

void run_generate_labels(const ExperimentConfig& config, std::ostream& out) {
  const auto [train, test] = load_datasets(config);
  if (config.queries > test.size()) {
    throw ConfigError("queries (" + std::to_string(config.queries) +
                      ") exceeds the public input pool (" + std::to_string(test.size()) + ")");
  }
  const TrainingResult result =
      run_training(Mode::FedCollab, config.protocol, train, test);
  std::vector<ModelParams> teachers;
  teachers.reserve(result.workers.size());
  for (const auto& worker : result.workers) teachers.push_back(worker.model);
  out << "trained " << teachers.size() << " teachers for " << config.protocol.train.epochs
      << " epochs\n";

  // The held-out test rows act as the public unlabeled pool; their ground
  // truth is never consulted here.
  Tensor2D public_inputs(config.queries, test.images.cols());
  for (std::size_t q = 0; q < config.queries; ++q) {
    std::memcpy(public_inputs.row_ptr(q), test.images.row_ptr(q),
                test.images.cols() * sizeof(double));
  }
  const auto [labeled, ledger] = generate_private_labels(
      teachers, public_inputs, config.gamma, derive_seed(config.protocol.train.seed, kLabelStream));

  {
    std::ofstream file = open_output(config.labels_out);
    file << "query_index,label,epsilon_cumulative\n";
    for (const auto& example : labeled) {
      const double eps = ledger.accounted
                             ? 2.0 * ledger.gamma * static_cast<double>(example.query_index + 1)
                             : 0.0;
      file << example.query_index << ',' << example.label << ',' << format_real(eps) << '\n';
    }
  }
  {
    std::ofstream file = open_output(config.labels_out + ".indices");
    for (const auto& example : labeled) file << example.query_index << '\n';
  }
  out << "wrote " << labeled.size() << " labels to " << config.labels_out << "\n";
  if (ledger.accounted) {
    out << "privacy: epsilon_total=" << format_real(ledger.epsilon_total()) << " delta=0 (gamma="
        << format_real(ledger.gamma) << ", queries=" << ledger.queries << ")\n";
  } else {
    out << "privacy: budget unaccounted (noise disabled)\n";
  }
}

void run_eval(const ExperimentConfig& config, std::ostream& out) {
  std::ifstream labels_file(config.labels_out);
  if (!labels_file) throw InputError("cannot open: " + config.labels_out);
  std::string line;
  if (!std::getline(labels_file, line) || trim(line) != "query_index,label,epsilon_cumulative") {
    throw FormatError(config.labels_out + ": missing or wrong header");
  }
  std::vector<std::pair<std::size_t, int>> generated;
  std::size_t lineno = 1;
  while (std::getline(labels_file, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    std::stringstream ss(line);
    std::string qs, ls;
    if (!std::getline(ss, qs, ',') || !std::getline(ss, ls, ',')) {
      throw FormatError(config.labels_out + " line " + std::to_string(lineno) + ": bad row");
    }
    const std::string where = config.labels_out + " line " + std::to_string(lineno);
    generated.emplace_back(parse_count(trim(qs), where, "query_index", 0),
                           static_cast<int>(parse_count(trim(ls), where, "label", 0)));
  }

  const std::string sidecar_path = config.labels_out + ".indices";
  std::ifstream sidecar(sidecar_path);
  if (!sidecar) throw InputError("cannot open: " + sidecar_path);
  std::vector<std::size_t> indices;
  lineno = 0;
  while (std::getline(sidecar, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    indices.push_back(parse_count(trim(line), sidecar_path + " line " + std::to_string(lineno),
                                  "index", 0));
  }
  if (indices.size() != generated.size()) {
    throw FormatError("label and index counts differ: " + std::to_string(generated.size()) +
                      " vs " + std::to_string(indices.size()));
  }

  const auto [train, test] = load_datasets(config);
  std::size_t matches = 0;
  for (std::size_t q = 0; q < generated.size(); ++q) {
    const std::size_t idx = indices[q];
    if (idx >= test.size()) {
      throw FormatError("index " + std::to_string(idx) + " outside the public input pool");
    }
    if (generated[q].second == test.labels[idx]) ++matches;
  }
  if (generated.empty()) {
    out << "no labels to evaluate\n";
    return;
  }
  out << "label accuracy: "
      << format_real(static_cast<double>(matches) / static_cast<double>(generated.size()))
      << " over " << generated.size() << " queries\n";
}

void run_make_synth_data(const ExperimentConfig& config, std::ostream& out) {
  namespace fs = std::filesystem;
  const fs::path dir(config.data_dir);
  fs::create_directories(dir);
  const std::uint64_t seed = config.protocol.train.seed;
  const SyntheticData train = make_synthetic_digits(config.train_limit,
                                                    derive_seed(seed, kSynthTrainStream));
  const SyntheticData test = make_synthetic_digits(config.test_limit,
                                                   derive_seed(seed, kSynthTestStream));
  const auto emit = [&](const std::string& name, const std::vector<std::uint8_t>& bytes) {
    const std::string path = (dir / name).string();
    write_file(path, bytes);
    out << "wrote " << path << "\n";
  };
  emit(config.train_images, serialize_idx_images(train.images));
  emit(config.train_labels, serialize_idx_labels(train.labels));
  emit(config.test_images, serialize_idx_images(test.images));
  emit(config.test_labels, serialize_idx_labels(test.labels));
}

// One subcommand's flag set: every config key is mirrored by a flag so the
// command line can override the file.
// Flag storage sits behind shared_ptr so its address survives the SubArgs
// being moved into a vector (CLI11 keeps a reference to the bound string).
struct SubArgs {
  CLI::App* cmd = nullptr;
  Action action = Action::TrainFedAvg;
  std::shared_ptr<std::string> config_path = std::make_shared<std::string>();
  std::vector<std::tuple<std::string, CLI::Option*, std::shared_ptr<std::string>>> overrides;
};

SubArgs make_subcommand(CLI::App& app, Action action, const char* name, const char* description) {
  SubArgs sub;
  sub.action = action;
  sub.cmd = app.add_subcommand(name, description);
  sub.cmd->add_option("--config", *sub.config_path, "config file of key = value lines");
  static const char* keys[] = {
      "workers",      "epochs",      "batch_size",   "learning_rate", "seed",
      "hidden_sizes", "reduction",   "fractional_bits", "gamma",      "queries",
      "dataset",      "data_dir",    "train_images", "train_labels",  "test_images",
      "test_labels",  "train_limit", "test_limit",   "metrics_out",   "labels_out",
      "message_log_out"};
  for (const char* key : keys) {
    std::string flag = "--" + std::string(key);
    for (char& c : flag) {
      if (c == '_') c = '-';
    }
    auto storage = std::make_shared<std::string>();
    CLI::Option* opt = sub.cmd->add_option(flag, *storage, std::string("overrides ") + key);
    sub.overrides.emplace_back(key, opt, storage);
  }
  return sub;
}

ExperimentConfig build_config(const SubArgs& sub) {
  ExperimentConfig cfg;
  if (const char* env = std::getenv("FEDCOLLAB_DATA_DIR")) {
    cfg.data_dir = env;
  }
  if (!sub.config_path->empty()) {
    std::ifstream in(*sub.config_path);
    if (!in) throw ConfigError("cannot open config file: " + *sub.config_path);
    std::stringstream ss;
    ss << in.rdbuf();
    cfg = parse_config(ss.str(), std::move(cfg));
  }
  for (const auto& [key, opt, storage] : sub.overrides) {
    if (opt->count() > 0) {
      std::string flag = "--" + key;
      for (char& c : flag) {
        if (c == '_') c = '-';
      }
      apply_key(cfg, key, *storage, "flag " + flag);
    }
  }
  cfg.validate();
  return cfg;
}

}  // namespace

void ExperimentConfig::validate() const {
  protocol.validate();
  if (dataset != "synthetic" && dataset != "idx") {
    throw ConfigError("dataset must be 'synthetic' or 'idx'");
  }
  if (std::isnan(gamma) || gamma <= 0.0) {
    throw ConfigError("gamma must be > 0 (or inf to disable noise)");
  }
  if (dataset == "synthetic" && (train_limit == 0 || test_limit == 0)) {
    throw ConfigError("synthetic data needs train_limit and test_limit >= 1");
  }
  if (metrics_out.empty()) throw ConfigError("metrics_out must not be empty");
  if (labels_out.empty()) throw ConfigError("labels_out must not be empty");
}

ExperimentConfig parse_config(const std::string& text, ExperimentConfig base) {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = "line " + std::to_string(lineno);
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(where + ": expected 'key = value', got '" + line + "'");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError(where + ": empty key");
    apply_key(base, key, value, where);
  }
  return base;
}

std::pair<MnistDataset, MnistDataset> load_datasets(const ExperimentConfig& config) {
  config.validate();
  const std::uint64_t seed = config.protocol.train.seed;
  if (config.dataset == "synthetic") {
    MnistDataset train =
        to_dataset(make_synthetic_digits(config.train_limit, derive_seed(seed, kSynthTrainStream)));
    MnistDataset test =
        to_dataset(make_synthetic_digits(config.test_limit, derive_seed(seed, kSynthTestStream)));
    return {std::move(train), std::move(test)};
  }
  namespace fs = std::filesystem;
  const fs::path dir(config.data_dir);
  const auto resolve = [&](const std::string& name) { return (dir / name).string(); };
  MnistDataset train = load_mnist(resolve(config.train_images), resolve(config.train_labels));
  MnistDataset test = load_mnist(resolve(config.test_images), resolve(config.test_labels));
  if (config.train_limit > 0 && config.train_limit < train.size()) {
    train = take_subset(train, config.train_limit, derive_seed(seed, kSubsetTrainStream));
  }
  if (config.test_limit > 0 && config.test_limit < test.size()) {
    test = take_subset(test, config.test_limit, derive_seed(seed, kSubsetTestStream));
  }
  return {std::move(train), std::move(test)};
}

void write_metrics_csv(const std::vector<RoundMetrics>& timeline, std::ostream& out) {
  out << "epoch,worker_id,loss,accuracy,agg_loss,ensemble_accuracy,bytes_per_link\n";
  for (const auto& entry : timeline) {
    for (std::size_t k = 0; k < entry.worker_loss.size(); ++k) {
      out << entry.round << ',' << k << ',' << format_real(entry.worker_loss[k]) << ','
          << format_real(entry.worker_accuracy[k]) << ',' << format_real(entry.agg_loss) << ','
          << format_real(entry.ensemble_accuracy) << ',' << entry.bytes_per_link << '\n';
    }
    out << entry.round << ",ensemble," << format_real(entry.agg_loss) << ','
        << format_real(entry.ensemble_accuracy) << ',' << format_real(entry.agg_loss) << ','
        << format_real(entry.ensemble_accuracy) << ',' << entry.bytes_per_link << '\n';
  }
}

void run_experiment(Action action, const ExperimentConfig& config, std::ostream& out) {
  config.validate();
  switch (action) {
    case Action::TrainFedAvg:
    case Action::TrainFedCollab:
      run_train(action, config, out);
      return;
    case Action::GenerateLabels:
      run_generate_labels(config, out);
      return;
    case Action::Eval:
      run_eval(config, out);
      return;
    case Action::MakeSynthData:
      run_make_synth_data(config, out);
      return;
  }
}

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"Federated training simulator with secret-shared aggregation and private labeling"};
  app.require_subcommand(1);
  std::vector<SubArgs> subs;
  subs.push_back(make_subcommand(app, Action::TrainFedAvg, "train-fedavg",
                                 "train with federated parameter averaging"));
  subs.push_back(make_subcommand(app, Action::TrainFedCollab, "train-fedcollab",
                                 "train with loss-only collaboration"));
  subs.push_back(make_subcommand(app, Action::GenerateLabels, "generate-private-labels",
                                 "label public inputs by noisy teacher vote"));
  subs.push_back(make_subcommand(app, Action::Eval, "eval",
                                 "score generated labels against ground truth"));
  subs.push_back(make_subcommand(app, Action::MakeSynthData, "make-synth-data",
                                 "write synthetic digit files in the on-disk data format"));
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }
  try {
    for (const auto& sub : subs) {
      if (sub.cmd->parsed()) {
        run_experiment(sub.action, build_config(sub), std::cout);
        return 0;
      }
    }
    std::cerr << "error: no subcommand\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace fedcollab
