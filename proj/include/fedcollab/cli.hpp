#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "fedcollab/protocols.hpp"

namespace fedcollab {

// Everything an experiment run needs, collected from defaults, the
// FEDCOLLAB_DATA_DIR environment variable, a `key = value` config file and
// command-line flags, in that order of increasing precedence.
struct ExperimentConfig {
  ProtocolConfig protocol;

  // Private label generation.
  double gamma = 0.05;  // inverse Laplace scale; "inf" disables noise
  std::size_t queries = 100;

  // Data sourcing. "synthetic" draws procedural digits in memory; "idx"
  // reads the four files below from data_dir. A limit of 0 keeps everything.
  std::string dataset = "synthetic";
  std::string data_dir = "data";
  std::string train_images = "train-images-idx3-ubyte";
  std::string train_labels = "train-labels-idx1-ubyte";
  std::string test_images = "t10k-images-idx3-ubyte";
  std::string test_labels = "t10k-labels-idx1-ubyte";
  std::size_t train_limit = 3200;
  std::size_t test_limit = 1000;

  // Output artifacts. message_log_out empty means no log is written.
  std::string metrics_out = "metrics.csv";
  std::string labels_out = "private_labels.csv";
  std::string message_log_out;

  // Throws ConfigError on out-of-range values.
  void validate() const;
};

enum class Action { TrainFedAvg, TrainFedCollab, GenerateLabels, Eval, MakeSynthData };

/// Parses `key = value` lines (# starts a comment) into a config, starting
/// from `base`. Unknown keys and invalid values throw ConfigError naming the
/// key and line.
ExperimentConfig parse_config(const std::string& text, ExperimentConfig base = {});

/// Loads the train/test pair the config describes (synthetic or IDX files),
/// applying the configured size limits.
std::pair<MnistDataset, MnistDataset> load_datasets(const ExperimentConfig& config);

/// Writes the timeline in the fixed schema: header
/// epoch,worker_id,loss,accuracy,agg_loss,ensemble_accuracy,bytes_per_link,
/// one row per (epoch, worker) plus one `ensemble` row per epoch, reals with
/// six fractional digits. Byte-identical output for identical timelines.
void write_metrics_csv(const std::vector<RoundMetrics>& timeline, std::ostream& out);

/// Runs one action end to end (train, label, evaluate labels, or emit
/// synthetic IDX files), writing the configured artifacts. Throws on any
/// failure; progress goes to `out`.
void run_experiment(Action action, const ExperimentConfig& config, std::ostream& out);

/// Full command-line entry point. Returns the process exit status: 0 on
/// success, nonzero with a message on stderr otherwise.
int run_cli(int argc, const char* const* argv);

}  // namespace fedcollab
