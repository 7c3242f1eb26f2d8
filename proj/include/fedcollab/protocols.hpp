#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <vector>

#include "fedcollab/mnist.hpp"
#include "fedcollab/nn.hpp"
#include "fedcollab/rng.hpp"
#include "fedcollab/secret_sharing.hpp"

namespace fedcollab {

enum class Mode { FedAvg, FedCollab };

// How the aggregator reduces per-worker losses: Sum adds them, Average
// divides the sum by the worker count. Average is the default; the gradient
// scale seen by each worker follows this choice (1 vs 1/K).
enum class Reduction { Sum, Average };

struct ProtocolConfig {
  TrainingConfig train;
  std::size_t workers = 10;
  Reduction reduction = Reduction::Average;
  unsigned fractional_bits = 16;

  // Throws ConfigError on zero workers or invalid training settings.
  void validate() const;
};

// Participant id of the aggregator in message records; workers use their
// nonnegative worker_id.
inline constexpr int kAggregatorId = -1;

enum class MessageKind {
  ParamsUp,     // worker -> aggregator, full parameter vector (plaintext path)
  ParamsDown,   // aggregator -> worker, broadcast parameters
  ParamShare,   // worker -> worker, additive shares of parameters
  LossShare,    // worker -> worker, additive share of a loss scalar
  PartialSum,   // worker -> aggregator, sum of received shares
  AggLossDown,  // aggregator -> worker, reduced loss scalar
};

const char* to_string(MessageKind kind);

struct MessageRecord {
  std::size_t round = 0;
  MessageKind kind = MessageKind::ParamsUp;
  int sender = 0;
  int receiver = 0;
  std::size_t payload_bytes = 0;
};

struct MessageLog {
  std::vector<MessageRecord> records;

  void add(std::size_t round, MessageKind kind, int sender, int receiver,
           std::size_t payload_bytes) {
    records.push_back({round, kind, sender, receiver, payload_bytes});
  }

  /// Line-delimited dump: header then round,kind,sender,receiver,payload_bytes.
  void dump_csv(std::ostream& out) const;
};

// One participant's private state. The shard is a set of indices into the
// shared training tensor; nothing else of another worker's data is ever
// visible here. Minibatch order reshuffles every pass using a seed derived
// from (order_seed, pass), and the cursor runs continuously across rounds.
struct WorkerState {
  std::size_t worker_id = 0;
  ModelParams model;
  std::vector<std::size_t> shard;
  std::uint64_t order_seed = 0;
  Rng share_rng{0};

  std::size_t pass = 0;
  std::size_t pos = 0;
  std::vector<std::size_t> order;  // empty means the next draw starts a pass

  std::optional<ForwardCache> last_cache;
  std::vector<int> last_labels;
  std::optional<double> last_aggregate;  // most recent loss broadcast received
};

struct AggregatorState {
  Mode mode = Mode::FedCollab;
  Reduction reduction = Reduction::Average;
  std::size_t round = 0;
  std::optional<double> last_loss_aggregate;        // FedCollab
  std::optional<ModelParams> last_param_aggregate;  // FedAvg
};

// Metrics of one round, or of one epoch in run_training's timeline (there
// `round` holds the epoch index and the accuracy fields are filled in).
struct RoundMetrics {
  std::size_t round = 0;
  std::vector<double> worker_loss;
  std::vector<double> worker_accuracy;
  double agg_loss = 0.0;
  double ensemble_accuracy = 0.0;
  std::size_t bytes_per_link = 0;
};

struct TrainingResult {
  std::vector<RoundMetrics> timeline;  // index = epoch; entry 0 is the initial evaluation
  MessageLog log;
  std::vector<WorkerState> workers;
};

/// Draws the next minibatch (at most batch_size rows) from the worker's
/// shard, reshuffling at pass boundaries. Throws InputError on an empty shard.
MnistDataset next_batch(WorkerState& worker, const MnistDataset& train, std::size_t batch_size);

/// Elementwise unweighted mean of shape-congruent models. Throws InputError
/// on an empty list, ShapeError on mismatch.
ModelParams federated_average(const std::vector<ModelParams>& params);

/// Builds K workers over the given shards. FedAvg workers all start from
/// the same seed-derived parameters; FedCollab workers start from per-worker
/// seeds so their models differ.
std::vector<WorkerState> make_workers(Mode mode, const ProtocolConfig& config,
                                      std::size_t input_width, const std::vector<Shard>& shards);

/// One FedAvg round: every worker runs one local epoch of minibatch SGD,
/// parameters are secret-shared between workers and averaged by the
/// aggregator, and the average is broadcast back. All workers exit the round
/// with bit-identical models. With a single worker the codec is skipped
/// (there is no one to hide from), keeping that path exact.
RoundMetrics fedavg_round(std::vector<WorkerState>& workers, AggregatorState& aggregator,
                          const ProtocolConfig& config, const MnistDataset& train,
                          MessageLog& log);

/// One FedCollab round: every worker first applies the gradient step from
/// its previous forward pass (skipped in round 0, when no cache exists),
/// then runs forward on its next minibatch and secret-shares the scalar
/// loss; the aggregator reduces and broadcasts it. Worker to aggregator
/// payloads are a single ring element each way.
RoundMetrics fedcollab_round(std::vector<WorkerState>& workers, AggregatorState& aggregator,
                             const ProtocolConfig& config, const MnistDataset& train,
                             MessageLog& log);

/// Full experiment: shards the training set IID, builds workers, runs
/// `epochs` epochs (an epoch is one local pass per worker in FedAvg and
/// shard-size/batch-size rounds in FedCollab, so both see the same amount
/// of data), and evaluates every worker plus the plurality-vote ensemble on
/// the test set after each epoch. Timeline entry 0 is the evaluation before
/// any update. Deterministic for a fixed config.
TrainingResult run_training(Mode mode, const ProtocolConfig& config, const MnistDataset& train,
                            const MnistDataset& test);

}  // namespace fedcollab
