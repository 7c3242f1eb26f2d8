#include "fedcollab/protocols.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>

#include "fedcollab/errors.hpp"
#include "fedcollab/pate.hpp"

namespace fedcollab {

namespace {

// Stream labels for deriving per-worker randomness from the master seed.
constexpr std::uint64_t kOrderStream = 1;
constexpr std::uint64_t kShareStream = 2;

double reduce_losses(const std::vector<double>& losses, Reduction reduction) {
  double sum = 0.0;
  for (double l : losses) sum += l;
  return reduction == Reduction::Average ? sum / static_cast<double>(losses.size()) : sum;
}

// Mean loss over the whole shard, batched to bound memory, cursor untouched.
double shard_mean_loss(const WorkerState& worker, const MnistDataset& train,
                       std::size_t batch_size) {
  double total = 0.0;
  for (std::size_t at = 0; at < worker.shard.size(); at += batch_size) {
    const std::size_t take = std::min(batch_size, worker.shard.size() - at);
    const std::vector<std::size_t> slice(worker.shard.begin() + static_cast<std::ptrdiff_t>(at),
                                         worker.shard.begin() +
                                             static_cast<std::ptrdiff_t>(at + take));
    const MnistDataset batch = select(train, slice);
    const auto [logits, cache] = forward(worker.model, batch.images);
    total += cross_entropy_loss(logits, batch.labels) * static_cast<double>(take);
  }
  return total / static_cast<double>(worker.shard.size());
}

// Fills the accuracy fields: each worker evaluated on the test set, plus the
// plurality vote over all workers' predictions.
void evaluate_into(RoundMetrics& metrics, const std::vector<WorkerState>& workers,
                   const MnistDataset& test) {
  std::vector<std::vector<int>> preds;
  preds.reserve(workers.size());
  metrics.worker_accuracy.resize(workers.size());
  for (const auto& worker : workers) {
    preds.push_back(predict(worker.model, test.images));
    std::size_t correct = 0;
    for (std::size_t r = 0; r < preds.back().size(); ++r) {
      if (preds.back()[r] == test.labels[r]) ++correct;
    }
    metrics.worker_accuracy[worker.worker_id] =
        static_cast<double>(correct) / static_cast<double>(test.size());
  }
  metrics.ensemble_accuracy = plurality_accuracy(preds, test.labels);
}

}  // namespace

void ProtocolConfig::validate() const {
  if (workers == 0) throw ConfigError("workers must be >= 1");
  if (fractional_bits == 0 || fractional_bits > 62) {
    throw ConfigError("fractional_bits must be in [1, 62]");
  }
  try {
    train.validate();
  } catch (const InputError& e) {
    throw ConfigError(e.what());
  }
}

const char* to_string(MessageKind kind) {
  switch (kind) {
    case MessageKind::ParamsUp: return "ParamsUp";
    case MessageKind::ParamsDown: return "ParamsDown";
    case MessageKind::ParamShare: return "ParamShare";
    case MessageKind::LossShare: return "LossShare";
    case MessageKind::PartialSum: return "PartialSum";
    case MessageKind::AggLossDown: return "AggLossDown";
  }
  return "Unknown";
}

void MessageLog::dump_csv(std::ostream& out) const {
  out << "round,kind,sender,receiver,payload_bytes\n";
  for (const auto& r : records) {
    out << r.round << ',' << to_string(r.kind) << ',' << r.sender << ',' << r.receiver << ','
        << r.payload_bytes << '\n';
  }
}

MnistDataset next_batch(WorkerState& worker, const MnistDataset& train, std::size_t batch_size) {
  if (worker.shard.empty()) throw InputError("next_batch: worker has an empty shard");
  if (batch_size == 0) throw InputError("next_batch: batch_size must be >= 1");
  if (worker.order.empty()) {
    worker.order = worker.shard;
    Rng rng(derive_seed(worker.order_seed, worker.pass));
    shuffle(worker.order, rng);
  }
  const std::size_t take = std::min(batch_size, worker.order.size() - worker.pos);
  const std::vector<std::size_t> slice(
      worker.order.begin() + static_cast<std::ptrdiff_t>(worker.pos),
      worker.order.begin() + static_cast<std::ptrdiff_t>(worker.pos + take));
  worker.pos += take;
  if (worker.pos == worker.order.size()) {
    worker.order.clear();
    worker.pos = 0;
    ++worker.pass;
  }
  return select(train, slice);
}

ModelParams federated_average(const std::vector<ModelParams>& params) {
  if (params.empty()) throw InputError("federated_average: no models");
  for (const auto& p : params) {
    if (!p.same_shape(params.front())) {
      throw ShapeError("federated_average: model shapes differ");
    }
  }
  std::vector<double> mean = flatten_params(params.front());
  for (std::size_t k = 1; k < params.size(); ++k) {
    const std::vector<double> flat = flatten_params(params[k]);
    for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += flat[i];
  }
  const double inv = 1.0 / static_cast<double>(params.size());
  for (double& v : mean) v *= inv;
  return unflatten_params(params.front(), mean);
}

std::vector<WorkerState> make_workers(Mode mode, const ProtocolConfig& config,
                                      std::size_t input_width, const std::vector<Shard>& shards) {
  config.validate();
  if (shards.size() != config.workers) {
    throw InputError("make_workers: shard count does not match worker count");
  }
  const std::vector<std::size_t> widths = layer_widths(input_width, config.train.hidden_sizes);
  const std::uint64_t order_base = derive_seed(config.train.seed, kOrderStream);
  const std::uint64_t share_base = derive_seed(config.train.seed, kShareStream);
  std::vector<WorkerState> workers;
  workers.reserve(shards.size());
  for (std::size_t k = 0; k < shards.size(); ++k) {
    WorkerState w;
    w.worker_id = k;
    // FedAvg demands a common starting point; FedCollab never synchronizes
    // parameters, so each worker gets its own.
    w.model = init_params(widths, mode == Mode::FedAvg ? config.train.seed
                                                       : config.train.seed ^ k);
    w.shard = shards[k].indices;
    w.order_seed = derive_seed(order_base, k);
    w.share_rng = Rng(derive_seed(share_base, k));
    workers.push_back(std::move(w));
  }
  return workers;
}

RoundMetrics fedavg_round(std::vector<WorkerState>& workers, AggregatorState& aggregator,
                          const ProtocolConfig& config, const MnistDataset& train,
                          MessageLog& log) {
  const std::size_t num_workers = workers.size();
  if (num_workers == 0) throw InputError("fedavg_round: no workers");
  const std::size_t batch = config.train.batch_size;
  const std::size_t param_count = workers.front().model.parameter_count();
  const std::size_t param_bytes = param_count * sizeof(RingElement);

  RoundMetrics metrics;
  metrics.round = aggregator.round;
  metrics.worker_loss.resize(num_workers);

  for (auto& worker : workers) {
    const std::size_t batches = (worker.shard.size() + batch - 1) / batch;
    double loss_sum = 0.0;
    for (std::size_t b = 0; b < batches; ++b) {
      const MnistDataset mini = next_batch(worker, train, batch);
      const auto [logits, cache] = forward(worker.model, mini.images);
      loss_sum += cross_entropy_loss(logits, mini.labels);
      const Gradients grads = backward(worker.model, cache, mini.labels, 1.0);
      worker.model = sgd_step(worker.model, grads, config.train.learning_rate);
    }
    metrics.worker_loss[worker.worker_id] = loss_sum / static_cast<double>(batches);
  }

  ModelParams averaged;
  if (num_workers == 1) {
    // A single worker has no peers to hide its parameters from; skipping the
    // codec keeps this degenerate case bit-exact against plain SGD.
    averaged = workers.front().model;
    log.add(aggregator.round, MessageKind::ParamsUp, 0, kAggregatorId, param_bytes);
  } else {
    const FixedPointCodec codec{config.fractional_bits};
    // Every worker splits each encoded parameter into additive shares, one
    // per peer; partials[j] accumulates what worker j receives.
    std::vector<std::vector<RingElement>> partials(
        num_workers, std::vector<RingElement>(param_count, RingElement{0}));
    for (auto& worker : workers) {
      const std::vector<double> flat = flatten_params(worker.model);
      for (std::size_t p = 0; p < param_count; ++p) {
        const ShareSet shares = share(encode_fixed(flat[p], codec), num_workers, worker.share_rng);
        for (std::size_t j = 0; j < num_workers; ++j) {
          partials[j][p] += shares.shares[j];
        }
      }
      for (std::size_t j = 0; j < num_workers; ++j) {
        if (j != worker.worker_id) {
          log.add(aggregator.round, MessageKind::ParamShare, static_cast<int>(worker.worker_id),
                  static_cast<int>(j), param_bytes);
        }
      }
    }
    std::vector<double> mean(param_count);
    for (std::size_t j = 0; j < num_workers; ++j) {
      log.add(aggregator.round, MessageKind::PartialSum, static_cast<int>(j), kAggregatorId,
              param_bytes);
    }
    const double inv = 1.0 / static_cast<double>(num_workers);
    for (std::size_t p = 0; p < param_count; ++p) {
      RingElement total{0};
      for (std::size_t j = 0; j < num_workers; ++j) total += partials[j][p];
      mean[p] = decode_fixed(total, codec) * inv;
    }
    averaged = unflatten_params(workers.front().model, mean);
  }

  for (auto& worker : workers) {
    worker.model = averaged;
    log.add(aggregator.round, MessageKind::ParamsDown, kAggregatorId,
            static_cast<int>(worker.worker_id), param_bytes);
  }
  aggregator.last_param_aggregate = std::move(averaged);

  metrics.agg_loss = reduce_losses(metrics.worker_loss, config.reduction);
  metrics.bytes_per_link = param_bytes;
  ++aggregator.round;
  return metrics;
}

RoundMetrics fedcollab_round(std::vector<WorkerState>& workers, AggregatorState& aggregator,
                             const ProtocolConfig& config, const MnistDataset& train,
                             MessageLog& log) {
  const std::size_t num_workers = workers.size();
  if (num_workers == 0) throw InputError("fedcollab_round: no workers");
  const FixedPointCodec codec{config.fractional_bits};
  // The aggregate is a sum (or mean) of per-worker losses; the other
  // workers' terms are constants with respect to this worker's parameters,
  // so its gradient is the local gradient times d(aggregate)/d(local loss).
  const double scale = config.reduction == Reduction::Sum
                           ? 1.0
                           : 1.0 / static_cast<double>(num_workers);

  RoundMetrics metrics;
  metrics.round = aggregator.round;
  metrics.worker_loss.resize(num_workers);

  for (auto& worker : workers) {
    if (worker.last_cache) {
      const Gradients grads = backward(worker.model, *worker.last_cache, worker.last_labels, scale);
      worker.model = sgd_step(worker.model, grads, config.train.learning_rate);
    }
    const MnistDataset mini = next_batch(worker, train, config.train.batch_size);
    auto [logits, cache] = forward(worker.model, mini.images);
    metrics.worker_loss[worker.worker_id] = cross_entropy_loss(logits, mini.labels);
    worker.last_cache = std::move(cache);
    worker.last_labels = mini.labels;
  }

  // Loss scalars travel secret-shared: worker k deals one share to every
  // peer, each peer forwards the sum of what it received, the aggregator
  // adds the partials. Every worker/aggregator payload is one ring element.
  std::vector<RingElement> partials(num_workers, RingElement{0});
  for (auto& worker : workers) {
    const RingElement encoded = encode_fixed(metrics.worker_loss[worker.worker_id], codec);
    const ShareSet shares = share(encoded, num_workers, worker.share_rng);
    for (std::size_t j = 0; j < num_workers; ++j) {
      partials[j] += shares.shares[j];
      if (j != worker.worker_id) {
        log.add(aggregator.round, MessageKind::LossShare, static_cast<int>(worker.worker_id),
                static_cast<int>(j), sizeof(RingElement));
      }
    }
  }
  RingElement total{0};
  for (std::size_t j = 0; j < num_workers; ++j) {
    total += partials[j];
    log.add(aggregator.round, MessageKind::PartialSum, static_cast<int>(j), kAggregatorId,
            sizeof(RingElement));
  }
  double agg_loss = decode_fixed(total, codec);
  if (config.reduction == Reduction::Average) agg_loss /= static_cast<double>(num_workers);

  const RingElement broadcast = encode_fixed(agg_loss, codec);
  for (auto& worker : workers) {
    worker.last_aggregate = decode_fixed(broadcast, codec);
    log.add(aggregator.round, MessageKind::AggLossDown, kAggregatorId,
            static_cast<int>(worker.worker_id), sizeof(RingElement));
  }
  aggregator.last_loss_aggregate = agg_loss;

  metrics.agg_loss = agg_loss;
  metrics.bytes_per_link = sizeof(RingElement);
  ++aggregator.round;
  return metrics;
}

TrainingResult run_training(Mode mode, const ProtocolConfig& config, const MnistDataset& train,
                            const MnistDataset& test) {
  config.validate();
  if (train.size() == 0) throw InputError("run_training: empty training set");
  if (test.size() == 0) throw InputError("run_training: empty test set");

  const std::vector<Shard> shards = partition_iid(train.size(), config.workers, config.train.seed);
  TrainingResult result;
  result.workers = make_workers(mode, config, train.images.cols(), shards);
  AggregatorState aggregator;
  aggregator.mode = mode;
  aggregator.reduction = config.reduction;

  std::size_t max_shard = 0;
  for (const auto& shard : shards) max_shard = std::max(max_shard, shard.indices.size());
  const std::size_t rounds_per_epoch =
      (max_shard + config.train.batch_size - 1) / config.train.batch_size;

  // Epoch 0: evaluation before any parameter update. FedCollab's round 0 is
  // its forward-only bootstrap (losses flow through the aggregator but no
  // model changes); FedAvg has not communicated yet.
  RoundMetrics initial;
  if (mode == Mode::FedCollab) {
    initial = fedcollab_round(result.workers, aggregator, config, train, result.log);
  } else {
    initial.worker_loss.resize(result.workers.size());
    for (const auto& worker : result.workers) {
      initial.worker_loss[worker.worker_id] =
          shard_mean_loss(worker, train, config.train.batch_size);
    }
    initial.agg_loss = reduce_losses(initial.worker_loss, config.reduction);
    initial.bytes_per_link = 0;
  }
  initial.round = 0;
  evaluate_into(initial, result.workers, test);
  result.timeline.push_back(std::move(initial));

  for (std::size_t epoch = 1; epoch <= config.train.epochs; ++epoch) {
    RoundMetrics entry;
    entry.round = epoch;
    if (mode == Mode::FedAvg) {
      RoundMetrics m = fedavg_round(result.workers, aggregator, config, train, result.log);
      entry.worker_loss = std::move(m.worker_loss);
      entry.agg_loss = m.agg_loss;
      entry.bytes_per_link = m.bytes_per_link;
    } else {
      entry.worker_loss.assign(result.workers.size(), 0.0);
      entry.agg_loss = 0.0;
      for (std::size_t r = 0; r < rounds_per_epoch; ++r) {
        const RoundMetrics m =
            fedcollab_round(result.workers, aggregator, config, train, result.log);
        for (std::size_t k = 0; k < entry.worker_loss.size(); ++k) {
          entry.worker_loss[k] += m.worker_loss[k];
        }
        entry.agg_loss += m.agg_loss;
        entry.bytes_per_link = m.bytes_per_link;
      }
      const double inv = 1.0 / static_cast<double>(rounds_per_epoch);
      for (double& l : entry.worker_loss) l *= inv;
      entry.agg_loss *= inv;
    }
    evaluate_into(entry, result.workers, test);
    result.timeline.push_back(std::move(entry));
  }
  return result;
}

}  // namespace fedcollab
