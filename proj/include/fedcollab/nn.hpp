#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "fedcollab/tensor.hpp"

namespace fedcollab {

inline constexpr std::size_t kNumClasses = 10;

// One fully connected layer. weight is input_width x output_width so a batch
// multiplies on the left: batch (N x in) * weight (in x out) + bias.
struct DenseLayer {
  Tensor2D weight;
  std::vector<double> bias;

  std::size_t input_width() const { return weight.rows(); }
  std::size_t output_width() const { return weight.cols(); }
};

/// Parameters of a dense feed-forward classifier: hidden layers use ReLU,
/// the last layer emits raw logits.
class ModelParams {
 public:
  ModelParams() = default;
  // Throws ShapeError unless consecutive layer widths chain.
  explicit ModelParams(std::vector<DenseLayer> layers);

  // All-zero model for the given widths [input, hidden..., output].
  static ModelParams zeros(const std::vector<std::size_t>& widths);

  const std::vector<DenseLayer>& layers() const { return layers_; }
  std::vector<DenseLayer>& layers() { return layers_; }

  std::size_t input_width() const { return layers_.front().input_width(); }
  std::size_t output_width() const { return layers_.back().output_width(); }
  std::size_t parameter_count() const;

  bool same_shape(const ModelParams& other) const;

 private:
  std::vector<DenseLayer> layers_;
};

// Per-parameter gradients, shape-congruent with the model they came from.
struct Gradients {
  std::vector<DenseLayer> layers;
};

struct TrainingConfig {
  double learning_rate = 0.01;
  std::size_t batch_size = 64;
  std::size_t epochs = 5;
  std::uint64_t seed = 42;
  std::vector<std::size_t> hidden_sizes = {128};

  // Throws InputError on non-positive learning rate or batch size.
  void validate() const;
};

// Intermediate state of one forward pass, consumed by backward().
struct ForwardCache {
  std::vector<Tensor2D> inputs;    // inputs[l] is what layer l multiplied
  std::vector<Tensor2D> preacts;   // preacts[l] is layer l before ReLU; last one is the logits
  std::size_t batch_rows = 0;
};

/// Runs the batch through the network. Returns raw logits (no softmax) and
/// the cache backward() needs. Throws ShapeError when batch width does not
/// match the first layer.
std::pair<Tensor2D, ForwardCache> forward(const ModelParams& model, const Tensor2D& batch);

/// Mean softmax cross-entropy over the batch. Labels are class indices;
/// out-of-range labels throw InputError.
double cross_entropy_loss(const Tensor2D& logits, const std::vector<int>& labels);

/// Gradients of scale * mean cross-entropy with respect to every parameter.
/// The cache must come from a forward() call on this model and batch;
/// mismatches throw UsageError.
Gradients backward(const ModelParams& model, const ForwardCache& cache,
                   const std::vector<int>& labels, double scale);

/// One plain SGD step: every parameter p becomes p - learning_rate * g.
ModelParams sgd_step(const ModelParams& model, const Gradients& grads, double learning_rate);

/// Fraction of rows whose argmax logit matches the label. Ties resolve to
/// the lowest class index. Empty input throws InputError.
double evaluate(const ModelParams& model, const Tensor2D& inputs, const std::vector<int>& labels);

/// Argmax class per row, lowest index on ties.
std::vector<int> predict(const ModelParams& model, const Tensor2D& inputs);

/// Glorot-uniform weights (zero biases) for widths [input, hidden..., output],
/// drawn from a generator seeded with `seed`.
ModelParams init_params(const std::vector<std::size_t>& widths, std::uint64_t seed);

/// Widths [input, hidden..., kNumClasses] for the configured hidden sizes.
std::vector<std::size_t> layer_widths(std::size_t input_width,
                                      const std::vector<std::size_t>& hidden_sizes);

/// Every parameter in a fixed order: per layer, weights row-major, then bias.
std::vector<double> flatten_params(const ModelParams& model);

/// Inverse of flatten_params; `like` supplies the shapes. Throws ShapeError
/// when the value count does not match.
ModelParams unflatten_params(const ModelParams& like, const std::vector<double>& values);

}  // namespace fedcollab
