#include "fedcollab/nn.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "fedcollab/errors.hpp"
#include "fedcollab/rng.hpp"

namespace fedcollab {

namespace {

// out (N x cols) = in (N x rows) * w (rows x cols), accumulated row-wise so the
// inner loops stream through contiguous memory.
Tensor2D matmul(const Tensor2D& in, const Tensor2D& w) {
  Tensor2D out(in.rows(), w.cols());
  for (std::size_t r = 0; r < in.rows(); ++r) {
    const double* in_row = in.row_ptr(r);
    double* out_row = &out(r, 0);
    for (std::size_t k = 0; k < in.cols(); ++k) {
      const double v = in_row[k];
      if (v == 0.0) continue;
      const double* w_row = w.row_ptr(k);
      for (std::size_t c = 0; c < w.cols(); ++c) out_row[c] += v * w_row[c];
    }
  }
  return out;
}

void softmax_row(const double* logits, std::size_t n, double* out) {
  double max = logits[0];
  for (std::size_t c = 1; c < n; ++c) max = std::max(max, logits[c]);
  double sum = 0.0;
  for (std::size_t c = 0; c < n; ++c) {
    out[c] = std::exp(logits[c] - max);
    sum += out[c];
  }
  for (std::size_t c = 0; c < n; ++c) out[c] /= sum;
}

void check_labels(const std::vector<int>& labels, std::size_t rows, std::size_t classes) {
  if (labels.size() != rows) {
    throw InputError("labels length " + std::to_string(labels.size()) +
                     " does not match batch rows " + std::to_string(rows));
  }
  for (int label : labels) {
    if (label < 0 || static_cast<std::size_t>(label) >= classes) {
      throw InputError("label " + std::to_string(label) + " out of range [0, " +
                       std::to_string(classes) + ")");
    }
  }
}

}  // namespace

ModelParams::ModelParams(std::vector<DenseLayer> layers) : layers_(std::move(layers)) {
  if (layers_.empty()) throw ShapeError("ModelParams: at least one layer required");
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    if (layers_[l].bias.size() != layers_[l].output_width()) {
      throw ShapeError("ModelParams: bias width mismatch in layer " + std::to_string(l));
    }
    if (l > 0 && layers_[l - 1].output_width() != layers_[l].input_width()) {
      throw ShapeError("ModelParams: layer " + std::to_string(l - 1) + " output width " +
                       std::to_string(layers_[l - 1].output_width()) +
                       " does not feed layer " + std::to_string(l));
    }
  }
}

ModelParams ModelParams::zeros(const std::vector<std::size_t>& widths) {
  if (widths.size() < 2) throw ShapeError("ModelParams::zeros: need input and output widths");
  std::vector<DenseLayer> layers;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    layers.push_back({Tensor2D(widths[l], widths[l + 1]), std::vector<double>(widths[l + 1], 0.0)});
  }
  return ModelParams(std::move(layers));
}

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& layer : layers_) n += layer.weight.size() + layer.bias.size();
  return n;
}

bool ModelParams::same_shape(const ModelParams& other) const {
  if (layers_.size() != other.layers_.size()) return false;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    if (!layers_[l].weight.same_shape(other.layers_[l].weight) ||
        layers_[l].bias.size() != other.layers_[l].bias.size()) {
      return false;
    }
  }
  return true;
}

void TrainingConfig::validate() const {
  if (!(learning_rate > 0.0)) throw InputError("learning_rate must be > 0");
  if (batch_size < 1) throw InputError("batch_size must be >= 1");
}

std::pair<Tensor2D, ForwardCache> forward(const ModelParams& model, const Tensor2D& batch) {
  if (batch.cols() != model.input_width()) {
    throw ShapeError("forward: batch width " + std::to_string(batch.cols()) +
                     " does not match model input width " + std::to_string(model.input_width()));
  }
  ForwardCache cache;
  cache.batch_rows = batch.rows();
  const auto& layers = model.layers();
  Tensor2D activation = batch;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    cache.inputs.push_back(activation);
    Tensor2D z = matmul(activation, layers[l].weight);
    for (std::size_t r = 0; r < z.rows(); ++r) {
      for (std::size_t c = 0; c < z.cols(); ++c) z(r, c) += layers[l].bias[c];
    }
    cache.preacts.push_back(z);
    if (l + 1 < layers.size()) {
      for (double& v : z.values()) v = std::max(0.0, v);
    }
    activation = std::move(z);
  }
  return {activation, std::move(cache)};
}

double cross_entropy_loss(const Tensor2D& logits, const std::vector<int>& labels) {
  if (logits.rows() == 0) throw InputError("cross_entropy_loss: empty batch");
  check_labels(labels, logits.rows(), logits.cols());
  double total = 0.0;
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    const double* row = logits.row_ptr(r);
    double max = row[0];
    for (std::size_t c = 1; c < logits.cols(); ++c) max = std::max(max, row[c]);
    double sum = 0.0;
    for (std::size_t c = 0; c < logits.cols(); ++c) sum += std::exp(row[c] - max);
    total += max + std::log(sum) - row[labels[r]];
  }
  const double loss = total / static_cast<double>(logits.rows());
  if (!std::isfinite(loss)) throw RangeError("cross_entropy_loss: non-finite loss");
  return loss;
}

Gradients backward(const ModelParams& model, const ForwardCache& cache,
                   const std::vector<int>& labels, double scale) {
  const auto& layers = model.layers();
  if (cache.inputs.size() != layers.size() || cache.preacts.size() != layers.size()) {
    throw UsageError("backward: cache does not match model layer count");
  }
  for (std::size_t l = 0; l < layers.size(); ++l) {
    if (cache.inputs[l].cols() != layers[l].input_width() ||
        cache.preacts[l].cols() != layers[l].output_width() ||
        cache.inputs[l].rows() != cache.batch_rows) {
      throw UsageError("backward: cache shapes stale for layer " + std::to_string(l));
    }
  }
  check_labels(labels, cache.batch_rows, model.output_width());

  const std::size_t rows = cache.batch_rows;
  const std::size_t classes = model.output_width();

  // d(mean CE)/d(logits) = (softmax - onehot) / rows, times the caller's scale.
  Tensor2D delta(rows, classes);
  const double factor = scale / static_cast<double>(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    softmax_row(cache.preacts.back().row_ptr(r), classes, &delta(r, 0));
    delta(r, static_cast<std::size_t>(labels[r])) -= 1.0;
    for (std::size_t c = 0; c < classes; ++c) delta(r, c) *= factor;
  }

  Gradients grads;
  grads.layers.resize(layers.size());
  for (std::size_t li = layers.size(); li-- > 0;) {
    const Tensor2D& input = cache.inputs[li];
    DenseLayer& g = grads.layers[li];
    g.weight = Tensor2D(layers[li].input_width(), layers[li].output_width());
    g.bias.assign(layers[li].output_width(), 0.0);

    for (std::size_t r = 0; r < rows; ++r) {
      const double* in_row = input.row_ptr(r);
      const double* d_row = delta.row_ptr(r);
      for (std::size_t c = 0; c < g.bias.size(); ++c) g.bias[c] += d_row[c];
      for (std::size_t i = 0; i < input.cols(); ++i) {
        const double v = in_row[i];
        if (v == 0.0) continue;
        double* g_row = &g.weight(i, 0);
        for (std::size_t c = 0; c < delta.cols(); ++c) g_row[c] += v * d_row[c];
      }
    }

    if (li > 0) {
      // Propagate through the weights, then gate by the previous ReLU.
      Tensor2D prev_delta(rows, layers[li].input_width());
      const Tensor2D& w = layers[li].weight;
      for (std::size_t r = 0; r < rows; ++r) {
        const double* d_row = delta.row_ptr(r);
        double* p_row = &prev_delta(r, 0);
        for (std::size_t i = 0; i < w.rows(); ++i) {
          const double* w_row = w.row_ptr(i);
          double acc = 0.0;
          for (std::size_t c = 0; c < w.cols(); ++c) acc += w_row[c] * d_row[c];
          p_row[i] = acc;
        }
        const double* z_row = cache.preacts[li - 1].row_ptr(r);
        for (std::size_t i = 0; i < w.rows(); ++i) {
          if (z_row[i] <= 0.0) p_row[i] = 0.0;
        }
      }
      delta = std::move(prev_delta);
    }
  }
  return grads;
}

ModelParams sgd_step(const ModelParams& model, const Gradients& grads, double learning_rate) {
  if (grads.layers.size() != model.layers().size()) {
    throw ShapeError("sgd_step: gradient layer count mismatch");
  }
  std::vector<DenseLayer> updated = model.layers();
  for (std::size_t l = 0; l < updated.size(); ++l) {
    const DenseLayer& g = grads.layers[l];
    DenseLayer& p = updated[l];
    if (!p.weight.same_shape(g.weight) || p.bias.size() != g.bias.size()) {
      throw ShapeError("sgd_step: gradient shape mismatch in layer " + std::to_string(l));
    }
    for (std::size_t i = 0; i < p.weight.size(); ++i) {
      p.weight.values()[i] -= learning_rate * g.weight.values()[i];
    }
    for (std::size_t i = 0; i < p.bias.size(); ++i) {
      p.bias[i] -= learning_rate * g.bias[i];
    }
  }
  return ModelParams(std::move(updated));
}

std::vector<int> predict(const ModelParams& model, const Tensor2D& inputs) {
  auto [logits, cache] = forward(model, inputs);
  std::vector<int> out(logits.rows());
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    const double* row = logits.row_ptr(r);
    std::size_t best = 0;
    for (std::size_t c = 1; c < logits.cols(); ++c) {
      if (row[c] > row[best]) best = c;
    }
    out[r] = static_cast<int>(best);
  }
  return out;
}

double evaluate(const ModelParams& model, const Tensor2D& inputs, const std::vector<int>& labels) {
  if (inputs.rows() == 0) throw InputError("evaluate: empty input");
  check_labels(labels, inputs.rows(), model.output_width());
  const std::vector<int> preds = predict(model, inputs);
  std::size_t correct = 0;
  for (std::size_t r = 0; r < preds.size(); ++r) {
    if (preds[r] == labels[r]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(preds.size());
}

ModelParams init_params(const std::vector<std::size_t>& widths, std::uint64_t seed) {
  if (widths.size() < 2) throw ShapeError("init_params: need input and output widths");
  Rng rng(seed);
  std::vector<DenseLayer> layers;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const std::size_t fan_in = widths[l];
    const std::size_t fan_out = widths[l + 1];
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    DenseLayer layer{Tensor2D(fan_in, fan_out), std::vector<double>(fan_out, 0.0)};
    for (double& w : layer.weight.values()) w = rng.uniform(-limit, limit);
    layers.push_back(std::move(layer));
  }
  return ModelParams(std::move(layers));
}

std::vector<std::size_t> layer_widths(std::size_t input_width,
                                      const std::vector<std::size_t>& hidden_sizes) {
  std::vector<std::size_t> widths;
  widths.push_back(input_width);
  widths.insert(widths.end(), hidden_sizes.begin(), hidden_sizes.end());
  widths.push_back(kNumClasses);
  return widths;
}

std::vector<double> flatten_params(const ModelParams& model) {
  std::vector<double> out;
  out.reserve(model.parameter_count());
  for (const auto& layer : model.layers()) {
    out.insert(out.end(), layer.weight.values().begin(), layer.weight.values().end());
    out.insert(out.end(), layer.bias.begin(), layer.bias.end());
  }
  return out;
}

ModelParams unflatten_params(const ModelParams& like, const std::vector<double>& values) {
  if (values.size() != like.parameter_count()) {
    throw ShapeError("unflatten_params: got " + std::to_string(values.size()) +
                     " values for " + std::to_string(like.parameter_count()) + " parameters");
  }
  std::vector<DenseLayer> layers = like.layers();
  std::size_t at = 0;
  for (auto& layer : layers) {
    std::copy_n(values.begin() + static_cast<std::ptrdiff_t>(at), layer.weight.size(),
                layer.weight.values().begin());
    at += layer.weight.size();
    std::copy_n(values.begin() + static_cast<std::ptrdiff_t>(at), layer.bias.size(),
                layer.bias.begin());
    at += layer.bias.size();
  }
  return ModelParams(std::move(layers));
}

}  // namespace fedcollab
