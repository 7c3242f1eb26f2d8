#include "fedcollab/pate.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "fedcollab/errors.hpp"

namespace fedcollab {

std::size_t VoteHistogram::total() const {
  return std::accumulate(counts.begin(), counts.end(), std::size_t{0});
}

int argmax_index(const std::vector<double>& scores) {
  if (scores.empty()) throw InputError("argmax_index: empty input");
  std::size_t best = 0;
  for (std::size_t c = 1; c < scores.size(); ++c) {
    if (scores[c] > scores[best]) best = c;
  }
  return static_cast<int>(best);
}

VoteHistogram collect_votes(const std::vector<ModelParams>& teachers,
                            const std::vector<double>& input) {
  if (teachers.empty()) throw InputError("collect_votes: no teachers");
  const std::size_t classes = teachers.front().output_width();
  Tensor2D row(1, input.size(), input);
  VoteHistogram hist{std::vector<std::size_t>(classes, 0)};
  for (const auto& teacher : teachers) {
    const int vote = predict(teacher, row)[0];
    ++hist.counts[static_cast<std::size_t>(vote)];
  }
  return hist;
}

double laplace_from_uniform(double b, double u) {
  if (!(b > 0.0)) throw InputError("laplace_from_uniform: scale must be > 0");
  if (!(u >= -0.5 && u <= 0.5)) throw InputError("laplace_from_uniform: u outside [-0.5, 0.5]");
  if (u == 0.0) return 0.0;
  const double sign = u > 0.0 ? 1.0 : -1.0;
  const double magnitude = -std::log(1.0 - 2.0 * std::abs(u));  // in [0, inf]
  const double clamped = std::min(magnitude, 50.0);
  return b * sign * clamped;
}

double laplace_sample(double b, Rng& rng) {
  return laplace_from_uniform(b, rng.next_double() - 0.5);
}

int noisy_argmax(const VoteHistogram& hist, double gamma, Rng& rng) {
  if (hist.counts.empty()) throw InputError("noisy_argmax: empty histogram");
  std::vector<double> scores(hist.counts.begin(), hist.counts.end());
  if (std::isinf(gamma)) {
    return argmax_index(scores);
  }
  if (!(gamma > 0.0)) throw InputError("noisy_argmax: gamma must be > 0");
  const double b = 1.0 / gamma;
  for (double& s : scores) s += laplace_sample(b, rng);
  return argmax_index(scores);
}

int ensemble_predict(const std::vector<ModelParams>& teachers, const std::vector<double>& input) {
  const VoteHistogram hist = collect_votes(teachers, input);
  std::vector<double> scores(hist.counts.begin(), hist.counts.end());
  return argmax_index(scores);
}

std::vector<int> plurality_labels(const std::vector<std::vector<int>>& per_teacher_preds,
                                  std::size_t num_classes) {
  if (per_teacher_preds.empty()) throw InputError("plurality_labels: no prediction vectors");
  const std::size_t rows = per_teacher_preds.front().size();
  for (const auto& preds : per_teacher_preds) {
    if (preds.size() != rows) throw InputError("plurality_labels: prediction lengths differ");
  }
  std::vector<int> out(rows);
  std::vector<double> counts(num_classes);
  for (std::size_t r = 0; r < rows; ++r) {
    std::fill(counts.begin(), counts.end(), 0.0);
    for (const auto& preds : per_teacher_preds) {
      const int p = preds[r];
      if (p < 0 || static_cast<std::size_t>(p) >= num_classes) {
        throw InputError("plurality_labels: prediction " + std::to_string(p) + " out of range");
      }
      counts[static_cast<std::size_t>(p)] += 1.0;
    }
    out[r] = argmax_index(counts);
  }
  return out;
}

double plurality_accuracy(const std::vector<std::vector<int>>& per_teacher_preds,
                          const std::vector<int>& labels, std::size_t num_classes) {
  const std::vector<int> voted = plurality_labels(per_teacher_preds, num_classes);
  if (voted.size() != labels.size()) throw InputError("plurality_accuracy: label count mismatch");
  if (voted.empty()) throw InputError("plurality_accuracy: empty input");
  std::size_t correct = 0;
  for (std::size_t r = 0; r < voted.size(); ++r) {
    if (voted[r] == labels[r]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(voted.size());
}

double ensemble_accuracy(const std::vector<ModelParams>& teachers, const Tensor2D& inputs,
                         const std::vector<int>& labels) {
  if (teachers.empty()) throw InputError("ensemble_accuracy: no teachers");
  std::vector<std::vector<int>> preds;
  preds.reserve(teachers.size());
  for (const auto& teacher : teachers) {
    preds.push_back(predict(teacher, inputs));
  }
  return plurality_accuracy(preds, labels, teachers.front().output_width());
}

std::pair<std::vector<LabeledExample>, PrivacyLedger> generate_private_labels(
    const std::vector<ModelParams>& teachers, const Tensor2D& public_inputs, double gamma,
    std::uint64_t seed) {
  if (teachers.empty()) throw InputError("generate_private_labels: no teachers");
  const bool noiseless = std::isinf(gamma);
  if (!noiseless && !(gamma > 0.0)) {
    throw InputError("generate_private_labels: gamma must be > 0");
  }
  std::vector<LabeledExample> labeled;
  labeled.reserve(public_inputs.rows());
  for (std::size_t i = 0; i < public_inputs.rows(); ++i) {
    std::vector<double> input = public_inputs.row(i);
    const VoteHistogram hist = collect_votes(teachers, input);
    Rng rng(derive_seed(seed, i));
    const int label = noisy_argmax(hist, gamma, rng);
    labeled.push_back({std::move(input), label, i});
  }
  PrivacyLedger ledger{gamma, public_inputs.rows(), !noiseless};
  return {std::move(labeled), ledger};
}

}  // namespace fedcollab
