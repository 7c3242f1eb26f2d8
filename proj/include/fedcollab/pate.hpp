#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "fedcollab/nn.hpp"
#include "fedcollab/rng.hpp"
#include "fedcollab/tensor.hpp"

namespace fedcollab {

// Vote counts per class from a panel of teacher models. Counts always sum
// to the number of teachers asked.
struct VoteHistogram {
  std::vector<std::size_t> counts;

  std::size_t total() const;
};

// Running privacy cost of the noisy-vote mechanism: each query with noise
// scale 1/gamma spends 2*gamma, so epsilon after Q queries is 2*gamma*Q
// (data-independent bound; delta stays 0). The no-noise sentinel
// (gamma = infinity) leaves the budget unaccounted.
struct PrivacyLedger {
  double gamma = 0.0;
  std::size_t queries = 0;
  bool accounted = true;

  double epsilon_total() const { return accounted ? 2.0 * gamma * static_cast<double>(queries) : 0.0; }
  double delta() const { return 0.0; }
};

// One privately labeled public input.
struct LabeledExample {
  std::vector<double> input;
  int label = 0;
  std::size_t query_index = 0;
};

/// Lowest index of the maximal element. Throws InputError on empty input.
int argmax_index(const std::vector<double>& scores);

/// Asks every teacher for its argmax prediction on one input row and counts
/// the votes per class. Throws InputError with no teachers, ShapeError when
/// the input width does not match.
VoteHistogram collect_votes(const std::vector<ModelParams>& teachers,
                            const std::vector<double>& input);

/// Laplace(0, b) value for a uniform draw u in [-0.5, 0.5] via the inverse
/// CDF -b * sign(u) * ln(1 - 2|u|), clamped to +-50b so the tails stay
/// finite. Throws InputError when b <= 0 or u is outside the interval.
double laplace_from_uniform(double b, double u);

/// Draws u from rng and applies laplace_from_uniform.
double laplace_sample(double b, Rng& rng);

/// Argmax over counts[c] + Laplace(1/gamma) noise; ties resolve to the
/// lowest class. gamma = infinity disables noise (and draws nothing from
/// rng); other non-positive gammas throw InputError.
int noisy_argmax(const VoteHistogram& hist, double gamma, Rng& rng);

/// Noise-free plurality vote: argmax of collect_votes, ties to lowest class.
int ensemble_predict(const std::vector<ModelParams>& teachers, const std::vector<double>& input);

/// Per-row plurality vote over already computed per-teacher predictions.
/// Every prediction vector must have the same length; ties to lowest class.
std::vector<int> plurality_labels(const std::vector<std::vector<int>>& per_teacher_preds,
                                  std::size_t num_classes = kNumClasses);

/// Fraction of rows where the plurality vote matches the label.
double plurality_accuracy(const std::vector<std::vector<int>>& per_teacher_preds,
                          const std::vector<int>& labels, std::size_t num_classes = kNumClasses);

/// Plurality-vote accuracy of a teacher panel on a labeled set.
double ensemble_accuracy(const std::vector<ModelParams>& teachers, const Tensor2D& inputs,
                         const std::vector<int>& labels);

/// Labels every input row by a noisy plurality vote and accounts the cost.
/// Query i draws from an independent stream derived from (seed, i), so
/// results do not depend on evaluation order. gamma = infinity yields plain
/// ensemble predictions with the budget marked unaccounted.
std::pair<std::vector<LabeledExample>, PrivacyLedger> generate_private_labels(
    const std::vector<ModelParams>& teachers, const Tensor2D& public_inputs, double gamma,
    std::uint64_t seed);

}  // namespace fedcollab
