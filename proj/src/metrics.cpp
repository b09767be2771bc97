#include "fedmogp/metrics.hpp"

#include <cmath>

#include "fedmogp/errors.hpp"
#include "fedmogp/linalg.hpp"

namespace fedmogp {

double mse(const Eigen::VectorXd& predictions, const Eigen::VectorXd& targets) {
  if (predictions.size() != targets.size() || predictions.size() == 0) {
    throw InputError("mse: prediction/target lengths disagree or are empty");
  }
  Eigen::VectorXd sq = (predictions - targets).array().square();
  return pairwise_sum(sq) / static_cast<double>(sq.size());
}

double accuracy(const Eigen::VectorXd& means, const Eigen::VectorXd& labels) {
  if (means.size() != labels.size() || means.size() == 0) {
    throw InputError("accuracy: mean/label lengths disagree or are empty");
  }
  int correct = 0;
  for (Eigen::Index i = 0; i < means.size(); ++i) {
    if (labels[i] != 1.0 && labels[i] != -1.0) {
      throw InputError("accuracy: labels must be -1 or +1");
    }
    const double predicted = means[i] >= 0.0 ? 1.0 : -1.0;
    if (predicted == labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(means.size());
}

ReliabilityDiagram ece(const Eigen::VectorXd& probabilities, const Eigen::VectorXd& labels,
                       int n_bins) {
  if (probabilities.size() != labels.size() || probabilities.size() == 0) {
    throw InputError("ece: probability/label lengths disagree or are empty");
  }
  if (n_bins < 1) throw InputError("ece: n_bins must be positive");

  ReliabilityDiagram diagram;
  diagram.total = static_cast<int>(probabilities.size());
  diagram.bins.resize(n_bins);
  const double width = 0.5 / n_bins;
  for (int b = 0; b < n_bins; ++b) {
    diagram.bins[b].lo = 0.5 + b * width;
    diagram.bins[b].hi = 0.5 + (b + 1) * width;
  }

  std::vector<double> conf_sum(n_bins, 0.0);
  std::vector<int> correct(n_bins, 0);
  for (Eigen::Index i = 0; i < probabilities.size(); ++i) {
    const double p = probabilities[i];
    if (!(p > 0.0) || !(p < 1.0)) {
      throw InputError("ece: probabilities must lie strictly inside (0, 1)");
    }
    if (labels[i] != 1.0 && labels[i] != -1.0) {
      throw InputError("ece: labels must be -1 or +1");
    }
    const double confidence = std::max(p, 1.0 - p);
    // Boundary confidences belong to the lower bin: bin b covers
    // (lo, hi], with the first bin closed at 0.5.
    int b = static_cast<int>(std::ceil((confidence - 0.5) / width)) - 1;
    if (b < 0) b = 0;
    if (b >= n_bins) b = n_bins - 1;

    const double predicted = p >= 0.5 ? 1.0 : -1.0;
    diagram.bins[b].count += 1;
    conf_sum[b] += confidence;
    if (predicted == labels[i]) correct[b] += 1;
  }

  double weighted_gap = 0.0;
  for (int b = 0; b < n_bins; ++b) {
    ReliabilityBin& bin = diagram.bins[b];
    if (bin.count == 0) continue;
    bin.mean_confidence = conf_sum[b] / bin.count;
    bin.accuracy = static_cast<double>(correct[b]) / bin.count;
    weighted_gap += (static_cast<double>(bin.count) / diagram.total) *
                    std::abs(bin.accuracy - bin.mean_confidence);
  }
  diagram.ece = weighted_gap;
  return diagram;
}

double ood_score(double predictive_variance) {
  if (!(predictive_variance >= 0.0)) {
    throw InputError("ood_score: predictive variance must be non-negative");
  }
  return predictive_variance;
}

}  // namespace fedmogp
