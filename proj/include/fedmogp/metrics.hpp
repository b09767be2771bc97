#pragma once

#include <Eigen/Dense>
#include <vector>

namespace fedmogp {

// Mean squared error between predictive means and targets.
double mse(const Eigen::VectorXd& predictions, const Eigen::VectorXd& targets);

// Fraction of points where sign(mean) matches the {-1, +1} label; a mean of
// exactly zero counts as predicting +1.
double accuracy(const Eigen::VectorXd& means, const Eigen::VectorXd& labels);

struct ReliabilityBin {
  double lo = 0.0;
  double hi = 0.0;
  double mean_confidence = 0.0;
  double accuracy = 0.0;
  int count = 0;
};

// Equal-width binning of confidences max(p, 1-p) over [0.5, 1]. Boundary
// confidences fall into the lower bin, except 1.0 which stays in the top
// bin; empty bins contribute zero.
struct ReliabilityDiagram {
  std::vector<ReliabilityBin> bins;
  double ece = 0.0;
  int total = 0;
};

// Expected calibration error of +1-class probabilities against {-1, +1}
// labels: ece = sum_b (count_b / total) * |accuracy_b - mean_confidence_b|.
// Probabilities must lie in (0, 1).
ReliabilityDiagram ece(const Eigen::VectorXd& probabilities, const Eigen::VectorXd& labels,
                       int n_bins = 10);

// Out-of-distribution score of a prediction: its raw predictive variance
// (larger = farther from the training data).
double ood_score(double predictive_variance);

}  // namespace fedmogp
