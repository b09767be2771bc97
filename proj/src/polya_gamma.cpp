#include "fedmogp/polya_gamma.hpp"

#include <cmath>
#include <numbers>

#include "fedmogp/errors.hpp"
#include "fedmogp/random.hpp"

namespace fedmogp {

double pg_expectation(double b, double c) {
  if (!(b > 0.0) || !std::isfinite(b)) {
    throw InputError("pg_expectation: b must be positive and finite");
  }
  if (!std::isfinite(c)) {
    throw NumericError("pg_expectation: c must be finite");
  }
  // tanh(c/2) / (2c) = 1/4 - c^2/48 + O(c^4); switch to the series near the
  // singularity so the limit b/4 is hit without cancellation.
  const double ac = std::abs(c);
  if (ac < 1e-4) {
    return b * (0.25 - c * c / 48.0);
  }
  return b / (2.0 * c) * std::tanh(0.5 * c);
}

double pg_sample(int b, double c, std::mt19937_64& engine, int truncation) {
  if (b < 1 || b > 3) {
    throw InputError("pg_sample: b must be one of {1, 2, 3}");
  }
  if (truncation < 200) {
    throw InputError("pg_sample: truncation must be at least 200 terms");
  }
  if (!std::isfinite(c)) {
    throw NumericError("pg_sample: c must be finite");
  }
  const double pi = std::numbers::pi;
  const double shift = c * c / (4.0 * pi * pi);
  std::gamma_distribution<double> gamma(static_cast<double>(b), 1.0);
  double acc = 0.0;
  for (int k = 1; k <= truncation; ++k) {
    const double denom = (k - 0.5) * (k - 0.5) + shift;
    acc += gamma(engine) / denom;
  }
  return acc / (2.0 * pi * pi);
}

double pg_sample(int b, double c, std::uint64_t seed, int truncation) {
  std::mt19937_64 engine = make_engine(seed);
  return pg_sample(b, c, engine, truncation);
}

}  // namespace fedmogp
