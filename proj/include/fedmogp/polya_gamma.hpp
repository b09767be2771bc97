#pragma once

#include <cstdint>
#include <random>

namespace fedmogp {

// Mean of the Polya-Gamma distribution PG(b, c):
//   E[omega] = b / (2c) * tanh(c / 2),
// continued through the removable singularity at c = 0 where the value is
// b / 4. Throws InputError for b <= 0 and NumericError for non-finite c.
double pg_expectation(double b, double c);

// One draw from PG(b, c) via the truncated sum-of-Gammas representation
//   omega = 1 / (2 pi^2) * sum_{k=1..K} g_k / ((k - 1/2)^2 + c^2 / (4 pi^2)),
// with g_k ~ Gamma(b, 1). Supports b in {1, 2, 3}; the truncation K must be
// at least 200 terms. Exists as an independent sampling cross-check for
// pg_expectation; inference itself only ever needs the mean.
double pg_sample(int b, double c, std::mt19937_64& engine, int truncation = 200);
double pg_sample(int b, double c, std::uint64_t seed, int truncation = 200);

}  // namespace fedmogp
