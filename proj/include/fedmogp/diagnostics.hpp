#pragma once

#include <cstdint>

namespace fedmogp::diagnostics {

// Process-wide counters for numerical guardrails that silently clamp.
// Tests reset them, exercise an operation, and read them back.

std::uint64_t second_moment_clamps();
std::uint64_t variance_clamps();

void count_second_moment_clamp();
void count_variance_clamp();

void reset();

}  // namespace fedmogp::diagnostics
