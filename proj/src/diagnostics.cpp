#include "fedmogp/diagnostics.hpp"

#include <atomic>

namespace fedmogp::diagnostics {

namespace {
std::atomic<std::uint64_t> g_second_moment_clamps{0};
std::atomic<std::uint64_t> g_variance_clamps{0};
}  // namespace

std::uint64_t second_moment_clamps() { return g_second_moment_clamps.load(); }
std::uint64_t variance_clamps() { return g_variance_clamps.load(); }

void count_second_moment_clamp() { g_second_moment_clamps.fetch_add(1); }
void count_variance_clamp() { g_variance_clamps.fetch_add(1); }

void reset() {
  g_second_moment_clamps.store(0);
  g_variance_clamps.store(0);
}

}  // namespace fedmogp::diagnostics
