#pragma once

// In-process victim + loopback transport + attacker session, seeded
// replicas of it, and a Monte-Carlo trial runner.

#include <cstdint>
#include <exception>
#include <memory>
#include <type_traits>
#include <vector>

#include "nslab/attacker.hpp"
#include "nslab/victim.hpp"
#include "nslab/wire.hpp"

namespace nslab::lab {

/// splitmix64 of root + stream: independent seeds for replicas and trials.
std::uint64_t derive_seed(std::uint64_t root, std::uint64_t stream) noexcept;

class LoopbackLab final : public attacker::SessionHandle {
 public:
  /// Victim, transport noise and server noise all seeded from `seed`.
  LoopbackLab(victim::VictimConfig config, std::uint64_t seed);
  LoopbackLab(const LoopbackLab&) = delete;
  LoopbackLab& operator=(const LoopbackLab&) = delete;

  attacker::Session& session() override { return session_; }
  victim::Victim& victim() noexcept { return victim_; }
  wire::LoopbackTransport& transport() noexcept { return transport_; }

 private:
  victim::Victim victim_;
  wire::LoopbackTransport transport_;
  attacker::Session session_;
};

/// Replica `stream` gets derive_seed(root_seed, stream).
attacker::SessionFactory loopback_factory(victim::VictimConfig config, std::uint64_t root_seed);

/// Runs trial(i) for i in [0, n) across OpenMP threads. Results are indexed by
/// trial, so they do not depend on the thread count as long as each trial
/// seeds itself from i. The first exception (lowest index) is rethrown.
template <class F>
auto run_trials(std::size_t n, F&& trial) -> std::vector<std::invoke_result_t<F&, std::size_t>> {
  std::vector<std::invoke_result_t<F&, std::size_t>> out(n);
  std::vector<std::exception_ptr> errors(n);
  const auto count = static_cast<std::int64_t>(n);
#pragma omp parallel for schedule(dynamic, 1)
  for (std::int64_t i = 0; i < count; ++i) {
    try {
      out[static_cast<std::size_t>(i)] = trial(static_cast<std::size_t>(i));
    } catch (...) {
      errors[static_cast<std::size_t>(i)] = std::current_exception();
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

/// Serial reference for run_trials.
template <class F>
auto run_trials_serial(std::size_t n, F&& trial) -> std::vector<std::invoke_result_t<F&, std::size_t>> {
  std::vector<std::invoke_result_t<F&, std::size_t>> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(trial(i));
  return out;
}

}  // namespace nslab::lab
