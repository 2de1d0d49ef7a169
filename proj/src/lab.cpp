#include "nslab/lab.hpp"

namespace nslab::lab {

std::uint64_t derive_seed(std::uint64_t root, std::uint64_t stream) noexcept {
  std::uint64_t z = root + (stream + 1) * 0x9E3779B97F4A7C15ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

LoopbackLab::LoopbackLab(victim::VictimConfig config, std::uint64_t seed)
    : victim_(std::move(config), derive_seed(seed, 0)),
      transport_(victim_, victim_.config().latency, derive_seed(seed, 1)),
      session_(transport_, victim_.config().clock_mode) {}

attacker::SessionFactory loopback_factory(victim::VictimConfig config, std::uint64_t root_seed) {
  return [config = std::move(config), root_seed](std::uint64_t stream) -> std::unique_ptr<attacker::SessionHandle> {
    return std::make_unique<LoopbackLab>(config, derive_seed(root_seed, stream));
  };
}

}  // namespace nslab::lab
