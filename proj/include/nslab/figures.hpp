#pragma once

// Desk-scale datasets behind each evaluation figure, written as CSV.
//
//   fig3   cache hit/miss round-trip histograms (transmit gadget)
//   fig4   eviction probability vs download size, model and empirical
//   fig5   256-bit op cost with the unit warm vs powered down
//   fig6   256-bit op cost vs idle time (power-down curve)
//   fig7   byte 'd' leaked bit by bit, one histogram per bit
//   fig8   a 0-bit and a 1-bit under the arm latency preset
//   fig10  a 0-bit and a 1-bit under the cloud latency preset

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace nslab::figures {

struct FigureOptions {
  std::filesystem::path out = ".";
  std::uint64_t seed = 1;
  std::optional<std::string> preset;  // overrides the figure's default preset
  std::uint64_t n = 0;                // samples / trials; 0 = figure default
};

const std::vector<std::string>& figure_ids();

/// Writes the CSV files for one figure into options.out and returns their
/// file names. Throws std::invalid_argument for an unknown id.
std::vector<std::string> write_figure(std::string_view id, const FigureOptions& options);

}  // namespace nslab::figures
