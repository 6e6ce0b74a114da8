#pragma once

#include <ostream>
#include <string_view>
#include <vector>

#include "cotkit/dataset.hpp"

namespace cotkit {

/// Exit codes shared by every subcommand.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

/// Entry point for `cotkit generate | validate | analyze | theory | stats`.
/// Never throws; failures map to exit codes.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

/// "4:5000,16:5000" or "3x2:500". Bare levels ("4,16") take an even split of
/// `total`, earlier levels receiving the remainder. Throws ContractError.
std::vector<LevelCount> parse_level_list(std::string_view text, std::optional<std::size_t> total = std::nullopt);

/// "a..b" or "a". Throws ContractError.
std::pair<unsigned, unsigned> parse_range(std::string_view text);

}  // namespace cotkit
