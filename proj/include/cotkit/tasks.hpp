#pragma once

#include <cstdint>

#include "cotkit/task.hpp"

namespace cotkit {

struct LisLevel {
    int n = 4;
    SymbolRange value_range{0, 99};
    TieBreak tie_break = TieBreak::MostRecent;
};

struct MpcLevel {
    int n = 8;
    /// States are counted modulo this value; 0 keeps exact counts.
    State modulus = 100;
};

/// Longest increasing subsequence. B picks the smaller predecessor with the
/// largest state; F = 1 + that state (1 when none); H = max.
TaskDefinition lis_spec(const LisLevel& level);

/// Multi-step path counting with steps {1, 2, 3}. B = the previous three
/// indices including the virtual q_0 = 1; F = avail * sum mod modulus; H = replace.
TaskDefinition mpc_spec(const MpcLevel& level);

/// Per-task knobs shared by sampling, rendering and validation.
struct TaskOptions {
    SymbolRange lis_range{0, 99};
    TieBreak tie_break = TieBreak::MostRecent;
    State modulus = 100;

    bool operator==(const TaskOptions&) const = default;
};

/// TaskDefinition for `task` at `level`. ERVC has no step recurrence, so its
/// definition carries only the sampler.
TaskDefinition make_task(TaskId task, Level level, const TaskOptions& options = {});

/// Uniform draw from the level's input space: LIS values i.i.d. uniform,
/// MPC bits i.i.d. Bernoulli(1/2), ERVC via ervc_generate.
ProblemInstance sample_instance(TaskId task, Level level, Rng& rng, const TaskOptions& options = {});

}  // namespace cotkit
