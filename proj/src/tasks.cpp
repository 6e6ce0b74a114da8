#include "cotkit/tasks.hpp"

#include <algorithm>
#include <limits>

#include "cotkit/errors.hpp"
#include "cotkit/rng.hpp"

namespace cotkit {

TaskDefinition lis_spec(const LisLevel& level) {
    if (level.n < 1) throw ContractError("LIS level needs n >= 1");
    if (level.value_range.lo < 0 || level.value_range.hi > 99 || level.value_range.lo > level.value_range.hi)
        throw ContractError("LIS value range must lie within [0, 99]");

    TaskDefinition task;
    task.task = TaskId::Lis;
    task.alphabet = level.value_range;
    task.state_min = 1;
    task.state_max = std::numeric_limits<State>::max();
    task.state_max_is_length = true;
    task.empty_transition_constant = 1;

    const TieBreak tie_break = level.tie_break;
    task.dependency_fn = [tie_break](std::span<const Symbol> inputs, std::span<const State> states,
                                     std::size_t i) -> IndexSet {
        const Symbol current = inputs[i - 1];
        std::size_t best = 0;
        State best_state = 0;
        for (std::size_t j = 1; j < i; ++j) {
            if (inputs[j - 1] >= current) continue;
            const bool better = tie_break == TieBreak::MostRecent ? states[j] >= best_state : states[j] > best_state;
            if (best == 0 || better) {
                best = j;
                best_state = states[j];
            }
        }
        if (best == 0) return {};
        return {best};
    };
    task.transition_fn = [](std::span<const State> deps, Symbol) -> State {
        return 1 + *std::max_element(deps.begin(), deps.end());
    };
    task.aggregate_fn = [](std::optional<State> prev, State q) { return prev ? std::max(*prev, q) : q; };

    const LisLevel captured = level;
    task.sampler = [captured](Rng& rng) {
        ProblemInstance instance;
        instance.task = TaskId::Lis;
        instance.level = Level{captured.n, 0};
        instance.inputs.reserve(static_cast<std::size_t>(captured.n));
        for (int k = 0; k < captured.n; ++k)
            instance.inputs.push_back(rng.uniform_int(captured.value_range.lo, captured.value_range.hi));
        return instance;
    };
    return task;
}

TaskDefinition mpc_spec(const MpcLevel& level) {
    if (level.n < 1) throw ContractError("MPC level needs n >= 1");
    if (level.modulus != 0 && level.modulus < 2) throw ContractError("MPC modulus must be >= 2 (or 0 for exact)");

    TaskDefinition task;
    task.task = TaskId::Mpc;
    task.alphabet = SymbolRange{0, 1};
    task.state_min = 0;
    task.state_max = level.modulus == 0 ? std::numeric_limits<State>::max() : level.modulus - 1;
    task.modulus = level.modulus;
    task.boundary_state = 1;
    task.empty_transition_constant = 0;

    task.dependency_fn = [](std::span<const Symbol>, std::span<const State>, std::size_t i) -> IndexSet {
        IndexSet deps;
        for (std::size_t k = i >= 3 ? i - 3 : 0; k < i; ++k) deps.push_back(k);
        return deps;
    };
    const State modulus = level.modulus;
    task.transition_fn = [modulus](std::span<const State> deps, Symbol avail) -> State {
        if (avail == 0) return 0;
        State sum = 0;
        for (State d : deps) {
            if (modulus != 0) {
                sum = (sum + d) % modulus;
            } else if (__builtin_add_overflow(sum, d, &sum)) {
                throw RangeError("exact MPC count overflows 64 bits");
            }
        }
        return sum;
    };
    task.aggregate_fn = [](std::optional<State>, State q) { return q; };

    const int n = level.n;
    task.sampler = [n](Rng& rng) {
        ProblemInstance instance;
        instance.task = TaskId::Mpc;
        instance.level = Level{n, 0};
        instance.inputs.reserve(static_cast<std::size_t>(n));
        for (int k = 0; k < n; ++k) instance.inputs.push_back(rng.bernoulli(0.5) ? 1 : 0);
        return instance;
    };
    return task;
}

TaskDefinition make_task(TaskId task, Level level, const TaskOptions& options) {
    if (task != TaskId::Ervc && level.m != 0)
        throw ContractError("level " + level.to_string() + " has an equation count; LIS and MPC levels are plain n");
    switch (task) {
        case TaskId::Lis: return lis_spec(LisLevel{level.n, options.lis_range, options.tie_break});
        case TaskId::Mpc: return mpc_spec(MpcLevel{level.n, options.modulus});
        case TaskId::Ervc: {
            if (level.m < 1 || level.m >= level.n) throw ContractError("ERVC level needs 1 <= m < n");
            if (static_cast<std::size_t>(level.n) > ervc_lexicon().size())
                throw ContractError("ERVC level n exceeds the lexicon size " + std::to_string(ervc_lexicon().size()));
            TaskDefinition def;
            def.task = TaskId::Ervc;
            def.sampler = [level](Rng& rng) {
                ProblemInstance instance;
                instance.task = TaskId::Ervc;
                instance.level = level;
                instance.ervc = ervc_generate(level.n, level.m, rng);
                return instance;
            };
            return def;
        }
    }
    throw ContractError("unknown task");
}

ProblemInstance sample_instance(TaskId task, Level level, Rng& rng, const TaskOptions& options) {
    return make_task(task, level, options).sampler(rng);
}

}  // namespace cotkit
