// Exhaustive oracles. Deliberately independent of solve(): nothing here uses
// TaskDefinition or the step recurrence.

#include <cstdint>

#include "cotkit/errors.hpp"
#include "cotkit/task.hpp"

namespace cotkit {

namespace {

State lis_by_subsets(const std::vector<Symbol>& values) {
    const std::size_t n = values.size();
    State best = 0;
    for (std::uint32_t mask = 1; mask < (1U << n); ++mask) {
        bool increasing = true;
        bool have_prev = false;
        Symbol prev = 0;
        State length = 0;
        for (std::size_t k = 0; k < n && increasing; ++k) {
            if (!(mask & (1U << k))) continue;
            if (have_prev && values[k] <= prev) increasing = false;
            prev = values[k];
            have_prev = true;
            ++length;
        }
        if (increasing && length > best) best = length;
    }
    return best;
}

// Walks every path from `position` to `target`, counting arrivals.
void walk_paths(const std::vector<Symbol>& available, std::size_t position, std::size_t target,
                std::uint64_t& count) {
    if (position == target) {
        ++count;
        return;
    }
    for (std::size_t stride = 1; stride <= 3; ++stride) {
        const std::size_t next = position + stride;
        if (next > target || available[next - 1] == 0) continue;
        walk_paths(available, next, target, count);
    }
}

State ervc_by_substitution(const ErvcInstance& instance) {
    std::vector<std::int64_t> values(instance.variables.size(), 0);
    for (std::size_t k = 0; k < instance.known_count; ++k) values[k] = instance.query_values.at(k);
    for (const auto& eq : instance.equations) {
        std::int64_t total = eq.coefficients.back();
        for (std::size_t k = 0; k < eq.inputs.size(); ++k) total += eq.coefficients[k] * values[eq.inputs[k]];
        values[eq.target] = total;
    }
    return values[instance.target()];
}

}  // namespace

State brute_force_answer(TaskId task, const ProblemInstance& instance, State modulus) {
    switch (task) {
        case TaskId::Lis: {
            if (instance.inputs.empty()) throw ContractError("empty LIS instance");
            if (instance.inputs.size() > kLisOracleCap)
                throw ContractError("LIS oracle refuses N = " + std::to_string(instance.inputs.size()) + " (cap " +
                                    std::to_string(kLisOracleCap) + ")");
            return lis_by_subsets(instance.inputs);
        }
        case TaskId::Mpc: {
            if (instance.inputs.empty()) throw ContractError("empty MPC instance");
            if (instance.inputs.size() > kMpcOracleCap)
                throw ContractError("MPC oracle refuses N = " + std::to_string(instance.inputs.size()) + " (cap " +
                                    std::to_string(kMpcOracleCap) + ")");
            std::uint64_t count = 0;
            walk_paths(instance.inputs, 0, instance.inputs.size(), count);
            if (modulus != 0) count %= static_cast<std::uint64_t>(modulus);
            return static_cast<State>(count);
        }
        case TaskId::Ervc: {
            if (!instance.ervc) throw ContractError("ERVC instance without payload");
            return ervc_by_substitution(*instance.ervc);
        }
    }
    throw ContractError("unknown task");
}

}  // namespace cotkit
