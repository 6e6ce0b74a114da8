#include "cotkit/task.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>

#include "cotkit/errors.hpp"

namespace cotkit {

std::string_view to_string(TaskId task) {
    switch (task) {
        case TaskId::Lis: return "lis";
        case TaskId::Mpc: return "mpc";
        case TaskId::Ervc: return "ervc";
    }
    return "?";
}

TaskId parse_task_id(std::string_view text) {
    std::string lower(text);
    std::transform(lower.begin(), lower.end(), lower.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (lower == "lis") return TaskId::Lis;
    if (lower == "mpc") return TaskId::Mpc;
    if (lower == "ervc") return TaskId::Ervc;
    throw ContractError("unknown task '" + std::string(text) + "'");
}

std::string Level::to_string() const {
    if (m > 0) return std::to_string(n) + "x" + std::to_string(m);
    return std::to_string(n);
}

namespace {

int parse_positive(std::string_view text, std::string_view whole) {
    int value = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc{} || ptr != text.data() + text.size() || value < 1)
        throw ContractError("malformed level '" + std::string(whole) + "'");
    return value;
}

}  // namespace

Level Level::parse(std::string_view text) {
    Level level;
    if (auto x = text.find('x'); x != std::string_view::npos) {
        level.n = parse_positive(text.substr(0, x), text);
        level.m = parse_positive(text.substr(x + 1), text);
    } else {
        level.n = parse_positive(text, text);
    }
    return level;
}

namespace {

void check_dependency_set(const TaskDefinition& task, const IndexSet& deps, std::size_t i) {
    for (std::size_t k : deps) {
        if (k >= i) throw ContractError("dependency index " + std::to_string(k) + " is not causal for step " + std::to_string(i));
        if (k == 0 && !task.boundary_state) throw ContractError("task has no boundary state but B selected index 0");
    }
}

}  // namespace

State transition(const TaskDefinition& task, std::span<const State> dep_states, Symbol s,
                 std::size_t sequence_length) {
    if (!task.alphabet.contains(s)) throw RangeError("input symbol " + std::to_string(s) + " outside alphabet");
    for (State d : dep_states) {
        if (d < task.state_min) throw RangeError("dependency state " + std::to_string(d) + " below range");
    }
    const State q = dep_states.empty() ? task.empty_transition_constant : task.transition_fn(dep_states, s);
    State upper = task.state_max;
    if (task.state_max_is_length && sequence_length > 0) upper = static_cast<State>(sequence_length);
    if (q < task.state_min || q > upper)
        throw RangeError("state " + std::to_string(q) + " outside [" + std::to_string(task.state_min) + ", " +
                         std::to_string(upper) + "]");
    return q;
}

State aggregate(const TaskDefinition& task, std::optional<State> prev, State q) {
    if (!prev) return q;
    return task.aggregate_fn(prev, q);
}

void validate_instance(const TaskDefinition& task, const ProblemInstance& instance) {
    if (instance.task != task.task) throw ContractError("instance task does not match definition");
    if (task.task == TaskId::Ervc) {
        if (!instance.ervc) throw ContractError("ERVC instance without payload");
        ervc_check(*instance.ervc);
        return;
    }
    if (instance.inputs.empty()) throw ContractError("instance has no inputs");
    if (instance.level.n != static_cast<int>(instance.inputs.size()))
        throw ContractError("input length " + std::to_string(instance.inputs.size()) + " does not match level " +
                            instance.level.to_string());
    for (Symbol s : instance.inputs) {
        if (!task.alphabet.contains(s)) throw ContractError("input symbol " + std::to_string(s) + " outside alphabet");
    }
}

IndexSet dependencies(const TaskDefinition& task, std::span<const Symbol> inputs, std::size_t i) {
    if (i < 1 || i > inputs.size())
        throw ContractError("step index " + std::to_string(i) + " outside [1, " + std::to_string(inputs.size()) + "]");
    // States of the prefix are themselves functions of the inputs.
    std::vector<State> states{task.boundary_state.value_or(0)};
    if (i > 1) {
        const Solution prefix = solve(task, inputs.first(i - 1));
        for (const auto& step : prefix.steps) states.push_back(step.state);
    }
    IndexSet deps = task.dependency_fn(inputs, states, i);
    check_dependency_set(task, deps, i);
    return deps;
}

Solution solve(const TaskDefinition& task, std::span<const Symbol> inputs) {
    if (task.task == TaskId::Ervc) throw ContractError("ERVC instances are solved by ervc_solve");
    if (inputs.empty()) throw ContractError("cannot solve an empty input");
    const std::size_t n = inputs.size();

    Solution solution;
    solution.steps.reserve(n);
    std::vector<State> states{task.boundary_state.value_or(0)};
    states.reserve(n + 1);
    std::optional<State> running;

    for (std::size_t i = 1; i <= n; ++i) {
        CompoundStep step;
        step.index = i;
        step.input_symbol = inputs[i - 1];
        step.dependency_indices = task.dependency_fn(inputs, std::span<const State>(states.data(), i), i);
        check_dependency_set(task, step.dependency_indices, i);
        for (std::size_t k : step.dependency_indices) step.dependency_states.push_back(states[k]);
        step.state = transition(task, step.dependency_states, step.input_symbol, n);
        step.aggregate_before = running;
        step.aggregate_after = aggregate(task, running, step.state);
        running = step.aggregate_after;
        states.push_back(step.state);
        solution.steps.push_back(std::move(step));
    }
    solution.final_answer = *running;
    return solution;
}

Solution solve(const TaskDefinition& task, const ProblemInstance& instance) {
    validate_instance(task, instance);
    return solve(task, std::span<const Symbol>(instance.inputs));
}

}  // namespace cotkit
