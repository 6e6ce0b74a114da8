#include "cotkit/trace.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <stdexcept>

#include "cotkit/errors.hpp"
#include "cotkit/rng.hpp"
#include "ervc_text.hpp"

namespace cotkit {

std::string join_tokens(std::span<const std::string> tokens) {
    std::string out;
    for (std::size_t k = 0; k < tokens.size(); ++k) {
        if (k > 0) out.push_back(' ');
        out += tokens[k];
    }
    return out;
}

Tokens split_tokens(std::string_view text) {
    Tokens out;
    std::size_t pos = 0;
    while (pos < text.size()) {
        while (pos < text.size() && (text[pos] == ' ' || text[pos] == '\t' || text[pos] == '\n')) ++pos;
        std::size_t end = pos;
        while (end < text.size() && text[end] != ' ' && text[end] != '\t' && text[end] != '\n') ++end;
        if (end > pos) out.emplace_back(text.substr(pos, end - pos));
        pos = end;
    }
    return out;
}

Tokens CotTrace::target_tokens() const {
    Tokens out;
    for (std::size_t b = 0; b < step_blocks.size(); ++b) {
        if (b > 0) out.emplace_back(kSep);
        out.insert(out.end(), step_blocks[b].begin(), step_blocks[b].end());
    }
    out.insert(out.end(), final_tokens.begin(), final_tokens.end());
    return out;
}

Tokens CotTrace::tokens() const {
    Tokens out = question_tokens;
    const Tokens target = target_tokens();
    out.insert(out.end(), target.begin(), target.end());
    return out;
}

std::string_view to_string(TraceErrorKind kind) {
    switch (kind) {
        case TraceErrorKind::None: return "none";
        case TraceErrorKind::Parse: return "parse";
        case TraceErrorKind::WrongDependency: return "wrong_dependency";
        case TraceErrorKind::WrongState: return "wrong_state";
        case TraceErrorKind::WrongAggregate: return "wrong_aggregate";
        case TraceErrorKind::WrongFinal: return "wrong_final";
    }
    return "?";
}

namespace {

std::string str(std::int64_t v) { return std::to_string(v); }

Tokens lis_block(const Solution& solution, const CompoundStep& step, bool recap) {
    Tokens block{str(step.input_symbol)};
    if (recap) {
        block.emplace_back("|");
        if (step.dependency_indices.empty()) block.emplace_back(kEmpty);
        for (std::size_t d = 0; d < step.dependency_indices.size(); ++d) {
            block.push_back(str(solution.steps[step.dependency_indices[d] - 1].input_symbol));
            block.push_back(str(step.dependency_states[d]));
        }
    }
    // At i = 1 the prior aggregate is shown as H(empty, q_1) = q_1.
    const State before = step.aggregate_before.value_or(step.state);
    Tokens tail{"=", str(step.input_symbol), str(step.state), ":", str(before), std::string(kArrow),
                str(step.aggregate_after)};
    block.insert(block.end(), tail.begin(), tail.end());
    return block;
}

Tokens mpc_block(const CompoundStep& step, bool recap) {
    Tokens block{str(static_cast<std::int64_t>(step.index)), ",", str(step.input_symbol)};
    if (recap) {
        block.emplace_back(",");
        for (State d : step.dependency_states) block.push_back(str(d));
    }
    block.emplace_back(kArrow);
    block.push_back(str(step.state));
    return block;
}

Tokens final_tokens_for(const std::vector<bool>& mask, const std::string& answer) {
    if (!mask.empty() && mask.back()) return {std::string(kEos)};
    const bool any = std::find(mask.begin(), mask.end(), true) != mask.end();
    Tokens out;
    if (any) out.emplace_back(kSep);
    out.push_back(answer);
    out.emplace_back(kEos);
    return out;
}

std::optional<std::int64_t> as_int(const std::string& token) {
    std::int64_t value = 0;
    auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
    if (ec != std::errc{} || ptr != token.data() + token.size()) return std::nullopt;
    return value;
}

std::int64_t need_int(std::span<const std::string> tokens, std::size_t k, std::size_t offset) {
    if (k >= tokens.size()) throw ParseError(offset + k, "unexpected end of block");
    auto v = as_int(tokens[k]);
    if (!v) throw ParseError(offset + k, "expected an integer, got '" + tokens[k] + "'");
    return *v;
}

void need(std::span<const std::string> tokens, std::size_t k, std::string_view what, std::size_t offset) {
    if (k >= tokens.size()) throw ParseError(offset + k, "unexpected end of block, expected '" + std::string(what) + "'");
    if (tokens[k] != what) throw ParseError(offset + k, "expected '" + std::string(what) + "', got '" + tokens[k] + "'");
}

struct LisFields {
    Symbol symbol = 0;
    bool recap = false;
    std::vector<std::pair<Symbol, State>> deps;
    Symbol echo = 0;
    State state = 0;
    State before = 0;
    State after = 0;
};

LisFields decode_lis(std::span<const std::string> b, std::size_t offset) {
    LisFields f;
    std::size_t k = 0;
    f.symbol = need_int(b, k++, offset);
    if (k < b.size() && b[k] == "|") {
        f.recap = true;
        ++k;
        if (k < b.size() && b[k] == kEmpty) {
            ++k;
        } else {
            while (k < b.size() && b[k] != "=") {
                const Symbol s = need_int(b, k++, offset);
                const State q = need_int(b, k++, offset);
                f.deps.emplace_back(s, q);
            }
            if (f.deps.empty()) throw ParseError(offset + k, "dependency list is empty without <empty>");
        }
    }
    need(b, k++, "=", offset);
    f.echo = need_int(b, k++, offset);
    f.state = need_int(b, k++, offset);
    need(b, k++, ":", offset);
    f.before = need_int(b, k++, offset);
    need(b, k++, kArrow, offset);
    f.after = need_int(b, k++, offset);
    if (k != b.size()) throw ParseError(offset + k, "trailing tokens in LIS step");
    return f;
}

struct MpcFields {
    std::int64_t index = 0;
    Symbol avail = 0;
    bool recap = false;
    std::vector<State> deps;
    State state = 0;
};

MpcFields decode_mpc(std::span<const std::string> b, std::size_t offset) {
    MpcFields f;
    std::size_t k = 0;
    f.index = need_int(b, k++, offset);
    need(b, k++, ",", offset);
    f.avail = need_int(b, k++, offset);
    if (k < b.size() && b[k] == ",") {
        f.recap = true;
        ++k;
        while (k < b.size() && b[k] != kArrow) f.deps.push_back(need_int(b, k++, offset));
    }
    need(b, k++, kArrow, offset);
    f.state = need_int(b, k++, offset);
    if (k != b.size()) throw ParseError(offset + k, "trailing tokens in MPC step");
    return f;
}

struct Segment {
    std::size_t offset = 0;
    Tokens tokens;
};

// Splits the body (between the question and <eos>) on <sep>.
std::vector<Segment> split_body(std::span<const std::string> tokens, std::size_t begin, std::size_t end) {
    std::vector<Segment> segments;
    Segment current{begin, {}};
    for (std::size_t k = begin; k < end; ++k) {
        if (tokens[k] == kSep) {
            if (current.tokens.empty()) throw ParseError(k, "empty step block");
            segments.push_back(std::move(current));
            current = Segment{k + 1, {}};
        } else if (tokens[k] == kEos) {
            throw ParseError(k, "<eos> before end of sample");
        } else {
            current.tokens.push_back(tokens[k]);
        }
    }
    if (current.tokens.empty()) throw ParseError(end, "missing final answer");
    segments.push_back(std::move(current));
    return segments;
}

std::vector<Tokens> ervc_expected_blocks(const ErvcInstance& instance, bool recap) {
    const ErvcSolution solution = ervc_solve(instance);
    std::vector<Tokens> blocks;
    for (auto& line : detail::ervc_solution_lines(instance, solution)) {
        if (line.recap && !recap) continue;
        blocks.push_back(std::move(line.tokens));
    }
    return blocks;
}

ProblemInstance lis_mpc_question(TaskId grammar, std::span<const std::string> q) {
    if (q.empty() || q.back() != kSep) throw ParseError(q.size(), "question must end with <sep>");
    ProblemInstance instance;
    instance.task = grammar;
    const std::size_t body = q.size() - 1;
    if (grammar == TaskId::Lis) {
        for (std::size_t k = 0; k < body; ++k) instance.inputs.push_back(need_int(q, k, 0));
    } else {
        if (body < 3 || q[body - 2] != ",") throw ParseError(body, "MPC question must end with ', n <sep>'");
        for (std::size_t k = 0; k + 2 < body; ++k) instance.inputs.push_back(need_int(q, k, 0));
        const std::int64_t n = need_int(q, body - 1, 0);
        if (n != static_cast<std::int64_t>(instance.inputs.size()))
            throw ParseError(body - 1, "MPC target " + std::to_string(n) + " does not match " +
                                           std::to_string(instance.inputs.size()) + " availability bits");
    }
    if (instance.inputs.empty()) throw ParseError(0, "question has no inputs");
    instance.level = Level{static_cast<int>(instance.inputs.size()), 0};
    return instance;
}

}  // namespace

Tokens render_question(TaskId grammar, std::span<const Symbol> inputs) {
    Tokens q;
    for (Symbol s : inputs) q.push_back(str(s));
    if (grammar == TaskId::Mpc) {
        q.emplace_back(",");
        q.push_back(str(static_cast<std::int64_t>(inputs.size())));
    } else if (grammar != TaskId::Lis) {
        throw ContractError("render_question covers LIS and MPC only");
    }
    q.emplace_back(kSep);
    return q;
}

CotTrace render_trace(const Solution& solution, TaskId grammar, RecapPolicy recap) {
    if (grammar == TaskId::Ervc) throw ContractError("ERVC traces render from an ErvcInstance");
    if (grammar != TaskId::Lis && grammar != TaskId::Mpc) throw ContractError("unknown grammar");
    if (solution.steps.empty()) throw ContractError("cannot render an empty solution");

    CotTrace trace;
    trace.grammar = grammar;
    trace.recap_enabled = recap.enabled;
    std::vector<Symbol> inputs;
    for (const auto& step : solution.steps) inputs.push_back(step.input_symbol);
    trace.question_tokens = render_question(grammar, inputs);
    for (const auto& step : solution.steps) {
        trace.step_blocks.push_back(grammar == TaskId::Lis ? lis_block(solution, step, recap.enabled)
                                                           : mpc_block(step, recap.enabled));
        trace.step_indices.push_back(step.index);
    }
    trace.retained_mask.assign(solution.steps.size(), true);
    trace.final_tokens = {std::string(kEos)};
    return trace;
}

CotTrace render_trace(const ErvcInstance& instance, const ErvcSolution& solution, RecapPolicy recap) {
    CotTrace trace;
    trace.grammar = TaskId::Ervc;
    trace.recap_enabled = recap.enabled;
    trace.question_tokens = detail::ervc_question_tokens(instance);
    for (auto& line : detail::ervc_solution_lines(instance, solution)) {
        if (line.recap && !recap.enabled) continue;
        trace.step_blocks.push_back(std::move(line.tokens));
        trace.step_indices.push_back(trace.step_blocks.size());
    }
    trace.retained_mask.assign(trace.step_blocks.size(), true);
    trace.final_tokens = {std::string(kEos)};
    return trace;
}

CotTrace render_instance(const ProblemInstance& instance, const TaskOptions& options, RecapPolicy recap) {
    if (instance.task == TaskId::Ervc) {
        if (!instance.ervc) throw ContractError("ERVC instance without payload");
        return render_trace(*instance.ervc, ervc_solve(*instance.ervc), recap);
    }
    const TaskDefinition task = make_task(instance.task, instance.level, options);
    return render_trace(solve(task, instance), instance.task, recap);
}

CotTrace retain_steps(const CotTrace& full, const std::vector<bool>& mask) {
    if (full.step_blocks.empty() || full.step_blocks.size() != full.retained_mask.size() ||
        std::find(full.retained_mask.begin(), full.retained_mask.end(), false) != full.retained_mask.end())
        throw ContractError("expected a fully retained trace");
    if (mask.size() != full.step_blocks.size()) throw ContractError("mask length does not match the step count");

    CotTrace out;
    out.grammar = full.grammar;
    out.recap_enabled = full.recap_enabled;
    out.question_tokens = full.question_tokens;
    out.retained_mask = mask;
    for (std::size_t b = 0; b < full.step_blocks.size(); ++b) {
        if (!mask[b]) continue;
        out.step_blocks.push_back(full.step_blocks[b]);
        out.step_indices.push_back(full.step_indices[b]);
    }
    out.final_tokens = final_tokens_for(mask, full.step_blocks.back().back());
    return out;
}

CotTrace apply_dropout(const CotTrace& trace, const DropoutPolicy& policy, Rng& rng) {
    if (!(policy.retain_rate >= 0.0 && policy.retain_rate <= 1.0)) throw ContractError("retain_rate must lie in [0, 1]");
    std::vector<bool> mask(trace.retained_mask.size(), false);
    for (std::size_t b = 0; b < mask.size(); ++b) mask[b] = rng.bernoulli(policy.retain_rate);
    return retain_steps(trace, mask);
}

ProblemInstance question_to_instance(TaskId grammar, std::span<const std::string> question_tokens) {
    if (grammar == TaskId::Ervc) {
        ProblemInstance instance;
        instance.task = TaskId::Ervc;
        instance.ervc = detail::ervc_instance_from_question(question_tokens);
        const auto& e = *instance.ervc;
        instance.level = Level{static_cast<int>(e.variable_count()), static_cast<int>(e.equation_count())};
        return instance;
    }
    return lis_mpc_question(grammar, question_tokens);
}

CotTrace parse_trace(TaskId grammar, std::span<const std::string> tokens) {
    const auto sep = std::find(tokens.begin(), tokens.end(), kSep);
    if (sep == tokens.end()) throw ParseError(tokens.size(), "missing <sep> after the question");
    if (tokens.empty() || tokens.back() != kEos) throw ParseError(tokens.size(), "missing <eos>");

    CotTrace trace;
    trace.grammar = grammar;
    const auto question_end = static_cast<std::size_t>(sep - tokens.begin()) + 1;
    trace.question_tokens.assign(tokens.begin(), tokens.begin() + static_cast<std::ptrdiff_t>(question_end));
    const ProblemInstance instance = question_to_instance(grammar, trace.question_tokens);

    std::vector<Segment> segments = split_body(tokens, question_end, tokens.size() - 1);
    const bool bare_answer = segments.back().tokens.size() == 1;
    if (bare_answer) {
        trace.final_tokens = segments.size() > 1 ? Tokens{std::string(kSep)} : Tokens{};
        trace.final_tokens.push_back(segments.back().tokens.front());
        trace.final_tokens.emplace_back(kEos);
        segments.pop_back();
    } else {
        trace.final_tokens = {std::string(kEos)};
    }

    std::optional<bool> recap;
    auto agree = [&](bool block_recap, std::size_t offset) {
        if (recap && *recap != block_recap) throw ParseError(offset, "steps mix recap and non-recap layouts");
        recap = block_recap;
    };

    std::size_t step_count = instance.inputs.size();
    std::vector<Tokens> expected_ervc;
    if (grammar == TaskId::Ervc) {
        // Recap-free unless some block only fits the recap layout.
        try {
            expected_ervc = ervc_expected_blocks(*instance.ervc, false);
            bool fits = true;
            std::size_t k = 0;
            for (const auto& seg : segments) {
                while (k < expected_ervc.size() && expected_ervc[k] != seg.tokens) ++k;
                if (k == expected_ervc.size()) {
                    fits = false;
                    break;
                }
                ++k;
            }
            recap = !fits;
            if (*recap) expected_ervc = ervc_expected_blocks(*instance.ervc, true);
        } catch (const std::logic_error&) {
            throw ParseError(0, "ERVC question admits no unique solution");
        }
        step_count = expected_ervc.size();
    }
    trace.retained_mask.assign(step_count, false);

    // Solved LIS blocks per layout; steps sharing a symbol are told apart by exact match.
    std::optional<std::array<std::vector<Tokens>, 2>> solved_lis;
    if (grammar == TaskId::Lis && step_count > 0) {
        try {
            const Solution solution = solve(make_task(TaskId::Lis, Level{static_cast<int>(step_count), 0}), instance);
            solved_lis = {render_trace(solution, grammar, {false}).step_blocks,
                          render_trace(solution, grammar, {true}).step_blocks};
        } catch (const std::exception&) {
        }
    }

    std::size_t cursor = 0;  // next unconsumed step (0-based)
    for (std::size_t g = 0; g < segments.size(); ++g) {
        auto& segment = segments[g];
        // Without a bare answer the last block is the final step.
        const bool final_block = !bare_answer && g + 1 == segments.size();
        std::size_t step = 0;
        if (grammar == TaskId::Lis) {
            const LisFields f = decode_lis(segment.tokens, segment.offset);
            agree(f.recap, segment.offset);
            if (solved_lis) {
                const auto& blocks = (*solved_lis)[f.recap ? 1 : 0];
                if (final_block && step_count > cursor && blocks[step_count - 1] == segment.tokens) step = step_count;
                for (std::size_t k = cursor; k < step_count && step == 0; ++k) {
                    if (blocks[k] == segment.tokens) step = k + 1;
                }
            }
            if (step == 0 && final_block && step_count > cursor && instance.inputs[step_count - 1] == f.symbol)
                step = step_count;
            for (std::size_t k = cursor; k < step_count && step == 0; ++k) {
                if (instance.inputs[k] == f.symbol) {
                    step = k + 1;
                    break;
                }
            }
        } else if (grammar == TaskId::Mpc) {
            const MpcFields f = decode_mpc(segment.tokens, segment.offset);
            agree(f.recap, segment.offset);
            if (f.index <= static_cast<std::int64_t>(cursor) || f.index > static_cast<std::int64_t>(step_count))
                throw ParseError(segment.offset, "step index " + std::to_string(f.index) + " out of order");
            step = static_cast<std::size_t>(f.index);
        } else {
            if (final_block && step_count > cursor && expected_ervc[step_count - 1] == segment.tokens) step = step_count;
            for (std::size_t k = cursor; k < step_count && step == 0; ++k) {
                if (expected_ervc[k] == segment.tokens) {
                    step = k + 1;
                    break;
                }
            }
        }
        if (step != 0) {
            trace.retained_mask[step - 1] = true;
            cursor = step;
        }
        trace.step_indices.push_back(step);
        trace.step_blocks.push_back(std::move(segment.tokens));
    }
    trace.recap_enabled = recap.value_or(true);
    return trace;
}

namespace {

ValidationReport failure(std::size_t step, TraceErrorKind kind, std::string expected, std::string actual,
                         std::string message) {
    ValidationReport r;
    r.valid = false;
    r.first_error_step = step;
    r.error_kind = kind;
    r.expected = std::move(expected);
    r.actual = std::move(actual);
    r.message = std::move(message);
    return r;
}

TraceErrorKind classify_lis(const Tokens& expected, const Tokens& actual, bool final_step) {
    const LisFields e = decode_lis(expected, 0);
    LisFields a;
    try {
        a = decode_lis(actual, 0);
    } catch (const ParseError&) {
        return TraceErrorKind::Parse;
    }
    if (a.symbol != e.symbol || a.echo != e.echo || a.recap != e.recap) return TraceErrorKind::Parse;
    if (a.deps != e.deps) return TraceErrorKind::WrongDependency;
    if (a.state != e.state) return TraceErrorKind::WrongState;
    if (a.before != e.before) return TraceErrorKind::WrongAggregate;
    return final_step ? TraceErrorKind::WrongFinal : TraceErrorKind::WrongAggregate;
}

TraceErrorKind classify_mpc(const Tokens& expected, const Tokens& actual, bool final_step) {
    const MpcFields e = decode_mpc(expected, 0);
    MpcFields a;
    try {
        a = decode_mpc(actual, 0);
    } catch (const ParseError&) {
        return TraceErrorKind::Parse;
    }
    if (a.index != e.index || a.recap != e.recap) return TraceErrorKind::Parse;
    if (a.avail != e.avail || a.deps != e.deps) return TraceErrorKind::WrongDependency;
    return final_step ? TraceErrorKind::WrongFinal : TraceErrorKind::WrongState;
}

}  // namespace

ValidationReport validate_trace(const TaskDefinition& task, std::span<const std::string> question_tokens,
                                const CotTrace& trace) {
    if (trace.grammar != task.task) return failure(0, TraceErrorKind::Parse, "", "", "trace grammar does not match task");

    ProblemInstance instance;
    std::vector<Tokens> expected;
    std::string answer;
    try {
        instance = question_to_instance(task.task, question_tokens);
        if (task.task == TaskId::Ervc) {
            expected = ervc_expected_blocks(*instance.ervc, trace.recap_enabled);
            answer = expected.back().back();
        } else {
            const Solution solution = solve(task, instance);
            expected = render_trace(solution, task.task, RecapPolicy{trace.recap_enabled}).step_blocks;
            answer = std::to_string(solution.final_answer);
        }
    } catch (const ParseError& e) {
        return failure(0, TraceErrorKind::Parse, "", "", std::string("question: ") + e.what());
    } catch (const std::exception& e) {
        return failure(0, TraceErrorKind::Parse, "", "", std::string("question not solvable: ") + e.what());
    }
    const std::size_t n = expected.size();

    // Without a bare answer the last block is the final step.
    const bool ends_on_block = trace.final_tokens == Tokens{std::string(kEos)};
    std::size_t matched = 0;  // steps 1..matched are consumed
    for (std::size_t b = 0; b < trace.step_blocks.size(); ++b) {
        const Tokens& block = trace.step_blocks[b];
        std::size_t hit = 0;
        if (ends_on_block && b + 1 == trace.step_blocks.size() && n > matched && expected[n - 1] == block) hit = n;
        for (std::size_t k = matched; k < n && hit == 0; ++k) {
            if (expected[k] == block) {
                hit = k + 1;
                break;
            }
        }
        if (hit != 0) {
            matched = hit;
            continue;
        }

        // Pick the step this block was meant to be and say what differs.
        std::size_t target = 0;
        if (task.task == TaskId::Lis) {
            const auto symbol = block.empty() ? std::nullopt : as_int(block.front());
            for (std::size_t k = matched; k < n && symbol; ++k) {
                if (instance.inputs[k] == *symbol) {
                    target = k + 1;
                    break;
                }
            }
        } else if (task.task == TaskId::Mpc) {
            const auto index = block.empty() ? std::nullopt : as_int(block.front());
            if (index && *index > static_cast<std::int64_t>(matched) && *index <= static_cast<std::int64_t>(n))
                target = static_cast<std::size_t>(*index);
        } else {
            for (std::size_t k = matched; k < n; ++k) {
                if (block.size() >= 2 && expected[k].size() >= 2 && expected[k][0] == block[0] &&
                    expected[k][1] == block[1]) {
                    target = k + 1;
                    break;
                }
            }
        }
        if (target == 0) {
            return failure(std::min(matched + 1, n), TraceErrorKind::Parse, "", join_tokens(block),
                           "step block matches no remaining step");
        }
        const Tokens& want = expected[target - 1];
        const bool final_step = target == n;
        TraceErrorKind kind = TraceErrorKind::WrongState;
        if (task.task == TaskId::Lis) kind = classify_lis(want, block, final_step);
        else if (task.task == TaskId::Mpc) kind = classify_mpc(want, block, final_step);
        else if (final_step) kind = TraceErrorKind::WrongFinal;
        return failure(target, kind, join_tokens(want), join_tokens(block), "step " + std::to_string(target) + " differs");
    }

    const bool last_retained = matched == n && !trace.step_blocks.empty();
    Tokens want_final;
    if (last_retained) {
        want_final = {std::string(kEos)};
    } else {
        if (!trace.step_blocks.empty()) want_final.emplace_back(kSep);
        want_final.push_back(answer);
        want_final.emplace_back(kEos);
    }
    if (trace.final_tokens != want_final) {
        return failure(n, TraceErrorKind::WrongFinal, join_tokens(want_final), join_tokens(trace.final_tokens),
                       "final answer mismatch");
    }
    return {};
}

ValidationReport validate_tokens(const TaskDefinition& task, std::span<const std::string> tokens) {
    CotTrace trace;
    try {
        trace = parse_trace(task.task, tokens);
    } catch (const ParseError& e) {
        return failure(0, TraceErrorKind::Parse, "", "", e.what());
    }
    return validate_trace(task, trace.question_tokens, trace);
}

}  // namespace cotkit
