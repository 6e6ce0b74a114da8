#include "doctest.h"

#include <algorithm>

#include "cotkit/errors.hpp"
#include "cotkit/rng.hpp"
#include "cotkit/tasks.hpp"
#include "cotkit/trace.hpp"

using namespace cotkit;

namespace {

Tokens toks(const char* text) { return split_tokens(text); }

std::string sample(const CotTrace& t) { return join_tokens(t.tokens()); }

ErvcInstance condor() {
    ErvcInstance in;
    in.variables = {"Cheetah", "Condor"};
    in.known_count = 1;
    in.equations = {ErvcEquation{1, {0}, {3, 3}}};
    in.data_points = {{1, 6}, {3, 12}};
    in.query_values = {5};
    return in;
}

CotTrace lis_appendix(RecapPolicy recap = {}) {
    const std::vector<Symbol> inputs{48, 49, 26, 47};
    return render_trace(solve(lis_spec({4}), inputs), TaskId::Lis, recap);
}

CotTrace mpc_appendix(RecapPolicy recap = {}) {
    const std::vector<Symbol> inputs{0, 1, 1, 0, 0, 1, 1, 0};
    return render_trace(solve(mpc_spec({8}), inputs), TaskId::Mpc, recap);
}

}  // namespace

TEST_CASE("token helpers") {
    CHECK(split_tokens("  a  b\tc\n") == Tokens{"a", "b", "c"});
    CHECK(join_tokens(Tokens{"a", "b"}) == "a b");
    CHECK(split_tokens("").empty());
}

TEST_CASE("LIS appendix trace token for token") {
    CHECK(sample(lis_appendix()) ==
          "48 49 26 47 <sep> "
          "48 | <empty> = 48 1 : 1 -> 1 <sep> "
          "49 | 48 1 = 49 2 : 1 -> 2 <sep> "
          "26 | <empty> = 26 1 : 2 -> 2 <sep> "
          "47 | 26 1 = 47 2 : 2 -> 2 <eos>");
}

TEST_CASE("MPC appendix trace token for token") {
    CHECK(sample(mpc_appendix()) ==
          "0 1 1 0 0 1 1 0 , 8 <sep> "
          "1 , 0 , 1 -> 0 <sep> "
          "2 , 1 , 1 0 -> 1 <sep> "
          "3 , 1 , 1 0 1 -> 2 <sep> "
          "4 , 0 , 0 1 2 -> 0 <sep> "
          "5 , 0 , 1 2 0 -> 0 <sep> "
          "6 , 1 , 2 0 0 -> 2 <sep> "
          "7 , 1 , 0 0 2 -> 2 <sep> "
          "8 , 0 , 0 2 2 -> 0 <eos>");
}

TEST_CASE("recap removal drops the dependency echo") {
    CHECK(join_tokens(lis_appendix({false}).target_tokens()) ==
          "48 = 48 1 : 1 -> 1 <sep> 49 = 49 2 : 1 -> 2 <sep> 26 = 26 1 : 2 -> 2 <sep> 47 = 47 2 : 2 -> 2 <eos>");
    const CotTrace mpc = mpc_appendix({false});
    CHECK(join_tokens(mpc.step_blocks[3]) == "4 , 0 -> 0");
    CHECK(join_tokens(mpc.step_blocks.back()) == "8 , 0 -> 0");
}

TEST_CASE("ERVC Condor trace follows the worked solution") {
    const ErvcInstance in = condor();
    const CotTrace t = render_trace(in, ervc_solve(in));
    CHECK(join_tokens(t.question_tokens) ==
          "Data : data_1 : Condor = 6 , Cheetah = 1 . data_2 : Condor = 12 , Cheetah = 3 . Question : Assume all "
          "relations between variables are linear combinations . If the number of Cheetah equals 5 , then what is the "
          "number of Condor ? <sep>");
    std::vector<std::string> lines;
    for (const auto& b : t.step_blocks) lines.push_back(join_tokens(b));
    auto has = [&](const std::string& line) { return std::find(lines.begin(), lines.end(), line) != lines.end(); };
    CHECK(has("Cheetah as c_1 = 5"));
    CHECK(has("Target Variable : Condor as c_2"));
    CHECK(has("c_2 = K_1 * c_1 + K_2"));
    CHECK(has("Swap Equation 1 with Equation 2 :"));
    CHECK(has("Multiply Equation 1 by 1 and subtract 3 times Equation 2 :"));
    CHECK(has("New Equation 2 : -2 * K_2 = -6"));
    CHECK(has("K_2 = -6 / -2 = 3"));
    CHECK(has("K_1 = 9 / 3 = 3"));
    CHECK(has("Estimated coefficients : K_1 = 3 , K_2 = 3"));
    CHECK(has("c_2 = 3 * 5 + 3 = 15 + 3 = 18"));
    CHECK(has("Condor ( c_2 ) = 18"));
    CHECK(lines.back() == "Conclusion : The number of Condor equals 18");
    CHECK(t.final_tokens == Tokens{"<eos>"});
    const Tokens all = t.tokens();
    CHECK(all[all.size() - 2] == "18");

    const CotTrace bare = render_trace(in, ervc_solve(in), {false});
    CHECK(bare.step_blocks.size() < t.step_blocks.size());
    for (const auto& b : bare.step_blocks) CHECK(b.front() != "Recap");
}

TEST_CASE("dropout at the extremes") {
    Rng rng(1);
    const CotTrace full = lis_appendix();
    const CotTrace qa = apply_dropout(full, {0.0}, rng);
    CHECK(join_tokens(qa.target_tokens()) == "2 <eos>");
    CHECK(qa.retained_mask == std::vector<bool>(4, false));
    const CotTrace kept = apply_dropout(full, {1.0}, rng);
    CHECK(kept == full);
}

TEST_CASE("dropout consumes one draw per step") {
    const CotTrace full = mpc_appendix();
    for (double rate : {0.0, 0.3, 1.0}) {
        Rng a(77);
        Rng b(77);
        apply_dropout(full, {rate}, a);
        for (std::size_t k = 0; k < full.step_count(); ++k) b.uniform01();
        CHECK(a.next() == b.next());
    }
}

TEST_CASE("dropout keeps the answer before eos") {
    Rng rng(3);
    const CotTrace full = mpc_appendix();
    for (int k = 0; k < 200; ++k) {
        const CotTrace t = apply_dropout(full, {0.5}, rng);
        const Tokens all = t.tokens();
        CHECK(all.back() == "<eos>");
        CHECK(all[all.size() - 2] == "0");
        CHECK(t.step_blocks.size() == static_cast<std::size_t>(std::count(t.retained_mask.begin(), t.retained_mask.end(), true)));
        if (!t.retained_mask.back()) CHECK(t.final_tokens.size() >= 2);
    }
    CotTrace partial = apply_dropout(full, {0.5}, rng);
    CHECK_THROWS_AS(apply_dropout(partial, {0.5}, rng), ContractError);
    CHECK_THROWS_AS(apply_dropout(full, {1.5}, rng), ContractError);
}

TEST_CASE("parse inverts render for every layout") {
    Rng rng(9);
    for (TaskId id : {TaskId::Lis, TaskId::Mpc, TaskId::Ervc}) {
        for (bool recap : {true, false}) {
            for (double rate : {1.0, 0.5, 0.0}) {
                for (int k = 0; k < 20; ++k) {
                    const Level level = id == TaskId::Ervc ? Level{3, 2} : Level{6, 0};
                    const ProblemInstance instance = sample_instance(id, level, rng);
                    const CotTrace full = render_instance(instance, {}, {recap});
                    const CotTrace t = apply_dropout(full, {rate}, rng);
                    const CotTrace parsed = parse_trace(id, t.tokens());
                    CHECK(parsed.tokens() == t.tokens());
                    const CotTrace layout = render_instance(instance, {}, {parsed.recap_enabled});
                    CHECK(retain_steps(layout, parsed.retained_mask).tokens() == t.tokens());
                    // An ERVC trace that kept no recap-only step reads as recap-free.
                    if (id == TaskId::Ervc) CHECK((!parsed.recap_enabled || recap));
                    else if (!t.step_blocks.empty()) CHECK(parsed.recap_enabled == recap);
                    if (id == TaskId::Mpc) CHECK(parsed.retained_mask == t.retained_mask);
                }
            }
        }
    }
}

TEST_CASE("dropout rate matches over many steps") {
    Rng rng(31);
    const CotTrace full = mpc_appendix();
    std::size_t kept = 0, steps = 0;
    while (steps < 10000) {
        const CotTrace t = apply_dropout(full, {0.5}, rng);
        kept += static_cast<std::size_t>(std::count(t.retained_mask.begin(), t.retained_mask.end(), true));
        steps += t.retained_mask.size();
    }
    const double fraction = static_cast<double>(kept) / static_cast<double>(steps);
    CHECK(fraction >= 0.48);
    CHECK(fraction <= 0.52);
}

TEST_CASE("appendix MPC sample parses into eight blocks") {
    const CotTrace parsed = parse_trace(TaskId::Mpc, mpc_appendix().tokens());
    CHECK(parsed.step_blocks.size() == 8);
    CHECK(parsed.retained_mask == std::vector<bool>(8, true));
}

TEST_CASE("truncation is reported at the cut") {
    const Tokens all = lis_appendix().tokens();
    for (std::size_t cut : {std::size_t{3}, std::size_t{9}, all.size() - 1}) {
        const Tokens head(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(cut));
        try {
            parse_trace(TaskId::Lis, head);
            FAIL("expected a parse error");
        } catch (const ParseError& e) {
            CHECK(e.position() == cut);
        }
    }
}

TEST_CASE("parse reports the offending token") {
    try {
        parse_trace(TaskId::Lis, toks("48 49 <sep> 48 | <empty> = 48 1 : 1 => 1 <eos>"));
        FAIL("expected a parse error");
    } catch (const ParseError& e) {
        CHECK(e.position() == 11);
    }
    CHECK_THROWS_AS(parse_trace(TaskId::Lis, toks("48 49 <sep> 48 | <empty> = 48 1 : 1 -> 1")), ParseError);
    CHECK_THROWS_AS(parse_trace(TaskId::Lis, toks("48 49 48 | <empty> = 48 1 : 1 -> 1 <eos>")), ParseError);
    CHECK_THROWS_AS(parse_trace(TaskId::Mpc, toks("0 1 , 3 <sep> 2 <eos>")), ParseError);
    CHECK_THROWS_AS(parse_trace(TaskId::Mpc, toks("0 1 , 2 <sep> 2 , 1 , 1 0 -> 1 <sep> 1 , 0 , 1 -> 0 <eos>")),
                    ParseError);
    CHECK_THROWS_AS(parse_trace(TaskId::Lis, toks("1 2 <sep> <sep> 2 <eos>")), ParseError);
    CHECK_THROWS_AS(parse_trace(TaskId::Lis, toks("1 2 <sep> 1 | <empty> = 1 1 : 1 -> 1 <sep> 2 = 2 2 : 1 -> 2 <eos>")),
                    ParseError);
}

TEST_CASE("question reconstruction") {
    const ProblemInstance lis = question_to_instance(TaskId::Lis, toks("48 49 26 47 <sep>"));
    CHECK(lis.inputs == std::vector<Symbol>{48, 49, 26, 47});
    CHECK(lis.level == Level{4, 0});
    const ProblemInstance mpc = question_to_instance(TaskId::Mpc, toks("0 1 1 , 3 <sep>"));
    CHECK(mpc.inputs == std::vector<Symbol>{0, 1, 1});
    const ErvcInstance in = condor();
    const ProblemInstance ervc = question_to_instance(TaskId::Ervc, render_trace(in, ervc_solve(in)).question_tokens);
    REQUIRE(ervc.ervc.has_value());
    CHECK(ervc.ervc->variables == in.variables);
    CHECK(ervc.ervc->data_points == in.data_points);
    CHECK(ervc.ervc->query_values == in.query_values);
    CHECK(ervc.level == Level{2, 1});
    CHECK_THROWS_AS(question_to_instance(TaskId::Lis, toks("1 2")), ParseError);
    CHECK_THROWS_AS(question_to_instance(TaskId::Lis, toks("1 x <sep>")), ParseError);
}

TEST_CASE("validation accepts generated traces") {
    const TaskDefinition lis = lis_spec({4});
    CHECK(validate_tokens(lis, lis_appendix().tokens()).valid);
    CHECK(validate_tokens(lis, lis_appendix({false}).tokens()).valid);
    CHECK(validate_tokens(lis, toks("48 49 26 47 <sep> 2 <eos>")).valid);
    CHECK(validate_tokens(lis, toks("48 49 26 47 <sep> 49 | 48 1 = 49 2 : 1 -> 2 <sep> 2 <eos>")).valid);
    const TaskDefinition mpc = mpc_spec({8});
    CHECK(validate_tokens(mpc, mpc_appendix().tokens()).valid);
    const ErvcInstance in = condor();
    const TaskDefinition ervc = make_task(TaskId::Ervc, Level{2, 1});
    CHECK(validate_tokens(ervc, render_trace(in, ervc_solve(in)).tokens()).valid);
    CHECK(validate_tokens(ervc, render_trace(in, ervc_solve(in), {false}).tokens()).valid);
}

TEST_CASE("validation classifies the first error") {
    const TaskDefinition lis = lis_spec({4});
    auto check = [&](const TaskDefinition& task, const char* text, std::size_t step, TraceErrorKind kind) {
        const ValidationReport r = validate_tokens(task, toks(text));
        CHECK_FALSE(r.valid);
        CHECK(r.first_error_step == step);
        CHECK(r.error_kind == kind);
    };
    // q_2 edited from 2 to 3.
    check(lis,
          "48 49 26 47 <sep> 48 | <empty> = 48 1 : 1 -> 1 <sep> 49 | 48 1 = 49 3 : 1 -> 2 <sep> "
          "26 | <empty> = 26 1 : 2 -> 2 <sep> 47 | 26 1 = 47 2 : 2 -> 2 <eos>",
          2, TraceErrorKind::WrongState);
    check(lis, "48 49 26 47 <sep> 49 | <empty> = 49 2 : 1 -> 2 <sep> 2 <eos>", 2, TraceErrorKind::WrongDependency);
    check(lis, "48 49 26 47 <sep> 26 | <empty> = 26 1 : 1 -> 2 <sep> 2 <eos>", 3, TraceErrorKind::WrongAggregate);
    check(lis, "48 49 26 47 <sep> 47 | 26 1 = 47 2 : 2 -> 3 <eos>", 4, TraceErrorKind::WrongFinal);
    check(lis, "48 49 26 47 <sep> 3 <eos>", 4, TraceErrorKind::WrongFinal);
    check(lis, "48 49 26 47 <sep> 50 | <empty> = 50 1 : 1 -> 1 <sep> 2 <eos>", 1, TraceErrorKind::Parse);
    check(lis, "48 49 26 47 <sep> 48 | <empty> = 48 1 : 1 -> 1 <eos>", 4, TraceErrorKind::WrongFinal);
    check(lis, "48 49 26 47 <sep> 48 | <empty> = 48 1 : 1 -> 1", 0, TraceErrorKind::Parse);

    const TaskDefinition mpc = mpc_spec({8});
    check(mpc, "0 1 1 0 0 1 1 0 , 8 <sep> 3 , 1 , 1 0 1 -> 3 <sep> 0 <eos>", 3, TraceErrorKind::WrongState);
    check(mpc, "0 1 1 0 0 1 1 0 , 8 <sep> 3 , 0 , 1 0 1 -> 0 <sep> 0 <eos>", 3, TraceErrorKind::WrongDependency);
    check(mpc, "0 1 1 0 0 1 1 0 , 8 <sep> 8 , 0 , 0 2 2 -> 1 <eos>", 8, TraceErrorKind::WrongFinal);

    const ErvcInstance in = condor();
    const TaskDefinition ervc = make_task(TaskId::Ervc, Level{2, 1});
    Tokens bad = render_trace(in, ervc_solve(in)).tokens();
    auto it = std::find(bad.begin(), bad.end(), "15");
    REQUIRE(it != bad.end());
    *it = "16";
    const ValidationReport r = validate_tokens(ervc, bad);
    CHECK_FALSE(r.valid);
    CHECK(r.error_kind == TraceErrorKind::WrongState);
    Tokens wrong_answer = render_trace(in, ervc_solve(in)).tokens();
    wrong_answer[wrong_answer.size() - 2] = "19";
    CHECK(validate_tokens(ervc, wrong_answer).error_kind == TraceErrorKind::WrongFinal);
}

TEST_CASE("error kind names") {
    CHECK(to_string(TraceErrorKind::WrongDependency) == "wrong_dependency");
    CHECK(to_string(TraceErrorKind::WrongFinal) == "wrong_final");
}
