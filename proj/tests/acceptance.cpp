// One PASS/FAIL line per acceptance criterion; exits non-zero if any fails.

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cotkit/analysis.hpp"
#include "cotkit/cli.hpp"
#include "cotkit/dataset.hpp"
#include "cotkit/rng.hpp"
#include "cotkit/trace.hpp"

using namespace cotkit;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = true;
    std::string detail;
};

struct Criterion {
    std::string name;
    double budget_seconds = 0.0;
    std::function<Outcome()> check;
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

Outcome trace_fidelity() {
    const CotTrace lis = render_trace(solve(lis_spec({4}), std::vector<Symbol>{48, 49, 26, 47}), TaskId::Lis);
    const std::string lis_expected =
        "48 49 26 47 <sep> 48 | <empty> = 48 1 : 1 -> 1 <sep> 49 | 48 1 = 49 2 : 1 -> 2 <sep> "
        "26 | <empty> = 26 1 : 2 -> 2 <sep> 47 | 26 1 = 47 2 : 2 -> 2 <eos>";
    const CotTrace mpc = render_trace(solve(mpc_spec({8}), std::vector<Symbol>{0, 1, 1, 0, 0, 1, 1, 0}), TaskId::Mpc);
    const std::string mpc_expected =
        "0 1 1 0 0 1 1 0 , 8 <sep> 1 , 0 , 1 -> 0 <sep> 2 , 1 , 1 0 -> 1 <sep> 3 , 1 , 1 0 1 -> 2 <sep> "
        "4 , 0 , 0 1 2 -> 0 <sep> 5 , 0 , 1 2 0 -> 0 <sep> 6 , 1 , 2 0 0 -> 2 <sep> 7 , 1 , 0 0 2 -> 2 <sep> "
        "8 , 0 , 0 2 2 -> 0 <eos>";

    ErvcInstance condor;
    condor.variables = {"Cheetah", "Condor"};
    condor.known_count = 1;
    condor.equations = {ErvcEquation{1, {0}, {3, 3}}};
    condor.data_points = {{1, 6}, {3, 12}};
    condor.query_values = {5};
    const ErvcSolution solved = ervc_solve(condor);
    const CotTrace ervc = render_trace(condor, solved);

    Outcome o;
    std::vector<std::string> bad;
    if (join_tokens(lis.tokens()) != lis_expected) bad.push_back("LIS");
    if (join_tokens(mpc.tokens()) != mpc_expected) bad.push_back("MPC");
    if (solved.relations.size() != 1 || solved.relations[0].coefficients != std::vector<Rational>{3, 3})
        bad.push_back("ERVC coefficients");
    if (solved.final_answer != 18 || ervc.step_blocks.empty() ||
        join_tokens(ervc.step_blocks.back()) != "Conclusion : The number of Condor equals 18")
        bad.push_back("ERVC answer");
    o.pass = bad.empty();
    o.detail = o.pass ? "LIS, MPC and ERVC samples exact" : "mismatch in";
    for (const auto& b : bad) o.detail += " " + b;
    return o;
}

Outcome oracle_equivalence() {
    Rng rng(derive_seed(1, 0, 0));
    std::size_t mismatches = 0;
    for (int k = 0; k < 1000; ++k) {
        const int n = static_cast<int>(rng.uniform_int(1, 12));
        const ProblemInstance in = sample_instance(TaskId::Lis, Level{n, 0}, rng);
        if (solve(make_task(TaskId::Lis, Level{n, 0}), in).final_answer != brute_force_answer(TaskId::Lis, in)) ++mismatches;
    }
    TaskOptions exact;
    exact.modulus = 0;
    for (int k = 0; k < 1000; ++k) {
        const int n = static_cast<int>(rng.uniform_int(1, 18));
        const ProblemInstance in = sample_instance(TaskId::Mpc, Level{n, 0}, rng, exact);
        if (solve(make_task(TaskId::Mpc, Level{n, 0}, exact), in).final_answer != brute_force_answer(TaskId::Mpc, in))
            ++mismatches;
    }
    return {mismatches == 0, std::to_string(mismatches) + " mismatches over 1000 LIS (n<=12) + 1000 MPC (n<=18, exact)"};
}

Outcome ervc_recovery() {
    Rng rng(derive_seed(2, 0, 0));
    std::size_t wrong = 0, total = 0;
    for (auto [n, m] : {std::pair{2, 1}, {3, 1}, {3, 2}, {4, 1}, {4, 3}}) {
        for (int k = 0; k < 100; ++k, ++total) {
            const ErvcInstance in = ervc_generate(n, m, rng);
            const ErvcSolution s = ervc_solve(in);
            bool ok = s.relations.size() == in.equations.size();
            for (std::size_t j = 0; ok && j < in.equations.size(); ++j) {
                const std::vector<Rational> truth(in.equations[j].coefficients.begin(), in.equations[j].coefficients.end());
                ok = s.relations[j].coefficients == truth;
            }
            if (!ok) ++wrong;
        }
    }
    return {wrong == 0, std::to_string(wrong) + " of " + std::to_string(total) + " instances with a coefficient mismatch"};
}

Outcome prefix_substructure() {
    Rng rng(derive_seed(3, 0, 0));
    std::size_t failures = 0;
    for (TaskId id : {TaskId::Lis, TaskId::Mpc}) {
        for (int k = 0; k < 100; ++k) {
            const int n = static_cast<int>(rng.uniform_int(1, 24));
            const ProblemInstance in = sample_instance(id, Level{n, 0}, rng);
            const auto n3 = static_cast<std::size_t>(rng.uniform_int(1, n));
            if (!check_prefix_substructure(make_task(id, Level{n, 0}), in.inputs, n3)) ++failures;
        }
    }
    return {failures == 0, std::to_string(failures) + " failures over 100 pairs per task"};
}

Outcome coverage_kl() {
    DatasetSpec toy;
    toy.task = TaskId::Mpc;
    toy.train_levels = {{Level{3, 0}, 4}};
    toy.eval_levels = {{Level{2, 0}, 1}};
    const Dataset toy_data = build_dataset(toy);
    const CoverageReport toy_cov = prefix_coverage(toy_data);
    const KlEstimate toy_kl = estimate_kl(toy_data, toy_cov);
    const bool toy_ok = toy_cov.k == 2 && toy_cov.n3 == 2 && toy_cov.m3 == 1 && toy_cov.m2 == 4 &&
                        toy_cov.p_cover == Rational(1) && toy_kl.bound == 0.0;

    Rng rng(derive_seed(5, 0, 0));
    std::size_t wrong = 0;
    for (int k = 0; k < 20; ++k) {
        DatasetSpec spec;
        spec.task = rng.bernoulli(0.5) ? TaskId::Lis : TaskId::Mpc;
        spec.seed = rng.next();
        if (spec.task == TaskId::Lis) spec.options.lis_range = {0, rng.uniform_int(1, 99)};
        const int n3 = static_cast<int>(rng.uniform_int(3, 8));
        spec.eval_levels = {{Level{n3, 0}, static_cast<std::size_t>(rng.uniform_int(4, 8))}};
        spec.train_levels = {{Level{static_cast<int>(rng.uniform_int(1, n3)), 0}, static_cast<std::size_t>(rng.uniform_int(1, 10))},
                             {Level{n3 + static_cast<int>(rng.uniform_int(1, 8)), 0},
                              static_cast<std::size_t>(rng.uniform_int(1, 10))}};
        if (rng.bernoulli(0.5))
            spec.train_levels.push_back({Level{n3 + 9, 0}, static_cast<std::size_t>(rng.uniform_int(1, 10))});
        spec.dedup = false;
        const Dataset d = build_dataset(spec);

        // Oracle: counts read off the manifest, alphabet from the options.
        std::uint64_t m2 = 0, m3 = 0;
        for (const auto& l : d.manifest.levels) {
            if (l.split == Split::Train && l.level.n > n3) m2 += l.count;
            if (l.split == Split::Eval && l.level.n == n3) m3 += l.count;
        }
        const std::uint64_t alphabet = spec.task == TaskId::Mpc ? 2 : spec.options.lis_range.size();
        Rational expected(m2);
        expected /= m3;
        for (int i = 0; i < n3; ++i) expected /= alphabet;
        const CoverageReport c = prefix_coverage(d);
        if (c.p_cover != expected || c.m2 != m2 || c.m3 != m3 || c.k != alphabet) ++wrong;
    }
    Outcome o;
    o.pass = toy_ok && wrong == 0;
    o.detail = std::string("toy p_cover ") + format_rational(toy_cov.p_cover) + ", bound " + std::to_string(toy_kl.bound) +
               "; " + std::to_string(wrong) + " of 20 random manifests disagree with m2/(m3 k^n3)";
    return o;
}

Outcome dropout_statistics() {
    DatasetSpec spec;
    spec.task = TaskId::Lis;
    spec.train_levels = {{Level{8, 0}, 1000}, {Level{16, 0}, 1000}};
    spec.eval_levels = {{Level{12, 0}, 500}};
    spec.cot_rate = 0.5;
    spec.seed = 11;
    const Dataset d = build_dataset(spec, 4);
    std::size_t steps = 0, kept = 0, records = 0, answers_ok = 0;
    for (const auto* split : {&d.train, &d.eval}) {
        for (const auto& r : *split) {
            ++records;
            for (bool b : r.retained_mask) {
                ++steps;
                kept += b ? 1 : 0;
            }
            const TaskDefinition task = record_task(spec, r);
            const ProblemInstance in = question_to_instance(TaskId::Lis, r.question);
            if (r.answer() == std::to_string(solve(task, in).final_answer)) ++answers_ok;
        }
    }
    const double fraction = static_cast<double>(kept) / static_cast<double>(steps);
    std::ostringstream detail;
    detail << "retained " << fraction << " of " << steps << " steps; answer present in " << answers_ok << "/" << records
           << " records";
    return {steps >= 10000 && std::abs(fraction - 0.5) <= 0.02 && answers_ok == records, detail.str()};
}

Outcome theory_numerics() {
    Rng rng(derive_seed(7, 0, 0));
    const auto theta = rope_angles(64);
    double worst_dot = 0.0;
    for (int k = 0; k < 100; ++k) {
        std::vector<double> q(64), key(64);
        for (auto& v : q) v = rng.normal();
        for (auto& v : key) v = rng.normal();
        double dot = 0.0;
        for (std::size_t i = 0; i < q.size(); ++i) dot += q[i] * key[i];
        worst_dot = std::max(worst_dot, std::abs(rope_score(q, key, theta, 0.0) - dot));
    }

    const auto theta2 = rope_angles(2);
    double worst_cos = 0.0;
    for (int k = 0; k < 100; ++k) {
        const double phi = 2.0 * M_PI * rng.uniform01();
        const std::vector<double> unit{std::cos(phi), std::sin(phi)};
        const double dist = static_cast<double>(rng.uniform_int(0, 10000));
        worst_cos = std::max(worst_cos, std::abs(rope_score(unit, unit, theta2, dist) - std::cos(dist * theta2[0])));
    }

    // Dyadic rates make repeated multiplication exact for these exponents.
    bool drop_exact = true;
    for (double eps : {0.0, 0.25, 0.5, 0.75, 1.0}) {
        double product = 1.0;
        for (unsigned l = 0; l <= 26; ++l) {
            if (drop_accuracy(eps, l) != product) drop_exact = false;
            product *= 1.0 - eps;
        }
    }

    GradientSimConfig cfg;
    cfg.dim = 8;
    cfg.sample_size = 16;
    cfg.noise_sigma = 0.5;
    cfg.trials = 2000;
    cfg.seed = 1;
    cfg.jobs = 4;
    const GradientSimReport g = gradient_alignment_sim(cfg);

    std::ostringstream detail;
    detail << "A(0) err " << worst_dot << ", cos err " << worst_cos << ", drop " << (drop_exact ? "exact" : "inexact")
           << ", gradient gap " << g.gap << " CI [" << g.ci_low << ", " << g.ci_high << "]";
    const bool pass = worst_dot <= 1e-12 && worst_cos <= 1e-9 && drop_exact && g.gap > 0 && g.ci_defined && g.ci_low > 0;
    return {pass, detail.str()};
}

int cli(const std::vector<std::string>& args) {
    std::vector<const char*> argv{"cotkit"};
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    return run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
}

Outcome determinism(const fs::path& work) {
    const std::vector<std::string> base{"generate", "--task", "lis",  "--train", "4:3000,16:3000", "--eval",
                                        "10:2000",  "--cot",  "0.5",  "--seed",  "1234"};
    std::vector<fs::path> dirs{work / "serial_a", work / "serial_b", work / "parallel"};
    for (std::size_t k = 0; k < dirs.size(); ++k) {
        fs::remove_all(dirs[k]);
        std::vector<std::string> args = base;
        args.insert(args.end(), {"--out", dirs[k].string(), "--jobs", k == 2 ? "8" : "1"});
        if (cli(args) != 0) return {false, "generate failed for " + dirs[k].string()};
    }
    std::size_t differing = 0;
    for (const char* f : {"train.jsonl", "eval.jsonl", "manifest.json", "vocab.txt"}) {
        const std::string ref = slurp(dirs[0] / f);
        if (ref.empty() || ref != slurp(dirs[1] / f) || ref != slurp(dirs[2] / f)) ++differing;
    }
    return {differing == 0, std::to_string(differing) + " of 4 files differ across two serial runs and one 8-thread run"};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"cotkit acceptance checks"};
    std::string work = (fs::temp_directory_path() / "cotkit_acceptance").string();
    app.add_option("--work", work, "Scratch directory");
    CLI11_PARSE(app, argc, argv);
    fs::create_directories(work);

    const std::vector<Criterion> criteria{
        {"trace_fidelity", 1.0, trace_fidelity},
        {"oracle_equivalence", 60.0, oracle_equivalence},
        {"ervc_recovery", 60.0, ervc_recovery},
        {"prefix_substructure", 60.0, prefix_substructure},
        {"coverage_kl", 10.0, coverage_kl},
        {"dropout_statistics", 60.0, dropout_statistics},
        {"theory_numerics", 60.0, theory_numerics},
        {"determinism", 300.0, [&] { return determinism(work); }},
    };

    int failed = 0;
    for (const auto& c : criteria) {
        const auto start = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.check();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (seconds > c.budget_seconds) {
            o.pass = false;
            o.detail += "; over the time budget";
        }
        if (!o.pass) ++failed;
        std::cout << (o.pass ? "PASS " : "FAIL ") << c.name << " (" << std::fixed << std::setprecision(3) << seconds
                  << " s): " << std::defaultfloat << o.detail << "\n";
    }
    std::cout << (failed == 0 ? "all criteria pass" : std::to_string(failed) + " criteria fail") << "\n";
    return failed == 0 ? 0 : 1;
}
