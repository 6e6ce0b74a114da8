#include "cotkit/cli.hpp"

#include <sys/stat.h>

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <thread>

#include "CLI11.hpp"
#include "cotkit/analysis.hpp"
#include "cotkit/errors.hpp"
#include "cotkit/trace.hpp"

namespace cotkit {

namespace {

namespace fs = std::filesystem;

// Usage problems found after CLI11 accepted the flags.
class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

std::size_t parse_count(std::string_view text) {
    std::size_t value = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc{} || ptr != text.data() + text.size()) throw ContractError("bad count '" + std::string(text) + "'");
    return value;
}

void apply_umask() {
    const char* text = std::getenv("COTKIT_UMASK");
    if (text == nullptr || *text == '\0') return;
    unsigned value = 0;
    const std::string_view sv(text);
    auto [ptr, ec] = std::from_chars(sv.data(), sv.data() + sv.size(), value, 8);
    if (ec != std::errc{} || ptr != sv.data() + sv.size() || value > 0777)
        throw UsageError("COTKIT_UMASK must be an octal mode such as 022");
    ::umask(static_cast<mode_t>(value));
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DatasetIoError("cannot write " + path.string());
    out << text;
}

void ensure_out(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw DatasetIoError("cannot create " + dir.string() + ": " + ec.message());
}

Dataset load_dataset(const std::string& dir, bool verify) {
    if (!fs::is_directory(dir)) throw UsageError("dataset directory " + dir + " does not exist");
    if (!fs::exists(fs::path(dir) / "manifest.json")) throw UsageError(dir + " has no manifest.json");
    return read_dataset(dir, ReadOptions{verify});
}

unsigned default_jobs() { return std::max(1u, std::thread::hardware_concurrency()); }

struct GenerateArgs {
    std::string task;
    std::string train;
    std::string eval;
    std::optional<std::size_t> train_size;
    std::optional<std::size_t> eval_size;
    double cot = 1.0;
    bool no_recap = false;
    std::uint64_t seed = 0;
    State modulus = 100;
    Symbol lis_lo = 0;
    Symbol lis_hi = 99;
    std::string tie_break = "most_recent";
    std::string dedup = "auto";
    std::string out;
    unsigned jobs = 1;
};

int cmd_generate(const GenerateArgs& a, std::ostream& out, std::ostream& err) {
    DatasetSpec spec;
    try {
        spec.task = parse_task_id(a.task);
        spec.train_levels = parse_level_list(a.train, a.train_size);
        spec.eval_levels = parse_level_list(a.eval, a.eval_size);
        spec.cot_rate = a.cot;
        spec.recap = !a.no_recap;
        spec.seed = a.seed;
        spec.options.modulus = a.modulus;
        spec.options.lis_range = {a.lis_lo, a.lis_hi};
        spec.options.tie_break = a.tie_break == "earliest" ? TieBreak::Earliest : TieBreak::MostRecent;
        if (a.dedup != "auto") spec.dedup = a.dedup == "on";
        if (a.lis_lo > a.lis_hi) throw ContractError("--lis-min exceeds --lis-max");
        spec.check();
    } catch (const ContractError& e) {
        throw UsageError(e.what());
    }

    apply_umask();
    const Dataset dataset = build_dataset(spec, a.jobs);
    write_dataset(dataset, a.out);

    out << "wrote " << a.out << " (" << to_string(spec.task) << ", cot " << spec.cot_rate
        << (spec.recap ? ", recap" : ", no recap") << ", seed " << spec.seed << ")\n";
    for (const auto& l : dataset.manifest.levels)
        out << "  " << to_string(l.split) << " " << l.level.to_string() << " [" << l.role << "]: " << l.count << "\n";
    out << "  vocab: " << dataset.vocab.size() << " tokens\n";
    if (!dataset.vocab.eval_only.empty()) {
        err << "warning: " << dataset.vocab.eval_only.size() << " eval tokens never occur in train:";
        for (std::size_t k = 0; k < std::min<std::size_t>(10, dataset.vocab.eval_only.size()); ++k)
            err << " " << dataset.vocab.eval_only[k];
        err << "\n";
    }
    return kExitOk;
}

int cmd_validate(const std::string& dir, unsigned jobs, std::ostream& out, std::ostream& err) {
    const Dataset dataset = load_dataset(dir, false);
    const DatasetSpec& spec = dataset.manifest.spec;

    std::vector<const DatasetRecord*> records;
    for (const auto& r : dataset.train) records.push_back(&r);
    for (const auto& r : dataset.eval) records.push_back(&r);

    std::vector<std::string> problems(records.size());
    const std::size_t workers = std::max<std::size_t>(1, std::min<std::size_t>(jobs, records.size()));
    auto work = [&](std::size_t w) {
        for (std::size_t k = w; k < records.size(); k += workers) {
            const DatasetRecord& r = *records[k];
            try {
                Tokens tokens = r.question;
                tokens.insert(tokens.end(), r.target.begin(), r.target.end());
                const ValidationReport report = validate_tokens(record_task(spec, r), tokens);
                if (!report.valid) {
                    problems[k] = "step " + std::to_string(report.first_error_step.value_or(0)) + " " +
                                  std::string(to_string(report.error_kind)) + ": " + report.message;
                    if (!report.expected.empty() || !report.actual.empty())
                        problems[k] += " (expected '" + report.expected + "', got '" + report.actual + "')";
                    continue;
                }
                const ProblemInstance instance = question_to_instance(spec.task, r.question);
                if (instance.level != r.level) {
                    problems[k] = "question is level " + instance.level.to_string() + ", record says " + r.level.to_string();
                    continue;
                }
                const CotTrace full = render_instance(instance, spec.options, RecapPolicy{spec.recap});
                if (retain_steps(full, r.retained_mask).target_tokens() != r.target)
                    problems[k] = "retained_mask disagrees with the target";
            } catch (const std::exception& e) {
                problems[k] = e.what();
            }
        }
    };
    std::vector<std::thread> threads;
    for (std::size_t w = 1; w < workers; ++w) threads.emplace_back(work, w);
    work(0);
    for (auto& t : threads) t.join();

    std::size_t invalid = 0;
    for (std::size_t k = 0; k < records.size(); ++k) {
        if (problems[k].empty()) continue;
        if (invalid == 0) err << "invalid record " << records[k]->id << ": " << problems[k] << "\n";
        ++invalid;
    }
    const auto mismatches = manifest_mismatches(dataset);
    for (const auto& m : mismatches) err << "manifest: " << m << "\n";
    if (invalid > 0 || !mismatches.empty()) {
        out << invalid << " of " << records.size() << " records invalid\n";
        return kExitFailure;
    }
    out << "all " << records.size() << " records valid\n";
    return kExitOk;
}

int cmd_analyze(const std::string& dir, const std::string& out_dir, std::optional<int> n3, std::optional<std::uint64_t> k,
                double smoothing, std::ostream& out, std::ostream& err) {
    const Dataset dataset = load_dataset(dir, true);
    CoverageReport coverage;
    KlEstimate kl;
    try {
        coverage = prefix_coverage(dataset, n3, k);
        kl = estimate_kl(dataset, coverage, smoothing);
    } catch (const ContractError& e) {
        err << "error: " << e.what() << "\n";
        return kExitFailure;
    }
    apply_umask();
    ensure_out(out_dir);
    const std::string csv = coverage_csv(coverage, kl);
    write_text(fs::path(out_dir) / "coverage.csv", csv);
    out << "n3 " << coverage.n3 << ", m2 " << coverage.m2 << ", m3 " << coverage.m3 << ", k " << coverage.k << "\n"
        << "p_cover " << format_rational(coverage.p_cover) << " (" << coverage.p_cover_value() << "), matched prefixes "
        << coverage.matched_prefixes << "/" << coverage.m3 << "\n"
        << "kl_qa " << kl.kl_qa << ", kl_qcot " << kl.kl_qcot << ", bound " << kl.bound << "\n";
    return kExitOk;
}

int cmd_stats(const std::string& dir, std::ostream& out) {
    const Dataset dataset = load_dataset(dir, true);
    const DatasetSpec& spec = dataset.manifest.spec;
    out << "task " << to_string(spec.task) << ", cot " << spec.cot_rate << (spec.recap ? ", recap" : ", no recap")
        << ", seed " << spec.seed << ", vocab " << dataset.vocab.size() << "\n";
    out << "split,level,role,count,mean_target_tokens,retained_fraction,distinct_answers\n";
    for (const auto& l : dataset.manifest.levels) {
        const auto& records = l.split == Split::Train ? dataset.train : dataset.eval;
        double tokens = 0.0;
        double kept = 0.0;
        double steps = 0.0;
        std::set<std::string> answers;
        for (const auto& r : records) {
            if (r.level != l.level) continue;
            tokens += static_cast<double>(r.target.size());
            kept += static_cast<double>(std::count(r.retained_mask.begin(), r.retained_mask.end(), true));
            steps += static_cast<double>(r.retained_mask.size());
            answers.insert(r.answer());
        }
        out << to_string(l.split) << "," << l.level.to_string() << "," << l.role << "," << l.count << ","
            << (l.count ? tokens / static_cast<double>(l.count) : 0.0) << "," << (steps > 0 ? kept / steps : 0.0) << ","
            << answers.size() << "\n";
    }
    if (!dataset.vocab.eval_only.empty()) out << "eval-only tokens: " << dataset.vocab.eval_only.size() << "\n";
    return kExitOk;
}

void emit(const std::optional<std::string>& out_dir, const std::string& name, const std::string& csv, std::ostream& out) {
    if (out_dir) {
        apply_umask();
        ensure_out(*out_dir);
        write_text(fs::path(*out_dir) / name, csv);
    } else {
        out << csv;
    }
}

}  // namespace

std::vector<LevelCount> parse_level_list(std::string_view text, std::optional<std::size_t> total) {
    std::vector<LevelCount> levels;
    std::vector<bool> bare;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const std::size_t end = std::min(text.find(',', pos), text.size());
        const std::string_view item = text.substr(pos, end - pos);
        if (item.empty()) throw ContractError("empty item in level list '" + std::string(text) + "'");
        const std::size_t colon = item.find(':');
        LevelCount lc;
        lc.level = Level::parse(item.substr(0, colon));
        if (colon != std::string_view::npos) lc.count = parse_count(item.substr(colon + 1));
        bare.push_back(colon == std::string_view::npos);
        levels.push_back(lc);
        pos = end + 1;
    }
    const auto bare_count = static_cast<std::size_t>(std::count(bare.begin(), bare.end(), true));
    if (bare_count > 0 && bare_count != levels.size())
        throw ContractError("level list mixes 'n:count' and bare levels");
    if (bare_count > 0) {
        if (!total) throw ContractError("bare levels need a total size");
        for (std::size_t k = 0; k < levels.size(); ++k)
            levels[k].count = *total / levels.size() + (k < *total % levels.size() ? 1 : 0);
    } else if (total) {
        throw ContractError("a total size applies only to bare levels");
    }
    return levels;
}

std::pair<unsigned, unsigned> parse_range(std::string_view text) {
    auto parse = [&](std::string_view s) {
        unsigned v = 0;
        auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (s.empty() || ec != std::errc{} || ptr != s.data() + s.size())
            throw ContractError("bad range '" + std::string(text) + "'");
        return v;
    };
    const std::size_t dots = text.find("..");
    if (dots == std::string_view::npos) {
        const unsigned v = parse(text);
        return {v, v};
    }
    const unsigned lo = parse(text.substr(0, dots));
    const unsigned hi = parse(text.substr(dots + 2));
    if (lo > hi) throw ContractError("range '" + std::string(text) + "' is empty");
    return {lo, hi};
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Compound-task chain-of-thought dataset toolkit"};
    app.require_subcommand(1);
    app.allow_extras(false);

    GenerateArgs gen;
    auto* generate = app.add_subcommand("generate", "Generate train/eval datasets");
    generate->add_option("--task", gen.task, "lis | mpc | ervc")->required();
    generate->add_option("--train", gen.train, "Train levels, e.g. 4:5000,16:5000")->required();
    generate->add_option("--eval", gen.eval, "Eval levels, e.g. 10:2000")->required();
    generate->add_option("--train-size", gen.train_size, "Total train count split evenly over bare levels");
    generate->add_option("--eval-size", gen.eval_size, "Total eval count split evenly over bare levels");
    generate->add_option("--cot", gen.cot, "Per-step retain rate")->check(CLI::Range(0.0, 1.0));
    generate->add_flag("--no-recap", gen.no_recap, "Drop dependency recaps from steps");
    generate->add_option("--seed", gen.seed, "Dataset seed");
    generate->add_option("--modulus", gen.modulus, "MPC modulus (0 = exact counts)")->check(CLI::NonNegativeNumber);
    generate->add_option("--lis-min", gen.lis_lo, "Smallest LIS value");
    generate->add_option("--lis-max", gen.lis_hi, "Largest LIS value");
    generate->add_option("--tie-break", gen.tie_break, "LIS predecessor tie-break")
        ->check(CLI::IsMember({"most_recent", "earliest"}));
    generate->add_option("--dedup", gen.dedup, "auto | on | off")->check(CLI::IsMember({"auto", "on", "off"}));
    generate->add_option("--out", gen.out, "Output directory")->required();
    generate->add_option("--jobs", gen.jobs, "Worker threads")->check(CLI::PositiveNumber);

    std::string validate_dir;
    unsigned validate_jobs = default_jobs();
    auto* validate = app.add_subcommand("validate", "Check every record against the solver");
    validate->add_option("dir,--dir", validate_dir, "Dataset directory")->required();
    validate->add_option("--jobs", validate_jobs, "Worker threads")->check(CLI::PositiveNumber);

    std::string analyze_dir;
    std::string analyze_out;
    std::optional<int> analyze_n3;
    std::optional<std::uint64_t> analyze_k;
    double smoothing = 1e-6;
    auto* analyze = app.add_subcommand("analyze", "Coverage probability and KL estimates");
    analyze->add_option("dir,--dir", analyze_dir, "Dataset directory")->required();
    analyze->add_option("--out", analyze_out, "Output directory for coverage.csv")->required();
    analyze->add_option("--n3", analyze_n3, "Eval complexity (default: the single eval level)");
    analyze->add_option("--k", analyze_k, "Override the alphabet size");
    analyze->add_option("--smoothing", smoothing, "Add-constant smoothing")->check(CLI::NonNegativeNumber);

    std::string stats_dir;
    auto* stats = app.add_subcommand("stats", "Per-level summary of a dataset");
    stats->add_option("dir,--dir", stats_dir, "Dataset directory")->required();

    auto* theory = app.add_subcommand("theory", "Theory numerics");
    theory->require_subcommand(1);

    double drop_eps = 0.1;
    std::string drop_l = "0..10";
    std::optional<std::string> drop_out;
    auto* drop = theory->add_subcommand("drop", "Accuracy (1 - eps)^l over a range of l");
    drop->add_option("--eps", drop_eps, "Per-step error rate")->check(CLI::Range(0.0, 1.0));
    drop->add_option("--l", drop_l, "Step range a..b");
    drop->add_option("--out", drop_out, "Output directory for drop.csv");

    DecayConfig decay;
    std::string decay_mode = "independent";
    std::optional<std::string> decay_out;
    auto* attention = theory->add_subcommand("attention", "Rotary attention decay profile and threshold");
    attention->add_option("--d-model", decay.d_model, "Even embedding width");
    attention->add_option("--d-max", decay.d_max, "Largest relative distance");
    attention->add_option("--trials", decay.trials, "Random query/key pairs")->check(CLI::PositiveNumber);
    attention->add_option("--eps", decay.epsilon, "Resolution threshold")->check(CLI::PositiveNumber);
    attention->add_option("--mode", decay_mode, "independent | matched")->check(CLI::IsMember({"independent", "matched"}));
    attention->add_option("--seed", decay.seed, "Seed");
    attention->add_option("--out", decay_out, "Output directory for attention CSVs");

    GradientSimConfig grad;
    grad.jobs = default_jobs();
    std::optional<std::string> grad_out;
    auto* gradient = theory->add_subcommand("gradient", "Irrelevant-feature gradient alignment simulation");
    gradient->add_option("--dim", grad.dim, "Relevant feature width");
    gradient->add_option("--irrelevant-dim", grad.irrelevant_dim, "Irrelevant feature width (0 = dim/2)");
    gradient->add_option("--n", grad.sample_size, "Sample size");
    gradient->add_option("--sigma", grad.noise_sigma, "Noise standard deviation")->check(CLI::NonNegativeNumber);
    gradient->add_option("--trials", grad.trials, "Monte Carlo trials");
    gradient->add_option("--step", grad.step_fraction, "Iterate as a fraction of the fitted weights");
    gradient->add_option("--seed", grad.seed, "Seed");
    gradient->add_option("--jobs", grad.jobs, "Worker threads")->check(CLI::PositiveNumber);
    gradient->add_option("--out", grad_out, "Output directory for gradient.csv");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (*generate) return cmd_generate(gen, out, err);
        if (*validate) return cmd_validate(validate_dir, validate_jobs, out, err);
        if (*analyze) return cmd_analyze(analyze_dir, analyze_out, analyze_n3, analyze_k, smoothing, out, err);
        if (*stats) return cmd_stats(stats_dir, out);
        if (*drop) {
            std::pair<unsigned, unsigned> range;
            try {
                range = parse_range(drop_l);
            } catch (const ContractError& e) {
                throw UsageError(e.what());
            }
            emit(drop_out, "drop.csv", drop_csv(drop_eps, range.first, range.second), out);
            return kExitOk;
        }
        if (*attention) {
            decay.mode = decay_mode == "matched" ? PairMode::Matched : PairMode::Independent;
            DecayProfile profile;
            try {
                profile = attention_decay_profile(decay);
            } catch (const ContractError& e) {
                throw UsageError(e.what());
            }
            if (decay_out) {
                emit(decay_out, "attention_profile.csv", decay_csv(profile), out);
                emit(decay_out, "attention_summary.csv", decay_summary_csv(profile), out);
            } else {
                out << decay_summary_csv(profile);
            }
            if (!profile.tau)
                err << "note: no distance within d_max = " << decay.d_max << " keeps every sampled |A(d)| below "
                    << decay.epsilon << "\n";
            return kExitOk;
        }
        if (*gradient) {
            GradientSimReport report;
            try {
                report = gradient_alignment_sim(grad);
            } catch (const ContractError& e) {
                throw UsageError(e.what());
            }
            emit(grad_out, "gradient.csv", gradient_csv(report), out);
            if (grad_out) out << "gap " << report.gap << " [" << report.ci_low << ", " << report.ci_high << "]\n";
            return kExitOk;
        }
    } catch (const UsageError& e) {
        err << "usage error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitFailure;
    }
    return kExitUsage;
}

}  // namespace cotkit
