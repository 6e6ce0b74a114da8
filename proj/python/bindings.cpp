#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "cotkit/analysis.hpp"
#include "cotkit/cli.hpp"
#include "cotkit/dataset.hpp"
#include "cotkit/errors.hpp"
#include "cotkit/rng.hpp"
#include "cotkit/trace.hpp"

namespace py = pybind11;
using namespace cotkit;

namespace {

py::object fraction(const Rational& value) {
    static py::object cls = py::module_::import("fractions").attr("Fraction");
    const std::string num = boost::multiprecision::numerator(value).str();
    const std::string den = boost::multiprecision::denominator(value).str();
    return cls(py::int_(py::str(num)), py::int_(py::str(den)));
}

std::vector<LevelCount> level_counts(const std::map<std::string, std::size_t>& levels) {
    std::vector<LevelCount> out;
    for (const auto& [text, count] : levels) out.push_back({Level::parse(text), count});
    std::sort(out.begin(), out.end(), [](const LevelCount& a, const LevelCount& b) { return a.level < b.level; });
    return out;
}

py::dict record_dict(const DatasetRecord& r) {
    py::dict d;
    d["id"] = r.id;
    d["split"] = std::string(to_string(r.split));
    d["level"] = r.level.to_string();
    d["question"] = r.question;
    d["target"] = r.target;
    d["cot_rate"] = r.cot_rate;
    d["retained_mask"] = r.retained_mask;
    d["seed"] = r.seed;
    d["index"] = r.index;
    return d;
}

py::dict dataset_dict(const Dataset& ds) {
    py::list train, eval;
    for (const auto& r : ds.train) train.append(record_dict(r));
    for (const auto& r : ds.eval) eval.append(record_dict(r));
    py::dict d;
    d["train"] = train;
    d["eval"] = eval;
    d["vocab"] = ds.vocab.tokens;
    d["eval_only_tokens"] = ds.vocab.eval_only;
    d["manifest"] = py::module_::import("json").attr("loads")(manifest_to_json(ds.manifest));
    return d;
}

DatasetSpec make_spec(const std::string& task, const std::map<std::string, std::size_t>& train,
                      const std::map<std::string, std::size_t>& eval, double cot_rate, bool recap, std::uint64_t seed,
                      State modulus, Symbol lis_min, Symbol lis_max, std::optional<bool> dedup) {
    DatasetSpec spec;
    spec.task = parse_task_id(task);
    spec.train_levels = level_counts(train);
    spec.eval_levels = level_counts(eval);
    spec.cot_rate = cot_rate;
    spec.recap = recap;
    spec.seed = seed;
    spec.options.modulus = modulus;
    spec.options.lis_range = {lis_min, lis_max};
    spec.dedup = dedup;
    return spec;
}

py::dict trace_dict(const CotTrace& t) {
    py::dict d;
    d["question"] = t.question_tokens;
    d["blocks"] = t.step_blocks;
    d["final"] = t.final_tokens;
    d["retained_mask"] = t.retained_mask;
    d["recap"] = t.recap_enabled;
    d["tokens"] = t.tokens();
    return d;
}

}  // namespace

PYBIND11_MODULE(_cotkit, m) {
    m.doc() = "Compound-task trace generation, validation and analysis";

    py::register_exception<ContractError>(m, "ContractError", PyExc_ValueError);
    py::register_exception<RangeError>(m, "RangeError", PyExc_OverflowError);
    py::register_exception<ParseError>(m, "ParseError", PyExc_ValueError);
    py::register_exception<GenerationError>(m, "GenerationError", PyExc_RuntimeError);
    py::register_exception<DatasetIoError>(m, "DatasetIoError", PyExc_OSError);

    m.def(
        "build_dataset",
        [](const std::string& task, const std::map<std::string, std::size_t>& train,
           const std::map<std::string, std::size_t>& eval, double cot_rate, bool recap, std::uint64_t seed,
           State modulus, Symbol lis_min, Symbol lis_max, std::optional<bool> dedup,
           std::optional<std::filesystem::path> out, unsigned jobs) {
            const DatasetSpec spec = make_spec(task, train, eval, cot_rate, recap, seed, modulus, lis_min, lis_max, dedup);
            Dataset ds;
            {
                py::gil_scoped_release release;
                ds = build_dataset(spec, jobs);
                if (out) write_dataset(ds, *out);
            }
            return dataset_dict(ds);
        },
        py::arg("task"), py::arg("train"), py::arg("eval"), py::arg("cot_rate") = 1.0, py::arg("recap") = true,
        py::arg("seed") = 0, py::arg("modulus") = 100, py::arg("lis_min") = 0, py::arg("lis_max") = 99,
        py::arg("dedup") = py::none(), py::arg("out") = py::none(), py::arg("jobs") = 1,
        "Builds a dataset from {level: count} maps; writes it when `out` is given.");

    m.def(
        "read_dataset", [](const std::filesystem::path& dir, bool verify) { return dataset_dict(read_dataset(dir, {verify})); },
        py::arg("dir"), py::arg("verify") = true);

    m.def(
        "sample_trace",
        [](const std::string& task, const std::string& level, std::uint64_t seed, bool recap, double cot_rate) {
            const TaskId id = parse_task_id(task);
            Rng rng(seed);
            const ProblemInstance instance = sample_instance(id, Level::parse(level), rng);
            const CotTrace full = render_instance(instance, {}, {recap});
            return trace_dict(apply_dropout(full, {cot_rate}, rng));
        },
        py::arg("task"), py::arg("level"), py::arg("seed") = 0, py::arg("recap") = true, py::arg("cot_rate") = 1.0);

    m.def(
        "render",
        [](const std::string& task, const std::vector<Symbol>& inputs, bool recap, State modulus) {
            const TaskId id = parse_task_id(task);
            TaskOptions options;
            options.modulus = modulus;
            const TaskDefinition def = make_task(id, Level{static_cast<int>(inputs.size()), 0}, options);
            return trace_dict(render_trace(solve(def, inputs), id, {recap}));
        },
        py::arg("task"), py::arg("inputs"), py::arg("recap") = true, py::arg("modulus") = 100,
        "Fully retained trace for an LIS or MPC input sequence.");

    m.def(
        "solve",
        [](const std::string& task, const std::vector<Symbol>& inputs, State modulus) {
            const TaskId id = parse_task_id(task);
            TaskOptions options;
            options.modulus = modulus;
            const Solution s = solve(make_task(id, Level{static_cast<int>(inputs.size()), 0}, options), inputs);
            std::vector<State> states;
            for (const auto& step : s.steps) states.push_back(step.state);
            return py::make_tuple(s.final_answer, states);
        },
        py::arg("task"), py::arg("inputs"), py::arg("modulus") = 100, "Returns (answer, per-step states).");

    m.def(
        "parse_trace",
        [](const std::string& task, const std::vector<std::string>& tokens) {
            return trace_dict(parse_trace(parse_task_id(task), tokens));
        },
        py::arg("task"), py::arg("tokens"));

    m.def(
        "validate",
        [](const std::string& task, const std::string& level, const std::vector<std::string>& tokens, State modulus) {
            TaskOptions options;
            options.modulus = modulus;
            const ValidationReport r = validate_tokens(make_task(parse_task_id(task), Level::parse(level), options), tokens);
            py::dict d;
            d["valid"] = r.valid;
            d["first_error_step"] = r.first_error_step;
            d["error_kind"] = std::string(to_string(r.error_kind));
            d["expected"] = r.expected;
            d["actual"] = r.actual;
            d["message"] = r.message;
            return d;
        },
        py::arg("task"), py::arg("level"), py::arg("tokens"), py::arg("modulus") = 100);

    m.def("split_tokens", &split_tokens, py::arg("text"));
    m.def("join_tokens", [](const std::vector<std::string>& tokens) { return join_tokens(tokens); }, py::arg("tokens"));
    m.def("sha256_hex", [](const py::bytes& data) { return sha256_hex(std::string(data)); }, py::arg("data"));

    m.def(
        "coverage_probability",
        [](std::uint64_t m2, std::uint64_t m3, std::uint64_t k, int n3) { return fraction(coverage_probability(m2, m3, k, n3)); },
        py::arg("m2"), py::arg("m3"), py::arg("k"), py::arg("n3"), "Exact m2 / (m3 * k^n3) as a Fraction.");

    m.def(
        "analyze",
        [](const std::filesystem::path& dir, std::optional<int> n3, std::optional<std::uint64_t> k, double smoothing) {
            const Dataset ds = read_dataset(dir);
            const CoverageReport c = prefix_coverage(ds, n3, k);
            const KlEstimate kl = estimate_kl(ds, c, smoothing);
            py::dict d;
            d["n3"] = c.n3;
            d["m2"] = c.m2;
            d["m3"] = c.m3;
            d["k"] = c.k;
            d["p_cover"] = fraction(c.p_cover);
            d["matched_prefixes"] = c.matched_prefixes;
            d["kl_qa"] = kl.kl_qa;
            d["kl_qcot"] = kl.kl_qcot;
            d["bound"] = kl.bound;
            return d;
        },
        py::arg("dir"), py::arg("n3") = py::none(), py::arg("k") = py::none(), py::arg("smoothing") = 1e-6);

    m.def("drop_accuracy", &drop_accuracy, py::arg("epsilon"), py::arg("l"));
    m.def("rope_angles", &rope_angles, py::arg("d_model"));
    m.def(
        "rope_score",
        [](const std::vector<double>& q, const std::vector<double>& k, double d) {
            if (q.size() % 2 != 0) throw ContractError("query width must be even");
            return rope_score(q, k, rope_angles(static_cast<int>(q.size())), d);
        },
        py::arg("query"), py::arg("key"), py::arg("d"));

    m.def(
        "attention_decay_profile",
        [](int d_model, std::size_t d_max, std::size_t trials, double epsilon, const std::string& mode, std::uint64_t seed) {
            DecayConfig cfg;
            cfg.d_model = d_model;
            cfg.d_max = d_max;
            cfg.trials = trials;
            cfg.epsilon = epsilon;
            if (mode != "independent" && mode != "matched") throw ContractError("mode must be independent or matched");
            cfg.mode = mode == "matched" ? PairMode::Matched : PairMode::Independent;
            cfg.seed = seed;
            DecayProfile p;
            {
                py::gil_scoped_release release;
                p = attention_decay_profile(cfg);
            }
            py::dict d;
            d["theta"] = p.theta;
            d["max_abs"] = p.max_abs;
            d["tau"] = p.tau;
            d["envelope"] = decade_envelope(p.max_abs);
            return d;
        },
        py::arg("d_model") = 64, py::arg("d_max") = 10000, py::arg("trials") = 100, py::arg("epsilon") = 1e-3,
        py::arg("mode") = "independent", py::arg("seed") = 0);

    m.def(
        "gradient_alignment_sim",
        [](int dim, int irrelevant_dim, int sample_size, double noise_sigma, std::size_t trials, double step_fraction,
           std::uint64_t seed, unsigned jobs) {
            GradientSimConfig cfg{dim, irrelevant_dim, sample_size, noise_sigma, trials, step_fraction, seed, jobs};
            GradientSimReport r;
            {
                py::gil_scoped_release release;
                r = gradient_alignment_sim(cfg);
            }
            py::dict d;
            d["trials"] = r.trials;
            d["irrelevant_dim"] = r.irrelevant_dim;
            d["mean_short"] = r.mean_short;
            d["mean_long"] = r.mean_long;
            d["gap"] = r.gap;
            d["gap_stderr"] = r.gap_stderr;
            d["ci"] = r.ci_defined ? py::object(py::make_tuple(r.ci_low, r.ci_high)) : py::object(py::none());
            d["max_irrelevant_norm"] = r.max_irrelevant_norm;
            return d;
        },
        py::arg("dim") = 8, py::arg("irrelevant_dim") = 0, py::arg("sample_size") = 16, py::arg("noise_sigma") = 0.5,
        py::arg("trials") = 2000, py::arg("step_fraction") = 0.5, py::arg("seed") = 0, py::arg("jobs") = 1);

    m.def(
        "run_cli",
        [](const std::vector<std::string>& args) {
            std::vector<const char*> argv{"cotkit"};
            for (const auto& a : args) argv.push_back(a.c_str());
            std::ostringstream out, err;
            const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
            return py::make_tuple(code, out.str(), err.str());
        },
        py::arg("args"), "Runs a CLI command in process; returns (exit_code, stdout, stderr).");

    m.attr("__version__") = std::string(kGeneratorVersion.substr(kGeneratorVersion.find(' ') + 1));
}
