#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "cotkit/cli.hpp"
#include "cotkit/errors.hpp"

using namespace cotkit;
namespace fs = std::filesystem;

namespace {

struct Run {
    int code = 0;
    std::string out;
    std::string err;
};

Run run(std::vector<std::string> args) {
    args.insert(args.begin(), "cotkit");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    Run r;
    r.code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
    r.out = out.str();
    r.err = err.str();
    return r;
}

fs::path scratch(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("cotkit_test_cli_" + name);
    fs::remove_all(dir);
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

std::size_t lines(const std::string& text) { return static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n')); }

}  // namespace

TEST_CASE("level lists") {
    CHECK(parse_level_list("4:10,16:20") == std::vector<LevelCount>{{Level{4, 0}, 10}, {Level{16, 0}, 20}});
    CHECK(parse_level_list("4,16", 11) == std::vector<LevelCount>{{Level{4, 0}, 6}, {Level{16, 0}, 5}});
    CHECK(parse_level_list("3x2:7") == std::vector<LevelCount>{{Level{3, 2}, 7}});
    CHECK_THROWS_AS(parse_level_list("4,16"), ContractError);
    CHECK_THROWS_AS(parse_level_list("4:1,16", 5), ContractError);
    CHECK_THROWS_AS(parse_level_list("4:1", 5), ContractError);
    CHECK_THROWS_AS(parse_level_list("x:1"), ContractError);
    CHECK(parse_range("2..5") == std::pair<unsigned, unsigned>{2, 5});
    CHECK(parse_range("3") == std::pair<unsigned, unsigned>{3, 3});
    CHECK_THROWS_AS(parse_range("5..2"), ContractError);
}

TEST_CASE("generate, validate, stats and analyze") {
    const fs::path dir = scratch("pipeline");
    Run g = run({"generate", "--task", "lis", "--train", "4:100,16:100", "--eval", "10:50", "--cot", "0.5", "--seed",
                 "7", "--out", dir.string()});
    REQUIRE(g.code == 0);
    CHECK(lines(slurp(dir / "train.jsonl")) == 200);
    CHECK(lines(slurp(dir / "eval.jsonl")) == 50);
    CHECK(fs::exists(dir / "manifest.json"));
    CHECK(fs::exists(dir / "vocab.txt"));

    Run v = run({"validate", dir.string()});
    CHECK(v.code == 0);
    CHECK(v.out.find("all 250 records valid") != std::string::npos);

    Run s = run({"stats", dir.string()});
    CHECK(s.code == 0);
    CHECK(s.out.find("train,16,m2,100,") != std::string::npos);

    const fs::path a1 = scratch("analyze1"), a2 = scratch("analyze2");
    CHECK(run({"analyze", dir.string(), "--out", a1.string()}).code == 0);
    CHECK(run({"analyze", dir.string(), "--out", a2.string()}).code == 0);
    CHECK(slurp(a1 / "coverage.csv") == slurp(a2 / "coverage.csv"));
    // 100 / (50 * 100^10)
    CHECK(slurp(a1 / "coverage.csv").find("\n10,100,50,100,1/50000000000000000000,") != std::string::npos);

    const fs::path again = scratch("pipeline_again");
    REQUIRE(run({"generate", "--task", "lis", "--train", "4:100,16:100", "--eval", "10:50", "--cot", "0.5", "--seed",
                 "7", "--jobs", "8", "--out", again.string()})
                .code == 0);
    for (const char* f : {"train.jsonl", "eval.jsonl", "manifest.json", "vocab.txt"})
        CHECK(slurp(dir / f) == slurp(again / f));

    for (const auto& p : {dir, a1, a2, again}) fs::remove_all(p);
}

TEST_CASE("validate reports the first bad record") {
    const fs::path dir = scratch("corrupt");
    REQUIRE(run({"generate", "--task", "mpc", "--train", "6:20", "--eval", "8:20", "--out", dir.string()}).code == 0);
    std::string train = slurp(dir / "train.jsonl");
    const std::size_t line3 = train.find('\n', train.find('\n') + 1) + 1;
    const std::size_t eos = train.find(" <eos>\"", line3);
    const std::size_t answer = train.rfind(' ', eos - 1) + 1;
    train.replace(answer, eos - answer, "777");
    { std::ofstream(dir / "train.jsonl", std::ios::binary) << train; }

    Run v = run({"validate", dir.string()});
    CHECK(v.code == 1);
    CHECK(v.err.find("invalid record train-2") != std::string::npos);
    CHECK(v.err.find("manifest:") != std::string::npos);
    fs::remove_all(dir);
}

TEST_CASE("usage errors exit with 2") {
    const fs::path empty = scratch("empty");
    fs::create_directories(empty);
    CHECK(run({"validate", empty.string()}).code == 2);
    CHECK(run({"validate", (empty / "nope").string()}).code == 2);
    CHECK(run({"generate", "--task", "lis"}).code == 2);
    CHECK(run({"generate", "--task", "lis", "--train", "4", "--eval", "8:5", "--out", empty.string()}).code == 2);
    CHECK(run({"generate", "--task", "nope", "--train", "4:5", "--eval", "8:5", "--out", empty.string()}).code == 2);
    CHECK(run({"theory", "drop", "--l", "9..2"}).code == 2);
    CHECK(run({"theory", "attention", "--d-model", "7"}).code == 2);
    CHECK(run({"bogus"}).code == 2);
    CHECK(run({}).code == 2);
    fs::remove_all(empty);
}

TEST_CASE("analyze fails cleanly without long train items") {
    const fs::path dir = scratch("short"), out = scratch("short_out");
    REQUIRE(run({"generate", "--task", "lis", "--train", "4:20", "--eval", "8:5", "--out", dir.string()}).code == 0);
    Run a = run({"analyze", dir.string(), "--out", out.string()});
    CHECK(a.code == 1);
    CHECK(a.err.find("no train level") != std::string::npos);
    fs::remove_all(dir);
    fs::remove_all(out);
}

TEST_CASE("full coverage gives a zero bound column") {
    const fs::path dir = scratch("toy"), out = scratch("toy_out");
    REQUIRE(run({"generate", "--task", "mpc", "--train", "3:4", "--eval", "2:1", "--out", dir.string()}).code == 0);
    REQUIRE(run({"analyze", dir.string(), "--out", out.string()}).code == 0);
    const std::string csv = slurp(out / "coverage.csv");
    const std::string row = csv.substr(csv.find('\n') + 1);
    CHECK(row.rfind("2,4,1,2,1,1,", 0) == 0);
    std::vector<std::string> fields;
    std::istringstream cells(row.substr(0, row.find('\n')));
    for (std::string f; std::getline(cells, f, ',');) fields.push_back(f);
    REQUIRE(fields.size() == 11);
    CHECK(fields[9] == "0");
    fs::remove_all(dir);
    fs::remove_all(out);
}

TEST_CASE("theory subcommands") {
    Run d = run({"theory", "drop", "--eps", "0.1", "--l", "0..10"});
    REQUIRE(d.code == 0);
    CHECK(lines(d.out) == 12);
    CHECK(d.out.find("\n0.10000000000000001,0,1\n") != std::string::npos);

    const fs::path dir = scratch("attention");
    Run a = run({"theory", "attention", "--d-model", "8", "--d-max", "200", "--trials", "5", "--eps", "0.5", "--out",
                 dir.string()});
    REQUIRE(a.code == 0);
    CHECK(lines(slurp(dir / "attention_profile.csv")) == 202);
    const std::string summary = slurp(dir / "attention_summary.csv");
    CHECK(summary.rfind("d_model,d_max,trials,mode,epsilon,tau\n8,200,5,independent,", 0) == 0);
    fs::remove_all(dir);

    Run g = run({"theory", "gradient", "--dim", "3", "--n", "10", "--trials", "50"});
    REQUIRE(g.code == 0);
    CHECK(g.out.rfind("trials,dim,irrelevant_dim,sample_size,noise_sigma,step_fraction,mean_short,mean_long,gap,", 0) == 0);
    CHECK(g.out.find("\n50,3,1,10,") != std::string::npos);
}

TEST_CASE("preset generate shapes") {
    const fs::path lis = scratch("preset_lis");
    REQUIRE(run({"generate", "--task", "lis", "--train", "4:5000,16:5000", "--eval", "10:2000", "--cot", "1.0", "--seed",
                 "42", "--out", lis.string()})
                .code == 0);
    const Dataset d = read_dataset(lis);
    CHECK(d.manifest.count(Split::Train, Level{4, 0}) == 5000);
    CHECK(d.manifest.count(Split::Train, Level{16, 0}) == 5000);
    CHECK(d.manifest.count(Split::Eval, Level{10, 0}) == 2000);
    CHECK(d.vocab.eval_only.empty());
    fs::remove_all(lis);

    const fs::path qa = scratch("preset_qa");
    REQUIRE(run({"generate", "--task", "lis", "--train", "4:50,16:50", "--eval", "10:20", "--cot", "0.0", "--out",
                 qa.string()})
                .code == 0);
    for (const auto& r : read_dataset(qa).train) CHECK(r.target.size() == 2);
    fs::remove_all(qa);

    const fs::path ervc = scratch("preset_ervc");
    REQUIRE(run({"generate", "--task", "ervc", "--train", "2x1:1000,4x3:1000", "--eval", "3x2:500", "--out",
                 ervc.string()})
                .code == 0);
    const Dataset e = read_dataset(ervc);
    CHECK(e.manifest.count(Split::Train, Level{2, 1}) == 1000);
    CHECK(e.manifest.count(Split::Train, Level{4, 3}) == 1000);
    CHECK(e.manifest.count(Split::Eval, Level{3, 2}) == 500);
    CHECK(run({"validate", ervc.string()}).code == 0);
    fs::remove_all(ervc);
}

TEST_CASE("theory presets") {
    const fs::path dir = scratch("attention64");
    REQUIRE(run({"theory", "attention", "--d-model", "64", "--eps", "1e-3", "--out", dir.string()}).code == 0);
    const std::string summary = slurp(dir / "attention_summary.csv");
    CHECK(summary.rfind("d_model,d_max,trials,mode,epsilon,tau\n", 0) == 0);
    CHECK(lines(summary) == 2);
    fs::remove_all(dir);

    Run g = run({"theory", "gradient", "--dim", "8", "--n", "16", "--sigma", "0.5", "--trials", "2000"});
    REQUIRE(g.code == 0);
    CHECK(g.out.find("gap,gap_stderr,ci_defined,ci_low,ci_high") != std::string::npos);
}
