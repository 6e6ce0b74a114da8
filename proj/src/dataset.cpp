#include "cotkit/dataset.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <charconv>
#include <exception>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <thread>
#include <unordered_set>

#include "cotkit/errors.hpp"
#include "cotkit/rng.hpp"
#include "json.hpp"

namespace cotkit {

using Json = nlohmann::ordered_json;

std::string_view to_string(Split split) { return split == Split::Train ? "train" : "eval"; }

Split parse_split(std::string_view text) {
    if (text == "train") return Split::Train;
    if (text == "eval") return Split::Eval;
    throw ContractError("unknown split '" + std::string(text) + "'");
}

bool DatasetSpec::dedup_enabled() const { return dedup.value_or(task != TaskId::Ervc); }

void DatasetSpec::check() const {
    if (train_levels.empty()) throw ContractError("dataset needs at least one train level");
    if (eval_levels.empty()) throw ContractError("dataset needs at least one eval level");
    if (!(cot_rate >= 0.0 && cot_rate <= 1.0)) throw ContractError("cot rate must lie in [0, 1]");
    for (const auto* levels : {&train_levels, &eval_levels}) {
        for (const auto& lc : *levels) {
            if (lc.count == 0) throw ContractError("level " + lc.level.to_string() + " has count 0");
            make_task(task, lc.level, options);
        }
    }
}

const std::string& DatasetRecord::answer() const {
    if (target.size() < 2 || target.back() != kEos) throw ContractError("record " + id + " target does not end with <eos>");
    return target[target.size() - 2];
}

std::size_t DatasetManifest::count(Split split, std::optional<Level> level) const {
    std::size_t total = 0;
    for (const auto& s : levels) {
        if (s.split == split && (!level || s.level == *level)) total += s.count;
    }
    return total;
}

std::size_t Vocab::id(const std::string& token) const {
    auto it = ids.find(token);
    if (it == ids.end()) throw ContractError("token '" + token + "' is not in the vocabulary");
    return it->second;
}

const Tokens& special_tokens() {
    static const Tokens specials{"<sep>", "<eos>", "<empty>", "|", "=", ":", ",", "->"};
    return specials;
}

namespace {

std::uint64_t split_tag(Split split) { return split == Split::Train ? kTagTrain : kTagEval; }

std::string mask_string(const std::vector<bool>& mask) {
    std::string out;
    for (bool b : mask) out.push_back(b ? '1' : '0');
    return out;
}

std::vector<std::string> level_roles(const DatasetSpec& spec, Split split, const std::vector<LevelCount>& levels) {
    std::vector<std::string> roles;
    int eval_max = 0;
    for (const auto& lc : spec.eval_levels) eval_max = std::max(eval_max, lc.level.n);
    for (const auto& lc : levels) {
        if (split == Split::Eval) roles.emplace_back("m3");
        else roles.emplace_back(lc.level.n > eval_max ? "m2" : "m1");
    }
    return roles;
}

struct Slot {
    Level level;
    std::uint64_t index = 0;
};

std::vector<Slot> slots_for(const std::vector<LevelCount>& levels) {
    std::vector<Slot> slots;
    std::uint64_t index = 0;
    for (const auto& lc : levels) {
        for (std::size_t c = 0; c < lc.count; ++c) slots.push_back({lc.level, index++});
    }
    return slots;
}

void generate_slots(const DatasetSpec& spec, Split split, const std::vector<Slot>& slots,
                    std::vector<DatasetRecord>& out, unsigned jobs) {
    out.assign(slots.size(), DatasetRecord{});
    const std::size_t workers = std::max<std::size_t>(1, std::min<std::size_t>(jobs, slots.size()));
    std::vector<std::exception_ptr> errors(workers);
    auto work = [&](std::size_t w) {
        try {
            for (std::size_t k = w; k < slots.size(); k += workers)
                out[k] = generate_record(spec, split, slots[k].level, slots[k].index, 0);
        } catch (...) {
            errors[w] = std::current_exception();
        }
    };
    if (workers == 1) {
        work(0);
    } else {
        std::vector<std::thread> threads;
        for (std::size_t w = 0; w < workers; ++w) threads.emplace_back(work, w);
        for (auto& t : threads) t.join();
    }
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

void dedup_split(const DatasetSpec& spec, Split split, std::vector<DatasetRecord>& records,
                 std::unordered_set<std::string>& seen) {
    for (auto& record : records) {
        std::string key = join_tokens(record.question);
        std::uint64_t attempt = 0;
        while (seen.count(key) != 0) {
            if (++attempt > static_cast<std::uint64_t>(kDedupRetries)) {
                throw GenerationError("level " + record.level.to_string() + " (" + std::string(to_string(split)) +
                                      "): deduplication budget of " + std::to_string(kDedupRetries) +
                                      " redraws exhausted; the input space is too small for the requested count");
            }
            record = generate_record(spec, split, record.level, record.index, attempt);
            key = join_tokens(record.question);
        }
        seen.insert(std::move(key));
    }
}

bool is_integer_token(const std::string& token) {
    if (token.empty()) return false;
    std::size_t start = token[0] == '-' ? 1 : 0;
    if (start == token.size()) return false;
    return std::all_of(token.begin() + static_cast<std::ptrdiff_t>(start), token.end(),
                       [](char c) { return c >= '0' && c <= '9'; });
}

// Integer tokens compare numerically; ties (e.g. "07" vs "7") fall back to bytes.
bool integer_less(const std::string& a, const std::string& b) {
    const bool na = a[0] == '-';
    const bool nb = b[0] == '-';
    if (na != nb) return na;
    auto strip = [](const std::string& s) {
        std::size_t k = s[0] == '-' ? 1 : 0;
        while (k + 1 < s.size() && s[k] == '0') ++k;
        return std::string_view(s).substr(k);
    };
    const std::string_view da = strip(a);
    const std::string_view db = strip(b);
    if (da.size() != db.size()) return na ? da.size() > db.size() : da.size() < db.size();
    if (da != db) return na ? da > db : da < db;
    return a < b;
}

Json levels_json(const std::vector<LevelCount>& levels) {
    Json out = Json::array();
    for (const auto& lc : levels) out.push_back(Json{{"level", lc.level.to_string()}, {"count", lc.count}});
    return out;
}

std::vector<LevelCount> levels_from_json(const Json& j) {
    std::vector<LevelCount> out;
    for (const auto& item : j) out.push_back({Level::parse(item.at("level").get<std::string>()), item.at("count").get<std::size_t>()});
    return out;
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DatasetIoError("cannot open " + path.string());
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

void write_file(const std::filesystem::path& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DatasetIoError("cannot write " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DatasetIoError("write failed for " + path.string());
}

std::vector<DatasetRecord> parse_records(const std::string& bytes, const std::string& file, Split expected) {
    std::vector<DatasetRecord> records;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos < bytes.size()) {
        const std::size_t end = bytes.find('\n', pos);
        ++line_no;
        const std::string_view line(bytes.data() + pos, (end == std::string::npos ? bytes.size() : end) - pos);
        if (end == std::string::npos) throw DatasetIoError(file + ": missing trailing newline", line_no);
        try {
            records.push_back(record_from_json(line));
        } catch (const DatasetIoError& e) {
            throw DatasetIoError(file + ": " + e.what(), line_no);
        }
        if (records.back().split != expected)
            throw DatasetIoError(file + ": record in the wrong split", line_no);
        pos = end + 1;
    }
    return records;
}

}  // namespace

DatasetRecord generate_record(const DatasetSpec& spec, Split split, Level level, std::uint64_t index,
                              std::uint64_t attempt) {
    const std::uint64_t seed = derive_seed(spec.seed, split_tag(split), index, attempt);
    Rng rng(seed);
    ProblemInstance instance = sample_instance(spec.task, level, rng, spec.options);
    instance.seed = seed;
    instance.index = index;
    const CotTrace full = render_instance(instance, spec.options, RecapPolicy{spec.recap});
    const CotTrace trace = apply_dropout(full, DropoutPolicy{spec.cot_rate}, rng);

    DatasetRecord record;
    record.id = std::string(to_string(split)) + "-" + std::to_string(index);
    record.split = split;
    record.level = level;
    record.question = trace.question_tokens;
    record.target = trace.target_tokens();
    record.cot_rate = spec.cot_rate;
    record.retained_mask = trace.retained_mask;
    record.seed = seed;
    record.index = index;
    return record;
}

Dataset build_dataset(const DatasetSpec& spec, unsigned jobs) {
    spec.check();
    Dataset dataset;
    generate_slots(spec, Split::Train, slots_for(spec.train_levels), dataset.train, jobs);
    generate_slots(spec, Split::Eval, slots_for(spec.eval_levels), dataset.eval, jobs);
    if (spec.dedup_enabled()) {
        std::unordered_set<std::string> seen;
        dedup_split(spec, Split::Train, dataset.train, seen);
        dedup_split(spec, Split::Eval, dataset.eval, seen);
    }

    dataset.vocab = build_vocab(dataset.train, dataset.eval);
    DatasetManifest& manifest = dataset.manifest;
    manifest.spec = spec;
    manifest.spec.dedup = spec.dedup_enabled();
    for (Split split : {Split::Train, Split::Eval}) {
        const auto& levels = split == Split::Train ? spec.train_levels : spec.eval_levels;
        const auto roles = level_roles(spec, split, levels);
        for (std::size_t k = 0; k < levels.size(); ++k) manifest.levels.push_back({split, levels[k].level, levels[k].count, roles[k]});
    }
    manifest.vocab_size = dataset.vocab.size();
    manifest.train_sha256 = sha256_hex(serialize_records(dataset.train));
    manifest.eval_sha256 = sha256_hex(serialize_records(dataset.eval));
    return dataset;
}

Vocab build_vocab(const std::vector<DatasetRecord>& train, const std::vector<DatasetRecord>& eval) {
    const auto& specials = special_tokens();
    const std::set<std::string> special_set(specials.begin(), specials.end());
    std::set<std::string> train_tokens;
    std::set<std::string> eval_tokens;
    for (const auto& r : train) {
        train_tokens.insert(r.question.begin(), r.question.end());
        train_tokens.insert(r.target.begin(), r.target.end());
    }
    for (const auto& r : eval) {
        eval_tokens.insert(r.question.begin(), r.question.end());
        eval_tokens.insert(r.target.begin(), r.target.end());
    }

    std::vector<std::string> numbers;
    std::vector<std::string> words;
    std::set<std::string> all = train_tokens;
    all.insert(eval_tokens.begin(), eval_tokens.end());
    for (const auto& t : all) {
        if (special_set.count(t) != 0) continue;
        (is_integer_token(t) ? numbers : words).push_back(t);
    }
    std::sort(numbers.begin(), numbers.end(), integer_less);

    Tokens tokens = specials;
    tokens.insert(tokens.end(), numbers.begin(), numbers.end());
    tokens.insert(tokens.end(), words.begin(), words.end());
    Vocab vocab = make_vocab(std::move(tokens));
    for (const auto& t : eval_tokens) {
        if (train_tokens.count(t) == 0 && special_set.count(t) == 0) vocab.eval_only.push_back(t);
    }
    return vocab;
}

Vocab make_vocab(Tokens tokens) {
    Vocab vocab;
    vocab.tokens = std::move(tokens);
    for (std::size_t k = 0; k < vocab.tokens.size(); ++k) {
        if (!vocab.ids.emplace(vocab.tokens[k], k).second)
            throw ContractError("duplicate vocabulary token '" + vocab.tokens[k] + "'");
    }
    for (const auto& s : special_tokens()) {
        if (!vocab.contains(s)) throw ContractError("vocabulary lacks special token '" + s + "'");
    }
    return vocab;
}

std::string record_to_json(const DatasetRecord& record) {
    Json j;
    j["id"] = record.id;
    j["split"] = to_string(record.split);
    j["level"] = record.level.to_string();
    j["question"] = join_tokens(record.question);
    j["target"] = join_tokens(record.target);
    j["cot_rate"] = record.cot_rate;
    j["retained_mask"] = mask_string(record.retained_mask);
    j["seed"] = record.seed;
    j["index"] = record.index;
    return j.dump();
}

DatasetRecord record_from_json(std::string_view text, std::size_t line) {
    try {
        const Json j = Json::parse(text);
        if (!j.is_object()) throw DatasetIoError("record is not a JSON object", line);
        static const std::vector<std::string> fields{"id",       "split",         "level", "question", "target",
                                                     "cot_rate", "retained_mask", "seed",  "index"};
        if (j.size() != fields.size()) throw DatasetIoError("record has unexpected fields", line);
        std::size_t k = 0;
        for (auto it = j.begin(); it != j.end(); ++it, ++k) {
            if (it.key() != fields[k]) throw DatasetIoError("field '" + it.key() + "' out of order", line);
        }
        DatasetRecord r;
        r.id = j.at("id").get<std::string>();
        r.split = parse_split(j.at("split").get<std::string>());
        r.level = Level::parse(j.at("level").get<std::string>());
        r.question = split_tokens(j.at("question").get<std::string>());
        r.target = split_tokens(j.at("target").get<std::string>());
        r.cot_rate = j.at("cot_rate").get<double>();
        for (char c : j.at("retained_mask").get<std::string>()) {
            if (c != '0' && c != '1') throw DatasetIoError("retained_mask must be a 0/1 string", line);
            r.retained_mask.push_back(c == '1');
        }
        r.seed = j.at("seed").get<std::uint64_t>();
        r.index = j.at("index").get<std::uint64_t>();
        if (r.target.empty() || r.target.back() != kEos) throw DatasetIoError("target does not end with <eos>", line);
        return r;
    } catch (const DatasetIoError&) {
        throw;
    } catch (const std::exception& e) {
        throw DatasetIoError(std::string("malformed record: ") + e.what(), line);
    }
}

std::string serialize_records(const std::vector<DatasetRecord>& records) {
    std::string out;
    for (const auto& r : records) {
        out += record_to_json(r);
        out.push_back('\n');
    }
    return out;
}

std::string manifest_to_json(const DatasetManifest& m) {
    const DatasetSpec& s = m.spec;
    Json spec;
    spec["task"] = to_string(s.task);
    spec["train_levels"] = levels_json(s.train_levels);
    spec["eval_levels"] = levels_json(s.eval_levels);
    spec["cot_rate"] = s.cot_rate;
    spec["recap"] = s.recap;
    spec["seed"] = s.seed;
    spec["modulus"] = s.options.modulus;
    spec["lis_range"] = Json::array({s.options.lis_range.lo, s.options.lis_range.hi});
    spec["tie_break"] = s.options.tie_break == TieBreak::MostRecent ? "most_recent" : "earliest";
    spec["dedup"] = s.dedup_enabled();

    Json levels = Json::array();
    for (const auto& l : m.levels) {
        levels.push_back(Json{{"split", to_string(l.split)}, {"level", l.level.to_string()}, {"count", l.count}, {"role", l.role}});
    }
    Json j;
    j["schema_version"] = m.schema_version;
    j["generator_version"] = m.generator_version;
    j["spec"] = spec;
    j["levels"] = levels;
    j["vocab_size"] = m.vocab_size;
    j["sha256"] = Json{{"train", m.train_sha256}, {"eval", m.eval_sha256}};
    return j.dump(2) + "\n";
}

DatasetManifest manifest_from_json(std::string_view text) {
    try {
        const Json j = Json::parse(text);
        DatasetManifest m;
        m.schema_version = j.at("schema_version").get<int>();
        if (m.schema_version != kSchemaVersion) {
            throw DatasetIoError("manifest schema version " + std::to_string(m.schema_version) + " is not supported (expected " +
                                 std::to_string(kSchemaVersion) + ")");
        }
        m.generator_version = j.at("generator_version").get<std::string>();
        const Json& spec = j.at("spec");
        DatasetSpec& s = m.spec;
        s.task = parse_task_id(spec.at("task").get<std::string>());
        s.train_levels = levels_from_json(spec.at("train_levels"));
        s.eval_levels = levels_from_json(spec.at("eval_levels"));
        s.cot_rate = spec.at("cot_rate").get<double>();
        s.recap = spec.at("recap").get<bool>();
        s.seed = spec.at("seed").get<std::uint64_t>();
        s.options.modulus = spec.at("modulus").get<State>();
        s.options.lis_range = {spec.at("lis_range").at(0).get<Symbol>(), spec.at("lis_range").at(1).get<Symbol>()};
        const auto tie = spec.at("tie_break").get<std::string>();
        if (tie != "most_recent" && tie != "earliest") throw DatasetIoError("unknown tie_break '" + tie + "'");
        s.options.tie_break = tie == "most_recent" ? TieBreak::MostRecent : TieBreak::Earliest;
        s.dedup = spec.at("dedup").get<bool>();
        for (const auto& l : j.at("levels")) {
            m.levels.push_back({parse_split(l.at("split").get<std::string>()), Level::parse(l.at("level").get<std::string>()),
                                l.at("count").get<std::size_t>(), l.at("role").get<std::string>()});
        }
        m.vocab_size = j.at("vocab_size").get<std::size_t>();
        m.train_sha256 = j.at("sha256").at("train").get<std::string>();
        m.eval_sha256 = j.at("sha256").at("eval").get<std::string>();
        return m;
    } catch (const DatasetIoError&) {
        throw;
    } catch (const std::exception& e) {
        throw DatasetIoError(std::string("malformed manifest: ") + e.what());
    }
}

std::string sha256_hex(std::string_view bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int length = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), digest, &length, EVP_sha256(), nullptr) != 1)
        throw std::runtime_error("SHA-256 computation failed");
    static constexpr char kHex[] = "0123456789abcdef";
    std::string out;
    for (unsigned int k = 0; k < length; ++k) {
        out.push_back(kHex[digest[k] >> 4]);
        out.push_back(kHex[digest[k] & 0xF]);
    }
    return out;
}

void write_dataset(const Dataset& dataset, const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw DatasetIoError("cannot create " + dir.string() + ": " + ec.message());
    write_file(dir / "train.jsonl", serialize_records(dataset.train));
    write_file(dir / "eval.jsonl", serialize_records(dataset.eval));
    write_file(dir / "manifest.json", manifest_to_json(dataset.manifest));
    std::string vocab;
    for (const auto& t : dataset.vocab.tokens) vocab += t + "\n";
    write_file(dir / "vocab.txt", vocab);
}

Dataset read_dataset(const std::filesystem::path& dir, ReadOptions options) {
    if (!std::filesystem::is_directory(dir)) throw DatasetIoError(dir.string() + " is not a directory");
    Dataset dataset;
    dataset.manifest = manifest_from_json(read_file(dir / "manifest.json"));
    const std::string train_bytes = read_file(dir / "train.jsonl");
    const std::string eval_bytes = read_file(dir / "eval.jsonl");
    dataset.train = parse_records(train_bytes, "train.jsonl", Split::Train);
    dataset.eval = parse_records(eval_bytes, "eval.jsonl", Split::Eval);

    Tokens tokens = split_tokens(read_file(dir / "vocab.txt"));
    try {
        dataset.vocab = make_vocab(std::move(tokens));
    } catch (const ContractError& e) {
        throw DatasetIoError(std::string("vocab.txt: ") + e.what());
    }
    const Vocab rebuilt = build_vocab(dataset.train, dataset.eval);
    dataset.vocab.eval_only = rebuilt.eval_only;

    if (options.verify) {
        if (sha256_hex(train_bytes) != dataset.manifest.train_sha256) throw DatasetIoError("train.jsonl hash does not match the manifest");
        if (sha256_hex(eval_bytes) != dataset.manifest.eval_sha256) throw DatasetIoError("eval.jsonl hash does not match the manifest");
        const auto problems = manifest_mismatches(dataset);
        if (!problems.empty()) throw DatasetIoError(problems.front());
    }
    return dataset;
}

std::vector<std::string> manifest_mismatches(const Dataset& dataset) {
    std::vector<std::string> problems;
    const DatasetManifest& m = dataset.manifest;
    for (Split split : {Split::Train, Split::Eval}) {
        const auto& records = split == Split::Train ? dataset.train : dataset.eval;
        std::map<Level, std::size_t> counts;
        for (const auto& r : records) ++counts[r.level];
        std::map<Level, std::size_t> declared;
        for (const auto& l : m.levels) {
            if (l.split == split) declared[l.level] += l.count;
        }
        if (counts != declared) {
            problems.push_back(std::string(to_string(split)) + " per-level counts do not match the manifest");
        }
        const std::string hash = sha256_hex(serialize_records(records));
        if (hash != (split == Split::Train ? m.train_sha256 : m.eval_sha256))
            problems.push_back(std::string(to_string(split)) + " content hash does not match the manifest");
    }
    if (dataset.vocab.size() != m.vocab_size) problems.emplace_back("vocabulary size does not match the manifest");
    std::unordered_set<std::string> ids;
    for (const auto* records : {&dataset.train, &dataset.eval}) {
        for (const auto& r : *records) {
            if (!ids.insert(r.id).second) problems.push_back("duplicate record id " + r.id);
            for (const auto* seq : {&r.question, &r.target}) {
                for (const auto& t : *seq) {
                    if (!dataset.vocab.contains(t)) {
                        problems.push_back("record " + r.id + " uses token '" + t + "' missing from vocab.txt");
                        break;
                    }
                }
            }
        }
    }
    return problems;
}

TaskDefinition record_task(const DatasetSpec& spec, const DatasetRecord& record) {
    return make_task(spec.task, record.level, spec.options);
}

}  // namespace cotkit
