#pragma once

// Train/eval dataset assembly, vocabularies and the on-disk JSONL format.
//
// Directory layout:
//   train.jsonl, eval.jsonl  one record per line, fields in fixed order
//   manifest.json            spec echo, per-level counts, vocab size, SHA-256 per split
//   vocab.txt                one token per line, id = line number (0-based)

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "cotkit/task.hpp"
#include "cotkit/tasks.hpp"
#include "cotkit/trace.hpp"

namespace cotkit {

inline constexpr int kSchemaVersion = 1;
inline constexpr std::string_view kGeneratorVersion = "cotkit 0.1.0";
/// Resample attempts per record before deduplication gives up.
inline constexpr int kDedupRetries = 256;

enum class Split { Train, Eval };

std::string_view to_string(Split split);
Split parse_split(std::string_view text);

struct LevelCount {
    Level level;
    std::size_t count = 0;

    bool operator==(const LevelCount&) const = default;
};

struct DatasetSpec {
    TaskId task = TaskId::Lis;
    std::vector<LevelCount> train_levels;
    std::vector<LevelCount> eval_levels;
    /// Per-step retain probability.
    double cot_rate = 1.0;
    bool recap = true;
    std::uint64_t seed = 0;
    TaskOptions options;
    /// Unset picks the task default: on for LIS/MPC, off for ERVC.
    std::optional<bool> dedup;

    bool dedup_enabled() const;
    /// Throws ContractError for empty splits, zero counts, bad rates or levels.
    void check() const;

    bool operator==(const DatasetSpec&) const = default;
};

struct DatasetRecord {
    std::string id;
    Split split = Split::Train;
    Level level;
    Tokens question;
    /// Ends with "<eos>".
    Tokens target;
    double cot_rate = 1.0;
    std::vector<bool> retained_mask;
    /// Seed of the accepted draw.
    std::uint64_t seed = 0;
    std::uint64_t index = 0;

    /// Token before "<eos>".
    const std::string& answer() const;
    bool operator==(const DatasetRecord&) const = default;
};

/// Role of a level in the coverage argument: m1 (short train), m2 (long train), m3 (eval).
struct LevelSummary {
    Split split = Split::Train;
    Level level;
    std::size_t count = 0;
    std::string role;

    bool operator==(const LevelSummary&) const = default;
};

struct DatasetManifest {
    int schema_version = kSchemaVersion;
    std::string generator_version{kGeneratorVersion};
    DatasetSpec spec;
    std::vector<LevelSummary> levels;
    std::size_t vocab_size = 0;
    std::string train_sha256;
    std::string eval_sha256;

    std::size_t count(Split split, std::optional<Level> level = std::nullopt) const;
    bool operator==(const DatasetManifest&) const = default;
};

struct Vocab {
    Tokens tokens;
    std::unordered_map<std::string, std::size_t> ids;
    /// Tokens that occur in eval records but never in train records.
    Tokens eval_only;

    std::size_t size() const { return tokens.size(); }
    bool contains(const std::string& token) const { return ids.count(token) != 0; }
    /// Throws ContractError for unknown tokens.
    std::size_t id(const std::string& token) const;
};

/// Always present, in this order, at the start of every vocabulary.
const Tokens& special_tokens();

struct Dataset {
    std::vector<DatasetRecord> train;
    std::vector<DatasetRecord> eval;
    DatasetManifest manifest;
    Vocab vocab;
};

/// Deterministic in `spec`; `jobs` only changes speed. Each record draws from
/// Rng(derive_seed(seed, split tag, index, attempt)). With dedup on, records
/// are visited in split then index order and a question seen before is
/// redrawn with the next attempt. Throws GenerationError naming the level when
/// the retry budget runs out.
Dataset build_dataset(const DatasetSpec& spec, unsigned jobs = 1);

/// Generates one record at the given attempt.
DatasetRecord generate_record(const DatasetSpec& spec, Split split, Level level, std::uint64_t index,
                              std::uint64_t attempt = 0);

/// Specials first, then integer tokens ascending, then the rest in byte order.
Vocab build_vocab(const std::vector<DatasetRecord>& train, const std::vector<DatasetRecord>& eval);
/// Rebuilds the id map. Throws ContractError for duplicates or missing specials.
Vocab make_vocab(Tokens tokens);

std::string record_to_json(const DatasetRecord& record);
/// `line` is used in error messages. Throws DatasetIoError.
DatasetRecord record_from_json(std::string_view text, std::size_t line = 0);

/// Canonical bytes of a split file: one JSON object per line, each ending in '\n'.
std::string serialize_records(const std::vector<DatasetRecord>& records);
std::string manifest_to_json(const DatasetManifest& manifest);
DatasetManifest manifest_from_json(std::string_view text);

std::string sha256_hex(std::string_view bytes);

/// Writes the four files into `dir` (created if missing). Throws DatasetIoError.
void write_dataset(const Dataset& dataset, const std::filesystem::path& dir);

struct ReadOptions {
    /// Compare per-split hashes and counts with the manifest.
    bool verify = true;
};

/// Throws DatasetIoError on missing files, bad JSON (with line number),
/// schema mismatch, and, when verifying, count or hash mismatch.
Dataset read_dataset(const std::filesystem::path& dir, ReadOptions options = {});

/// Problems found by comparing the records against the manifest; empty when consistent.
std::vector<std::string> manifest_mismatches(const Dataset& dataset);

/// Rebuilds the (task, level) definition used for a record of this dataset.
TaskDefinition record_task(const DatasetSpec& spec, const DatasetRecord& record);

}  // namespace cotkit
