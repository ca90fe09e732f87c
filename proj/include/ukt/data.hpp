#pragma once

// Interaction logs: parsing, KC expansion, length filtering and fold planning.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace ukt {

// Dense id 0 is reserved for ids never seen while the vocabulary was built.
inline constexpr std::size_t kUnknownId = 0;

struct Interaction {
    std::size_t question_id = 0;
    std::vector<std::size_t> kc_ids;  // nonempty
    int response = 0;                 // 1 correct, 0 incorrect
    std::size_t time_index = 0;
    std::optional<std::int64_t> timestamp;  // parsed, never consumed by the model
};

struct StudentSequence {
    std::size_t student_id = 0;
    std::vector<Interaction> interactions;

    std::size_t size() const { return interactions.size(); }
};

// Raw string id -> dense id, assigned in first-seen order starting after kUnknownId.
class Vocab {
public:
    std::size_t intern(const std::string& raw);
    // Dense id for `raw`, or kUnknownId when the vocabulary is frozen and the id is new.
    std::size_t lookup_or_intern(const std::string& raw);
    std::optional<std::size_t> find(const std::string& raw) const;
    const std::string& raw(std::size_t dense) const { return raw_[dense]; }

    // Number of dense ids including the reserved unknown slot.
    std::size_t size() const { return raw_.size(); }
    bool frozen() const { return frozen_; }
    void freeze() { frozen_ = true; }

private:
    std::unordered_map<std::string, std::size_t> ids_;
    std::vector<std::string> raw_{"<unk>"};
    bool frozen_ = false;
};

struct DatasetBundle {
    std::vector<StudentSequence> sequences;
    std::size_t num_kcs = 1;        // includes the unknown slot
    std::size_t num_questions = 1;  // includes the unknown slot
    Vocab students;
    Vocab questions;
    Vocab kcs;

    std::size_t num_interactions() const;
    std::size_t num_students() const;
};

enum class LogFormat { CsvFlat, CsvGrouped };

std::optional<LogFormat> parse_log_format(const std::string& name);
// csv-flat when the first line is the csv-flat header, csv-grouped otherwise.
LogFormat detect_log_format(const std::filesystem::path& path);

inline constexpr const char* kCsvFlatHeader = "student_id,question_id,kc_ids,response,timestamp";

// Reads a log. When `vocabulary` is given its (frozen) id maps are reused, and
// ids absent from it map to kUnknownId.
DatasetBundle parse_interaction_log(const std::filesystem::path& path, LogFormat format,
                                    const DatasetBundle* vocabulary = nullptr);

// Writes csv-flat using the raw ids held in the bundle's vocabularies.
void write_csv_flat(const DatasetBundle& bundle, const std::filesystem::path& path);

// One interaction per KC, KCs in ascending dense-id order.
DatasetBundle expand_by_kc(const DatasetBundle& bundle);

// Drops sequences shorter than min_len and chunks longer ones into pieces of at
// most max_len; a trailing chunk shorter than min_len is dropped.
DatasetBundle preprocess_sequences(const DatasetBundle& bundle, std::size_t min_len = 3,
                                   std::size_t max_len = 200);

struct FoldPlan {
    std::vector<std::size_t> test_students;
    std::vector<std::vector<std::size_t>> folds;
    std::uint64_t seed = 0;
};

FoldPlan split_folds(const DatasetBundle& bundle, double test_fraction, std::size_t k,
                     std::uint64_t seed);

struct FoldSplit {
    std::vector<StudentSequence> train;
    std::vector<StudentSequence> valid;
    std::vector<StudentSequence> test;
};

// Sequences for training (all folds but `valid_fold`), validation and test.
FoldSplit materialize_fold(const DatasetBundle& bundle, const FoldPlan& plan,
                           std::size_t valid_fold);

}  // namespace ukt
