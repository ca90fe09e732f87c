#include "ukt/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <unordered_set>

#include "ukt/errors.hpp"

namespace ukt {

std::size_t Vocab::intern(const std::string& raw) {
    auto [it, inserted] = ids_.try_emplace(raw, raw_.size());
    if (inserted) raw_.push_back(raw);
    return it->second;
}

std::size_t Vocab::lookup_or_intern(const std::string& raw) {
    if (!frozen_) return intern(raw);
    auto it = ids_.find(raw);
    return it == ids_.end() ? kUnknownId : it->second;
}

std::optional<std::size_t> Vocab::find(const std::string& raw) const {
    auto it = ids_.find(raw);
    if (it == ids_.end()) return std::nullopt;
    return it->second;
}

std::size_t DatasetBundle::num_interactions() const {
    std::size_t n = 0;
    for (const auto& s : sequences) n += s.size();
    return n;
}

std::size_t DatasetBundle::num_students() const {
    std::unordered_set<std::size_t> ids;
    for (const auto& s : sequences) ids.insert(s.student_id);
    return ids.size();
}

std::optional<LogFormat> parse_log_format(const std::string& name) {
    if (name == "csv-flat") return LogFormat::CsvFlat;
    if (name == "csv-grouped") return LogFormat::CsvGrouped;
    return std::nullopt;
}

namespace {

std::vector<std::string> split(const std::string& line, char sep) {
    std::vector<std::string> out;
    std::string field;
    std::istringstream in(line);
    while (std::getline(in, field, sep)) out.push_back(field);
    if (!line.empty() && line.back() == sep) out.emplace_back();
    return out;
}

void strip_cr(std::string& line) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
}

std::string location(const std::filesystem::path& path, std::size_t line_no) {
    return path.string() + ":" + std::to_string(line_no);
}

int parse_response(const std::string& token, const std::filesystem::path& path,
                   std::size_t line_no) {
    if (token == "1") return 1;
    if (token == "0") return 0;
    throw DataError(location(path, line_no) + ": unknown response token '" + token + "'");
}

std::vector<std::size_t> parse_kcs(const std::string& field, Vocab& kcs,
                                   const std::filesystem::path& path, std::size_t line_no) {
    std::vector<std::size_t> ids;
    for (const std::string& raw : split(field, '_')) {
        if (raw.empty()) throw ParseError(location(path, line_no) + ": empty KC id in '" + field + "'");
        ids.push_back(kcs.lookup_or_intern(raw));
    }
    if (ids.empty()) throw ParseError(location(path, line_no) + ": interaction without KCs");
    return ids;
}

void prepare_vocab(DatasetBundle& bundle, const DatasetBundle* vocabulary) {
    if (!vocabulary) return;
    bundle.questions = vocabulary->questions;
    bundle.kcs = vocabulary->kcs;
    bundle.questions.freeze();
    bundle.kcs.freeze();
}

void finish(DatasetBundle& bundle) {
    bundle.num_kcs = bundle.kcs.size();
    bundle.num_questions = bundle.questions.size();
}

DatasetBundle parse_flat(const std::filesystem::path& path, std::ifstream& in,
                         const DatasetBundle* vocabulary) {
    DatasetBundle bundle;
    prepare_vocab(bundle, vocabulary);
    std::string line;
    std::size_t line_no = 0;
    if (!std::getline(in, line)) {
        finish(bundle);
        return bundle;
    }
    ++line_no;
    strip_cr(line);
    if (line != kCsvFlatHeader) {
        throw ParseError(location(path, line_no) + ": expected header '" + kCsvFlatHeader + "'");
    }

    std::unordered_map<std::size_t, std::size_t> seq_of_student;
    while (std::getline(in, line)) {
        ++line_no;
        strip_cr(line);
        if (line.empty()) continue;
        auto fields = split(line, ',');
        if (fields.size() != 5) {
            throw ParseError(location(path, line_no) + ": expected 5 fields, found " +
                             std::to_string(fields.size()));
        }
        if (fields[0].empty() || fields[1].empty()) {
            throw ParseError(location(path, line_no) + ": empty student or question id");
        }
        Interaction it;
        it.question_id = bundle.questions.lookup_or_intern(fields[1]);
        it.kc_ids = parse_kcs(fields[2], bundle.kcs, path, line_no);
        it.response = parse_response(fields[3], path, line_no);
        if (!fields[4].empty()) {
            std::int64_t ts = 0;
            const char* begin = fields[4].data();
            const char* end = begin + fields[4].size();
            auto [ptr, ec] = std::from_chars(begin, end, ts);
            if (ec != std::errc() || ptr != end) {
                throw ParseError(location(path, line_no) + ": bad timestamp '" + fields[4] + "'");
            }
            it.timestamp = ts;
        }

        const std::size_t student = bundle.students.intern(fields[0]);
        auto [pos, inserted] = seq_of_student.try_emplace(student, bundle.sequences.size());
        if (inserted) bundle.sequences.push_back(StudentSequence{student, {}});
        bundle.sequences[pos->second].interactions.push_back(std::move(it));
    }

    for (auto& seq : bundle.sequences) {
        auto& xs = seq.interactions;
        const bool timed = std::all_of(xs.begin(), xs.end(), [](const Interaction& x) { return x.timestamp.has_value(); });
        if (timed) {
            std::stable_sort(xs.begin(), xs.end(), [](const Interaction& a, const Interaction& b) {
                return *a.timestamp < *b.timestamp;
            });
        }
        for (std::size_t t = 0; t < xs.size(); ++t) xs[t].time_index = t;
    }
    finish(bundle);
    return bundle;
}

DatasetBundle parse_grouped(const std::filesystem::path& path, std::ifstream& in,
                            const DatasetBundle* vocabulary) {
    DatasetBundle bundle;
    prepare_vocab(bundle, vocabulary);
    std::string line;
    std::size_t line_no = 0;
    std::vector<std::pair<std::size_t, std::string>> block;

    auto flush = [&]() {
        const std::size_t qline = block[0].first;
        auto questions = split(block[0].second, ',');
        auto kcs = split(block[1].second, ',');
        auto responses = split(block[2].second, ',');
        if (kcs.size() != questions.size() || responses.size() != questions.size()) {
            throw ParseError(location(path, qline) + ": block rows have " +
                             std::to_string(questions.size()) + "/" + std::to_string(kcs.size()) +
                             "/" + std::to_string(responses.size()) + " entries");
        }
        StudentSequence seq;
        seq.student_id = bundle.students.intern(std::to_string(bundle.sequences.size()));
        for (std::size_t t = 0; t < questions.size(); ++t) {
            if (questions[t].empty()) throw ParseError(location(path, qline) + ": empty question id");
            Interaction it;
            it.question_id = bundle.questions.lookup_or_intern(questions[t]);
            it.kc_ids = parse_kcs(kcs[t], bundle.kcs, path, block[1].first);
            it.response = parse_response(responses[t], path, block[2].first);
            it.time_index = t;
            seq.interactions.push_back(std::move(it));
        }
        bundle.sequences.push_back(std::move(seq));
        block.clear();
    };

    while (std::getline(in, line)) {
        ++line_no;
        strip_cr(line);
        if (line.empty()) continue;
        block.emplace_back(line_no, line);
        if (block.size() == 3) flush();
    }
    if (!block.empty()) {
        throw ParseError(location(path, block.front().first) + ": incomplete block of " +
                         std::to_string(block.size()) + " rows");
    }
    finish(bundle);
    return bundle;
}

}  // namespace

LogFormat detect_log_format(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());
    std::string line;
    std::getline(in, line);
    strip_cr(line);
    return line == kCsvFlatHeader ? LogFormat::CsvFlat : LogFormat::CsvGrouped;
}

DatasetBundle parse_interaction_log(const std::filesystem::path& path, LogFormat format,
                                    const DatasetBundle* vocabulary) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());
    return format == LogFormat::CsvFlat ? parse_flat(path, in, vocabulary)
                                        : parse_grouped(path, in, vocabulary);
}

void write_csv_flat(const DatasetBundle& bundle, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out << kCsvFlatHeader << '\n';
    for (const auto& seq : bundle.sequences) {
        for (const auto& it : seq.interactions) {
            out << bundle.students.raw(seq.student_id) << ',' << bundle.questions.raw(it.question_id)
                << ',';
            for (std::size_t k = 0; k < it.kc_ids.size(); ++k) {
                if (k) out << '_';
                out << bundle.kcs.raw(it.kc_ids[k]);
            }
            out << ',' << it.response << ',';
            if (it.timestamp) out << *it.timestamp;
            out << '\n';
        }
    }
    if (!out) throw DataError("write failed for " + path.string());
}

DatasetBundle expand_by_kc(const DatasetBundle& bundle) {
    DatasetBundle out = bundle;
    for (auto& seq : out.sequences) {
        std::vector<Interaction> expanded;
        expanded.reserve(seq.interactions.size());
        for (const auto& it : seq.interactions) {
            std::vector<std::size_t> kcs = it.kc_ids;
            std::sort(kcs.begin(), kcs.end());
            for (std::size_t kc : kcs) {
                Interaction single = it;
                single.kc_ids = {kc};
                expanded.push_back(std::move(single));
            }
        }
        seq.interactions = std::move(expanded);
    }
    return out;
}

DatasetBundle preprocess_sequences(const DatasetBundle& bundle, std::size_t min_len,
                                   std::size_t max_len) {
    if (min_len < 1) throw ConfigError("preprocess_sequences: min_len must be at least 1");
    if (max_len < min_len) throw ConfigError("preprocess_sequences: max_len below min_len");
    DatasetBundle out = bundle;
    out.sequences.clear();
    for (const auto& seq : bundle.sequences) {
        const auto& xs = seq.interactions;
        for (std::size_t begin = 0; begin < xs.size(); begin += max_len) {
            const std::size_t end = std::min(xs.size(), begin + max_len);
            if (end - begin < min_len) continue;
            StudentSequence chunk{seq.student_id, {}};
            chunk.interactions.assign(xs.begin() + static_cast<std::ptrdiff_t>(begin),
                                      xs.begin() + static_cast<std::ptrdiff_t>(end));
            out.sequences.push_back(std::move(chunk));
        }
    }
    return out;
}

FoldPlan split_folds(const DatasetBundle& bundle, double test_fraction, std::size_t k,
                     std::uint64_t seed) {
    if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
        throw ConfigError("split_folds: test_fraction must lie in (0, 1)");
    }
    if (k < 2) throw ConfigError("split_folds: need at least 2 folds");

    std::set<std::size_t> unique;
    for (const auto& s : bundle.sequences) unique.insert(s.student_id);
    std::vector<std::size_t> students(unique.begin(), unique.end());

    std::mt19937_64 rng(seed);
    for (std::size_t i = students.size(); i > 1; --i) {
        std::uniform_int_distribution<std::size_t> pick(0, i - 1);
        std::swap(students[i - 1], students[pick(rng)]);
    }

    const auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(students.size())));
    const std::size_t n_rest = students.size() - n_test;
    if (n_rest < k) {
        throw ConfigError("split_folds: " + std::to_string(n_rest) + " training students for " +
                          std::to_string(k) + " folds");
    }

    FoldPlan plan;
    plan.seed = seed;
    plan.test_students.assign(students.begin(), students.begin() + static_cast<std::ptrdiff_t>(n_test));
    plan.folds.resize(k);
    std::size_t pos = n_test;
    for (std::size_t f = 0; f < k; ++f) {
        const std::size_t size = n_rest / k + (f < n_rest % k ? 1 : 0);
        plan.folds[f].assign(students.begin() + static_cast<std::ptrdiff_t>(pos),
                             students.begin() + static_cast<std::ptrdiff_t>(pos + size));
        pos += size;
    }
    return plan;
}

FoldSplit materialize_fold(const DatasetBundle& bundle, const FoldPlan& plan,
                           std::size_t valid_fold) {
    if (valid_fold >= plan.folds.size()) {
        throw ConfigError("materialize_fold: fold " + std::to_string(valid_fold) + " of " +
                          std::to_string(plan.folds.size()));
    }
    const std::unordered_set<std::size_t> test(plan.test_students.begin(), plan.test_students.end());
    const std::unordered_set<std::size_t> valid(plan.folds[valid_fold].begin(),
                                                plan.folds[valid_fold].end());
    FoldSplit split;
    for (const auto& seq : bundle.sequences) {
        if (test.count(seq.student_id)) split.test.push_back(seq);
        else if (valid.count(seq.student_id)) split.valid.push_back(seq);
        else split.train.push_back(seq);
    }
    return split;
}

}  // namespace ukt
