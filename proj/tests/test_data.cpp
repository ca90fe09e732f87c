#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "ukt/data.hpp"
#include "ukt/errors.hpp"

using namespace ukt;
namespace fs = std::filesystem;

namespace {

const fs::path fixtures = UKT_FIXTURES;

fs::path temp_file(const std::string& name, const std::string& content) {
    const fs::path p = fs::temp_directory_path() / ("ukt_test_data_" + name);
    std::ofstream(p, std::ios::binary) << content;
    return p;
}

StudentSequence sequence_of_length(std::size_t n, std::size_t id = 1) {
    StudentSequence s;
    s.student_id = id;
    for (std::size_t t = 0; t < n; ++t) s.interactions.push_back({1, {1}, static_cast<int>(t % 2), t, {}});
    return s;
}

DatasetBundle bundle_of(std::vector<StudentSequence> seqs) {
    DatasetBundle b;
    b.sequences = std::move(seqs);
    b.num_kcs = 2;
    b.num_questions = 2;
    return b;
}

}  // namespace

TEST_CASE("three-student fixture") {
    const DatasetBundle b = parse_interaction_log(fixtures / "three_students.csv", LogFormat::CsvFlat);
    CHECK(b.num_students() == 3);
    CHECK(b.num_interactions() == 10);
    CHECK(b.sequences[0].size() == 4);
    CHECK(b.sequences[1].size() == 3);
    CHECK(b.sequences[2].size() == 3);
    // q2 carries two KCs before expansion
    CHECK(b.sequences[0].interactions[1].kc_ids.size() == 2);
    // first-seen dense ids start after the reserved unknown slot
    CHECK(b.questions.find("q1") == std::optional<std::size_t>(1));
    CHECK(b.kcs.find("k3") == std::optional<std::size_t>(3));
    CHECK(b.num_questions == 7);
    CHECK(b.num_kcs == 5);
    for (const auto& s : b.sequences)
        for (std::size_t t = 0; t < s.size(); ++t) CHECK(s.interactions[t].time_index == t);
}

TEST_CASE("parsing is deterministic") {
    const auto a = parse_interaction_log(fixtures / "three_students.csv", LogFormat::CsvFlat);
    const auto b = parse_interaction_log(fixtures / "three_students.csv", LogFormat::CsvFlat);
    REQUIRE(a.sequences.size() == b.sequences.size());
    for (std::size_t i = 0; i < a.sequences.size(); ++i) {
        for (std::size_t t = 0; t < a.sequences[i].size(); ++t) {
            CHECK(a.sequences[i].interactions[t].question_id == b.sequences[i].interactions[t].question_id);
            CHECK(a.sequences[i].interactions[t].kc_ids == b.sequences[i].interactions[t].kc_ids);
        }
    }
}

TEST_CASE("empty file gives an empty bundle") {
    const fs::path p = temp_file("empty.csv", "");
    CHECK(parse_interaction_log(p, LogFormat::CsvFlat).sequences.empty());
    CHECK(parse_interaction_log(p, LogFormat::CsvGrouped).sequences.empty());
}

TEST_CASE("error paths carry line numbers") {
    try {
        parse_interaction_log(fixtures / "bad_response.csv", LogFormat::CsvFlat);
        FAIL("expected DataError");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find(":3") != std::string::npos);
    }
    try {
        parse_interaction_log(fixtures / "malformed.csv", LogFormat::CsvFlat);
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(std::string(e.what()).find(":3") != std::string::npos);
    }
    CHECK_THROWS_AS(parse_interaction_log(temp_file("noheader.csv", "a,b,c,1,2\n"), LogFormat::CsvFlat), ParseError);
    CHECK_THROWS_AS(parse_interaction_log(temp_file("short_block.csv", "q1,q2\nk1,k2\n"), LogFormat::CsvGrouped),
                    ParseError);
    CHECK_THROWS_AS(parse_interaction_log(temp_file("ragged.csv", "q1,q2\nk1\n1,0\n"), LogFormat::CsvGrouped),
                    ParseError);
}

TEST_CASE("csv-grouped fixture matches its csv-flat counterpart") {
    const DatasetBundle g = parse_interaction_log(fixtures / "grouped.csv", LogFormat::CsvGrouped);
    CHECK(detect_log_format(fixtures / "grouped.csv") == LogFormat::CsvGrouped);
    CHECK(detect_log_format(fixtures / "three_students.csv") == LogFormat::CsvFlat);
    REQUIRE(g.num_students() == 2);
    CHECK(g.sequences[0].size() == 4);
    CHECK(g.sequences[1].size() == 3);
    CHECK(g.sequences[0].interactions[1].kc_ids.size() == 2);
    CHECK(g.sequences[1].interactions[0].response == 0);
}

TEST_CASE("flat rows are ordered by timestamp") {
    const fs::path p = temp_file("unordered.csv",
                                 std::string(kCsvFlatHeader) + "\na,q1,k1,1,30\na,q2,k1,0,10\na,q3,k1,1,20\n");
    const DatasetBundle b = parse_interaction_log(p, LogFormat::CsvFlat);
    const auto& xs = b.sequences[0].interactions;
    CHECK(b.questions.raw(xs[0].question_id) == "q2");
    CHECK(b.questions.raw(xs[1].question_id) == "q3");
    CHECK(b.questions.raw(xs[2].question_id) == "q1");
}

TEST_CASE("write_csv_flat round trips") {
    const DatasetBundle a = parse_interaction_log(fixtures / "three_students.csv", LogFormat::CsvFlat);
    const fs::path p = fs::temp_directory_path() / "ukt_test_data_roundtrip.csv";
    write_csv_flat(a, p);
    const DatasetBundle b = parse_interaction_log(p, LogFormat::CsvFlat);
    REQUIRE(a.num_interactions() == b.num_interactions());
    for (std::size_t i = 0; i < a.sequences.size(); ++i)
        for (std::size_t t = 0; t < a.sequences[i].size(); ++t) {
            const auto& x = a.sequences[i].interactions[t];
            const auto& y = b.sequences[i].interactions[t];
            CHECK(a.questions.raw(x.question_id) == b.questions.raw(y.question_id));
            CHECK(x.response == y.response);
            CHECK(x.kc_ids.size() == y.kc_ids.size());
        }
}

TEST_CASE("frozen vocabulary maps unseen ids to the unknown slot") {
    const DatasetBundle vocab = parse_interaction_log(fixtures / "three_students.csv", LogFormat::CsvFlat);
    const fs::path p = temp_file("unseen.csv", std::string(kCsvFlatHeader) + "\nz,q1,k9,1,1\nz,q99,k1,0,2\n");
    const DatasetBundle b = parse_interaction_log(p, LogFormat::CsvFlat, &vocab);
    CHECK(b.sequences[0].interactions[0].kc_ids[0] == kUnknownId);
    CHECK(b.sequences[0].interactions[1].question_id == kUnknownId);
    CHECK(b.num_kcs == vocab.num_kcs);
}

TEST_CASE("expand_by_kc") {
    SUBCASE("rule on one interaction") {
        DatasetBundle b = bundle_of({});
        StudentSequence s;
        s.interactions.push_back({5, {7, 2}, 1, 0, {}});
        b.sequences.push_back(s);
        const DatasetBundle e = expand_by_kc(b);
        REQUIRE(e.sequences[0].size() == 2);
        CHECK(e.sequences[0].interactions[0].kc_ids == std::vector<std::size_t>{2});
        CHECK(e.sequences[0].interactions[1].kc_ids == std::vector<std::size_t>{7});
        for (const auto& x : e.sequences[0].interactions) {
            CHECK(x.question_id == 5);
            CHECK(x.response == 1);
        }
    }
    SUBCASE("single-KC sequences are unchanged") {
        const DatasetBundle b = bundle_of({sequence_of_length(6)});
        const DatasetBundle e = expand_by_kc(b);
        REQUIRE(e.sequences[0].size() == 6);
        for (std::size_t t = 0; t < 6; ++t)
            CHECK(e.sequences[0].interactions[t].response == b.sequences[0].interactions[t].response);
    }
    SUBCASE("fixture with 1.5 KCs per question expands 10 to 15") {
        const DatasetBundle b = parse_interaction_log(fixtures / "three_students.csv", LogFormat::CsvFlat);
        std::size_t kc_total = 0;
        for (const auto& s : b.sequences)
            for (const auto& x : s.interactions) kc_total += x.kc_ids.size();
        CHECK(kc_total * 2 == 3 * b.num_interactions());
        const DatasetBundle e = expand_by_kc(b);
        CHECK(e.num_interactions() == 15);
        // per-student and per-question response counts are preserved up to KC multiplicity
        for (std::size_t i = 0; i < b.sequences.size(); ++i) {
            std::map<std::size_t, int> before, after;
            for (const auto& x : b.sequences[i].interactions) before[x.question_id] += x.response * int(x.kc_ids.size());
            for (const auto& x : e.sequences[i].interactions) after[x.question_id] += x.response;
            CHECK(before == after);
            for (const auto& x : e.sequences[i].interactions) CHECK(x.kc_ids.size() == 1);
        }
    }
}

TEST_CASE("preprocess_sequences") {
    const DatasetBundle b = bundle_of({sequence_of_length(2, 1), sequence_of_length(3, 2), sequence_of_length(450, 3),
                                       sequence_of_length(401, 4)});
    const DatasetBundle p = preprocess_sequences(b, 3, 200);
    std::vector<std::size_t> lengths;
    for (const auto& s : p.sequences) lengths.push_back(s.size());
    CHECK(lengths == std::vector<std::size_t>{3, 200, 200, 50, 200, 200});
    // chunks are consecutive pieces of the original sequence
    CHECK(p.sequences[3].interactions.front().time_index == 400);
}

TEST_CASE("split_folds partitions students") {
    std::vector<StudentSequence> seqs;
    for (std::size_t i = 1; i <= 100; ++i) seqs.push_back(sequence_of_length(5, i));
    const DatasetBundle b = bundle_of(seqs);
    const FoldPlan plan = split_folds(b, 0.2, 5, 42);
    CHECK(plan.test_students.size() == 20);
    REQUIRE(plan.folds.size() == 5);
    std::multiset<std::size_t> all(plan.test_students.begin(), plan.test_students.end());
    for (const auto& f : plan.folds) {
        CHECK(f.size() == 16);
        all.insert(f.begin(), f.end());
    }
    CHECK(all.size() == 100);
    CHECK(std::set<std::size_t>(all.begin(), all.end()).size() == 100);

    const FoldPlan again = split_folds(b, 0.2, 5, 42);
    CHECK(again.test_students == plan.test_students);
    CHECK(again.folds == plan.folds);
    CHECK(split_folds(b, 0.2, 5, 43).test_students != plan.test_students);

    const FoldSplit s = materialize_fold(b, plan, 2);
    CHECK(s.test.size() == 20);
    CHECK(s.valid.size() == 16);
    CHECK(s.train.size() == 64);

    CHECK_THROWS_AS(split_folds(bundle_of({sequence_of_length(5), sequence_of_length(5)}), 0.2, 5, 1), ConfigError);
}

TEST_CASE("split_folds is exhaustive on the fixture") {
    std::vector<StudentSequence> seqs;
    for (std::size_t i = 1; i <= 13; ++i) seqs.push_back(sequence_of_length(4, i));
    const DatasetBundle b = bundle_of(seqs);
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const FoldPlan plan = split_folds(b, 0.2, 3, seed);
        std::vector<std::size_t> all(plan.test_students);
        std::size_t lo = 1000, hi = 0;
        for (const auto& f : plan.folds) {
            all.insert(all.end(), f.begin(), f.end());
            lo = std::min(lo, f.size());
            hi = std::max(hi, f.size());
        }
        std::sort(all.begin(), all.end());
        std::vector<std::size_t> expect(13);
        for (std::size_t i = 0; i < 13; ++i) expect[i] = i + 1;
        CHECK(all == expect);
        CHECK(hi - lo <= 1);
    }
}
