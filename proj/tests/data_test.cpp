// Copyright (c) 2026 the seqrec authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>

#include "core/data.hpp"
#include "core/rng.hpp"

using namespace seqrec;

namespace {

std::string write_temp(const std::string& name, const std::string& content) {
    const std::string path = (std::filesystem::temp_directory_path() / name).string();
    std::ofstream os(path);
    os << content;
    return path;
}

InteractionLog make_log(const std::vector<std::tuple<std::string, std::string, std::int64_t>>& rows) {
    InteractionLog log;
    for (const auto& [u, i, t] : rows) log.records.push_back({u, i, t});
    return log;
}

}  // namespace

TEST_CASE("load_interactions reads records and dedups exact triples") {
    const auto path = write_temp("seqrec_load1.tsv", "u1 i1 10\nu1 i2 20\nu2 i1 15\n");
    LoadReport report;
    auto log = load_interactions(path, {.delimiter = " "}, &report);
    CHECK(log.records.size() == 3);
    CHECK(report.duplicates_removed == 0);

    const auto dup = write_temp("seqrec_load2.tsv", "u1\ti1\t10\nu1\ti1\t10\n");
    auto log2 = load_interactions(dup, {}, &report);
    CHECK(log2.records.size() == 1);
    CHECK(report.duplicates_removed == 1);
    std::filesystem::remove(path);
    std::filesystem::remove(dup);
}

TEST_CASE("load_interactions surfaces parse errors with line numbers") {
    const auto path = write_temp("seqrec_load3.tsv", "u1\ti1\t10\nbroken line\n");
    try {
        load_interactions(path);
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    }
    std::filesystem::remove(path);
}

TEST_CASE("load_interactions rejects empty input") {
    const auto path = write_temp("seqrec_load4.tsv", "");
    CHECK_THROWS_AS(load_interactions(path), EmptyInputError);
    CHECK_THROWS_AS(load_interactions(path + ".missing"), IoError);
    std::filesystem::remove(path);
}

TEST_CASE("load_interactions handles the four-column :: layout") {
    const auto path = write_temp("seqrec_load5.dat", "1::55::4::978300760\n1::56::3::978300761\n");
    auto log = load_interactions(path, {.delimiter = "::", .columns = "uirt"});
    REQUIRE(log.records.size() == 2);
    CHECK(log.records[0].item == "55");
    CHECK(log.records[0].timestamp == 978300760);
    std::filesystem::remove(path);
}

TEST_CASE("filter_min_interactions with min_count=1 is a no-op") {
    auto log = make_log({{"u1", "a", 1}, {"u2", "b", 2}});
    auto out = filter_min_interactions(log, 1);
    CHECK(out.records.size() == 2);
}

TEST_CASE("filter removes a thin item but keeps its users") {
    // Item "x" has 4 interactions; each of its users has >= 6 other events on
    // items that themselves survive (5 users each).
    std::vector<std::tuple<std::string, std::string, std::int64_t>> rows;
    for (int u = 0; u < 5; ++u) {
        const std::string user = "u" + std::to_string(u);
        if (u < 4) rows.push_back({user, "x", 100 + u});
        for (int j = 0; j < 6; ++j) {
            rows.push_back({user, "common" + std::to_string(j), 10 * u + j});
        }
    }
    auto out = filter_min_interactions(make_log(rows), 5);
    for (const auto& r : out.records) CHECK(r.item != "x");
    std::set<std::string> users;
    for (const auto& r : out.records) users.insert(r.user);
    CHECK(users.size() == 5);
}

TEST_CASE("filter is single-pass: item counts from the input, user counts from the item-filtered log") {
    Rng rng(40, 0);
    std::vector<std::tuple<std::string, std::string, std::int64_t>> rows;
    for (int n = 0; n < 600; ++n) {
        rows.push_back({"u" + std::to_string(rng.uniform_index(40)),
                        "i" + std::to_string(rng.uniform_index(60)),
                        static_cast<std::int64_t>(n)});
    }
    const auto log = make_log(rows);
    const auto out = filter_min_interactions(log, 5);

    std::unordered_map<std::string, int> input_item_count;
    for (const auto& r : log.records) ++input_item_count[r.item];
    std::unordered_map<std::string, int> item_filtered_user_count;
    for (const auto& r : log.records) {
        if (input_item_count[r.item] >= 5) ++item_filtered_user_count[r.user];
    }
    for (const auto& r : out.records) {
        CHECK(input_item_count[r.item] >= 5);
        CHECK(item_filtered_user_count[r.user] >= 5);
    }
}

TEST_CASE("filter rejects a fully filtered log") {
    auto log = make_log({{"u1", "a", 1}, {"u2", "b", 2}});
    CHECK_THROWS_AS(filter_min_interactions(log, 3), EmptyInputError);
}

TEST_CASE("build_dataset orders by timestamp with stable ties and indexes from 1") {
    auto log = make_log({
        {"u1", "b", 20},
        {"u1", "a", 10},
        {"u1", "c", 20},  // tied with b: file order keeps b before c
        {"u1", "d", 30},
        {"u2", "a", 5},
        {"u2", "d", 4},
        {"u2", "b", 6},
    });
    auto ds = build_dataset(log, {.max_len = 10});
    CHECK(ds.num_users() == 2);
    CHECK(ds.num_items() == 4);
    const auto& s1 = ds.sequences[1];
    REQUIRE(s1.size() == 4);
    CHECK(ds.item_ids[static_cast<std::size_t>(s1[0])] == "a");
    CHECK(ds.item_ids[static_cast<std::size_t>(s1[1])] == "b");
    CHECK(ds.item_ids[static_cast<std::size_t>(s1[2])] == "c");
    CHECK(ds.item_ids[static_cast<std::size_t>(s1[3])] == "d");
    // Id 0 is reserved for padding; mask id is num_items()+1; no sequence
    // contains either.
    for (const auto& seq : ds.sequences) {
        for (int item : seq) {
            CHECK(item >= 1);
            CHECK(item <= ds.num_items());
        }
    }
    CHECK(std::accumulate(ds.item_popularity.begin(), ds.item_popularity.end(), std::int64_t{0}) ==
          ds.total_interactions());
}

TEST_CASE("build_dataset drops users shorter than three") {
    auto log = make_log({{"u1", "a", 1}, {"u1", "b", 2}, {"u1", "c", 3}, {"u2", "a", 1}, {"u2", "b", 2}});
    BuildReport report;
    auto ds = build_dataset(log, {.max_len = 10}, &report);
    CHECK(ds.num_users() == 1);
    CHECK(report.dropped_short_users == 1);
}

TEST_CASE("build_splits is the leave-one-out definition") {
    auto log = make_log({{"u", "a", 1}, {"u", "b", 2}, {"u", "c", 3}, {"u", "d", 4}, {"u", "e", 5}});
    auto ds = build_dataset(log, {.max_len = 10});
    auto view = build_splits(ds);
    const auto& seq = ds.sequences[1];
    CHECK(view.train[1] == std::vector<int>(seq.begin(), seq.end() - 2));
    CHECK(view.validation[1] == seq[seq.size() - 2]);
    CHECK(view.test[1] == seq.back());

    // Minimum length: one train item, one validation, one test.
    auto log3 = make_log({{"u", "a", 1}, {"u", "b", 2}, {"u", "c", 3}});
    auto ds3 = build_dataset(log3, {.max_len = 10});
    auto view3 = build_splits(ds3);
    CHECK(view3.train[1].size() == 1);
    CHECK(view3.dropped_users == 0);
}

TEST_CASE("split parts reconstruct the original sequence for every user") {
    Rng rng(77, 0);
    std::vector<std::tuple<std::string, std::string, std::int64_t>> rows;
    for (int u = 0; u < 30; ++u) {
        const int len = 3 + static_cast<int>(rng.uniform_index(20));
        for (int t = 0; t < len; ++t) {
            rows.push_back({"u" + std::to_string(u), "i" + std::to_string(rng.uniform_index(50)),
                            static_cast<std::int64_t>(t)});
        }
    }
    auto ds = build_dataset(make_log(rows), {.max_len = 200, .min_sequence_length = 3});
    auto view = build_splits(ds);
    for (int u = 1; u <= ds.num_users(); ++u) {
        auto rebuilt = view.train[static_cast<std::size_t>(u)];
        rebuilt.push_back(view.validation[static_cast<std::size_t>(u)]);
        rebuilt.push_back(view.test[static_cast<std::size_t>(u)]);
        CHECK(rebuilt == ds.sequences[static_cast<std::size_t>(u)]);
    }
}

TEST_CASE("truncate_sequence keeps the most recent items") {
    std::vector<int> seq(300);
    std::iota(seq.begin(), seq.end(), 1);
    auto out = truncate_sequence(seq, 200);
    REQUIRE(out.size() == 200);
    CHECK(out.front() == 101);
    CHECK(out.back() == 300);

    std::vector<int> short_seq(10, 1);
    CHECK(truncate_sequence(short_seq, 50) == short_seq);
    std::vector<int> exact(50, 2);
    CHECK(truncate_sequence(exact, 50) == exact);
}

TEST_CASE("augment_duplicate emits k identical copies") {
    std::vector<int> seq{1, 2, 3};
    CHECK(augment_duplicate(seq, 1) == std::vector<std::vector<int>>{seq});
    auto out = augment_duplicate(seq, 3);
    REQUIRE(out.size() == 3);
    for (const auto& s : out) CHECK(s == seq);
}

TEST_CASE("sliding windows enumerate documented offsets") {
    std::vector<int> five{1, 2, 3, 4, 5};
    CHECK(augment_sliding_window(five, 5, 2) == std::vector<std::vector<int>>{five});

    std::vector<int> seven{1, 2, 3, 4, 5, 6, 7};
    auto w = augment_sliding_window(seven, 5, 2);
    REQUIRE(w.size() == 2);
    CHECK(w[0] == std::vector<int>{1, 2, 3, 4, 5});
    CHECK(w[1] == std::vector<int>{3, 4, 5, 6, 7});

    std::vector<int> six{1, 2, 3, 4, 5, 6};
    auto w2 = augment_sliding_window(six, 5, 4);
    REQUIRE(w2.size() == 2);
    CHECK(w2[0] == std::vector<int>{1, 2, 3, 4, 5});
    CHECK(w2[1] == std::vector<int>{2, 3, 4, 5, 6});  // end-anchored
}

TEST_CASE("sliding windows all have max_len items and cover the final item") {
    Rng rng(55, 0);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t max_len = 2 + rng.uniform_index(20);
        const std::size_t stride = 1 + rng.uniform_index(max_len);
        std::vector<int> seq(max_len + 1 + rng.uniform_index(60));
        std::iota(seq.begin(), seq.end(), 1);
        const auto windows = augment_sliding_window(seq, max_len, stride);
        bool covers_last = false;
        for (const auto& w : windows) {
            CHECK(w.size() == max_len);
            if (!w.empty() && w.back() == seq.back()) covers_last = true;
        }
        CHECK(covers_last);
    }
}

TEST_CASE("popularity_distribution normalizes counts") {
    auto two = make_log({{"u1", "a", 1}, {"u1", "a", 2}, {"u1", "a", 3}, {"u1", "b", 4}});
    auto ds = build_dataset(two, {.max_len = 10});
    auto p = popularity_distribution(ds);
    CHECK(p[static_cast<std::size_t>(ds.item_index["a"])] == doctest::Approx(0.75));
    CHECK(p[static_cast<std::size_t>(ds.item_index["b"])] == doctest::Approx(0.25));

    auto three = make_log({{"u1", "a", 1}, {"u1", "a", 2}, {"u1", "a", 3}, {"u1", "a", 4},
                           {"u1", "a", 5}, {"u1", "b", 6}, {"u1", "b", 7}, {"u1", "b", 8},
                           {"u1", "c", 9}, {"u1", "c", 10}});
    auto ds3 = build_dataset(three, {.max_len = 20});
    auto p3 = popularity_distribution(ds3);
    CHECK(p3[static_cast<std::size_t>(ds3.item_index["a"])] == doctest::Approx(0.5));
    CHECK(p3[static_cast<std::size_t>(ds3.item_index["b"])] == doctest::Approx(0.3));
    CHECK(p3[static_cast<std::size_t>(ds3.item_index["c"])] == doctest::Approx(0.2));

    // Equal counts give a uniform distribution; any distribution sums to 1.
    Rng rng(4, 0);
    std::vector<std::tuple<std::string, std::string, std::int64_t>> rows;
    for (int u = 0; u < 10; ++u)
        for (int i = 0; i < 8; ++i)
            rows.push_back({"u" + std::to_string(u), "i" + std::to_string(i),
                            static_cast<std::int64_t>(i)});
    auto dsu = build_dataset(make_log(rows), {.max_len = 20});
    auto pu = popularity_distribution(dsu);
    double total = 0.0;
    for (std::size_t i = 1; i < pu.size(); ++i) {
        CHECK(pu[i] == doctest::Approx(1.0 / 8.0));
        CHECK(pu[i] >= 0.0);
        total += pu[i];
    }
    CHECK(std::abs(total - 1.0) <= 1e-12);
}

TEST_CASE("dataset bundle round-trips through the versioned text format") {
    auto log = make_log({{"user one", "item%1", 3}, {"user one", "b", 1}, {"user one", "c", 2},
                         {"u2", "b", 5}, {"u2", "c", 6}, {"u2", "item%1", 7}});
    auto ds = build_dataset(log, {.max_len = 7});
    const std::string path =
        (std::filesystem::temp_directory_path() / "seqrec_bundle_test.txt").string();
    save_dataset_bundle(ds, path);
    auto loaded = load_dataset_bundle(path);
    CHECK(loaded.max_len == ds.max_len);
    CHECK(loaded.user_ids == ds.user_ids);
    CHECK(loaded.item_ids == ds.item_ids);
    CHECK(loaded.sequences == ds.sequences);
    CHECK(loaded.item_popularity == ds.item_popularity);

    const std::string bogus =
        (std::filesystem::temp_directory_path() / "seqrec_bundle_bogus.txt").string();
    {
        std::ofstream os(bogus);
        os << "seqrec-bundle v999\n";
    }
    CHECK_THROWS_AS(load_dataset_bundle(bogus), SchemaError);
    std::filesystem::remove(path);
    std::filesystem::remove(bogus);
}
