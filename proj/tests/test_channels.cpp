#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "mic/channels.hpp"
#include "mic/rng.hpp"

using namespace mic;

namespace {

Matrix rows_of(const std::vector<std::vector<double>>& rows) {
    Matrix m(rows.size(), rows[0].size());
    for (std::size_t r = 0; r < rows.size(); ++r)
        for (std::size_t c = 0; c < rows[0].size(); ++c) m(r, c) = rows[r][c];
    return m;
}

std::vector<int> iota_ids(int first, std::size_t n) {
    std::vector<int> ids(n);
    for (std::size_t i = 0; i < n; ++i) ids[i] = first + static_cast<int>(i);
    return ids;
}

// Reference top-k: normalize independently, sort by (sim desc, id asc).
RankedList brute_knn(const std::vector<int>& ids, const Matrix& reps,
                     std::vector<double> query, std::size_t k,
                     const std::set<int>* exclude = nullptr) {
    const double qn = norm(query);
    for (double& v : query) v /= qn;
    std::vector<RankedItem> all;
    for (std::size_t r = 0; r < reps.rows; ++r) {
        if (exclude && exclude->count(ids[r])) continue;
        std::vector<double> row(reps.row(r).begin(), reps.row(r).end());
        const double rn = norm(row);
        for (double& v : row) v /= rn;
        all.push_back({ids[r], dot(std::span<const double>(query), std::span<const double>(row))});
    }
    std::sort(all.begin(), all.end(), [](const RankedItem& a, const RankedItem& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.id < b.id;
    });
    if (all.size() > k) all.resize(k);
    return RankedList{std::move(all)};
}

}  // namespace

TEST_CASE("build_index normalizes rows and validates input") {
    const Matrix reps = rows_of({{3.0, 4.0}, {0.5, 0.0}});
    const VectorIndex index = build_index({7, 9}, reps, false);
    REQUIRE(index.size() == 2);
    REQUIRE(index.matrix(0, 0) == Catch::Approx(0.6).margin(1e-15));
    REQUIRE(index.matrix(0, 1) == Catch::Approx(0.8).margin(1e-15));
    REQUIRE(index.matrix(1, 0) == Catch::Approx(1.0).margin(1e-15));
    REQUIRE(index.row_of.at(7) == 0);
    REQUIRE(index.row_of.at(9) == 1);

    REQUIRE_THROWS_AS(build_index({}, Matrix(0, 2), false), InvalidStateError);
    REQUIRE_THROWS_AS(build_index({1}, reps, false), ShapeError);
    REQUIRE_THROWS_AS(build_index({7, 7}, reps, false), InvalidStateError);
    REQUIRE_THROWS_AS(build_index({7, 9}, rows_of({{1.0, 0.0}, {0.0, 0.0}}), false),
                      DegenerateVectorError);
}

TEST_CASE("knn_query matches brute force on a random pool") {
    const std::size_t n = 500, d = 8;
    Rng rng(314);
    Matrix reps(n, d);
    for (double& v : reps.data) v = 2.0 * rng.uniform() - 1.0;
    // Exact ties: rescaled copies normalize to identical unit rows.
    for (std::size_t c = 0; c < d; ++c) {
        reps(10, c) = 2.0 * reps(0, c);
        reps(20, c) = 0.5 * reps(0, c);
    }
    const std::vector<int> ids = iota_ids(100, n);
    const VectorIndex index = build_index(ids, reps, false);

    const std::size_t k = GENERATE(std::size_t{1}, std::size_t{10}, std::size_t{50});
    for (int qi = 0; qi < 20; ++qi) {
        std::vector<double> query(d);
        for (double& v : query) v = 2.0 * rng.uniform() - 1.0;
        const RankedList got = knn_query(index, query, k);
        const RankedList want = brute_knn(ids, reps, query, k);
        REQUIRE(got.entries.size() == want.entries.size());
        for (std::size_t i = 0; i < want.entries.size(); ++i) {
            INFO("k " << k << " query " << qi << " rank " << i);
            REQUIRE(got.entries[i].id == want.entries[i].id);
            REQUIRE(got.entries[i].score ==
                    Catch::Approx(want.entries[i].score).margin(1e-12));
        }
    }
}

TEST_CASE("knn_query exact ties fall back to id order") {
    Matrix reps = rows_of({{1.0, 1.0}, {2.0, 2.0}, {0.5, 0.5}, {-1.0, 0.0}});
    const VectorIndex index = build_index({40, 30, 20, 10}, reps, false);
    const std::vector<double> query{3.0, 3.0};
    const RankedList got = knn_query(index, query, 3);
    REQUIRE(got.entries.size() == 3);
    REQUIRE(got.entries[0].id == 20);
    REQUIRE(got.entries[1].id == 30);
    REQUIRE(got.entries[2].id == 40);
    REQUIRE(got.entries[0].score == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("knn_query honors exclusions and clamps oversized K") {
    const std::size_t n = 60, d = 4;
    Rng rng(9);
    Matrix reps(n, d);
    for (double& v : reps.data) v = rng.uniform() + 0.1;
    const std::vector<int> ids = iota_ids(0, n);
    const VectorIndex index = build_index(ids, reps, false);
    const std::vector<double> query{0.3, 0.9, 0.2, 0.7};

    std::set<int> exclude{0, 5, 17, 42};
    const RankedList got = knn_query(index, query, 10, &exclude);
    const RankedList want = brute_knn(ids, reps, query, 10, &exclude);
    for (std::size_t i = 0; i < 10; ++i) REQUIRE(got.entries[i].id == want.entries[i].id);
    for (const auto& e : got.entries) REQUIRE_FALSE(exclude.count(e.id));

    std::vector<std::string> warnings;
    std::set<int> most;
    for (int i = 0; i < 57; ++i) most.insert(i);
    const RankedList clamped = knn_query(index, query, 10, &most, &warnings);
    REQUIRE(clamped.entries.size() == 3);
    REQUIRE(warnings.size() == 1);
    REQUIRE(warnings[0].find("exceeds pool size") != std::string::npos);

    REQUIRE_THROWS_AS(knn_query(index, query, 0), ConfigError);
    const std::vector<double> zero{0.0, 0.0, 0.0, 0.0};
    REQUIRE_THROWS_AS(knn_query(index, zero, 3), DegenerateVectorError);
}

TEST_CASE("u2u retrieval follows the hand-traced vote") {
    // u1 queries; neighbors u2 (sim 0.8) and u3 (sim 0.6) vote for their items.
    const VectorIndex users =
        build_index({1, 2, 3}, rows_of({{1.0, 0.0}, {0.8, 0.6}, {0.6, 0.8}}), true);
    const VectorIndex items =
        build_index({11, 12, 13}, rows_of({{1.0, 0.0}, {1.0, 1.0}, {0.0, 1.0}}), false);
    const std::map<int, std::vector<int>> histories{{2, {11, 12}}, {3, {12, 13}}};
    const std::vector<double> e_u{1.0, 0.0};

    const double c11 = 1.0, c12 = std::sqrt(0.5), c13 = 0.0;

    ChannelConfig cfg;
    cfg.n_similar = 2;

    SECTION("sum aggregation adds the two votes for the shared item") {
        const RankedList got = retrieve_u2u(1, e_u, users, items, histories, cfg, 3);
        REQUIRE(got.entries.size() == 3);
        REQUIRE(got.entries[0].id == 12);
        REQUIRE(got.entries[0].score == Catch::Approx((0.8 + 0.6) * c12).margin(1e-12));
        REQUIRE(got.entries[1].id == 11);
        REQUIRE(got.entries[1].score == Catch::Approx(0.8 * c11).margin(1e-12));
        REQUIRE(got.entries[2].id == 13);
        REQUIRE(got.entries[2].score == Catch::Approx(0.6 * c13).margin(1e-12));
    }

    SECTION("max aggregation keeps only the strongest vote") {
        cfg.agg = ChannelConfig::Agg::Max;
        const RankedList got = retrieve_u2u(1, e_u, users, items, histories, cfg, 3);
        REQUIRE(got.entries[0].id == 11);
        REQUIRE(got.entries[0].score == Catch::Approx(0.8 * c11).margin(1e-12));
        REQUIRE(got.entries[1].id == 12);
        REQUIRE(got.entries[1].score == Catch::Approx(0.8 * c12).margin(1e-12));
    }

    SECTION("n_similar=1 keeps only the closest neighbor's items") {
        cfg.n_similar = 1;
        const RankedList got = retrieve_u2u(1, e_u, users, items, histories, cfg, 3);
        REQUIRE(got.entries.size() == 2);
        REQUIRE(got.contains(11));
        REQUIRE(got.contains(12));
        REQUIRE_FALSE(got.contains(13));
    }

    SECTION("excluded items never appear") {
        std::set<int> exclude{11};
        const RankedList got = retrieve_u2u(1, e_u, users, items, histories, cfg, 3, &exclude);
        REQUIRE_FALSE(got.contains(11));
        REQUIRE(got.contains(12));
    }

    SECTION("truncation keeps the top k") {
        const RankedList got = retrieve_u2u(1, e_u, users, items, histories, cfg, 1);
        REQUIRE(got.entries.size() == 1);
        REQUIRE(got.entries[0].id == 12);
    }

    SECTION("neighbors without history trigger a warning") {
        const std::map<int, std::vector<int>> none;
        std::vector<std::string> warnings;
        const RankedList got =
            retrieve_u2u(1, e_u, users, items, none, cfg, 3, nullptr, &warnings);
        REQUIRE(got.entries.empty());
        REQUIRE(warnings.size() == 1);
        REQUIRE(warnings[0].find("no neighbor with a nonempty history") != std::string::npos);
    }

    SECTION("history items missing from the index are skipped") {
        const std::map<int, std::vector<int>> odd{{2, {99, 11}}};
        const RankedList got = retrieve_u2u(1, e_u, users, items, odd, cfg, 3);
        REQUIRE(got.entries.size() == 1);
        REQUIRE(got.entries[0].id == 11);
    }

    SECTION("validation") {
        cfg.n_similar = 0;
        REQUIRE_THROWS_AS(retrieve_u2u(1, e_u, users, items, histories, cfg, 3), ConfigError);
        const std::vector<double> zero{0.0, 0.0};
        cfg.n_similar = 2;
        REQUIRE_THROWS_AS(retrieve_u2u(1, zero, users, items, histories, cfg, 3),
                          DegenerateVectorError);
    }
}

TEST_CASE("i2i retrieval expands history items and bans the history") {
    // Circle layout: candidates score cos(history item, c) * cos(user, c).
    const double s = std::sqrt(0.5);
    const VectorIndex items = build_index(
        {11, 12, 13, 14}, rows_of({{1.0, 0.0}, {s, s}, {0.0, 1.0}, {-s, s}}), false);
    const std::vector<double> e_u{1.0, 0.0};

    ChannelConfig cfg;
    cfg.m_per_item = 2;

    SECTION("single history item") {
        const RankedList got = retrieve_i2i(e_u, {11}, items, cfg, 4);
        // Nearest to 11 besides itself: 12 (cos s) and 13 (cos 0).
        REQUIRE(got.entries.size() == 2);
        REQUIRE(got.entries[0].id == 12);
        REQUIRE(got.entries[0].score == Catch::Approx(s * s).margin(1e-12));
        REQUIRE(got.entries[1].id == 13);
        REQUIRE(got.entries[1].score == Catch::Approx(0.0).margin(1e-12));
        REQUIRE_FALSE(got.contains(11));
    }

    SECTION("sum vs max on a shared candidate") {
        // 13 is pulled by both history items 12 and 14 at cos s each.
        const std::vector<double> u{0.6, 0.8};
        auto score_of = [](const RankedList& list, int id) {
            for (const auto& e : list.entries)
                if (e.id == id) return e.score;
            FAIL("candidate missing");
            return 0.0;
        };
        const RankedList sum = retrieve_i2i(u, {12, 14}, items, cfg, 4);
        REQUIRE(score_of(sum, 13) == Catch::Approx(2.0 * s * 0.8).margin(1e-12));
        REQUIRE(score_of(sum, 11) == Catch::Approx(0.0).margin(1e-12));

        cfg.agg = ChannelConfig::Agg::Max;
        const RankedList mx = retrieve_i2i(u, {12, 14}, items, cfg, 4);
        REQUIRE(score_of(mx, 13) == Catch::Approx(s * 0.8).margin(1e-12));
        REQUIRE(score_of(mx, 11) == Catch::Approx(s * 0.6).margin(1e-12));
    }

    SECTION("whole history is banned even when only part is expanded") {
        cfg.m_per_item = 3;
        const RankedList got = retrieve_i2i(e_u, {11, 12}, items, cfg, 4);
        REQUIRE_FALSE(got.contains(11));
        REQUIRE_FALSE(got.contains(12));
        REQUIRE(got.contains(13));
        REQUIRE(got.contains(14));
    }

    SECTION("extra exclusions stack on the history ban") {
        std::set<int> exclude{13};
        const RankedList got = retrieve_i2i(e_u, {11}, items, cfg, 4, &exclude);
        REQUIRE_FALSE(got.contains(13));
        REQUIRE(got.contains(12));
    }

    SECTION("empty history warns and returns nothing") {
        std::vector<std::string> warnings;
        const RankedList got = retrieve_i2i(e_u, {}, items, cfg, 4, nullptr, &warnings);
        REQUIRE(got.entries.empty());
        REQUIRE(warnings.size() == 1);
        REQUIRE(warnings[0].find("empty history") != std::string::npos);
    }

    SECTION("history items unknown to the index contribute nothing") {
        const RankedList got = retrieve_i2i(e_u, {99}, items, cfg, 4);
        REQUIRE(got.entries.empty());
    }

    SECTION("zero user vector throws") {
        const std::vector<double> zero{0.0, 0.0};
        REQUIRE_THROWS_AS(retrieve_i2i(zero, {11}, items, cfg, 4), DegenerateVectorError);
    }
}

TEST_CASE("u2i retrieval is a plain knn query over items") {
    Rng rng(77);
    Matrix reps(30, 5);
    for (double& v : reps.data) v = rng.uniform() + 0.05;
    const std::vector<int> ids = iota_ids(200, 30);
    const VectorIndex items = build_index(ids, reps, false);
    std::vector<double> e_u{0.4, 0.1, 0.8, 0.2, 0.6};

    const RankedList got = retrieve_u2i(e_u, items, 7);
    const RankedList want = brute_knn(ids, reps, e_u, 7);
    REQUIRE(got.entries.size() == 7);
    for (std::size_t i = 0; i < 7; ++i) {
        REQUIRE(got.entries[i].id == want.entries[i].id);
        REQUIRE(got.entries[i].score == Catch::Approx(want.entries[i].score).margin(1e-12));
    }

    std::set<int> exclude{want.entries[0].id};
    const RankedList excl = retrieve_u2i(e_u, items, 7, &exclude);
    REQUIRE_FALSE(excl.contains(want.entries[0].id));
    REQUIRE(excl.entries[0].id == want.entries[1].id);
}

TEST_CASE("agg parser accepts only sum and max") {
    REQUIRE(ChannelConfig::parse_agg("sum") == ChannelConfig::Agg::Sum);
    REQUIRE(ChannelConfig::parse_agg("max") == ChannelConfig::Agg::Max);
    REQUIRE_THROWS_AS(ChannelConfig::parse_agg("mean"), ConfigError);
}
