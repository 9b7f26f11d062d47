#include <catch2/catch_amalgamated.hpp>

#include <unistd.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "mic/dataset.hpp"
#include "mic/synthetic.hpp"

using namespace mic;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("mic_test_" + std::to_string(::getpid()) + "_" +
                std::to_string(reinterpret_cast<std::uintptr_t>(this)));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

fs::path write_file(const fs::path& dir, const std::string& name, const std::string& body) {
    const fs::path p = dir / name;
    std::ofstream out(p);
    out << body;
    return p;
}

Interaction inter(std::string u, std::string i, std::int64_t ts, std::string cat = "") {
    Interaction r;
    r.user_id = std::move(u);
    r.item_id = std::move(i);
    r.timestamp = ts;
    r.category = std::move(cat);
    return r;
}

}  // namespace

TEST_CASE("parse_interactions reads tsv and csv rows") {
    TempDir tmp;
    const auto tsv = write_file(tmp.path, "a.tsv",
                                "u1\ti1\t5\tnews\n"
                                "u2\ti2\t3\n"
                                "\n"
                                "  u3 \t i1 \t 7 \n");
    ParseReport report;
    auto rows = parse_interactions(tsv.string(), FileFormat::Tsv, &report);
    REQUIRE(rows.size() == 3);
    REQUIRE(report.total_rows == 3);
    REQUIRE(report.malformed_lines.empty());
    REQUIRE(rows[0].user_id == "u1");
    REQUIRE(rows[0].category == "news");
    REQUIRE(rows[1].category.empty());
    REQUIRE(rows[2].user_id == "u3");  // fields trimmed
    REQUIRE(rows[2].timestamp == 7);

    const auto csv = write_file(tmp.path, "a.csv", "u1,i1,5,sports\nu2,i2,9\n");
    auto crows = parse_interactions(csv.string(), FileFormat::Csv);
    REQUIRE(crows.size() == 2);
    REQUIRE(crows[0].category == "sports");

    REQUIRE_THROWS_AS(parse_interactions((tmp.path / "missing.tsv").string(), FileFormat::Tsv),
                      IoError);
    REQUIRE_THROWS_AS(parse_format("xml"), ConfigError);
}

TEST_CASE("malformed rows are tolerated up to the threshold") {
    TempDir tmp;
    std::string body;
    for (int i = 0; i < 98; ++i) body += "u" + std::to_string(i) + "\ti\t1\n";
    body += "broken line\n";            // too few columns
    body += "u9\ti9\tnot_a_number\n";   // bad timestamp
    const auto p = write_file(tmp.path, "b.tsv", body);

    // 2 bad out of 100 rows: above the 1% default, below a 5% override.
    REQUIRE_THROWS_AS(parse_interactions(p.string(), FileFormat::Tsv), IngestError);
    ParseReport report;
    auto rows = parse_interactions(p.string(), FileFormat::Tsv, &report, 0.05);
    REQUIRE(rows.size() == 98);
    REQUIRE(report.malformed_lines == std::vector<std::size_t>{99, 100});

    const auto neg = write_file(tmp.path, "c.tsv", "u\ti\t-4\n");
    ParseReport r2;
    REQUIRE_THROWS_AS(parse_interactions(neg.string(), FileFormat::Tsv, &r2), IngestError);

    const auto empty = write_file(tmp.path, "d.tsv", "\n\n");
    ParseReport r3;
    auto none = parse_interactions(empty.string(), FileFormat::Tsv, &r3);
    REQUIRE(none.empty());
    REQUIRE(r3.warnings.size() == 1);
}

TEST_CASE("age bucketing") {
    REQUIRE(bucket_age("25") == "20s");
    REQUIRE(bucket_age("7") == "0s");
    REQUIRE(bucket_age("40") == "40s");
    REQUIRE(bucket_age("107") == "100s");
    REQUIRE(bucket_age("thirty") == "thirty");
    REQUIRE(bucket_age("-") == "");
    REQUIRE(bucket_age("") == "");
}

TEST_CASE("build_histories filters to a joint fixpoint") {
    // i3 is rare -> dropped; that starves u3 below min length -> dropped;
    // that drops i2's count to 1 -> dropped; u2 then has 2 left and stays.
    std::vector<Interaction> rows{
        inter("u1", "i1", 1), inter("u1", "i2", 2), inter("u1", "i1", 3),
        inter("u2", "i1", 1), inter("u2", "i2", 2), inter("u2", "i1", 3),
        inter("u3", "i2", 1), inter("u3", "i3", 2),
    };
    BuildOptions opt;
    opt.min_user_len = 2;
    opt.min_item_freq = 3;
    const Corpus corpus = build_histories(rows, opt);
    REQUIRE(corpus.num_users() == 2);
    REQUIRE(corpus.num_items() == 1);
    REQUIRE(corpus.interaction_count == 4);
    const int u1 = corpus.user_vocab.lookup("u1");
    const int i1 = corpus.item_vocab.lookup("i1");
    REQUIRE(u1 >= 2);
    REQUIRE(i1 >= 2);
    REQUIRE(corpus.item_vocab.lookup("i2") == -1);
    REQUIRE(corpus.item_vocab.lookup("i3") == -1);
    REQUIRE(corpus.users[static_cast<std::size_t>(u1)].history == std::vector<int>{i1, i1});

    BuildOptions kill_all;
    kill_all.min_user_len = 100;
    REQUIRE_THROWS_AS(build_histories(rows, kill_all), IngestError);
}

TEST_CASE("histories are chronological with stable ties and duplicates") {
    std::vector<Interaction> rows{
        inter("u", "a", 30), inter("u", "b", 10), inter("u", "c", 20),
        inter("u", "d", 10),  // same timestamp as b, later in the file
        inter("u", "a", 40),  // repeat purchase stays
    };
    BuildOptions opt;
    opt.min_user_len = 1;
    opt.min_item_freq = 1;
    const Corpus corpus = build_histories(rows, opt);
    const int u = corpus.user_vocab.lookup("u");
    std::vector<std::string> got;
    for (int idx : corpus.users[static_cast<std::size_t>(u)].history)
        got.push_back(corpus.item_vocab.token(idx));
    REQUIRE(got == std::vector<std::string>{"b", "d", "c", "a", "a"});
}

TEST_CASE("user attributes and item keywords attach to the corpus") {
    std::vector<Interaction> rows{
        inter("u1", "i1", 1, "news"), inter("u1", "i1", 2, "sports"),
        inter("u2", "i1", 1, "news"), inter("u2", "i2", 2), inter("u1", "i2", 3),
    };
    BuildOptions opt;
    opt.min_user_len = 1;
    opt.min_item_freq = 1;

    UserFields uf;
    uf.by_user["u1"] = {"f", "34"};
    uf.by_user["u2"] = {"-", "unknown_age"};
    const Corpus with_cats = build_histories(rows, opt, &uf);
    const int u1 = with_cats.user_vocab.lookup("u1");
    const int u2 = with_cats.user_vocab.lookup("u2");
    REQUIRE(with_cats.gender_vocab.token(with_cats.users[u1].gender_idx) == "f");
    REQUIRE(with_cats.age_vocab.token(with_cats.users[u1].age_idx) == "30s");
    REQUIRE(with_cats.users[u2].gender_idx == Vocab::kMask);  // "-" stays missing
    REQUIRE(with_cats.age_vocab.token(with_cats.users[u2].age_idx) == "unknown_age");

    // Category fallback: sorted unique categories become keywords.
    const int i1 = with_cats.item_vocab.lookup("i1");
    const int i2 = with_cats.item_vocab.lookup("i2");
    std::vector<std::string> kws;
    for (int k : with_cats.items[i1].keyword_idxs) kws.push_back(with_cats.keyword_vocab.token(k));
    REQUIRE(kws == std::vector<std::string>{"news", "sports"});
    REQUIRE(with_cats.items[i2].keyword_idxs.empty());

    // Explicit keyword file wins over categories.
    ItemFields itf;
    itf.by_item["i1"] = {"politics"};
    const Corpus with_file = build_histories(rows, opt, nullptr, &itf);
    const int fi1 = with_file.item_vocab.lookup("i1");
    REQUIRE(with_file.items[fi1].keyword_idxs.size() == 1);
    REQUIRE(with_file.keyword_vocab.token(with_file.items[fi1].keyword_idxs[0]) == "politics");
}

TEST_CASE("user and item field files parse") {
    TempDir tmp;
    const auto up = write_file(tmp.path, "u.tsv", "u1\tm\t25\nu2\tf\t-\n");
    const auto uf = parse_user_fields(up.string(), FileFormat::Tsv);
    REQUIRE(uf.by_user.at("u1") == std::pair<std::string, std::string>{"m", "25"});
    const auto ip = write_file(tmp.path, "i.tsv", "i1\ta|b| c \ni2\t\n");
    const auto itf = parse_item_fields(ip.string(), FileFormat::Tsv);
    REQUIRE(itf.by_item.at("i1") == std::vector<std::string>{"a", "b", "c"});
    REQUIRE(itf.by_item.at("i2").empty());
}

namespace {

Corpus make_split_corpus(std::size_t n_users, std::size_t hist_len) {
    std::vector<Interaction> rows;
    for (std::size_t u = 0; u < n_users; ++u)
        for (std::size_t t = 0; t < hist_len; ++t)
            rows.push_back(inter("u" + std::to_string(u),
                                 "i" + std::to_string((u * hist_len + t) % 30),
                                 static_cast<std::int64_t>(t)));
    BuildOptions opt;
    opt.min_user_len = 1;
    opt.min_item_freq = 1;
    return build_histories(rows, opt);
}

}  // namespace

TEST_CASE("split partitions users and holds out history suffixes") {
    const Corpus corpus = make_split_corpus(40, 10);
    SplitOptions opt;
    const SplitDataset split = split_dataset(corpus, opt, 17);

    REQUIRE(split.valid_users.size() == 4);
    REQUIRE(split.test_users.size() == 4);
    REQUIRE(split.train_users.size() == 32);

    std::set<int> seen;
    for (const auto* group : {&split.train_users, &split.valid_users, &split.test_users})
        for (int u : *group) REQUIRE(seen.insert(u).second);
    REQUIRE(seen.size() == corpus.num_users());

    for (const auto* group : {&split.valid_users, &split.test_users}) {
        for (int u : *group) {
            const auto& hist = corpus.users[static_cast<std::size_t>(u)].history;
            const std::size_t prefix = split.prefix_len.at(u);
            REQUIRE(prefix == 8);  // ceil(0.8 * 10)
            const std::set<int> expect(hist.begin() + 8, hist.end());
            REQUIRE(split.holdout.at(u) == expect);
            REQUIRE_FALSE(split.holdout.at(u).empty());
            const auto train_hist = training_history(corpus, split, u);
            REQUIRE(train_hist.size() == 8);
            REQUIRE(std::equal(train_hist.begin(), train_hist.end(), hist.begin()));
        }
    }
    for (int u : split.train_users) {
        REQUIRE(split.prefix_len.count(u) == 0);
        REQUIRE(training_history(corpus, split, u) ==
                corpus.users[static_cast<std::size_t>(u)].history);
    }

    const auto all = training_histories(corpus, split);
    REQUIRE(all.size() == corpus.num_users());

    // Same seed identical, different seed differs.
    const SplitDataset again = split_dataset(corpus, opt, 17);
    REQUIRE(again.train_users == split.train_users);
    REQUIRE(again.valid_users == split.valid_users);
    const SplitDataset other = split_dataset(corpus, opt, 18);
    REQUIRE(other.valid_users != split.valid_users);
}

TEST_CASE("split validates its ratios") {
    const Corpus corpus = make_split_corpus(10, 6);
    SplitOptions bad;
    bad.train_ratio = 0.9;  // sums to 1.1
    REQUIRE_THROWS_AS(split_dataset(corpus, bad, 1), ConfigError);
    SplitOptions zero;
    zero.train_ratio = 1.0;
    zero.valid_ratio = 0.0;
    zero.test_ratio = 0.0;
    REQUIRE_THROWS_AS(split_dataset(corpus, zero, 1), ConfigError);
    SplitOptions pf;
    pf.prefix_fraction = 1.0;
    REQUIRE_THROWS_AS(split_dataset(corpus, pf, 1), ConfigError);
}

TEST_CASE("prepared directory round-trips exactly") {
    std::vector<Interaction> rows;
    Rng rng(23);
    for (int u = 0; u < 25; ++u)
        for (int t = 0; t < 8; ++t) {
            const int item = static_cast<int>(rng.uniform_index(12));
            rows.push_back(inter("user" + std::to_string(u), "item" + std::to_string(item),
                                 t, "cat" + std::to_string(item % 3)));
        }
    UserFields uf;
    for (int u = 0; u < 25; ++u)
        uf.by_user["user" + std::to_string(u)] = {u % 2 ? "m" : "f", std::to_string(18 + u)};
    BuildOptions opt;
    opt.min_user_len = 2;
    opt.min_item_freq = 2;
    const Corpus corpus = build_histories(rows, opt, &uf);
    const SplitDataset split = split_dataset(corpus, SplitOptions{}, 5);

    TempDir tmp;
    save_prepared(tmp.path / "prep", corpus, split, "key=value\n");
    auto [loaded, lsplit] = load_prepared((tmp.path / "prep").string());

    REQUIRE(loaded.user_vocab.tokens == corpus.user_vocab.tokens);
    REQUIRE(loaded.item_vocab.tokens == corpus.item_vocab.tokens);
    REQUIRE(loaded.gender_vocab.tokens == corpus.gender_vocab.tokens);
    REQUIRE(loaded.age_vocab.tokens == corpus.age_vocab.tokens);
    REQUIRE(loaded.keyword_vocab.tokens == corpus.keyword_vocab.tokens);
    REQUIRE(loaded.interaction_count == corpus.interaction_count);
    for (std::size_t u = 2; u < corpus.users.size(); ++u) {
        REQUIRE(loaded.users[u].history == corpus.users[u].history);
        REQUIRE(loaded.users[u].gender_idx == corpus.users[u].gender_idx);
        REQUIRE(loaded.users[u].age_idx == corpus.users[u].age_idx);
    }
    for (std::size_t v = 2; v < corpus.items.size(); ++v)
        REQUIRE(loaded.items[v].keyword_idxs == corpus.items[v].keyword_idxs);
    REQUIRE(lsplit.train_users == split.train_users);
    REQUIRE(lsplit.valid_users == split.valid_users);
    REQUIRE(lsplit.test_users == split.test_users);
    REQUIRE(lsplit.prefix_len == split.prefix_len);
    REQUIRE(lsplit.holdout == split.holdout);

    REQUIRE_THROWS_AS(load_prepared((tmp.path / "nope").string()), IoError);
}

TEST_CASE("synthetic corpus has the planted structure") {
    SyntheticConfig cfg;
    cfg.num_clusters = 4;
    cfg.users_per_cluster = 50;
    cfg.items_per_cluster = 30;
    cfg.in_cluster_prob = 0.85;
    cfg.history_len = 20;
    const SyntheticData data = gen_synthetic(cfg, 42);

    REQUIRE(data.interactions.size() == 4 * 50 * 20);
    REQUIRE(data.user_cluster.size() == 200);
    REQUIRE(data.item_cluster.size() == 120);

    std::size_t in_cluster = 0;
    for (const auto& r : data.interactions) {
        const int uc = data.user_cluster.at(r.user_id);
        const int ic = data.item_cluster.at(r.item_id);
        if (uc == ic) ++in_cluster;
        REQUIRE(r.category == "c" + std::to_string(ic));
        REQUIRE(r.timestamp >= 0);
        REQUIRE(r.timestamp < 20);
    }
    const double frac = static_cast<double>(in_cluster) / data.interactions.size();
    REQUIRE(frac == Catch::Approx(0.85).margin(0.02));

    for (const auto& [uid, fields] : data.user_fields.by_user) {
        const int uc = data.user_cluster.at(uid);
        REQUIRE(fields.first == "g" + std::to_string(uc % 2));
        REQUIRE(fields.second == "a" + std::to_string(uc));
    }

    const SyntheticData again = gen_synthetic(cfg, 42);
    REQUIRE(again.interactions.size() == data.interactions.size());
    for (std::size_t i = 0; i < data.interactions.size(); ++i)
        REQUIRE(again.interactions[i].item_id == data.interactions[i].item_id);

    SyntheticConfig bad = cfg;
    bad.in_cluster_prob = 0.3;
    REQUIRE_THROWS_AS(gen_synthetic(bad, 1), ConfigError);
    bad = cfg;
    bad.num_clusters = 0;
    REQUIRE_THROWS_AS(gen_synthetic(bad, 1), ConfigError);
}

TEST_CASE("synthetic files parse back into the same corpus") {
    SyntheticConfig cfg;
    cfg.num_clusters = 2;
    cfg.users_per_cluster = 10;
    cfg.items_per_cluster = 8;
    cfg.history_len = 6;
    const SyntheticData data = gen_synthetic(cfg, 9);
    TempDir tmp;
    write_synthetic(tmp.path / "synth", data, "echo\n");

    ParseReport report;
    const auto rows =
        parse_interactions((tmp.path / "synth" / "interactions.tsv").string(), FileFormat::Tsv,
                           &report);
    REQUIRE(rows.size() == data.interactions.size());
    REQUIRE(report.malformed_lines.empty());
    const auto uf = parse_user_fields((tmp.path / "synth" / "user_fields.tsv").string(),
                                      FileFormat::Tsv);
    REQUIRE(uf.by_user.size() == 20);
}
