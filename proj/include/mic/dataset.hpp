#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "mic/error.hpp"
#include "mic/rng.hpp"

namespace mic {

// ---- raw records ----

struct Interaction {
    std::string user_id;
    std::string item_id;
    std::int64_t timestamp = 0;
    std::string category;  // empty when the source has no category column
};

struct ParseReport {
    std::vector<std::size_t> malformed_lines;
    std::vector<std::string> warnings;
    std::size_t total_rows = 0;
};

// ---- vocab ----

// token -> contiguous index, index 0 reserved for PAD and 1 for MASK.
// First-seen ordering makes every downstream artifact deterministic.
struct Vocab {
    static constexpr int kPad = 0;
    static constexpr int kMask = 1;

    std::vector<std::string> tokens{"<pad>", "<mask>"};
    std::unordered_map<std::string, int> index_of;

    int add(const std::string& tok) {
        if (tok == tokens[kPad] || tok == tokens[kMask])
            throw IngestError("token collides with reserved vocab entry: " + tok);
        auto it = index_of.find(tok);
        if (it != index_of.end()) return it->second;
        const int idx = static_cast<int>(tokens.size());
        tokens.push_back(tok);
        index_of.emplace(tok, idx);
        return idx;
    }

    int lookup(const std::string& tok) const {
        auto it = index_of.find(tok);
        return it == index_of.end() ? -1 : it->second;
    }

    const std::string& token(int idx) const { return tokens.at(static_cast<std::size_t>(idx)); }
    int size() const { return static_cast<int>(tokens.size()); }
};

// ---- corpus ----

// Indexed records aligned with their vocabs: users[i] belongs to
// user_vocab index i (slots 0 and 1 are reserved dummies).
struct UserRecord {
    std::string user_id;
    int gender_idx = Vocab::kMask;
    int age_idx = Vocab::kMask;
    std::vector<int> history;  // item indices, chronological, duplicates kept
};

struct ItemRecord {
    std::string item_id;
    std::vector<int> keyword_idxs;  // empty -> encoder falls back to MASK
};

struct Corpus {
    Vocab user_vocab, item_vocab, gender_vocab, age_vocab, keyword_vocab;
    std::vector<UserRecord> users;
    std::vector<ItemRecord> items;
    std::size_t interaction_count = 0;

    std::size_t num_users() const { return users.size() > 2 ? users.size() - 2 : 0; }
    std::size_t num_items() const { return items.size() > 2 ? items.size() - 2 : 0; }
};

// Encoder inputs: plain vocab indices, MASK where a field is masked or was
// missing in the source data.
struct UserView {
    int user_idx = Vocab::kMask;
    int gender_idx = Vocab::kMask;
    int age_idx = Vocab::kMask;
    std::vector<int> history;
};

struct ItemView {
    int item_idx = Vocab::kMask;
    std::vector<int> keyword_idxs;  // empty -> pooled MASK embedding
};

inline UserView make_user_view(const Corpus& corpus, int user_idx,
                               std::size_t prefix_len = static_cast<std::size_t>(-1)) {
    const auto& rec = corpus.users.at(static_cast<std::size_t>(user_idx));
    UserView view;
    view.user_idx = user_idx;
    view.gender_idx = rec.gender_idx;
    view.age_idx = rec.age_idx;
    view.history = rec.history;
    if (prefix_len < view.history.size()) view.history.resize(prefix_len);
    return view;
}

inline ItemView make_item_view(const Corpus& corpus, int item_idx) {
    const auto& rec = corpus.items.at(static_cast<std::size_t>(item_idx));
    return ItemView{item_idx, rec.keyword_idxs};
}

// ---- parsing ----

enum class FileFormat { Tsv, Csv };

inline FileFormat parse_format(const std::string& name) {
    if (name == "tsv") return FileFormat::Tsv;
    if (name == "csv") return FileFormat::Csv;
    throw ConfigError("unknown file format: " + name + " (expected tsv or csv)");
}

namespace detail {

inline std::vector<std::string> split_line(const std::string& line, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t pos = line.find(sep, start);
        if (pos == std::string::npos) {
            out.push_back(line.substr(start));
            break;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

inline std::string trim(const std::string& s) {
    std::size_t a = 0, b = s.size();
    while (a < b && (s[a] == ' ' || s[a] == '\r' || s[a] == '\n' || s[a] == '\t')) ++a;
    while (b > a && (s[b - 1] == ' ' || s[b - 1] == '\r' || s[b - 1] == '\n' || s[b - 1] == '\t'))
        --b;
    return s.substr(a, b - a);
}

inline bool parse_int64(const std::string& s, std::int64_t& out) {
    if (s.empty()) return false;
    std::size_t pos = 0;
    try {
        out = std::stoll(s, &pos);
    } catch (...) {
        return false;
    }
    return pos == s.size();
}

}  // namespace detail

// Reads one record per line: user_id, item_id, timestamp[, category].
// Malformed rows are counted and reported; more than max_malformed_fraction
// of them aborts the ingest with the offending line numbers.
inline std::vector<Interaction> parse_interactions(const std::string& path, FileFormat format,
                                                   ParseReport* report = nullptr,
                                                   double max_malformed_fraction = 0.01) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open interaction file: " + path);
    const char sep = format == FileFormat::Tsv ? '\t' : ',';

    std::vector<Interaction> out;
    ParseReport local;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (detail::trim(line).empty()) continue;
        ++local.total_rows;
        auto cols = detail::split_line(line, sep);
        for (auto& c : cols) c = detail::trim(c);
        Interaction rec;
        bool ok = cols.size() >= 3 && !cols[0].empty() && !cols[1].empty() &&
                  detail::parse_int64(cols[2], rec.timestamp) && rec.timestamp >= 0;
        if (!ok) {
            local.malformed_lines.push_back(line_no);
            continue;
        }
        rec.user_id = cols[0];
        rec.item_id = cols[1];
        if (cols.size() >= 4) rec.category = cols[3];
        out.push_back(std::move(rec));
    }
    if (local.total_rows == 0) local.warnings.push_back("empty interaction file: " + path);
    if (local.total_rows > 0 &&
        static_cast<double>(local.malformed_lines.size()) >
            max_malformed_fraction * static_cast<double>(local.total_rows)) {
        std::ostringstream msg;
        msg << local.malformed_lines.size() << " malformed rows in " << path << " (lines";
        for (std::size_t i = 0; i < std::min<std::size_t>(local.malformed_lines.size(), 20); ++i)
            msg << ' ' << local.malformed_lines[i];
        if (local.malformed_lines.size() > 20) msg << " ...";
        msg << ")";
        throw IngestError(msg.str());
    }
    if (report) *report = std::move(local);
    return out;
}

// Optional user fields file: user_id, gender, age.
struct UserFields {
    std::unordered_map<std::string, std::pair<std::string, std::string>> by_user;
};

inline UserFields parse_user_fields(const std::string& path, FileFormat format) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open user fields file: " + path);
    const char sep = format == FileFormat::Tsv ? '\t' : ',';
    UserFields out;
    std::string line;
    while (std::getline(in, line)) {
        if (detail::trim(line).empty()) continue;
        auto cols = detail::split_line(line, sep);
        for (auto& c : cols) c = detail::trim(c);
        if (cols.size() < 3 || cols[0].empty()) continue;
        out.by_user[cols[0]] = {cols[1], cols[2]};
    }
    return out;
}

// Optional item fields file: item_id, keyword[|keyword...].
struct ItemFields {
    std::unordered_map<std::string, std::vector<std::string>> by_item;
};

inline ItemFields parse_item_fields(const std::string& path, FileFormat format) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open item fields file: " + path);
    const char sep = format == FileFormat::Tsv ? '\t' : ',';
    ItemFields out;
    std::string line;
    while (std::getline(in, line)) {
        if (detail::trim(line).empty()) continue;
        auto cols = detail::split_line(line, sep);
        for (auto& c : cols) c = detail::trim(c);
        if (cols.size() < 2 || cols[0].empty()) continue;
        std::vector<std::string> kws;
        for (auto& kw : detail::split_line(cols[1], '|')) {
            kw = detail::trim(kw);
            if (!kw.empty()) kws.push_back(kw);
        }
        out.by_item[cols[0]] = std::move(kws);
    }
    return out;
}

// Numeric ages become decade buckets so the field stays categorical and
// maskable; non-numeric tokens pass through.
inline std::string bucket_age(const std::string& age) {
    if (age.empty() || age == "-") return "";
    for (char c : age)
        if (c < '0' || c > '9') return age;
    const long v = std::stol(age);
    return std::to_string((v / 10) * 10) + "s";
}

struct BuildOptions {
    std::size_t min_user_len = 5;
    std::size_t min_item_freq = 5;
};

// Filters rare items and short users to a joint fixpoint, then builds
// vocabs (first-seen order) and chronological histories (stable tie-break
// on input order).
inline Corpus build_histories(const std::vector<Interaction>& interactions,
                              const BuildOptions& opt = {}, const UserFields* user_fields = nullptr,
                              const ItemFields* item_fields = nullptr) {
    // Fixpoint over "item seen often enough" / "user has enough history".
    std::unordered_set<std::string> dead_users, dead_items;
    while (true) {
        std::unordered_map<std::string, std::size_t> item_freq, user_len;
        for (const auto& r : interactions) {
            if (dead_users.count(r.user_id) || dead_items.count(r.item_id)) continue;
            ++item_freq[r.item_id];
            ++user_len[r.user_id];
        }
        bool changed = false;
        for (const auto& [item, freq] : item_freq)
            if (freq < opt.min_item_freq && dead_items.insert(item).second) changed = true;
        for (const auto& [user, len] : user_len)
            if (len < opt.min_user_len && dead_users.insert(user).second) changed = true;
        if (!changed) break;
    }

    Corpus corpus;
    corpus.users.resize(2);
    corpus.items.resize(2);

    struct Event {
        int item_idx;
        std::int64_t timestamp;
        std::size_t order;
    };
    std::vector<std::vector<Event>> events;  // aligned with user vocab index

    std::size_t order = 0;
    std::unordered_map<int, std::set<std::string>> categories_by_item;
    for (const auto& r : interactions) {
        ++order;
        if (dead_users.count(r.user_id) || dead_items.count(r.item_id)) continue;
        const int u = corpus.user_vocab.add(r.user_id);
        const int v = corpus.item_vocab.add(r.item_id);
        if (static_cast<std::size_t>(u) >= corpus.users.size()) {
            corpus.users.push_back(UserRecord{r.user_id, Vocab::kMask, Vocab::kMask, {}});
            events.resize(corpus.users.size());
        }
        if (static_cast<std::size_t>(v) >= corpus.items.size())
            corpus.items.push_back(ItemRecord{r.item_id, {}});
        events[static_cast<std::size_t>(u)].push_back({v, r.timestamp, order});
        if (!r.category.empty()) categories_by_item[v].insert(r.category);
        ++corpus.interaction_count;
    }
    if (corpus.num_users() == 0) throw IngestError("empty corpus after filtering");

    for (std::size_t u = 2; u < corpus.users.size(); ++u) {
        auto& evs = events[u];
        std::sort(evs.begin(), evs.end(), [](const Event& a, const Event& b) {
            if (a.timestamp != b.timestamp) return a.timestamp < b.timestamp;
            return a.order < b.order;
        });
        auto& hist = corpus.users[u].history;
        hist.reserve(evs.size());
        for (const auto& e : evs) hist.push_back(e.item_idx);
    }

    // User attributes.
    if (user_fields) {
        for (std::size_t u = 2; u < corpus.users.size(); ++u) {
            auto it = user_fields->by_user.find(corpus.users[u].user_id);
            if (it == user_fields->by_user.end()) continue;
            const auto& [gender, age_raw] = it->second;
            if (!gender.empty() && gender != "-")
                corpus.users[u].gender_idx = corpus.gender_vocab.add(gender);
            const std::string age = bucket_age(age_raw);
            if (!age.empty()) corpus.users[u].age_idx = corpus.age_vocab.add(age);
        }
    }

    // Item keywords: explicit file wins, otherwise category tokens.
    for (std::size_t v = 2; v < corpus.items.size(); ++v) {
        std::vector<std::string> kws;
        if (item_fields) {
            auto it = item_fields->by_item.find(corpus.items[v].item_id);
            if (it != item_fields->by_item.end()) kws = it->second;
        } else {
            auto it = categories_by_item.find(static_cast<int>(v));
            if (it != categories_by_item.end()) kws.assign(it->second.begin(), it->second.end());
        }
        for (const auto& kw : kws)
            corpus.items[v].keyword_idxs.push_back(corpus.keyword_vocab.add(kw));
    }
    return corpus;
}

// ---- splits ----

struct SplitDataset {
    std::vector<int> train_users, valid_users, test_users;  // user vocab indices
    std::unordered_map<int, std::size_t> prefix_len;        // eval users only
    std::unordered_map<int, std::set<int>> holdout;         // eval users -> item index set
    std::size_t moved_to_train = 0;  // eval users whose holdout rounded to empty
};

// The interactions visible at training time: a train user's full history, an
// eval user's prefix. Holdout suffixes never appear here.
inline std::vector<int> training_history(const Corpus& corpus, const SplitDataset& split,
                                         int user_idx) {
    std::vector<int> hist = corpus.users.at(static_cast<std::size_t>(user_idx)).history;
    auto it = split.prefix_len.find(user_idx);
    if (it != split.prefix_len.end() && it->second < hist.size()) hist.resize(it->second);
    return hist;
}

inline std::map<int, std::vector<int>> training_histories(const Corpus& corpus,
                                                          const SplitDataset& split) {
    std::map<int, std::vector<int>> out;
    auto add = [&](const std::vector<int>& users) {
        for (int u : users) out.emplace(u, training_history(corpus, split, u));
    };
    add(split.train_users);
    add(split.valid_users);
    add(split.test_users);
    return out;
}

struct SplitOptions {
    double train_ratio = 0.8;
    double valid_ratio = 0.1;
    double test_ratio = 0.1;
    double prefix_fraction = 0.8;
};

inline SplitDataset split_dataset(const Corpus& corpus, const SplitOptions& opt,
                                  std::uint64_t seed) {
    if (!(opt.train_ratio > 0 && opt.valid_ratio > 0 && opt.test_ratio > 0))
        throw ConfigError("split ratios must be positive");
    if (std::abs(opt.train_ratio + opt.valid_ratio + opt.test_ratio - 1.0) > 1e-9)
        throw ConfigError("split ratios must sum to 1");
    if (!(opt.prefix_fraction > 0.0 && opt.prefix_fraction < 1.0))
        throw ConfigError("prefix_fraction must be in (0,1)");

    std::vector<int> order;
    for (std::size_t u = 2; u < corpus.users.size(); ++u) order.push_back(static_cast<int>(u));
    Rng rng(splitmix64(seed ^ 0x5b117));
    rng.shuffle(order);

    const std::size_t n = order.size();
    const auto n_valid = static_cast<std::size_t>(opt.valid_ratio * static_cast<double>(n));
    const auto n_test = static_cast<std::size_t>(opt.test_ratio * static_cast<double>(n));
    const std::size_t n_train = n - n_valid - n_test;

    SplitDataset split;
    for (std::size_t i = 0; i < n; ++i) {
        const int u = order[i];
        const bool is_train = i < n_train;
        if (is_train) {
            split.train_users.push_back(u);
            continue;
        }
        const auto& hist = corpus.users[static_cast<std::size_t>(u)].history;
        const auto len = hist.size();
        const auto prefix =
            static_cast<std::size_t>(std::ceil(opt.prefix_fraction * static_cast<double>(len)));
        std::set<int> hold(hist.begin() + static_cast<std::ptrdiff_t>(std::min(prefix, len)),
                           hist.end());
        if (hold.empty()) {
            split.train_users.push_back(u);
            ++split.moved_to_train;
            continue;
        }
        split.prefix_len[u] = prefix;
        split.holdout[u] = std::move(hold);
        if (i < n_train + n_valid)
            split.valid_users.push_back(u);
        else
            split.test_users.push_back(u);
    }
    return split;
}

// ---- prepared directory round-trip ----

namespace detail {

inline void write_vocab(const std::filesystem::path& path, const Vocab& vocab) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    for (int i = 0; i < vocab.size(); ++i) out << vocab.token(i) << '\t' << i << '\n';
}

inline Vocab read_vocab(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read " + path.string());
    Vocab vocab;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto cols = split_line(line, '\t');
        if (cols.size() != 2) throw IngestError("bad vocab row in " + path.string());
        const int idx = std::stoi(cols[1]);
        if (idx != line_no) throw IngestError("non-contiguous vocab in " + path.string());
        if (idx >= 2) vocab.add(cols[0]);
        ++line_no;
    }
    return vocab;
}

}  // namespace detail

inline void save_prepared(const std::filesystem::path& dir, const Corpus& corpus,
                          const SplitDataset& split, const std::string& config_echo) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    detail::write_vocab(dir / "user_vocab.tsv", corpus.user_vocab);
    detail::write_vocab(dir / "item_vocab.tsv", corpus.item_vocab);
    detail::write_vocab(dir / "gender_vocab.tsv", corpus.gender_vocab);
    detail::write_vocab(dir / "age_vocab.tsv", corpus.age_vocab);
    detail::write_vocab(dir / "keyword_vocab.tsv", corpus.keyword_vocab);

    {
        std::ofstream out(dir / "histories.tsv");
        for (std::size_t u = 2; u < corpus.users.size(); ++u) {
            out << corpus.users[u].user_id << '\t';
            const auto& hist = corpus.users[u].history;
            for (std::size_t i = 0; i < hist.size(); ++i) {
                if (i) out << ' ';
                out << corpus.item_vocab.token(hist[i]);
            }
            out << '\n';
        }
    }
    {
        std::ofstream out(dir / "user_fields.tsv");
        for (std::size_t u = 2; u < corpus.users.size(); ++u) {
            const auto& rec = corpus.users[u];
            out << rec.user_id << '\t'
                << (rec.gender_idx >= 2 ? corpus.gender_vocab.token(rec.gender_idx) : "-") << '\t'
                << (rec.age_idx >= 2 ? corpus.age_vocab.token(rec.age_idx) : "-") << '\n';
        }
    }
    {
        std::ofstream out(dir / "item_fields.tsv");
        for (std::size_t v = 2; v < corpus.items.size(); ++v) {
            const auto& rec = corpus.items[v];
            out << rec.item_id << '\t';
            if (rec.keyword_idxs.empty()) {
                out << '-';
            } else {
                for (std::size_t i = 0; i < rec.keyword_idxs.size(); ++i) {
                    if (i) out << '|';
                    out << corpus.keyword_vocab.token(rec.keyword_idxs[i]);
                }
            }
            out << '\n';
        }
    }
    auto write_users = [&](const char* name, const std::vector<int>& users) {
        std::ofstream out(dir / name);
        for (int u : users) out << corpus.user_vocab.token(u) << '\n';
    };
    write_users("train_users.txt", split.train_users);
    write_users("valid_users.txt", split.valid_users);
    write_users("test_users.txt", split.test_users);
    {
        std::ofstream out(dir / "holdout.tsv");
        auto dump = [&](const std::vector<int>& users) {
            for (int u : users)
                for (int v : split.holdout.at(u))
                    out << corpus.user_vocab.token(u) << '\t' << corpus.item_vocab.token(v) << '\n';
        };
        dump(split.valid_users);
        dump(split.test_users);
    }
    {
        std::ofstream out(dir / "eval_prefix.tsv");
        auto dump = [&](const std::vector<int>& users) {
            for (int u : users)
                out << corpus.user_vocab.token(u) << '\t' << split.prefix_len.at(u) << '\n';
        };
        dump(split.valid_users);
        dump(split.test_users);
    }
    {
        std::ofstream out(dir / "stats.txt");
        out << config_echo;
        out << "users=" << corpus.num_users() << " items=" << corpus.num_items()
            << " interactions=" << corpus.interaction_count
            << " moved_to_train=" << split.moved_to_train << '\n';
    }
}

inline std::pair<Corpus, SplitDataset> load_prepared(const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    Corpus corpus;
    corpus.user_vocab = detail::read_vocab(dir / "user_vocab.tsv");
    corpus.item_vocab = detail::read_vocab(dir / "item_vocab.tsv");
    corpus.gender_vocab = detail::read_vocab(dir / "gender_vocab.tsv");
    corpus.age_vocab = detail::read_vocab(dir / "age_vocab.tsv");
    corpus.keyword_vocab = detail::read_vocab(dir / "keyword_vocab.tsv");
    corpus.users.resize(static_cast<std::size_t>(corpus.user_vocab.size()));
    corpus.items.resize(static_cast<std::size_t>(corpus.item_vocab.size()));

    auto require = [&](const fs::path& p) {
        if (!fs::exists(p)) throw IoError("missing prepared file: " + p.string());
    };

    require(dir / "histories.tsv");
    {
        std::ifstream in(dir / "histories.tsv");
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            auto cols = detail::split_line(line, '\t');
            if (cols.size() != 2) throw IngestError("bad histories row");
            const int u = corpus.user_vocab.lookup(cols[0]);
            if (u < 2) throw IngestError("history for unknown user " + cols[0]);
            auto& rec = corpus.users[static_cast<std::size_t>(u)];
            rec.user_id = cols[0];
            for (const auto& tok : detail::split_line(cols[1], ' ')) {
                if (tok.empty()) continue;
                const int v = corpus.item_vocab.lookup(tok);
                if (v < 2) throw IngestError("history references unknown item " + tok);
                rec.history.push_back(v);
                ++corpus.interaction_count;
            }
        }
    }
    {
        std::ifstream in(dir / "user_fields.tsv");
        std::string line;
        while (in && std::getline(in, line)) {
            if (line.empty()) continue;
            auto cols = detail::split_line(line, '\t');
            if (cols.size() != 3) throw IngestError("bad user_fields row");
            const int u = corpus.user_vocab.lookup(cols[0]);
            if (u < 2) continue;
            auto& rec = corpus.users[static_cast<std::size_t>(u)];
            if (cols[1] != "-") rec.gender_idx = corpus.gender_vocab.lookup(cols[1]);
            if (cols[2] != "-") rec.age_idx = corpus.age_vocab.lookup(cols[2]);
            if (rec.gender_idx < 0 || rec.age_idx < 0)
                throw IngestError("user_fields token missing from vocab");
        }
    }
    {
        std::ifstream in(dir / "item_fields.tsv");
        std::string line;
        while (in && std::getline(in, line)) {
            if (line.empty()) continue;
            auto cols = detail::split_line(line, '\t');
            if (cols.size() != 2) throw IngestError("bad item_fields row");
            const int v = corpus.item_vocab.lookup(cols[0]);
            if (v < 2) continue;
            auto& rec = corpus.items[static_cast<std::size_t>(v)];
            rec.item_id = cols[0];
            if (cols[1] == "-") continue;
            for (const auto& kw : detail::split_line(cols[1], '|')) {
                const int k = corpus.keyword_vocab.lookup(kw);
                if (k < 0) throw IngestError("item_fields keyword missing from vocab");
                rec.keyword_idxs.push_back(k);
            }
        }
    }
    // Items never touched by item_fields.tsv keep ids from the vocab.
    for (std::size_t v = 2; v < corpus.items.size(); ++v)
        if (corpus.items[v].item_id.empty())
            corpus.items[v].item_id = corpus.item_vocab.token(static_cast<int>(v));

    SplitDataset split;
    auto read_users = [&](const char* name, std::vector<int>& out) {
        require(dir / name);
        std::ifstream in(dir / name);
        std::string line;
        while (std::getline(in, line)) {
            line = detail::trim(line);
            if (line.empty()) continue;
            const int u = corpus.user_vocab.lookup(line);
            if (u < 2) throw IngestError("split references unknown user " + line);
            out.push_back(u);
        }
    };
    read_users("train_users.txt", split.train_users);
    read_users("valid_users.txt", split.valid_users);
    read_users("test_users.txt", split.test_users);
    {
        require(dir / "holdout.tsv");
        std::ifstream in(dir / "holdout.tsv");
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            auto cols = detail::split_line(line, '\t');
            if (cols.size() != 2) throw IngestError("bad holdout row");
            const int u = corpus.user_vocab.lookup(cols[0]);
            const int v = corpus.item_vocab.lookup(cols[1]);
            if (u < 2 || v < 2) throw IngestError("holdout references unknown token");
            split.holdout[u].insert(v);
        }
    }
    {
        require(dir / "eval_prefix.tsv");
        std::ifstream in(dir / "eval_prefix.tsv");
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            auto cols = detail::split_line(line, '\t');
            if (cols.size() != 2) throw IngestError("bad eval_prefix row");
            const int u = corpus.user_vocab.lookup(cols[0]);
            if (u < 2) throw IngestError("eval_prefix references unknown user");
            split.prefix_len[u] = std::stoul(cols[1]);
        }
    }
    return {std::move(corpus), std::move(split)};
}

}  // namespace mic
