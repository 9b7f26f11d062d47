#pragma once

#include <algorithm>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "mic/encoder.hpp"
#include "mic/error.hpp"
#include "mic/matrix.hpp"

namespace mic {

struct ChannelConfig {
    std::size_t n_similar = 50;
    std::size_t m_per_item = 20;
    bool exclude_training_items = true;
    enum class Agg { Sum, Max } agg = Agg::Sum;

    static Agg parse_agg(const std::string& s) {
        if (s == "sum") return Agg::Sum;
        if (s == "max") return Agg::Max;
        throw ConfigError("aggregation must be sum or max, got " + s);
    }
};

struct RankedItem {
    int id;
    double score;
};

struct RankedList {
    std::vector<RankedItem> entries;

    bool contains(int id) const {
        for (const auto& e : entries)
            if (e.id == id) return true;
        return false;
    }
};

// Exact cosine search structure: normalized rows, immutable after build.
struct VectorIndex {
    std::vector<int> ids;
    Matrix matrix;  // unit rows, same order as ids
    bool is_user = false;
    std::map<int, std::size_t> row_of;

    std::size_t size() const { return ids.size(); }
};

inline VectorIndex build_index(const std::vector<int>& ids, const Matrix& reps, bool is_user) {
    if (ids.empty() || reps.rows == 0) throw InvalidStateError("build_index: empty input");
    check_shape(ids.size() == reps.rows, "build_index ids vs rows");
    VectorIndex index;
    index.ids = ids;
    index.matrix = reps;
    index.is_user = is_user;
    for (std::size_t r = 0; r < ids.size(); ++r) {
        if (!index.row_of.emplace(ids[r], r).second)
            throw InvalidStateError("build_index: duplicate id " + std::to_string(ids[r]));
        const double n = norm(index.matrix.row(r));
        if (n == 0.0)
            throw DegenerateVectorError("build_index: zero vector for id " + std::to_string(ids[r]));
        for (double& v : index.matrix.row(r)) v /= n;
    }
    return index;
}

// Exact top-K by cosine; ties broken by id order. K larger than the
// (post-exclusion) pool returns the full pool with a warning.
inline RankedList knn_query(const VectorIndex& index, std::span<const double> query, std::size_t k,
                            const std::set<int>* exclude = nullptr,
                            std::vector<std::string>* warnings = nullptr) {
    if (k == 0) throw ConfigError("knn_query: K must be >= 1");
    const double qn = norm(query);
    if (qn == 0.0) throw DegenerateVectorError("knn_query: zero query vector");
    std::vector<double> q(query.begin(), query.end());
    for (double& v : q) v /= qn;

    std::vector<std::size_t> rows;
    rows.reserve(index.size());
    for (std::size_t r = 0; r < index.size(); ++r)
        if (!exclude || !exclude->count(index.ids[r])) rows.push_back(r);
    if (k > rows.size()) {
        if (warnings)
            warnings->push_back("knn_query: K " + std::to_string(k) + " exceeds pool size " +
                                std::to_string(rows.size()));
        k = rows.size();
    }

    std::vector<double> sims(index.size(), 0.0);
    const std::span<const double> qs(q);
    for (std::size_t r : rows) sims[r] = dot(qs, index.matrix.row(r));
    std::partial_sort(rows.begin(), rows.begin() + static_cast<long>(k), rows.end(),
                      [&](std::size_t a, std::size_t b) {
                          if (sims[a] != sims[b]) return sims[a] > sims[b];
                          return index.ids[a] < index.ids[b];
                      });
    RankedList out;
    out.entries.reserve(k);
    for (std::size_t i = 0; i < k; ++i) out.entries.push_back({index.ids[rows[i]], sims[rows[i]]});
    return out;
}

// U2I: the user vector straight against the item pool.
inline RankedList retrieve_u2i(std::span<const double> e_u, const VectorIndex& item_index,
                               std::size_t k, const std::set<int>* exclude = nullptr,
                               std::vector<std::string>* warnings = nullptr) {
    return knn_query(item_index, e_u, k, exclude, warnings);
}

namespace detail {

inline RankedList rank_candidates(std::map<int, double>& scores, std::size_t k) {
    std::vector<RankedItem> all;
    all.reserve(scores.size());
    for (const auto& [id, s] : scores) all.push_back({id, s});
    std::sort(all.begin(), all.end(), [](const RankedItem& a, const RankedItem& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.id < b.id;
    });
    if (all.size() > k) all.resize(k);
    return RankedList{std::move(all)};
}

inline void combine(std::map<int, double>& scores, int id, double value, ChannelConfig::Agg agg) {
    auto [it, fresh] = scores.emplace(id, value);
    if (fresh) return;
    if (agg == ChannelConfig::Agg::Sum)
        it->second += value;
    else
        it->second = std::max(it->second, value);
}

}  // namespace detail

// U2U: neighbors of the user in user space vote for their consumed items,
// each vote weighted by sim(user, neighbor) * cos(user, item).
inline RankedList retrieve_u2u(int user_id, std::span<const double> e_u,
                               const VectorIndex& user_index, const VectorIndex& item_index,
                               const std::map<int, std::vector<int>>& histories,
                               const ChannelConfig& cfg, std::size_t k,
                               const std::set<int>* exclude = nullptr,
                               std::vector<std::string>* warnings = nullptr) {
    if (cfg.n_similar == 0) throw ConfigError("retrieve_u2u: N_similar must be >= 1");
    std::set<int> self{user_id};
    RankedList neighbors = knn_query(user_index, e_u, cfg.n_similar, &self, nullptr);

    const double qn = norm(e_u);
    if (qn == 0.0) throw DegenerateVectorError("retrieve_u2u: zero user vector");
    std::vector<double> q(e_u.begin(), e_u.end());
    for (double& v : q) v /= qn;
    const std::span<const double> qs(q);

    std::map<int, double> scores;
    bool any_history = false;
    for (const auto& nb : neighbors.entries) {
        auto hist_it = histories.find(nb.id);
        if (hist_it == histories.end() || hist_it->second.empty()) continue;
        any_history = true;
        for (int item : hist_it->second) {
            if (exclude && exclude->count(item)) continue;
            auto row_it = item_index.row_of.find(item);
            if (row_it == item_index.row_of.end()) continue;
            const double item_cos = dot(qs, item_index.matrix.row(row_it->second));
            detail::combine(scores, item, nb.score * item_cos, cfg.agg);
        }
    }
    if (!any_history && warnings)
        warnings->push_back("retrieve_u2u: no neighbor with a nonempty history for user " +
                            std::to_string(user_id));
    return detail::rank_candidates(scores, k);
}

// I2I: each history item pulls in its nearest items; candidates score by
// cos(history item, candidate) * cos(user, candidate).
inline RankedList retrieve_i2i(std::span<const double> e_u, const std::vector<int>& history,
                               const VectorIndex& item_index, const ChannelConfig& cfg,
                               std::size_t k, const std::set<int>* exclude = nullptr,
                               std::vector<std::string>* warnings = nullptr) {
    if (history.empty()) {
        if (warnings) warnings->push_back("retrieve_i2i: empty history, nothing to expand");
        return {};
    }
    const double qn = norm(e_u);
    if (qn == 0.0) throw DegenerateVectorError("retrieve_i2i: zero user vector");
    std::vector<double> q(e_u.begin(), e_u.end());
    for (double& v : q) v /= qn;
    const std::span<const double> qs(q);

    std::set<int> banned(history.begin(), history.end());
    if (exclude) banned.insert(exclude->begin(), exclude->end());

    std::map<int, double> scores;
    for (int h : history) {
        auto row_it = item_index.row_of.find(h);
        if (row_it == item_index.row_of.end()) continue;
        const auto e_h = item_index.matrix.row(row_it->second);
        RankedList similar = knn_query(item_index, e_h, cfg.m_per_item, &banned, nullptr);
        for (const auto& cand : similar.entries) {
            auto cand_it = item_index.row_of.find(cand.id);
            const double user_cos = dot(qs, item_index.matrix.row(cand_it->second));
            detail::combine(scores, cand.id, cand.score * user_cos, cfg.agg);
        }
    }
    return detail::rank_candidates(scores, k);
}

}  // namespace mic
