#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mic/augment.hpp"
#include "mic/dataset.hpp"
#include "mic/layers.hpp"
#include "mic/matrix.hpp"
#include "mic/param_store.hpp"
#include "mic/rng.hpp"

namespace mic {

struct EncoderConfig {
    std::size_t dim = 128;
    std::vector<std::size_t> hidden_sizes;  // empty -> {2*dim, dim}
    bool share_item_table = true;

    std::vector<std::size_t> hidden() const {
        return hidden_sizes.empty() ? std::vector<std::size_t>{2 * dim, dim} : hidden_sizes;
    }
};

struct VocabSizes {
    std::size_t user = 0, item = 0, gender = 0, age = 0, keyword = 0;

    static VocabSizes of(const Corpus& corpus) {
        return {static_cast<std::size_t>(corpus.user_vocab.size()),
                static_cast<std::size_t>(corpus.item_vocab.size()),
                static_cast<std::size_t>(corpus.gender_vocab.size()),
                static_cast<std::size_t>(corpus.age_vocab.size()),
                static_cast<std::size_t>(corpus.keyword_vocab.size())};
    }
};

namespace detail {

inline std::uint64_t fnv1a64(const std::string& s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

}  // namespace detail

// Parameter layout. Tensor seeds derive from (seed, name) so the values do
// not depend on creation order.
inline void init_encoder_params(ParamStore& store, const VocabSizes& sizes,
                                const EncoderConfig& cfg, std::uint64_t seed) {
    auto xavier_named = [&](const std::string& name, std::size_t rows, std::size_t cols,
                            bool pad_row) {
        Rng rng(splitmix64(seed ^ detail::fnv1a64(name)));
        store.add(name, rows, cols) = init_xavier(rows, cols, rng);
        auto& entry = store.at(name);
        if (pad_row) {
            entry.freeze_pad_row = true;
            for (std::size_t j = 0; j < cols; ++j) entry.value(0, j) = 0.0;
        }
    };
    auto add_tower = [&](const std::string& prefix, std::size_t in_dim) {
        std::size_t prev = in_dim;
        const auto hidden = cfg.hidden();
        for (std::size_t l = 0; l < hidden.size(); ++l) {
            const std::string base = prefix + "." + std::to_string(l);
            xavier_named(base + ".W", prev, hidden[l], false);
            store.add(base + ".b", 1, hidden[l]);
            prev = hidden[l];
        }
        xavier_named(prefix + ".out.W", prev, cfg.dim, false);
        store.add(prefix + ".out.b", 1, cfg.dim);
    };

    xavier_named("emb.item", sizes.item, cfg.dim, true);
    if (!cfg.share_item_table) xavier_named("emb.item_target", sizes.item, cfg.dim, true);
    xavier_named("emb.user", sizes.user, cfg.dim, true);
    xavier_named("emb.gender", sizes.gender, cfg.dim, true);
    xavier_named("emb.age", sizes.age, cfg.dim, true);
    xavier_named("emb.keyword", sizes.keyword, cfg.dim, true);
    add_tower("user_tower", 4 * cfg.dim);
    add_tower("item_tower", 2 * cfg.dim);
    xavier_named("proj.user.W", cfg.dim, cfg.dim, false);
    store.add("proj.user.b", 1, cfg.dim);
    xavier_named("proj.item.W", cfg.dim, cfg.dim, false);
    store.add("proj.item.b", 1, cfg.dim);
}

// Row-gather. The matching scatter (in the tower backwards) adds gradient
// only to the gathered rows.
inline Matrix embed_lookup(const Matrix& table, const std::vector<int>& indices) {
    Matrix out(indices.size(), table.cols);
    for (std::size_t i = 0; i < indices.size(); ++i) {
        const int idx = indices[i];
        if (idx < 0 || static_cast<std::size_t>(idx) >= table.rows)
            throw Error("embed_lookup: index " + std::to_string(idx) + " out of range [0, " +
                        std::to_string(table.rows) + ")");
        for (std::size_t j = 0; j < table.cols; ++j) out(i, j) = table(idx, j);
    }
    return out;
}

// ---- towers ----

struct TowerCache {
    std::vector<UserView> user_views;
    std::vector<ItemView> item_views;
    Matrix dropout_mask;  // empty when no dropout; entries already carry 1/(1-rate)
    std::vector<AffineCache> affines;
    bool is_user = true;
    bool share_item_table = true;
};

namespace detail {

inline void pool_rows(const Matrix& table, const std::vector<int>& idxs, double* out,
                      std::size_t d) {
    for (std::size_t j = 0; j < d; ++j) out[j] = 0.0;
    for (int idx : idxs)
        for (std::size_t j = 0; j < d; ++j) out[j] += table(static_cast<std::size_t>(idx), j);
    const double inv = 1.0 / static_cast<double>(idxs.size());
    for (std::size_t j = 0; j < d; ++j) out[j] *= inv;
}

inline void scatter_pooled(Matrix& grad_table, const std::vector<int>& idxs, const double* g,
                           std::size_t d) {
    const double inv = 1.0 / static_cast<double>(idxs.size());
    for (int idx : idxs)
        for (std::size_t j = 0; j < d; ++j) grad_table(static_cast<std::size_t>(idx), j) += inv * g[j];
}

inline Matrix run_mlp(const std::string& prefix, const ParamStore& store, const EncoderConfig& cfg,
                      Matrix input, std::vector<AffineCache>& caches) {
    const auto hidden = cfg.hidden();
    Matrix cur = std::move(input);
    for (std::size_t l = 0; l < hidden.size(); ++l) {
        const std::string base = prefix + "." + std::to_string(l);
        auto [out, cache] =
            affine_forward(cur, store.value(base + ".W"), store.value(base + ".b"), Activation::Relu);
        caches.push_back(std::move(cache));
        cur = std::move(out);
    }
    auto [out, cache] = affine_forward(cur, store.value(prefix + ".out.W"),
                                       store.value(prefix + ".out.b"), Activation::Identity);
    caches.push_back(std::move(cache));
    return out;
}

inline void backprop_mlp(const std::string& prefix, ParamStore& store, const EncoderConfig& cfg,
                         const std::vector<AffineCache>& caches, Matrix upstream, Matrix& d_input) {
    const auto hidden = cfg.hidden();
    Matrix d = std::move(upstream);
    for (std::size_t layer = caches.size(); layer-- > 0;) {
        const std::string base =
            layer == hidden.size() ? prefix + ".out" : prefix + "." + std::to_string(layer);
        AffineGrads g = affine_backward(caches[layer], d);
        add_inplace(store.grad(base + ".W"), g.d_weights);
        add_inplace(store.grad(base + ".b"), g.d_bias);
        d = std::move(g.d_input);
    }
    d_input = std::move(d);
}

}  // namespace detail

// e_u = MLP( [ mean-pool(history item embs) | user emb | gender emb | age emb ] ).
// dropout_rng non-null applies embedded-feature dropout (training views only).
inline std::pair<Matrix, TowerCache> encode_user_batch(const std::vector<UserView>& views,
                                                       const ParamStore& store,
                                                       const EncoderConfig& cfg,
                                                       double dropout_rate = 0.0,
                                                       Rng* dropout_rng = nullptr) {
    const std::size_t d = cfg.dim;
    const Matrix& item_table = store.value("emb.item");
    const Matrix& user_table = store.value("emb.user");
    const Matrix& gender_table = store.value("emb.gender");
    const Matrix& age_table = store.value("emb.age");

    Matrix embedded(views.size(), 4 * d);
    for (std::size_t i = 0; i < views.size(); ++i) {
        const auto& view = views[i];
        bool informative = false;
        for (int idx : view.history) informative |= idx != Vocab::kPad;
        if (view.history.empty() || !informative)
            throw DegenerateVectorError("encode_user: history is empty or all PAD");
        double* row = embedded.row(i).data();
        detail::pool_rows(item_table, view.history, row, d);
        for (std::size_t j = 0; j < d; ++j) {
            row[d + j] = user_table(static_cast<std::size_t>(view.user_idx), j);
            row[2 * d + j] = gender_table(static_cast<std::size_t>(view.gender_idx), j);
            row[3 * d + j] = age_table(static_cast<std::size_t>(view.age_idx), j);
        }
    }

    TowerCache cache;
    cache.is_user = true;
    cache.user_views = views;
    if (dropout_rng && dropout_rate > 0.0)
        feature_dropout_inplace(embedded, dropout_rate, *dropout_rng, cache.dropout_mask);

    Matrix reps = detail::run_mlp("user_tower", store, cfg, std::move(embedded), cache.affines);
    return {std::move(reps), std::move(cache)};
}

// e_v = MLP( [ item emb | mean-pool(keyword embs) ] ).
inline std::pair<Matrix, TowerCache> encode_item_batch(const std::vector<ItemView>& views,
                                                       const ParamStore& store,
                                                       const EncoderConfig& cfg,
                                                       double dropout_rate = 0.0,
                                                       Rng* dropout_rng = nullptr) {
    const std::size_t d = cfg.dim;
    const Matrix& id_table =
        cfg.share_item_table ? store.value("emb.item") : store.value("emb.item_target");
    const Matrix& kw_table = store.value("emb.keyword");

    Matrix embedded(views.size(), 2 * d);
    static const std::vector<int> mask_only{Vocab::kMask};
    for (std::size_t i = 0; i < views.size(); ++i) {
        const auto& view = views[i];
        if (view.item_idx == Vocab::kPad)
            throw DegenerateVectorError("encode_item: PAD item index");
        double* row = embedded.row(i).data();
        for (std::size_t j = 0; j < d; ++j)
            row[j] = id_table(static_cast<std::size_t>(view.item_idx), j);
        const auto& kws = view.keyword_idxs.empty() ? mask_only : view.keyword_idxs;
        detail::pool_rows(kw_table, kws, row + d, d);
    }

    TowerCache cache;
    cache.is_user = false;
    cache.item_views = views;
    cache.share_item_table = cfg.share_item_table;
    if (dropout_rng && dropout_rate > 0.0)
        feature_dropout_inplace(embedded, dropout_rate, *dropout_rng, cache.dropout_mask);

    Matrix reps = detail::run_mlp("item_tower", store, cfg, std::move(embedded), cache.affines);
    return {std::move(reps), std::move(cache)};
}

// Accumulates gradients for a tower forward into the store (+=).
inline void encode_backward(const TowerCache& cache, const Matrix& d_reps, ParamStore& store,
                            const EncoderConfig& cfg) {
    const std::size_t d = cfg.dim;
    Matrix d_embedded;
    detail::backprop_mlp(cache.is_user ? "user_tower" : "item_tower", store, cfg, cache.affines,
                         d_reps, d_embedded);
    if (!cache.dropout_mask.empty()) {
        check_shape(cache.dropout_mask.same_shape(d_embedded), "dropout mask vs embedded grad");
        for (std::size_t i = 0; i < d_embedded.data.size(); ++i)
            d_embedded.data[i] *= cache.dropout_mask.data[i];
    }

    if (cache.is_user) {
        Matrix& d_item = store.grad("emb.item");
        Matrix& d_user = store.grad("emb.user");
        Matrix& d_gender = store.grad("emb.gender");
        Matrix& d_age = store.grad("emb.age");
        for (std::size_t i = 0; i < cache.user_views.size(); ++i) {
            const auto& view = cache.user_views[i];
            const double* row = d_embedded.row(i).data();
            detail::scatter_pooled(d_item, view.history, row, d);
            for (std::size_t j = 0; j < d; ++j) {
                d_user(static_cast<std::size_t>(view.user_idx), j) += row[d + j];
                d_gender(static_cast<std::size_t>(view.gender_idx), j) += row[2 * d + j];
                d_age(static_cast<std::size_t>(view.age_idx), j) += row[3 * d + j];
            }
        }
    } else {
        Matrix& d_id = store.grad(cache.share_item_table ? "emb.item" : "emb.item_target");
        Matrix& d_kw = store.grad("emb.keyword");
        static const std::vector<int> mask_only{Vocab::kMask};
        for (std::size_t i = 0; i < cache.item_views.size(); ++i) {
            const auto& view = cache.item_views[i];
            const double* row = d_embedded.row(i).data();
            for (std::size_t j = 0; j < d; ++j)
                d_id(static_cast<std::size_t>(view.item_idx), j) += row[j];
            const auto& kws = view.keyword_idxs.empty() ? mask_only : view.keyword_idxs;
            detail::scatter_pooled(d_kw, kws, row + d, d);
        }
    }
}

// Single-record conveniences.
inline std::vector<double> encode_user(const UserView& view, const ParamStore& store,
                                       const EncoderConfig& cfg) {
    auto [reps, cache] = encode_user_batch({view}, store, cfg);
    return {reps.row(0).begin(), reps.row(0).end()};
}

inline std::vector<double> encode_item(const ItemView& view, const ParamStore& store,
                                       const EncoderConfig& cfg) {
    auto [reps, cache] = encode_item_batch({view}, store, cfg);
    return {reps.row(0).begin(), reps.row(0).end()};
}

// score_pair: the retrieval likelihood is plain cosine similarity.
inline double score_pair(std::span<const double> e_u, std::span<const double> e_v) {
    return cosine_sim(e_u, e_v);
}

// ---- joint-space projection (cross-space mining) ----

enum class Side { User, Item };

struct ProjectionCache {
    AffineCache affine;
    Matrix activated;  // tanh outputs, pre normalization
};

// tanh(affine(rep)) normalized to unit length; maps both sides into one
// semantic space for user<->item mining.
inline std::pair<Matrix, ProjectionCache> project_joint_batch(const Matrix& reps, Side side,
                                                              const ParamStore& store) {
    const std::string prefix = side == Side::User ? "proj.user" : "proj.item";
    auto [act, cache] =
        affine_forward(reps, store.value(prefix + ".W"), store.value(prefix + ".b"), Activation::Tanh);
    Matrix out = act;
    for (std::size_t i = 0; i < out.rows; ++i) normalize_inplace(out.row(i));
    return {std::move(out), ProjectionCache{std::move(cache), std::move(act)}};
}

inline std::vector<double> project_joint(std::span<const double> rep, Side side,
                                         const ParamStore& store) {
    Matrix m(1, rep.size());
    std::copy(rep.begin(), rep.end(), m.data.begin());
    auto [out, cache] = project_joint_batch(m, side, store);
    return {out.row(0).begin(), out.row(0).end()};
}

inline void project_joint_backward(const ProjectionCache& cache, Side side, const Matrix& d_out,
                                   ParamStore& store, Matrix& d_reps) {
    const std::string prefix = side == Side::User ? "proj.user" : "proj.item";
    // Through y = x/|x|: dx = (g - (g.y) y) / |x|.
    Matrix d_act(d_out.rows, d_out.cols);
    for (std::size_t i = 0; i < d_out.rows; ++i) {
        const auto x = cache.activated.row(i);
        const double n = norm(x);
        if (n == 0.0) throw DegenerateVectorError("project_joint_backward: zero-norm activation");
        const auto g = d_out.row(i);
        std::vector<double> y(x.begin(), x.end());
        for (double& v : y) v /= n;
        double gy = 0.0;
        for (std::size_t j = 0; j < y.size(); ++j) gy += g[j] * y[j];
        for (std::size_t j = 0; j < y.size(); ++j) d_act(i, j) = (g[j] - gy * y[j]) / n;
    }
    AffineGrads grads = affine_backward(cache.affine, d_act);
    add_inplace(store.grad(prefix + ".W"), grads.d_weights);
    add_inplace(store.grad(prefix + ".b"), grads.d_bias);
    d_reps = std::move(grads.d_input);
}

}  // namespace mic
