#pragma once

#include <cmath>
#include <cstdio>
#include <map>
#include <string>
#include <vector>

#include "mic/augment.hpp"
#include "mic/dataset.hpp"
#include "mic/encoder.hpp"
#include "mic/error.hpp"
#include "mic/evalkit.hpp"
#include "mic/mining.hpp"
#include "mic/objective.hpp"
#include "mic/param_store.hpp"

namespace mic {

struct TrainConfig {
    std::size_t batch_size = 128;  // desk-scale default; 1024 at full scale
    double lr = 0.001;
    std::size_t epochs = 30;
    std::uint64_t seed = 42;
    std::size_t eval_every = 0;  // steps; 0 evaluates at each epoch end
    std::size_t patience = 3;
    std::size_t recall_n = 20;
    double temperature = 0.1;
    bool mining_enabled = true;
    LossWeights weights;
    PerturbConfig perturb;
    MiningConfig mining;
    EncoderConfig encoder;

    void validate() const {
        if (batch_size < 2) throw ConfigError("batch_size must be >= 2");
        if (patience < 1) throw ConfigError("patience must be >= 1");
        if (lr <= 0.0) throw ConfigError("lr must be positive");
        if (temperature <= 0.0) throw ConfigError("temperature must be positive");
        weights.validate();
        perturb.validate();
        if (mining_enabled) mining.validate();
    }
};

struct TrainPair {
    int user;
    int item;
};

namespace detail {

inline std::uint64_t mix3(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
    return splitmix64(splitmix64(a ^ (0x9E3779B97F4A7C15ULL * (b + 1))) ^ c);
}

}  // namespace detail

// One training pair per visible (user, history item) interaction, shuffled
// by (seed, epoch) and chunked; an incomplete final batch is dropped.
inline std::vector<std::vector<TrainPair>> build_batches(const Corpus& corpus,
                                                         const SplitDataset& split,
                                                         std::size_t batch_size,
                                                         std::uint64_t seed, std::size_t epoch) {
    if (batch_size < 2) throw ConfigError("batch_size must be >= 2");
    std::vector<TrainPair> pairs;
    for (const auto& [u, hist] : training_histories(corpus, split))
        for (int item : hist) pairs.push_back({u, item});
    if (pairs.empty()) throw InvalidStateError("build_batches: empty training set");

    Rng rng(detail::mix3(seed, 0xE0, epoch));
    rng.shuffle(pairs);
    std::vector<std::vector<TrainPair>> batches;
    for (std::size_t start = 0; start + batch_size <= pairs.size(); start += batch_size)
        batches.emplace_back(pairs.begin() + static_cast<long>(start),
                             pairs.begin() + static_cast<long>(start + batch_size));
    return batches;
}

struct TrainResult {
    std::vector<std::string> log_lines;
    std::vector<std::string> warnings;
    long total_steps = 0;
    double best_recall = -1.0;
    long best_step = -1;
    bool early_stopped = false;
    LossParts last_parts;
};

namespace detail {

inline ParamStore clone_values(const ParamStore& store) {
    ParamStore out;
    out.step_count = store.step_count;
    for (const auto& [name, entry] : store.entries) {
        out.add(name, entry.value.rows, entry.value.cols);
        auto& fresh = out.at(name);
        fresh.value = entry.value;
        fresh.freeze_pad_row = entry.freeze_pad_row;
    }
    return out;
}

inline void restore_values(ParamStore& store, const ParamStore& snapshot) {
    for (const auto& [name, entry] : snapshot.entries) store.value(name) = entry.value;
}

// Unique support rows needed by one batch, in first-use order.
struct SupportPick {
    std::vector<int> rows;                 // pool rows, in support-matrix order
    std::map<int, int> support_row_of;     // pool row -> support row

    int pick(int pool_row) {
        auto [it, fresh] = support_row_of.emplace(pool_row, static_cast<int>(rows.size()));
        if (fresh) rows.push_back(pool_row);
        return it->second;
    }
};

inline std::string format_pairs(const std::vector<TrainPair>& batch) {
    std::string s;
    const std::size_t cap = std::min<std::size_t>(batch.size(), 20);
    for (std::size_t i = 0; i < cap; ++i) {
        if (i) s += ",";
        s += "(" + std::to_string(batch[i].user) + "," + std::to_string(batch[i].item) + ")";
    }
    if (batch.size() > cap) s += ",...";
    return s;
}

}  // namespace detail

// Full training loop: two perturbed views per anchor, the weighted loss,
// manual backprop, Adam, periodic support-set refresh, validation-driven
// early stopping. On return store holds the best-validation parameters (or
// the final ones when no validation ran).
inline TrainResult train(const Corpus& corpus, const SplitDataset& split, const TrainConfig& cfg,
                         ParamStore& store) {
    cfg.validate();
    const VocabSizes sizes = VocabSizes::of(corpus);
    if (store.entries.empty()) init_encoder_params(store, sizes, cfg.encoder, cfg.seed);

    TrainResult result;
    const auto train_hist = training_histories(corpus, split);

    // Mining pool: every user with a visible history, plus all items.
    std::vector<int> pool_users;
    std::map<int, std::size_t> user_pool_row;
    std::vector<UserView> pool_user_views;
    for (const auto& [u, hist] : train_hist) {
        user_pool_row[u] = pool_users.size();
        pool_users.push_back(u);
        UserView v = make_user_view(corpus, u);
        v.history = hist;
        pool_user_views.push_back(std::move(v));
    }
    std::vector<ItemView> pool_item_views;
    for (std::size_t idx = 2; idx < corpus.items.size(); ++idx)
        pool_item_views.push_back(make_item_view(corpus, static_cast<int>(idx)));
    auto item_pool_row = [](int item_idx) { return static_cast<std::size_t>(item_idx - 2); };

    const bool can_validate = [&] {
        for (int u : split.valid_users) {
            auto it = split.holdout.find(u);
            if (it != split.holdout.end() && !it->second.empty()) return true;
        }
        return false;
    }();

    SupportSet support;
    ParamStore best_params;
    std::size_t evals_since_best = 0;
    long step = 0;
    bool stop = false;
    char buf[256];

    auto run_validation = [&](std::size_t epoch) {
        const double recall = validation_recall_u2i(corpus, split, split.valid_users, store,
                                                    cfg.encoder, cfg.recall_n);
        if (recall > result.best_recall) {
            result.best_recall = recall;
            result.best_step = step;
            best_params = detail::clone_values(store);
            evals_since_best = 0;
        } else {
            ++evals_since_best;
        }
        std::snprintf(buf, sizeof(buf),
                      "eval step=%ld epoch=%zu recall@%zu=%.9f best=%.9f stale=%zu", step, epoch,
                      cfg.recall_n, recall, result.best_recall, evals_since_best);
        result.log_lines.emplace_back(buf);
        if (evals_since_best >= cfg.patience) {
            stop = true;
            result.early_stopped = true;
        }
    };

    auto refresh_support = [&] {
        const Matrix user_reps = encode_user_batch(pool_user_views, store, cfg.encoder).first;
        const Matrix item_reps = encode_item_batch(pool_item_views, store, cfg.encoder).first;
        const Matrix user_joint = project_joint_batch(user_reps, Side::User, store).first;
        const Matrix item_joint = project_joint_batch(item_reps, Side::Item, store).first;
        Rng mine_rng(detail::mix3(cfg.seed, 0xB2, static_cast<std::uint64_t>(step)));
        support = mine_support_set(user_reps, item_reps, user_joint, item_joint, cfg.mining,
                                   mine_rng, step, &result.warnings, &result.log_lines);
    };

    for (std::size_t epoch = 0; epoch < cfg.epochs && !stop; ++epoch) {
        const auto batches = build_batches(corpus, split, cfg.batch_size, cfg.seed, epoch);
        for (const auto& batch : batches) {
            ++step;
            const std::size_t n = batch.size();
            Rng step_rng(detail::mix3(cfg.seed, 0xA1, static_cast<std::uint64_t>(step)));
            Rng mask_rng = step_rng.fork(1);
            Rng drop_ua = step_rng.fork(2), drop_ub = step_rng.fork(3);
            Rng drop_ia = step_rng.fork(4), drop_ib = step_rng.fork(5);
            Rng label_rng = step_rng.fork(6);

            std::vector<UserView> users_a(n), users_b(n);
            std::vector<ItemView> items_a(n), items_b(n);
            for (std::size_t i = 0; i < n; ++i) {
                const UserView& base_u = pool_user_views[user_pool_row.at(batch[i].user)];
                const ItemView& base_i = pool_item_views[item_pool_row(batch[i].item)];
                users_a[i] = mask_fields(base_u, cfg.perturb, mask_rng);
                users_b[i] = mask_fields(base_u, cfg.perturb, mask_rng);
                items_a[i] = mask_fields(base_i, cfg.perturb, mask_rng);
                items_b[i] = mask_fields(base_i, cfg.perturb, mask_rng);
            }
            const double rate = cfg.perturb.feature_dropout_rate;
            auto [ua_reps, ua_cache] = encode_user_batch(users_a, store, cfg.encoder, rate, &drop_ua);
            auto [ub_reps, ub_cache] = encode_user_batch(users_b, store, cfg.encoder, rate, &drop_ub);
            auto [ia_reps, ia_cache] = encode_item_batch(items_a, store, cfg.encoder, rate, &drop_ia);
            auto [ib_reps, ib_cache] = encode_item_batch(items_b, store, cfg.encoder, rate, &drop_ib);

            ContrastiveBatch cb;
            cb.user_view_a = std::move(ua_reps);
            cb.user_view_b = std::move(ub_reps);
            cb.item_view_a = std::move(ia_reps);
            cb.item_view_b = std::move(ib_reps);
            cb.temperature = cfg.temperature;

            detail::SupportPick user_pick, item_pick;
            if (support.active()) {
                cb.user_pos.resize(n);
                cb.user_neg.resize(n);
                cb.item_pos.resize(n);
                cb.item_neg.resize(n);
                cb.uv_extra_pos.resize(n);
                cb.vu_extra_pos.resize(n);
                for (std::size_t i = 0; i < n; ++i) {
                    const auto ur = user_pool_row.at(batch[i].user);
                    const auto ir = item_pool_row(batch[i].item);
                    for (int p : support.user_positives[ur]) cb.user_pos[i].push_back(user_pick.pick(p));
                    for (int q : support.user_hard_negatives[ur])
                        cb.user_neg[i].push_back(user_pick.pick(q));
                    for (int p : support.item_positives[ir]) cb.item_pos[i].push_back(item_pick.pick(p));
                    for (int q : support.item_hard_negatives[ir])
                        cb.item_neg[i].push_back(item_pick.pick(q));
                    for (int p : support.user_to_item[ur]) cb.uv_extra_pos[i].push_back(item_pick.pick(p));
                    for (int p : support.item_to_user[ir]) cb.vu_extra_pos[i].push_back(user_pick.pick(p));
                }
            }
            std::vector<UserView> support_user_views;
            std::vector<ItemView> support_item_views;
            for (int r : user_pick.rows) support_user_views.push_back(pool_user_views[static_cast<std::size_t>(r)]);
            for (int r : item_pick.rows) support_item_views.push_back(pool_item_views[static_cast<std::size_t>(r)]);
            TowerCache us_cache, is_cache;
            if (!support_user_views.empty()) {
                auto enc = encode_user_batch(support_user_views, store, cfg.encoder);
                cb.user_support = std::move(enc.first);
                us_cache = std::move(enc.second);
            }
            if (!support_item_views.empty()) {
                auto enc = encode_item_batch(support_item_views, store, cfg.encoder);
                cb.item_support = std::move(enc.first);
                is_cache = std::move(enc.second);
            }

            const auto labels = make_basic_labels(n, label_rng);
            RepGrads grads = RepGrads::like(cb);
            const LossParts parts = loss_total(cb, labels, cfg.weights, grads);
            if (!std::isfinite(parts.total))
                throw DivergedError("non-finite loss at step " + std::to_string(step) +
                                    "; batch pairs: " + detail::format_pairs(batch));

            store.zero_grads();
            encode_backward(ua_cache, grads.user_a, store, cfg.encoder);
            encode_backward(ub_cache, grads.user_b, store, cfg.encoder);
            encode_backward(ia_cache, grads.item_a, store, cfg.encoder);
            encode_backward(ib_cache, grads.item_b, store, cfg.encoder);
            if (!support_user_views.empty())
                encode_backward(us_cache, grads.user_support, store, cfg.encoder);
            if (!support_item_views.empty())
                encode_backward(is_cache, grads.item_support, store, cfg.encoder);
            AdamConfig adam;
            adam.lr = cfg.lr;
            adam_step(store, adam);

            std::snprintf(buf, sizeof(buf),
                          "step=%ld epoch=%zu loss=%.9f basic=%.9f uv=%.9f uu=%.9f vv=%.9f",
                          step, epoch, parts.total, parts.basic, parts.uv, parts.uu, parts.vv);
            result.log_lines.emplace_back(buf);
            result.last_parts = parts;

            if (cfg.mining_enabled && step % static_cast<long>(cfg.mining.refresh_every) == 0)
                refresh_support();
            if (can_validate && cfg.eval_every > 0 &&
                step % static_cast<long>(cfg.eval_every) == 0) {
                run_validation(epoch);
                if (stop) break;
            }
        }
        if (can_validate && cfg.eval_every == 0 && !stop && !batches.empty()) run_validation(epoch);
    }
    result.total_steps = step;
    if (result.best_step >= 0) detail::restore_values(store, best_params);
    return result;
}

}  // namespace mic
