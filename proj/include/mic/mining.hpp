#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdio>
#include <string>
#include <vector>

#include "mic/error.hpp"
#include "mic/matrix.hpp"
#include "mic/rng.hpp"

namespace mic {

struct MiningConfig {
    std::size_t k_neighbors = 5;
    std::size_t num_clusters = 20;
    std::size_t hard_negatives_per_anchor = 5;
    std::size_t refresh_every = 1000;
    std::size_t kmeans_max_iters = 50;

    void validate() const {
        if (k_neighbors < 1) throw ConfigError("k_neighbors must be >= 1");
        if (hard_negatives_per_anchor > 0 && num_clusters < 2)
            throw ConfigError("num_clusters must be >= 2 when hard negatives are enabled");
        if (refresh_every < 1) throw ConfigError("refresh_every must be >= 1");
    }
};

// All indices are row positions in the representation matrices handed to the
// miner (the trainer keeps the row -> vocab mapping).
struct SupportSet {
    long snapshot_step = -1;  // -1: never mined, losses run without support
    std::vector<std::vector<int>> user_positives;
    std::vector<std::vector<int>> user_hard_negatives;
    std::vector<std::vector<int>> item_positives;
    std::vector<std::vector<int>> item_hard_negatives;
    std::vector<std::vector<int>> user_to_item;  // extra user-item positives
    std::vector<std::vector<int>> item_to_user;

    bool active() const { return snapshot_step >= 0; }
};

namespace detail {

// Rows scaled to unit length; zero-norm rows stay zero (cosine 0 against
// everything) so half-trained snapshots cannot abort mining.
inline Matrix normalize_rows(const Matrix& reps) {
    Matrix out = reps;
    for (std::size_t i = 0; i < out.rows; ++i) {
        const double n = norm(out.row(i));
        if (n > 0.0)
            for (double& v : out.row(i)) v /= n;
    }
    return out;
}

inline void warn(std::vector<std::string>* warnings, std::string msg) {
    if (warnings) warnings->push_back(std::move(msg));
}

inline std::vector<std::vector<int>> knn_rows(const Matrix& anchors_n, const Matrix& pool_n,
                                              std::size_t k, bool exclude_self,
                                              std::vector<std::string>* warnings,
                                              const std::string& what) {
    check_shape(anchors_n.cols == pool_n.cols, "knn anchor/pool dims");
    const std::size_t pool = pool_n.rows;
    const std::size_t avail = exclude_self && pool > 0 ? pool - 1 : pool;
    std::size_t eff_k = k;
    if (eff_k > avail) {
        warn(warnings, what + ": k_neighbors " + std::to_string(k) + " clamped to pool size " +
                           std::to_string(avail));
        eff_k = avail;
    }
    std::vector<std::vector<int>> result(anchors_n.rows);
    if (eff_k == 0) return result;

    std::vector<double> sims(pool);
    std::vector<int> order(pool);
    for (std::size_t i = 0; i < anchors_n.rows; ++i) {
        const auto a = anchors_n.row(i);
        for (std::size_t j = 0; j < pool; ++j) sims[j] = dot(a, pool_n.row(j));
        for (std::size_t j = 0; j < pool; ++j) order[j] = static_cast<int>(j);
        if (exclude_self) sims[i] = -2.0;  // below any cosine
        // ties resolve to the lower index
        std::partial_sort(order.begin(), order.begin() + static_cast<long>(eff_k), order.end(),
                          [&](int a_i, int b_i) {
                              if (sims[a_i] != sims[b_i]) return sims[a_i] > sims[b_i];
                              return a_i < b_i;
                          });
        result[i].assign(order.begin(), order.begin() + static_cast<long>(eff_k));
    }
    return result;
}

}  // namespace detail

// Top k_neighbors of each anchor in the pool by cosine similarity.
// exclude_self treats anchor row i as pool row i and skips it.
inline std::vector<std::vector<int>> mine_knn_positives(const Matrix& anchor_reps,
                                                        const Matrix& pool_reps, std::size_t k,
                                                        bool exclude_self = true,
                                                        std::vector<std::string>* warnings = nullptr) {
    if (pool_reps.rows == 0) throw InvalidStateError("mine_knn_positives: empty pool");
    return detail::knn_rows(detail::normalize_rows(anchor_reps), detail::normalize_rows(pool_reps),
                            k, exclude_self, warnings, "mine_knn_positives");
}

struct Clustering {
    std::vector<int> assignment;
    Matrix centroids;
    std::vector<double> inertia_history;  // one entry per Lloyd iteration
};

// k-means++ seeding then Lloyd iterations, Euclidean distance over
// unit-normalized rows. Empty clusters re-seed at the point farthest from
// its assigned centroid.
inline Clustering kmeanspp_cluster(const Matrix& reps, std::size_t num_clusters,
                                   std::size_t max_iters, Rng& rng) {
    const std::size_t n = reps.rows;
    if (num_clusters < 1) throw ConfigError("kmeanspp_cluster: num_clusters must be >= 1");
    if (num_clusters > n)
        throw ConfigError("kmeanspp_cluster: num_clusters " + std::to_string(num_clusters) +
                          " exceeds point count " + std::to_string(n));
    const Matrix points = detail::normalize_rows(reps);
    const std::size_t d = points.cols;

    auto sq_dist = [&](std::span<const double> a, std::span<const double> b) {
        double s = 0.0;
        for (std::size_t j = 0; j < a.size(); ++j) {
            const double diff = a[j] - b[j];
            s += diff * diff;
        }
        return s;
    };

    Matrix centroids(num_clusters, d);
    std::vector<double> best_sq(n, 0.0);
    {
        const std::size_t first = rng.uniform_index(n);
        for (std::size_t j = 0; j < d; ++j) centroids(0, j) = points(first, j);
        for (std::size_t i = 0; i < n; ++i) best_sq[i] = sq_dist(points.row(i), centroids.row(0));
        for (std::size_t c = 1; c < num_clusters; ++c) {
            double total = 0.0;
            for (double v : best_sq) total += v;
            std::size_t chosen;
            if (total <= 0.0) {
                chosen = rng.uniform_index(n);
            } else {
                const double u = rng.uniform() * total;
                double acc = 0.0;
                chosen = n - 1;
                for (std::size_t i = 0; i < n; ++i) {
                    acc += best_sq[i];
                    if (acc > u) {
                        chosen = i;
                        break;
                    }
                }
            }
            for (std::size_t j = 0; j < d; ++j) centroids(c, j) = points(chosen, j);
            for (std::size_t i = 0; i < n; ++i)
                best_sq[i] = std::min(best_sq[i], sq_dist(points.row(i), centroids.row(c)));
        }
    }

    Clustering out;
    out.assignment.assign(n, -1);
    std::vector<double> point_sq(n, 0.0);
    for (std::size_t iter = 0; iter < max_iters; ++iter) {
        bool changed = false;
        double inertia = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            int best = 0;
            double best_d = sq_dist(points.row(i), centroids.row(0));
            for (std::size_t c = 1; c < num_clusters; ++c) {
                const double dist = sq_dist(points.row(i), centroids.row(c));
                if (dist < best_d) {
                    best_d = dist;
                    best = static_cast<int>(c);
                }
            }
            if (out.assignment[i] != best) {
                out.assignment[i] = best;
                changed = true;
            }
            point_sq[i] = best_d;
            inertia += best_d;
        }
        out.inertia_history.push_back(inertia);
        if (!changed && iter > 0) break;

        Matrix sums(num_clusters, d);
        std::vector<std::size_t> counts(num_clusters, 0);
        for (std::size_t i = 0; i < n; ++i) {
            const auto c = static_cast<std::size_t>(out.assignment[i]);
            ++counts[c];
            for (std::size_t j = 0; j < d; ++j) sums(c, j) += points(i, j);
        }
        for (std::size_t c = 0; c < num_clusters; ++c) {
            if (counts[c] == 0) {
                std::size_t farthest = 0;
                for (std::size_t i = 1; i < n; ++i)
                    if (point_sq[i] > point_sq[farthest]) farthest = i;
                for (std::size_t j = 0; j < d; ++j) centroids(c, j) = points(farthest, j);
                point_sq[farthest] = 0.0;  // a second empty cluster grabs the next farthest
            } else {
                for (std::size_t j = 0; j < d; ++j)
                    centroids(c, j) = sums(c, j) / static_cast<double>(counts[c]);
            }
        }
    }
    out.centroids = std::move(centroids);
    return out;
}

// Uniform draws (without replacement) from points outside the anchor's
// cluster, skipping the anchor's mined positives so the support set never
// lists an index on both sides.
inline std::vector<std::vector<int>> mine_hard_negatives(
    const std::vector<int>& assignment, std::size_t count, Rng& rng,
    const std::vector<std::vector<int>>* positives = nullptr,
    std::vector<std::string>* warnings = nullptr) {
    const std::size_t n = assignment.size();
    std::vector<std::vector<int>> result(n);
    if (count == 0) return result;

    bool warned_clamp = false, warned_single = false;
    std::vector<int> eligible;
    std::vector<char> banned(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
        if (positives)
            for (int p : (*positives)[i]) banned[static_cast<std::size_t>(p)] = 1;
        eligible.clear();
        for (std::size_t j = 0; j < n; ++j)
            if (assignment[j] != assignment[i] && !banned[j]) eligible.push_back(static_cast<int>(j));
        if (positives)
            for (int p : (*positives)[i]) banned[static_cast<std::size_t>(p)] = 0;

        if (eligible.empty()) {
            if (!warned_single) {
                detail::warn(warnings, "mine_hard_negatives: no out-of-cluster points for some anchors");
                warned_single = true;
            }
            continue;
        }
        if (eligible.size() < count && !warned_clamp) {
            detail::warn(warnings, "mine_hard_negatives: requested " + std::to_string(count) +
                                       " but only " + std::to_string(eligible.size()) +
                                       " eligible for some anchors");
            warned_clamp = true;
        }
        rng.shuffle(eligible);
        const std::size_t take = std::min(count, eligible.size());
        result[i].assign(eligible.begin(), eligible.begin() + static_cast<long>(take));
        std::sort(result[i].begin(), result[i].end());
    }
    return result;
}

// Cross-side cosine kNN in the joint projected space.
struct CrossSpaceResult {
    std::vector<std::vector<int>> user_to_item;
    std::vector<std::vector<int>> item_to_user;
};

inline CrossSpaceResult mine_cross_space(const Matrix& user_joint, const Matrix& item_joint,
                                         std::size_t k,
                                         std::vector<std::string>* warnings = nullptr) {
    CrossSpaceResult out;
    out.user_to_item.resize(user_joint.rows);
    out.item_to_user.resize(item_joint.rows);
    if (k == 0) return out;
    if (user_joint.rows == 0 || item_joint.rows == 0) {
        detail::warn(warnings, "mine_cross_space: one side is empty, no pairs mined");
        return out;
    }
    const Matrix users_n = detail::normalize_rows(user_joint);
    const Matrix items_n = detail::normalize_rows(item_joint);
    out.user_to_item = detail::knn_rows(users_n, items_n, k, false, warnings, "mine_cross_space u2i");
    out.item_to_user = detail::knn_rows(items_n, users_n, k, false, warnings, "mine_cross_space i2u");
    return out;
}

namespace detail {

inline double mean_neighbor_sim(const Matrix& reps, const std::vector<std::vector<int>>& lists) {
    const Matrix n = normalize_rows(reps);
    double total = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < lists.size(); ++i)
        for (int j : lists[i]) {
            total += dot(n.row(i), n.row(static_cast<std::size_t>(j)));
            ++count;
        }
    return count ? total / static_cast<double>(count) : 0.0;
}

}  // namespace detail

// Full refresh against one parameter snapshot. user_joint/item_joint are the
// project_joint outputs for the same rows as user_reps/item_reps. info, when
// given, receives one report line per refresh per side.
inline SupportSet mine_support_set(const Matrix& user_reps, const Matrix& item_reps,
                                   const Matrix& user_joint, const Matrix& item_joint,
                                   const MiningConfig& cfg, Rng& rng, long step,
                                   std::vector<std::string>* warnings = nullptr,
                                   std::vector<std::string>* info = nullptr) {
    cfg.validate();
    SupportSet set;
    set.snapshot_step = step;
    set.user_positives = mine_knn_positives(user_reps, user_reps, cfg.k_neighbors, true, warnings);
    set.item_positives = mine_knn_positives(item_reps, item_reps, cfg.k_neighbors, true, warnings);

    std::string user_cluster_sizes = "-", item_cluster_sizes = "-";
    if (cfg.hard_negatives_per_anchor > 0) {
        auto cluster_side = [&](const Matrix& reps, const std::vector<std::vector<int>>& positives,
                                const std::string& side, std::string& sizes_out) {
            std::size_t k = cfg.num_clusters;
            if (k > reps.rows) {
                detail::warn(warnings, "mine_support_set: num_clusters clamped to " +
                                           std::to_string(reps.rows) + " for " + side);
                k = reps.rows;
            }
            Rng cluster_rng = rng.fork(side == "users" ? 0xC1 : 0xC2);
            Clustering clustering = kmeanspp_cluster(reps, k, cfg.kmeans_max_iters, cluster_rng);
            std::vector<std::size_t> counts(k, 0);
            for (int c : clustering.assignment) ++counts[static_cast<std::size_t>(c)];
            sizes_out.clear();
            for (std::size_t c = 0; c < counts.size(); ++c)
                sizes_out += (c ? "," : "") + std::to_string(counts[c]);
            Rng draw_rng = rng.fork(side == "users" ? 0xD1 : 0xD2);
            return mine_hard_negatives(clustering.assignment, cfg.hard_negatives_per_anchor,
                                       draw_rng, &positives, warnings);
        };
        set.user_hard_negatives =
            cluster_side(user_reps, set.user_positives, "users", user_cluster_sizes);
        set.item_hard_negatives =
            cluster_side(item_reps, set.item_positives, "items", item_cluster_sizes);
    } else {
        set.user_hard_negatives.resize(user_reps.rows);
        set.item_hard_negatives.resize(item_reps.rows);
    }

    CrossSpaceResult cross = mine_cross_space(user_joint, item_joint, cfg.k_neighbors, warnings);
    set.user_to_item = std::move(cross.user_to_item);
    set.item_to_user = std::move(cross.item_to_user);

    if (info) {
        char buf[160];
        std::snprintf(buf, sizeof(buf),
                      "mining step=%ld side=users anchors=%zu mean_neighbor_sim=%.6f clusters=",
                      step, user_reps.rows, detail::mean_neighbor_sim(user_reps, set.user_positives));
        info->push_back(std::string(buf) + user_cluster_sizes);
        std::snprintf(buf, sizeof(buf),
                      "mining step=%ld side=items anchors=%zu mean_neighbor_sim=%.6f clusters=",
                      step, item_reps.rows, detail::mean_neighbor_sim(item_reps, set.item_positives));
        info->push_back(std::string(buf) + item_cluster_sizes);
    }
    return set;
}

}  // namespace mic
