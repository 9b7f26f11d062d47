#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "mic/error.hpp"
#include "mic/matrix.hpp"
#include "mic/mining.hpp"

namespace mic {

// Representations for one training step. view_a is the primary view (it also
// feeds the user-item loss and the logistic loss); view_b is the second
// perturbation. The support blocks hold freshly encoded mined anchors; the
// per-anchor index lists point at rows of those blocks.
struct ContrastiveBatch {
    Matrix user_view_a, user_view_b;
    Matrix item_view_a, item_view_b;
    double temperature = 0.1;

    Matrix user_support, item_support;
    std::vector<std::vector<int>> user_pos, user_neg;    // user-user channel
    std::vector<std::vector<int>> item_pos, item_neg;    // item-item channel
    std::vector<std::vector<int>> uv_extra_pos;          // user anchor -> item support rows
    std::vector<std::vector<int>> vu_extra_pos;          // item anchor -> user support rows

    // Alternative convention: denominators drawn from the anchor's own view
    // with the j = k term excluded, positives numerator-only. Comparison
    // mode only.
    bool strict_denominator = false;
    // Append mined hard negatives to the user-item denominators too.
    bool uv_use_hard_negatives = false;
    // Mined positives averaged with the augmented view (weight 1/(1+k)) when
    // true, summed at weight 1 each when false.
    bool average_mined_positives = true;

    std::size_t size() const { return user_view_a.rows; }

    void validate() const {
        const std::size_t n = user_view_a.rows;
        if (n < 2) throw InvalidStateError("contrastive batch needs at least 2 pairs");
        check_shape(user_view_b.rows == n && item_view_a.rows == n && item_view_b.rows == n,
                    "contrastive batch view row counts");
        const std::size_t d = user_view_a.cols;
        check_shape(user_view_b.cols == d && item_view_a.cols == d && item_view_b.cols == d,
                    "contrastive batch view dims");
        if (!user_view_a.all_finite() || !user_view_b.all_finite() || !item_view_a.all_finite() ||
            !item_view_b.all_finite())
            throw InvalidStateError("contrastive batch has non-finite representations");
        if (temperature <= 0.0) throw ConfigError("temperature must be positive");
        auto check_lists = [&](const std::vector<std::vector<int>>& lists, std::size_t anchors,
                               const Matrix& support) {
            if (lists.empty()) return;
            check_shape(lists.size() == anchors, "support list count vs anchors");
            for (const auto& l : lists)
                for (int idx : l)
                    if (idx < 0 || static_cast<std::size_t>(idx) >= support.rows)
                        throw InvalidStateError("support index out of range");
        };
        check_lists(user_pos, n, user_support);
        check_lists(user_neg, n, user_support);
        check_lists(item_pos, n, item_support);
        check_lists(item_neg, n, item_support);
        check_lists(uv_extra_pos, n, item_support);
        check_lists(vu_extra_pos, n, user_support);
    }
};

struct LossWeights {
    double lambda = 0.7;
    double w_uv = 1.0, w_uu = 1.0, w_vv = 1.0;

    void validate() const {
        if (lambda < 0.0 || lambda > 1.0) throw ConfigError("lambda must be in [0, 1]");
        if (w_uv < 0.0 || w_uu < 0.0 || w_vv < 0.0)
            throw ConfigError("channel weights must be >= 0");
    }
};

struct RepGrads {
    Matrix user_a, user_b, item_a, item_b, user_support, item_support;

    static RepGrads like(const ContrastiveBatch& b) {
        RepGrads g;
        g.user_a = Matrix(b.user_view_a.rows, b.user_view_a.cols);
        g.user_b = Matrix(b.user_view_b.rows, b.user_view_b.cols);
        g.item_a = Matrix(b.item_view_a.rows, b.item_view_a.cols);
        g.item_b = Matrix(b.item_view_b.rows, b.item_view_b.cols);
        g.user_support = Matrix(b.user_support.rows, b.user_support.cols);
        g.item_support = Matrix(b.item_support.rows, b.item_support.cols);
        return g;
    }
};

namespace detail {

enum class Block { UserA, UserB, ItemA, ItemB, UserS, ItemS };

inline const Matrix& block_of(const ContrastiveBatch& b, Block block) {
    switch (block) {
        case Block::UserA: return b.user_view_a;
        case Block::UserB: return b.user_view_b;
        case Block::ItemA: return b.item_view_a;
        case Block::ItemB: return b.item_view_b;
        case Block::UserS: return b.user_support;
        default: return b.item_support;
    }
}

inline Matrix& grad_of(RepGrads& g, Block block) {
    switch (block) {
        case Block::UserA: return g.user_a;
        case Block::UserB: return g.user_b;
        case Block::ItemA: return g.item_a;
        case Block::ItemB: return g.item_b;
        case Block::UserS: return g.user_support;
        default: return g.item_support;
    }
}

struct Cand {
    Block block;
    std::size_t row;
    double pos_weight;  // 0 for pure negatives
    bool in_denom;
};

// One anchor's softmax-contrastive term:
//   L = -sum_p w_p z_p + log sum_{j in denom} exp(z_j),  z_j = sim(x, c_j)/tau
// with sum_p w_p = 1. dL/dz_j = softmax_j(denom) - w_j; gradients chain
// through the cosine and accumulate (scaled) into g.
inline double anchor_term(const ContrastiveBatch& b, RepGrads& g, Block anchor_block,
                          std::size_t anchor_row, const std::vector<Cand>& cands, double scale) {
    const auto x = block_of(b, anchor_block).row(anchor_row);
    const double tau = b.temperature;

    std::vector<double> z(cands.size());
    double max_denom = -std::numeric_limits<double>::infinity();
    double pos_part = 0.0;
    for (std::size_t j = 0; j < cands.size(); ++j) {
        const auto c = block_of(b, cands[j].block).row(cands[j].row);
        z[j] = cosine_sim(x, c) / tau;
        pos_part += cands[j].pos_weight * z[j];
        if (cands[j].in_denom && z[j] > max_denom) max_denom = z[j];
    }
    if (!std::isfinite(max_denom)) throw InvalidStateError("contrastive term has empty denominator");
    double sum_exp = 0.0;
    for (std::size_t j = 0; j < cands.size(); ++j)
        if (cands[j].in_denom) sum_exp += std::exp(z[j] - max_denom);
    const double lse = max_denom + std::log(sum_exp);
    const double loss = -pos_part + lse;

    Matrix& d_anchor = grad_of(g, anchor_block);
    for (std::size_t j = 0; j < cands.size(); ++j) {
        double coef = -cands[j].pos_weight;
        if (cands[j].in_denom) coef += std::exp(z[j] - lse);
        if (coef == 0.0) continue;
        const double d_sim = scale * coef / tau;
        const auto c = block_of(b, cands[j].block).row(cands[j].row);
        cosine_sim_grad_a(x, c, d_sim, d_anchor.row(anchor_row));
        cosine_sim_grad_a(c, x, d_sim, grad_of(g, cands[j].block).row(cands[j].row));
    }
    return loss;
}

inline double mined_weight(const ContrastiveBatch& b, std::size_t mined_count) {
    return b.average_mined_positives ? 1.0 / (1.0 + static_cast<double>(mined_count)) : 1.0;
}

// Shared body of the user-user / item-item losses.
inline double same_side_loss(const ContrastiveBatch& b, RepGrads& g, bool users, double scale) {
    const std::size_t n = b.size();
    const Block view_a = users ? Block::UserA : Block::ItemA;
    const Block view_b = users ? Block::UserB : Block::ItemB;
    const Block support = users ? Block::UserS : Block::ItemS;
    const auto& pos_lists = users ? b.user_pos : b.item_pos;
    const auto& neg_lists = users ? b.user_neg : b.item_neg;

    double total = 0.0;
    std::vector<Cand> cands;
    for (std::size_t k = 0; k < n; ++k) {
        cands.clear();
        const std::size_t mined = pos_lists.empty() ? 0 : pos_lists[k].size();
        const double w = mined_weight(b, mined);
        if (b.strict_denominator) {
            cands.push_back({view_b, k, w, false});
            for (std::size_t j = 0; j < n; ++j)
                if (j != k) cands.push_back({view_a, j, 0.0, true});
        } else {
            for (std::size_t j = 0; j < n; ++j) cands.push_back({view_b, j, j == k ? w : 0.0, true});
        }
        if (mined > 0)
            for (int p : pos_lists[k]) cands.push_back({support, static_cast<std::size_t>(p), w, false});
        if (!neg_lists.empty())
            for (int q : neg_lists[k]) cands.push_back({support, static_cast<std::size_t>(q), 0.0, true});
        total += anchor_term(b, g, view_a, k, cands, scale / static_cast<double>(n));
    }
    return total / static_cast<double>(n);
}

}  // namespace detail

// Symmetric two-direction user-item InfoNCE over the primary views, averaged
// over the batch. Cross-space mined positives add numerator terms.
inline double loss_uv(const ContrastiveBatch& b, RepGrads& g, double scale = 1.0) {
    b.validate();
    const std::size_t n = b.size();
    double total = 0.0;
    std::vector<detail::Cand> cands;
    auto direction = [&](detail::Block anchors, detail::Block cands_block, detail::Block support,
                         const std::vector<std::vector<int>>& extra_pos,
                         const std::vector<std::vector<int>>& hard_negs) {
        for (std::size_t i = 0; i < n; ++i) {
            cands.clear();
            const std::size_t mined = extra_pos.empty() ? 0 : extra_pos[i].size();
            const double w = detail::mined_weight(b, mined);
            if (b.strict_denominator) {
                cands.push_back({cands_block, i, w, false});
                for (std::size_t j = 0; j < n; ++j)
                    if (j != i) cands.push_back({cands_block, j, 0.0, true});
            } else {
                for (std::size_t j = 0; j < n; ++j)
                    cands.push_back({cands_block, j, j == i ? w : 0.0, true});
            }
            if (mined > 0)
                for (int p : extra_pos[i])
                    cands.push_back({support, static_cast<std::size_t>(p), w, false});
            if (b.uv_use_hard_negatives && !hard_negs.empty())
                for (int q : hard_negs[i])
                    cands.push_back({support, static_cast<std::size_t>(q), 0.0, true});
            total += detail::anchor_term(b, g, anchors, i, cands, scale / static_cast<double>(n));
        }
    };
    // u_i against item candidates; hard negatives come from the paired item's
    // cluster complement (and vice versa below).
    direction(detail::Block::UserA, detail::Block::ItemA, detail::Block::ItemS, b.uv_extra_pos,
              b.item_neg);
    direction(detail::Block::ItemA, detail::Block::UserA, detail::Block::UserS, b.vu_extra_pos,
              b.user_neg);
    return total / static_cast<double>(n);
}

// User-user contrastive: anchor is the primary view, positive its second
// view, denominator the N second views plus mined hard negatives.
inline double loss_uu(const ContrastiveBatch& b, RepGrads& g, double scale = 1.0) {
    b.validate();
    return detail::same_side_loss(b, g, true, scale);
}

inline double loss_vv(const ContrastiveBatch& b, RepGrads& g, double scale = 1.0) {
    b.validate();
    return detail::same_side_loss(b, g, false, scale);
}

// Labeled cosine-logistic pairs for the basic loss. Rows index the primary
// views.
struct BasicLabel {
    std::size_t user_row;
    std::size_t item_row;
    double y;  // 0 or 1
};

inline std::vector<BasicLabel> make_basic_labels(std::size_t n, Rng& rng) {
    std::vector<BasicLabel> labels;
    labels.reserve(2 * n);
    for (std::size_t i = 0; i < n; ++i) labels.push_back({i, i, 1.0});
    // one mismatched pairing per positive via a nonzero cyclic shift
    const std::size_t r = 1 + rng.uniform_index(n - 1);
    for (std::size_t i = 0; i < n; ++i) labels.push_back({i, (i + r) % n, 0.0});
    return labels;
}

// Mean binary cross-entropy of y-hat = sigmoid(sim(u_i, v_j)/tau) over the
// labeled pairs.
inline double loss_basic(const ContrastiveBatch& b, const std::vector<BasicLabel>& labels,
                         RepGrads& g, double scale = 1.0) {
    b.validate();
    if (labels.empty()) throw InvalidStateError("loss_basic: no labeled pairs");
    const double tau = b.temperature;
    const double inv_m = 1.0 / static_cast<double>(labels.size());
    double total = 0.0;
    for (const auto& lab : labels) {
        if (lab.y != 0.0 && lab.y != 1.0) throw InvalidStateError("loss_basic: label must be 0 or 1");
        const auto u = b.user_view_a.row(lab.user_row);
        const auto v = b.item_view_a.row(lab.item_row);
        const double z = cosine_sim(u, v) / tau;
        const double y_hat = 1.0 / (1.0 + std::exp(-z));
        const double clamped = std::min(1.0 - 1e-12, std::max(1e-12, y_hat));
        total += -(lab.y * std::log(clamped) + (1.0 - lab.y) * std::log(1.0 - clamped));
        const double d_sim = scale * inv_m * (y_hat - lab.y) / tau;
        cosine_sim_grad_a(u, v, d_sim, g.user_a.row(lab.user_row));
        cosine_sim_grad_a(v, u, d_sim, g.item_a.row(lab.item_row));
    }
    return total * inv_m;
}

struct LossParts {
    double basic = 0.0, uv = 0.0, uu = 0.0, vv = 0.0;
    double total = 0.0;
};

// L = lambda * L_basic + (1 - lambda) * (w_uv L_uv + w_vv L_vv + w_uu L_uu),
// gradients accumulated with the same coefficients.
inline LossParts loss_total(const ContrastiveBatch& b, const std::vector<BasicLabel>& labels,
                            const LossWeights& w, RepGrads& g) {
    w.validate();
    LossParts parts;
    const double contrast = 1.0 - w.lambda;
    if (w.lambda > 0.0) parts.basic = loss_basic(b, labels, g, w.lambda);
    if (contrast * w.w_uv > 0.0) parts.uv = loss_uv(b, g, contrast * w.w_uv);
    if (contrast * w.w_vv > 0.0) parts.vv = loss_vv(b, g, contrast * w.w_vv);
    if (contrast * w.w_uu > 0.0) parts.uu = loss_uu(b, g, contrast * w.w_uu);
    parts.total = w.lambda * parts.basic + contrast * (w.w_uv * parts.uv + w.w_vv * parts.vv +
                                                       w.w_uu * parts.uu);
    return parts;
}

}  // namespace mic
