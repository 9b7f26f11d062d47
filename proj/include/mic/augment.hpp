#pragma once

#include <cstddef>
#include <vector>

#include "mic/dataset.hpp"
#include "mic/error.hpp"
#include "mic/matrix.hpp"
#include "mic/rng.hpp"

namespace mic {

struct PerturbConfig {
    double field_mask_prob = 0.15;
    std::size_t max_masked_fields = 0;  // 0 -> no explicit cap
    double feature_dropout_rate = 0.2;

    void validate() const {
        if (field_mask_prob < 0.0 || field_mask_prob >= 1.0)
            throw ConfigError("field_mask_prob must be in [0, 1)");
        if (feature_dropout_rate < 0.0 || feature_dropout_rate >= 1.0)
            throw ConfigError("feature_dropout_rate must be in [0, 1)");
    }
};

namespace detail {

// Maskable units are the scalar attributes plus each sequence token. Each is
// masked independently with field_mask_prob, the selection is trimmed to the
// cap (uniform subset), and one informative unit is always left intact.
// "Informative" means the original value is neither PAD nor MASK.
inline void mask_units(std::vector<int*> units, const PerturbConfig& cfg, Rng& rng) {
    std::vector<std::size_t> selected;
    for (std::size_t i = 0; i < units.size(); ++i)
        if (rng.bernoulli(cfg.field_mask_prob)) selected.push_back(i);

    std::size_t cap = units.size() > 0 ? units.size() - 1 : 0;
    if (cfg.max_masked_fields > 0 && cfg.max_masked_fields < cap) cap = cfg.max_masked_fields;
    if (selected.size() > cap) {
        rng.shuffle(selected);
        selected.resize(cap);
    }

    std::vector<std::size_t> informative;
    for (std::size_t i = 0; i < units.size(); ++i)
        if (*units[i] != Vocab::kPad && *units[i] != Vocab::kMask) informative.push_back(i);

    std::vector<char> is_selected(units.size(), 0);
    for (std::size_t i : selected) is_selected[i] = 1;
    std::size_t informative_survivors = 0;
    for (std::size_t i : informative)
        if (!is_selected[i]) ++informative_survivors;
    if (informative_survivors == 0 && !informative.empty()) {
        std::vector<std::size_t> masked_informative;
        for (std::size_t i : informative)
            if (is_selected[i]) masked_informative.push_back(i);
        is_selected[masked_informative[rng.uniform_index(masked_informative.size())]] = 0;
    }

    for (std::size_t i = 0; i < units.size(); ++i)
        if (is_selected[i]) *units[i] = Vocab::kMask;
}

}  // namespace detail

inline UserView mask_fields(const UserView& record, const PerturbConfig& cfg, Rng& rng) {
    UserView view = record;
    std::vector<int*> units{&view.user_idx, &view.gender_idx, &view.age_idx};
    for (int& token : view.history) units.push_back(&token);
    detail::mask_units(std::move(units), cfg, rng);
    return view;
}

inline ItemView mask_fields(const ItemView& record, const PerturbConfig& cfg, Rng& rng) {
    ItemView view = record;
    std::vector<int*> units{&view.item_idx};
    for (int& token : view.keyword_idxs) units.push_back(&token);
    detail::mask_units(std::move(units), cfg, rng);
    return view;
}

// Inverted dropout on an embedded-feature block: entries are zeroed with
// probability rate, survivors scaled by 1/(1-rate) so the expectation is
// unchanged. mask_out carries the per-entry scale; the backward pass
// multiplies by the same matrix.
inline void feature_dropout_inplace(Matrix& embedded, double rate, Rng& rng, Matrix& mask_out) {
    if (rate < 0.0 || rate >= 1.0) throw ConfigError("dropout rate must be in [0, 1)");
    mask_out = Matrix(embedded.rows, embedded.cols);
    const double keep_scale = 1.0 / (1.0 - rate);
    for (std::size_t i = 0; i < embedded.data.size(); ++i) {
        const double m = rng.bernoulli(rate) ? 0.0 : keep_scale;
        mask_out.data[i] = m;
        embedded.data[i] *= m;
    }
}

inline Matrix feature_dropout(const Matrix& embedded, double rate, Rng& rng,
                              Matrix* mask_out = nullptr) {
    Matrix out = embedded;
    Matrix mask;
    feature_dropout_inplace(out, rate, rng, mask);
    if (mask_out) *mask_out = std::move(mask);
    return out;
}

}  // namespace mic
