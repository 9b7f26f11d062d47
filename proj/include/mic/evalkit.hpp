#pragma once

#include <json.hpp>

#include <array>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "mic/channels.hpp"
#include "mic/dataset.hpp"
#include "mic/encoder.hpp"
#include "mic/error.hpp"
#include "mic/parallel.hpp"

namespace mic {

// ---- per-case metrics ----

inline double recall_at_n(const std::vector<int>& ranked, const std::set<int>& holdout,
                          std::size_t n) {
    if (n == 0) throw ConfigError("recall_at_n: N must be >= 1");
    if (holdout.empty()) throw InvalidStateError("recall_at_n: empty holdout");
    std::size_t hits = 0;
    for (std::size_t r = 0; r < ranked.size() && r < n; ++r)
        if (holdout.count(ranked[r])) ++hits;
    return static_cast<double>(hits) / static_cast<double>(holdout.size());
}

inline double ndcg_at_n(const std::vector<int>& ranked, const std::set<int>& holdout,
                        std::size_t n) {
    if (n == 0) throw ConfigError("ndcg_at_n: N must be >= 1");
    if (holdout.empty()) throw InvalidStateError("ndcg_at_n: empty holdout");
    double dcg = 0.0;
    for (std::size_t r = 0; r < ranked.size() && r < n; ++r)
        if (holdout.count(ranked[r])) dcg += 1.0 / std::log2(static_cast<double>(r) + 2.0);
    double idcg = 0.0;
    const std::size_t ideal = std::min(n, holdout.size());
    for (std::size_t r = 0; r < ideal; ++r) idcg += 1.0 / std::log2(static_cast<double>(r) + 2.0);
    return dcg / idcg;
}

inline bool hit_at_n(const std::vector<int>& ranked, const std::set<int>& holdout, std::size_t n) {
    for (std::size_t r = 0; r < ranked.size() && r < n; ++r)
        if (holdout.count(ranked[r])) return true;
    return false;
}

// ---- representation diagnostics ----

namespace detail {

inline void require_unit_rows(const Matrix& m, const char* what) {
    for (std::size_t i = 0; i < m.rows; ++i)
        if (std::abs(norm(m.row(i)) - 1.0) > 1e-9)
            throw InvalidStateError(std::string(what) + ": rows must be unit-normalized");
}

inline double sq_dist(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t j = 0; j < a.size(); ++j) {
        const double diff = a[j] - b[j];
        s += diff * diff;
    }
    return s;
}

}  // namespace detail

// Mean squared distance of paired unit vectors (alpha = 2). Lower is better.
inline double alignment_metric(const Matrix& x, const Matrix& y) {
    if (x.rows == 0) throw InvalidStateError("alignment_metric: no pairs");
    check_shape(x.rows == y.rows && x.cols == y.cols, "alignment pairs");
    detail::require_unit_rows(x, "alignment_metric");
    detail::require_unit_rows(y, "alignment_metric");
    double total = 0.0;
    for (std::size_t i = 0; i < x.rows; ++i) total += detail::sq_dist(x.row(i), y.row(i));
    return total / static_cast<double>(x.rows);
}

// log mean over distinct pairs of exp(-2 ||x_i - x_j||^2) (t = 2). Lower
// means more uniformly spread; 0 is the degenerate maximum.
inline double uniformity_metric(const Matrix& x) {
    if (x.rows < 2) throw InvalidStateError("uniformity_metric: needs at least 2 vectors");
    detail::require_unit_rows(x, "uniformity_metric");
    double total = 0.0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < x.rows; ++i)
        for (std::size_t j = i + 1; j < x.rows; ++j) {
            total += std::exp(-2.0 * detail::sq_dist(x.row(i), x.row(j)));
            ++pairs;
        }
    return std::log(total / static_cast<double>(pairs));
}

// ---- full evaluation pass ----

struct ChannelMetrics {
    double recall = 0.0, ndcg = 0.0, hit_rate = 0.0;
};

struct EvalReport {
    std::vector<std::size_t> cutoffs;
    // channel -> cutoff -> metrics
    std::map<std::string, std::map<std::size_t, ChannelMetrics>> channels;
    double ui_align = 0.0, uu_uniform = 0.0, ii_uniform = 0.0;
    std::size_t user_count = 0;
    std::size_t skipped = 0;
    std::string config_echo;
};

inline const std::vector<std::string>& channel_names() {
    static const std::vector<std::string> names{"u2i", "u2u", "i2i"};
    return names;
}

struct EvalOptions {
    std::vector<std::size_t> cutoffs{20, 50};
    ChannelConfig channel;
    std::size_t threads = 1;
};

// Encodes users from training-visible history only (train: full, eval:
// prefix), runs the three channels per eval user, and averages metrics.
inline EvalReport run_eval(const Corpus& corpus, const SplitDataset& split,
                           const std::vector<int>& eval_users, const ParamStore& store,
                           const EncoderConfig& enc_cfg, const EvalOptions& opt) {
    if (eval_users.empty()) throw InvalidStateError("run_eval: no eval users");
    const auto histories = training_histories(corpus, split);

    std::vector<int> user_ids;
    std::vector<UserView> user_views;
    for (const auto& [u, hist] : histories) {
        UserView v = make_user_view(corpus, u);
        v.history = hist;
        user_ids.push_back(u);
        user_views.push_back(std::move(v));
    }
    const Matrix user_reps = encode_user_batch(user_views, store, enc_cfg).first;

    std::vector<int> item_ids;
    std::vector<ItemView> item_views;
    for (std::size_t idx = 2; idx < corpus.items.size(); ++idx) {
        item_ids.push_back(static_cast<int>(idx));
        item_views.push_back(make_item_view(corpus, static_cast<int>(idx)));
    }
    const Matrix item_reps = encode_item_batch(item_views, store, enc_cfg).first;

    const VectorIndex user_index = build_index(user_ids, user_reps, true);
    const VectorIndex item_index = build_index(item_ids, item_reps, false);
    std::map<int, std::size_t> user_row;
    for (std::size_t r = 0; r < user_ids.size(); ++r) user_row[user_ids[r]] = r;

    EvalReport report;
    report.cutoffs = opt.cutoffs;
    const std::size_t kmax = *std::max_element(opt.cutoffs.begin(), opt.cutoffs.end());

    struct CaseResult {
        bool skipped = true;
        // channel -> cutoff -> (recall, ndcg, hit)
        std::map<std::string, std::map<std::size_t, std::array<double, 3>>> values;
    };
    std::vector<CaseResult> results(eval_users.size());

    parallel_for(eval_users.size(), opt.threads, [&](std::size_t slot) {
        const int u = eval_users[slot];
        auto hold_it = split.holdout.find(u);
        if (hold_it == split.holdout.end() || hold_it->second.empty()) return;
        const std::set<int>& holdout = hold_it->second;
        const std::vector<int>& train_items = histories.at(u);
        const std::set<int> exclude_set(train_items.begin(), train_items.end());
        const std::set<int>* exclude =
            opt.channel.exclude_training_items ? &exclude_set : nullptr;
        const auto e_u = user_reps.row(user_row.at(u));

        std::map<std::string, RankedList> ranked;
        ranked["u2i"] = retrieve_u2i(e_u, item_index, kmax, exclude);
        ranked["u2u"] =
            retrieve_u2u(u, e_u, user_index, item_index, histories, opt.channel, kmax, exclude);
        ranked["i2i"] = retrieve_i2i(e_u, train_items, item_index, opt.channel, kmax, exclude);

        CaseResult& res = results[slot];
        res.skipped = false;
        for (const auto& name : channel_names()) {
            std::vector<int> ids;
            ids.reserve(ranked[name].entries.size());
            for (const auto& e : ranked[name].entries) ids.push_back(e.id);
            for (std::size_t n : opt.cutoffs)
                res.values[name][n] = {recall_at_n(ids, holdout, n), ndcg_at_n(ids, holdout, n),
                                       hit_at_n(ids, holdout, n) ? 1.0 : 0.0};
        }
    });

    std::size_t counted = 0;
    for (const auto& res : results) {
        if (res.skipped) {
            ++report.skipped;
            continue;
        }
        ++counted;
        for (const auto& [name, per_n] : res.values)
            for (const auto& [n, vals] : per_n) {
                auto& agg = report.channels[name][n];
                agg.recall += vals[0];
                agg.ndcg += vals[1];
                agg.hit_rate += vals[2];
            }
    }
    if (counted == 0) throw InvalidStateError("run_eval: every eval user lacked a holdout");
    for (auto& [name, per_n] : report.channels)
        for (auto& [n, agg] : per_n) {
            agg.recall /= static_cast<double>(counted);
            agg.ndcg /= static_cast<double>(counted);
            agg.hit_rate /= static_cast<double>(counted);
        }
    report.user_count = counted;

    // Diagnostics: positive pairs are (eval user, each holdout item).
    std::size_t pair_count = 0;
    for (int u : eval_users) {
        auto it = split.holdout.find(u);
        if (it != split.holdout.end()) pair_count += it->second.size();
    }
    Matrix align_x(pair_count, enc_cfg.dim), align_y(pair_count, enc_cfg.dim);
    std::size_t pr = 0;
    Matrix eval_user_reps(eval_users.size(), enc_cfg.dim);
    for (std::size_t s = 0; s < eval_users.size(); ++s) {
        const int u = eval_users[s];
        const auto e_u = user_reps.row(user_row.at(u));
        std::copy(e_u.begin(), e_u.end(), eval_user_reps.row(s).begin());
        normalize_inplace(eval_user_reps.row(s));
        auto it = split.holdout.find(u);
        if (it == split.holdout.end()) continue;
        for (int item : it->second) {
            const auto e_i = item_index.matrix.row(item_index.row_of.at(item));
            std::copy(eval_user_reps.row(s).begin(), eval_user_reps.row(s).end(),
                      align_x.row(pr).begin());
            std::copy(e_i.begin(), e_i.end(), align_y.row(pr).begin());
            ++pr;
        }
    }
    report.ui_align = alignment_metric(align_x, align_y);
    report.uu_uniform = uniformity_metric(eval_user_reps);
    report.ii_uniform = uniformity_metric(item_index.matrix);
    return report;
}

// Recall@N on the direct user-to-item channel only; the trainer's early
// stopping signal.
inline double validation_recall_u2i(const Corpus& corpus, const SplitDataset& split,
                                    const std::vector<int>& eval_users, const ParamStore& store,
                                    const EncoderConfig& enc_cfg, std::size_t n,
                                    bool exclude_training = true) {
    if (eval_users.empty()) throw InvalidStateError("validation_recall_u2i: no eval users");
    std::vector<int> item_ids;
    std::vector<ItemView> item_views;
    for (std::size_t idx = 2; idx < corpus.items.size(); ++idx) {
        item_ids.push_back(static_cast<int>(idx));
        item_views.push_back(make_item_view(corpus, static_cast<int>(idx)));
    }
    const Matrix item_reps = encode_item_batch(item_views, store, enc_cfg).first;
    const VectorIndex item_index = build_index(item_ids, item_reps, false);

    std::vector<UserView> views;
    std::vector<const std::set<int>*> holdouts;
    std::vector<std::vector<int>> train_items;
    for (int u : eval_users) {
        auto it = split.holdout.find(u);
        if (it == split.holdout.end() || it->second.empty()) continue;
        UserView v = make_user_view(corpus, u);
        v.history = training_history(corpus, split, u);
        views.push_back(std::move(v));
        holdouts.push_back(&it->second);
        train_items.push_back(training_history(corpus, split, u));
    }
    if (views.empty()) throw InvalidStateError("validation_recall_u2i: no holdouts");
    const Matrix user_reps = encode_user_batch(views, store, enc_cfg).first;

    double total = 0.0;
    for (std::size_t s = 0; s < views.size(); ++s) {
        const std::set<int> exclude(train_items[s].begin(), train_items[s].end());
        RankedList top = retrieve_u2i(user_reps.row(s), item_index, n,
                                      exclude_training ? &exclude : nullptr);
        std::vector<int> ids;
        for (const auto& e : top.entries) ids.push_back(e.id);
        total += recall_at_n(ids, *holdouts[s], n);
    }
    return total / static_cast<double>(views.size());
}

// ---- serialization ----

inline nlohmann::ordered_json report_to_json(const EvalReport& report) {
    nlohmann::ordered_json j;
    j["config"] = report.config_echo;
    j["user_count"] = report.user_count;
    j["skipped"] = report.skipped;
    j["cutoffs"] = report.cutoffs;
    for (const auto& name : channel_names()) {
        auto it = report.channels.find(name);
        if (it == report.channels.end()) continue;
        nlohmann::ordered_json jc;
        for (const auto& [n, m] : it->second) {
            nlohmann::ordered_json jm;
            jm["recall"] = m.recall;
            jm["ndcg"] = m.ndcg;
            jm["hit_rate"] = m.hit_rate;
            jc["@" + std::to_string(n)] = jm;
        }
        j["channels"][name] = jc;
    }
    j["diagnostics"] = {{"ui_align", report.ui_align},
                        {"uu_uniform", report.uu_uniform},
                        {"ii_uniform", report.ii_uniform}};
    return j;
}

inline EvalReport report_from_json(const nlohmann::json& j) {
    EvalReport report;
    report.config_echo = j.at("config").get<std::string>();
    report.user_count = j.at("user_count").get<std::size_t>();
    report.skipped = j.at("skipped").get<std::size_t>();
    report.cutoffs = j.at("cutoffs").get<std::vector<std::size_t>>();
    for (const auto& [name, jc] : j.at("channels").items())
        for (const auto& [key, jm] : jc.items()) {
            const std::size_t n = std::stoul(key.substr(1));
            ChannelMetrics m;
            m.recall = jm.at("recall").get<double>();
            m.ndcg = jm.at("ndcg").get<double>();
            m.hit_rate = jm.at("hit_rate").get<double>();
            report.channels[name][n] = m;
        }
    const auto& jd = j.at("diagnostics");
    report.ui_align = jd.at("ui_align").get<double>();
    report.uu_uniform = jd.at("uu_uniform").get<double>();
    report.ii_uniform = jd.at("ii_uniform").get<double>();
    return report;
}

namespace detail {

inline std::string fixed(double v, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
    return buf;
}

}  // namespace detail

// Aligned text table; scale 1 prints fractions, 100 the x100 view.
inline std::string report_table(const EvalReport& report, double scale) {
    std::ostringstream out;
    const int digits = scale == 1.0 ? 6 : 4;
    out << "channel";
    for (std::size_t n : report.cutoffs)
        out << "  recall@" << n << "  ndcg@" << n << "  hr@" << n;
    out << "\n";
    for (const auto& name : channel_names()) {
        auto it = report.channels.find(name);
        if (it == report.channels.end()) continue;
        out << name;
        for (std::size_t n : report.cutoffs) {
            const auto& m = it->second.at(n);
            out << "  " << detail::fixed(m.recall * scale, digits) << "  "
                << detail::fixed(m.ndcg * scale, digits) << "  "
                << detail::fixed(m.hit_rate * scale, digits);
        }
        out << "\n";
    }
    out << "diagnostics  ui_align=" << detail::fixed(report.ui_align, 6)
        << "  uu_uniform=" << detail::fixed(report.uu_uniform, 6)
        << "  ii_uniform=" << detail::fixed(report.ii_uniform, 6) << "\n";
    return out.str();
}

// ---- ablation grid ----

inline const std::vector<std::string>& ablation_settings() {
    static const std::vector<std::string> names{"base", "ui",    "uu",    "ii",
                                                "ui+uu", "ui+ii", "uu+ii", "ui+uu+ii"};
    return names;
}

inline bool setting_has(const std::string& setting, const std::string& channel) {
    if (setting == "base") return false;
    std::size_t pos = 0;
    while (pos < setting.size()) {
        std::size_t next = setting.find('+', pos);
        if (next == std::string::npos) next = setting.size();
        if (setting.substr(pos, next - pos) == channel) return true;
        pos = next + 1;
    }
    return false;
}

// One Markdown row per (setting, channel); fractions then a x100 view.
inline std::string ablation_table(const std::map<std::string, EvalReport>& results) {
    if (!results.count("base")) throw InvalidStateError("ablation_table: missing base setting");
    std::ostringstream out;
    auto emit = [&](double scale, int digits, const char* title) {
        out << "## " << title << "\n\n";
        out << "| setting | ui | uu | ii | channel |";
        const auto& cutoffs = results.at("base").cutoffs;
        for (std::size_t n : cutoffs)
            out << " recall@" << n << " | ndcg@" << n << " | hr@" << n << " |";
        out << "\n|---|---|---|---|---|";
        for (std::size_t i = 0; i < cutoffs.size() * 3; ++i) out << "---|";
        out << "\n";
        for (const auto& setting : ablation_settings()) {
            auto it = results.find(setting);
            if (it == results.end()) continue;
            for (const auto& channel : channel_names()) {
                out << "| " << setting << " | " << (setting_has(setting, "ui") ? "x" : " ")
                    << " | " << (setting_has(setting, "uu") ? "x" : " ") << " | "
                    << (setting_has(setting, "ii") ? "x" : " ") << " | " << channel << " |";
                for (std::size_t n : cutoffs) {
                    const auto& m = it->second.channels.at(channel).at(n);
                    out << " " << detail::fixed(m.recall * scale, digits) << " | "
                        << detail::fixed(m.ndcg * scale, digits) << " | "
                        << detail::fixed(m.hit_rate * scale, digits) << " |";
                }
                out << "\n";
            }
        }
        out << "\n";
    };
    emit(1.0, 9, "Metrics (fractions)");
    emit(100.0, 7, "Metrics (x100)");
    return out.str();
}

// Reads the fraction table back: "setting|channel" -> metric name -> value.
inline std::map<std::string, std::map<std::string, double>> parse_ablation_markdown(
    const std::string& markdown) {
    std::map<std::string, std::map<std::string, double>> out;
    std::istringstream in(markdown);
    std::string line;
    bool in_fraction_table = false;
    std::vector<std::string> metric_cols;
    while (std::getline(in, line)) {
        if (line.rfind("## ", 0) == 0) {
            in_fraction_table = line.find("fractions") != std::string::npos;
            metric_cols.clear();
            continue;
        }
        if (!in_fraction_table || line.empty() || line[0] != '|') continue;
        if (line.find("---") != std::string::npos) continue;
        std::vector<std::string> cells;
        std::size_t pos = 1;
        while (pos < line.size()) {
            std::size_t next = line.find('|', pos);
            if (next == std::string::npos) break;
            std::string cell = line.substr(pos, next - pos);
            const auto a = cell.find_first_not_of(' ');
            const auto b = cell.find_last_not_of(' ');
            cells.push_back(a == std::string::npos ? "" : cell.substr(a, b - a + 1));
            pos = next + 1;
        }
        if (metric_cols.empty()) {
            for (std::size_t c = 5; c < cells.size(); ++c) metric_cols.push_back(cells[c]);
            continue;
        }
        if (cells.size() < 5 + metric_cols.size()) continue;
        const std::string key = cells[0] + "|" + cells[4];
        for (std::size_t c = 0; c < metric_cols.size(); ++c)
            out[key][metric_cols[c]] = std::stod(cells[5 + c]);
    }
    return out;
}

}  // namespace mic
