#pragma once

#include <charconv>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "mic/channels.hpp"
#include "mic/dataset.hpp"
#include "mic/error.hpp"
#include "mic/evalkit.hpp"
#include "mic/synthetic.hpp"
#include "mic/trainer.hpp"

namespace mic {

// Every tunable in one flat struct. Parsed from key=value files, overridden
// by repeated --set flags; unknown keys are errors.
struct Options {
    // encoder
    std::size_t dim = 32;  // desk-scale default; 128 reproduces the full-scale setting
    std::string hidden;    // comma list, empty -> {2*dim, dim}
    bool share_item_table = true;
    // perturbation
    double field_mask_prob = 0.15;
    std::size_t max_masked_fields = 0;
    double dropout = 0.2;
    // mining
    bool mining = true;
    std::size_t k_neighbors = 5;
    std::size_t num_clusters = 20;
    std::size_t hard_negatives_per_anchor = 5;
    std::size_t refresh_every = 1000;
    std::size_t kmeans_max_iters = 50;
    // objective
    double temperature = 0.1;
    double lambda = 0.7;
    double w_uv = 1.0, w_uu = 1.0, w_vv = 1.0;
    bool strict_denominator = false;
    bool uv_use_hard_negatives = false;
    bool average_mined_positives = true;
    // trainer
    std::size_t batch_size = 128;  // 1024 at full scale
    double lr = 0.001;
    std::size_t epochs = 30;
    std::size_t eval_every = 0;
    std::size_t patience = 3;
    std::size_t recall_n = 20;
    // channels
    std::size_t n_similar = 50;
    std::size_t m_per_item = 20;
    bool exclude_training_items = true;
    std::string agg = "sum";
    // prepare / split
    double train_ratio = 0.8, valid_ratio = 0.1, test_ratio = 0.1;
    double prefix_fraction = 0.8;
    std::size_t min_user_len = 5, min_item_freq = 5;
    double max_malformed_fraction = 0.01;
    // synthetic corpus
    std::size_t clusters = 4;
    std::size_t users_per_cluster = 100;
    std::size_t items_per_cluster = 100;
    double in_cluster_prob = 0.9;
    std::size_t history_len = 20;
    // misc
    std::uint64_t seed = 42;
    std::size_t threads = 1;
};

namespace detail {

inline double parse_real(const std::string& key, const std::string& value) {
    try {
        std::size_t used = 0;
        const double v = std::stod(value, &used);
        if (used != value.size()) throw ConfigError("");
        return v;
    } catch (...) {
        throw ConfigError("config key " + key + ": expected a real number, got '" + value + "'");
    }
}

inline std::uint64_t parse_count(const std::string& key, const std::string& value) {
    std::uint64_t v = 0;
    const auto [p, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
    if (ec != std::errc() || p != value.data() + value.size())
        throw ConfigError("config key " + key + ": expected a non-negative integer, got '" +
                          value + "'");
    return v;
}

inline bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "true" || value == "1" || value == "on") return true;
    if (value == "false" || value == "0" || value == "off") return false;
    throw ConfigError("config key " + key + ": expected true/false, got '" + value + "'");
}

inline std::string format_real(double v) {
    char buf[64];
    const auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, p);
}

}  // namespace detail

inline void apply_kv(Options& opt, const std::string& key, const std::string& value) {
    using detail::parse_bool;
    using detail::parse_count;
    using detail::parse_real;
    if (key == "dim") opt.dim = parse_count(key, value);
    else if (key == "hidden") opt.hidden = value;
    else if (key == "share_item_table") opt.share_item_table = parse_bool(key, value);
    else if (key == "field_mask_prob") opt.field_mask_prob = parse_real(key, value);
    else if (key == "max_masked_fields") opt.max_masked_fields = parse_count(key, value);
    else if (key == "dropout") opt.dropout = parse_real(key, value);
    else if (key == "mining") opt.mining = parse_bool(key, value);
    else if (key == "k_neighbors") opt.k_neighbors = parse_count(key, value);
    else if (key == "num_clusters") opt.num_clusters = parse_count(key, value);
    else if (key == "hard_negatives_per_anchor") opt.hard_negatives_per_anchor = parse_count(key, value);
    else if (key == "refresh_every") opt.refresh_every = parse_count(key, value);
    else if (key == "kmeans_max_iters") opt.kmeans_max_iters = parse_count(key, value);
    else if (key == "temperature") opt.temperature = parse_real(key, value);
    else if (key == "lambda") opt.lambda = parse_real(key, value);
    else if (key == "w_uv") opt.w_uv = parse_real(key, value);
    else if (key == "w_uu") opt.w_uu = parse_real(key, value);
    else if (key == "w_vv") opt.w_vv = parse_real(key, value);
    else if (key == "strict_denominator") opt.strict_denominator = parse_bool(key, value);
    else if (key == "uv_use_hard_negatives") opt.uv_use_hard_negatives = parse_bool(key, value);
    else if (key == "average_mined_positives") opt.average_mined_positives = parse_bool(key, value);
    else if (key == "batch_size") opt.batch_size = parse_count(key, value);
    else if (key == "lr") opt.lr = parse_real(key, value);
    else if (key == "epochs") opt.epochs = parse_count(key, value);
    else if (key == "eval_every") opt.eval_every = parse_count(key, value);
    else if (key == "patience") opt.patience = parse_count(key, value);
    else if (key == "recall_n") opt.recall_n = parse_count(key, value);
    else if (key == "n_similar") opt.n_similar = parse_count(key, value);
    else if (key == "m_per_item") opt.m_per_item = parse_count(key, value);
    else if (key == "exclude_training_items") opt.exclude_training_items = parse_bool(key, value);
    else if (key == "agg") {
        ChannelConfig::parse_agg(value);
        opt.agg = value;
    }
    else if (key == "train_ratio") opt.train_ratio = parse_real(key, value);
    else if (key == "valid_ratio") opt.valid_ratio = parse_real(key, value);
    else if (key == "test_ratio") opt.test_ratio = parse_real(key, value);
    else if (key == "prefix_fraction") opt.prefix_fraction = parse_real(key, value);
    else if (key == "min_user_len") opt.min_user_len = parse_count(key, value);
    else if (key == "min_item_freq") opt.min_item_freq = parse_count(key, value);
    else if (key == "max_malformed_fraction") opt.max_malformed_fraction = parse_real(key, value);
    else if (key == "clusters") opt.clusters = parse_count(key, value);
    else if (key == "users_per_cluster") opt.users_per_cluster = parse_count(key, value);
    else if (key == "items_per_cluster") opt.items_per_cluster = parse_count(key, value);
    else if (key == "in_cluster_prob") opt.in_cluster_prob = parse_real(key, value);
    else if (key == "history_len") opt.history_len = parse_count(key, value);
    else if (key == "seed") opt.seed = parse_count(key, value);
    else if (key == "threads") opt.threads = parse_count(key, value);
    else throw ConfigError("unknown config key: " + key);
}

inline void apply_kv_line(Options& opt, const std::string& line) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("expected key=value, got '" + line + "'");
    apply_kv(opt, detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
}

inline void load_config_file(Options& opt, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file: " + path);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string t = detail::trim(line);
        if (t.empty() || t[0] == '#') continue;
        try {
            apply_kv_line(opt, t);
        } catch (const ConfigError& e) {
            throw ConfigError(path + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
}

// Canonical echo: every key, fixed order, shortest round-trip numerals.
inline std::string config_echo(const Options& o) {
    using detail::format_real;
    std::ostringstream out;
    auto put = [&](const char* k, const std::string& v) { out << k << '=' << v << '\n'; };
    auto put_c = [&](const char* k, std::uint64_t v) { put(k, std::to_string(v)); };
    auto put_r = [&](const char* k, double v) { put(k, format_real(v)); };
    auto put_b = [&](const char* k, bool v) { put(k, v ? "true" : "false"); };
    put_c("dim", o.dim);
    put("hidden", o.hidden);
    put_b("share_item_table", o.share_item_table);
    put_r("field_mask_prob", o.field_mask_prob);
    put_c("max_masked_fields", o.max_masked_fields);
    put_r("dropout", o.dropout);
    put_b("mining", o.mining);
    put_c("k_neighbors", o.k_neighbors);
    put_c("num_clusters", o.num_clusters);
    put_c("hard_negatives_per_anchor", o.hard_negatives_per_anchor);
    put_c("refresh_every", o.refresh_every);
    put_c("kmeans_max_iters", o.kmeans_max_iters);
    put_r("temperature", o.temperature);
    put_r("lambda", o.lambda);
    put_r("w_uv", o.w_uv);
    put_r("w_uu", o.w_uu);
    put_r("w_vv", o.w_vv);
    put_b("strict_denominator", o.strict_denominator);
    put_b("uv_use_hard_negatives", o.uv_use_hard_negatives);
    put_b("average_mined_positives", o.average_mined_positives);
    put_c("batch_size", o.batch_size);
    put_r("lr", o.lr);
    put_c("epochs", o.epochs);
    put_c("eval_every", o.eval_every);
    put_c("patience", o.patience);
    put_c("recall_n", o.recall_n);
    put_c("n_similar", o.n_similar);
    put_c("m_per_item", o.m_per_item);
    put_b("exclude_training_items", o.exclude_training_items);
    put("agg", o.agg);
    put_r("train_ratio", o.train_ratio);
    put_r("valid_ratio", o.valid_ratio);
    put_r("test_ratio", o.test_ratio);
    put_r("prefix_fraction", o.prefix_fraction);
    put_c("min_user_len", o.min_user_len);
    put_c("min_item_freq", o.min_item_freq);
    put_r("max_malformed_fraction", o.max_malformed_fraction);
    put_c("clusters", o.clusters);
    put_c("users_per_cluster", o.users_per_cluster);
    put_c("items_per_cluster", o.items_per_cluster);
    put_r("in_cluster_prob", o.in_cluster_prob);
    put_c("history_len", o.history_len);
    put_c("seed", o.seed);
    put_c("threads", o.threads);
    return out.str();
}

// ---- conversions into module configs ----

inline EncoderConfig encoder_config(const Options& o) {
    EncoderConfig cfg;
    cfg.dim = o.dim;
    cfg.share_item_table = o.share_item_table;
    if (!o.hidden.empty()) {
        for (const auto& part : detail::split_line(o.hidden, ',')) {
            const std::string t = detail::trim(part);
            if (t.empty()) continue;
            cfg.hidden_sizes.push_back(detail::parse_count("hidden", t));
        }
        if (cfg.hidden_sizes.empty()) throw ConfigError("hidden: no layer sizes parsed");
    }
    return cfg;
}

inline TrainConfig train_config(const Options& o) {
    TrainConfig cfg;
    cfg.batch_size = o.batch_size;
    cfg.lr = o.lr;
    cfg.epochs = o.epochs;
    cfg.seed = o.seed;
    cfg.eval_every = o.eval_every;
    cfg.patience = o.patience;
    cfg.recall_n = o.recall_n;
    cfg.temperature = o.temperature;
    cfg.mining_enabled = o.mining;
    cfg.weights = LossWeights{o.lambda, o.w_uv, o.w_uu, o.w_vv};
    cfg.perturb = PerturbConfig{o.field_mask_prob, o.max_masked_fields, o.dropout};
    cfg.mining = MiningConfig{o.k_neighbors, o.num_clusters, o.hard_negatives_per_anchor,
                              o.refresh_every, o.kmeans_max_iters};
    cfg.encoder = encoder_config(o);
    return cfg;
}

inline ChannelConfig channel_config(const Options& o) {
    ChannelConfig cfg;
    cfg.n_similar = o.n_similar;
    cfg.m_per_item = o.m_per_item;
    cfg.exclude_training_items = o.exclude_training_items;
    cfg.agg = ChannelConfig::parse_agg(o.agg);
    return cfg;
}

inline EvalOptions eval_options(const Options& o) {
    EvalOptions opt;
    opt.channel = channel_config(o);
    opt.threads = o.threads;
    return opt;
}

inline SplitOptions split_options(const Options& o) {
    return SplitOptions{o.train_ratio, o.valid_ratio, o.test_ratio, o.prefix_fraction};
}

inline BuildOptions build_options(const Options& o) {
    return BuildOptions{o.min_user_len, o.min_item_freq};
}

inline SyntheticConfig synthetic_config(const Options& o) {
    return SyntheticConfig{o.clusters, o.users_per_cluster, o.items_per_cluster, o.in_cluster_prob,
                           o.history_len};
}

}  // namespace mic
