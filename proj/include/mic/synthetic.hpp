#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "mic/dataset.hpp"
#include "mic/error.hpp"
#include "mic/rng.hpp"

namespace mic {

// Planted-cluster corpus: desk-scale stand-in for the real benchmark data,
// with known user/item cluster structure for mining and channel tests.
struct SyntheticConfig {
    std::size_t num_clusters = 4;
    std::size_t users_per_cluster = 100;
    std::size_t items_per_cluster = 100;
    double in_cluster_prob = 0.9;
    std::size_t history_len = 20;
};

struct SyntheticData {
    std::vector<Interaction> interactions;
    UserFields user_fields;
    std::unordered_map<std::string, int> user_cluster;
    std::unordered_map<std::string, int> item_cluster;
};

// Each user draws history_len items: from the own cluster with probability
// in_cluster_prob, otherwise uniformly from the other clusters. Gender and
// age tokens are fixed per cluster, and the interaction category column
// carries the item's cluster token (reused as its keyword downstream).
inline SyntheticData gen_synthetic(const SyntheticConfig& cfg, std::uint64_t seed) {
    if (cfg.num_clusters == 0 || cfg.users_per_cluster == 0 || cfg.items_per_cluster == 0 ||
        cfg.history_len == 0)
        throw ConfigError("gen_synthetic: counts must be positive");
    if (!(cfg.in_cluster_prob > 0.5 && cfg.in_cluster_prob <= 1.0))
        throw ConfigError("gen_synthetic: in_cluster_prob must be in (0.5, 1]");

    const std::size_t n_users = cfg.num_clusters * cfg.users_per_cluster;
    const std::size_t n_items = cfg.num_clusters * cfg.items_per_cluster;

    auto user_name = [](std::size_t i) { return "u" + std::to_string(i); };
    auto item_name = [](std::size_t i) { return "i" + std::to_string(i); };

    SyntheticData data;
    for (std::size_t i = 0; i < n_items; ++i)
        data.item_cluster[item_name(i)] = static_cast<int>(i / cfg.items_per_cluster);

    Rng rng(splitmix64(seed ^ 0x5e17));
    for (std::size_t u = 0; u < n_users; ++u) {
        const auto cluster = u / cfg.users_per_cluster;
        const std::string uid = user_name(u);
        data.user_cluster[uid] = static_cast<int>(cluster);
        data.user_fields.by_user[uid] = {"g" + std::to_string(cluster % 2),
                                         "a" + std::to_string(cluster)};
        for (std::size_t t = 0; t < cfg.history_len; ++t) {
            std::size_t item;
            const bool own = cfg.num_clusters == 1 || rng.bernoulli(cfg.in_cluster_prob);
            if (own) {
                item = cluster * cfg.items_per_cluster + rng.uniform_index(cfg.items_per_cluster);
            } else {
                std::size_t off = rng.uniform_index(n_items - cfg.items_per_cluster);
                if (off >= cluster * cfg.items_per_cluster) off += cfg.items_per_cluster;
                item = off;
            }
            Interaction rec;
            rec.user_id = uid;
            rec.item_id = item_name(item);
            rec.timestamp = static_cast<std::int64_t>(t);
            rec.category = "c" + std::to_string(item / cfg.items_per_cluster);
            data.interactions.push_back(std::move(rec));
        }
    }
    return data;
}

inline void write_synthetic(const std::filesystem::path& dir, const SyntheticData& data,
                            const std::string& config_echo) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    {
        std::ofstream out(dir / "interactions.tsv");
        if (!out) throw IoError("cannot write interactions.tsv");
        for (const auto& r : data.interactions)
            out << r.user_id << '\t' << r.item_id << '\t' << r.timestamp << '\t' << r.category
                << '\n';
    }
    {
        std::ofstream out(dir / "user_fields.tsv");
        std::vector<std::string> users;
        users.reserve(data.user_fields.by_user.size());
        for (const auto& [uid, fields] : data.user_fields.by_user) users.push_back(uid);
        std::sort(users.begin(), users.end());
        for (const auto& uid : users) {
            const auto& [gender, age] = data.user_fields.by_user.at(uid);
            out << uid << '\t' << gender << '\t' << age << '\n';
        }
    }
    {
        std::ofstream out(dir / "clusters.tsv");
        std::vector<std::string> keys;
        for (const auto& [id, c] : data.user_cluster) keys.push_back(id);
        std::sort(keys.begin(), keys.end());
        for (const auto& id : keys) out << "user\t" << id << '\t' << data.user_cluster.at(id) << '\n';
        keys.clear();
        for (const auto& [id, c] : data.item_cluster) keys.push_back(id);
        std::sort(keys.begin(), keys.end());
        for (const auto& id : keys) out << "item\t" << id << '\t' << data.item_cluster.at(id) << '\n';
    }
    {
        std::ofstream out(dir / "gen_config.txt");
        out << config_echo;
    }
}

}  // namespace mic
