#pragma once

#include <cmath>
#include <map>
#include <string>

#include "mic/error.hpp"
#include "mic/matrix.hpp"
#include "mic/rng.hpp"

namespace mic {

// One named tensor with its gradient buffer and Adam moments.
struct ParamEntry {
    Matrix value;
    Matrix grad;
    Matrix adam_m;
    Matrix adam_v;
    // Embedding tables set this: row 0 is the PAD row, kept at exactly zero
    // and skipped by the optimizer.
    bool freeze_pad_row = false;
};

// Named parameter map. std::map so iteration (checkpoints, grad checks,
// updates) is deterministic.
struct ParamStore {
    std::map<std::string, ParamEntry> entries;
    long step_count = 0;

    Matrix& add(const std::string& name, std::size_t rows, std::size_t cols) {
        if (entries.count(name)) throw Error("duplicate parameter name: " + name);
        ParamEntry e;
        e.value = Matrix(rows, cols);
        e.grad = Matrix(rows, cols);
        e.adam_m = Matrix(rows, cols);
        e.adam_v = Matrix(rows, cols);
        entries.emplace(name, std::move(e));
        return entries.at(name).value;
    }

    ParamEntry& at(const std::string& name) {
        auto it = entries.find(name);
        if (it == entries.end()) throw Error("unknown parameter: " + name);
        return it->second;
    }
    const ParamEntry& at(const std::string& name) const {
        auto it = entries.find(name);
        if (it == entries.end()) throw Error("unknown parameter: " + name);
        return it->second;
    }

    Matrix& value(const std::string& name) { return at(name).value; }
    const Matrix& value(const std::string& name) const { return at(name).value; }
    Matrix& grad(const std::string& name) { return at(name).grad; }

    void zero_grads() {
        for (auto& [name, e] : entries) e.grad.fill(0.0);
    }

    std::size_t total_values() const {
        std::size_t n = 0;
        for (const auto& [name, e] : entries) n += e.value.size();
        return n;
    }
};

// Entries i.i.d. uniform on [-sqrt(6/(rows+cols)), +sqrt(6/(rows+cols))].
inline Matrix init_xavier(std::size_t rows, std::size_t cols, Rng& rng) {
    if (rows == 0 || cols == 0) throw ShapeError("init_xavier with zero dimension");
    const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
    Matrix m(rows, cols);
    for (double& x : m.data) x = rng.uniform(-limit, limit);
    return m;
}

inline Matrix init_xavier(std::size_t rows, std::size_t cols, std::uint64_t seed) {
    Rng rng(seed);
    return init_xavier(rows, cols, rng);
}

struct AdamConfig {
    double lr = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Standard bias-corrected Adam over every entry. Gradients are left
// untouched; the caller zeroes them between steps.
inline void adam_step(ParamStore& store, const AdamConfig& cfg = {}) {
    store.step_count += 1;
    const double t = static_cast<double>(store.step_count);
    const double bc1 = 1.0 - std::pow(cfg.beta1, t);
    const double bc2 = 1.0 - std::pow(cfg.beta2, t);
    for (auto& [name, e] : store.entries) {
        const std::size_t begin = e.freeze_pad_row ? e.value.cols : 0;
        for (std::size_t i = begin; i < e.value.size(); ++i) {
            const double g = e.grad.data[i];
            if (!std::isfinite(g))
                throw DivergedError("non-finite gradient in parameter " + name);
            double& m = e.adam_m.data[i];
            double& v = e.adam_v.data[i];
            m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
            v = cfg.beta2 * v + (1.0 - cfg.beta2) * g * g;
            const double m_hat = m / bc1;
            const double v_hat = v / bc2;
            e.value.data[i] -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
        }
    }
}

}  // namespace mic
