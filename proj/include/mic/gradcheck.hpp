#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "mic/error.hpp"
#include "mic/param_store.hpp"

namespace mic {

struct GradCheckEntry {
    std::string name;
    double max_rel_err = 0.0;
    std::size_t worst_index = 0;
    bool flagged = false;
};

struct GradCheckReport {
    std::vector<GradCheckEntry> entries;
    double max_rel_err = 0.0;
    bool ok = true;
};

// Compares the analytic gradients produced by loss_fn against central
// finite differences (f(th+eps) - f(th-eps)) / 2 eps elementwise.
//
// loss_fn must evaluate the loss at the store's current values AND write
// the analytic gradients into the store's grad buffers. It is re-invoked
// at perturbed points where only the returned value is used.
inline GradCheckReport grad_check(const std::function<double(ParamStore&)>& loss_fn,
                                  ParamStore& store, double epsilon, double tolerance) {
    if (!(epsilon >= 1e-6 && epsilon <= 1e-3))
        throw ConfigError("grad_check epsilon must be in [1e-6, 1e-3]");

    store.zero_grads();
    const double base = loss_fn(store);
    // Determinism probe: a loss that disagrees with itself makes the
    // finite differences meaningless.
    std::map<std::string, Matrix> analytic_grads;
    for (auto& [name, e] : store.entries) analytic_grads.emplace(name, e.grad);
    store.zero_grads();
    if (loss_fn(store) != base) throw Error("grad_check: loss_fn is not deterministic");

    GradCheckReport report;
    for (auto& [name, e] : store.entries) {
        GradCheckEntry entry;
        entry.name = name;
        const Matrix& agrad = analytic_grads.at(name);
        for (std::size_t i = 0; i < e.value.size(); ++i) {
            const double saved = e.value.data[i];
            e.value.data[i] = saved + epsilon;
            const double up = loss_fn(store);
            e.value.data[i] = saved - epsilon;
            const double down = loss_fn(store);
            e.value.data[i] = saved;
            const double numeric = (up - down) / (2.0 * epsilon);
            const double analytic = agrad.data[i];
            const double denom = std::max(std::abs(numeric), std::abs(analytic));
            const double rel = denom < 1e-12 ? 0.0 : std::abs(numeric - analytic) / denom;
            if (rel > entry.max_rel_err) {
                entry.max_rel_err = rel;
                entry.worst_index = i;
            }
        }
        entry.flagged = entry.max_rel_err > tolerance;
        report.max_rel_err = std::max(report.max_rel_err, entry.max_rel_err);
        if (entry.flagged) report.ok = false;
        report.entries.push_back(std::move(entry));
    }
    // Leave the analytic gradients in place, not the last perturbed ones.
    for (auto& [name, e] : store.entries) e.grad = analytic_grads.at(name);
    return report;
}

// Test-side helper: central finite differences of a scalar function over a
// flat vector, independent of any analytic path.
inline std::vector<double> finite_diff(const std::function<double(const std::vector<double>&)>& f,
                                       std::vector<double> x, double epsilon) {
    std::vector<double> g(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double saved = x[i];
        x[i] = saved + epsilon;
        const double up = f(x);
        x[i] = saved - epsilon;
        const double down = f(x);
        x[i] = saved;
        g[i] = (up - down) / (2.0 * epsilon);
    }
    return g;
}

}  // namespace mic
