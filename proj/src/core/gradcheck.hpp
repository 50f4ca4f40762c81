#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "graph.hpp"

namespace chorus {

// Central finite differences against the tape's analytic gradients.
// Runs in 64-bit; 32-bit finite differences are too noisy to be useful.

using GradCheckLossFn = std::function<TensorPtr<double>(Graph<double>&)>;
using NamedParams = std::vector<std::pair<std::string, TensorPtr<double>>>;

struct GradCheckEntry {
    std::string name;
    double max_rel_err = 0.0;
};

struct GradCheckReport {
    std::vector<GradCheckEntry> entries;
    double worst = 0.0;

    bool passed(double tol) const {
        return std::isfinite(worst) && worst <= tol;
    }
};

inline std::map<std::string, std::vector<double>>
analytic_gradients(const GradCheckLossFn& f, const NamedParams& params) {
    for (auto& [name, p] : params) {
        p->requires_grad = true;
        p->grad.clear();
    }
    Graph<double> g;
    auto loss = f(g);
    g.backward(loss);
    std::map<std::string, std::vector<double>> out;
    for (auto& [name, p] : params) {
        p->ensure_grad();
        out[name].assign(p->grad.begin(), p->grad.end());
        p->grad.clear();
    }
    return out;
}

inline std::map<std::string, std::vector<double>>
fd_gradients(const GradCheckLossFn& f, const NamedParams& params,
             double eps = 1e-3) {
    auto eval = [&]() {
        Graph<double> g(/*record=*/false);
        return f(g)->data[0];
    };
    std::map<std::string, std::vector<double>> out;
    for (auto& [name, p] : params) {
        std::vector<double> fd(p->data.size());
        for (size_t i = 0; i < p->data.size(); ++i) {
            const double saved = p->data[i];
            auto at = [&](double h) {
                p->data[i] = saved + h;
                return eval();
            };
            // fourth-order central stencil: truncation O(eps^4)
            const double d1 = at(eps) - at(-eps);
            const double d2 = at(2 * eps) - at(-2 * eps);
            p->data[i] = saved;
            fd[i] = (8.0 * d1 - d2) / (12.0 * eps);
        }
        out[name] = std::move(fd);
    }
    return out;
}

// Relative error with the finite-difference value as reference. The floor
// keeps FD noise on near-zero entries from dominating the report.
inline GradCheckReport
compare_gradients(const std::map<std::string, std::vector<double>>& analytic,
                  const std::map<std::string, std::vector<double>>& fd) {
    GradCheckReport report;
    for (auto& [name, fdv] : fd) {
        auto it = analytic.find(name);
        if (it == analytic.end() || it->second.size() != fdv.size())
            throw UsageError("compare_gradients: mismatch for " + name);
        double gscale = 1.0;
        for (double v : fdv) gscale = std::max(gscale, std::abs(v));
        GradCheckEntry e;
        e.name = name;
        for (size_t i = 0; i < fdv.size(); ++i) {
            const double a = it->second[i];
            const double denom = std::max(std::abs(fdv[i]), 1e-4 * gscale);
            double rel = std::abs(a - fdv[i]) / denom;
            if (!std::isfinite(rel)) rel = std::numeric_limits<double>::infinity();
            e.max_rel_err = std::max(e.max_rel_err, rel);
        }
        report.worst = std::max(report.worst, e.max_rel_err);
        report.entries.push_back(std::move(e));
    }
    return report;
}

inline GradCheckReport grad_check(const GradCheckLossFn& f,
                                  const NamedParams& params,
                                  double eps = 1e-3) {
    auto a = analytic_gradients(f, params);
    auto fd = fd_gradients(f, params, eps);
    return compare_gradients(a, fd);
}

} // namespace chorus
