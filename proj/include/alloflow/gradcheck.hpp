#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "alloflow/net.hpp"

namespace alloflow {

struct GradCheckReport {
    bool pass = true;
    double max_rel_err = 0.0;
    std::size_t worst_param = 0;
    std::size_t worst_trial = 0;
    std::size_t trials = 0;

    std::string to_string() const {
        std::ostringstream os;
        os << (pass ? "PASS" : "FAIL") << " max_rel_err=" << max_rel_err << " (param "
           << worst_param << ", trial " << worst_trial << ", " << trials << " trials)";
        return os.str();
    }
};

// Relative error with a unit floor: |a-b| / max(|a|, |b|, 1). Central
// differences put ~1e-10 of absolute noise on O(1) losses, so the floor keeps
// near-zero gradients from drowning the comparison while large gradients are
// still compared relatively.
inline double rel_err(double a, double b) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1.0});
}

// Checks an analytic gradient against central finite differences, parameter
// by parameter. Per trial, `setup(trial)` prepares an instance; `loss(net)`
// must be a deterministic function of net.params; `analytic(net, buf)`
// accumulates the gradient of that same loss into buf.
struct GradCheckProblem {
    std::function<VelocityNet(std::size_t trial)> setup;
    std::function<double(const VelocityNet&)> loss;
    std::function<void(const VelocityNet&, GradBuffer&)> analytic;
};

inline GradCheckReport gradcheck(const GradCheckProblem& problem, std::size_t trials, double h,
                                 double tol) {
    GradCheckReport report;
    report.trials = trials;
    for (std::size_t trial = 0; trial < trials; ++trial) {
        VelocityNet net = problem.setup(trial);
        GradBuffer buf(net.param_count());
        problem.analytic(net, buf);

        for (std::size_t p = 0; p < net.param_count(); ++p) {
            const double saved = net.params[p];
            net.params[p] = saved + h;
            const double lp = problem.loss(net);
            net.params[p] = saved - h;
            const double lm = problem.loss(net);
            net.params[p] = saved;
            if (!std::isfinite(lp) || !std::isfinite(lm))
                throw std::runtime_error("gradcheck: non-finite loss at param " + std::to_string(p));
            const double fd = (lp - lm) / (2.0 * h);
            const double e = rel_err(buf.grads[p], fd);
            if (e > report.max_rel_err) {
                report.max_rel_err = e;
                report.worst_param = p;
                report.worst_trial = trial;
            }
        }
    }
    report.pass = report.max_rel_err < tol;
    return report;
}

}  // namespace alloflow
