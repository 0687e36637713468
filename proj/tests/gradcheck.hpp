#pragma once

// Central finite-difference oracle for the reverse-mode engine. Runs the
// computation in float64; the builder must be a pure function of the leaf
// values (anything random inside must reseed itself per call).

#include <cmath>
#include <functional>
#include <vector>

#include "omoq/tensor.hpp"

namespace gradcheck {

using omoq::Array;
using omoq::Graph;
using omoq::Var;

using BuildFn = std::function<Var<double>(Graph<double>&, std::vector<Var<double>>&)>;

struct Result {
    double max_rel_err = 0.0;
    size_t checked = 0;
};

inline double eval_loss(const std::vector<Array<double>>& values, const BuildFn& fn) {
    std::vector<Var<double>> leaves;
    leaves.reserve(values.size());
    for (const auto& v : values) leaves.emplace_back(v, true);
    Graph<double> g;
    g.recording = false;
    auto loss = fn(g, leaves);
    return loss.value().data[0];
}

inline Result check(const std::vector<Array<double>>& init, const BuildFn& fn,
                    double h = 1e-5) {
    std::vector<Var<double>> leaves;
    leaves.reserve(init.size());
    for (const auto& v : init) leaves.emplace_back(v, true);
    Graph<double> g;
    auto loss = fn(g, leaves);
    g.backward(loss);

    Result res;
    std::vector<Array<double>> values = init;
    for (size_t p = 0; p < init.size(); ++p) {
        for (size_t i = 0; i < init[p].numel(); ++i) {
            const double saved = values[p].data[i];
            values[p].data[i] = saved + h;
            const double up = eval_loss(values, fn);
            values[p].data[i] = saved - h;
            const double down = eval_loss(values, fn);
            values[p].data[i] = saved;
            const double fd = (up - down) / (2.0 * h);
            const double ana = leaves[p].node()->grad_ready ? leaves[p].grad().data[i] : 0.0;
            if (std::fabs(fd) < 1e-7 && std::fabs(ana) < 1e-7) continue; // both zero
            const double rel = std::fabs(ana - fd) / std::max({std::fabs(ana), std::fabs(fd), 1e-7});
            res.max_rel_err = std::max(res.max_rel_err, rel);
            ++res.checked;
        }
    }
    return res;
}

} // namespace gradcheck
