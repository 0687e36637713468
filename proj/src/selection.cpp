#include "omoq/selection.hpp"

#include <algorithm>
#include <cmath>

#include "omoq/errors.hpp"

namespace omoq {

double rmse(std::span<const double> est, std::span<const double> tgt) {
    require(!est.empty(), "rmse: empty input");
    require(est.size() == tgt.size(), "rmse: length mismatch");
    double acc = 0.0;
    for (size_t i = 0; i < est.size(); ++i) {
        const double d = est[i] - tgt[i];
        acc += d * d;
    }
    return std::sqrt(acc / static_cast<double>(est.size()));
}

namespace {

// Returns false when either input is (numerically) constant.
bool pearson_impl(std::span<const double> x, std::span<const double> y, double& out) {
    const size_t n = x.size();
    double mx = 0.0, my = 0.0;
    for (size_t i = 0; i < n; ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (size_t i = 0; i < n; ++i) {
        const double dx = x[i] - mx, dy = y[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    const double denom = std::sqrt(sxx) * std::sqrt(syy);
    if (denom < 1e-12) return false;
    out = std::clamp(sxy / denom, -1.0, 1.0);
    return true;
}

} // namespace

double pearson(std::span<const double> x, std::span<const double> y) {
    require(x.size() == y.size(), "pearson: length mismatch");
    require(x.size() >= 2, "pearson: need at least two samples");
    double r = 0.0;
    if (!pearson_impl(x, y, r))
        fail("pearson: undefined for constant input");
    return r;
}

double pearson_or(std::span<const double> x, std::span<const double> y, double fallback) {
    if (x.size() != y.size() || x.size() < 2) return fallback;
    double r = fallback;
    pearson_impl(x, y, r);
    return r;
}

double overall_distance(const SplitMetrics& m) {
    auto mean3 = [](const std::array<double, 3>& v) { return (v[0] + v[1] + v[2]) / 3.0; };
    auto spread3 = [](const std::array<double, 3>& v) {
        return *std::max_element(v.begin(), v.end()) - *std::min_element(v.begin(), v.end());
    };
    const double rho_hat = std::hypot(1.0 - mean3(m.rho), spread3(m.rho));
    const double loss_hat = std::hypot(mean3(m.rmse), spread3(m.rmse));
    return std::hypot(rho_hat, loss_hat);
}

SelectionRow select_best(const std::vector<SelectionRow>& rows) {
    require(!rows.empty(), "select: empty metric stream");
    const SelectionRow* best = &rows[0];
    for (const auto& r : rows) {
        if (r.dist < best->dist ||
            (r.dist == best->dist &&
             (r.epoch < best->epoch || (r.epoch == best->epoch && r.seed < best->seed))))
            best = &r;
    }
    return *best;
}

} // namespace omoq
