#include "omoq/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include <boost/math/distributions/students_t.hpp>

#include "omoq/csv.hpp"
#include "omoq/errors.hpp"
#include "omoq/selection.hpp"

namespace omoq {

std::vector<ScoredPrediction> load_predictions_csv(const std::string& path) {
    const auto table = csv::read_file(path);
    const size_t c_file = table.column("file");
    const size_t c_method = table.column("method");
    const size_t c_beta = table.column("beta");
    const size_t c_class = table.column("class");
    const size_t c_omos = table.column("omos");
    const bool has_smos = table.has_column("smos");
    const size_t c_smos = has_smos ? table.column("smos") : 0;

    std::vector<ScoredPrediction> preds;
    preds.reserve(table.rows.size());
    for (const auto& row : table.rows) {
        ScoredPrediction p;
        p.file = row[c_file];
        p.method = row[c_method];
        p.beta = csv::parse_double(row[c_beta], "beta");
        p.signal_class = row[c_class];
        p.omos = csv::parse_double(row[c_omos], "omos");
        require(p.beta > 0.0, "predictions: beta must be positive (file " + p.file + ")");
        if (has_smos && !row[c_smos].empty()) {
            p.smos = csv::parse_double(row[c_smos], "smos");
            p.has_smos = true;
        }
        preds.push_back(std::move(p));
    }
    return preds;
}

MeansTable aggregate(const std::vector<ScoredPrediction>& preds, const ExclusionRule& excl) {
    std::set<std::string> method_set, class_set;
    for (const auto& p : preds) {
        method_set.insert(p.method);
        class_set.insert(p.signal_class);
    }
    require(!method_set.empty(), "aggregate: no predictions");

    MeansTable t;
    t.classes.assign(class_set.begin(), class_set.end());
    std::vector<std::string> methods(method_set.begin(), method_set.end());

    std::map<std::string, size_t> midx, cidx;
    for (size_t i = 0; i < methods.size(); ++i) midx[methods[i]] = i;
    for (size_t j = 0; j < t.classes.size(); ++j) cidx[t.classes[j]] = j;

    std::vector<std::vector<double>> sum(methods.size(), std::vector<double>(t.classes.size(), 0.0));
    std::vector<std::vector<size_t>> cnt(methods.size(), std::vector<size_t>(t.classes.size(), 0));
    std::vector<double> osum(methods.size(), 0.0);
    std::vector<size_t> ocnt(methods.size(), 0);

    for (const auto& p : preds) {
        if (!excl.keep(p.beta)) continue;
        const size_t i = midx[p.method], j = cidx[p.signal_class];
        sum[i][j] += p.omos;
        cnt[i][j] += 1;
        osum[i] += p.omos;
        ocnt[i] += 1;
    }

    for (size_t i = 0; i < methods.size(); ++i)
        if (ocnt[i] == 0)
            fail("aggregate: method '" + methods[i] + "' has no rows left after exclusions");

    // order methods by overall mean, descending
    std::vector<size_t> order(methods.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
        const double ma = osum[a] / static_cast<double>(ocnt[a]);
        const double mb = osum[b] / static_cast<double>(ocnt[b]);
        if (ma != mb) return ma > mb;
        return methods[a] < methods[b];
    });

    for (size_t oi : order) {
        t.methods.push_back(methods[oi]);
        t.overall.push_back(osum[oi] / static_cast<double>(ocnt[oi]));
        t.counts.push_back(ocnt[oi]);
        std::vector<double> row(t.classes.size());
        for (size_t j = 0; j < t.classes.size(); ++j)
            row[j] = cnt[oi][j] ? sum[oi][j] / static_cast<double>(cnt[oi][j])
                                : std::numeric_limits<double>::quiet_NaN();
        t.cells.push_back(std::move(row));
    }
    return t;
}

std::map<std::string, std::map<double, double>> means_by_beta(
    const std::vector<ScoredPrediction>& preds) {
    std::map<std::string, std::map<double, std::pair<double, size_t>>> acc;
    for (const auto& p : preds) {
        auto& cell = acc[p.method][p.beta];
        cell.first += p.omos;
        cell.second += 1;
    }
    std::map<std::string, std::map<double, double>> out;
    for (const auto& [method, per_beta] : acc)
        for (const auto& [beta, cell] : per_beta)
            out[method][beta] = cell.first / static_cast<double>(cell.second);
    return out;
}

double t_test_p_value(double t, double df) {
    require(df > 0.0, "ttest: degrees of freedom must be positive");
    boost::math::students_t dist(df);
    const double tail = boost::math::cdf(boost::math::complement(dist, std::fabs(t)));
    return std::min(1.0, 2.0 * tail);
}

std::vector<MethodComparison> ttest_matrix(const std::vector<ScoredPrediction>& preds,
                                           const TTestConfig& cfg) {
    std::map<std::string, std::vector<double>> samples;
    for (const auto& p : preds) {
        if (!cfg.exclusions.keep(p.beta)) continue;
        samples[p.method].push_back(p.omos);
    }
    require(!samples.empty(), "ttest: no predictions after exclusions");
    for (const auto& [m, xs] : samples)
        if (xs.size() < 2)
            fail("ttest: method '" + m + "' has fewer than two samples");

    struct Moments {
        double mean, var; // unbiased variance
        size_t n;
    };
    std::map<std::string, Moments> mom;
    for (const auto& [m, xs] : samples) {
        double mean = 0.0;
        for (double v : xs) mean += v;
        mean /= static_cast<double>(xs.size());
        double var = 0.0;
        for (double v : xs) var += (v - mean) * (v - mean);
        var /= static_cast<double>(xs.size() - 1);
        mom[m] = {mean, var, xs.size()};
    }

    std::vector<std::string> methods;
    for (const auto& [m, _] : samples) methods.push_back(m);

    constexpr double kVarEps = 1e-24;
    std::vector<MethodComparison> out;
    for (size_t i = 0; i < methods.size(); ++i) {
        for (size_t j = i; j < methods.size(); ++j) {
            const auto& a = mom[methods[i]];
            const auto& b = mom[methods[j]];
            MethodComparison c;
            c.method_a = methods[i];
            c.method_b = methods[j];
            c.n_a = a.n;
            c.n_b = b.n;
            c.mean_diff = a.mean - b.mean;
            const double na = static_cast<double>(a.n), nb = static_cast<double>(b.n);
            double se2, df;
            if (cfg.welch) {
                const double va = a.var / na, vb = b.var / nb;
                se2 = va + vb;
                df = se2 > 0.0
                         ? se2 * se2 / (va * va / (na - 1.0) + vb * vb / (nb - 1.0))
                         : na + nb - 2.0;
            } else {
                const double sp2 =
                    ((na - 1.0) * a.var + (nb - 1.0) * b.var) / (na + nb - 2.0);
                se2 = sp2 * (1.0 / na + 1.0 / nb);
                df = na + nb - 2.0;
            }
            if (se2 < kVarEps) {
                // Both samples constant: equal means cannot be rejected unless
                // the means themselves differ.
                c.degenerate = true;
                c.df = na + nb - 2.0;
                if (c.mean_diff == 0.0) {
                    c.t = 0.0;
                    c.p = 1.0;
                } else {
                    c.t = c.mean_diff > 0 ? std::numeric_limits<double>::infinity()
                                          : -std::numeric_limits<double>::infinity();
                    c.p = 0.0;
                }
            } else {
                c.t = c.mean_diff / std::sqrt(se2);
                c.df = df;
                c.p = t_test_p_value(c.t, c.df);
            }
            c.reject = c.p <= cfg.alpha && i != j;
            out.push_back(std::move(c));
        }
    }
    return out;
}

Histogram frames_per_mos(const std::vector<std::pair<double, size_t>>& smos_frames,
                         double bin_width) {
    require(bin_width > 0.0, "frames_per_mos: bin width must be positive");
    Histogram h;
    h.bin_width = bin_width;
    const size_t nbins = static_cast<size_t>(std::ceil((h.hi - h.lo) / bin_width - 1e-12));
    h.counts.assign(nbins, 0.0);
    for (const auto& [smos, frames] : smos_frames) {
        require(smos >= h.lo && smos <= h.hi, "frames_per_mos: SMOS outside [1, 5]");
        size_t bin = static_cast<size_t>((smos - h.lo) / bin_width);
        if (bin >= nbins) bin = nbins - 1; // smos == hi lands in the last bin
        h.counts[bin] += static_cast<double>(frames);
    }
    return h;
}

Confusion2d omos_confusion(const std::vector<double>& x, const std::vector<double>& y,
                           size_t bins) {
    require(x.size() == y.size(), "confusion: length mismatch");
    require(!x.empty(), "confusion: empty input");
    require(bins >= 1, "confusion: need at least one bin");
    Confusion2d c;
    c.bins = bins;
    c.counts.assign(bins * bins, 0.0);
    const double width = (c.hi - c.lo) / static_cast<double>(bins);
    auto bin_of = [&](double v) {
        if (v <= c.lo) return size_t(0);
        size_t b = static_cast<size_t>((v - c.lo) / width);
        return std::min(b, bins - 1);
    };
    for (size_t i = 0; i < x.size(); ++i)
        c.counts[bin_of(x[i]) * bins + bin_of(y[i])] += 1.0;
    c.correlation = pearson_or(x, y, 0.0);
    return c;
}

} // namespace omoq
