#pragma once

#include <map>
#include <string>
#include <vector>

namespace omoq {

struct ScoredPrediction {
    std::string file;
    std::string method;
    double beta = 1.0;
    std::string signal_class;
    double omos = 0.0;
    double smos = 0.0;
    bool has_smos = false;
};

// CSV columns: file,method,beta,class,omos[,smos]
std::vector<ScoredPrediction> load_predictions_csv(const std::string& path);

// Rows at exactly beta == 1 (no time-scaling applied) and beta below the
// cutoff are excluded from every average and test.
struct ExclusionRule {
    bool drop_beta_one = true;
    double min_beta = 0.25;

    bool keep(double beta) const {
        if (drop_beta_one && beta == 1.0) return false;
        return beta >= min_beta;
    }
};

struct MeansTable {
    std::vector<std::string> methods; // sorted by overall mean, descending
    std::vector<std::string> classes; // sorted lexicographically
    // cell(i, j): mean OMOS of methods[i] within classes[j]; NaN when empty
    std::vector<std::vector<double>> cells;
    std::vector<double> overall;      // per-method mean over all kept rows
    std::vector<size_t> counts;       // kept rows per method
};

MeansTable aggregate(const std::vector<ScoredPrediction>& preds, const ExclusionRule& excl);

// method -> beta -> mean OMOS over every row (line-plot data; no exclusions,
// the unity point beta = 1 is informative there).
std::map<std::string, std::map<double, double>> means_by_beta(
    const std::vector<ScoredPrediction>& preds);

struct MethodComparison {
    std::string method_a, method_b;
    double t = 0.0;
    double df = 0.0;
    double p = 1.0;
    bool reject = false;
    double mean_diff = 0.0; // mean(a) - mean(b)
    size_t n_a = 0, n_b = 0;
    bool degenerate = false; // both samples (numerically) constant
};

struct TTestConfig {
    double alpha = 0.05;
    bool welch = true; // false: pooled-variance two-sample test
    ExclusionRule exclusions;
};

// All unordered method pairs plus self-comparisons (full symmetric matrix).
std::vector<MethodComparison> ttest_matrix(const std::vector<ScoredPrediction>& preds,
                                           const TTestConfig& cfg);

// Two-sided p-value for a two-sample t statistic with df degrees of freedom.
double t_test_p_value(double t, double df);

struct Histogram {
    double lo = 1.0, hi = 5.0;
    double bin_width = 0.25;
    std::vector<double> counts;

    size_t bins() const { return counts.size(); }
};

// Sum of per-file frame counts into SMOS bins over [1, 5].
Histogram frames_per_mos(const std::vector<std::pair<double, size_t>>& smos_frames,
                         double bin_width = 0.25);

struct Confusion2d {
    double lo = 1.0, hi = 5.0;
    size_t bins = 0;
    std::vector<double> counts; // bins x bins, row = x bin
    double correlation = 0.0;
};

Confusion2d omos_confusion(const std::vector<double>& x, const std::vector<double>& y,
                           size_t bins = 20);

} // namespace omoq
