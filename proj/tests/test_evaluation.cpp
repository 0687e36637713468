#include <doctest.h>

#include <cmath>

#include "omoq/errors.hpp"
#include "omoq/evaluation.hpp"
#include "omoq/rng.hpp"

using namespace omoq;

namespace {

ScoredPrediction pred(const std::string& method, double beta, const std::string& cls,
                      double omos) {
    ScoredPrediction p;
    p.file = method + "_" + std::to_string(beta) + "_" + cls;
    p.method = method;
    p.beta = beta;
    p.signal_class = cls;
    p.omos = omos;
    return p;
}

// Two-sided p for the t distribution by adaptive Simpson quadrature of the
// density, independent of the production CDF route.
double t_pdf(double x, double df) {
    return std::exp(std::lgamma((df + 1) / 2) - std::lgamma(df / 2)) /
           std::sqrt(df * 3.14159265358979323846) *
           std::pow(1 + x * x / df, -(df + 1) / 2);
}

double simpson(double a, double b, double df) {
    const double m = 0.5 * (a + b);
    return (b - a) / 6.0 * (t_pdf(a, df) + 4 * t_pdf(m, df) + t_pdf(b, df));
}

double adaptive(double a, double b, double df, double whole, double tol, int depth) {
    const double m = 0.5 * (a + b);
    const double left = simpson(a, m, df), right = simpson(m, b, df);
    if (depth > 40 || std::fabs(left + right - whole) < 15 * tol)
        return left + right + (left + right - whole) / 15.0;
    return adaptive(a, m, df, left, tol / 2, depth + 1) +
           adaptive(m, b, df, right, tol / 2, depth + 1);
}

double p_by_quadrature(double t, double df) {
    const double hi = std::fabs(t) + 60.0 * std::sqrt(df / (df - 2 > 0 ? df - 2 : 1.0)) + 60.0;
    const double tail =
        adaptive(std::fabs(t), hi, df, simpson(std::fabs(t), hi, df), 1e-13, 0);
    return std::min(1.0, 2.0 * tail);
}

} // namespace

TEST_CASE("aggregate: uniform scores fill every cell with the same value") {
    std::vector<ScoredPrediction> preds;
    for (const char* m : {"A", "B"})
        for (double beta : {0.5, 0.8, 1.5})
            for (const char* c : {"Musical", "Solo", "Voice"})
                preds.push_back(pred(m, beta, c, 3.25));
    const auto t = aggregate(preds, {});
    for (const auto& row : t.cells)
        for (double v : row) CHECK(v == doctest::Approx(3.25));
    for (double v : t.overall) CHECK(v == doctest::Approx(3.25));
}

TEST_CASE("aggregate: rows at beta = 1 only leave nothing to average") {
    std::vector<ScoredPrediction> preds{pred("A", 1.0, "Solo", 4.0), pred("A", 1.0, "Voice", 2.0)};
    CHECK_THROWS_AS(aggregate(preds, {}), Error);
}

TEST_CASE("aggregate: handcrafted 12-row table matches hand-computed means") {
    std::vector<ScoredPrediction> preds{
        pred("A", 0.5, "Solo", 3.0),  pred("A", 0.5, "Solo", 4.0),
        pred("A", 0.8, "Voice", 2.0), pred("A", 1.5, "Voice", 3.0),
        pred("B", 0.5, "Solo", 1.0),  pred("B", 0.8, "Solo", 2.0),
        pred("B", 1.5, "Voice", 4.5), pred("B", 0.5, "Voice", 3.5),
        // excluded rows: beta == 1 and beta < 0.25
        pred("A", 1.0, "Solo", 999.0), pred("B", 1.0, "Voice", 999.0),
        pred("A", 0.2257, "Solo", 999.0), pred("B", 0.2, "Voice", 999.0),
    };
    const auto t = aggregate(preds, {});
    REQUIRE(t.methods.size() == 2);
    REQUIRE(t.classes == std::vector<std::string>{"Solo", "Voice"});
    // A: overall (3+4+2+3)/4 = 3.0; B: (1+2+4.5+3.5)/4 = 2.75 -> A ranked first
    CHECK(t.methods[0] == "A");
    CHECK(t.overall[0] == doctest::Approx(3.0));
    CHECK(t.overall[1] == doctest::Approx(2.75));
    CHECK(t.counts[0] == 4);
    // A Solo mean (3+4)/2, A Voice (2+3)/2; B Solo (1+2)/2, B Voice (4.5+3.5)/2
    CHECK(t.cells[0][0] == doctest::Approx(3.5));
    CHECK(t.cells[0][1] == doctest::Approx(2.5));
    CHECK(t.cells[1][0] == doctest::Approx(1.5));
    CHECK(t.cells[1][1] == doctest::Approx(4.0));
}

TEST_CASE("exclusion rule: poisoned beta=1 and beta<0.25 rows change nothing") {
    Rng rng(12);
    std::vector<ScoredPrediction> base;
    for (const char* m : {"A", "B", "C"})
        for (int i = 0; i < 20; ++i)
            base.push_back(pred(m, 0.5 + 0.1 * (i % 5), "Solo", rng.uniform(1.0, 5.0)));
    auto poisoned = base;
    for (const char* m : {"A", "B", "C"}) {
        poisoned.push_back(pred(m, 1.0, "Solo", 5.0));
        poisoned.push_back(pred(m, 0.1, "Solo", 1.0));
        poisoned.push_back(pred(m, 0.2257, "Solo", 5.0));
    }
    const auto t1 = aggregate(base, {});
    const auto t2 = aggregate(poisoned, {});
    REQUIRE(t1.methods == t2.methods);
    for (size_t i = 0; i < t1.overall.size(); ++i) {
        CHECK(t1.overall[i] == t2.overall[i]);
        CHECK(t1.counts[i] == t2.counts[i]);
    }
    const auto m1 = ttest_matrix(base, {});
    const auto m2 = ttest_matrix(poisoned, {});
    REQUIRE(m1.size() == m2.size());
    for (size_t i = 0; i < m1.size(); ++i) {
        CHECK(m1[i].t == m2[i].t);
        CHECK(m1[i].p == m2[i].p);
    }
}

TEST_CASE("means_by_beta keeps the unity point for line plots") {
    std::vector<ScoredPrediction> preds{pred("A", 1.0, "Solo", 4.0), pred("A", 0.5, "Solo", 2.0),
                                        pred("A", 0.5, "Solo", 3.0)};
    const auto m = means_by_beta(preds);
    CHECK(m.at("A").at(1.0) == doctest::Approx(4.0));
    CHECK(m.at("A").at(0.5) == doctest::Approx(2.5));
}

TEST_CASE("t-test matrix basics") {
    Rng rng(9);
    std::vector<ScoredPrediction> preds;
    for (int i = 0; i < 30; ++i) {
        preds.push_back(pred("A", 0.5, "Solo", 3.0 + 0.2 * rng.normal()));
        preds.push_back(pred("B", 0.5, "Solo", 3.02 + 0.2 * rng.normal()));
    }
    const auto m = ttest_matrix(preds, {});
    REQUIRE(m.size() == 3); // AA, AB, BB
    SUBCASE("self-comparison never rejects and has p = 1") {
        for (const auto& c : m)
            if (c.method_a == c.method_b) {
                CHECK(c.p == doctest::Approx(1.0));
                CHECK_FALSE(c.reject);
            }
    }
    SUBCASE("close means with small samples are not distinguished") {
        for (const auto& c : m)
            if (c.method_a != c.method_b) CHECK_FALSE(c.reject);
    }
}

TEST_CASE("well-separated normal samples are rejected at alpha = 0.05") {
    Rng rng(77);
    std::vector<ScoredPrediction> preds;
    for (int i = 0; i < 200; ++i) {
        preds.push_back(pred("A", 0.5, "Solo", 3.0 + 0.5 * rng.normal()));
        preds.push_back(pred("B", 0.5, "Solo", 3.5 + 0.5 * rng.normal()));
    }
    const auto m = ttest_matrix(preds, {});
    for (const auto& c : m)
        if (c.method_a != c.method_b) {
            CHECK(c.reject);
            CHECK(c.p < 0.001);
        }
}

TEST_CASE("degenerate constant-valued methods are flagged, not crashed") {
    std::vector<ScoredPrediction> preds;
    for (int i = 0; i < 5; ++i) {
        preds.push_back(pred("A", 0.5, "Solo", 2.0));
        preds.push_back(pred("B", 0.5, "Solo", 2.0));
        preds.push_back(pred("C", 0.5, "Solo", 4.0));
    }
    const auto m = ttest_matrix(preds, {});
    for (const auto& c : m) {
        if (c.method_a == "A" && c.method_b == "B") {
            CHECK(c.degenerate);
            CHECK(c.p == doctest::Approx(1.0));
            CHECK_FALSE(c.reject);
        }
        if (c.method_a == "A" && c.method_b == "C") {
            CHECK(c.degenerate);
            CHECK(c.reject);
        }
    }
}

TEST_CASE("method with fewer than two samples is an error") {
    std::vector<ScoredPrediction> preds{pred("A", 0.5, "Solo", 2.0), pred("A", 0.5, "Solo", 3.0),
                                        pred("B", 0.5, "Solo", 2.0)};
    CHECK_THROWS_AS(ttest_matrix(preds, {}), Error);
}

TEST_CASE("welch p-values match a quadrature oracle to 1e-9") {
    for (auto [t, df] : {std::pair<double, double>{0.5, 4.0}, {1.3, 11.7}, {2.8, 57.3}, {0.0, 9.0}}) {
        CHECK(std::fabs(t_test_p_value(t, df) - p_by_quadrature(t, df)) < 1e-9);
    }
}

TEST_CASE("pooled-variance variant differs from welch under unequal variances") {
    Rng rng(5);
    std::vector<ScoredPrediction> preds;
    for (int i = 0; i < 12; ++i) preds.push_back(pred("A", 0.5, "Solo", 3.0 + 0.1 * rng.normal()));
    for (int i = 0; i < 40; ++i) preds.push_back(pred("B", 0.5, "Solo", 3.2 + 1.5 * rng.normal()));
    TTestConfig welch_cfg, pooled_cfg;
    pooled_cfg.welch = false;
    const auto mw = ttest_matrix(preds, welch_cfg);
    const auto mp = ttest_matrix(preds, pooled_cfg);
    double pw = 0, pp = 0;
    for (const auto& c : mw)
        if (c.method_a != c.method_b) pw = c.p;
    for (const auto& c : mp)
        if (c.method_a != c.method_b) pp = c.p;
    CHECK(pw != pp);
}

TEST_CASE("frames_per_mos histogram") {
    SUBCASE("single file lands its whole mass in one bin") {
        const auto h = frames_per_mos({{3.1, 100}});
        REQUIRE(h.bins() == 16);
        for (size_t b = 0; b < h.bins(); ++b)
            CHECK(h.counts[b] == (b == 8 ? 100.0 : 0.0));
    }
    SUBCASE("empty input gives an all-zero histogram") {
        const auto h = frames_per_mos({});
        for (double c : h.counts) CHECK(c == 0.0);
    }
    SUBCASE("five files match direct summation, including the smos = 5 edge") {
        const auto h = frames_per_mos({{1.0, 10}, {1.1, 5}, {3.0, 7}, {5.0, 9}, {4.99, 1}});
        CHECK(h.counts[0] == 15.0);
        CHECK(h.counts[8] == 7.0);
        CHECK(h.counts[15] == 10.0);
        double total = 0;
        for (double c : h.counts) total += c;
        CHECK(total == 32.0);
    }
}

TEST_CASE("omos confusion matrix") {
    SUBCASE("identical scores stay on the diagonal with correlation 1") {
        Rng rng(2);
        std::vector<double> x(200);
        for (auto& v : x) v = rng.uniform(1.0, 5.0);
        const auto c = omos_confusion(x, x, 10);
        CHECK(c.correlation == doctest::Approx(1.0));
        for (size_t i = 0; i < c.bins; ++i)
            for (size_t j = 0; j < c.bins; ++j)
                if (i != j) CHECK(c.counts[i * c.bins + j] == 0.0);
    }
    SUBCASE("handcrafted 4-point set lands in known cells") {
        // 4 bins of width 1 over [1,5]
        const std::vector<double> x{1.2, 2.5, 3.5, 4.9};
        const std::vector<double> y{4.9, 2.5, 1.2, 1.2};
        const auto c = omos_confusion(x, y, 4);
        CHECK(c.counts[0 * 4 + 3] == 1.0);
        CHECK(c.counts[1 * 4 + 1] == 1.0);
        CHECK(c.counts[2 * 4 + 0] == 1.0);
        CHECK(c.counts[3 * 4 + 0] == 1.0);
    }
    SUBCASE("independent uniforms decorrelate") {
        Rng rng(3);
        std::vector<double> x(10000), y(10000);
        for (size_t i = 0; i < x.size(); ++i) {
            x[i] = rng.uniform(1.0, 5.0);
            y[i] = rng.uniform(1.0, 5.0);
        }
        const auto c = omos_confusion(x, y, 20);
        CHECK(std::fabs(c.correlation) < 0.1);
    }
    SUBCASE("length mismatch is an error") {
        CHECK_THROWS_AS(omos_confusion({1.0, 2.0}, {1.0}, 4), Error);
    }
}
