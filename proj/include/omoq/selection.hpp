#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

namespace omoq {

// Per-epoch correlation and loss for the train/validation/test splits.
// RMSE values are reported on the [1, 5] score scale.
struct SplitMetrics {
    std::array<double, 3> rho{};  // tr, val, te
    std::array<double, 3> rmse{}; // tr, val, te
};

double rmse(std::span<const double> est, std::span<const double> tgt);

// Sample Pearson correlation. Throws on length < 2 or constant input.
double pearson(std::span<const double> x, std::span<const double> y);

// Trainer-internal guard: fallback instead of throwing on degenerate input.
double pearson_or(std::span<const double> x, std::span<const double> y, double fallback);

// Overall distance combining mean and spread of correlation and loss:
//   rho_hat = ||[1 - mean(rho), max(rho) - min(rho)]||_2
//   L_hat   = ||[mean(L),       max(L) - min(L)]||_2
//   D       = ||[rho_hat, L_hat]||_2
double overall_distance(const SplitMetrics& m);

struct SelectionRow {
    uint32_t seed = 0;
    uint32_t epoch = 0; // 1-based
    SplitMetrics metrics;
    double dist = 0.0;
};

// Global argmin of D; ties broken by earliest epoch, then lowest seed.
SelectionRow select_best(const std::vector<SelectionRow>& rows);

} // namespace omoq
