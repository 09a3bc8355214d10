// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "dualsplat/config.hpp"
#include "dualsplat/types.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

namespace dualsplat {

class AnalysisError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Reported for identical images.
inline constexpr double kPsnrCap = 99.0;

/// 10 log10(1 / MSE) over all pixels and channels; kPsnrCap when MSE is 0.
double psnr(const Image& a, const Image& b);

/// Mean SSIM (11x11 Gaussian window).
double ssim_metric(const Image& a, const Image& b);

/// Per-attribute conflict probability over the `harm` records of one log.
struct ConflictStats {
    std::string label;
    std::array<std::int64_t, kNumAttributes> conflicted{};
    std::array<std::int64_t, kNumAttributes> total{};

    double probability(Attribute a) const;
};

/// Parses `harm iter=.. attr=.. cos=.. ... conflicted=0|1` lines; other lines
/// are ignored. Throws AnalysisError on a malformed harm line.
ConflictStats conflict_statistics(std::istream& log, std::string label = {});
ConflictStats conflict_statistics(const std::filesystem::path& log_path);

/// Fixed-width table: one row per log, one column per attribute.
std::string format_conflict_table(const std::vector<ConflictStats>& runs);

/// Plot data: `label,attribute,conflicted,total,probability` rows.
std::string format_conflict_csv(const std::vector<ConflictStats>& runs);

struct CoverageProbability {
    double exact = 0.0;   // 1 - (1 - 1/M)^T
    double approx = 0.0;  // 1 - exp(-T / M)
};

CoverageProbability pair_coverage(std::int64_t pairs, std::int64_t iterations);

struct CoverageIterations {
    std::int64_t exact = 0;  // ceil(log(1 - q) / log(1 - 1/M)), at least 1
    double approx = 0.0;     // M ln(1 / (1 - q))
};

/// Smallest T with P_cover(T) >= q. For M = 1 a single draw suffices.
CoverageIterations coverage_iterations(std::int64_t pairs, double q);

/// M = n (n - 1) / 2.
std::int64_t pair_count(std::int64_t views);

struct ViewMetrics {
    int view = 0;
    double psnr = 0.0;
    double ssim = 0.0;
};

struct EvaluationReport {
    std::string tag;
    std::vector<ViewMetrics> views;
    double mean_psnr = 0.0;
    double mean_ssim = 0.0;

    friend bool operator==(const EvaluationReport&, const EvaluationReport&) = default;
};

/// Renders every held-out view from `cloud` and scores it against its clean
/// reference. Throws AnalysisError when there are no held-out views.
EvaluationReport evaluate(const GaussianCloud& cloud, const std::vector<View>& heldout, const TrainConfig& cfg,
                          std::string tag = "full");

/// Tab-separated report: header `tag view psnr ssim lpips` (lpips is always
/// "-", reserved for external tools), one row per view, then a `mean` row.
std::string format_report(const EvaluationReport& r);

}  // namespace dualsplat
