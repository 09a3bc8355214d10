// SPDX-License-Identifier: Apache-2.0
#include "dualsplat/analysis.hpp"
#include "dualsplat/rng.hpp"
#include "dualsplat/synth.hpp"
#include "dualsplat/trainer.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "oracles.hpp"

using namespace dualsplat;

TEST(Psnr, KnownValuesAndCap) {
    Image a(4, 4, 3, 0.5);
    EXPECT_EQ(psnr(a, a), kPsnrCap);
    Image b = a;
    for (double& v : b.data) v += 0.1;  // MSE 0.01 -> 20 dB
    EXPECT_NEAR(psnr(a, b), 20.0, 1e-9);
    b.data[0] += 1e-12;
    EXPECT_LE(psnr(a, b), kPsnrCap);
    EXPECT_THROW(psnr(a, Image(4, 4, 1)), ContractError);
}

TEST(SsimMetric, MatchesWindowOracle) {
    const Image a = oracle::random_image(20, 18, 3, 1);
    const Image b = oracle::random_image(20, 18, 3, 2);
    EXPECT_NEAR(ssim_metric(a, b), oracle::ssim(a, b), 1e-12);
    EXPECT_NEAR(ssim_metric(a, a), 1.0, 1e-12);
}

TEST(Coverage, PairCount) {
    EXPECT_EQ(pair_count(2), 1);
    EXPECT_EQ(pair_count(20), 190);
    EXPECT_THROW(pair_count(1), ContractError);
}

TEST(Coverage, TwentyViewsAtNinetyFivePercent) {
    const CoverageIterations c = coverage_iterations(190, 0.95);
    EXPECT_EQ(c.exact, 568);
    EXPECT_NEAR(c.approx, 190 * std::log(20.0), 1e-9);
    EXPECT_NEAR(c.approx, 569.19, 0.01);
    // Two significant figures.
    EXPECT_EQ(std::lround(c.approx / 10.0) * 10, 570);
    EXPECT_GE(pair_coverage(190, 568).exact, 0.95);
    EXPECT_LT(pair_coverage(190, 567).exact, 0.95);
}

TEST(Coverage, MultiplesOfPairCount) {
    const std::int64_t M = 190;
    const double q[] = {0.5, 0.8, 0.95, 0.99, 0.999};
    const double k[] = {0.7, 1.6, 3.0, 4.6, 6.9};
    for (int i = 0; i < 5; ++i) {
        const CoverageIterations c = coverage_iterations(M, q[i]);
        EXPECT_NEAR(c.approx / M, k[i], 0.05) << q[i];
        EXPECT_NEAR(static_cast<double>(c.exact) / M, k[i], 0.05) << q[i];
    }
}

TEST(Coverage, ExactAgainstDirectPower) {
    for (std::int64_t M : {2, 3, 10, 190, 4950}) {
        for (std::int64_t T : {0, 1, 7, 100, 1000}) {
            const double direct = 1.0 - std::pow(1.0 - 1.0 / static_cast<double>(M), static_cast<double>(T));
            EXPECT_NEAR(pair_coverage(M, T).exact, direct, 1e-13);
            EXPECT_NEAR(pair_coverage(M, T).approx, 1.0 - std::exp(-static_cast<double>(T) / M), 1e-13);
        }
    }
    EXPECT_EQ(pair_coverage(1, 1).exact, 1.0);
    EXPECT_EQ(coverage_iterations(1, 0.99).exact, 1);
    EXPECT_THROW(coverage_iterations(10, 1.0), ContractError);
    EXPECT_THROW(pair_coverage(0, 1), ContractError);
}

TEST(Coverage, MonteCarloAgreesWithExact) {
    const std::int64_t M = 10, T = 15;
    constexpr int trials = 200000;
    Rng rng(9);
    int hit = 0;
    for (int t = 0; t < trials; ++t) {
        bool seen = false;
        for (std::int64_t s = 0; s < T; ++s) seen |= rng.below(M) == 0;
        hit += seen;
    }
    const double p = pair_coverage(M, T).exact;
    const double sd = std::sqrt(p * (1 - p) / trials);
    EXPECT_NEAR(static_cast<double>(hit) / trials, p, 4 * sd);
}

TEST(ConflictStatistics, CountsHarmRecords) {
    std::istringstream log(
        "# run full seed=0\n"
        "iter=0 loss1=1\n"
        "harm iter=0 attr=position cos=-0.5 tau1=1 tau2=1 lambda_geo=0.8 conflicted=1\n"
        "harm iter=0 attr=color cos=0.5 tau1=1 tau2=1 lambda_geo=1 conflicted=0\n"
        "harm iter=1 attr=position cos=0.1 tau1=1 tau2=1 lambda_geo=1 conflicted=0\n"
        "struct iter=1 clones=0\n");
    const ConflictStats s = conflict_statistics(log, "r");
    EXPECT_EQ(s.total[0], 2);
    EXPECT_EQ(s.conflicted[0], 1);
    EXPECT_DOUBLE_EQ(s.probability(Attribute::Position), 0.5);
    EXPECT_EQ(s.probability(Attribute::Color), 0.0);
    EXPECT_EQ(s.probability(Attribute::Scale), 0.0);  // no records
    const std::string csv = format_conflict_csv({s});
    EXPECT_NE(csv.find("r,position,1,2,0.5\n"), std::string::npos);
    const std::string table = format_conflict_table({s});
    EXPECT_NE(table.find("0.5000"), std::string::npos);
    EXPECT_EQ(std::count(table.begin(), table.end(), '\n'), 2);
}

TEST(ConflictStatistics, RoundTripsTrainerOutput) {
    StepReport r;
    r.iteration = 3;
    r.view_j = 1;
    r.attributes[1].conflicted = true;
    r.attributes[4].conflicted = true;
    std::istringstream log(format_harmonizer_lines(r) + format_harmonizer_lines(r));
    const ConflictStats s = conflict_statistics(log);
    for (Attribute a : kAllAttributes) EXPECT_EQ(s.total[static_cast<int>(a)], 2);
    EXPECT_EQ(s.probability(Attribute::Scale), 1.0);
    EXPECT_EQ(s.probability(Attribute::Position), 0.0);
}

TEST(ConflictStatistics, MalformedLinesThrow) {
    for (const char* bad : {"harm iter=0 attr=position conflicted=2\n", "harm iter=0 attr=wings conflicted=1\n",
                            "harm iter=0 position conflicted=1\n", "harm iter=0 attr=color\n"}) {
        std::istringstream log(std::string("iter=0\n") + bad);
        try {
            conflict_statistics(log);
            FAIL() << bad;
        } catch (const AnalysisError& e) {
            EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
        }
    }
    EXPECT_THROW(conflict_statistics(std::filesystem::path("/nonexistent/log")), AnalysisError);
}

TEST(Evaluate, GeneratingSceneScoresHigh) {
    SynthOptions o;
    o.seed = 2;
    o.spec.resolution = 32;
    o.num_views = 2;
    o.num_heldout = 3;
    const Dataset d = synthesize(o);
    TrainConfig cfg;
    cfg.image_width = cfg.image_height = 32;
    const EvaluationReport r = evaluate(dataset_scene(d).cloud, heldout_views(d), cfg, "gt");
    ASSERT_EQ(r.views.size(), 3u);
    double mp = 0;
    for (const ViewMetrics& m : r.views) mp += m.psnr;
    EXPECT_NEAR(r.mean_psnr, mp / 3, 1e-12);
    EXPECT_GT(r.mean_psnr, 40.0);
    EXPECT_GT(r.mean_ssim, 0.99);

    GaussianCloud empty;
    const EvaluationReport e = evaluate(empty, heldout_views(d), cfg);
    EXPECT_LT(e.mean_psnr, r.mean_psnr);
    EXPECT_THROW(evaluate(empty, {}, cfg), AnalysisError);

    const std::string text = format_report(r);
    EXPECT_EQ(text.substr(0, text.find('\n')), "tag\tview\tpsnr\tssim\tlpips");
    EXPECT_NE(text.find("gt\tmean\t"), std::string::npos);
    EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 5);
}
