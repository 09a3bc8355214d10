// SPDX-License-Identifier: Apache-2.0
#include "dualsplat/analysis.hpp"

#include "dualsplat/loss.hpp"
#include "dualsplat/renderer.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <sstream>

namespace dualsplat {

double psnr(const Image& a, const Image& b) {
    if (!a.same_shape(b)) throw ContractError("psnr: shape mismatch");
    if (a.data.empty()) throw ContractError("psnr: empty image");
    double se = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const double d = a.data[i] - b.data[i];
        se += d * d;
    }
    const double mse = se / static_cast<double>(a.data.size());
    if (mse == 0.0) return kPsnrCap;
    return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

double ssim_metric(const Image& a, const Image& b) { return ssim(a, b, false).value; }

double ConflictStats::probability(Attribute a) const {
    const auto i = static_cast<int>(a);
    return total[i] == 0 ? 0.0 : static_cast<double>(conflicted[i]) / static_cast<double>(total[i]);
}

ConflictStats conflict_statistics(std::istream& log, std::string label) {
    ConflictStats s;
    s.label = std::move(label);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(log, line)) {
        ++lineno;
        if (line.rfind("harm ", 0) != 0) continue;
        std::istringstream fields(line.substr(5));
        std::string tok;
        std::string attr;
        int flag = -1;
        while (fields >> tok) {
            const auto eq = tok.find('=');
            if (eq == std::string::npos) throw AnalysisError("malformed log line " + std::to_string(lineno));
            const std::string key = tok.substr(0, eq);
            const std::string value = tok.substr(eq + 1);
            if (key == "attr") attr = value;
            if (key == "conflicted") {
                if (value != "0" && value != "1")
                    throw AnalysisError("malformed log line " + std::to_string(lineno) + ": conflicted=" + value);
                flag = value == "1";
            }
        }
        if (attr.empty() || flag < 0) throw AnalysisError("malformed log line " + std::to_string(lineno));
        Attribute a;
        try {
            a = attribute_from_name(attr);
        } catch (const std::exception&) {
            throw AnalysisError("malformed log line " + std::to_string(lineno) + ": attr=" + attr);
        }
        s.total[static_cast<int>(a)] += 1;
        s.conflicted[static_cast<int>(a)] += flag;
    }
    return s;
}

ConflictStats conflict_statistics(const std::filesystem::path& log_path) {
    std::ifstream in(log_path);
    if (!in) throw AnalysisError("cannot read log " + log_path.string());
    return conflict_statistics(in, log_path.parent_path().filename().string());
}

std::string format_conflict_table(const std::vector<ConflictStats>& runs) {
    std::string out;
    char buf[128];
    std::snprintf(buf, sizeof buf, "%-28s", "run");
    out += buf;
    for (Attribute a : kAllAttributes) {
        std::snprintf(buf, sizeof buf, " %10s", std::string(attribute_name(a)).c_str());
        out += buf;
    }
    out += '\n';
    for (const ConflictStats& s : runs) {
        std::snprintf(buf, sizeof buf, "%-28s", s.label.c_str());
        out += buf;
        for (Attribute a : kAllAttributes) {
            std::snprintf(buf, sizeof buf, " %10.4f", s.probability(a));
            out += buf;
        }
        out += '\n';
    }
    return out;
}

std::string format_conflict_csv(const std::vector<ConflictStats>& runs) {
    std::string out = "label,attribute,conflicted,total,probability\n";
    char buf[256];
    for (const ConflictStats& s : runs)
        for (Attribute a : kAllAttributes) {
            const auto i = static_cast<int>(a);
            std::snprintf(buf, sizeof buf, "%s,%s,%lld,%lld,%.17g\n", s.label.c_str(),
                          std::string(attribute_name(a)).c_str(), static_cast<long long>(s.conflicted[i]),
                          static_cast<long long>(s.total[i]), s.probability(a));
            out += buf;
        }
    return out;
}

CoverageProbability pair_coverage(std::int64_t pairs, std::int64_t iterations) {
    if (pairs < 1) throw ContractError("pair_coverage: need at least one pair");
    if (iterations < 0) throw ContractError("pair_coverage: negative iteration count");
    const double M = static_cast<double>(pairs);
    const double T = static_cast<double>(iterations);
    CoverageProbability p;
    // log1p keeps (1 - 1/M)^T accurate for large M.
    p.exact = pairs == 1 ? (iterations >= 1 ? 1.0 : 0.0) : -std::expm1(T * std::log1p(-1.0 / M));
    p.approx = -std::expm1(-T / M);
    return p;
}

CoverageIterations coverage_iterations(std::int64_t pairs, double q) {
    if (pairs < 1) throw ContractError("coverage_iterations: need at least one pair");
    if (!(q > 0.0 && q < 1.0)) throw ContractError("coverage_iterations: q must be in (0, 1)");
    const double M = static_cast<double>(pairs);
    CoverageIterations c;
    c.approx = M * -std::log1p(-q);
    if (pairs == 1) {
        c.exact = 1;
        return c;
    }
    const double bound = std::log1p(-q) / std::log1p(-1.0 / M);
    c.exact = std::max<std::int64_t>(1, static_cast<std::int64_t>(std::ceil(bound)));
    // Guard the ceiling against rounding in the logarithms.
    while (c.exact > 1 && pair_coverage(pairs, c.exact - 1).exact >= q) --c.exact;
    while (pair_coverage(pairs, c.exact).exact < q) ++c.exact;
    return c;
}

std::int64_t pair_count(std::int64_t views) {
    if (views < 2) throw ContractError("pair_count: need at least two views");
    return views * (views - 1) / 2;
}

EvaluationReport evaluate(const GaussianCloud& cloud, const std::vector<View>& heldout, const TrainConfig& cfg,
                          std::string tag) {
    if (heldout.empty()) throw AnalysisError("dataset has no held-out views");
    EvaluationReport r;
    r.tag = std::move(tag);
    const RenderSettings rs = render_settings(cfg);
    for (std::size_t i = 0; i < heldout.size(); ++i) {
        const RenderOutput out = rasterize_forward(cloud, camera_of(heldout[i]), rs);
        ViewMetrics m;
        m.view = static_cast<int>(i);
        m.psnr = psnr(out.image, heldout[i].gt_image);
        m.ssim = ssim_metric(out.image, heldout[i].gt_image);
        r.mean_psnr += m.psnr;
        r.mean_ssim += m.ssim;
        r.views.push_back(m);
    }
    r.mean_psnr /= static_cast<double>(r.views.size());
    r.mean_ssim /= static_cast<double>(r.views.size());
    return r;
}

std::string format_report(const EvaluationReport& r) {
    std::string out = "tag\tview\tpsnr\tssim\tlpips\n";
    char buf[256];
    for (const ViewMetrics& m : r.views) {
        std::snprintf(buf, sizeof buf, "%s\t%d\t%.6f\t%.6f\t-\n", r.tag.c_str(), m.view, m.psnr, m.ssim);
        out += buf;
    }
    std::snprintf(buf, sizeof buf, "%s\tmean\t%.6f\t%.6f\t-\n", r.tag.c_str(), r.mean_psnr, r.mean_ssim);
    out += buf;
    return out;
}

}  // namespace dualsplat
