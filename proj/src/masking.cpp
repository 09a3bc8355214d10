// SPDX-License-Identifier: Apache-2.0
#include "dualsplat/masking.hpp"

#include "binary_io.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace dualsplat {

namespace {

constexpr char kFeatureMagic[8] = {'D', 'S', 'F', 'E', 'A', 'T', 0, 0};

// Reflect index into [0, n) without repeating the edge sample.
int reflect(int i, int n) {
    if (n == 1) return 0;
    const int period = 2 * (n - 1);
    i %= period;
    if (i < 0) i += period;
    return i < n ? i : period - i;
}

int padded_cells(int n, int g) { return (n + g - 1) / g; }

}  // namespace

FeatureGrid extract_features(const Image& image, int g) {
    if (g < 1) throw ContractError("extract_features: grid_scale must be >= 1");
    if (image.channels != 3) throw ContractError("extract_features: expected an RGB image");
    const int W = image.width;
    const int H = image.height;
    const int gw = padded_cells(W, g);
    const int gh = padded_cells(H, g);
    const int PW = gw * g;
    const int PH = gh * g;

    // Luminance of the padded image.
    std::vector<double> lum(static_cast<std::size_t>(PW) * PH);
    for (int y = 0; y < PH; ++y)
        for (int x = 0; x < PW; ++x) {
            const int sx = reflect(x, W);
            const int sy = reflect(y, H);
            lum[static_cast<std::size_t>(y) * PW + x] =
                (image.at(sx, sy, 0) + image.at(sx, sy, 1) + image.at(sx, sy, 2)) / 3.0;
        }
    auto L = [&](int x, int y) {
        x = std::clamp(x, 0, PW - 1);
        y = std::clamp(y, 0, PH - 1);
        return lum[static_cast<std::size_t>(y) * PW + x];
    };

    FeatureGrid out(kPatchFeatureChannels, gw, gh, g);
    const double inv = 1.0 / (static_cast<double>(g) * g);
    const double bin_width = std::numbers::pi / 6.0;
    for (int cy = 0; cy < gh; ++cy) {
        for (int cx = 0; cx < gw; ++cx) {
            double sum[3] = {0, 0, 0};
            double sq[3] = {0, 0, 0};
            double energy[6] = {0, 0, 0, 0, 0, 0};
            for (int y = cy * g; y < (cy + 1) * g; ++y)
                for (int x = cx * g; x < (cx + 1) * g; ++x)
                    for (int c = 0; c < 3; ++c) sum[c] += image.at(reflect(x, W), reflect(y, H), c);
            // Two passes so a flat patch gives exactly zero deviation.
            for (int y = cy * g; y < (cy + 1) * g; ++y) {
                for (int x = cx * g; x < (cx + 1) * g; ++x) {
                    const int sx = reflect(x, W);
                    const int sy = reflect(y, H);
                    for (int c = 0; c < 3; ++c) {
                        const double d = image.at(sx, sy, c) - sum[c] * inv;
                        sq[c] += d * d;
                    }
                    const double gx = 0.5 * (L(x + 1, y) - L(x - 1, y));
                    const double gy = 0.5 * (L(x, y + 1) - L(x, y - 1));
                    const double e = gx * gx + gy * gy;
                    if (!(e > 0.0)) continue;  // also skips NaN, which would index out of range
                    double phi = std::atan2(gy, gx);
                    if (phi < 0.0) phi += std::numbers::pi;
                    const int bin = std::min(5, static_cast<int>(phi / bin_width));
                    energy[bin] += e;
                }
            }
            for (int c = 0; c < 3; ++c) {
                out.at(cx, cy, c) = sum[c] * inv;
                out.at(cx, cy, 3 + c) = kStdFeatureScale * std::sqrt(sq[c] * inv);
            }
            for (int b = 0; b < 6; ++b) out.at(cx, cy, 6 + b) = kEnergyFeatureScale * energy[b] * inv;
        }
    }
    return out;
}

void write_feature_file(const FeatureGrid& grid, const std::filesystem::path& path) {
    ByteWriter w;
    w.bytes(kFeatureMagic, sizeof kFeatureMagic);
    w.i32(grid.channels);
    w.i32(grid.grid_width);
    w.i32(grid.grid_height);
    w.i32(grid.grid_scale);
    for (double v : grid.data) w.f64(v);
    write_file_bytes(path, w.buffer());
}

FeatureGrid read_feature_file(const std::filesystem::path& path) {
    const auto bytes = read_file_bytes(path);
    ByteReader r(bytes);
    char magic[8];
    r.bytes(magic, sizeof magic);
    if (!std::equal(magic, magic + 8, kFeatureMagic)) throw IoError("not a feature file: " + path.string());
    const int c = r.i32();
    const int gw = r.i32();
    const int gh = r.i32();
    const int gs = r.i32();
    if (c <= 0 || gw <= 0 || gh <= 0 || gs <= 0) throw IoError("bad feature header: " + path.string());
    FeatureGrid grid(c, gw, gh, gs);
    for (double& v : grid.data) v = r.f64();
    if (!r.at_end()) throw IoError("trailing bytes in " + path.string());
    for (double v : grid.data)
        if (!std::isfinite(v)) throw IoError("non-finite feature in " + path.string());
    return grid;
}

Predictor Predictor::create(int inputs, int hidden, Rng& rng) {
    Predictor p;
    p.inputs = inputs;
    p.hidden = hidden;
    p.weights.assign(parameter_count(inputs, hidden), 0.0);
    const double scale = 1.0 / std::sqrt(static_cast<double>(inputs));
    for (int i = 0; i < hidden * inputs; ++i) p.weights[i] = scale * rng.normal();
    return p;
}

PredictorForward predict_sigma(const Predictor& p, const FeatureGrid& f, double delta0) {
    if (f.channels != p.inputs) throw ContractError("predict_sigma: feature width does not match the predictor");
    const std::size_t cells = f.cells();
    const int C = p.inputs;
    const int Hd = p.hidden;
    const double* W1 = p.weights.data();
    const double* b1 = W1 + static_cast<std::size_t>(Hd) * C;
    const double* w2 = b1 + Hd;
    const double b2 = w2[Hd];

    PredictorForward out;
    out.sigma = Image(f.grid_width, f.grid_height, 1);
    out.raw.resize(cells);
    out.hidden.resize(cells * Hd);
    for (std::size_t i = 0; i < cells; ++i) {
        const double* x = f.cell(i);
        double z = b2;
        for (int j = 0; j < Hd; ++j) {
            double a = b1[j];
            for (int k = 0; k < C; ++k) a += W1[j * C + k] * x[k];
            const double h = std::tanh(a);
            out.hidden[i * Hd + j] = h;
            z += w2[j] * h;
        }
        out.raw[i] = z;
        out.sigma.data[i] = softplus(z + delta0);
    }
    return out;
}

std::vector<double> predictor_backward(const Predictor& p, const FeatureGrid& f, const PredictorForward& fwd,
                                       const Image& grad_sigma, double delta0) {
    const std::size_t cells = f.cells();
    if (grad_sigma.data.size() != cells) throw ContractError("predictor_backward: gradient grid mismatch");
    const int C = p.inputs;
    const int Hd = p.hidden;
    const double* w2 = p.weights.data() + static_cast<std::size_t>(Hd) * C + Hd;
    std::vector<double> g(p.weights.size(), 0.0);
    double* gW1 = g.data();
    double* gb1 = gW1 + static_cast<std::size_t>(Hd) * C;
    double* gw2 = gb1 + Hd;
    double& gb2 = gw2[Hd];
    for (std::size_t i = 0; i < cells; ++i) {
        // d softplus(u)/du = sigmoid(u)
        const double gz = grad_sigma.data[i] * sigmoid(fwd.raw[i] + delta0);
        if (gz == 0.0) continue;
        gb2 += gz;
        const double* x = f.cell(i);
        for (int j = 0; j < Hd; ++j) {
            const double h = fwd.hidden[i * Hd + j];
            gw2[j] += gz * h;
            const double ga = gz * w2[j] * (1.0 - h * h);
            gb1[j] += ga;
            for (int k = 0; k < C; ++k) gW1[j * C + k] += ga * x[k];
        }
    }
    return g;
}

Image downsample_area(const Image& image, int g) {
    const int gw = padded_cells(image.width, g);
    const int gh = padded_cells(image.height, g);
    Image out(gw, gh, image.channels);
    const double inv = 1.0 / (static_cast<double>(g) * g);
    for (int cy = 0; cy < gh; ++cy)
        for (int cx = 0; cx < gw; ++cx)
            for (int c = 0; c < image.channels; ++c) {
                double s = 0.0;
                for (int y = cy * g; y < (cy + 1) * g; ++y)
                    for (int x = cx * g; x < (cx + 1) * g; ++x)
                        s += image.at(reflect(x, image.width), reflect(y, image.height), c);
                out.at(cx, cy, c) = s * inv;
            }
    return out;
}

Image residual_target(const Image& render, const Image& gt, const FeatureGrid& fr, const FeatureGrid& fg,
                      double s_sem) {
    if (!(s_sem > 0.0)) throw ContractError("residual_target: s_sem must be > 0");
    if (!render.same_shape(gt)) throw ContractError("residual_target: image shape mismatch");
    if (fr.channels != fg.channels || fr.grid_width != fg.grid_width || fr.grid_height != fg.grid_height ||
        fr.grid_scale != fg.grid_scale)
        throw ContractError("residual_target: feature grids differ");
    const Image dr = downsample_area(render, fr.grid_scale);
    const Image dg = downsample_area(gt, fr.grid_scale);
    if (dr.width != fr.grid_width || dr.height != fr.grid_height)
        throw ContractError("residual_target: feature grid does not match the image");

    Image E(fr.grid_width, fr.grid_height, 1);
    for (std::size_t i = 0; i < fr.cells(); ++i) {
        const double* a = fr.cell(i);
        const double* b = fg.cell(i);
        double ab = 0.0, aa = 0.0, bb = 0.0;
        for (int c = 0; c < fr.channels; ++c) {
            ab += a[c] * b[c];
            aa += a[c] * a[c];
            bb += b[c] * b[c];
        }
        double dcos;
        const bool za = aa < 1e-24;
        const bool zb = bb < 1e-24;
        if (za && zb)
            dcos = 0.0;
        else if (za || zb)
            dcos = 1.0;
        else
            dcos = 1.0 - ab / (std::sqrt(aa) * std::sqrt(bb));
        dcos = std::max(0.0, dcos);
        double l1 = 0.0;
        for (int c = 0; c < dr.channels; ++c) l1 += std::abs(dr.data[i * dr.channels + c] - dg.data[i * dg.channels + c]);
        E.data[i] = std::min(1.0, dcos / s_sem) * l1;
    }
    return E;
}

PredictorLoss predictor_loss(const Image& sigma, const Image& residual, double lambda_inc, double eps) {
    if (sigma.data.size() != residual.data.size()) throw ContractError("predictor_loss: grid mismatch");
    PredictorLoss out;
    out.grad_sigma = Image(sigma.width, sigma.height, 1);
    const double inv = 1.0 / static_cast<double>(sigma.data.size());
    double total = 0.0;
    for (std::size_t i = 0; i < sigma.data.size(); ++i) {
        const double s = sigma.data[i];
        const double e = residual.data[i];
        const double den = 2.0 * s * s + eps;
        total += e / den + lambda_inc * std::log(s + eps);
        out.grad_sigma.data[i] = inv * (-e * 4.0 * s / (den * den) + lambda_inc / (s + eps));
    }
    out.loss = total * inv;
    return out;
}

Image upsample_bilinear(const Image& grid, int g, int width, int height) {
    Image out(width, height, grid.channels);
    auto axis = [&](int dst, int n, int& i0, int& i1, double& t) {
        double src = (dst + 0.5) / g - 0.5;
        src = std::clamp(src, 0.0, static_cast<double>(n - 1));
        i0 = static_cast<int>(std::floor(src));
        i1 = std::min(i0 + 1, n - 1);
        t = src - i0;
    };
    for (int y = 0; y < height; ++y) {
        int y0, y1;
        double ty;
        axis(y, grid.height, y0, y1, ty);
        for (int x = 0; x < width; ++x) {
            int x0, x1;
            double tx;
            axis(x, grid.width, x0, x1, tx);
            for (int c = 0; c < grid.channels; ++c) {
                const double top = (1.0 - tx) * grid.at(x0, y0, c) + tx * grid.at(x1, y0, c);
                const double bot = (1.0 - tx) * grid.at(x0, y1, c) + tx * grid.at(x1, y1, c);
                out.at(x, y, c) = (1.0 - ty) * top + ty * bot;
            }
        }
    }
    return out;
}

Image consistency_score(const Image& sigma_grid, int g, int width, int height, double c_sigma) {
    if (!(c_sigma > 0.0)) throw ContractError("consistency_score: c_sigma must be > 0");
    Image s = upsample_bilinear(sigma_grid, g, width, height);
    for (double& v : s.data) v = std::exp(-v * v / c_sigma);
    return s;
}

Image combine_mask(const Image& score, const Image& prior, double eta_s, double eta_t) {
    if (!score.same_shape(prior) || score.channels != 1) throw ContractError("combine_mask: shape mismatch");
    if (!(eta_s > 0.0) || !(eta_t > 0.0)) throw ContractError("combine_mask: exponents must be > 0");
    Image m(score.width, score.height, 1);
    for (std::size_t i = 0; i < m.data.size(); ++i) {
        const double b = prior.data[i];
        const double s = score.data[i];
        m.data[i] = std::min(1.0, b * std::pow(s, eta_s) + (1.0 - b) * std::pow(s, eta_t));
    }
    return m;
}

}  // namespace dualsplat
