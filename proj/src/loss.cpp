// SPDX-License-Identifier: Apache-2.0
#include "dualsplat/loss.hpp"

#include <array>
#include <cmath>

namespace dualsplat {

namespace {

std::array<double, kSsimWindow> gaussian_window() {
    std::array<double, kSsimWindow> w{};
    double sum = 0.0;
    for (int i = 0; i < kSsimWindow; ++i) {
        const double d = i - kSsimWindow / 2;
        w[i] = std::exp(-d * d / (2.0 * kSsimSigma * kSsimSigma));
        sum += w[i];
    }
    for (double& v : w) v /= sum;
    return w;
}

// Separable same-size filtering of one channel plane with zero padding.
void blur(const std::vector<double>& in, std::vector<double>& out, std::vector<double>& tmp, int W, int H) {
    static const auto w = gaussian_window();
    constexpr int r = kSsimWindow / 2;
    tmp.assign(in.size(), 0.0);
    out.assign(in.size(), 0.0);
    for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
            double s = 0.0;
            for (int k = -r; k <= r; ++k) {
                const int xx = x + k;
                if (xx >= 0 && xx < W) s += w[k + r] * in[static_cast<std::size_t>(y) * W + xx];
            }
            tmp[static_cast<std::size_t>(y) * W + x] = s;
        }
    }
    for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
            double s = 0.0;
            for (int k = -r; k <= r; ++k) {
                const int yy = y + k;
                if (yy >= 0 && yy < H) s += w[k + r] * tmp[static_cast<std::size_t>(yy) * W + x];
            }
            out[static_cast<std::size_t>(y) * W + x] = s;
        }
    }
}

}  // namespace

MaskedPair masked_images(const Image& render, const Image& gt, const Image& mask) {
    if (!render.same_shape(gt) || !render.same_extent(mask) || mask.channels != 1)
        throw ContractError("masked_images: shape mismatch");
    MaskedPair out{render, gt};
    for (int y = 0; y < render.height; ++y) {
        for (int x = 0; x < render.width; ++x) {
            const double m = mask.at(x, y);
            for (int c = 0; c < render.channels; ++c) {
                out.render.at(x, y, c) *= m;
                out.gt.at(x, y, c) *= m;
            }
        }
    }
    return out;
}

SsimResult ssim(const Image& a, const Image& b, bool with_grad) {
    if (!a.same_shape(b)) throw ContractError("ssim: shape mismatch");
    if (a.width < kSsimWindow || a.height < kSsimWindow)
        throw ContractError("ssim: image smaller than the 11x11 window");
    const int W = a.width;
    const int H = a.height;
    const std::size_t P = a.pixel_count();
    const double norm = 1.0 / (static_cast<double>(P) * a.channels);

    SsimResult res;
    if (with_grad) res.grad = Image(W, H, a.channels);

    std::vector<double> x(P), y(P), t(P), tmp;
    std::vector<double> mx, my, sxx, syy, sxy;
    std::vector<double> da(P), db(P), dc(P), ca, cb, cc;
    double total = 0.0;
    for (int ch = 0; ch < a.channels; ++ch) {
        for (std::size_t p = 0; p < P; ++p) {
            x[p] = a.data[p * a.channels + ch];
            y[p] = b.data[p * a.channels + ch];
        }
        blur(x, mx, tmp, W, H);
        blur(y, my, tmp, W, H);
        for (std::size_t p = 0; p < P; ++p) t[p] = x[p] * x[p];
        blur(t, sxx, tmp, W, H);
        for (std::size_t p = 0; p < P; ++p) t[p] = y[p] * y[p];
        blur(t, syy, tmp, W, H);
        for (std::size_t p = 0; p < P; ++p) t[p] = x[p] * y[p];
        blur(t, sxy, tmp, W, H);

        for (std::size_t p = 0; p < P; ++p) {
            const double mux = mx[p];
            const double muy = my[p];
            const double vx = sxx[p] - mux * mux;
            const double vy = syy[p] - muy * muy;
            const double cxy = sxy[p] - mux * muy;
            const double A1 = 2.0 * mux * muy + kSsimC1;
            const double A2 = 2.0 * cxy + kSsimC2;
            const double B1 = mux * mux + muy * muy + kSsimC1;
            const double B2 = vx + vy + kSsimC2;
            const double map = (A1 * A2) / (B1 * B2);
            total += map;
            if (!with_grad) continue;
            const double d_mux = 2.0 * muy * A2 / (B1 * B2) - map * 2.0 * mux / B1;
            const double d_vx = -map / B2;
            const double d_cxy = 2.0 * A1 / (B1 * B2);
            // d(vx)/dx_q = w (2 x_q - 2 mux);  d(cxy)/dx_q = w (y_q - muy)
            da[p] = d_mux - 2.0 * mux * d_vx - muy * d_cxy;
            db[p] = d_vx;
            dc[p] = d_cxy;
        }
        if (!with_grad) continue;
        // The window is symmetric, so the adjoint of blur is blur.
        blur(da, ca, tmp, W, H);
        blur(db, cb, tmp, W, H);
        blur(dc, cc, tmp, W, H);
        for (std::size_t p = 0; p < P; ++p)
            res.grad.data[p * a.channels + ch] = norm * (ca[p] + 2.0 * x[p] * cb[p] + y[p] * cc[p]);
    }
    res.value = total * norm;
    return res;
}

LossResult reconstruction_loss(const Image& render, const Image& gt, const Image& mask, double lambda_rec,
                               double dssim_divisor) {
    if (!(lambda_rec >= 0.0 && lambda_rec <= 1.0)) throw ContractError("reconstruction_loss: lambda_rec not in [0,1]");
    const MaskedPair m = masked_images(render, gt, mask);
    const std::size_t count = render.data.size();
    LossResult out;
    out.grad = Image(render.width, render.height, render.channels);

    double l1 = 0.0;
    const double l1_scale = (1.0 - lambda_rec) / static_cast<double>(count);
    for (std::size_t i = 0; i < count; ++i) {
        const double d = m.render.data[i] - m.gt.data[i];
        l1 += std::abs(d);
        out.grad.data[i] = d > 0.0 ? l1_scale : (d < 0.0 ? -l1_scale : 0.0);
    }
    out.l1 = l1 / static_cast<double>(count);

    if (lambda_rec > 0.0) {
        const SsimResult s = ssim(m.render, m.gt, true);
        out.dssim = (1.0 - s.value) / dssim_divisor;
        const double k = -lambda_rec / dssim_divisor;
        for (std::size_t i = 0; i < count; ++i) out.grad.data[i] += k * s.grad.data[i];
    } else {
        out.dssim = (1.0 - ssim(m.render, m.gt, false).value) / dssim_divisor;
    }
    out.loss = (1.0 - lambda_rec) * out.l1 + lambda_rec * out.dssim;

    // Chain through the mask.
    for (int y = 0; y < render.height; ++y)
        for (int x = 0; x < render.width; ++x)
            for (int c = 0; c < render.channels; ++c) out.grad.at(x, y, c) *= mask.at(x, y);
    return out;
}

}  // namespace dualsplat
