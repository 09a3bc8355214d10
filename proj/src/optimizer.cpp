// SPDX-License-Identifier: Apache-2.0
#include "dualsplat/optimizer.hpp"

#include <cmath>

namespace dualsplat {

void adam_update(std::span<double> params, std::span<const double> grad, AdamMoments& moments,
                 const AdamHyper& hyper, std::int64_t step) {
    if (params.size() != grad.size() || moments.m.size() != params.size() || moments.v.size() != params.size())
        throw ContractError("adam_update: size mismatch");
    if (step < 1) throw ContractError("adam_update: step must be >= 1");
    const double bc1 = 1.0 - std::pow(hyper.beta1, static_cast<double>(step));
    const double bc2 = 1.0 - std::pow(hyper.beta2, static_cast<double>(step));
    const double step_size = hyper.lr / bc1;
    for (std::size_t i = 0; i < params.size(); ++i) {
        moments.m[i] = hyper.beta1 * moments.m[i] + (1.0 - hyper.beta1) * grad[i];
        moments.v[i] = hyper.beta2 * moments.v[i] + (1.0 - hyper.beta2) * grad[i] * grad[i];
        const double denom = std::sqrt(moments.v[i] / bc2) + hyper.eps;
        params[i] -= step_size * moments.m[i] / denom;
    }
}

void OptimizerState::init(std::size_t gaussians, std::size_t predictor_params) {
    for (Attribute a : kAllAttributes) group(a).resize(arity(a) * gaussians);
    predictor.resize(predictor_params);
    step = 0;
}

void OptimizerState::remap(std::span<const std::int64_t> origin) {
    for (Attribute a : kAllAttributes) {
        const int k = arity(a);
        AdamMoments& g = group(a);
        AdamMoments next;
        next.resize(origin.size() * k);
        for (std::size_t i = 0; i < origin.size(); ++i) {
            if (origin[i] < 0) continue;
            const auto src = static_cast<std::size_t>(origin[i]);
            for (int j = 0; j < k; ++j) {
                next.m[k * i + j] = g.m[k * src + j];
                next.v[k * i + j] = g.v[k * src + j];
            }
        }
        g = std::move(next);
    }
}

}  // namespace dualsplat
