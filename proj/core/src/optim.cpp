// SPDX-License-Identifier: Apache-2.0
#include "slotspe/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace slotspe {

bool adam_step(ParamStore& params, const Gradients& grads, AdamState& state, double lr) {
    for (const auto& [name, g] : grads) {
        if (!params.contains(name)) throw std::invalid_argument("adam_step: unknown parameter " + name);
        if (g.shape() != params.get(name).shape())
            throw std::invalid_argument("adam_step: gradient shape mismatch for " + name);
        if (!g.all_finite()) {
            ++state.skipped;
            return false;
        }
    }

    ++state.step;
    const double t = static_cast<double>(state.step);
    const double c1 = 1.0 - std::pow(kAdamBeta1, t);
    const double c2 = 1.0 - std::pow(kAdamBeta2, t);
    for (const auto& [name, entry] : params.entries()) {
        if (!entry.trainable) continue;
        Tensor& p = params.get_mut(name);
        Tensor& m = state.m.try_emplace(name, p.rows(), p.cols(), 0.0).first->second;
        Tensor& v = state.v.try_emplace(name, p.rows(), p.cols(), 0.0).first->second;
        const auto git = grads.find(name);
        const Tensor* g = git == grads.end() ? nullptr : &git->second;
        for (std::size_t i = 0; i < p.size(); ++i) {
            const double gi = g ? (*g)[i] : 0.0;
            m[i] = quantize(kAdamBeta1 * m[i] + (1.0 - kAdamBeta1) * gi);
            v[i] = quantize(kAdamBeta2 * v[i] + (1.0 - kAdamBeta2) * gi * gi);
            const double update = lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + kAdamEps);
            p[i] = quantize(p[i] - update);
        }
    }
    return true;
}

}  // namespace slotspe
