// SPDX-License-Identifier: Apache-2.0
#include "slotspe/survival.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace slotspe {

namespace {

double clamp_hazard(double h) { return std::clamp(h, kHazardFloor, 1.0 - kHazardFloor); }

void check_bin(std::size_t bin, std::size_t bins, int censor) {
    if (bin < 1 || bin > bins)
        throw std::invalid_argument("nll_loss: bin " + std::to_string(bin) + " outside [1, " + std::to_string(bins) +
                                    "]");
    if (censor != 0 && censor != 1) throw std::invalid_argument("nll_loss: censor must be 0 or 1");
}

}  // namespace

HazardCurve curve_from_hazards(std::span<const double> hazards) {
    HazardCurve c;
    c.hazards.reserve(hazards.size());
    c.survival.reserve(hazards.size());
    double s = 1.0;
    for (double h : hazards) {
        const double hc = clamp_hazard(h);
        c.hazards.push_back(hc);
        s *= 1.0 - hc;
        c.survival.push_back(s);
        c.risk -= s;
    }
    return c;
}

HazardCurve hazards_from_logits(std::span<const double> logits) {
    std::vector<double> h(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i) h[i] = 1.0 / (1.0 + std::exp(-logits[i]));
    return curve_from_hazards(h);
}

double nll_loss(const HazardCurve& curve, std::size_t bin, int censor) {
    check_bin(bin, curve.hazards.size(), censor);
    double loss = 0.0;
    const std::size_t survived = censor == 1 ? bin : bin - 1;
    for (std::size_t k = 0; k < survived; ++k) loss -= std::log(1.0 - curve.hazards[k]);
    if (censor == 0) loss -= std::log(curve.hazards[bin - 1]);
    return loss;
}

Var nll_loss(Graph& g, Var logits, std::size_t bin, int censor) {
    const Shape s = g.shape(logits);
    if (s.rows != 1) throw std::invalid_argument("nll_loss: logits must be a row vector");
    check_bin(bin, s.cols, censor);

    Tensor survive_coef(1, s.cols, 0.0);
    Tensor event_coef(1, s.cols, 0.0);
    const std::size_t survived = censor == 1 ? bin : bin - 1;
    for (std::size_t k = 0; k < survived; ++k) survive_coef[k] = 1.0;
    if (censor == 0) event_coef[bin - 1] = 1.0;

    Var log_h = g.log(g.clamp(g.sigmoid(logits), kHazardFloor, 1.0 - kHazardFloor));
    Var log_1mh = g.log(g.clamp(g.sigmoid(g.scale(logits, -1.0)), kHazardFloor, 1.0 - kHazardFloor));
    Var ll = g.add(g.sum(g.mul(log_1mh, g.constant(survive_coef))), g.sum(g.mul(log_h, g.constant(event_coef))));
    return g.scale(ll, -1.0);
}

LossReport total_loss(std::span<const LossTerms> batch, double lambda) {
    LossReport r;
    r.lambda = lambda;
    if (batch.empty()) return r;
    for (const LossTerms& t : batch) {
        r.surv_fused += t.surv_fused;
        r.surv_hist += t.surv_hist;
        r.surv_gen += t.surv_gen;
        r.recon_g += t.recon_g;
        r.recon_h += t.recon_h;
        r.recon_cross += t.recon_cross;
    }
    const double n = static_cast<double>(batch.size());
    r.surv_fused /= n;
    r.surv_hist /= n;
    r.surv_gen /= n;
    r.recon_g /= n;
    r.recon_h /= n;
    r.recon_cross /= n;
    r.total = (r.surv_fused + r.surv_hist + r.surv_gen) + lambda * (r.recon_g + r.recon_h + r.recon_cross);
    return r;
}

}  // namespace slotspe
