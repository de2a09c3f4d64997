// SPDX-License-Identifier: Apache-2.0
#include "slotspe/model.hpp"

#include <stdexcept>

#include "slotspe/error.hpp"
#include "slotspe/fusion_head.hpp"

namespace slotspe {

Model init_model(const ModelConfig& config, std::uint64_t seed) {
    validate(config);
    Model m;
    m.config = config;
    Rng rng = Rng::substream(seed, 0);
    const std::size_t d = config.width;
    add_slot_params(m.params, names::slot_h, config.slots_histology, d, rng);
    add_slot_params(m.params, names::slot_g, config.slots_genomic, d, rng);
    add_moe_params(m.params, names::moe_h, d, config.num_bins, rng);
    add_moe_params(m.params, names::moe_g, d, config.num_bins, rng);
    add_recon_shared_params(m.params, config.genomic_instances, d, rng);
    add_decoder_params(m.params, names::recon_g, d, rng);
    add_decoder_params(m.params, names::recon_h, d, rng);
    add_decoder_params(m.params, names::recon_cross, d, rng);
    add_self_attention_params(m.params, names::self_h, d, rng);
    add_self_attention_params(m.params, names::self_g, d, rng);
    add_cross_attention_params(m.params, names::cross, d, rng);
    add_risk_head_params(m.params, names::risk, d, config.num_bins, rng);
    return m;
}

void check_patient(const Model& model, const PatientData& data) {
    const ModelConfig& c = model.config;
    if (data.histology == nullptr) throw DataError("patient has no histology bag");
    if (data.histology->modality != Modality::histology) throw DataError("histology bag has the genomic tag");
    if (data.histology->width != c.width)
        throw DataError("histology width " + std::to_string(data.histology->width) + " does not match model width " +
                        std::to_string(c.width));
    if (data.histology->instances == 0) throw DataError("histology bag is empty");
    for (std::size_t r : data.histology_rows)
        if (r >= data.histology->instances) throw DataError("histology row index out of range");
    if (data.genomic != nullptr) {
        if (data.genomic->modality != Modality::genomic) throw DataError("genomic bag has the histology tag");
        if (data.genomic->width != c.width)
            throw DataError("genomic width " + std::to_string(data.genomic->width) + " does not match model width " +
                            std::to_string(c.width));
        if (data.genomic->instances != c.genomic_instances)
            throw DataError("genomic bag has " + std::to_string(data.genomic->instances) +
                            " pathways, model expects " + std::to_string(c.genomic_instances));
    }
}

namespace {

BranchOutput decode_branch(BoundParams& p, const ModelConfig& c, const std::string& moe, SlotSet slots,
                           std::size_t slot_count, const ForwardOptions& options) {
    Graph& g = p.graph();
    BranchOutput b;
    b.slots = slots;
    b.scores = gate_scores(p, moe, slots.slots);
    if (c.selective_activation) {
        b.gate = gumbel_topk_mask(g, b.scores, c.top_k(slot_count), c.gate_temperature, options.rng,
                                  options.training);
        b.weights = renormalize_weights(g, b.scores, b.gate, c.gate_temperature);
    } else {
        b.gate = full_mask(g, slot_count);
        b.weights = g.constant(Tensor(1, slot_count, 1.0 / static_cast<double>(slot_count)));
    }
    b.slot_logits = slot_logits(p, moe, slots.slots);
    b.logits = gated_mixture(g, b.weights, b.slot_logits);
    return b;
}

}  // namespace

PatientGraph build_patient(BoundParams& p, const Model& model, const PatientData& data, const ForwardOptions& options,
                           const std::optional<Label>& label) {
    check_patient(model, data);
    if (options.training && options.rng == nullptr) throw std::invalid_argument("build_patient: training needs an rng");
    Graph& g = p.graph();
    const ModelConfig& c = model.config;
    const InitMode mode = options.training ? InitMode::stochastic : InitMode::deterministic;

    Tensor xh = data.histology_rows.empty() ? data.histology->to_tensor()
                                            : data.histology->rows_to_tensor(data.histology_rows);
    Var bag_h = g.constant(std::move(xh));

    PatientGraph out;
    SlotSet slots_h = encode(p, names::slot_h, bag_h, c.iterations, mode, options.rng, c.aggregation);

    Var bag_g;
    if (data.genomic != nullptr) {
        bag_g = g.constant(data.genomic->to_tensor());
    } else {
        SlotSet cross = cross_modal_encode(p, names::slot_g, bag_h, c.iterations, mode, options.rng, c.aggregation);
        out.imputed = cross_modal_reconstruct(p, names::recon_cross, cross.slots).features;
        bag_g = out.imputed;
    }
    SlotSet slots_g = encode(p, names::slot_g, bag_g, c.iterations, mode, options.rng, c.aggregation);

    out.histology = decode_branch(p, c, names::moe_h, slots_h, c.slots_histology, options);
    out.genomic = decode_branch(p, c, names::moe_g, slots_g, c.slots_genomic, options);

    Var self_h = masked_self_attention(p, names::self_h, slots_h.slots, out.histology.gate.selected);
    Var self_g = masked_self_attention(p, names::self_g, slots_g.slots, out.genomic.gate.selected);
    auto [cross_h, cross_g] = iterative_cross_attention(p, names::cross, slots_h.slots, slots_g.slots, c.fusion_layers);
    out.fused = pool_concat(g, cross_h, cross_g, self_h, self_g);
    out.logits = risk_head(p, names::risk, out.fused);

    if (!label) return out;

    out.surv_fused = nll_loss(g, out.logits, label->bin, label->censor);
    out.surv_hist = nll_loss(g, out.histology.logits, label->bin, label->censor);
    out.surv_gen = nll_loss(g, out.genomic.logits, label->bin, label->censor);
    const Var surv[] = {out.surv_fused, out.surv_hist, out.surv_gen};
    Var total = g.add(g.add(surv[0], surv[1]), surv[2]);

    if (options.lambda != 0.0) {
        std::vector<Var> recon;
        out.recon_h = reconstruct_histology(p, names::recon_h, slots_h.slots, bag_h).loss;
        recon.push_back(out.recon_h);
        if (data.genomic != nullptr) {
            out.recon_g = reconstruct_genomic(p, names::recon_g, slots_g.slots, bag_g).loss;
            recon.push_back(out.recon_g);
            if (c.cross_reconstruction) {
                SlotSet cross = cross_modal_encode(p, names::slot_g, bag_h, c.iterations, mode, options.rng,
                                                   c.aggregation, c.cross_init, slots_g.slots);
                out.recon_cross = cross_modal_reconstruct(p, names::recon_cross, cross.slots, bag_g).loss;
                recon.push_back(out.recon_cross);
            }
        }
        Var recon_sum = recon.front();
        for (std::size_t i = 1; i < recon.size(); ++i) recon_sum = g.add(recon_sum, recon[i]);
        total = g.add(total, g.scale(recon_sum, options.lambda));
    }
    out.loss = total;
    return out;
}

LossTerms loss_terms(const Graph& g, const PatientGraph& pg) {
    auto v = [&](Var x) { return x.valid() ? g.value(x).item() : 0.0; };
    return {v(pg.surv_fused), v(pg.surv_hist), v(pg.surv_gen), v(pg.recon_g), v(pg.recon_h), v(pg.recon_cross)};
}

FeatureBag impute_genomic(const Model& model, const FeatureBag& histology) {
    if (model.steps == 0) throw std::logic_error("impute_genomic: model parameters are untrained");
    PatientData data{&histology, nullptr, {}};
    check_patient(model, data);
    const ModelConfig& c = model.config;
    Graph g;
    BoundParams p(g, model.params);
    Var bag_h = g.constant(histology.to_tensor());
    SlotSet cross = cross_modal_encode(p, names::slot_g, bag_h, c.iterations, InitMode::deterministic, nullptr,
                                       c.aggregation);
    Var out = cross_modal_reconstruct(p, names::recon_cross, cross.slots).features;
    return FeatureBag::from_tensor(Modality::genomic, g.value(out));
}

}  // namespace slotspe
