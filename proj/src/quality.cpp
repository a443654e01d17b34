#include "mvopt/quality.hpp"

#include <cmath>
#include <stdexcept>

#include "mvopt/kv.hpp"

namespace mvopt::qual {

double vis_score(const vis::VisibilityStats& stats, int entity_id) {
    const auto it = stats.counts.find(entity_id);
    if (it == stats.counts.end()) return 0.0;
    return static_cast<double>(it->second) / static_cast<double>(stats.total_pixels);
}

double eccentricity(const cam::ViewParams& v, const scene::Entity& e) {
    const auto ndc = cam::ndc_of_point(v, e.box.center());
    if (!ndc) return 0.0;
    const double d = std::sqrt(ndc->x * ndc->x + ndc->y * ndc->y);
    return std::max(0.0, 1.0 - d / std::numbers::sqrt2);
}

std::map<int, double> redundancy_factors(const std::vector<vis::VisibilityStats>& per_view) {
    std::map<int, int> seen_in;
    for (const auto& stats : per_view) {
        for (const auto& [id, count] : stats.counts) {
            if (count > 0) ++seen_in[id];
        }
    }
    std::map<int, double> red;
    for (const auto& [id, c] : seen_in) red[id] = 1.0 / static_cast<double>(c);
    return red;
}

double term_contribution(double vis, double red, double rel, double ecc, const Weights& w) {
    return vis * red * (w.w1 * rel + w.w2 * ecc);
}

QualityEvaluator::QualityEvaluator(const scene::Scenario& s, const Weights& w,
                                   const scene::RelevanceConfig& rcfg, const vis::VisibilityConfig& vcfg)
    : scenario_(&s), w_(w), rcfg_(rcfg), vcfg_(vcfg) {
    if (!(w.w1 >= 0.0) || !(w.w2 >= 0.0) || !(w.w1 + w.w2 > 0.0))
        throw std::invalid_argument("weights must be nonnegative with w1 + w2 > 0");
    entity_by_id_.reserve(s.entities.size());
    rel_by_id_.reserve(s.entities.size());
    for (const auto& e : s.entities) {
        entity_by_id_.emplace(e.id, &e);
        rel_by_id_.emplace(e.id, scene::relevance(e, rcfg));
    }
}

QualityEvaluator::ViewSlot QualityEvaluator::render_slot(const cam::ViewParams& v) const {
    ViewSlot slot;
    slot.params = v;
    const vis::ItemBuffer buf = vis::render_item_buffer(v, *scenario_, vcfg_);
    const vis::VisibilityStats stats = vis::coverage_histogram(buf);
    slot.ids.reserve(stats.counts.size());
    slot.vis.reserve(stats.counts.size());
    slot.ecc.reserve(stats.counts.size());
    for (const auto& [id, count] : stats.counts) {  // std::map: ascending id
        slot.ids.push_back(id);
        slot.vis.push_back(static_cast<double>(count) / static_cast<double>(stats.total_pixels));
        slot.ecc.push_back(eccentricity(v, *entity_by_id_.at(id)));
    }
    return slot;
}

void QualityEvaluator::reset(const cam::MultiView& mv) {
    slots_.clear();
    slots_.reserve(mv.views.size());
    for (const auto& v : mv.views) slots_.push_back(render_slot(v));
    q_ = compute_q(-1, nullptr, nullptr);
}

const QualityEvaluator::ViewSlot& QualityEvaluator::slot_at(int j, int replaced_index,
                                                            const ViewSlot* replacement) const {
    return (j == replaced_index && replacement) ? *replacement : slots_[static_cast<size_t>(j)];
}

double QualityEvaluator::compute_q(int replaced_index, const ViewSlot* replacement,
                                   QualityBreakdown* breakdown_out) const {
    const int k = static_cast<int>(slots_.size());

    std::unordered_map<int, int> seen_in;
    for (int j = 0; j < k; ++j) {
        for (const int id : slot_at(j, replaced_index, replacement).ids) ++seen_in[id];
    }

    double q = 0.0;
    for (int j = 0; j < k; ++j) {
        const ViewSlot& slot = slot_at(j, replaced_index, replacement);
        for (size_t i = 0; i < slot.ids.size(); ++i) {
            const int id = slot.ids[i];
            const double red = 1.0 / static_cast<double>(seen_in.at(id));
            const double rel = rel_by_id_.at(id);
            const double c = term_contribution(slot.vis[i], red, rel, slot.ecc[i], w_);
            q += c;
            if (breakdown_out) {
                breakdown_out->terms.push_back(
                    EntityViewTerm{id, j, slot.vis[i], rel, red, slot.ecc[i], c});
            }
        }
    }
    if (breakdown_out) breakdown_out->total = q;
    return q;
}

double QualityEvaluator::q_if_replaced(int member_index, const ViewSlot& slot) const {
    return compute_q(member_index, &slot, nullptr);
}

void QualityEvaluator::replace(int member_index, ViewSlot slot) {
    slots_[static_cast<size_t>(member_index)] = std::move(slot);
    q_ = compute_q(-1, nullptr, nullptr);
}

cam::MultiView QualityEvaluator::multiview() const {
    cam::MultiView mv;
    mv.views.reserve(slots_.size());
    for (const auto& slot : slots_) mv.views.push_back(slot.params);
    return mv;
}

QualityBreakdown QualityEvaluator::breakdown() const {
    QualityBreakdown b;
    compute_q(-1, nullptr, &b);
    return b;
}

QualityBreakdown total_quality(const cam::MultiView& mv, const scene::Scenario& s, const Weights& w,
                               const scene::RelevanceConfig& rcfg, const vis::VisibilityConfig& vcfg) {
    QualityEvaluator eval(s, w, rcfg, vcfg);
    eval.reset(mv);
    return eval.breakdown();
}

void write_breakdown_csv(const QualityBreakdown& b, std::ostream& out) {
    out << "view_index,entity_id,vis,rel,red,ecc,contribution\n";
    for (const auto& t : b.terms) {
        out << t.view_index << ',' << t.entity_id << ',' << kv::format_double(t.vis) << ','
            << kv::format_double(t.rel) << ',' << kv::format_double(t.red) << ','
            << kv::format_double(t.ecc) << ',' << kv::format_double(t.contribution) << '\n';
    }
    out << "TOTAL,,,,,," << kv::format_double(b.total) << '\n';
}

}  // namespace mvopt::qual
