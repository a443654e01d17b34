#pragma once

#include <map>
#include <ostream>
#include <unordered_map>
#include <vector>

#include "mvopt/camera.hpp"
#include "mvopt/scene.hpp"
#include "mvopt/visibility.hpp"

namespace mvopt::qual {

struct Weights {
    double w1 = 0.8;  // relevance weight
    double w2 = 0.2;  // eccentricity weight

    bool operator==(const Weights&) const = default;
};

struct EntityViewTerm {
    int entity_id = 0;
    int view_index = 0;
    double vis = 0.0;
    double rel = 0.0;
    double red = 0.0;
    double ecc = 0.0;
    double contribution = 0.0;
};

struct QualityBreakdown {
    std::vector<EntityViewTerm> terms;  // vis > 0 terms, ordered by (view, id)
    double total = 0.0;
};

// Fraction of the image covered by the entity's nearest-hit pixels.
double vis_score(const vis::VisibilityStats& stats, int entity_id);

// Centrality of the projected box center: 1 at the image center, 0 at the
// corners, 0 when the center is outside the frustum (even if parts of the
// box are visible).
double eccentricity(const cam::ViewParams& v, const scene::Entity& e);

// red(i) = 1 / |views seeing i|. Entities visible nowhere are omitted.
std::map<int, double> redundancy_factors(const std::vector<vis::VisibilityStats>& per_view);

double term_contribution(double vis, double red, double rel, double ecc, const Weights& w);

// Incremental evaluator for the annealing loop: one view of the multiview
// changes per move, so only that view is re-rendered. The sum is always
// accumulated in (view index, entity id) order, which keeps every Q it
// reports bit-identical to a fresh total_quality evaluation.
class QualityEvaluator {
public:
    struct ViewSlot {
        cam::ViewParams params;
        std::vector<int> ids;     // ascending, vis > 0 only
        std::vector<double> vis;
        std::vector<double> ecc;
    };

    QualityEvaluator(const scene::Scenario& s, const Weights& w, const scene::RelevanceConfig& rcfg,
                     const vis::VisibilityConfig& vcfg);

    ViewSlot render_slot(const cam::ViewParams& v) const;

    void reset(const cam::MultiView& mv);
    double q_if_replaced(int member_index, const ViewSlot& slot) const;
    void replace(int member_index, ViewSlot slot);

    double current_q() const { return q_; }
    cam::MultiView multiview() const;
    QualityBreakdown breakdown() const;

    const scene::Scenario& scenario() const { return *scenario_; }

private:
    double compute_q(int replaced_index, const ViewSlot* replacement,
                     QualityBreakdown* breakdown_out) const;
    const ViewSlot& slot_at(int j, int replaced_index, const ViewSlot* replacement) const;

    const scene::Scenario* scenario_;
    Weights w_;
    scene::RelevanceConfig rcfg_;
    vis::VisibilityConfig vcfg_;
    std::unordered_map<int, const scene::Entity*> entity_by_id_;
    std::unordered_map<int, double> rel_by_id_;
    std::vector<ViewSlot> slots_;
    double q_ = 0.0;
};

// The full objective: renders every view and sums
//   vis * red * (w1 * rel + w2 * ecc)
// over views and entities. Pure; propagates degenerate-frame errors.
QualityBreakdown total_quality(const cam::MultiView& mv, const scene::Scenario& s, const Weights& w,
                               const scene::RelevanceConfig& rcfg, const vis::VisibilityConfig& vcfg);

// CSV: view_index,entity_id,vis,rel,red,ecc,contribution with a final
// TOTAL row.
void write_breakdown_csv(const QualityBreakdown& b, std::ostream& out);

}  // namespace mvopt::qual
