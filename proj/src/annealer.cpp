#include "mvopt/annealer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <string>

#include "mvopt/kv.hpp"

namespace mvopt::anneal {

namespace {

std::vector<int> sorted_viewer_ids(const scene::Scenario& s) {
    std::vector<int> ids;
    ids.reserve(s.viewers.size());
    for (const auto& v : s.viewers) ids.push_back(v.entity_id);
    std::sort(ids.begin(), ids.end());
    return ids;
}

Vec3 canonical_up_for(const Vec3& dir) {
    const Vec3 y{0.0, 1.0, 0.0};
    if (std::abs(dot(dir, y)) > 1.0 - 1e-6) return Vec3{0.0, 0.0, 1.0};
    return y;
}

// Shares the caller's engine so optimize keeps a single draw stream.
cam::MultiView initial_solution_impl(const scene::Scenario& s, int k,
                                     const scene::RelevanceConfig& rcfg, rng::Engine& eng,
                                     double fov_deg) {
    if (k < 1) throw std::invalid_argument("multiview size must be at least 1");
    std::vector<int> ids = sorted_viewer_ids(s);
    const int m = static_cast<int>(ids.size());
    if (k > m)
        throw std::invalid_argument("multiview size " + kv::format_int(k) + " exceeds " +
                                    kv::format_int(m) + " viewer agents");
    // Partial Fisher-Yates over the sorted ids.
    for (int i = 0; i < k; ++i) {
        const int j = i + static_cast<int>(rng::below(eng, static_cast<std::uint64_t>(m - i)));
        std::swap(ids[i], ids[j]);
    }
    cam::MultiView mv;
    mv.views.reserve(k);
    for (int i = 0; i < k; ++i) mv.views.push_back(default_view_for(s, rcfg, ids[i], fov_deg));
    return mv;
}

}  // namespace

cam::ViewParams default_view_for(const scene::Scenario& s, const scene::RelevanceConfig& rcfg,
                                 int viewer_id, double fov_deg) {
    const scene::ViewerAgent* viewer = s.find_viewer(viewer_id);
    if (!viewer) throw std::invalid_argument("no viewer agent with id " + kv::format_int(viewer_id));

    const scene::Entity* target = nullptr;
    double best_rel = -1.0;
    for (const auto& e : s.entities) {
        const double rel = scene::relevance(e, rcfg);
        if (rel > best_rel || (rel == best_rel && target && e.id < target->id)) {
            best_rel = rel;
            target = &e;
        }
    }

    cam::ViewParams v;
    v.view_id = viewer_id;
    v.pos = scene::anchor_position(s, *viewer);
    Vec3 dir{0.0, 0.0, -1.0};
    if (target) {
        const Vec3 to_target = target->box.center() - v.pos;
        if (norm(to_target) > 1e-9) dir = normalized(to_target);
    }
    v.view_dir = dir;
    v.view_up = canonical_up_for(dir);
    v.fov_y_deg = fov_deg;
    return v;
}

cam::MultiView initial_solution(const scene::Scenario& s, int k, const scene::RelevanceConfig& rcfg,
                                std::uint64_t seed, double fov_deg) {
    rng::Engine eng(seed);
    return initial_solution_impl(s, k, rcfg, eng, fov_deg);
}

Move propose_move(const cam::MultiView& mv, const scene::Scenario& s, const AdaptiveState& a,
                  const MoveConfig& cfg, rng::Engine& eng) {
    const int k = static_cast<int>(mv.views.size());
    if (k == 0) throw std::invalid_argument("cannot propose a move for an empty multiview");

    std::set<int> members;
    for (const auto& v : mv.views) members.insert(v.view_id);
    std::vector<int> outsiders;
    for (int id : sorted_viewer_ids(s))
        if (!members.count(id)) outsiders.push_back(id);

    Move move;
    const double coin = rng::unit(eng);
    if (coin < cfg.swap_probability && !outsiders.empty()) {
        move.kind = Move::Kind::SwapView;
        move.member_index = static_cast<int>(rng::below(eng, static_cast<std::uint64_t>(k)));
        move.incoming_viewer_id =
            outsiders[rng::below(eng, static_cast<std::uint64_t>(outsiders.size()))];
        return move;
    }

    const int which = static_cast<int>(rng::below(eng, 3));
    move.member_index = static_cast<int>(rng::below(eng, static_cast<std::uint64_t>(k)));
    const double scale = a.step_scale;
    switch (which) {
        case 0:
            move.kind = Move::Kind::PerturbDir;
            move.axis = rng::unit_vector(eng);
            move.angle_deg = rng::uniform(eng, -cfg.dir_base_deg * scale, cfg.dir_base_deg * scale);
            break;
        case 1:
            move.kind = Move::Kind::PerturbUp;
            move.angle_deg = rng::uniform(eng, -cfg.up_base_deg * scale, cfg.up_base_deg * scale);
            break;
        default:
            move.kind = Move::Kind::PerturbFov;
            move.fov_delta_deg =
                rng::uniform(eng, -cfg.fov_base_deg * scale, cfg.fov_base_deg * scale);
            break;
    }
    return move;
}

cam::MultiView apply_move(const cam::MultiView& mv, const scene::Scenario& s,
                          const scene::RelevanceConfig& rcfg, const Move& move, double fov_deg) {
    if (move.member_index < 0 || move.member_index >= static_cast<int>(mv.views.size()))
        throw std::invalid_argument("move member index out of range");
    cam::MultiView out = mv;
    cam::ViewParams& v = out.views[move.member_index];
    switch (move.kind) {
        case Move::Kind::SwapView:
            v = default_view_for(s, rcfg, move.incoming_viewer_id, fov_deg);
            break;
        case Move::Kind::PerturbDir: {
            const Vec3 nd = normalized(rotate_about_axis(v.view_dir, move.axis, deg_to_rad(move.angle_deg)));
            v.view_dir = nd;
            if (std::abs(dot(nd, v.view_up)) > 1.0 - 1e-6) v.view_up = canonical_up_for(nd);
            break;
        }
        case Move::Kind::PerturbUp: {
            Vec3 nu = rotate_about_axis(v.view_up, v.view_dir, deg_to_rad(move.angle_deg));
            nu = nu - v.view_dir * dot(nu, v.view_dir);
            v.view_up = norm(nu) < 1e-9 ? canonical_up_for(v.view_dir) : normalized(nu);
            break;
        }
        case Move::Kind::PerturbFov:
            v.fov_y_deg =
                std::clamp(v.fov_y_deg + move.fov_delta_deg, cam::kMinFovDeg, cam::kMaxFovDeg);
            break;
    }
    return out;
}

double acceptance_probability(double delta_q, double temperature) {
    if (!(temperature > 0.0)) throw std::invalid_argument("temperature must be positive");
    if (delta_q >= 0.0) return 1.0;
    return std::exp(delta_q / temperature);
}

AdaptiveState adapt_step(const AdaptiveState& a, double window_acceptance, const MoveConfig& cfg) {
    AdaptiveState out = a;
    if (window_acceptance > 0.5)
        out.step_scale *= 1.1;
    else if (window_acceptance < 0.3)
        out.step_scale *= 0.9;
    out.step_scale = std::clamp(out.step_scale, cfg.scale_min, cfg.scale_max);
    return out;
}

OptimizeResult optimize(const scene::Scenario& s, int k, const OptimizeParams& params,
                        std::uint64_t seed, const std::optional<cam::MultiView>& warm) {
    rng::Engine eng(seed);

    cam::MultiView start;
    if (warm) {
        if (auto msg = cam::check_multiview(*warm, k))
            throw std::invalid_argument("warm start rejected: " + *msg);
        start = *warm;
    } else {
        start = initial_solution_impl(s, k, params.rcfg, eng, params.default_fov_deg);
    }

    qual::QualityEvaluator eval(s, params.weights, params.rcfg, params.vcfg);
    eval.reset(start);

    // T0 = stddev of |delta Q| over sampled moves from the start solution.
    AdaptiveState adaptive;
    double sum = 0.0, sum_sq = 0.0;
    const int n_samples = std::max(1, params.sched.t0_samples);
    for (int i = 0; i < n_samples; ++i) {
        const Move move = propose_move(eval.multiview(), s, adaptive, params.moves, eng);
        const cam::MultiView cand = apply_move(eval.multiview(), s, params.rcfg, move, params.default_fov_deg);
        const auto slot = eval.render_slot(cand.views[move.member_index]);
        const double dq = std::abs(eval.q_if_replaced(move.member_index, slot) - eval.current_q());
        sum += dq;
        sum_sq += dq * dq;
    }
    const double mean = sum / n_samples;
    const double var = std::max(0.0, sum_sq / n_samples - mean * mean);
    const double t0 = std::max(std::sqrt(var) * params.t0_scale, 1e-12);

    OptimizeResult result;
    result.best = eval.multiview();
    result.best_q = eval.current_q();
    result.trace.reserve(params.sched.max_iters);

    double temperature = t0;
    int window_count = 0;
    int window_accepts = 0;
    for (int iter = 1; iter <= params.sched.max_iters; ++iter) {
        if (temperature < params.sched.t_floor_ratio * t0) break;

        const Move move = propose_move(eval.multiview(), s, adaptive, params.moves, eng);
        const cam::MultiView cand = apply_move(eval.multiview(), s, params.rcfg, move, params.default_fov_deg);
        auto slot = eval.render_slot(cand.views[move.member_index]);
        const double new_q = eval.q_if_replaced(move.member_index, slot);
        const double dq = new_q - eval.current_q();

        // The acceptance uniform is drawn even for uphill moves so the
        // stream stays aligned regardless of outcomes.
        const double u = rng::unit(eng);
        const bool accept = u < acceptance_probability(dq, temperature);
        if (accept) {
            eval.replace(move.member_index, std::move(slot));
            if (eval.current_q() > result.best_q) {
                result.best_q = eval.current_q();
                result.best = eval.multiview();
            }
        }

        ++window_count;
        if (accept) ++window_accepts;
        if (window_count == params.moves.window) {
            adaptive = adapt_step(adaptive,
                                  static_cast<double>(window_accepts) / window_count, params.moves);
            window_count = 0;
            window_accepts = 0;
        }

        result.trace.push_back({iter, eval.current_q(), result.best_q, temperature});
        if (params.sched.iters_per_temp > 0 && iter % params.sched.iters_per_temp == 0)
            temperature *= params.sched.alpha;
    }
    result.iterations_run = static_cast<int>(result.trace.size());

    if (auto msg = cam::check_multiview(result.best, k))
        throw std::runtime_error("optimizer produced an invalid multiview: " + *msg);
    return result;
}

BruteForceResult brute_force_optimum(const scene::Scenario& s, int k, const qual::Weights& w,
                                     const scene::RelevanceConfig& rcfg, const vis::VisibilityConfig& vcfg,
                                     const std::vector<ParamGridEntry>& grid, long long budget,
                                     double fov_deg) {
    const std::vector<int> ids = sorted_viewer_ids(s);
    const int m = static_cast<int>(ids.size());
    if (k < 1) throw std::invalid_argument("multiview size must be at least 1");
    if (k > m)
        throw std::invalid_argument("multiview size " + kv::format_int(k) + " exceeds " +
                                    kv::format_int(m) + " viewer agents");

    long long combos = 1;
    for (int i = 0; i < k; ++i) {
        combos = combos * (m - i) / (i + 1);
        if (combos > budget) break;
    }
    const long long per_subset = grid.empty() ? 1 : static_cast<long long>(grid.size());
    if (combos > budget || combos * per_subset > budget)
        throw BudgetError("brute force needs " + kv::format_int(combos * per_subset) +
                          " evaluations, budget is " + kv::format_int(budget));

    BruteForceResult result;
    result.q = -std::numeric_limits<double>::infinity();

    std::vector<int> pick(k);
    for (int i = 0; i < k; ++i) pick[i] = i;
    const auto advance = [&]() {
        int i = k - 1;
        while (i >= 0 && pick[i] == m - k + i) --i;
        if (i < 0) return false;
        ++pick[i];
        for (int j = i + 1; j < k; ++j) pick[j] = pick[j - 1] + 1;
        return true;
    };

    do {
        cam::MultiView base;
        base.views.reserve(k);
        for (int i = 0; i < k; ++i) base.views.push_back(default_view_for(s, rcfg, ids[pick[i]], fov_deg));

        const auto consider = [&](const cam::MultiView& mv) {
            ++result.candidates_evaluated;
            const double q = qual::total_quality(mv, s, w, rcfg, vcfg).total;
            // Subsets arrive in lexicographic id order, so ties keep the
            // first (smallest) id set.
            if (q > result.q) {
                result.q = q;
                result.best = mv;
            }
        };

        if (grid.empty()) {
            consider(base);
        } else {
            for (const auto& g : grid) {
                cam::MultiView mv = base;
                for (auto& v : mv.views) {
                    v.view_dir = normalized(g.dir);
                    v.view_up = normalized(g.up);
                    v.fov_y_deg = g.fov_deg;
                }
                consider(mv);
            }
        }
    } while (advance());

    return result;
}

cam::MultiView warm_start(const OptimizeResult& prev, const scene::Scenario& next,
                          const scene::RelevanceConfig& rcfg, rng::Engine& eng, double fov_deg) {
    std::set<int> kept;
    cam::MultiView mv = prev.best;
    std::vector<int> vanished;
    for (int i = 0; i < static_cast<int>(mv.views.size()); ++i) {
        cam::ViewParams& v = mv.views[i];
        const scene::ViewerAgent* viewer = next.find_viewer(v.view_id);
        if (viewer) {
            v.pos = scene::anchor_position(next, *viewer);
            kept.insert(v.view_id);
        } else {
            vanished.push_back(i);
        }
    }

    std::vector<int> outsiders;
    for (int id : sorted_viewer_ids(next))
        if (!kept.count(id)) outsiders.push_back(id);

    for (int slot : vanished) {
        if (outsiders.empty())
            throw std::runtime_error("not enough viewer agents to refill the multiview");
        const auto pick = rng::below(eng, static_cast<std::uint64_t>(outsiders.size()));
        const int id = outsiders[pick];
        outsiders.erase(outsiders.begin() + static_cast<std::ptrdiff_t>(pick));
        mv.views[slot] = default_view_for(next, rcfg, id, fov_deg);
    }
    return mv;
}

void write_trace_csv(const std::vector<TraceRow>& trace, std::ostream& out) {
    out << "iteration,current_q,best_q,temperature\n";
    for (const auto& row : trace) {
        out << kv::format_int(row.iteration) << ',' << kv::format_double(row.current_q) << ','
            << kv::format_double(row.best_q) << ',' << kv::format_double(row.temperature) << '\n';
    }
}

}  // namespace mvopt::anneal
