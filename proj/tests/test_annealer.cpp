#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <sstream>

#include "mvopt/annealer.hpp"

using namespace mvopt;

namespace {

scene::Scenario small_scene(std::uint64_t seed, int n = 18, int m = 6) {
    scene::GeneratorSpec spec;
    spec.seed = seed;
    spec.n_entities = n;
    spec.m_viewers = m;
    spec.extent = {{0, 0, 0}, {150, 40, 150}};
    return scene::generate_scenario(spec);
}

anneal::OptimizeParams desk_params() {
    anneal::OptimizeParams p;
    p.sched = {20, 0.9, 10, 400, 1e-4};
    p.vcfg = {32, 300.0};
    return p;
}

std::set<int> id_set(const cam::MultiView& mv) {
    std::set<int> ids;
    for (const auto& v : mv.views) ids.insert(v.view_id);
    return ids;
}

}  // namespace

TEST_CASE("initial_solution picks k distinct anchored viewers") {
    const auto s = small_scene(1, 120, 50);
    const scene::RelevanceConfig rcfg;

    const auto mv = anneal::initial_solution(s, 4, rcfg, 7, 60.0);
    CHECK_FALSE(cam::check_multiview(mv, 4).has_value());
    CHECK(id_set(mv).size() == 4);
    for (const auto& v : mv.views) {
        const auto* viewer = s.find_viewer(v.view_id);
        REQUIRE(viewer != nullptr);
        CHECK(v.pos == scene::anchor_position(s, *viewer));
        CHECK(v.fov_y_deg == 60.0);
    }

    SUBCASE("same seed reproduces, different seed varies") {
        CHECK(anneal::initial_solution(s, 4, rcfg, 7, 60.0) == mv);
        bool differed = false;
        for (std::uint64_t seed = 8; seed < 14 && !differed; ++seed)
            differed = anneal::initial_solution(s, 4, rcfg, seed, 60.0) != mv;
        CHECK(differed);
    }
    SUBCASE("k = m selects every viewer") {
        const auto all = anneal::initial_solution(s, 50, rcfg, 3, 60.0);
        CHECK(id_set(all).size() == 50);
    }
    SUBCASE("k > m is an argument error") {
        CHECK_THROWS_AS(anneal::initial_solution(s, 51, rcfg, 3, 60.0), std::invalid_argument);
    }
}

TEST_CASE("default views aim at the highest-relevance entity") {
    auto s = small_scene(2);
    const scene::RelevanceConfig rcfg;
    // Make entity ranking unambiguous: one burning hospital outranks all.
    bool made = false;
    for (auto& e : s.entities) {
        if (!scene::is_agent_kind(e.kind) && !made) {
            e.kind = scene::EntityKind::Hospital;
            e.fire_intensity = 1.0;
            made = true;
        } else {
            e.fire_intensity = 0.0;
            e.base_relevance = 0.1;
        }
    }
    REQUIRE(made);
    const scene::Entity* target = nullptr;
    for (const auto& e : s.entities)
        if (e.kind == scene::EntityKind::Hospital) target = &e;

    const auto v = anneal::default_view_for(s, rcfg, s.viewers[0].entity_id, 60.0);
    const Vec3 anchor = scene::anchor_position(s, s.viewers[0]);
    CHECK(norm(v.view_dir - normalized(target->box.center() - anchor)) < 1e-12);
    CHECK_FALSE(cam::check_view_params(v).has_value());
}

TEST_CASE("propose_move respects the stated mixture and constraints") {
    const auto s = small_scene(3);
    const scene::RelevanceConfig rcfg;
    const auto mv = anneal::initial_solution(s, 2, rcfg, 5, 60.0);
    const anneal::MoveConfig cfg;
    anneal::AdaptiveState a;
    a.step_scale = 1.7;
    rng::Engine eng(11);

    int swaps = 0;
    const int draws = 10000;
    for (int i = 0; i < draws; ++i) {
        const auto move = anneal::propose_move(mv, s, a, cfg, eng);
        REQUIRE(move.member_index >= 0);
        REQUIRE(move.member_index < 2);
        switch (move.kind) {
        case anneal::Move::Kind::SwapView: {
            ++swaps;
            CHECK(id_set(mv).count(move.incoming_viewer_id) == 0);
            CHECK(s.find_viewer(move.incoming_viewer_id) != nullptr);
            break;
        }
        case anneal::Move::Kind::PerturbDir:
            CHECK(std::abs(move.angle_deg) <= cfg.dir_base_deg * a.step_scale);
            CHECK(norm(move.axis) == doctest::Approx(1.0).epsilon(1e-9));
            break;
        case anneal::Move::Kind::PerturbUp:
            CHECK(std::abs(move.angle_deg) <= cfg.up_base_deg * a.step_scale);
            break;
        case anneal::Move::Kind::PerturbFov:
            CHECK(std::abs(move.fov_delta_deg) <= cfg.fov_base_deg * a.step_scale);
            break;
        }
    }
    // Swap probability 0.5 +- 0.02 of the draws.
    CHECK(swaps > static_cast<int>(draws * 0.48));
    CHECK(swaps < static_cast<int>(draws * 0.52));
}

TEST_CASE("apply_move never touches positions and keeps ids distinct") {
    const auto s = small_scene(4);
    const scene::RelevanceConfig rcfg;
    auto mv = anneal::initial_solution(s, 3, rcfg, 9, 60.0);
    const anneal::MoveConfig cfg;
    anneal::AdaptiveState a;
    rng::Engine eng(13);

    for (int i = 0; i < 500; ++i) {
        const auto move = anneal::propose_move(mv, s, a, cfg, eng);
        const auto next = anneal::apply_move(mv, s, rcfg, move, 60.0);
        CHECK_FALSE(cam::check_multiview(next, 3).has_value());
        for (size_t j = 0; j < next.views.size(); ++j) {
            const auto* viewer = s.find_viewer(next.views[j].view_id);
            REQUIRE(viewer != nullptr);
            // Cameras stay on their agents: position always the anchor.
            CHECK(next.views[j].pos == scene::anchor_position(s, *viewer));
            if (static_cast<int>(j) != move.member_index) CHECK(next.views[j] == mv.views[j]);
        }
        if (move.kind == anneal::Move::Kind::SwapView) {
            CHECK(next.views[static_cast<size_t>(move.member_index)].view_id == move.incoming_viewer_id);
        } else {
            CHECK(next.views[static_cast<size_t>(move.member_index)].view_id ==
                  mv.views[static_cast<size_t>(move.member_index)].view_id);
            CHECK(next.views[static_cast<size_t>(move.member_index)].fov_y_deg >= cam::kMinFovDeg);
            CHECK(next.views[static_cast<size_t>(move.member_index)].fov_y_deg <= cam::kMaxFovDeg);
        }
        mv = next;
    }
}

TEST_CASE("acceptance_probability closed forms and monotonicity") {
    CHECK(anneal::acceptance_probability(0.0, 1.0) == 1.0);
    CHECK(anneal::acceptance_probability(0.5, 1.0) == 1.0);
    CHECK(anneal::acceptance_probability(-1.0, 1.0) == doctest::Approx(std::exp(-1.0)).epsilon(1e-12));
    CHECK(anneal::acceptance_probability(-1.0, 1e-9) < 1e-300);
    CHECK_THROWS_AS(anneal::acceptance_probability(0.0, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(anneal::acceptance_probability(0.0, -1.0), std::invalid_argument);

    rng::Engine eng(17);
    for (int i = 0; i < 1000; ++i) {
        const double t = rng::uniform(eng, 1e-6, 10.0);
        const double d1 = -rng::uniform(eng, 0.0, 5.0);
        const double d2 = d1 + rng::uniform(eng, 0.0, 5.0);
        CHECK(anneal::acceptance_probability(d2, t) >= anneal::acceptance_probability(d1, t));
        const double t2 = t + rng::uniform(eng, 0.0, 5.0);
        CHECK(anneal::acceptance_probability(d1, t2) >= anneal::acceptance_probability(d1, t));
    }
}

TEST_CASE("adapt_step widens, narrows and clamps") {
    const anneal::MoveConfig cfg;
    anneal::AdaptiveState a;
    a.step_scale = 1.0;
    CHECK(anneal::adapt_step(a, 0.6, cfg).step_scale == doctest::Approx(1.1).epsilon(1e-12));
    CHECK(anneal::adapt_step(a, 0.2, cfg).step_scale == doctest::Approx(0.9).epsilon(1e-12));
    CHECK(anneal::adapt_step(a, 0.4, cfg).step_scale == 1.0);

    a.step_scale = cfg.scale_max;
    CHECK(anneal::adapt_step(a, 0.9, cfg).step_scale == cfg.scale_max);
    a.step_scale = cfg.scale_min;
    CHECK(anneal::adapt_step(a, 0.1, cfg).step_scale == cfg.scale_min);
}

TEST_CASE("optimize produces a monotone best trace and is deterministic") {
    const auto s = small_scene(5);
    const auto params = desk_params();

    const auto r1 = anneal::optimize(s, 2, params, 101);
    CHECK_FALSE(cam::check_multiview(r1.best, 2).has_value());
    REQUIRE(!r1.trace.empty());
    CHECK(r1.iterations_run == static_cast<int>(r1.trace.size()));
    CHECK(r1.trace.size() <= static_cast<size_t>(params.sched.max_iters));

    double best = -1.0;
    double temp = std::numeric_limits<double>::infinity();
    for (const auto& row : r1.trace) {
        CHECK(row.best_q >= best);
        best = std::max(best, row.best_q);
        CHECK(row.temperature <= temp);
        CHECK(row.temperature > 0.0);
        temp = row.temperature;
        CHECK(row.current_q <= row.best_q + 1e-12);
    }
    CHECK(r1.best_q == best);

    const auto r2 = anneal::optimize(s, 2, params, 101);
    REQUIRE(r1.trace.size() == r2.trace.size());
    for (size_t i = 0; i < r1.trace.size(); ++i) {
        CHECK(r1.trace[i].current_q == r2.trace[i].current_q);
        CHECK(r1.trace[i].best_q == r2.trace[i].best_q);
        CHECK(r1.trace[i].temperature == r2.trace[i].temperature);
    }
    CHECK(r1.best == r2.best);

    std::ostringstream c1, c2;
    anneal::write_trace_csv(r1.trace, c1);
    anneal::write_trace_csv(r2.trace, c2);
    CHECK(c1.str() == c2.str());
    CHECK(c1.str().rfind("iteration,current_q,best_q,temperature\n", 0) == 0);
}

TEST_CASE("optimize accepts a warm start and validates it") {
    const auto s = small_scene(6);
    const auto params = desk_params();
    const scene::RelevanceConfig rcfg;

    const auto warm = anneal::initial_solution(s, 2, rcfg, 55, 60.0);
    const auto r = anneal::optimize(s, 2, params, 77, warm);
    CHECK(r.best_q >= 0.0);

    auto broken = warm;
    broken.views[1].view_id = broken.views[0].view_id;
    CHECK_THROWS_AS(anneal::optimize(s, 2, params, 77, broken), std::invalid_argument);
}

TEST_CASE("brute_force_optimum counts, ties and budget") {
    const auto s = small_scene(7, 12, 3);
    const qual::Weights w;
    const scene::RelevanceConfig rcfg;
    const vis::VisibilityConfig vcfg{32, 300.0};

    const auto r = anneal::brute_force_optimum(s, 2, w, rcfg, vcfg);
    CHECK(r.candidates_evaluated == 3);  // C(3,2)
    CHECK_FALSE(cam::check_multiview(r.best, 2).has_value());

    SUBCASE("k = m evaluates the single subset") {
        const auto all = anneal::brute_force_optimum(s, 3, w, rcfg, vcfg);
        CHECK(all.candidates_evaluated == 1);
        CHECK(id_set(all.best).size() == 3);
    }
    SUBCASE("blind instances tie and keep the lexicographically smallest ids") {
        const vis::VisibilityConfig blind{32, 0.05};  // nothing within range
        const auto b = anneal::brute_force_optimum(s, 2, w, rcfg, blind);
        CHECK(b.q == 0.0);
        std::vector<int> viewer_ids;
        for (const auto& v : s.viewers) viewer_ids.push_back(v.entity_id);
        std::sort(viewer_ids.begin(), viewer_ids.end());
        const std::set<int> expect(viewer_ids.begin(), viewer_ids.begin() + 2);
        CHECK(id_set(b.best) == expect);
    }
    SUBCASE("budget overruns are refused") {
        const auto big = small_scene(8, 80, 30);
        CHECK_THROWS_AS(anneal::brute_force_optimum(big, 10, w, rcfg, vcfg, {}, 1000),
                        anneal::BudgetError);
    }
    SUBCASE("a parameter grid multiplies the candidate count") {
        std::vector<anneal::ParamGridEntry> grid = {
            {{0, 0, -1}, {0, 1, 0}, 60.0},
            {{1, 0, 0}, {0, 1, 0}, 80.0},
        };
        const auto g = anneal::brute_force_optimum(s, 2, w, rcfg, vcfg, grid);
        CHECK(g.candidates_evaluated == 6);  // C(3,2) * 2
    }
}

TEST_CASE("warm_start repairs vanished viewers and re-anchors the rest") {
    const auto s = small_scene(9);
    const auto params = desk_params();
    const auto r = anneal::optimize(s, 3, params, 31);

    SUBCASE("unchanged viewers carry over identically") {
        rng::Engine eng(1);
        const auto carried = anneal::warm_start(r, s, {}, eng, 60.0);
        CHECK(carried == r.best);
    }
    SUBCASE("moved anchor re-anchors the camera") {
        auto next = s;
        next.tick = s.tick + 1;
        const int anchor_id = r.best.views[0].view_id;
        for (auto& e : next.entities) {
            if (e.id == anchor_id) {
                e.box.lo = e.box.lo + Vec3{2, 0, 2};
                e.box.hi = e.box.hi + Vec3{2, 0, 2};
            }
        }
        rng::Engine eng(1);
        const auto carried = anneal::warm_start(r, next, {}, eng, 60.0);
        CHECK(carried.views[0].view_id == anchor_id);
        CHECK(carried.views[0].pos ==
              scene::anchor_position(next, *next.find_viewer(anchor_id)));
        CHECK(carried.views[0].view_dir == r.best.views[0].view_dir);
    }
    SUBCASE("vanished viewer is replaced by exactly one non-member") {
        auto next = s;
        next.tick = s.tick + 1;
        const int gone = r.best.views[1].view_id;
        std::erase_if(next.viewers, [&](const scene::ViewerAgent& v) { return v.entity_id == gone; });
        std::erase_if(next.entities, [&](const scene::Entity& e) { return e.id == gone; });

        rng::Engine eng(1);
        const auto repaired = anneal::warm_start(r, next, {}, eng, 60.0);
        CHECK_FALSE(cam::check_multiview(repaired, 3).has_value());
        CHECK(id_set(repaired).count(gone) == 0);

        int kept = 0;
        for (const auto& v : r.best.views)
            if (id_set(repaired).count(v.view_id)) ++kept;
        CHECK(kept == 2);
        for (const auto& v : repaired.views) CHECK(next.find_viewer(v.view_id) != nullptr);
    }
}

TEST_CASE("swap-only SA finds the brute-force optimum on desk instances") {
    const qual::Weights w;
    const scene::RelevanceConfig rcfg;
    const vis::VisibilityConfig vcfg{32, 300.0};

    auto params = desk_params();
    params.moves.swap_probability = 1.0;  // frozen parameters: pure subset search

    int matches = 0;
    const int runs = 10;
    for (int i = 0; i < runs; ++i) {
        const auto s = small_scene(200 + static_cast<std::uint64_t>(i));
        const auto bf = anneal::brute_force_optimum(s, 2, w, rcfg, vcfg);
        const auto sa = anneal::optimize(s, 2, params, 900 + static_cast<std::uint64_t>(i));
        if (std::abs(sa.best_q - bf.q) <= 1e-9 * std::max(1.0, std::abs(bf.q))) ++matches;
    }
    CHECK(matches >= 9);
}
