#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <vector>

#include "mvopt/camera.hpp"
#include "mvopt/quality.hpp"
#include "mvopt/rng.hpp"
#include "mvopt/scene.hpp"
#include "mvopt/visibility.hpp"

namespace mvopt::anneal {

struct AnnealSchedule {
    int t0_samples = 50;       // moves sampled from the start solution to set T0
    double alpha = 0.70;       // geometric cooling factor
    int iters_per_temp = 20;
    int max_iters = 2000;
    double t_floor_ratio = 1e-4;  // stop once T < ratio * T0
};

struct MoveConfig {
    double swap_probability = 0.5;  // remainder split uniformly over dir/up/fov perturbs
    double dir_base_deg = 10.0;
    double up_base_deg = 10.0;
    double fov_base_deg = 5.0;
    int window = 50;          // accept/reject outcomes per adaptation step
    double scale_min = 0.1;
    double scale_max = 3.0;
};

struct AdaptiveState {
    double step_scale = 1.0;
};

struct Move {
    enum class Kind { SwapView, PerturbDir, PerturbUp, PerturbFov };

    Kind kind = Kind::SwapView;
    int member_index = 0;
    int incoming_viewer_id = 0;  // SwapView
    Vec3 axis;                   // PerturbDir rotation axis (unit)
    double angle_deg = 0.0;      // PerturbDir / PerturbUp
    double fov_delta_deg = 0.0;  // PerturbFov
};

struct TraceRow {
    int iteration = 0;
    double current_q = 0.0;
    double best_q = 0.0;
    double temperature = 0.0;
};

struct OptimizeResult {
    cam::MultiView best;
    double best_q = 0.0;
    std::vector<TraceRow> trace;
    int iterations_run = 0;
};

struct OptimizeParams {
    AnnealSchedule sched;
    MoveConfig moves;
    qual::Weights weights;
    scene::RelevanceConfig rcfg;
    vis::VisibilityConfig vcfg;
    double default_fov_deg = 60.0;
    double t0_scale = 1.0;  // warm restarts pass 0.3
};

class BudgetError : public std::runtime_error {
public:
    explicit BudgetError(const std::string& what) : std::runtime_error(what) {}
};

// Deterministic default camera for a viewer: anchored position, aimed at
// the scenario's highest-relevance entity (ties -> lowest id).
cam::ViewParams default_view_for(const scene::Scenario& s, const scene::RelevanceConfig& rcfg,
                                 int viewer_id, double fov_deg);

// k distinct viewers drawn uniformly without replacement; every view gets
// its default parameters. Throws std::invalid_argument when k exceeds the
// viewer count.
cam::MultiView initial_solution(const scene::Scenario& s, int k, const scene::RelevanceConfig& rcfg,
                                std::uint64_t seed, double fov_deg);

// One neighbourhood move: swap with probability swap_probability (when a
// non-member viewer exists), otherwise a dir/up/fov perturb of magnitude
// uniform in +-(base * step_scale). Positions are never touched; cameras
// stay on their agents. Draw order is fixed: move-kind coin, then indices,
// then magnitudes.
Move propose_move(const cam::MultiView& mv, const scene::Scenario& s, const AdaptiveState& a,
                  const MoveConfig& cfg, rng::Engine& eng);

cam::MultiView apply_move(const cam::MultiView& mv, const scene::Scenario& s,
                          const scene::RelevanceConfig& rcfg, const Move& move, double fov_deg);

// 1 for improving or equal moves, exp(delta_q / T) otherwise. Throws
// std::invalid_argument on nonpositive temperature.
double acceptance_probability(double delta_q, double temperature);

// acceptance > 0.5 -> scale * 1.1, < 0.3 -> scale * 0.9, else unchanged;
// clamped to [scale_min, scale_max].
AdaptiveState adapt_step(const AdaptiveState& a, double window_acceptance, const MoveConfig& cfg);

// Simulated annealing over multiviews. T0 is the standard deviation of
// |delta Q| across t0_samples proposals from the start solution (floored at
// 1e-12, scaled by t0_scale); cooling is geometric every iters_per_temp
// iterations; the loop stops at max_iters or when T < t_floor_ratio * T0.
// One trace row per proposal. Fully deterministic for a given seed; the rng
// draw order is: initial solution (when no warm start), T0 sampling, then
// per iteration one proposal plus one acceptance uniform.
OptimizeResult optimize(const scene::Scenario& s, int k, const OptimizeParams& params,
                        std::uint64_t seed, const std::optional<cam::MultiView>& warm = std::nullopt);

struct ParamGridEntry {
    Vec3 dir;
    Vec3 up;
    double fov_deg = 60.0;
};

struct BruteForceResult {
    cam::MultiView best;
    double q = 0.0;
    long long candidates_evaluated = 0;
};

// Exhaustive maximum of total_quality over all k-subsets of the viewers,
// with default per-member parameters, or with every grid entry applied to
// all members when a grid is given. Ties keep the lexicographically
// smallest id set. Desk-scale only: throws BudgetError when
// C(m,k) * max(1,|grid|) exceeds the budget.
BruteForceResult brute_force_optimum(const scene::Scenario& s, int k, const qual::Weights& w,
                                     const scene::RelevanceConfig& rcfg, const vis::VisibilityConfig& vcfg,
                                     const std::vector<ParamGridEntry>& grid = {},
                                     long long budget = 100000, double fov_deg = 60.0);

// Carries the previous best into the next tick: positions re-anchored to
// the updated viewer entities, members whose viewer vanished replaced by
// random non-members. Callers restart optimize with t0_scale = 0.3.
cam::MultiView warm_start(const OptimizeResult& prev, const scene::Scenario& next,
                          const scene::RelevanceConfig& rcfg, rng::Engine& eng, double fov_deg);

// CSV: iteration,current_q,best_q,temperature
void write_trace_csv(const std::vector<TraceRow>& trace, std::ostream& out);

}  // namespace mvopt::anneal
