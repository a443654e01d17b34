#include "mvopt/harness.hpp"

#include <fcntl.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "mvopt/kv.hpp"
#include "mvopt/net.hpp"
#include "mvopt/quality.hpp"

namespace fs = std::filesystem;

namespace mvopt::harness {

namespace {

std::string read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, std::string_view content) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + path);
    f << content;
    if (!f) throw std::runtime_error("write to " + path + " failed");
}

Vec3 canonical_up_for(const Vec3& dir) {
    const Vec3 y{0.0, 1.0, 0.0};
    if (std::abs(dot(dir, y)) > 1.0 - 1e-6) return Vec3{0.0, 0.0, 1.0};
    return y;
}

}  // namespace

// ------------------------------------------------------------ multiview files

std::string multiview_file(const cam::MultiView& mv) {
    std::string out = "MV k=" + kv::format_int(static_cast<long long>(mv.views.size())) + "\n";
    for (const auto& v : mv.views)
        out += proto::encode(proto::SolutionView{v.view_id, v.view_dir, v.view_up, v.fov_y_deg}) + "\n";
    out += "END\n";
    return out;
}

cam::MultiView parse_multiview_file(std::string_view text, const scene::Scenario& s) {
    std::optional<long long> k;
    std::vector<proto::SolutionView> views;
    bool ended = false;
    int line_no = 0;

    size_t pos = 0;
    while (pos <= text.size()) {
        const auto nl = text.find('\n', pos);
        const std::string_view raw =
            nl == std::string_view::npos ? text.substr(pos) : text.substr(pos, nl - pos);
        pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
        ++line_no;
        const auto where = [&] { return " (line " + kv::format_int(line_no) + ")"; };

        const auto line = kv::tokenize(raw);
        if (!line) continue;
        if (ended) throw std::runtime_error("content after END" + where());
        if (line->word == "MV") {
            if (k) throw std::runtime_error("duplicate MV header" + where());
            kv::FieldReader r(*line);
            long long kk = 0;
            if (!r.want_int("k", kk, 1, 64))
                throw std::runtime_error("bad MV field '" + r.error_token() + "': " + r.error_detail() +
                                         where());
            k = kk;
        } else if (line->word == "VIEW") {
            if (!k) throw std::runtime_error("VIEW before MV header" + where());
            auto res = proto::decode(raw, proto::BlockContext::InSolution);
            if (auto* err = std::get_if<proto::DecodeError>(&res))
                throw std::runtime_error("bad VIEW field '" + err->token + "': " + err->detail + where());
            views.push_back(std::get<proto::SolutionView>(std::get<proto::Message>(res)));
        } else if (line->word == "END") {
            if (!k) throw std::runtime_error("END before MV header" + where());
            ended = true;
        } else {
            throw std::runtime_error("unknown line '" + line->word + "'" + where());
        }
    }
    if (!k) throw std::runtime_error("missing MV header");
    if (!ended) throw std::runtime_error("missing END terminator");
    if (static_cast<long long>(views.size()) != *k)
        throw std::runtime_error("MV header promises " + kv::format_int(*k) + " views, file has " +
                                 kv::format_int(static_cast<long long>(views.size())));

    cam::MultiView mv;
    for (const auto& sv : views) {
        const scene::ViewerAgent* viewer = s.find_viewer(sv.view_id);
        if (!viewer)
            throw std::runtime_error("view id " + kv::format_int(sv.view_id) +
                                     " is not a viewer agent of this scenario");
        cam::ViewParams v;
        v.view_id = sv.view_id;
        v.pos = scene::anchor_position(s, *viewer);
        v.view_dir = sv.dir;
        v.view_up = sv.up;
        v.fov_y_deg = sv.fov_deg;
        mv.views.push_back(v);
    }
    if (auto msg = cam::check_multiview(mv, static_cast<int>(*k)))
        throw std::runtime_error("invalid multiview: " + *msg);
    return mv;
}

// ------------------------------------------------------------------- generate

int cmd_generate(const GenerateConfig& cfg, std::ostream& out, std::ostream& err) {
    try {
        scene::GeneratorSpec gs;
        gs.seed = cfg.seed;
        gs.n_entities = cfg.entities;
        gs.m_viewers = cfg.viewers;
        gs.extent = Aabb{{0.0, 0.0, 0.0}, cfg.extent};
        const scene::Scenario s = scene::generate_scenario(gs);
        fs::create_directories(cfg.out_dir);
        const std::string path = (fs::path(cfg.out_dir) / "scenario.scen").string();
        write_file(path, scene::serialize_scenario(s));
        out << path << "\n";
        return kExitOk;
    } catch (const std::exception& ex) {
        err << "generate: " << ex.what() << "\n";
        return kExitUsage;
    }
}

// ------------------------------------------------------------------------ run

namespace {

std::vector<scene::Scenario> build_ticks(const RunConfig& cfg) {
    if (cfg.scenario_path.empty() == !cfg.generate.has_value())
        throw std::runtime_error("need exactly one scenario source (--scenario or --entities/--viewers)");
    if (cfg.ticks < 1) throw std::runtime_error("--ticks must be at least 1");

    scene::Scenario s0;
    if (!cfg.scenario_path.empty()) {
        s0 = scene::parse_scenario(read_file(cfg.scenario_path));
    } else {
        scene::GeneratorSpec gs;
        gs.seed = cfg.generate->seed;
        gs.n_entities = cfg.generate->entities;
        gs.m_viewers = cfg.generate->viewers;
        gs.extent = Aabb{{0.0, 0.0, 0.0}, cfg.generate->extent};
        s0 = scene::generate_scenario(gs);
    }
    if (cfg.k < 1 || cfg.k > static_cast<int>(s0.viewers.size()))
        throw std::runtime_error("k=" + kv::format_int(cfg.k) + " needs 1..m viewer agents, scenario has " +
                                 kv::format_int(static_cast<long long>(s0.viewers.size())));

    scene::DynamicsScript dyn;
    if (!cfg.dynamics_path.empty()) dyn = scene::parse_dynamics(read_file(cfg.dynamics_path));

    std::vector<scene::Scenario> ticks;
    ticks.reserve(cfg.ticks);
    ticks.push_back(std::move(s0));
    for (int t = 1; t < cfg.ticks; ++t) ticks.push_back(scene::advance_tick(ticks.back(), dyn));
    return ticks;
}

sess::AgentConfig make_agent_config(std::uint64_t seed, const anneal::AnnealSchedule& sched,
                                    const anneal::MoveConfig& moves, const scene::RelevanceConfig& rcfg,
                                    double fov, const std::string& trace_dir) {
    sess::AgentConfig ag;
    ag.seed = seed;
    ag.sched = sched;
    ag.moves = moves;
    ag.rcfg = rcfg;
    ag.default_fov_deg = fov;
    if (!trace_dir.empty()) {
        ag.on_result = [trace_dir](int tick, const anneal::OptimizeResult& r) {
            std::ofstream f(fs::path(trace_dir) / ("trace_tick" + kv::format_int(tick) + ".csv"),
                            std::ios::binary);
            anneal::write_trace_csv(r.trace, f);
        };
    }
    return ag;
}

std::string summary_text(const RunConfig& cfg, const sess::SessionReport& app) {
    std::string out =
        "config seed=" + kv::format_int(static_cast<long long>(cfg.seed)) + " k=" + kv::format_int(cfg.k) +
        " w1=" + kv::format_double(cfg.w1) + " w2=" + kv::format_double(cfg.w2) +
        " res=" + kv::format_int(cfg.resolution) + " maxdist=" + kv::format_double(cfg.max_view_distance) +
        " fov=" + kv::format_double(cfg.fov_deg) + " t0_samples=" + kv::format_int(cfg.sched.t0_samples) +
        " alpha=" + kv::format_double(cfg.sched.alpha) +
        " iters_per_temp=" + kv::format_int(cfg.sched.iters_per_temp) +
        " max_iters=" + kv::format_int(cfg.sched.max_iters) +
        " t_floor_ratio=" + kv::format_double(cfg.sched.t_floor_ratio) +
        " ticks=" + kv::format_int(cfg.ticks) + "\n";
    for (const auto& rec : app.solutions) {
        out += "tick=" + kv::format_int(rec.tick) + " best_q=" + kv::format_double(rec.q_claimed) +
               " iters=" + kv::format_int(rec.iterations) + " views=";
        for (size_t i = 0; i < rec.views.views.size(); ++i) {
            if (i) out += ",";
            out += kv::format_int(rec.views.views[i].view_id);
        }
        out += "\n";
    }
    return out;
}

pid_t spawn_process(const std::vector<std::string>& args) {
    std::vector<char*> argv;
    argv.reserve(args.size() + 1);
    for (const auto& a : args) argv.push_back(const_cast<char*>(a.c_str()));
    argv.push_back(nullptr);
    const pid_t pid = ::fork();
    if (pid < 0) throw std::runtime_error("fork failed");
    if (pid == 0) {
        // The child's one-line summary would interleave with ours.
        const int devnull = ::open("/dev/null", O_WRONLY);
        if (devnull >= 0) {
            ::dup2(devnull, STDOUT_FILENO);
            ::close(devnull);
        }
        ::execv(argv[0], argv.data());
        _exit(127);
    }
    return pid;
}

std::unique_ptr<net::TcpStream> connect_with_retry(const std::string& host, int port, int attempts) {
    for (int i = 0;; ++i) {
        try {
            return net::tcp_connect(host, port);
        } catch (const std::runtime_error&) {
            if (i + 1 >= attempts) throw;
            std::this_thread::sleep_for(std::chrono::milliseconds(200));
        }
    }
}

}  // namespace

int cmd_run(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
    std::vector<scene::Scenario> ticks;
    try {
        ticks = build_ticks(cfg);
        fs::create_directories(cfg.out_dir);
    } catch (const std::exception& ex) {
        err << "run: " << ex.what() << "\n";
        return kExitUsage;
    }

    sess::AppConfig app_cfg;
    app_cfg.session_id = 1;
    app_cfg.problem = {cfg.k, cfg.w1, cfg.w2, cfg.resolution, cfg.max_view_distance, 0};
    app_cfg.rcfg = cfg.rcfg;

    sess::SessionReport app_report;
    bool peer_ok = true;
    std::string peer_note;

    try {
        switch (cfg.transport) {
            case Transport::Loopback: {
                const sess::AgentConfig ag = make_agent_config(cfg.seed, cfg.sched, cfg.moves, cfg.rcfg,
                                                               cfg.fov_deg, cfg.out_dir);
                sess::LoopbackResult lr = sess::run_loopback(ticks, app_cfg, ag);
                app_report = std::move(lr.app);
                peer_ok = lr.agent.clean_close;
                peer_note = lr.agent.note;
                break;
            }
            case Transport::Listen: {
                net::TcpListener listener(cfg.port);
                const std::string exe = cfg.agent_exe.empty() ? "/proc/self/exe" : cfg.agent_exe;
                const std::vector<std::string> args = {
                    exe,
                    "agent",
                    "--address", "127.0.0.1",
                    "--port", kv::format_int(listener.port()),
                    "--seed", kv::format_int(static_cast<long long>(cfg.seed)),
                    "--fov", kv::format_double(cfg.fov_deg),
                    "--out", cfg.out_dir,
                    "--t0-samples", kv::format_int(cfg.sched.t0_samples),
                    "--alpha", kv::format_double(cfg.sched.alpha),
                    "--iters-per-temp", kv::format_int(cfg.sched.iters_per_temp),
                    "--max-iters", kv::format_int(cfg.sched.max_iters),
                    "--t-floor-ratio", kv::format_double(cfg.sched.t_floor_ratio)};
                const pid_t child = spawn_process(args);
                std::unique_ptr<net::TcpStream> stream;
                try {
                    stream = listener.accept(30000);
                } catch (...) {
                    ::kill(child, SIGKILL);
                    int status = 0;
                    ::waitpid(child, &status, 0);
                    throw;
                }
                app_report = sess::run_app_endpoint(*stream, ticks, app_cfg);
                stream.reset();
                int status = 0;
                ::waitpid(child, &status, 0);
                peer_ok = WIFEXITED(status) && WEXITSTATUS(status) == 0;
                if (!peer_ok) peer_note = "agent process exited abnormally";
                break;
            }
            case Transport::Connect: {
                auto stream = connect_with_retry(cfg.address, cfg.port, 25);
                app_report = sess::run_app_endpoint(*stream, ticks, app_cfg);
                break;
            }
        }
    } catch (const std::exception& ex) {
        err << "run: " << ex.what() << "\n";
        return kExitCheckFailed;
    }

    int code = kExitOk;
    try {
        const std::string summary_path = (fs::path(cfg.out_dir) / "summary.txt").string();
        write_file(summary_path, summary_text(cfg, app_report));
        for (const auto& rec : app_report.solutions) {
            write_file((fs::path(cfg.out_dir) / ("best_tick" + kv::format_int(rec.tick) + ".mv")).string(),
                       multiview_file(rec.views));
        }
        out << summary_path << "\n";
    } catch (const std::exception& ex) {
        err << "run: " << ex.what() << "\n";
        return kExitCheckFailed;
    }

    if (!app_report.clean_close || app_report.solutions.size() != ticks.size() || !peer_ok) {
        err << "run: session incomplete";
        if (!app_report.note.empty()) err << ": " << app_report.note;
        if (!peer_note.empty()) err << " (" << peer_note << ")";
        err << "\n";
        code = kExitCheckFailed;
    }
    return code;
}

// ---------------------------------------------------------- score / dump-views

int cmd_score(const ScoreConfig& cfg, std::ostream& out, std::ostream& err) {
    try {
        const scene::Scenario s = scene::parse_scenario(read_file(cfg.scenario_path));
        const cam::MultiView mv = parse_multiview_file(read_file(cfg.views_path), s);
        const vis::VisibilityConfig vcfg{cfg.resolution, cfg.max_view_distance};
        const qual::QualityBreakdown b =
            qual::total_quality(mv, s, {cfg.w1, cfg.w2}, scene::RelevanceConfig{}, vcfg);
        fs::create_directories(cfg.out_dir);
        const std::string path = (fs::path(cfg.out_dir) / "breakdown.csv").string();
        std::ofstream f(path, std::ios::binary);
        if (!f) throw std::runtime_error("cannot write " + path);
        qual::write_breakdown_csv(b, f);
        out << path << "\n";
        return kExitOk;
    } catch (const std::exception& ex) {
        err << "score: " << ex.what() << "\n";
        return kExitUsage;
    }
}

int cmd_dump_views(const DumpConfig& cfg, std::ostream& out, std::ostream& err) {
    try {
        const scene::Scenario s = scene::parse_scenario(read_file(cfg.scenario_path));
        const cam::MultiView mv = parse_multiview_file(read_file(cfg.views_path), s);
        const vis::VisibilityConfig vcfg{cfg.resolution, cfg.max_view_distance};
        fs::create_directories(cfg.out_dir);
        for (size_t j = 0; j < mv.views.size(); ++j) {
            const vis::ItemBuffer buf = vis::render_item_buffer(mv.views[j], s, vcfg);
            const std::string path =
                (fs::path(cfg.out_dir) / ("view" + kv::format_int(static_cast<long long>(j)) + ".ppm"))
                    .string();
            std::ofstream f(path, std::ios::binary);
            if (!f) throw std::runtime_error("cannot write " + path);
            vis::write_ppm(buf, f);
            out << path << "\n";
        }
        return kExitOk;
    } catch (const std::exception& ex) {
        err << "dump-views: " << ex.what() << "\n";
        return kExitUsage;
    }
}

// ----------------------------------------------------------------- oracle-check

namespace {

// Local mirror of the normative per-pixel rule. The tie rule can be flipped
// to prove the check would catch a wrong implementation.
vis::VisibilityStats reference_raycast(const cam::ViewParams& v, const scene::Scenario& s,
                                       const vis::VisibilityConfig& cfg, bool prefer_higher_id) {
    vis::VisibilityStats out;
    const int res = cfg.resolution;
    out.total_pixels = static_cast<long long>(res) * res;
    for (int py = 0; py < res; ++py) {
        for (int px = 0; px < res; ++px) {
            const Ray ray = cam::pixel_ray(v, res, res, px, py);
            int best_id = vis::ItemBuffer::kEmpty;
            double best_t = std::numeric_limits<double>::infinity();
            for (const auto& e : s.entities) {
                const auto t = vis::ray_aabb(ray, e.box);
                if (!t || *t > cfg.max_view_distance) continue;
                const bool wins =
                    *t < best_t ||
                    (*t == best_t && (prefer_higher_id ? e.id > best_id : e.id < best_id));
                if (best_id == vis::ItemBuffer::kEmpty || wins) {
                    best_id = e.id;
                    best_t = *t;
                }
            }
            if (best_id != vis::ItemBuffer::kEmpty) ++out.counts[best_id];
        }
    }
    return out;
}

// Two coincident boxes guarantee exact depth ties on every covered pixel.
scene::Scenario tie_scenario() {
    scene::Scenario s;
    s.extent = {{0.0, 0.0, 0.0}, {60.0, 20.0, 60.0}};
    scene::Entity agent;
    agent.id = 1;
    agent.kind = scene::EntityKind::Civilian;
    agent.box = {{5.0, 0.0, 25.0}, {6.0, 1.0, 26.0}};
    s.entities.push_back(agent);
    for (int id : {7, 9}) {
        scene::Entity e;
        e.id = id;
        e.kind = scene::EntityKind::OrdinaryBuilding;
        e.box = {{20.0, 0.0, 20.0}, {30.0, 10.0, 30.0}};
        s.entities.push_back(e);
    }
    s.viewers.push_back(scene::ViewerAgent{1, 1.7});
    return s;
}

cam::ViewParams aimed_view(const scene::Scenario& s, int viewer_id, const Vec3& target, double fov) {
    const scene::ViewerAgent* viewer = s.find_viewer(viewer_id);
    cam::ViewParams v;
    v.view_id = viewer_id;
    v.pos = scene::anchor_position(s, *viewer);
    Vec3 dir = target - v.pos;
    v.view_dir = norm(dir) > 1e-9 ? normalized(dir) : Vec3{0.0, 0.0, -1.0};
    v.view_up = canonical_up_for(v.view_dir);
    v.fov_y_deg = fov;
    return v;
}

struct Mismatch {
    std::uint64_t scene_seed = 0;
    int view = 0;
    int res = 0;
    int entity = 0;
    long long render_count = 0;
    long long reference_count = 0;
};

// First differing (id, count) pair between the two histograms, if any.
std::optional<Mismatch> compare_stats(const vis::VisibilityStats& render,
                                      const vis::VisibilityStats& reference) {
    auto it_r = render.counts.begin();
    auto it_o = reference.counts.begin();
    while (it_r != render.counts.end() || it_o != reference.counts.end()) {
        int id;
        long long cr = 0, co = 0;
        if (it_o == reference.counts.end() ||
            (it_r != render.counts.end() && it_r->first < it_o->first)) {
            id = it_r->first;
            cr = it_r->second;
            ++it_r;
        } else if (it_r == render.counts.end() || it_o->first < it_r->first) {
            id = it_o->first;
            co = it_o->second;
            ++it_o;
        } else {
            id = it_r->first;
            cr = it_r->second;
            co = it_o->second;
            ++it_r;
            ++it_o;
        }
        if (cr != co) return Mismatch{0, 0, 0, id, cr, co};
    }
    return std::nullopt;
}

}  // namespace

int cmd_oracle_check(const OracleConfig& cfg, std::ostream& out, std::ostream& err) {
    bool all_ok = true;
    try {
        // Item buffer vs brute-force raycast, randomized scenes.
        std::optional<Mismatch> first_bad;
        int scenes_tested = 0;
        for (int i = 0; i < cfg.scenes && !first_bad; ++i) {
            scene::GeneratorSpec gs;
            gs.seed = cfg.seed + static_cast<std::uint64_t>(i);
            gs.n_entities = 12 + (i * 7) % 29;
            gs.m_viewers = std::max(1, gs.n_entities / 6);
            gs.extent = {{0.0, 0.0, 0.0}, {240.0, 40.0, 240.0}};
            const scene::Scenario s = scene::generate_scenario(gs);
            ++scenes_tested;

            rng::Engine eng(cfg.seed * 7919u + static_cast<std::uint64_t>(i));
            for (int vi = 0; vi < cfg.views_per_scene && !first_bad; ++vi) {
                const auto& viewer = s.viewers[rng::below(eng, s.viewers.size())];
                const auto& target = s.entities[rng::below(eng, s.entities.size())];
                const double fov = rng::uniform(eng, 30.0, 90.0);
                const cam::ViewParams v = aimed_view(s, viewer.entity_id, target.box.center(), fov);

                for (int res : cfg.resolutions) {
                    const vis::VisibilityConfig vcfg{res, 300.0};
                    const auto render = vis::coverage_histogram(vis::render_item_buffer(v, s, vcfg));
                    const auto reference = cfg.inject_tie_break_bug
                                               ? reference_raycast(v, s, vcfg, true)
                                               : vis::raycast_oracle(v, s, vcfg);
                    if (auto bad = compare_stats(render, reference)) {
                        bad->scene_seed = gs.seed;
                        bad->view = vi;
                        bad->res = res;
                        first_bad = bad;
                        break;
                    }
                }
            }
        }

        // Guaranteed exact-tie scene: coincident boxes, lower id must win.
        bool tie_ok = true;
        {
            const scene::Scenario s = tie_scenario();
            const cam::ViewParams v = aimed_view(s, 1, Vec3{25.0, 5.0, 25.0}, 60.0);
            for (int res : cfg.resolutions) {
                const vis::VisibilityConfig vcfg{res, 300.0};
                const auto render = vis::coverage_histogram(vis::render_item_buffer(v, s, vcfg));
                const auto reference = cfg.inject_tie_break_bug ? reference_raycast(v, s, vcfg, true)
                                                                : vis::raycast_oracle(v, s, vcfg);
                if (auto bad = compare_stats(render, reference)) {
                    bad->scene_seed = 0;
                    bad->view = 0;
                    bad->res = res;
                    if (!first_bad) first_bad = bad;
                    tie_ok = false;
                    break;
                }
                // The losing id must be invisible even though its box is hit.
                if (render.counts.count(9) || !render.counts.count(7)) {
                    if (!first_bad) first_bad = Mismatch{0, 0, res, 9, render.counts.count(9) ? 1 : 0, 0};
                    tie_ok = false;
                    break;
                }
            }
            ++scenes_tested;
        }

        std::string reslist;
        for (size_t i = 0; i < cfg.resolutions.size(); ++i)
            reslist += (i ? "," : "") + kv::format_int(cfg.resolutions[i]);
        const bool vis_ok = !first_bad;
        out << "visibility scenes_tested=" << scenes_tested << " views_per_scene="
            << cfg.views_per_scene << " resolutions=" << reslist << " "
            << (vis_ok && tie_ok ? "PASS" : "FAIL") << "\n";
        if (first_bad) {
            out << "MISMATCH scene_seed=" << first_bad->scene_seed << " view=" << first_bad->view
                << " res=" << first_bad->res << " entity=" << first_bad->entity
                << " render=" << first_bad->render_count << " reference=" << first_bad->reference_count
                << "\n";
        }
        all_ok = all_ok && vis_ok && tie_ok;

        // Swap-only annealing vs exhaustive subset enumeration.
        int matches = 0;
        for (int r = 0; r < cfg.sa_runs; ++r) {
            scene::GeneratorSpec gs;
            gs.seed = cfg.seed + 5000 + static_cast<std::uint64_t>(r);
            gs.n_entities = 18;
            gs.m_viewers = 6;
            gs.extent = {{0.0, 0.0, 0.0}, {150.0, 30.0, 150.0}};
            const scene::Scenario s = scene::generate_scenario(gs);

            const qual::Weights w;
            const scene::RelevanceConfig rcfg;
            const vis::VisibilityConfig vcfg{32, 300.0};
            const auto bf = anneal::brute_force_optimum(s, 2, w, rcfg, vcfg);

            anneal::OptimizeParams op;
            op.sched = {20, 0.9, 10, 400, 1e-4};
            op.moves.swap_probability = 1.0;
            op.weights = w;
            op.rcfg = rcfg;
            op.vcfg = vcfg;
            const auto sa = anneal::optimize(s, 2, op, cfg.seed + 9000 + static_cast<std::uint64_t>(r));
            if (std::abs(sa.best_q - bf.q) <= 1e-9 * std::max(1.0, std::abs(bf.q))) ++matches;
        }
        const bool sa_ok = matches * 10 >= cfg.sa_runs * 9;
        out << "sa-vs-brute runs=" << cfg.sa_runs << " matches=" << matches << " "
            << (sa_ok ? "PASS" : "FAIL") << "\n";
        all_ok = all_ok && sa_ok;
    } catch (const std::exception& ex) {
        err << "oracle-check: " << ex.what() << "\n";
        return kExitCheckFailed;
    }

    out << "oracle-check " << (all_ok ? "PASS" : "FAIL") << "\n";
    return all_ok ? kExitOk : kExitCheckFailed;
}

// ---------------------------------------------------------------------- agent

int cmd_agent(const AgentCliConfig& cfg, std::ostream& out, std::ostream& err) {
    try {
        std::unique_ptr<net::TcpStream> stream;
        if (cfg.listen) {
            net::TcpListener listener(cfg.port);
            out << "listening port=" << listener.port() << "\n" << std::flush;
            stream = listener.accept(-1);
        } else {
            stream = connect_with_retry(cfg.address, cfg.port, 25);
        }
        if (!cfg.out_dir.empty()) fs::create_directories(cfg.out_dir);
        sess::AgentConfig ag =
            make_agent_config(cfg.seed, cfg.sched, cfg.moves, cfg.rcfg, cfg.fov_deg, cfg.out_dir);
        ag.name = cfg.name;
        const sess::SessionReport report = sess::run_agent(*stream, ag);
        out << "solutions=" << report.solutions.size() << " clean=" << (report.clean_close ? 1 : 0)
            << "\n";
        if (!report.clean_close && !report.note.empty()) err << "agent: " << report.note << "\n";
        return report.clean_close ? kExitOk : kExitCheckFailed;
    } catch (const std::exception& ex) {
        err << "agent: " << ex.what() << "\n";
        return kExitCheckFailed;
    }
}

// ------------------------------------------------------------------------ cli

namespace {

void add_schedule_flags(CLI::App* sub, anneal::AnnealSchedule& sched) {
    sub->add_option("--t0-samples", sched.t0_samples, "moves sampled to set the start temperature")
        ->check(CLI::PositiveNumber);
    sub->add_option("--alpha", sched.alpha, "geometric cooling factor")
        ->check(CLI::Range(1e-6, 1.0));
    sub->add_option("--iters-per-temp", sched.iters_per_temp, "iterations per temperature step")
        ->check(CLI::PositiveNumber);
    sub->add_option("--max-iters", sched.max_iters, "iteration budget")->check(CLI::PositiveNumber);
    sub->add_option("--t-floor-ratio", sched.t_floor_ratio, "stop once T drops below ratio * T0")
        ->check(CLI::PositiveNumber);
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"multiview camera optimization harness"};
    app.require_subcommand(1);

    GenerateConfig gen;
    std::string gen_extent = "1000,60,1000";
    CLI::App* sub_gen = app.add_subcommand("generate", "write a synthetic scenario file");
    sub_gen->set_config("--config");
    sub_gen->add_option("--seed", gen.seed, "generator seed");
    sub_gen->add_option("--entities", gen.entities, "total entity count")->required();
    sub_gen->add_option("--viewers", gen.viewers, "viewer agent count")->required();
    sub_gen->add_option("--extent", gen_extent, "world size as x,y,z meters");
    sub_gen->add_option("--out", gen.out_dir, "output directory");

    RunConfig run;
    std::string run_extent = "1000,60,1000";
    std::string run_transport = "loopback";
    int run_entities = 0, run_viewers = 0;
    CLI::App* sub_run = app.add_subcommand("run", "optimize views over a protocol session");
    sub_run->set_config("--config");
    sub_run->add_option("--scenario", run.scenario_path, "scenario file to load");
    sub_run->add_option("--entities", run_entities, "generate a scenario with this many entities");
    sub_run->add_option("--viewers", run_viewers, "generated viewer agent count");
    sub_run->add_option("--extent", run_extent, "generated world size x,y,z");
    sub_run->add_option("--k", run.k, "views in the multiview")->check(CLI::PositiveNumber);
    sub_run->add_option("--w1", run.w1, "relevance weight")->check(CLI::NonNegativeNumber);
    sub_run->add_option("--w2", run.w2, "eccentricity weight")->check(CLI::NonNegativeNumber);
    sub_run->add_option("--res", run.resolution, "item buffer resolution")->check(CLI::Range(8, 4096));
    sub_run->add_option("--maxdist", run.max_view_distance, "view distance cutoff")
        ->check(CLI::PositiveNumber);
    sub_run->add_option("--fov", run.fov_deg, "default vertical field of view (degrees)")
        ->check(CLI::Range(cam::kMinFovDeg, cam::kMaxFovDeg));
    add_schedule_flags(sub_run, run.sched);
    sub_run->add_option("--ticks", run.ticks, "world ticks to simulate")->check(CLI::PositiveNumber);
    sub_run->add_option("--dynamics", run.dynamics_path, "dynamics script file");
    sub_run->add_option("--out", run.out_dir, "output directory");
    sub_run->add_option("--seed", run.seed, "optimizer seed");
    sub_run->add_option("--transport", run_transport, "loopback | listen | connect")
        ->check(CLI::IsMember({"loopback", "listen", "connect"}));
    sub_run->add_option("--address", run.address, "agent address (connect mode)");
    sub_run->add_option("--port", run.port, "TCP port (0 = pick free, listen mode)")
        ->check(CLI::Range(0, 65535));
    sub_run->add_option("--agent-exe", run.agent_exe, "agent binary for listen mode (default: self)");

    ScoreConfig score;
    CLI::App* sub_score = app.add_subcommand("score", "evaluate a multiview file once");
    sub_score->set_config("--config");
    sub_score->add_option("--scenario", score.scenario_path, "scenario file")->required();
    sub_score->add_option("--views", score.views_path, "multiview file")->required();
    sub_score->add_option("--w1", score.w1, "relevance weight")->check(CLI::NonNegativeNumber);
    sub_score->add_option("--w2", score.w2, "eccentricity weight")->check(CLI::NonNegativeNumber);
    sub_score->add_option("--res", score.resolution, "item buffer resolution")
        ->check(CLI::Range(8, 4096));
    sub_score->add_option("--maxdist", score.max_view_distance, "view distance cutoff")
        ->check(CLI::PositiveNumber);
    sub_score->add_option("--out", score.out_dir, "output directory");

    DumpConfig dump;
    CLI::App* sub_dump = app.add_subcommand("dump-views", "render item buffers to PPM images");
    sub_dump->set_config("--config");
    sub_dump->add_option("--scenario", dump.scenario_path, "scenario file")->required();
    sub_dump->add_option("--views", dump.views_path, "multiview file")->required();
    sub_dump->add_option("--res", dump.resolution, "image resolution")->check(CLI::Range(8, 4096));
    sub_dump->add_option("--maxdist", dump.max_view_distance, "view distance cutoff")
        ->check(CLI::PositiveNumber);
    sub_dump->add_option("--out", dump.out_dir, "output directory");

    OracleConfig oracle;
    CLI::App* sub_oracle = app.add_subcommand("oracle-check", "run the visibility and annealing oracles");
    sub_oracle->set_config("--config");
    sub_oracle->add_option("--scenes", oracle.scenes, "randomized scenes to test")
        ->check(CLI::PositiveNumber);
    sub_oracle->add_option("--views-per-scene", oracle.views_per_scene, "views tested per scene")
        ->check(CLI::PositiveNumber);
    sub_oracle->add_option("--resolutions", oracle.resolutions, "resolutions to compare")
        ->delimiter(',');
    sub_oracle->add_option("--sa-runs", oracle.sa_runs, "annealing-vs-brute-force instances")
        ->check(CLI::PositiveNumber);
    sub_oracle->add_option("--seed", oracle.seed, "suite seed");
    sub_oracle->add_flag("--inject-tie-break-bug", oracle.inject_tie_break_bug,
                         "flip the reference tie rule (must fail)");

    AgentCliConfig agent;
    CLI::App* sub_agent = app.add_subcommand("agent", "run the optimization agent endpoint");
    sub_agent->set_config("--config");
    sub_agent->add_flag("--listen", agent.listen, "listen instead of connecting");
    sub_agent->add_option("--address", agent.address, "application address");
    sub_agent->add_option("--port", agent.port, "TCP port")->check(CLI::Range(0, 65535));
    sub_agent->add_option("--seed", agent.seed, "optimizer seed");
    sub_agent->add_option("--fov", agent.fov_deg, "default vertical field of view")
        ->check(CLI::Range(cam::kMinFovDeg, cam::kMaxFovDeg));
    add_schedule_flags(sub_agent, agent.sched);
    sub_agent->add_option("--out", agent.out_dir, "trace output directory");
    sub_agent->add_option("--name", agent.name, "agent name announced on connect")
        ->check(CLI::Validator(
            [](std::string& s) {
                return kv::is_token(s) ? std::string() : std::string("must be a token");
            },
            "TOKEN"));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int cli_code = app.exit(e, out, err);
        return cli_code == 0 ? kExitOk : kExitUsage;
    }

    if (sub_gen->parsed()) {
        if (!kv::parse_vec3(gen_extent, gen.extent)) {
            err << "generate: bad --extent '" << gen_extent << "'\n";
            return kExitUsage;
        }
        return cmd_generate(gen, out, err);
    }
    if (sub_run->parsed()) {
        if (run_entities > 0 || run_viewers > 0) {
            GenerateConfig g;
            g.seed = run.seed;
            g.entities = run_entities;
            g.viewers = run_viewers;
            if (!kv::parse_vec3(run_extent, g.extent)) {
                err << "run: bad --extent '" << run_extent << "'\n";
                return kExitUsage;
            }
            run.generate = g;
        }
        run.transport = run_transport == "loopback"  ? Transport::Loopback
                        : run_transport == "listen" ? Transport::Listen
                                                     : Transport::Connect;
        return cmd_run(run, out, err);
    }
    if (sub_score->parsed()) return cmd_score(score, out, err);
    if (sub_dump->parsed()) return cmd_dump_views(dump, out, err);
    if (sub_oracle->parsed()) return cmd_oracle_check(oracle, out, err);
    if (sub_agent->parsed()) return cmd_agent(agent, out, err);

    err << "no command given\n";
    return kExitUsage;
}

}  // namespace mvopt::harness
