#include "mvopt/scene.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "mvopt/rng.hpp"

namespace mvopt::scene {

namespace {

constexpr std::string_view kKindNames[] = {
    "OrdinaryBuilding", "Hospital", "FireStation", "PoliceStation", "School", "Refuge",
    "Road",             "Civilian", "FireBrigade", "PoliceForce",   "AmbulanceTeam",
};

}  // namespace

std::string_view kind_name(EntityKind kind) { return kKindNames[static_cast<int>(kind)]; }

std::optional<EntityKind> kind_from_name(std::string_view name) {
    for (size_t i = 0; i < std::size(kKindNames); ++i) {
        if (kKindNames[i] == name) return static_cast<EntityKind>(i);
    }
    return std::nullopt;
}

bool is_agent_kind(EntityKind kind) {
    switch (kind) {
    case EntityKind::Civilian:
    case EntityKind::FireBrigade:
    case EntityKind::PoliceForce:
    case EntityKind::AmbulanceTeam:
        return true;
    default:
        return false;
    }
}

const Entity* Scenario::find_entity(int id) const {
    for (const auto& e : entities) {
        if (e.id == id) return &e;
    }
    return nullptr;
}

const ViewerAgent* Scenario::find_viewer(int entity_id) const {
    for (const auto& v : viewers) {
        if (v.entity_id == entity_id) return &v;
    }
    return nullptr;
}

std::unordered_map<int, int> Scenario::entity_index_map() const {
    std::unordered_map<int, int> m;
    m.reserve(entities.size());
    for (size_t i = 0; i < entities.size(); ++i) m.emplace(entities[i].id, static_cast<int>(i));
    return m;
}

double relevance(const Entity& e, const RelevanceConfig& cfg) {
    const double base = e.base_relevance.value_or(cfg.base_for(e.kind));
    const double raw = base + cfg.fire_bonus * e.fire_intensity + (e.buried ? cfg.buried_bonus : 0.0);
    return std::clamp(raw, 0.0, 1.0);
}

Scenario advance_tick(const Scenario& s, const DynamicsScript& script) {
    Scenario next = s;
    next.tick = s.tick + 1;

    // Growth first, restricted to entities already burning, so an Ignite
    // landing this tick comes out at exactly one growth step.
    for (auto& e : next.entities) {
        if (e.fire_intensity > 0.0) e.fire_intensity = std::min(1.0, e.fire_intensity + script.growth);
    }

    for (const auto& ev : script.events) {
        if (ev.tick != next.tick) continue;
        Entity* target = nullptr;
        for (auto& e : next.entities) {
            if (e.id == ev.entity_id) {
                target = &e;
                break;
            }
        }
        if (!target) {
            throw ScenarioError("dynamics event at tick " + kv::format_int(ev.tick) +
                                " references missing entity " + kv::format_int(ev.entity_id));
        }
        switch (ev.op) {
        case EventOp::Ignite:
            target->fire_intensity = std::max(target->fire_intensity, script.growth);
            break;
        case EventOp::Extinguish:
            target->fire_intensity = 0.0;
            break;
        case EventOp::Bury:
            target->buried = true;
            break;
        case EventOp::Rescue:
            target->buried = false;
            break;
        }
    }
    return next;
}

Vec3 anchor_position(const Scenario& s, const ViewerAgent& viewer) {
    const Entity* e = s.find_entity(viewer.entity_id);
    if (!e) throw ScenarioError("viewer references missing entity " + kv::format_int(viewer.entity_id));
    return e->box.center() + Vec3{0.0, viewer.eye_height, 0.0};
}

Scenario generate_scenario(const GeneratorSpec& spec) {
    if (spec.n_entities < 1) throw std::invalid_argument("generate_scenario: need at least one entity");
    if (spec.m_viewers < 1) throw std::invalid_argument("generate_scenario: need at least one viewer");
    if (spec.m_viewers > spec.n_entities)
        throw std::invalid_argument("generate_scenario: more viewers than entities");
    if (!spec.extent.valid() || spec.extent.degenerate())
        throw std::invalid_argument("generate_scenario: degenerate extent");

    rng::Engine eng(spec.seed);
    const Aabb& ext = spec.extent;
    const double ground = ext.lo.y;
    const double max_height = std::min(30.0, ext.size().y);

    const int n_agents = spec.m_viewers;
    const int remaining = spec.n_entities - n_agents;
    int n_roads = remaining / 10;
    int n_buildings = remaining - n_roads;

    // One building per grid cell; the cell size shrinks until everything
    // fits, and footprints stay within 80% of a cell so neighbours never
    // touch.
    double cell = 50.0;
    int cols = std::max(1, static_cast<int>(ext.size().x / cell));
    int rows = std::max(1, static_cast<int>(ext.size().z / cell));
    while (cols * rows < n_buildings) {
        cell *= 0.85;
        if (cell < 12.5) {
            throw std::invalid_argument("generate_scenario: extent too small for entity count");
        }
        cols = std::max(1, static_cast<int>(ext.size().x / cell));
        rows = std::max(1, static_cast<int>(ext.size().z / cell));
    }
    n_roads = std::min(n_roads, std::max(0, rows - 1));
    n_buildings = remaining - n_roads;

    Scenario s;
    s.tick = 0;
    s.extent = ext;
    int next_id = 0;

    const double max_fp = std::min(40.0, 0.8 * cell);
    for (int b = 0; b < n_buildings; ++b) {
        const int cx = b % cols;
        const int cz = b / cols;
        const double fx = rng::uniform(eng, 10.0, max_fp);
        const double fz = rng::uniform(eng, 10.0, max_fp);
        const double h = rng::uniform(eng, 5.0, max_height);
        const double slack_x = cell - fx;
        const double slack_z = cell - fz;
        const double ox = ext.lo.x + cx * cell + rng::uniform(eng, 0.1, 0.9) * slack_x;
        const double oz = ext.lo.z + cz * cell + rng::uniform(eng, 0.1, 0.9) * slack_z;

        Entity e;
        e.id = next_id++;
        const double kind_draw = rng::unit(eng);
        if (kind_draw < 0.01) e.kind = EntityKind::Hospital;
        else if (kind_draw < 0.02) e.kind = EntityKind::FireStation;
        else if (kind_draw < 0.03) e.kind = EntityKind::PoliceStation;
        else if (kind_draw < 0.05) e.kind = EntityKind::School;
        else if (kind_draw < 0.07) e.kind = EntityKind::Refuge;
        else e.kind = EntityKind::OrdinaryBuilding;
        e.box = {{ox, ground, oz}, {ox + fx, ground + h, oz + fz}};
        s.entities.push_back(e);
    }

    for (int r = 0; r < n_roads; ++r) {
        const double zline = ext.lo.z + (r + 1) * cell;
        Entity e;
        e.id = next_id++;
        e.kind = EntityKind::Road;
        e.box = {{ext.lo.x, ground, zline - 3.0}, {ext.lo.x + cols * cell, ground + 0.1, zline + 3.0}};
        s.entities.push_back(e);
    }

    // Agents sit at jittered cell corners, which the building margins keep
    // clear. Cubes may overlap roads and each other; only buildings carry
    // the no-interpenetration contract.
    const double corner_jitter = std::min(2.0, 0.08 * cell);
    constexpr EntityKind kAgentCycle[] = {EntityKind::FireBrigade, EntityKind::PoliceForce,
                                          EntityKind::AmbulanceTeam, EntityKind::Civilian};
    for (int a = 0; a < n_agents; ++a) {
        const int cx = rng::uniform_int(eng, 0, cols - 1);
        const int cz = rng::uniform_int(eng, 0, rows - 1);
        double px = ext.lo.x + cx * cell + rng::uniform(eng, -corner_jitter, corner_jitter);
        double pz = ext.lo.z + cz * cell + rng::uniform(eng, -corner_jitter, corner_jitter);
        px = std::clamp(px, ext.lo.x + 0.5, ext.hi.x - 0.5);
        pz = std::clamp(pz, ext.lo.z + 0.5, ext.hi.z - 0.5);

        Entity e;
        e.id = next_id++;
        e.kind = kAgentCycle[a % 4];
        e.box = {{px - 0.5, ground, pz - 0.5}, {px + 0.5, ground + 1.0, pz + 0.5}};
        s.entities.push_back(e);

        s.viewers.push_back(ViewerAgent{e.id, 1.7});
    }

    return s;
}

std::variant<Entity, ParseIssue> parse_entity_line(const kv::Line& line) {
    kv::FieldReader r(line);
    Entity e;
    long long id = 0;
    std::string kind;
    double fire = 0.0;
    long long buried = 0;
    std::optional<double> base;
    if (!r.want_int("id", id, 0, std::numeric_limits<int>::max()) || !r.want_token("kind", kind) ||
        !r.want_vec3("min", e.box.lo) || !r.want_vec3("max", e.box.hi) || !r.want_double("fire", fire) ||
        !r.want_int("buried", buried, 0, 1) || !r.optional_double("base", base)) {
        return ParseIssue{r.error_token(), r.error_detail()};
    }
    const auto k = kind_from_name(kind);
    if (!k) return ParseIssue{"kind", "unknown entity kind '" + kind + "'"};
    if (!e.box.valid()) return ParseIssue{"min", "box min exceeds max"};
    if (fire < 0.0 || fire > 1.0) return ParseIssue{"fire", "outside [0,1]"};
    if (base && (*base < 0.0 || *base > 1.0)) return ParseIssue{"base", "outside [0,1]"};
    e.id = static_cast<int>(id);
    e.kind = *k;
    e.fire_intensity = fire;
    e.buried = buried != 0;
    e.base_relevance = base;
    return e;
}

std::variant<ViewerAgent, ParseIssue> parse_viewer_line(const kv::Line& line) {
    kv::FieldReader r(line);
    long long ent = 0;
    double eye = 0.0;
    if (!r.want_int("ent", ent, 0, std::numeric_limits<int>::max()) || !r.want_double("eye", eye)) {
        return ParseIssue{r.error_token(), r.error_detail()};
    }
    return ViewerAgent{static_cast<int>(ent), eye};
}

std::string entity_line(const Entity& e) {
    std::string out = "ENT id=" + kv::format_int(e.id) + " kind=" + std::string(kind_name(e.kind)) +
                      " min=" + kv::format_vec3(e.box.lo) + " max=" + kv::format_vec3(e.box.hi) +
                      " fire=" + kv::format_double(e.fire_intensity) +
                      " buried=" + (e.buried ? std::string("1") : std::string("0"));
    if (e.base_relevance) out += " base=" + kv::format_double(*e.base_relevance);
    return out;
}

std::string viewer_line(const ViewerAgent& v) {
    return "VIEWER ent=" + kv::format_int(v.entity_id) + " eye=" + kv::format_double(v.eye_height);
}

std::optional<std::string> validate_scenario(const Scenario& s) {
    if (s.tick < 0) return "negative tick";
    if (!s.extent.valid()) return "invalid extent";
    if (s.viewers.empty()) return "scenario needs at least one viewer";
    if (s.viewers.size() > s.entities.size()) return "more viewers than entities";

    std::set<int> ids;
    for (const auto& e : s.entities) {
        if (e.id < 0) return "negative entity id " + kv::format_int(e.id);
        if (!ids.insert(e.id).second) return "duplicate entity id " + kv::format_int(e.id);
        if (!e.box.valid()) return "entity " + kv::format_int(e.id) + " has inverted box";
        if (!s.extent.contains_box(e.box)) return "entity " + kv::format_int(e.id) + " outside extent";
        if (e.fire_intensity < 0.0 || e.fire_intensity > 1.0)
            return "entity " + kv::format_int(e.id) + " fire outside [0,1]";
        if (e.base_relevance && (*e.base_relevance < 0.0 || *e.base_relevance > 1.0))
            return "entity " + kv::format_int(e.id) + " base outside [0,1]";
    }
    std::set<int> viewer_ids;
    for (const auto& v : s.viewers) {
        if (!ids.count(v.entity_id)) return "viewer references missing entity " + kv::format_int(v.entity_id);
        if (!viewer_ids.insert(v.entity_id).second)
            return "entity " + kv::format_int(v.entity_id) + " has more than one viewer";
    }
    return std::nullopt;
}

Scenario parse_scenario(std::string_view text) {
    Scenario s;
    bool have_header = false;
    bool ended = false;
    int line_no = 0;

    size_t pos = 0;
    while (pos <= text.size()) {
        const auto nl = text.find('\n', pos);
        const std::string_view raw =
            nl == std::string_view::npos ? text.substr(pos) : text.substr(pos, nl - pos);
        pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
        ++line_no;

        const auto line = kv::tokenize(raw);
        if (!line) continue;
        const auto where = [&] { return " (line " + kv::format_int(line_no) + ")"; };
        if (ended) throw ScenarioError("content after END" + where());

        if (line->word == "SCEN") {
            if (have_header) throw ScenarioError("duplicate SCEN header" + where());
            kv::FieldReader r(*line);
            long long tick = 0;
            if (!r.want_int("tick", tick, 0, std::numeric_limits<long long>::max()) ||
                !r.want_vec6("extent", s.extent.lo, s.extent.hi)) {
                throw ScenarioError("bad SCEN field '" + r.error_token() + "': " + r.error_detail() + where());
            }
            s.tick = tick;
            have_header = true;
        } else if (line->word == "ENT") {
            if (!have_header) throw ScenarioError("ENT before SCEN header" + where());
            auto parsed = parse_entity_line(*line);
            if (auto* issue = std::get_if<ParseIssue>(&parsed)) {
                throw ScenarioError("bad ENT field '" + issue->token + "': " + issue->detail + where());
            }
            const Entity& e = std::get<Entity>(parsed);
            if (s.find_entity(e.id))
                throw ScenarioError("duplicate entity id " + kv::format_int(e.id) + where());
            s.entities.push_back(e);
        } else if (line->word == "VIEWER") {
            if (!have_header) throw ScenarioError("VIEWER before SCEN header" + where());
            auto parsed = parse_viewer_line(*line);
            if (auto* issue = std::get_if<ParseIssue>(&parsed)) {
                throw ScenarioError("bad VIEWER field '" + issue->token + "': " + issue->detail + where());
            }
            s.viewers.push_back(std::get<ViewerAgent>(parsed));
        } else if (line->word == "END") {
            if (!have_header) throw ScenarioError("END before SCEN header" + where());
            ended = true;
        } else {
            throw ScenarioError("unknown line '" + line->word + "'" + where());
        }
    }
    if (!have_header) throw ScenarioError("missing SCEN header");
    if (!ended) throw ScenarioError("missing END terminator");
    if (auto msg = validate_scenario(s)) throw ScenarioError(*msg);
    return s;
}

std::string serialize_scenario(const Scenario& s) {
    Scenario sorted = s;
    std::sort(sorted.entities.begin(), sorted.entities.end(),
              [](const Entity& a, const Entity& b) { return a.id < b.id; });
    std::sort(sorted.viewers.begin(), sorted.viewers.end(),
              [](const ViewerAgent& a, const ViewerAgent& b) { return a.entity_id < b.entity_id; });

    std::string out = "SCEN tick=" + kv::format_int(sorted.tick) + " extent=" +
                      kv::format_vec3(sorted.extent.lo) + "," + kv::format_vec3(sorted.extent.hi) + "\n";
    for (const auto& e : sorted.entities) out += entity_line(e) + "\n";
    for (const auto& v : sorted.viewers) out += viewer_line(v) + "\n";
    out += "END\n";
    return out;
}

DynamicsScript parse_dynamics(std::string_view text) {
    DynamicsScript script;
    bool ended = false;
    int line_no = 0;

    size_t pos = 0;
    while (pos <= text.size()) {
        const auto nl = text.find('\n', pos);
        const std::string_view raw =
            nl == std::string_view::npos ? text.substr(pos) : text.substr(pos, nl - pos);
        pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
        ++line_no;

        const auto line = kv::tokenize(raw);
        if (!line) continue;
        const auto where = [&] { return " (line " + kv::format_int(line_no) + ")"; };
        if (ended) throw ScenarioError("content after END" + where());

        if (line->word == "DYN") {
            kv::FieldReader r(*line);
            double g = 0.0;
            if (!r.want_double("g", g) || g < 0.0)
                throw ScenarioError("bad DYN growth" + where());
            script.growth = g;
        } else if (line->word == "EVT") {
            kv::FieldReader r(*line);
            long long tick = 0;
            long long ent = 0;
            std::string op;
            if (!r.want_int("tick", tick, 0, std::numeric_limits<long long>::max()) ||
                !r.want_token("op", op) || !r.want_int("ent", ent, 0, std::numeric_limits<int>::max())) {
                throw ScenarioError("bad EVT field '" + r.error_token() + "'" + where());
            }
            DynamicsEvent ev;
            ev.tick = tick;
            ev.entity_id = static_cast<int>(ent);
            if (op == "ignite") ev.op = EventOp::Ignite;
            else if (op == "extinguish") ev.op = EventOp::Extinguish;
            else if (op == "bury") ev.op = EventOp::Bury;
            else if (op == "rescue") ev.op = EventOp::Rescue;
            else throw ScenarioError("unknown op '" + op + "'" + where());
            script.events.push_back(ev);
        } else if (line->word == "END") {
            ended = true;
        } else {
            throw ScenarioError("unknown line '" + line->word + "'" + where());
        }
    }
    std::stable_sort(script.events.begin(), script.events.end(),
                     [](const DynamicsEvent& a, const DynamicsEvent& b) { return a.tick < b.tick; });
    return script;
}

}  // namespace mvopt::scene
