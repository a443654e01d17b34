#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <variant>
#include <vector>

#include "mvopt/geom.hpp"
#include "mvopt/kv.hpp"

namespace mvopt::scene {

enum class EntityKind {
    OrdinaryBuilding,
    Hospital,
    FireStation,
    PoliceStation,
    School,
    Refuge,
    Road,
    Civilian,
    FireBrigade,
    PoliceForce,
    AmbulanceTeam,
};

inline constexpr EntityKind kAllKinds[] = {
    EntityKind::OrdinaryBuilding, EntityKind::Hospital,     EntityKind::FireStation,
    EntityKind::PoliceStation,    EntityKind::School,       EntityKind::Refuge,
    EntityKind::Road,             EntityKind::Civilian,     EntityKind::FireBrigade,
    EntityKind::PoliceForce,      EntityKind::AmbulanceTeam,
};

std::string_view kind_name(EntityKind kind);
std::optional<EntityKind> kind_from_name(std::string_view name);
bool is_agent_kind(EntityKind kind);

struct Entity {
    int id = 0;
    EntityKind kind = EntityKind::OrdinaryBuilding;
    Aabb box;
    double fire_intensity = 0.0;  // [0,1]
    bool buried = false;
    // Per-entity override of the kind's base relevance; absent means the
    // RelevanceConfig table applies. Serialized as the optional `base=` key.
    std::optional<double> base_relevance;

    bool operator==(const Entity&) const = default;
};

struct ViewerAgent {
    int entity_id = 0;
    double eye_height = 1.7;  // camera offset above the anchor box center

    bool operator==(const ViewerAgent&) const = default;
};

struct Scenario {
    long long tick = 0;
    std::vector<Entity> entities;
    std::vector<ViewerAgent> viewers;
    Aabb extent;

    bool operator==(const Scenario&) const = default;

    const Entity* find_entity(int id) const;
    const ViewerAgent* find_viewer(int entity_id) const;
    // Dense index of an entity id, for per-entity arrays. Built lazily by
    // callers via entity_index_map().
    std::unordered_map<int, int> entity_index_map() const;
};

struct RelevanceConfig {
    // Base relevance per kind. The defaults order hospitals and stations
    // above ordinary buildings and roads; agents sit in between.
    double base[11] = {
        0.2,  // OrdinaryBuilding
        0.9,  // Hospital
        0.8,  // FireStation
        0.7,  // PoliceStation
        0.7,  // School
        0.7,  // Refuge
        0.1,  // Road
        0.3,  // Civilian
        0.3,  // FireBrigade
        0.3,  // PoliceForce
        0.3,  // AmbulanceTeam
    };
    double fire_bonus = 0.6;
    double buried_bonus = 0.5;

    double base_for(EntityKind kind) const { return base[static_cast<int>(kind)]; }
};

enum class EventOp { Ignite, Extinguish, Bury, Rescue };

struct DynamicsEvent {
    long long tick = 0;
    EventOp op = EventOp::Ignite;
    int entity_id = 0;
};

struct DynamicsScript {
    double growth = 0.1;  // fire intensity gained per tick while burning
    std::vector<DynamicsEvent> events;  // sorted by tick
};

class ScenarioError : public std::runtime_error {
public:
    explicit ScenarioError(const std::string& what) : std::runtime_error(what) {}
};

// clamp(base + fire_bonus * fire_intensity + buried_bonus * [buried], 0, 1)
double relevance(const Entity& e, const RelevanceConfig& cfg);

// Advances one tick: burning entities grow by script.growth (clamped to 1),
// then this tick's events apply. An Ignite on a cold entity leaves it at
// intensity growth, matching one tick of spread. Geometry and ids never
// change. Throws ScenarioError when an event references a missing entity.
Scenario advance_tick(const Scenario& s, const DynamicsScript& script);

// Camera anchor for a viewer: box center raised by eye_height.
Vec3 anchor_position(const Scenario& s, const ViewerAgent& viewer);

struct GeneratorSpec {
    std::uint64_t seed = 0;
    int n_entities = 0;
    int m_viewers = 0;
    Aabb extent = {{0, 0, 0}, {1000, 60, 1000}};
};

// Deterministic jittered city grid: one building per cell (footprints stay
// inside their cell so no two interpenetrate), flat road strips along grid
// lines, and 1 m agent cubes at street corners. Every viewer is attached to
// an agent-kind entity. Throws std::invalid_argument on a bad spec.
Scenario generate_scenario(const GeneratorSpec& spec);

// Line parsers shared with the wire protocol's DATA blocks. They return a
// ParseIssue instead of throwing so the session loop can turn bad input
// into in-band errors.
struct ParseIssue {
    std::string token;
    std::string detail;
};
std::variant<Entity, ParseIssue> parse_entity_line(const kv::Line& line);
std::variant<ViewerAgent, ParseIssue> parse_viewer_line(const kv::Line& line);
std::string entity_line(const Entity& e);
std::string viewer_line(const ViewerAgent& v);

// Full invariant check: unique ids, ranges, boxes inside extent, viewers
// resolvable and unique, 1 <= |viewers| <= |entities|. Returns a message or
// nullopt when the scenario is valid.
std::optional<std::string> validate_scenario(const Scenario& s);

// Scenario file round trip. serialize emits entities and viewers sorted by
// id; parse keeps file order and enforces all invariants. Parse errors name
// the line number.
Scenario parse_scenario(std::string_view text);
std::string serialize_scenario(const Scenario& s);

// Dynamics script file: `DYN g=<float>` header, `EVT tick=<int> op=<token>
// ent=<int>` lines, `END`. Events are sorted by tick on load.
DynamicsScript parse_dynamics(std::string_view text);

}  // namespace mvopt::scene
