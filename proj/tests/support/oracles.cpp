#include "oracles.hpp"

#include <algorithm>

namespace vbd::testing {

using namespace vbd::sim;

std::vector<int> relaxation_distances(const WorldState& s, Cell from) {
  const auto& scene = s.scene();
  const int n = scene.width * scene.height;
  std::vector<int> dist(static_cast<std::size_t>(n), -1);
  dist[static_cast<std::size_t>(from.y * scene.width + from.x)] = 0;
  for (bool changed = true; changed;) {
    changed = false;
    for (int y = 0; y < scene.height; ++y) {
      for (int x = 0; x < scene.width; ++x) {
        const Cell c{x, y};
        if (!walkable(s, c)) continue;
        const int dx[4] = {0, 1, 0, -1};
        const int dy[4] = {-1, 0, 1, 0};
        for (int k = 0; k < 4; ++k) {
          const Cell m{x + dx[k], y + dy[k]};
          if (!scene.in_bounds(m)) continue;
          const int dm = dist[static_cast<std::size_t>(m.y * scene.width + m.x)];
          auto& dc = dist[static_cast<std::size_t>(y * scene.width + x)];
          if (dm >= 0 && (dc < 0 || dm + 1 < dc)) {
            dc = dm + 1;
            changed = true;
          }
        }
      }
    }
  }
  return dist;
}

std::optional<int> distance_to_adjacent(const WorldState& s, Cell target) {
  const auto dist = relaxation_distances(s, s.agent.cell);
  const auto& scene = s.scene();
  std::optional<int> best;
  for (int y = 0; y < scene.height; ++y) {
    for (int x = 0; x < scene.width; ++x) {
      if (std::abs(x - target.x) + std::abs(y - target.y) != 1) continue;
      const int d = dist[static_cast<std::size_t>(y * scene.width + x)];
      const bool is_start = Cell{x, y} == s.agent.cell;
      if (d < 0 || (!is_start && !walkable(s, {x, y}))) continue;
      if (!best || d < *best) best = d;
    }
  }
  return best;
}

std::pair<int, int> agent_frame(const WorldState& s, Cell c) {
  const int dx = c.x - s.agent.cell.x;
  const int dy = c.y - s.agent.cell.y;
  switch (s.agent.facing) {
    case Dir::N: return {-dy, dx};
    case Dir::S: return {dy, -dx};
    case Dir::E: return {dx, dy};
    case Dir::W: return {-dx, -dy};
  }
  return {0, 0};
}

std::set<std::pair<int, int>> visible_cells_bruteforce(const WorldState& s) {
  const auto& scene = s.scene();
  const Cell a = s.agent.cell;
  // Agent-frame coordinates: depth along facing, lateral to the right.
  const auto to_agent = [&](int x, int y) -> std::pair<int, int> {
    const int dx = x - a.x;
    const int dy = y - a.y;
    switch (s.agent.facing) {
      case Dir::N: return {-dy, dx};
      case Dir::S: return {dy, -dx};
      case Dir::E: return {dx, dy};
      case Dir::W: return {-dx, -dy};
    }
    return {0, 0};
  };
  std::set<std::pair<int, int>> out;
  for (int y = 0; y < scene.height; ++y) {
    for (int x = 0; x < scene.width; ++x) {
      const auto [depth, lateral] = to_agent(x, y);
      if (depth < 1 || depth > 4 || lateral < -2 || lateral > 2) continue;
      bool blocked = false;
      for (int d = 1; d < depth; ++d) {
        // Cell at (d, lateral) in agent frame, found by search over the grid
        // (outside the grid counts as an occluder).
        bool found = false;
        for (int yy = 0; yy < scene.height && !found; ++yy) {
          for (int xx = 0; xx < scene.width && !found; ++xx) {
            if (to_agent(xx, yy) == std::pair{d, lateral}) {
              found = true;
              blocked = blocked || scene.terrain_at({xx, yy}) == Terrain::Wall;
            }
          }
        }
        blocked = blocked || !found;
      }
      if (!blocked) out.insert({x, y});
    }
  }
  return out;
}

bool trigger_visible_bruteforce(const WorldState& s) {
  for (const auto& o : s.objects) {
    if (o.type != kTriggerType) continue;
    if (s.agent.holding == o.object_id) return false;
    if (o.on_receptacle) {
      const auto* r = s.find(*o.on_receptacle);
      if (r && r->container_state == ContainerState::Closed) return false;
    }
    return visible_cells_bruteforce(s).count({o.cell.x, o.cell.y}) > 0;
  }
  return false;
}

}  // namespace vbd::testing
