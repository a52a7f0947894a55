#include "graph.h"

#include <algorithm>
#include <map>
#include <queue>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

namespace fgend {

int dir_origin(const LabeledGraph& g, Dir d) {
  return d.forward ? g.edges[d.edge].from : g.edges[d.edge].to;
}

int dir_target(const LabeledGraph& g, Dir d) {
  return d.forward ? g.edges[d.edge].to : g.edges[d.edge].from;
}

int dir_letter(const LabeledGraph& g, Dir d) {
  return d.forward ? g.edges[d.edge].label : -g.edges[d.edge].label;
}

Dir dir_reverse(Dir d) { return {d.edge, !d.forward}; }

std::vector<Dir> directions_at(const LabeledGraph& g, int v) {
  std::vector<Dir> out;
  for (int e = 0; e < static_cast<int>(g.edges.size()); ++e) {
    if (g.edges[e].from == v) out.push_back({e, true});
    if (g.edges[e].to == v) out.push_back({e, false});
  }
  std::sort(out.begin(), out.end(), [&](Dir a, Dir b) {
    int ka = letter_key(dir_letter(g, a));
    int kb = letter_key(dir_letter(g, b));
    if (ka != kb) return ka < kb;
    return a.edge < b.edge;
  });
  return out;
}

int valence(const LabeledGraph& g, int v) {
  int n = 0;
  for (const Edge& e : g.edges) {
    if (e.from == v) ++n;
    if (e.to == v) ++n;
  }
  return n;
}

static LabeledGraph remove_vertices(const LabeledGraph& g,
                                    const std::vector<bool>& drop) {
  LabeledGraph out;
  std::vector<int> remap(g.num_vertices, -1);
  for (int v = 0; v < g.num_vertices; ++v)
    if (!drop[v]) remap[v] = out.num_vertices++;
  for (const Edge& e : g.edges)
    if (remap[e.from] >= 0 && remap[e.to] >= 0)
      out.edges.push_back({remap[e.from], remap[e.to], e.label});
  if (g.basepoint && remap[*g.basepoint] >= 0)
    out.basepoint = remap[*g.basepoint];
  return out;
}

LabeledGraph core(const LabeledGraph& g, bool keep_basepoint) {
  LabeledGraph cur = g;
  for (;;) {
    std::vector<bool> drop(cur.num_vertices, false);
    bool any = false;
    for (int v = 0; v < cur.num_vertices; ++v) {
      if (keep_basepoint && cur.basepoint && v == *cur.basepoint) continue;
      if (cur.num_vertices > 1 && valence(cur, v) <= 1) {
        drop[v] = true;
        any = true;
      }
    }
    if (!any) return cur;
    if (std::count(drop.begin(), drop.end(), true) == cur.num_vertices)
      drop[cur.basepoint.value_or(0)] = false;  // keep a point, not nothing
    cur = remove_vertices(cur, drop);
  }
}

bool is_core(const LabeledGraph& g, bool keep_basepoint) {
  for (int v = 0; v < g.num_vertices; ++v) {
    if (keep_basepoint && g.basepoint && v == *g.basepoint) continue;
    if (g.num_vertices > 1 && valence(g, v) <= 1) return false;
  }
  return true;
}

NaturalStructure natural_structure(const LabeledGraph& g) {
  if (!is_core(g, false))
    throw precondition_error("natural_structure requires a core graph");
  NaturalStructure ns;
  for (int v = 0; v < g.num_vertices; ++v)
    if (valence(g, v) >= 3) ns.branch_points.push_back(v);

  std::set<int> branch(ns.branch_points.begin(), ns.branch_points.end());
  std::vector<bool> used(g.edges.size(), false);

  auto walk = [&](Dir start) {
    NaturalEdge ne;
    Dir d = start;
    for (;;) {
      ne.path.push_back(d.signed_id());
      used[d.edge] = true;
      int v = dir_target(g, d);
      if (branch.count(v)) break;
      // bivalent interior vertex: continue through the other direction
      auto dirs = directions_at(g, v);
      Dir next = dirs[0];
      if (next == dir_reverse(d)) next = dirs[1];
      d = next;
      if (used[d.edge] && d.edge == start.edge && d.forward == start.forward)
        break;  // closed circle
    }
    return ne;
  };

  for (int v : ns.branch_points)
    for (Dir d : directions_at(g, v))
      if (!used[d.edge]) ns.natural_edges.push_back(walk(d));

  // remaining components are circles of bivalent vertices
  for (int v = 0; v < g.num_vertices; ++v) {
    auto dirs = directions_at(g, v);
    for (Dir d : dirs) {
      if (used[d.edge]) continue;
      NaturalEdge ne = walk(d);
      ne.closed = true;
      ns.natural_edges.push_back(ne);
      break;
    }
  }
  return ns;
}

std::vector<int> components(const LabeledGraph& g) {
  std::vector<int> comp(g.num_vertices, -1);
  int next = 0;
  for (int s = 0; s < g.num_vertices; ++s) {
    if (comp[s] >= 0) continue;
    comp[s] = next;
    std::queue<int> q;
    q.push(s);
    while (!q.empty()) {
      int v = q.front();
      q.pop();
      for (Dir d : directions_at(g, v)) {
        int w = dir_target(g, d);
        if (comp[w] < 0) {
          comp[w] = next;
          q.push(w);
        }
      }
    }
    ++next;
  }
  return comp;
}

int component_count(const LabeledGraph& g) {
  auto comp = components(g);
  return comp.empty() ? 0 : *std::max_element(comp.begin(), comp.end()) + 1;
}

bool is_connected(const LabeledGraph& g) { return component_count(g) <= 1; }

int rank(const LabeledGraph& g) {
  if (!is_connected(g))
    throw precondition_error("rank requires a connected graph");
  return static_cast<int>(g.edges.size()) - g.num_vertices + 1;
}

bool is_folded(const LabeledGraph& g) {
  for (int v = 0; v < g.num_vertices; ++v) {
    std::set<int> seen;
    for (Dir d : directions_at(g, v))
      if (!seen.insert(dir_letter(g, d)).second) return false;
  }
  return true;
}

// BFS canonical labelling from one seed; graph must be folded so traversal
// order by signed label is deterministic.
static std::string bfs_signature(const LabeledGraph& g, int seed) {
  std::vector<int> order(g.num_vertices, -1);
  std::vector<int> bfs;
  order[seed] = 0;
  bfs.push_back(seed);
  std::vector<std::tuple<int, int, int>> rows;  // (new from, letter, new to)
  for (size_t i = 0; i < bfs.size(); ++i) {
    int v = bfs[i];
    for (Dir d : directions_at(g, v)) {
      int w = dir_target(g, d);
      if (order[w] < 0) {
        order[w] = static_cast<int>(bfs.size());
        bfs.push_back(w);
      }
    }
  }
  for (const Edge& e : g.edges) {
    if (order[e.from] < 0 || order[e.to] < 0) return {};  // disconnected seed
  }
  if (static_cast<int>(bfs.size()) != g.num_vertices) return {};
  for (const Edge& e : g.edges)
    rows.emplace_back(order[e.from], e.label, order[e.to]);
  std::sort(rows.begin(), rows.end());
  std::ostringstream out;
  out << g.num_vertices << ";";
  for (auto& [a, l, b] : rows) out << a << "," << l << "," << b << ";";
  return out.str();
}

// Candidate seeds for the basepoint-free canonical form. A few rounds of
// neighbourhood colour refinement, with colours re-ranked by sorted key each
// round, keep the colouring isomorphism-invariant; restricting the signature
// search to the smallest colour class avoids a BFS from every vertex.
static std::vector<int> canonical_seeds(const LabeledGraph& g) {
  std::vector<std::vector<int>> key(g.num_vertices);
  for (int v = 0; v < g.num_vertices; ++v)
    for (Dir d : directions_at(g, v)) key[v].push_back(dir_letter(g, d));
  std::vector<int> color(g.num_vertices, 0);
  for (int round = 0;; ++round) {
    std::map<std::vector<int>, int> rank_of;
    for (int v = 0; v < g.num_vertices; ++v) rank_of[key[v]] = 0;
    int classes = 0;
    for (auto& [k, r] : rank_of) r = classes++;
    for (int v = 0; v < g.num_vertices; ++v) color[v] = rank_of[key[v]];
    if (round == 3 || classes == g.num_vertices) break;
    for (int v = 0; v < g.num_vertices; ++v) {
      std::vector<int> k{color[v]};
      for (Dir d : directions_at(g, v)) {
        k.push_back(dir_letter(g, d));
        k.push_back(color[dir_target(g, d)]);
      }
      key[v] = std::move(k);
    }
  }
  std::vector<int> count(g.num_vertices, 0);
  for (int v = 0; v < g.num_vertices; ++v) ++count[color[v]];
  int best = color[0];
  for (int v = 0; v < g.num_vertices; ++v) {
    int c = color[v];
    if (count[c] < count[best] || (count[c] == count[best] && c < best))
      best = c;
  }
  std::vector<int> out;
  for (int v = 0; v < g.num_vertices; ++v)
    if (color[v] == best) out.push_back(v);
  return out;
}

std::string canonical_form(const LabeledGraph& g, bool respect_basepoint) {
  if (!is_folded(g))
    throw precondition_error("canonical form requires a folded graph");
  if (!is_connected(g))
    throw precondition_error("canonical form requires a connected graph");
  if (g.num_vertices == 0) return "0;";
  if (respect_basepoint) {
    if (!g.basepoint) throw precondition_error("missing basepoint");
    return "@" + bfs_signature(g, *g.basepoint);
  }
  std::string best;
  for (int v : canonical_seeds(g)) {
    std::string sig = bfs_signature(g, v);
    if (best.empty() || sig < best) best = sig;
  }
  return best;
}

bool isomorphic(const LabeledGraph& g1, const LabeledGraph& g2,
                bool respect_basepoint) {
  if (g1.num_vertices != g2.num_vertices || g1.edges.size() != g2.edges.size())
    return false;
  return canonical_form(g1, respect_basepoint) ==
         canonical_form(g2, respect_basepoint);
}

std::string serialize(const LabeledGraph& g, const Basis& basis,
                      GraphFormat format) {
  if (format == GraphFormat::DOT) {
    std::ostringstream out;
    out << "digraph {\n";
    if (g.basepoint) out << "  " << *g.basepoint << " [shape=doublecircle];\n";
    for (const Edge& e : g.edges) {
      std::string name = e.label - 1 < basis.rank ? basis.names[e.label - 1]
                                                  : std::to_string(e.label);
      out << "  " << e.from << " -> " << e.to << " [label=\"" << name
          << "\"];\n";
    }
    out << "}\n";
    return out.str();
  }
  nlohmann::json j;
  j["vertices"] = nlohmann::json::array();
  for (int v = 0; v < g.num_vertices; ++v) j["vertices"].push_back(v);
  j["basepoint"] = g.basepoint ? nlohmann::json(*g.basepoint)
                               : nlohmann::json(nullptr);
  j["edges"] = nlohmann::json::array();
  for (const Edge& e : g.edges) {
    std::string name = e.label - 1 < basis.rank ? basis.names[e.label - 1]
                                                : std::to_string(e.label);
    j["edges"].push_back({{"from", e.from}, {"to", e.to}, {"label", name}});
  }
  return j.dump(2);
}

LabeledGraph parse_graph(const std::string& json_text, const Basis& basis) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw input_error(std::string("malformed graph JSON: ") + e.what());
  }
  LabeledGraph g;
  std::map<int, int> ids;
  for (const auto& v : j.at("vertices")) {
    int id = v.get<int>();
    if (!ids.emplace(id, g.num_vertices).second)
      throw input_error("duplicate vertex id");
    ++g.num_vertices;
  }
  if (!j.at("basepoint").is_null())
    g.basepoint = ids.at(j["basepoint"].get<int>());
  for (const auto& e : j.at("edges")) {
    std::string name = e.at("label").get<std::string>();
    auto it = std::find(basis.names.begin(), basis.names.end(), name);
    if (it == basis.names.end()) throw input_error("unknown label: " + name);
    int label = static_cast<int>(it - basis.names.begin()) + 1;
    g.edges.push_back(
        {ids.at(e.at("from").get<int>()), ids.at(e.at("to").get<int>()), label});
  }
  return g;
}

}  // namespace fgend
