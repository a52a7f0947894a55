#include "graphmap.h"

#include <algorithm>
#include <functional>
#include <map>
#include <numeric>
#include <queue>
#include <set>

namespace fgend {

LabeledGraph rose(const Basis& basis) {
  LabeledGraph g;
  g.num_vertices = 1;
  g.basepoint = 0;
  for (int i = 1; i <= basis.rank; ++i) g.edges.push_back({0, 0, i});
  return g;
}

std::vector<int> tighten_path(const std::vector<int>& path) {
  std::vector<int> out;
  for (int s : path) {
    if (!out.empty() && out.back() == -s)
      out.pop_back();
    else
      out.push_back(s);
  }
  return out;
}

std::vector<int> reverse_path(const std::vector<int>& path) {
  std::vector<int> out(path.rbegin(), path.rend());
  for (int& s : out) s = -s;
  return out;
}

int path_origin(const LabeledGraph& g, const std::vector<int>& path,
                int fallback) {
  if (path.empty()) return fallback;
  return dir_origin(g, Dir::from_signed(path.front()));
}

int path_target(const LabeledGraph& g, const std::vector<int>& path,
                int fallback) {
  if (path.empty()) return fallback;
  return dir_target(g, Dir::from_signed(path.back()));
}

std::vector<int> map_path(const GraphMap& f, const std::vector<int>& path) {
  std::vector<int> out;
  for (int s : path) {
    const auto& img = f.edge_images[std::abs(s) - 1];
    if (s > 0)
      out.insert(out.end(), img.begin(), img.end());
    else {
      auto rev = reverse_path(img);
      out.insert(out.end(), rev.begin(), rev.end());
    }
  }
  return tighten_path(out);
}

void validate_map(const GraphMap& f) {
  if (static_cast<int>(f.vertex_map.size()) != f.domain.num_vertices)
    throw precondition_error("vertex map size mismatch");
  if (f.edge_images.size() != f.domain.edges.size())
    throw precondition_error("edge image count mismatch");
  for (size_t e = 0; e < f.domain.edges.size(); ++e) {
    int u = f.vertex_map[f.domain.edges[e].from];
    int v = f.vertex_map[f.domain.edges[e].to];
    const auto& p = f.edge_images[e];
    if (p.empty()) {
      if (u != v) throw precondition_error("pretrivial edge with split ends");
      continue;
    }
    if (path_origin(f.codomain, p, u) != u ||
        path_target(f.codomain, p, v) != v)
      throw precondition_error("edge image endpoints do not match");
    for (size_t i = 0; i + 1 < p.size(); ++i)
      if (dir_target(f.codomain, Dir::from_signed(p[i])) !=
          dir_origin(f.codomain, Dir::from_signed(p[i + 1])))
        throw precondition_error("edge image path is not connected");
  }
}

static int max_image_length(const GraphMap& f) {
  int k = 0;
  for (const auto& p : f.edge_images)
    k = std::max(k, static_cast<int>(p.size()));
  return k;
}

GraphMap from_endo(const EndoSpec& phi) {
  for (const Word& w : phi.images)
    if (w.empty())
      throw precondition_error("generator killed: not a representative");
  GraphMap f;
  f.domain = f.codomain = rose(phi.basis);
  f.vertex_map = {0};
  for (const Word& w : phi.images) {
    std::vector<int> path;
    for (Letter l : w.letters()) path.push_back(l);
    f.edge_images.push_back(path);
  }
  f.lipschitz = max_image_length(f);
  try {
    f.cancellation = cancellation_constant(f);
  } catch (const precondition_error&) {
    f.cancellation = -1;  // not pi1-injective
  }
  return f;
}

EndoSpec rose_endo(const Basis& basis, const GraphMap& f) {
  if (f.codomain.num_vertices != 1 ||
      static_cast<int>(f.codomain.edges.size()) != basis.rank)
    throw precondition_error("rose_endo requires a rose codomain");
  EndoSpec phi;
  phi.basis = basis;
  for (const auto& p : f.edge_images) {
    std::vector<Letter> letters;
    for (int s : p) {
      int label = f.codomain.edges[std::abs(s) - 1].label;
      letters.push_back(s > 0 ? label : -label);
    }
    phi.images.push_back(reduce(letters));
  }
  return phi;
}

GraphMap compose_maps(const GraphMap& outer, const GraphMap& inner) {
  if (inner.codomain != outer.domain)
    throw precondition_error("composition: graphs do not match");
  GraphMap f;
  f.domain = inner.domain;
  f.codomain = outer.codomain;
  for (int v : inner.vertex_map) f.vertex_map.push_back(outer.vertex_map[v]);
  for (const auto& p : inner.edge_images)
    f.edge_images.push_back(map_path(outer, p));
  f.lipschitz = max_image_length(f);
  return f;
}

GraphMap iterate_map(const GraphMap& f, int k) {
  GraphMap out;
  out.domain = out.codomain = f.domain;
  out.vertex_map.resize(f.domain.num_vertices);
  std::iota(out.vertex_map.begin(), out.vertex_map.end(), 0);
  for (int e = 0; e < static_cast<int>(f.domain.edges.size()); ++e)
    out.edge_images.push_back({e + 1});
  out.lipschitz = 1;
  for (int i = 0; i < k; ++i) out = compose_maps(f, out);
  return out;
}

SubgroupGraph iterated_stallings(const EndoSpec& phi, int k) {
  EndoSpec phik = iterate(phi, k);
  auto [s, trace] = subgroup_graph(phi.basis, phik.images);
  if (trace.collapse_occurred)
    throw precondition_error(
        "endomorphism is not injective: folding collapsed a loop");
  return s;
}

namespace {

// Trace a reduced word from a vertex as far as the graph allows; the stuck
// point is the core retraction of the path endpoint in the cover and the
// unread suffix is the excursion into a hanging tree.
std::pair<int, Word> trace_partial(const LabeledGraph& g, int start,
                                   const Word& w) {
  int v = start;
  const auto& ls = w.letters();
  for (int i = 0; i < static_cast<int>(ls.size()); ++i) {
    auto d = step_letter(g, v, ls[i]);
    if (!d)
      return {v, Word(std::vector<Letter>(ls.begin() + i, ls.end()))};
    v = dir_target(g, *d);
  }
  return {v, Word()};
}

std::vector<int> trace_to_path(const LabeledGraph& g, int start, const Word& w) {
  std::vector<int> out;
  int v = start;
  for (Letter l : w.letters()) {
    auto d = step_letter(g, v, l);
    if (!d) throw precondition_error("image word fails to lift");
    out.push_back(d->signed_id());
    v = dir_target(g, *d);
  }
  return out;
}

// BFS path (as signed edges) to the nearest branch point, ties by smallest id.
std::vector<int> path_to_nearest(const LabeledGraph& g, int from,
                                 const std::set<int>& targets) {
  if (targets.count(from)) return {};
  std::vector<int> via(g.num_vertices, 0);  // signed edge used to reach
  std::vector<int> dist(g.num_vertices, -1);
  dist[from] = 0;
  std::vector<int> frontier = {from};
  while (!frontier.empty()) {
    std::vector<int> hits;
    std::vector<int> next;
    for (int v : frontier)
      for (Dir d : directions_at(g, v)) {
        int w = dir_target(g, d);
        if (dist[w] >= 0) continue;
        dist[w] = dist[v] + 1;
        via[w] = d.signed_id();
        next.push_back(w);
        if (targets.count(w)) hits.push_back(w);
      }
    if (!hits.empty()) {
      int best = *std::min_element(hits.begin(), hits.end());
      std::vector<int> path;
      for (int v = best; v != from;
           v = dir_origin(g, Dir::from_signed(via[v])))
        path.push_back(via[v]);
      std::reverse(path.begin(), path.end());
      return path;
    }
    frontier = next;
  }
  throw precondition_error("no branch point reachable");
}

}  // namespace

GraphMap homotopy_lift(const GraphMap& f, const SubgroupGraph& s_k) {
  EndoSpec phi = rose_endo(s_k.basis, f);
  const LabeledGraph& g = s_k.graph;
  int base = g.basepoint.value_or(0);

  GraphMap lift;
  lift.domain = lift.codomain = g;
  lift.vertex_map.resize(g.num_vertices);
  std::vector<Word> residual(g.num_vertices);
  for (int v = 0; v < g.num_vertices; ++v) {
    Word image = apply_endo(phi, s_k.tree_path[v]);
    auto [end, rest] = trace_partial(g, base, image);
    lift.vertex_map[v] = end;
    residual[v] = rest;
  }
  for (const Edge& e : g.edges) {
    Word x = concat(concat(residual[e.from],
                           apply_endo(phi, Word({e.label}))),
                    residual[e.to].inverse());
    lift.edge_images.push_back(
        trace_to_path(g, lift.vertex_map[e.from], x));
  }

  // Naturalize: branch points must map to branch points.
  NaturalStructure ns = natural_structure(g);
  std::set<int> branch(ns.branch_points.begin(), ns.branch_points.end());
  if (!branch.empty()) {
    std::vector<std::vector<int>> shift(g.num_vertices);
    for (int v : ns.branch_points)
      if (!branch.count(lift.vertex_map[v]))
        shift[v] = path_to_nearest(g, lift.vertex_map[v], branch);
    for (int e = 0; e < static_cast<int>(g.edges.size()); ++e) {
      const Edge& ed = g.edges[e];
      if (shift[ed.from].empty() && shift[ed.to].empty()) continue;
      std::vector<int> p = reverse_path(shift[ed.from]);
      p.insert(p.end(), lift.edge_images[e].begin(), lift.edge_images[e].end());
      p.insert(p.end(), shift[ed.to].begin(), shift[ed.to].end());
      lift.edge_images[e] = tighten_path(p);
    }
    for (int v = 0; v < g.num_vertices; ++v)
      if (!shift[v].empty())
        lift.vertex_map[v] = dir_target(g, Dir::from_signed(shift[v].back()));
  }

  lift.lipschitz = max_image_length(lift);
  lift.cancellation = cancellation_constant(lift);
  validate_map(lift);
  return lift;
}

bool CollapsedMap::has_pretrivial_edge() const {
  for (const auto& p : edge_images)
    if (p.steps.empty()) return true;
  return false;
}

static Word quotient_transit_word(const LabeledGraph& g,
                                  const std::vector<Letter>& letters) {
  return reduce(letters);
  (void)g;
}

CollapsedMap collapse_stratum(const FilteredGraphMap& f, int stratum) {
  const GraphMap& m = f.map;
  const LabeledGraph& g = m.domain;
  if (stratum < 0 || stratum >= static_cast<int>(f.strata.size()))
    throw precondition_error("no such stratum");
  std::set<int> z(f.strata[stratum].begin(), f.strata[stratum].end());

  // invariance check
  for (int e : z)
    for (int s : m.edge_images[e])
      if (!z.count(std::abs(s) - 1))
        throw precondition_error("stratum is not invariant");

  // components spanned by stratum edges
  std::vector<int> parent(g.num_vertices);
  std::iota(parent.begin(), parent.end(), 0);
  std::function<int(int)> find = [&](int v) {
    while (parent[v] != v) v = parent[v] = parent[parent[v]];
    return v;
  };
  for (int e : z) {
    int a = find(g.edges[e].from), b = find(g.edges[e].to);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }

  CollapsedMap q;
  q.original = g;
  q.quotient_vertex.assign(g.num_vertices, -1);
  std::map<int, int> comp_id;  // root -> group index (roots with stratum edges)
  std::set<int> roots_with_z;
  for (int e : z) roots_with_z.insert(find(g.edges[e].from));
  for (int root : roots_with_z) {
    int idx = static_cast<int>(q.groups.size());
    comp_id[root] = idx;
    q.groups.emplace_back();
    q.component_vertices.emplace_back();
    q.component_subgraphs.emplace_back();
  }
  // quotient vertices: components first (in root order), then loose vertices
  for (auto& [root, idx] : comp_id) {
    q.vertex_group.push_back(idx);
    int qv = q.graph.num_vertices++;
    for (int v = 0; v < g.num_vertices; ++v)
      if (find(v) == root) {
        q.quotient_vertex[v] = qv;
        q.component_vertices[idx].push_back(v);
      }
  }
  for (int v = 0; v < g.num_vertices; ++v) {
    if (q.quotient_vertex[v] >= 0) continue;
    q.quotient_vertex[v] = q.graph.num_vertices++;
    q.vertex_group.push_back(-1);
  }
  if (g.basepoint) q.graph.basepoint = q.quotient_vertex[*g.basepoint];

  // component subgraphs (local vertex order = component_vertices order)
  for (size_t i = 0; i < q.groups.size(); ++i) {
    std::map<int, int> local;
    for (int v : q.component_vertices[i])
      local[v] = static_cast<int>(local.size());
    LabeledGraph& sub = q.component_subgraphs[i];
    sub.num_vertices = static_cast<int>(local.size());
    for (int e : z)
      if (local.count(g.edges[e].from))
        sub.edges.push_back({local[g.edges[e].from], local[g.edges[e].to],
                             g.edges[e].label});
    q.groups[i] = core(sub, false);
  }

  // quotient edges
  std::vector<int> quotient_edge(g.edges.size(), -1);
  for (int e = 0; e < static_cast<int>(g.edges.size()); ++e) {
    if (z.count(e)) continue;
    quotient_edge[e] = static_cast<int>(q.graph.edges.size());
    q.graph.edges.push_back({q.quotient_vertex[g.edges[e].from],
                             q.quotient_vertex[g.edges[e].to],
                             g.edges[e].label});
    q.edge_attach.emplace_back(g.edges[e].from, g.edges[e].to);
  }

  // induced vertex map
  q.vertex_map.assign(q.graph.num_vertices, -1);
  for (int v = 0; v < g.num_vertices; ++v)
    q.vertex_map[q.quotient_vertex[v]] = q.quotient_vertex[m.vertex_map[v]];

  // induced edge images with transit words
  for (int e = 0; e < static_cast<int>(g.edges.size()); ++e) {
    if (z.count(e)) continue;
    CollapsedPath cp;
    std::vector<Letter> transit;
    for (int s : m.edge_images[e]) {
      int oe = std::abs(s) - 1;
      if (z.count(oe)) {
        transit.push_back(s > 0 ? g.edges[oe].label : -g.edges[oe].label);
      } else {
        cp.transits.push_back(quotient_transit_word(g, transit));
        transit.clear();
        cp.steps.push_back(s > 0 ? quotient_edge[oe] + 1
                                 : -(quotient_edge[oe] + 1));
      }
    }
    cp.transits.push_back(quotient_transit_word(g, transit));
    // tighten: a backtrack cancels only across a trivial transit
    bool changed = true;
    while (changed) {
      changed = false;
      for (size_t i = 0; i + 1 < cp.steps.size(); ++i) {
        if (cp.steps[i] == -cp.steps[i + 1] && cp.transits[i + 1].empty()) {
          Word merged = concat(cp.transits[i], cp.transits[i + 2]);
          cp.steps.erase(cp.steps.begin() + i, cp.steps.begin() + i + 2);
          cp.transits.erase(cp.transits.begin() + i,
                            cp.transits.begin() + i + 2);
          cp.transits[i] = merged;
          changed = true;
          break;
        }
      }
    }
    q.edge_images.push_back(std::move(cp));
  }
  return q;
}

FilteredGraphMap vertex_blowup(const CollapsedMap& q,
                               const std::vector<GraphMap>& filler_maps) {
  if (filler_maps.size() != q.groups.size())
    throw precondition_error("one filler map per labelled vertex required");

  // target group of each filler
  std::vector<int> target(q.groups.size(), -1);
  std::vector<int> group_qv(q.groups.size(), -1);
  for (int v = 0; v < q.graph.num_vertices; ++v)
    if (q.vertex_group[v] >= 0) group_qv[q.vertex_group[v]] = v;
  for (size_t i = 0; i < q.groups.size(); ++i) {
    int img = q.vertex_map[group_qv[i]];
    if (q.vertex_group[img] < 0)
      throw precondition_error("filler image is not a labelled vertex");
    target[i] = q.vertex_group[img];
    if (filler_maps[i].domain != q.component_subgraphs[i] ||
        filler_maps[i].codomain != q.component_subgraphs[target[i]])
      throw precondition_error("filler map does not match attachment");
  }

  FilteredGraphMap out;
  LabeledGraph& g = out.map.domain;

  // vertex layout: original vertex ids are reused
  g.num_vertices = q.original.num_vertices;
  g.basepoint = q.original.basepoint;
  std::vector<int> vmap(g.num_vertices, -1);

  std::vector<std::vector<int>> filler_edge_global(q.groups.size());
  std::vector<int> stratum_edges;
  for (size_t i = 0; i < q.groups.size(); ++i) {
    const LabeledGraph& sub = q.component_subgraphs[i];
    for (const Edge& e : sub.edges) {
      int id = static_cast<int>(g.edges.size());
      filler_edge_global[i].push_back(id);
      g.edges.push_back({q.component_vertices[i][e.from],
                         q.component_vertices[i][e.to], e.label});
      stratum_edges.push_back(id);
    }
    for (size_t lv = 0; lv < q.component_vertices[i].size(); ++lv)
      vmap[q.component_vertices[i][lv]] =
          q.component_vertices[target[i]][filler_maps[i].vertex_map[lv]];
  }
  std::vector<int> quotient_edge_global;
  for (size_t e = 0; e < q.graph.edges.size(); ++e) {
    quotient_edge_global.push_back(static_cast<int>(g.edges.size()));
    g.edges.push_back({q.edge_attach[e].first, q.edge_attach[e].second,
                       q.graph.edges[e].label});
  }
  for (int v = 0; v < g.num_vertices; ++v)
    if (vmap[v] < 0) {
      // loose vertex: its quotient image must be loose as well
      int qi = q.quotient_vertex[v];
      int qimg = q.vertex_map[qi];
      if (q.vertex_group[qimg] >= 0)
        throw precondition_error("loose vertex mapped into a component");
      for (int w = 0; w < g.num_vertices; ++w)
        if (q.quotient_vertex[w] == qimg) vmap[v] = w;
    }
  out.map.codomain = g;
  out.map.vertex_map = vmap;

  // edge images
  out.map.edge_images.assign(g.edges.size(), {});
  for (size_t i = 0; i < q.groups.size(); ++i)
    for (size_t le = 0; le < filler_edge_global[i].size(); ++le) {
      std::vector<int> path;
      for (int s : filler_maps[i].edge_images[le]) {
        int global = filler_edge_global[target[i]][std::abs(s) - 1];
        path.push_back(s > 0 ? global + 1 : -(global + 1));
      }
      out.map.edge_images[filler_edge_global[i][le]] = path;
    }
  for (size_t e = 0; e < q.graph.edges.size(); ++e) {
    const CollapsedPath& cp = q.edge_images[e];
    int cur = vmap[q.edge_attach[e].first];
    std::vector<int> path;
    auto expand_transit = [&](const Word& w) {
      for (Letter l : w.letters()) {
        auto d = step_letter(g, cur, l);
        if (!d) throw precondition_error("transit word fails to expand");
        path.push_back(d->signed_id());
        cur = dir_target(g, *d);
      }
    };
    for (size_t i = 0; i < cp.steps.size(); ++i) {
      expand_transit(cp.transits[i]);
      int qe = std::abs(cp.steps[i]) - 1;
      int global = quotient_edge_global[qe];
      int from = cp.steps[i] > 0 ? q.edge_attach[qe].first
                                 : q.edge_attach[qe].second;
      int to = cp.steps[i] > 0 ? q.edge_attach[qe].second
                               : q.edge_attach[qe].first;
      if (cur != from)
        throw precondition_error("collapsed path fails to reassemble");
      path.push_back(cp.steps[i] > 0 ? global + 1 : -(global + 1));
      cur = to;
    }
    expand_transit(cp.transits.back());
    if (cur != vmap[q.edge_attach[e].second])
      throw precondition_error("collapsed path endpoint mismatch");
    out.map.edge_images[quotient_edge_global[e]] = tighten_path(path);
  }

  out.map.lipschitz = max_image_length(out.map);
  out.strata.push_back(stratum_edges);
  validate_map(out.map);
  return out;
}

}  // namespace fgend
