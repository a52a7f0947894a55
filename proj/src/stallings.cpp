#include "stallings.h"

#include <algorithm>
#include <functional>
#include <map>
#include <numeric>
#include <queue>

#include "graphmap.h"

namespace fgend {

namespace {

// Folding state over an arbitrary integer-labelled graph. Each fold removes
// exactly one edge, so the fold count is independent of the fold order; the
// FIFO worklist ordered by smallest ids keeps the result deterministic.
struct Folder {
  std::vector<int> parent;
  std::vector<int> size;
  std::vector<Edge> edges;
  std::vector<bool> alive;
  // per root: signed label -> incident edge ids (forward under +label,
  // backward under -label)
  std::vector<std::map<int, std::vector<int>>> adj;
  int fold_count = 0;
  bool collapse = false;

  explicit Folder(const LabeledGraph& g) {
    parent.resize(g.num_vertices);
    std::iota(parent.begin(), parent.end(), 0);
    size.assign(g.num_vertices, 1);
    adj.resize(g.num_vertices);
    edges = g.edges;
    alive.assign(edges.size(), true);
    for (int e = 0; e < static_cast<int>(edges.size()); ++e) {
      adj[edges[e].from][edges[e].label].push_back(e);
      adj[edges[e].to][-edges[e].label].push_back(e);
    }
  }

  int find(int v) {
    while (parent[v] != v) v = parent[v] = parent[parent[v]];
    return v;
  }

  // far endpoint of edge e as seen from a vertex reached via signed label s
  int far(int e, int s) { return find(s > 0 ? edges[e].to : edges[e].from); }

  void run() {
    std::queue<int> work;
    for (int v = 0; v < static_cast<int>(parent.size()); ++v) work.push(v);
    while (!work.empty()) {
      int r = find(work.front());
      work.pop();
      bool dirty = true;
      while (dirty) {
        dirty = false;
        for (auto& [label, list] : adj[r]) {
          // drop dead and stale entries
          std::vector<int> live;
          for (int e : list)
            if (alive[e] &&
                ((label > 0 && find(edges[e].from) == r) ||
                 (label < 0 && find(edges[e].to) == r)))
              live.push_back(e);
          std::sort(live.begin(), live.end());
          live.erase(std::unique(live.begin(), live.end()), live.end());
          list = live;
          if (list.size() < 2) continue;
          int e1 = list[0], e2 = list[1];
          ++fold_count;
          alive[e2] = false;
          int f1 = far(e1, label), f2 = far(e2, label);
          if (f1 == f2) {
            collapse = true;
          } else {
            int keep = f1, drop = f2;
            if (size[keep] < size[drop]) std::swap(keep, drop);
            parent[drop] = keep;
            size[keep] += size[drop];
            for (auto& [l2, list2] : adj[drop]) {
              auto& dst = adj[keep][l2];
              dst.insert(dst.end(), list2.begin(), list2.end());
            }
            adj[drop].clear();
            work.push(keep);
            r = find(r);
          }
          dirty = true;
          break;
        }
      }
    }
  }

  // Quotient graph; classes renumbered by smallest original vertex id.
  LabeledGraph result(std::optional<int> base_vertex) {
    int n = static_cast<int>(parent.size());
    std::vector<int> smallest(n, -1);
    for (int v = 0; v < n; ++v) {
      int r = find(v);
      if (smallest[r] < 0) smallest[r] = v;
    }
    std::vector<std::pair<int, int>> roots;  // (smallest id, root)
    for (int v = 0; v < n; ++v)
      if (find(v) == v) roots.emplace_back(smallest[v], v);
    std::sort(roots.begin(), roots.end());
    std::vector<int> newid(n, -1);
    for (int i = 0; i < static_cast<int>(roots.size()); ++i)
      newid[roots[i].second] = i;
    LabeledGraph out;
    out.num_vertices = static_cast<int>(roots.size());
    for (int e = 0; e < static_cast<int>(edges.size()); ++e)
      if (alive[e])
        out.edges.push_back({newid[find(edges[e].from)],
                             newid[find(edges[e].to)], edges[e].label});
    if (base_vertex) out.basepoint = newid[find(*base_vertex)];
    return out;
  }
};

}  // namespace

std::optional<Dir> step_letter(const LabeledGraph& g, int v, Letter l) {
  for (int e = 0; e < static_cast<int>(g.edges.size()); ++e) {
    if (l > 0 && g.edges[e].from == v && g.edges[e].label == l)
      return Dir{e, true};
    if (l < 0 && g.edges[e].to == v && g.edges[e].label == -l)
      return Dir{e, false};
  }
  return std::nullopt;
}

std::optional<int> trace_word(const LabeledGraph& g, int start, const Word& w) {
  int v = start;
  for (Letter l : w.letters()) {
    auto d = step_letter(g, v, l);
    if (!d) return std::nullopt;
    v = dir_target(g, *d);
  }
  return v;
}

void attach_marking(SubgroupGraph& s) {
  const LabeledGraph& g = s.graph;
  int base = g.basepoint.value_or(0);
  s.tree_path.assign(g.num_vertices, Word());
  s.marking.clear();
  s.marking_edge.clear();
  std::vector<bool> seen(g.num_vertices, false);
  std::vector<bool> tree_edge(g.edges.size(), false);
  std::queue<int> q;
  seen[base] = true;
  q.push(base);
  while (!q.empty()) {
    int v = q.front();
    q.pop();
    for (Dir d : directions_at(g, v)) {
      int w = dir_target(g, d);
      if (seen[w]) continue;
      seen[w] = true;
      tree_edge[d.edge] = true;
      std::vector<Letter> path = s.tree_path[v].letters();
      path.push_back(dir_letter(g, d));
      s.tree_path[w] = Word(path);
      q.push(w);
    }
  }
  for (int e = 0; e < static_cast<int>(g.edges.size()); ++e) {
    if (tree_edge[e]) continue;
    Word loop = concat(
        concat(s.tree_path[g.edges[e].from], Word({g.edges[e].label})),
        s.tree_path[g.edges[e].to].inverse());
    s.marking.push_back(loop);
    s.marking_edge.push_back(e);
  }
}

std::pair<SubgroupGraph, FoldTrace> subgroup_graph(const Basis& basis,
                                                   const std::vector<Word>& gens) {
  LabeledGraph wedge;
  wedge.num_vertices = 1;
  wedge.basepoint = 0;
  for (const Word& w : gens) {
    if (w.empty()) continue;
    int prev = 0;
    const auto& ls = w.letters();
    for (int i = 0; i < static_cast<int>(ls.size()); ++i) {
      int next = (i + 1 == static_cast<int>(ls.size())) ? 0
                                                        : wedge.num_vertices++;
      Letter l = ls[i];
      if (l > 0)
        wedge.edges.push_back({prev, next, l});
      else
        wedge.edges.push_back({next, prev, -l});
      prev = next;
    }
  }
  Folder folder(wedge);
  folder.run();
  FoldTrace trace{folder.fold_count, folder.collapse};
  SubgroupGraph s;
  s.basis = basis;
  s.generators = gens;
  s.graph = core(folder.result(0), true);
  attach_marking(s);
  return {s, trace};
}

bool contains(const SubgroupGraph& s, const Word& w) {
  int base = s.graph.basepoint.value_or(0);
  auto end = trace_word(s.graph, base, w);
  return end && *end == base;
}

std::optional<int> conjugate_into(const SubgroupGraph& s, const CyclicWord& c) {
  if (c.empty()) return s.graph.basepoint.value_or(0);
  Word w = c.word();
  for (int v = 0; v < s.graph.num_vertices; ++v) {
    auto end = trace_word(s.graph, v, w);
    if (end && *end == v) return v;
  }
  return std::nullopt;
}

std::optional<Word> express_in_generators(const SubgroupGraph& s,
                                          const Word& w) {
  std::vector<int> marking_index(s.graph.edges.size(), -1);
  for (int i = 0; i < static_cast<int>(s.marking_edge.size()); ++i)
    marking_index[s.marking_edge[i]] = i;
  int base = s.graph.basepoint.value_or(0);
  int v = base;
  std::vector<Letter> out;
  for (Letter l : w.letters()) {
    auto d = step_letter(s.graph, v, l);
    if (!d) return std::nullopt;
    int idx = marking_index[d->edge];
    if (idx >= 0) out.push_back(d->forward ? idx + 1 : -(idx + 1));
    v = dir_target(s.graph, *d);
  }
  if (v != base) return std::nullopt;
  return reduce(out);
}

Word expand_marking(const SubgroupGraph& s, const Word& in_marking_basis) {
  std::vector<Letter> out;
  for (Letter l : in_marking_basis.letters()) {
    const Word& gen = s.marking[std::abs(l) - 1];
    if (l > 0) {
      for (Letter m : gen.letters()) out.push_back(m);
    } else {
      for (auto it = gen.letters().rbegin(); it != gen.letters().rend(); ++it)
        out.push_back(-*it);
    }
  }
  return reduce(out);
}

int cancellation_constant(const GraphMap& f) {
  // Subdivide each domain edge along its image path; unit edges are labelled
  // by the codomain edge they cross. Folding this graph to completion realizes
  // the Stallings decomposition of f; the fold count is the number of edges
  // removed.
  // Pretrivial edges are collapsed first (cancellation constant 0).
  std::vector<int> cls(f.domain.num_vertices);
  std::iota(cls.begin(), cls.end(), 0);
  std::function<int(int)> find_cls = [&](int v) {
    while (cls[v] != v) v = cls[v] = cls[cls[v]];
    return v;
  };
  for (int e = 0; e < static_cast<int>(f.domain.edges.size()); ++e)
    if (f.edge_images[e].empty()) {
      int a = find_cls(f.domain.edges[e].from);
      int b = find_cls(f.domain.edges[e].to);
      if (a != b) cls[std::max(a, b)] = std::min(a, b);
    }
  LabeledGraph sub;
  sub.num_vertices = f.domain.num_vertices;
  for (int e = 0; e < static_cast<int>(f.domain.edges.size()); ++e) {
    const auto& path = f.edge_images[e];
    if (path.empty()) continue;
    int prev = find_cls(f.domain.edges[e].from);
    for (int i = 0; i < static_cast<int>(path.size()); ++i) {
      int next = (i + 1 == static_cast<int>(path.size()))
                     ? find_cls(f.domain.edges[e].to)
                     : sub.num_vertices++;
      int step = path[i];
      if (step > 0)
        sub.edges.push_back({prev, next, step});
      else
        sub.edges.push_back({next, prev, -step});
      prev = next;
    }
  }
  Folder folder(sub);
  folder.run();
  if (folder.collapse)
    throw precondition_error(
        "map is not pi1-injective: folding collapsed a loop");
  return folder.fold_count;
}

}  // namespace fgend
