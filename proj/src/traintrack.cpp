#include "traintrack.h"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

namespace fgend {

namespace {

int dir_index(int signed_id) {
  int e = std::abs(signed_id) - 1;
  return 2 * e + (signed_id > 0 ? 0 : 1);
}

// Directed image path of a direction under a self-map.
std::vector<int> directed_image(const GraphMap& f, int signed_id) {
  int e = std::abs(signed_id) - 1;
  if (signed_id > 0) return f.edge_images[e];
  return reverse_path(f.edge_images[e]);
}

// Derivative: first direction of the image path.
int derivative(const GraphMap& f, int signed_id) {
  std::vector<int> p = directed_image(f, signed_id);
  if (p.empty()) throw precondition_error("derivative of a pretrivial edge");
  return p.front();
}

void require_no_pretrivial(const GraphMap& f) {
  for (const auto& p : f.edge_images)
    if (p.empty()) throw precondition_error("map has a pretrivial edge");
}

std::vector<std::vector<int>> over_digraph(const TransitionMatrix& A) {
  // j -> i when edge j maps over edge i
  std::vector<std::vector<int>> adj(A.size);
  for (int j = 0; j < A.size; ++j)
    for (int i = 0; i < A.size; ++i)
      if (A.entries[i][j] > 0) adj[j].push_back(i);
  return adj;
}

std::vector<int> scc_ids(const std::vector<std::vector<int>>& adj) {
  int n = static_cast<int>(adj.size());
  std::vector<std::vector<bool>> reach(n, std::vector<bool>(n, false));
  for (int s = 0; s < n; ++s) {
    std::vector<int> stack = {s};
    reach[s][s] = true;
    while (!stack.empty()) {
      int v = stack.back();
      stack.pop_back();
      for (int w : adj[v])
        if (!reach[s][w]) {
          reach[s][w] = true;
          stack.push_back(w);
        }
    }
  }
  std::vector<int> id(n, -1);
  int next = 0;
  for (int v = 0; v < n; ++v) {
    if (id[v] >= 0) continue;
    id[v] = next;
    for (int w = v + 1; w < n; ++w)
      if (reach[v][w] && reach[w][v]) id[w] = next;
    ++next;
  }
  return id;
}

}  // namespace

TransitionMatrix transition_matrix(const GraphMap& f) {
  require_no_pretrivial(f);
  int n = static_cast<int>(f.domain.edges.size());
  TransitionMatrix A;
  A.size = n;
  A.entries.assign(n, std::vector<long>(n, 0));
  for (int j = 0; j < n; ++j)
    for (int s : f.edge_images[j]) ++A.entries[std::abs(s) - 1][j];
  return A;
}

TransitionMatrix transition_matrix(const FilteredGraphMap& f, int stratum) {
  const std::vector<int>& edges = f.strata.at(stratum);
  std::vector<int> pos(f.map.domain.edges.size(), -1);
  for (int i = 0; i < static_cast<int>(edges.size()); ++i) pos[edges[i]] = i;
  int n = static_cast<int>(edges.size());
  TransitionMatrix A;
  A.size = n;
  A.entries.assign(n, std::vector<long>(n, 0));
  for (int j = 0; j < n; ++j) {
    if (f.map.edge_images[edges[j]].empty())
      throw precondition_error("stratum has a pretrivial edge");
    for (int s : f.map.edge_images[edges[j]]) {
      int i = pos[std::abs(s) - 1];
      if (i >= 0) ++A.entries[i][j];
    }
  }
  return A;
}

TransitionMatrix transition_matrix(const CollapsedMap& q) {
  int n = static_cast<int>(q.graph.edges.size());
  TransitionMatrix A;
  A.size = n;
  A.entries.assign(n, std::vector<long>(n, 0));
  for (int j = 0; j < n; ++j)
    for (int s : q.edge_images[j].steps) ++A.entries[std::abs(s) - 1][j];
  return A;
}

bool is_irreducible(const TransitionMatrix& A) {
  if (A.size == 0) return false;
  auto adj = over_digraph(A);
  std::vector<int> id = scc_ids(adj);
  return *std::max_element(id.begin(), id.end()) == 0;
}

bool is_permutation_matrix(const TransitionMatrix& A) {
  for (int i = 0; i < A.size; ++i) {
    long row = 0, col = 0;
    for (int j = 0; j < A.size; ++j) {
      if (A.entries[i][j] != 0 && A.entries[i][j] != 1) return false;
      row += A.entries[i][j];
      col += A.entries[j][i];
    }
    if (row != 1 || col != 1) return false;
  }
  return A.size > 0;
}

SpectralResult pf_eigenvalue(const TransitionMatrix& A, double tol) {
  if (!is_irreducible(A))
    throw precondition_error("transition matrix is reducible");
  SpectralResult r;
  r.tolerance = tol;
  if (is_permutation_matrix(A)) {
    r.lambda = 1.0;
    r.is_one_exact = true;
    return r;
  }
  if (A.size == 1) {
    r.lambda = static_cast<double>(A.entries[0][0]);
    return r;
  }
  // shifted power iteration: A + I is primitive when A is irreducible
  int n = A.size;
  std::vector<double> v(n, 1.0);
  for (long it = 0; it < 1000000; ++it) {
    std::vector<double> w(n, 0.0);
    for (int i = 0; i < n; ++i) {
      w[i] = v[i];
      for (int j = 0; j < n; ++j) w[i] += A.entries[i][j] * v[j];
    }
    double lo = 1e300, hi = 0.0;
    for (int i = 0; i < n; ++i) {
      lo = std::min(lo, w[i] / v[i]);
      hi = std::max(hi, w[i] / v[i]);
    }
    double norm = *std::max_element(w.begin(), w.end());
    for (double& x : w) x /= norm;
    v = w;
    if (hi - lo <= tol) {
      r.lambda = 0.5 * (hi + lo) - 1.0;
      // residual check against the unshifted matrix
      double res = 0.0, vmax = 0.0;
      for (int i = 0; i < n; ++i) {
        double av = 0.0;
        for (int j = 0; j < n; ++j) av += A.entries[i][j] * v[j];
        res = std::max(res, std::abs(av - r.lambda * v[i]));
        vmax = std::max(vmax, v[i]);
      }
      if (res > 10 * tol * std::max(vmax, 1.0) * std::max(r.lambda, 1.0))
        continue;
      return r;
    }
  }
  throw numeric_error("power iteration did not converge");
}

double spectral_radius(const TransitionMatrix& A, double tol) {
  if (A.size == 0) return 0.0;
  auto adj = over_digraph(A);
  std::vector<int> id = scc_ids(adj);
  int ncomp = *std::max_element(id.begin(), id.end()) + 1;
  double best = 0.0;
  for (int c = 0; c < ncomp; ++c) {
    std::vector<int> verts;
    for (int v = 0; v < A.size; ++v)
      if (id[v] == c) verts.push_back(v);
    if (verts.size() == 1 && A.entries[verts[0]][verts[0]] == 0) continue;
    TransitionMatrix B;
    B.size = static_cast<int>(verts.size());
    B.entries.assign(B.size, std::vector<long>(B.size, 0));
    for (int i = 0; i < B.size; ++i)
      for (int j = 0; j < B.size; ++j)
        B.entries[i][j] = A.entries[verts[i]][verts[j]];
    best = std::max(best, pf_eigenvalue(B, tol).lambda);
  }
  return best;
}

bool TurnStructure::legal(int d1, int d2) const {
  return gate[dir_index(d1)] != gate[dir_index(d2)];
}

TurnStructure turn_structure(const GraphMap& f) {
  require_no_pretrivial(f);
  int nd = 2 * static_cast<int>(f.domain.edges.size());
  int bound = nd * nd + 1;
  TurnStructure ts;
  ts.gate.assign(nd, -1);
  // union-find over directions
  std::vector<int> parent(nd);
  std::iota(parent.begin(), parent.end(), 0);
  std::function<int(int)> find = [&](int x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (int v = 0; v < f.domain.num_vertices; ++v) {
    std::vector<Dir> dirs = directions_at(f.domain, v);
    for (size_t i = 0; i < dirs.size(); ++i)
      for (size_t j = i + 1; j < dirs.size(); ++j) {
        int a = dirs[i].signed_id(), b = dirs[j].signed_id();
        for (int k = 0; k < bound && a != b; ++k) {
          a = derivative(f, a);
          b = derivative(f, b);
        }
        if (a == b) parent[find(dir_index(dirs[i].signed_id()))] =
                        find(dir_index(dirs[j].signed_id()));
      }
  }
  std::map<int, int> label;
  for (int i = 0; i < nd; ++i) {
    int r = find(i);
    auto [it, fresh] = label.try_emplace(r, static_cast<int>(label.size()));
    ts.gate[i] = it->second;
  }
  for (int v = 0; v < f.domain.num_vertices; ++v) {
    std::vector<Dir> dirs = directions_at(f.domain, v);
    for (size_t i = 0; i < dirs.size(); ++i)
      for (size_t j = i + 1; j < dirs.size(); ++j) {
        int a = dirs[i].signed_id(), b = dirs[j].signed_id();
        if (ts.gate[dir_index(a)] == ts.gate[dir_index(b)])
          ts.illegal_turns.push_back({a, b});
      }
  }
  return ts;
}

bool is_immersion(const GraphMap& f) {
  require_no_pretrivial(f);
  for (int v = 0; v < f.domain.num_vertices; ++v) {
    std::vector<Dir> dirs = directions_at(f.domain, v);
    std::set<int> seen;
    for (Dir d : dirs)
      if (!seen.insert(derivative(f, d.signed_id())).second) return false;
  }
  return true;
}

bool is_train_track(const GraphMap& f) {
  TurnStructure ts = turn_structure(f);
  for (const auto& path : f.edge_images)
    for (size_t i = 0; i + 1 < path.size(); ++i)
      if (!ts.legal(-path[i], path[i + 1])) return false;
  return true;
}

bool is_immersion(const CollapsedMap& q) {
  if (q.has_pretrivial_edge()) return false;
  // tightness: a backtrack must be separated by a nontrivial transit
  for (const auto& p : q.edge_images)
    for (size_t i = 0; i + 1 < p.steps.size(); ++i)
      if (p.steps[i + 1] == -p.steps[i] && p.transits[i + 1].empty())
        return false;
  // derivative injectivity with transit-carrying directions
  for (int v = 0; v < q.graph.num_vertices; ++v) {
    std::vector<std::pair<std::vector<Letter>, int>> seen;
    for (Dir d : directions_at(q.graph, v)) {
      const CollapsedPath& p = q.edge_images[d.edge];
      std::vector<Letter> lead;
      int first;
      if (d.forward) {
        lead = p.transits.front().letters();
        first = p.steps.front();
      } else {
        lead = p.transits.back().inverse().letters();
        first = -p.steps.back();
      }
      std::pair<std::vector<Letter>, int> key{lead, first};
      if (std::find(seen.begin(), seen.end(), key) != seen.end()) return false;
      seen.push_back(key);
    }
  }
  return true;
}

namespace {

GraphMap renumber_map(const GraphMap& f, const std::vector<bool>& drop_vertex,
                      const std::vector<bool>& drop_edge,
                      const std::vector<int>& vertex_merge,
                      const std::vector<std::vector<int>>& edge_rewrite) {
  // vertex_merge maps every old vertex to a surviving old vertex;
  // edge_rewrite maps each old signed edge id to a replacement path
  int nv = static_cast<int>(drop_vertex.size());
  std::vector<int> vmap(nv, -1);
  GraphMap out;
  for (int v = 0; v < nv; ++v)
    if (!drop_vertex[v]) vmap[v] = out.domain.num_vertices++;
  std::vector<int> emap(f.domain.edges.size(), -1);
  for (int e = 0; e < static_cast<int>(f.domain.edges.size()); ++e)
    if (!drop_edge[e]) {
      emap[e] = static_cast<int>(out.domain.edges.size());
      const Edge& ed = f.domain.edges[e];
      out.domain.edges.push_back({vmap[vertex_merge[ed.from]],
                                  vmap[vertex_merge[ed.to]], ed.label});
    }
  auto translate = [&](const std::vector<int>& path) {
    std::vector<int> flat;
    for (int s : path) {
      const std::vector<int>& rep =
          edge_rewrite[dir_index(s)];
      flat.insert(flat.end(), rep.begin(), rep.end());
    }
    std::vector<int> renum;
    for (int s : flat) {
      int e = emap[std::abs(s) - 1];
      renum.push_back(s > 0 ? e + 1 : -(e + 1));
    }
    return tighten_path(renum);
  };
  out.codomain = out.domain;
  for (int v = 0; v < nv; ++v)
    if (!drop_vertex[v])
      out.vertex_map.push_back(
          vmap[vertex_merge[f.vertex_map[v]]]);
  for (int e = 0; e < static_cast<int>(f.domain.edges.size()); ++e)
    if (!drop_edge[e]) out.edge_images.push_back(translate(f.edge_images[e]));
  out.lipschitz = 0;
  for (const auto& p : out.edge_images)
    out.lipschitz = std::max(out.lipschitz, static_cast<int>(p.size()));
  return out;
}

std::vector<std::vector<int>> identity_rewrite(int nedges) {
  std::vector<std::vector<int>> rw(2 * nedges);
  for (int e = 0; e < nedges; ++e) {
    rw[2 * e] = {e + 1};
    rw[2 * e + 1] = {-(e + 1)};
  }
  return rw;
}

// Contract empty-image edges (must form a forest for an injective map).
GraphMap collapse_pretrivial(GraphMap f) {
  for (;;) {
    int bad = -1;
    for (int e = 0; e < static_cast<int>(f.edge_images.size()); ++e)
      if (f.edge_images[e].empty()) {
        bad = e;
        break;
      }
    if (bad < 0) return f;
    const Edge& ed = f.domain.edges[bad];
    if (ed.from == ed.to)
      throw move_error("pretrivial loop: collapse would drop rank");
    int keep = std::min(ed.from, ed.to), gone = std::max(ed.from, ed.to);
    std::vector<bool> dv(f.domain.num_vertices, false), de(f.domain.edges.size(), false);
    dv[gone] = true;
    de[bad] = true;
    std::vector<int> vm(f.domain.num_vertices);
    std::iota(vm.begin(), vm.end(), 0);
    vm[gone] = keep;
    auto rw = identity_rewrite(static_cast<int>(f.domain.edges.size()));
    rw[2 * bad] = {};
    rw[2 * bad + 1] = {};
    f = renumber_map(f, dv, de, vm, rw);
  }
}

GraphMap do_subdivide(const GraphMap& f, int edge, int prefix) {
  const std::vector<int>& img = f.edge_images.at(edge);
  if (prefix < 1 || prefix >= static_cast<int>(img.size()))
    throw move_error("subdivision point must split the image path");
  GraphMap out = f;
  int nv = out.domain.num_vertices++;
  int ne = static_cast<int>(out.domain.edges.size());
  Edge& ed = out.domain.edges[edge];
  int old_to = ed.to;
  ed.to = nv;
  out.domain.edges.push_back({nv, old_to, f.domain.edges[edge].label});
  auto rw = identity_rewrite(ne);
  rw[2 * edge] = {edge + 1, ne + 1};
  rw[2 * edge + 1] = {-(ne + 1), -(edge + 1)};
  auto translate = [&](const std::vector<int>& path) {
    std::vector<int> flat;
    for (int s : path) {
      const auto& rep = rw[dir_index(s)];
      flat.insert(flat.end(), rep.begin(), rep.end());
    }
    return flat;
  };
  std::vector<int> whole = translate(img);
  std::vector<std::vector<int>> imgs;
  for (int e = 0; e < ne; ++e) imgs.push_back(translate(f.edge_images[e]));
  // split position in the rewritten path: prefix entries of the original
  // path expand to their rewrites
  std::vector<int> head = translate(
      std::vector<int>(img.begin(), img.begin() + prefix));
  imgs[edge] = head;
  imgs.push_back(std::vector<int>(whole.begin() + head.size(), whole.end()));
  out.edge_images = imgs;
  out.vertex_map.push_back(
      path_target(f.codomain, std::vector<int>(img.begin(), img.begin() + prefix),
                  f.vertex_map[f.domain.edges[edge].from]));
  // the new codomain vertex: recompute endpoint through the rewrite
  // (vertex ids are unchanged except the appended one)
  out.codomain = out.domain;
  out.lipschitz = 0;
  for (const auto& p : out.edge_images)
    out.lipschitz = std::max(out.lipschitz, static_cast<int>(p.size()));
  return out;
}

GraphMap do_fold(const GraphMap& f, int d1, int d2) {
  int e1 = std::abs(d1) - 1, e2 = std::abs(d2) - 1;
  if (e1 == e2) throw move_error("folding an edge onto itself drops rank");
  Dir a = Dir::from_signed(d1), b = Dir::from_signed(d2);
  if (dir_origin(f.domain, a) != dir_origin(f.domain, b))
    throw move_error("fold directions must share a vertex");
  if (directed_image(f, d1) != directed_image(f, d2))
    throw move_error("fold requires identical image paths");
  int u1 = dir_target(f.domain, a), u2 = dir_target(f.domain, b);
  std::vector<bool> dv(f.domain.num_vertices, false), de(f.domain.edges.size(), false);
  de[e2] = true;
  std::vector<int> vm(f.domain.num_vertices);
  std::iota(vm.begin(), vm.end(), 0);
  if (u1 != u2) {
    int keep = std::min(u1, u2), gone = std::max(u1, u2);
    dv[gone] = true;
    vm[gone] = keep;
  }
  auto rw = identity_rewrite(static_cast<int>(f.domain.edges.size()));
  int rep = (a.forward == b.forward) ? e1 + 1 : -(e1 + 1);
  rw[2 * e2] = {rep};
  rw[2 * e2 + 1] = {-rep};
  return collapse_pretrivial(renumber_map(f, dv, de, vm, rw));
}

GraphMap do_bivalent(const GraphMap& f, int v) {
  std::vector<Dir> dirs = directions_at(f.domain, v);
  if (dirs.size() != 2) throw move_error("vertex is not bivalent");
  if (dirs[0].edge == dirs[1].edge)
    throw move_error("cannot remove a bivalent loop vertex");
  GraphMap g = f;
  int push = dirs[1].signed_id();  // slide v along this direction
  int w = dir_target(g.domain, dirs[1]);
  // redirect images that end at v; v's own incident ends merge instead, and
  // a mid-path crossing of v is handled by the rewrite below
  for (int x = 0; x < g.domain.num_vertices; ++x)
    if (x != v && g.vertex_map[x] == v) {
      g.vertex_map[x] = w;
      for (int e = 0; e < static_cast<int>(g.domain.edges.size()); ++e) {
        if (g.domain.edges[e].from == x)
          g.edge_images[e] = tighten_path([&] {
            std::vector<int> p = {-push};
            p.insert(p.end(), g.edge_images[e].begin(), g.edge_images[e].end());
            return p;
          }());
        if (g.domain.edges[e].to == x)
          g.edge_images[e] = tighten_path([&] {
            std::vector<int> p = g.edge_images[e];
            p.push_back(push);
            return p;
          }());
      }
    }
  // merge the two incident edges into the surviving one (dirs[0]'s edge,
  // re-oriented to run across v): keep e1 as origin(c1) -> w
  int e1 = dirs[0].edge, e2 = dirs[1].edge;
  int c1 = -dirs[0].signed_id();  // direction into v along e1
  std::vector<int> merged = tighten_path([&] {
    std::vector<int> p = directed_image(g, c1);
    std::vector<int> q = directed_image(g, push);
    p.insert(p.end(), q.begin(), q.end());
    return p;
  }());
  GraphMap h = g;
  Edge& ed = h.domain.edges[e1];
  int u = dir_origin(g.domain, Dir::from_signed(c1));
  ed.from = u;
  ed.to = w;
  h.edge_images[e1] = merged;
  // rewrite crossings of v and drop e2
  std::vector<bool> dv(h.domain.num_vertices, false), de(h.domain.edges.size(), false);
  dv[v] = true;
  de[e2] = true;
  std::vector<int> vm(h.domain.num_vertices);
  std::iota(vm.begin(), vm.end(), 0);
  auto rw = identity_rewrite(static_cast<int>(h.domain.edges.size()));
  // old c1 (into v) becomes the re-oriented merged edge u -> w; the old push
  // continuation vanishes
  rw[dir_index(c1)] = {e1 + 1};
  rw[dir_index(-c1)] = {-(e1 + 1)};
  rw[dir_index(push)] = {};
  rw[dir_index(-push)] = {};
  // a tight path crossing v reads (c1, push) or (-push, -c1); with push
  // erased both reduce to the re-targeted e1
  return collapse_pretrivial(renumber_map(h, dv, de, vm, rw));
}

GraphMap do_collapse(const GraphMap& f, const std::vector<int>& edges) {
  std::set<int> in(edges.begin(), edges.end());
  if (in.empty()) return f;
  // invariance: images of collapsed edges stay inside the collapsed set
  for (int e : edges)
    for (int s : f.edge_images[e])
      if (!in.count(std::abs(s) - 1))
        throw move_error("collapse target is not invariant");
  // forest check via union-find rank count
  std::vector<int> parent(f.domain.num_vertices);
  std::iota(parent.begin(), parent.end(), 0);
  std::function<int(int)> find = [&](int x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (int e : edges) {
    int a = find(f.domain.edges[e].from), b = find(f.domain.edges[e].to);
    if (a == b) throw move_error("collapse target contains a cycle");
    parent[a] = b;
  }
  std::vector<bool> dv(f.domain.num_vertices, false), de(f.domain.edges.size(), false);
  std::vector<int> vm(f.domain.num_vertices);
  for (int v = 0; v < f.domain.num_vertices; ++v) vm[v] = find(v);
  for (int v = 0; v < f.domain.num_vertices; ++v)
    if (vm[v] != v) dv[v] = true;
  auto rw = identity_rewrite(static_cast<int>(f.domain.edges.size()));
  for (int e : edges) {
    de[e] = true;
    rw[2 * e] = {};
    rw[2 * e + 1] = {};
  }
  return renumber_map(f, dv, de, vm, rw);
}

}  // namespace

GraphMap apply_move(const GraphMap& f, const Move& move) {
  return std::visit(
      [&](const auto& m) -> GraphMap {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, Subdivide>)
          return do_subdivide(f, m.edge, m.prefix);
        else if constexpr (std::is_same_v<T, BivalentHomotopy>)
          return do_bivalent(f, m.vertex);
        else if constexpr (std::is_same_v<T, FoldTurn>)
          return do_fold(f, m.d1, m.d2);
        else
          return do_collapse(f, m.edges);
      },
      move);
}

namespace {

std::string state_key(const GraphMap& f) {
  std::ostringstream os;
  os << f.domain.num_vertices << ";";
  for (const Edge& e : f.domain.edges)
    os << e.from << "," << e.to << "," << e.label << ";";
  for (int v : f.vertex_map) os << v << ",";
  os << ";";
  for (const auto& p : f.edge_images) {
    for (int s : p) os << s << ",";
    os << ";";
  }
  return os.str();
}

double safe_lambda(const GraphMap& f) {
  try {
    return spectral_radius(transition_matrix(f));
  } catch (const std::exception&) {
    return -1.0;
  }
}

// First illegal turn crossed by an edge image, if any.
std::optional<std::pair<int, int>> crossed_illegal_turn(const GraphMap& f) {
  TurnStructure ts = turn_structure(f);
  for (const auto& path : f.edge_images)
    for (size_t i = 0; i + 1 < path.size(); ++i)
      if (!ts.legal(-path[i], path[i + 1]))
        return std::make_pair(-path[i], path[i + 1]);
  return std::nullopt;
}

}  // namespace

TrackOutcome make_train_track(const GraphMap& f, int budget) {
  TrackOutcome out;
  out.map = collapse_pretrivial(f);
  // Merging bivalent vertices after every fold keeps the graph from growing
  // without bound, so the state-revisit check can actually fire on maps the
  // fold loop cannot resolve.
  auto normalize = [&out]() {
    bool changed = true;
    while (changed) {
      changed = false;
      for (int v = 0; v < out.map.domain.num_vertices; ++v) {
        std::vector<Dir> dirs = directions_at(out.map.domain, v);
        if (dirs.size() == 2 && dirs[0].edge != dirs[1].edge) {
          double before = safe_lambda(out.map);
          out.map = apply_move(out.map, BivalentHomotopy{v});
          out.trace.push_back({"bivalent", v, before, safe_lambda(out.map)});
          changed = true;
          break;
        }
      }
    }
  };
  std::set<std::string> seen;
  int stalls = 0;
  for (int step = 0; step < budget; ++step) {
    if (!seen.insert(state_key(out.map)).second) return out;  // state revisit
    auto turn = crossed_illegal_turn(out.map);
    if (!turn) {
      normalize();
      if (!crossed_illegal_turn(out.map)) {
        out.ok = true;
        return out;
      }
      continue;
    }
    // walk the illegal turn to a degenerate one
    auto [d1, d2] = *turn;
    int guard = 2 * static_cast<int>(out.map.domain.edges.size()) + 2;
    while (derivative(out.map, d1) != derivative(out.map, d2) && guard-- > 0) {
      d1 = derivative(out.map, d1);
      d2 = derivative(out.map, d2);
    }
    if (guard <= 0) throw std::logic_error("illegal turn failed to degenerate");
    // equalize image paths by subdividing past the common prefix
    std::vector<int> p1 = directed_image(out.map, d1);
    std::vector<int> p2 = directed_image(out.map, d2);
    size_t lcp = 0;
    while (lcp < p1.size() && lcp < p2.size() && p1[lcp] == p2[lcp]) ++lcp;
    double before = safe_lambda(out.map);
    auto split = [&](int d, size_t keep, int other) -> std::pair<int, int> {
      // subdivide so the directed edge d carries exactly `keep` image
      // entries; returns the updated (d, other) direction ids
      int e = std::abs(d) - 1;
      size_t len = out.map.edge_images[e].size();
      if (len == keep) return {d, other};
      int ne = static_cast<int>(out.map.domain.edges.size());
      if (d > 0) {
        out.map = apply_move(out.map, Subdivide{e, static_cast<int>(keep)});
        return {d, other};
      }
      out.map = apply_move(
          out.map, Subdivide{e, static_cast<int>(len - keep)});
      // backward direction now enters through the appended edge
      int nd = -(ne + 1);
      return {nd, other};
    };
    std::tie(d1, d2) = split(d1, lcp, d2);
    std::tie(d2, d1) = split(d2, lcp, d1);
    if (directed_image(out.map, d1) != directed_image(out.map, d2)) {
      // both directions sat on one edge and the first subdivision moved the
      // second one; the subdivisions stand, re-find the turn next round, but
      // give up loudly when the same situation keeps re-forming
      if (++stalls > 8) return out;
      continue;
    }
    stalls = 0;
    out.map = apply_move(out.map, FoldTurn{d1, d2});
    out.trace.push_back({"fold", d1, before, safe_lambda(out.map)});
    normalize();
  }
  return out;  // budget exhausted
}

std::vector<bool> expansion_profile(const GraphMap& f) {
  require_no_pretrivial(f);
  TransitionMatrix A = transition_matrix(f);
  auto adj = over_digraph(A);
  int n = A.size;
  std::vector<bool> expanding(n, false);
  for (int e = 0; e < n; ++e) {
    std::vector<bool> vis(n, false);
    std::vector<int> stack = {e};
    vis[e] = true;
    while (!stack.empty()) {
      int x = stack.back();
      stack.pop_back();
      if (f.edge_images[x].size() != 1) {
        expanding[e] = true;
        break;
      }
      for (int y : adj[x])
        if (!vis[y]) {
          vis[y] = true;
          stack.push_back(y);
        }
    }
  }
  return expanding;
}

std::vector<bool> expansion_profile(const CollapsedMap& q) {
  TransitionMatrix A = transition_matrix(q);
  auto adj = over_digraph(A);
  int n = A.size;
  std::vector<bool> expanding(n, false);
  for (int e = 0; e < n; ++e) {
    std::vector<bool> vis(n, false);
    std::vector<int> stack = {e};
    vis[e] = true;
    while (!stack.empty()) {
      int x = stack.back();
      stack.pop_back();
      if (q.edge_images[x].length() != 1) {
        expanding[e] = true;
        break;
      }
      for (int y : adj[x])
        if (!vis[y]) {
          vis[y] = true;
          stack.push_back(y);
        }
    }
  }
  return expanding;
}

bool is_expanding(const GraphMap& f) {
  auto p = expansion_profile(f);
  return !p.empty() && std::all_of(p.begin(), p.end(), [](bool b) { return b; });
}

bool is_expanding(const CollapsedMap& q) {
  auto p = expansion_profile(q);
  return !p.empty() && std::all_of(p.begin(), p.end(), [](bool b) { return b; });
}

}  // namespace fgend
