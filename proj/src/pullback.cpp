#include "pullback.h"

#include <algorithm>
#include <functional>
#include <map>
#include <numeric>
#include <queue>
#include <stdexcept>

#include "graphmap.h"
#include "json.hpp"

namespace fgend {

namespace {

// Drop valence <= 1 vertices of a connected tagged graph until none remain,
// keeping one vertex when everything contracts.
void core_tagged(LabeledGraph& g, std::vector<std::pair<int, int>>& tags) {
  int n = g.num_vertices;
  int m = static_cast<int>(g.edges.size());
  std::vector<int> deg(n, 0);
  std::vector<std::vector<int>> inc(n);
  for (int ei = 0; ei < m; ++ei) {
    const Edge& e = g.edges[ei];
    deg[e.from] += e.from == e.to ? 2 : 1;
    if (e.from != e.to) ++deg[e.to];
    inc[e.from].push_back(ei);
    if (e.from != e.to) inc[e.to].push_back(ei);
  }
  std::vector<bool> dead_v(n, false), dead_e(m, false);
  std::queue<int> q;
  for (int v = 0; v < n; ++v)
    if (deg[v] <= 1) q.push(v);
  int alive = n;
  while (!q.empty()) {
    int v = q.front();
    q.pop();
    if (dead_v[v] || alive <= 1) continue;
    dead_v[v] = true;
    --alive;
    for (int ei : inc[v]) {
      if (dead_e[ei]) continue;
      dead_e[ei] = true;
      const Edge& e = g.edges[ei];
      int o = e.from == v ? e.to : e.from;
      if (!dead_v[o] && --deg[o] <= 1) q.push(o);
    }
  }
  LabeledGraph next;
  std::vector<std::pair<int, int>> next_tags;
  std::vector<int> remap(n, -1);
  for (int v = 0; v < n; ++v)
    if (!dead_v[v]) {
      remap[v] = next.num_vertices++;
      next_tags.push_back(tags[v]);
    }
  for (int ei = 0; ei < m; ++ei)
    if (!dead_e[ei])
      next.edges.push_back(
          {remap[g.edges[ei].from], remap[g.edges[ei].to], g.edges[ei].label});
  g = next;
  tags = next_tags;
}

Word read_circle(const LabeledGraph& g, int start) {
  // Precompute the direction lists: directions_at rescans every edge, which
  // is quadratic on the long circles that show up in large pullbacks.
  std::vector<std::vector<Dir>> at(g.num_vertices);
  for (int e = 0; e < static_cast<int>(g.edges.size()); ++e) {
    at[g.edges[e].from].push_back({e, true});
    at[g.edges[e].to].push_back({e, false});
  }
  for (auto& dirs : at)
    std::sort(dirs.begin(), dirs.end(), [&](Dir a, Dir b) {
      int ka = letter_key(dir_letter(g, a));
      int kb = letter_key(dir_letter(g, b));
      if (ka != kb) return ka < kb;
      return a.edge < b.edge;
    });
  std::vector<Letter> letters;
  Dir d = at[start][0];
  for (;;) {
    letters.push_back(dir_letter(g, d));
    int v = dir_target(g, d);
    if (v == start) break;
    for (Dir n : at[v])
      if (n.edge != d.edge || n.forward == d.forward) {
        d = n;
        break;
      }
  }
  return Word(letters);
}

// Generator images of phi^k, grown incrementally; nullopt once the total
// letter count passes the cap.
std::optional<std::vector<Word>> iterated_images(const EndoSpec& phi, int k,
                                                 long word_cap) {
  std::vector<Word> cur = phi.images;
  for (int i = 1; i < k; ++i) {
    long total = 0;
    std::vector<Word> next;
    for (const Word& w : cur) {
      next.push_back(apply_endo(phi, w));
      total += next.back().size();
      if (total > word_cap) return std::nullopt;
    }
    cur = next;
  }
  return cur;
}

std::optional<SubgroupGraph> capped_stallings(const EndoSpec& phi, int k,
                                              int size_cap) {
  auto imgs = iterated_images(phi, k, 10L * size_cap);
  if (!imgs) return std::nullopt;
  auto [s, trace] = subgroup_graph(phi.basis, *imgs);
  if (trace.collapse_occurred)
    throw precondition_error("endomorphism is not injective");
  if (static_cast<int>(s.graph.edges.size()) > size_cap) return std::nullopt;
  return s;
}

}  // namespace

std::vector<PullbackComponent> IteratedPullback::hat_components() const {
  std::vector<PullbackComponent> out;
  for (const auto& c : components)
    if (c.hat) out.push_back(c);
  return out;
}

std::vector<PullbackComponent> fibered_product(const SubgroupGraph& s1,
                                               const SubgroupGraph& s2) {
  if (s1.basis != s2.basis)
    throw input_error("fibered product requires a common basis");

  std::vector<int> ids(static_cast<size_t>(s1.graph.num_vertices) *
                           s2.graph.num_vertices,
                       -1);
  std::vector<std::pair<int, int>> pairs;
  auto id_of = [&](int v1, int v2) {
    int& slot = ids[static_cast<size_t>(v1) * s2.graph.num_vertices + v2];
    if (slot < 0) {
      slot = static_cast<int>(pairs.size());
      pairs.push_back({v1, v2});
    }
    return slot;
  };

  std::map<int, std::vector<int>> by_label;
  for (int e = 0; e < static_cast<int>(s2.graph.edges.size()); ++e)
    by_label[s2.graph.edges[e].label].push_back(e);

  LabeledGraph prod;
  for (const Edge& e1 : s1.graph.edges) {
    auto it = by_label.find(e1.label);
    if (it == by_label.end()) continue;
    for (int e2i : it->second) {
      const Edge& e2 = s2.graph.edges[e2i];
      prod.edges.push_back(
          {id_of(e1.from, e2.from), id_of(e1.to, e2.to), e1.label});
    }
  }
  prod.num_vertices = static_cast<int>(pairs.size());

  // The product can be large, so find components with union-find instead of
  // the all-edges scan behind directions_at.
  std::vector<int> uf(prod.num_vertices);
  std::iota(uf.begin(), uf.end(), 0);
  std::function<int(int)> find = [&](int v) {
    while (uf[v] != v) v = uf[v] = uf[uf[v]];
    return v;
  };
  for (const Edge& e : prod.edges) uf[find(e.from)] = find(e.to);
  std::vector<int> comp(prod.num_vertices, -1);
  int ncomp = 0;
  for (int v = 0; v < prod.num_vertices; ++v) {
    int r = find(v);
    if (comp[r] < 0) comp[r] = ncomp++;
    comp[v] = comp[r];
  }
  std::vector<std::vector<int>> comp_verts(ncomp), comp_edges(ncomp);
  for (int v = 0; v < prod.num_vertices; ++v) comp_verts[comp[v]].push_back(v);
  for (int ei = 0; ei < static_cast<int>(prod.edges.size()); ++ei)
    comp_edges[comp[prod.edges[ei].from]].push_back(ei);

  std::vector<int> local(prod.num_vertices, -1);
  std::vector<PullbackComponent> out;
  for (int c = 0; c < ncomp; ++c) {
    LabeledGraph sub;
    std::vector<std::pair<int, int>> tags;
    for (int v : comp_verts[c]) {
      local[v] = sub.num_vertices++;
      tags.push_back(pairs[v]);
    }
    for (int ei : comp_edges[c]) {
      const Edge& e = prod.edges[ei];
      sub.edges.push_back({local[e.from], local[e.to], e.label});
    }
    core_tagged(sub, tags);
    if (sub.edges.empty()) continue;

    PullbackComponent pc;
    pc.graph = sub;
    // connected by construction, so the rank is just the Euler count
    pc.rank = static_cast<int>(sub.edges.size()) - sub.num_vertices + 1;
    if (pc.rank < 1) continue;
    int anchor = static_cast<int>(
        std::min_element(tags.begin(), tags.end()) - tags.begin());
    pc.graph.basepoint = anchor;
    pc.anchor_path_1 = s1.tree_path[tags[anchor].first];
    pc.anchor_path_2 = s2.tree_path[tags[anchor].second];
    pc.coset_rep = concat(pc.anchor_path_1, pc.anchor_path_2.inverse());
    if (pc.rank == 1) {
      Word w = read_circle(sub, anchor);
      pc.cyclic_generator =
          std::min(cyclic_normal_form(w), cyclic_normal_form(w.inverse()));
    }
    out.push_back(std::move(pc));
  }
  // Canonical forms give a labeling-independent order, but computing them on
  // very large symmetric components is quadratic; past a size threshold fall
  // back to a cheap deterministic key (sorting after all small components).
  std::vector<std::pair<std::string, int>> keys;
  for (int i = 0; i < static_cast<int>(out.size()); ++i) {
    const PullbackComponent& c = out[i];
    std::string key;
    if (c.graph.edges.size() <= 256) {
      key = canonical_form(c.graph, false);
    } else {
      char buf[32];
      std::snprintf(buf, sizeof buf, "~%08zu/%04d:", c.graph.edges.size(),
                    c.rank);
      key = buf;
      key += format_word(s1.basis, c.coset_rep);
    }
    keys.push_back({std::move(key), i});
  }
  std::sort(keys.begin(), keys.end());
  std::vector<PullbackComponent> sorted;
  for (const auto& [key, i] : keys) sorted.push_back(std::move(out[i]));
  return sorted;
}

int reduced_rank(const std::vector<PullbackComponent>& comps) {
  int rr = 0;
  for (const auto& c : comps) rr += c.rank - 1;
  return rr;
}

IteratedPullback iterated_pullback(const EndoSpec& phi, int k) {
  if (k < 1) throw input_error("pullback level must be at least 1");
  SubgroupGraph sk = iterated_stallings(phi, k);
  SubgroupGraph s1 = iterated_stallings(phi, 1);
  IteratedPullback out;
  out.k = k;
  out.components = fibered_product(sk, sk);
  for (auto& c : out.components) c.hat = !contains(s1, c.coset_rep);
  out.rr = reduced_rank(out.components);
  return out;
}

ScanOutcome stabilization_scan(const EndoSpec& phi, int horizon, int size_cap) {
  int rrF = phi.basis.rank - 1;
  int k0 = 2 * rrF * rrF;
  if (horizon < k0)
    throw input_error("scan horizon below the cyclicity threshold");
  SubgroupGraph s1 = iterated_stallings(phi, 1);

  ScanOutcome out;
  for (int k = 1; k <= horizon; ++k) {
    auto sk = capped_stallings(phi, k, size_cap);
    if (!sk) {
      out.kind = ScanKind::HorizonReached;
      out.k = k - 1;
      out.note = "subgroup graph outgrew the size cap";
      return out;
    }
    std::vector<PullbackComponent> comps = fibered_product(*sk, *sk);
    std::vector<PullbackComponent> hats;
    for (auto& c : comps)
      if (!contains(s1, c.coset_rep)) {
        c.hat = true;
        hats.push_back(c);
      }
    if (hats.empty()) {
      out.kind = ScanKind::EmptyAt;
      out.k = k;
      return out;
    }
    if (k >= k0)
      for (const auto& c : hats)
        if (c.rank != 1)
          throw std::logic_error(
              "non-cyclic hat component past the stabilization threshold");
    out.k = k;
    out.components = hats;
  }
  out.kind = ScanKind::PersistentCyclic;
  return out;
}

std::optional<CyclicWitness> cyclic_witness_search(const EndoSpec& phi,
                                                   int max_k, int max_j,
                                                   int size_cap) {
  SubgroupGraph s1 = iterated_stallings(phi, 1);
  std::vector<CyclicWord> seen;
  for (int k = 1; k <= max_k; ++k) {
    auto sk = capped_stallings(phi, k, size_cap);
    if (!sk) break;
    for (const auto& c : fibered_product(*sk, *sk)) {
      if (c.rank != 1 || contains(s1, c.coset_rep)) continue;
      auto [r, e] = root_and_exponent(*c.cyclic_generator);
      if (std::find(seen.begin(), seen.end(), r) != seen.end()) continue;
      seen.push_back(r);
      EndoSpec power = phi;
      for (int j = 1; j <= max_j; ++j) {
        CyclicWord img = cyclic_normal_form(apply_endo(power, r.word()));
        if (!img.empty() && img.size() % r.size() == 0) {
          int d = img.size() / r.size();
          if (d >= 2 && img == cyclic_power(r, d)) return CyclicWitness{r, j, d};
        }
        if (j < max_j) power = compose(phi, power);
      }
    }
  }
  return std::nullopt;
}

std::string pullback_report(const IteratedPullback& p, const Basis& basis) {
  nlohmann::json comps = nlohmann::json::array();
  for (const auto& c : p.components) {
    nlohmann::json j;
    j["rank"] = c.rank;
    j["coset_rep"] = format_word(basis, c.coset_rep);
    j["cyclic"] = c.cyclic_generator
                      ? nlohmann::json(format_cyclic(basis, *c.cyclic_generator))
                      : nlohmann::json(nullptr);
    j["hat"] = c.hat;
    comps.push_back(j);
  }
  nlohmann::json out;
  out["k"] = p.k;
  out["components"] = comps;
  out["rr"] = p.rr;
  return out.dump();
}

}  // namespace fgend
