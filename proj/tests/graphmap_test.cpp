#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <random>
#include <set>

#include "graphmap.h"

using namespace fgend;

static Basis F2 = Basis::standard(2);

static EndoSpec endo(const std::string& a_img, const std::string& b_img) {
  EndoSpec phi;
  phi.basis = F2;
  phi.images = {parse_word(F2, a_img), parse_word(F2, b_img)};
  return phi;
}

TEST_CASE("from_endo constants") {
  GraphMap f = from_endo(endo("ab", "ba"));
  CHECK(f.lipschitz == 2);
  CHECK(f.cancellation == 0);
  GraphMap g = from_endo(endo("a", "abab"));
  CHECK(g.lipschitz == 4);
  CHECK(g.cancellation == 1);
  GraphMap id = from_endo(endo("a", "b"));
  CHECK(id.lipschitz == 1);
  CHECK(id.cancellation == 0);
  validate_map(f);
  validate_map(g);
}

TEST_CASE("composition and iteration") {
  GraphMap f = from_endo(endo("ab", "ba"));
  GraphMap f2 = iterate_map(f, 2);
  EndoSpec phi2 = rose_endo(F2, f2);
  CHECK(phi2.images[0] == parse_word(F2, "abba"));
  GraphMap f1 = iterate_map(f, 1);
  CHECK(f1.edge_images == f.edge_images);
  for (int k = 1; k <= 4; ++k) {
    GraphMap fk = iterate_map(f, k);
    int bound = 1;
    for (int i = 0; i < k; ++i) bound *= f.lipschitz;
    CHECK(fk.lipschitz <= bound);
  }
}

TEST_CASE("iterated Stallings graphs of (ab, ba) are doubling roses") {
  EndoSpec phi = endo("ab", "ba");
  int len = 2;
  for (int k = 1; k <= 3; ++k) {
    SubgroupGraph s = iterated_stallings(phi, k);
    NaturalStructure ns = natural_structure(s.graph);
    CHECK(ns.branch_points.size() == 1);
    CHECK(ns.natural_edges.size() == 2);
    for (const auto& ne : ns.natural_edges) CHECK(ne.length() == len);
    len *= 2;
  }
}

TEST_CASE("iterated Stallings graphs of (a, bab^-1) are barbells") {
  EndoSpec phi = endo("a", "baB");
  int bar = 1;
  for (int k = 1; k <= 4; ++k) {
    SubgroupGraph s = iterated_stallings(phi, k);
    NaturalStructure ns = natural_structure(s.graph);
    CHECK(ns.branch_points.size() == 2);
    REQUIRE(ns.natural_edges.size() == 3);
    std::vector<int> lens;
    for (const auto& ne : ns.natural_edges) lens.push_back(ne.length());
    std::sort(lens.begin(), lens.end());
    CHECK(lens[0] == 1);
    CHECK(lens[1] == 1);
    CHECK(lens[2] == bar);
    bar = 2 * bar + 1;
  }
}

TEST_CASE("iterated Stallings graph of (a, abab) at k=1") {
  EndoSpec psi = endo("a", "abab");
  SubgroupGraph s = iterated_stallings(psi, 1);
  NaturalStructure ns = natural_structure(s.graph);
  CHECK(ns.branch_points.size() == 1);
  REQUIRE(ns.natural_edges.size() == 2);
  std::vector<int> lens;
  for (const auto& ne : ns.natural_edges) lens.push_back(ne.length());
  std::sort(lens.begin(), lens.end());
  CHECK(lens == std::vector<int>{1, 3});
}

TEST_CASE("non-injective endomorphism is rejected") {
  CHECK_THROWS_AS(iterated_stallings(endo("a", "a"), 1), precondition_error);
}

TEST_CASE("homotopy lift constants") {
  for (const EndoSpec& phi :
       {endo("ab", "ba"), endo("a", "baB"), endo("a", "abab")}) {
    GraphMap f = from_endo(phi);
    for (int k = 1; k <= 3; ++k) {
      SubgroupGraph s = iterated_stallings(phi, k);
      GraphMap lift = homotopy_lift(f, s);
      CHECK(lift.lipschitz <= f.lipschitz + f.cancellation);
      CHECK(lift.cancellation <= 2 * f.cancellation);
      // branch points map to branch points
      NaturalStructure ns = natural_structure(s.graph);
      std::set<int> branch(ns.branch_points.begin(), ns.branch_points.end());
      for (int b : ns.branch_points) CHECK(branch.count(lift.vertex_map[b]));
    }
  }
}

TEST_CASE("homotopy lift of the identity is the identity") {
  GraphMap f = from_endo(endo("a", "b"));
  SubgroupGraph s = iterated_stallings(endo("a", "b"), 1);
  GraphMap lift = homotopy_lift(f, s);
  for (int v = 0; v < s.graph.num_vertices; ++v)
    CHECK(lift.vertex_map[v] == v);
  for (int e = 0; e < static_cast<int>(s.graph.edges.size()); ++e)
    CHECK(lift.edge_images[e] == std::vector<int>{e + 1});
}

TEST_CASE("homotopy lift of (a, abab) fixes the a-petal") {
  EndoSpec psi = endo("a", "abab");
  SubgroupGraph s = iterated_stallings(psi, 1);
  GraphMap lift = homotopy_lift(from_endo(psi), s);
  // the a-loop at the basepoint maps to itself
  int base = s.graph.basepoint.value_or(0);
  for (int e = 0; e < static_cast<int>(s.graph.edges.size()); ++e) {
    const Edge& ed = s.graph.edges[e];
    if (ed.from == base && ed.to == base && ed.label == 1)
      CHECK(lift.edge_images[e] == std::vector<int>{e + 1});
  }
}

TEST_CASE("metric compatibility of iterated graphs") {
  std::mt19937 rng(13);
  std::vector<EndoSpec> fixtures = {endo("ab", "ba"), endo("a", "baB"),
                                    endo("a", "abab")};
  for (const EndoSpec& phi : fixtures)
    for (int k = 1; k <= 3; ++k) {
      SubgroupGraph s = iterated_stallings(phi, k);
      EndoSpec phik = iterate(phi, k);
      for (int trial = 0; trial < 10; ++trial) {
        std::vector<Letter> raw;
        for (int i = 0; i < 4; ++i) {
          int l = static_cast<int>(rng() % 4) + 1;
          raw.push_back(l <= 2 ? l : -(l - 2));
        }
        Word g = reduce(raw);
        CyclicWord target = cyclic_normal_form(apply_endo(phik, g));
        if (target.empty()) continue;
        auto v = conjugate_into(s, target);
        REQUIRE(v.has_value());  // loop exists with exactly |target| edges
      }
    }
}

TEST_CASE("collapse of the barbell plates doubles the bar") {
  EndoSpec phi = endo("a", "baB");
  SubgroupGraph s = iterated_stallings(phi, 1);
  GraphMap lift = homotopy_lift(from_endo(phi), s);
  // stratum: the two a-loops
  std::vector<int> plates;
  for (int e = 0; e < static_cast<int>(s.graph.edges.size()); ++e)
    if (s.graph.edges[e].from == s.graph.edges[e].to) plates.push_back(e);
  REQUIRE(plates.size() == 2);
  FilteredGraphMap fm{lift, {plates}};
  CollapsedMap q = collapse_stratum(fm, 0);
  CHECK(q.graph.edges.size() == 1);
  CHECK(q.groups.size() == 2);
  // the bar maps over itself twice, across a nontrivial transit
  REQUIRE(q.edge_images.size() == 1);
  CHECK(q.edge_images[0].length() == 2);
  CHECK(q.edge_images[0].steps[0] == -q.edge_images[0].steps[1]);
  CHECK_FALSE(q.edge_images[0].transits[1].empty());

  // round trip through vertex blow-up
  std::vector<GraphMap> fillers;
  for (size_t i = 0; i < q.groups.size(); ++i) {
    GraphMap fill;
    fill.domain = q.component_subgraphs[i];
    // both plates map to the plate component at the image vertex
    int target_group = -1;
    for (int v = 0; v < q.graph.num_vertices; ++v)
      if (q.vertex_group[v] == static_cast<int>(i))
        target_group = q.vertex_group[q.vertex_map[v]];
    fill.codomain = q.component_subgraphs[target_group];
    fill.vertex_map = {0};
    fill.edge_images = {{1}};
    fill.lipschitz = 1;
    fillers.push_back(fill);
  }
  FilteredGraphMap back = vertex_blowup(q, fillers);
  CHECK(isomorphic(back.map.domain, s.graph, false));
  CHECK(back.map.domain.edges.size() == s.graph.edges.size());
}

TEST_CASE("collapsing an empty stratum changes nothing") {
  GraphMap f = from_endo(endo("ab", "ba"));
  FilteredGraphMap fm{f, {{}}};
  CollapsedMap q = collapse_stratum(fm, 0);
  CHECK(q.graph.edges.size() == f.domain.edges.size());
  CHECK(q.groups.empty());
  for (const auto& p : q.edge_images)
    for (const auto& t : p.transits) CHECK(t.empty());
}

TEST_CASE("collapsing everything degenerates to labelled vertices") {
  GraphMap f = from_endo(endo("ab", "ba"));
  FilteredGraphMap fm{f, {{0, 1}}};
  CollapsedMap q = collapse_stratum(fm, 0);
  CHECK(q.graph.edges.empty());
  CHECK(q.graph.num_vertices == 1);
  CHECK(q.groups.size() == 1);
}
