#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>
#include <set>

#include "traintrack.h"

using namespace fgend;

static Basis F2 = Basis::standard(2);

static EndoSpec endo(const std::string& a_img, const std::string& b_img) {
  EndoSpec phi;
  phi.basis = F2;
  phi.images = {parse_word(F2, a_img), parse_word(F2, b_img)};
  return phi;
}

static TransitionMatrix mat(std::vector<std::vector<long>> rows) {
  TransitionMatrix A;
  A.size = static_cast<int>(rows.size());
  A.entries = std::move(rows);
  return A;
}

// All iterates of every edge stay immersed iff the turn closure under the
// derivative map contains no degenerate pair.
static bool iterates_immersed(const GraphMap& f, int rounds) {
  auto deriv = [&](int s) {
    int e = std::abs(s) - 1;
    return s > 0 ? f.edge_images[e].front() : -f.edge_images[e].back();
  };
  std::set<std::pair<int, int>> crossed;
  for (const auto& p : f.edge_images)
    for (size_t i = 0; i + 1 < p.size(); ++i) {
      int x = -p[i], y = p[i + 1];
      crossed.insert({std::min(x, y), std::max(x, y)});
    }
  for (int r = 0; r < rounds; ++r) {
    std::set<std::pair<int, int>> next = crossed;
    for (auto [x, y] : crossed) {
      int dx = deriv(x), dy = deriv(y);
      if (dx == dy) return false;
      next.insert({std::min(dx, dy), std::max(dx, dy)});
    }
    if (next == crossed) break;
    crossed = next;
  }
  return true;
}

static GraphMap random_positive_map(std::mt19937& rng) {
  int rank = 2 + static_cast<int>(rng() % 2);
  Basis basis = Basis::standard(rank);
  EndoSpec phi;
  phi.basis = basis;
  for (int g = 0; g < rank; ++g) {
    std::vector<Letter> raw;
    int n = 1 + static_cast<int>(rng() % 5);
    for (int i = 0; i < n; ++i) raw.push_back(static_cast<int>(rng() % rank) + 1);
    phi.images.push_back(Word(raw));
  }
  return from_endo(phi);
}

TEST_CASE("transition matrices") {
  TransitionMatrix A = transition_matrix(from_endo(endo("ab", "ba")));
  CHECK(A.entries == std::vector<std::vector<long>>{{1, 1}, {1, 1}});
  TransitionMatrix I = transition_matrix(from_endo(endo("a", "b")));
  CHECK(I.entries == std::vector<std::vector<long>>{{1, 0}, {0, 1}});
  TransitionMatrix P = transition_matrix(from_endo(endo("a", "abab")));
  CHECK(P.entries[0][1] == 2);  // a twice in the image of b
  CHECK(P.entries[1][1] == 2);
}

TEST_CASE("irreducibility") {
  CHECK(is_irreducible(mat({{1, 1}, {1, 1}})));
  CHECK_FALSE(is_irreducible(mat({{1, 0}, {1, 1}})));
  CHECK(is_irreducible(mat({{0, 0, 1}, {1, 0, 0}, {0, 1, 0}})));
}

TEST_CASE("Perron-Frobenius eigenvalues") {
  SpectralResult r = pf_eigenvalue(mat({{1, 1}, {1, 1}}));
  CHECK(std::abs(r.lambda - 2.0) <= 1e-12);
  CHECK_FALSE(r.is_one_exact);

  SpectralResult p = pf_eigenvalue(mat({{0, 0, 1}, {1, 0, 0}, {0, 1, 0}}));
  CHECK(p.lambda == 1.0);
  CHECK(p.is_one_exact);

  SpectralResult s = pf_eigenvalue(mat({{2}}));
  CHECK(s.lambda == 2.0);
  CHECK_FALSE(s.is_one_exact);

  CHECK_THROWS_AS(pf_eigenvalue(mat({{1, 0}, {1, 1}})), precondition_error);

  // golden ratio oracle for [[1,1],[1,0]]
  SpectralResult g = pf_eigenvalue(mat({{1, 1}, {1, 0}}));
  CHECK(std::abs(g.lambda - (1.0 + std::sqrt(5.0)) / 2.0) <= 1e-10);
}

TEST_CASE("spectral radius of reducible matrices") {
  CHECK(spectral_radius(mat({{1, 0}, {1, 2}})) == doctest::Approx(2.0));
  CHECK(spectral_radius(mat({{0}})) == 0.0);
}

TEST_CASE("gates and immersions") {
  GraphMap f = from_endo(endo("ab", "ba"));
  CHECK(is_immersion(f));
  CHECK(is_train_track(f));

  GraphMap g = from_endo(endo("a", "abab"));
  CHECK_FALSE(is_immersion(g));  // both a-prefixed directions derive to a
  TurnStructure ts = turn_structure(g);
  CHECK_FALSE(ts.legal(1, 2));  // +a, +b share a gate
  CHECK(ts.legal(-1, -2));      // but the terminal directions stay apart
  CHECK(ts.legal(1, -1));
  // crossed turns {-a, b} and {-b, a} are legal, so g is a train track
  CHECK(is_train_track(g));
  CHECK(iterates_immersed(g, 10));

  CHECK(is_immersion(from_endo(endo("a", "b"))));
}

TEST_CASE("subdivision preserves the eigenvalue") {
  GraphMap f = from_endo(endo("ab", "ba"));
  double before = pf_eigenvalue(transition_matrix(f)).lambda;
  GraphMap g = apply_move(f, Subdivide{0, 1});
  validate_map(g);
  CHECK(g.domain.edges.size() == 3);
  double after = spectral_radius(transition_matrix(g));
  CHECK(std::abs(after - before) <= 2e-12);

  CHECK_THROWS_AS(apply_move(f, Subdivide{0, 0}), move_error);
  CHECK_THROWS_AS(apply_move(f, Subdivide{0, 2}), move_error);
}

TEST_CASE("bivalent homotopy undoes a subdivision") {
  GraphMap f = from_endo(endo("ab", "ba"));
  GraphMap g = apply_move(f, Subdivide{0, 1});
  int v = g.domain.edges[0].to;  // the new bivalent vertex
  GraphMap h = apply_move(g, BivalentHomotopy{v});
  validate_map(h);
  CHECK(h.domain.edges.size() == 2);
  double l0 = spectral_radius(transition_matrix(f));
  double l2 = spectral_radius(transition_matrix(h));
  CHECK(l2 <= l0 + 1e-9);
}

TEST_CASE("fold requires matching images") {
  GraphMap f = from_endo(endo("ab", "ba"));
  CHECK_THROWS_AS(apply_move(f, FoldTurn{1, 2}), move_error);

  // fold the two a-prefixed directions of a -> a, b -> abab after splitting
  GraphMap g = from_endo(endo("a", "abab"));
  double before = spectral_radius(transition_matrix(g));
  GraphMap s = apply_move(g, Subdivide{1, 1});  // b = b1 b2, f(b1) = a
  GraphMap h = apply_move(s, FoldTurn{1, 2});   // identify a with b1
  validate_map(h);
  double after = spectral_radius(transition_matrix(h));
  CHECK(after <= before + 1e-9);
}

TEST_CASE("collapse of an invariant forest") {
  // subdivide (ab, ba) and collapse nothing invariant: an edge with
  // expanding image is not collapsible
  GraphMap f = from_endo(endo("ab", "ba"));
  CHECK_THROWS_AS(apply_move(f, CollapseBoundedInvariant{{0}}), move_error);
}

TEST_CASE("make_train_track leaves a track unchanged") {
  GraphMap f = from_endo(endo("ab", "ba"));
  TrackOutcome out = make_train_track(f);
  CHECK(out.ok);
  CHECK(out.trace.empty());
  CHECK(out.map.edge_images == f.edge_images);
}

TEST_CASE("make_train_track on the Prologue fixtures") {
  for (const EndoSpec& phi :
       {endo("a", "abab"), endo("a", "baB"), endo("ab", "ba")}) {
    GraphMap f = from_endo(phi);
    double before = spectral_radius(transition_matrix(f));
    TrackOutcome out = make_train_track(f);
    REQUIRE(out.ok);
    CHECK(is_train_track(out.map));
    CHECK(iterates_immersed(out.map,
                            2 * static_cast<int>(out.map.domain.edges.size())));
    double after = spectral_radius(transition_matrix(out.map));
    CHECK(after <= before + 1e-9);
  }
}

TEST_CASE("make_train_track terminates on random positive maps") {
  std::mt19937 rng(71);
  int done = 0, tracks = 0;
  while (done < 100) {
    GraphMap f = random_positive_map(rng);
    ++done;
    double before = spectral_radius(transition_matrix(f));
    TrackOutcome out = make_train_track(f);
    if (!out.ok) continue;  // loud failure is allowed, silence is not
    ++tracks;
    CHECK(is_train_track(out.map));
    CHECK(iterates_immersed(out.map,
                            2 * static_cast<int>(out.map.domain.edges.size())));
    double after = spectral_radius(transition_matrix(out.map));
    CHECK(after <= before + 1e-9);
    for (const MoveRecord& m : out.trace)
      if (m.lambda_before >= 0 && m.lambda_after >= 0)
        CHECK(m.lambda_after <= m.lambda_before + 1e-9);
  }
  CHECK(tracks >= 95);  // overwhelming majority resolves within budget
}

TEST_CASE("subdivision keeps lambda on random irreducible fixtures") {
  std::mt19937 rng(29);
  int done = 0;
  while (done < 50) {
    GraphMap f = random_positive_map(rng);
    TransitionMatrix A = transition_matrix(f);
    if (!is_irreducible(A)) continue;
    int edge = static_cast<int>(rng() % f.domain.edges.size());
    if (f.edge_images[edge].size() < 2) continue;
    int at = 1 + static_cast<int>(rng() % (f.edge_images[edge].size() - 1));
    double before = pf_eigenvalue(A).lambda;
    double after = spectral_radius(transition_matrix(apply_move(f, Subdivide{edge, at})));
    CHECK(std::abs(after - before) <= 2e-12);
    ++done;
  }
}

TEST_CASE("expansion profiles") {
  CHECK(is_expanding(from_endo(endo("ab", "ba"))));
  GraphMap id = from_endo(endo("a", "b"));
  auto prof = expansion_profile(id);
  CHECK(prof == std::vector<bool>{false, false});
  CHECK_FALSE(is_expanding(id));

  // a -> a, b -> abab: the a-petal is periodic, the b-petal expands
  auto mixed = expansion_profile(from_endo(endo("a", "abab")));
  CHECK(mixed == std::vector<bool>{false, true});

  // cross-check against direct iteration for 12 rounds
  GraphMap f = from_endo(endo("a", "abab"));
  for (int e = 0; e < 2; ++e) {
    std::vector<long> counts;
    GraphMap it = f;
    for (int k = 0; k < 12; ++k) {
      counts.push_back(static_cast<long>(it.edge_images[e].size()));
      it = compose_maps(f, it);
    }
    bool grew = counts.back() > counts.front();
    CHECK(grew == mixed[e]);
  }
}

TEST_CASE("collapsed quotients of the Prologue fixtures") {
  // varphi barbell: collapse the plates, bar doubles over itself
  EndoSpec phi = endo("a", "baB");
  SubgroupGraph s = iterated_stallings(phi, 1);
  GraphMap lift = homotopy_lift(from_endo(phi), s);
  std::vector<int> plates;
  for (int e = 0; e < static_cast<int>(s.graph.edges.size()); ++e)
    if (s.graph.edges[e].from == s.graph.edges[e].to) plates.push_back(e);
  CollapsedMap q = collapse_stratum(FilteredGraphMap{lift, {plates}}, 0);
  CHECK(is_immersion(q));
  CHECK(is_expanding(q));
  TransitionMatrix A = transition_matrix(q);
  CHECK(A.entries == std::vector<std::vector<long>>{{2}});
  CHECK(pf_eigenvalue(A).lambda == 2.0);

  // psi rose: collapse the a-petal, b maps over itself twice
  EndoSpec psi = endo("a", "abab");
  GraphMap r = from_endo(psi);
  CollapsedMap qr = collapse_stratum(FilteredGraphMap{r, {{0}}}, 0);
  CHECK(is_immersion(qr));
  CHECK(is_expanding(qr));
  CHECK(transition_matrix(qr).entries == std::vector<std::vector<long>>{{2}});
}

TEST_CASE("stratified transition matrix ignores lower strata") {
  GraphMap g = from_endo(endo("a", "abab"));
  FilteredGraphMap fm{g, {{0}, {1}}};
  TransitionMatrix top = transition_matrix(fm, 1);
  CHECK(top.entries == std::vector<std::vector<long>>{{2}});
  TransitionMatrix low = transition_matrix(fm, 0);
  CHECK(low.entries == std::vector<std::vector<long>>{{1}});
}
