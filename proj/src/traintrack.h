#pragma once

#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "graphmap.h"

namespace fgend {

struct move_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct numeric_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A(i, j) = number of times edge i appears in the image path of edge j.
struct TransitionMatrix {
  int size = 0;
  std::vector<std::vector<long>> entries;

  long at(int i, int j) const { return entries[i][j]; }
};

TransitionMatrix transition_matrix(const GraphMap& f);
// Restricted to one stratum, counting modulo lower strata.
TransitionMatrix transition_matrix(const FilteredGraphMap& f, int stratum);
TransitionMatrix transition_matrix(const CollapsedMap& q);

// Strong connectivity of the maps-over digraph (j -> i when A(i,j) > 0).
bool is_irreducible(const TransitionMatrix& A);
bool is_permutation_matrix(const TransitionMatrix& A);

struct SpectralResult {
  double lambda = 0.0;
  double tolerance = 0.0;
  bool is_one_exact = false;  // decided combinatorially, never numerically
};

SpectralResult pf_eigenvalue(const TransitionMatrix& A, double tol = 1e-12);
// Max of the PF values over the strongly connected diagonal blocks.
double spectral_radius(const TransitionMatrix& A, double tol = 1e-12);

// Gates: partition of the directions at each vertex under iterated
// identification by the derivative map.
struct TurnStructure {
  // gate id per signed direction id (index 2e for +(e+1), 2e+1 for -(e+1))
  std::vector<int> gate;
  // unordered pairs of distinct same-gate directions at a common vertex
  std::vector<std::pair<int, int>> illegal_turns;

  bool legal(int d1, int d2) const;
};

TurnStructure turn_structure(const GraphMap& f);
bool is_train_track(const GraphMap& f);
bool is_immersion(const GraphMap& f);

// Relative notions on a collapsed quotient: a backtrack across a nontrivial
// transit is locally injective, and the derivative carries the leading
// transit word.
bool is_immersion(const CollapsedMap& q);

struct Subdivide {
  int edge = 0;
  int prefix = 0;  // image path split index, 1 <= prefix < |f(edge)|
};
struct BivalentHomotopy {
  int vertex = 0;
};
struct FoldTurn {
  int d1 = 0;  // signed direction ids with identical image paths
  int d2 = 0;
};
struct CollapseBoundedInvariant {
  std::vector<int> edges;  // invariant subforest
};
using Move = std::variant<Subdivide, BivalentHomotopy, FoldTurn,
                          CollapseBoundedInvariant>;

GraphMap apply_move(const GraphMap& f, const Move& move);

struct MoveRecord {
  std::string move;
  int location = 0;
  double lambda_before = -1.0;  // -1 when the matrix is zero
  double lambda_after = -1.0;
};

struct TrackOutcome {
  bool ok = false;
  GraphMap map;
  std::vector<MoveRecord> trace;
};

// Fold/subdivide/tighten loop driving f to a train track; the spectral
// radius never increases. Fails loudly (budget or state revisit) with the
// full move trace.
TrackOutcome make_train_track(const GraphMap& f, int budget = 10000);

// Edge e is non-expanding iff every edge in its maps-over closure has image
// of length exactly 1; otherwise iterated lengths are unbounded.
std::vector<bool> expansion_profile(const GraphMap& f);
std::vector<bool> expansion_profile(const CollapsedMap& q);
bool is_expanding(const GraphMap& f);
bool is_expanding(const CollapsedMap& q);

}  // namespace fgend
