#pragma once

#include <vector>

#include "graph.h"
#include "stallings.h"
#include "word.h"

namespace fgend {

// Topological representative: a map between labelled graphs sending vertices
// to vertices and edges to tightened edge-paths (signed codomain edge ids).
struct GraphMap {
  LabeledGraph domain;
  LabeledGraph codomain;
  std::vector<int> vertex_map;                // per domain vertex
  std::vector<std::vector<int>> edge_images;  // per domain edge
  int lipschitz = 0;                          // K = max image length
  int cancellation = -1;                      // C, -1 when not computed
};

// Rose on the basis: one vertex, edge g-1 labelled g.
LabeledGraph rose(const Basis& basis);

std::vector<int> tighten_path(const std::vector<int>& path);
std::vector<int> reverse_path(const std::vector<int>& path);
// Image of an edge-path under f, tightened.
std::vector<int> map_path(const GraphMap& f, const std::vector<int>& path);
// Endpoint check for all edges; throws on violation.
void validate_map(const GraphMap& f);
int path_origin(const LabeledGraph& g, const std::vector<int>& path, int fallback);
int path_target(const LabeledGraph& g, const std::vector<int>& path, int fallback);

GraphMap from_endo(const EndoSpec& phi);
// Read a rose self-map back as an endomorphism.
EndoSpec rose_endo(const Basis& basis, const GraphMap& f);

GraphMap compose_maps(const GraphMap& outer, const GraphMap& inner);
GraphMap iterate_map(const GraphMap& f, int k);

// S[phi^k(F)]; throws precondition_error when phi is not injective.
SubgroupGraph iterated_stallings(const EndoSpec& phi, int k);

// Natural representative of phi on S_k = S[phi^k(F)] obtained by path lifting
// through the immersion and re-routing branch points to branch points.
GraphMap homotopy_lift(const GraphMap& f, const SubgroupGraph& s_k);

struct FilteredGraphMap {
  GraphMap map;                          // domain == codomain
  std::vector<std::vector<int>> strata;  // nested invariant edge sets
};

// Quotient of a self-map by an invariant subgraph. Edge images interleave
// quotient edges with transit words: paths inside collapsed components,
// recorded in the ambient basis. A step pair e, -e does not cancel across a
// nontrivial transit.
struct CollapsedPath {
  std::vector<int> steps;     // signed quotient edge ids
  std::vector<Word> transits;  // size steps.size()+1, transits[i] before steps[i]

  int length() const { return static_cast<int>(steps.size()); }
};

struct CollapsedMap {
  LabeledGraph graph;  // quotient: one vertex per collapsed component or
                       // uncollapsed vertex; edges are the uncollapsed edges
  std::vector<int> vertex_group;     // per quotient vertex: group idx or -1
  std::vector<LabeledGraph> groups;  // conjugacy-class cores of the components
  std::vector<int> vertex_map;
  std::vector<CollapsedPath> edge_images;

  // blow-up bookkeeping
  LabeledGraph original;
  std::vector<int> quotient_vertex;           // original vertex -> quotient id
  std::vector<std::pair<int, int>> edge_attach;  // original endpoints per edge
  std::vector<std::vector<int>> component_vertices;  // per group
  // component subgraphs with local vertex ids (component_vertices order)
  std::vector<LabeledGraph> component_subgraphs;

  bool has_pretrivial_edge() const;
};

CollapsedMap collapse_stratum(const FilteredGraphMap& f, int stratum);
FilteredGraphMap vertex_blowup(const CollapsedMap& q,
                               const std::vector<GraphMap>& filler_maps);

}  // namespace fgend
