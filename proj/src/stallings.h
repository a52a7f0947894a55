#pragma once

#include <optional>
#include <vector>

#include "graph.h"
#include "word.h"

namespace fgend {

struct FoldTrace {
  int fold_count = 0;
  bool collapse_occurred = false;
};

// Folded core graph with basepoint representing a finitely generated subgroup
// of the free group on the ambient basis.
struct SubgroupGraph {
  Basis basis;
  LabeledGraph graph;            // folded, core rel basepoint
  std::vector<Word> generators;  // defining generator words
  // Free basis of the subgroup: fundamental loop words of the non-tree edges
  // of the BFS spanning tree, read in the ambient basis.
  std::vector<Word> marking;
  // Spanning tree data: tree path word from the basepoint to each vertex.
  std::vector<Word> tree_path;
  // Edge id of the non-tree edge realizing marking[i].
  std::vector<int> marking_edge;

  int subgroup_rank() const { return static_cast<int>(marking.size()); }
  bool degenerate() const { return graph.edges.empty(); }
};

std::pair<SubgroupGraph, FoldTrace> subgroup_graph(
    const Basis& basis, const std::vector<Word>& gens);

// Trace a word from a vertex; returns final vertex or nullopt if stuck.
std::optional<int> trace_word(const LabeledGraph& g, int start, const Word& w);
// Step one letter from v, or nullopt if no such direction (g must be folded).
std::optional<Dir> step_letter(const LabeledGraph& g, int v, Letter l);

bool contains(const SubgroupGraph& s, const Word& w);
// Vertex at which c reads a closed loop, if any conjugate of c lies in the
// subgroup; scanning vertices in id order.
std::optional<int> conjugate_into(const SubgroupGraph& s, const CyclicWord& c);
// Member w rewritten over the marking basis (letters index marking words).
std::optional<Word> express_in_generators(const SubgroupGraph& s, const Word& w);
// Expand a word over the marking basis back to the ambient basis.
Word expand_marking(const SubgroupGraph& s, const Word& in_marking_basis);

// Build the marking/tree data for an already folded based core graph.
void attach_marking(SubgroupGraph& s);

struct GraphMap;  // graphmap.h
// Number of folds in the Stallings decomposition of f; usable as C(f).
// Throws precondition_error (with collapse witness text) if f is not
// pi1-injective.
int cancellation_constant(const GraphMap& f);

}  // namespace fgend
