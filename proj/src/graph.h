#pragma once

#include <optional>
#include <string>
#include <vector>

#include "word.h"

namespace fgend {

struct precondition_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Edge {
  int from = 0;
  int to = 0;
  int label = 0;  // positive generator index; reverse traversal reads inverse

  bool operator==(const Edge&) const = default;
};

// Finite digraph with basis-labelled edges. Vertex ids are 0..num_vertices-1.
struct LabeledGraph {
  int num_vertices = 0;
  std::vector<Edge> edges;
  std::optional<int> basepoint;

  bool operator==(const LabeledGraph&) const = default;
};

// Directions at a vertex are signed edge ids: +(e+1) leaves edges[e].from,
// -(e+1) leaves edges[e].to.
struct Dir {
  int edge = 0;
  bool forward = true;

  int signed_id() const { return forward ? edge + 1 : -(edge + 1); }
  static Dir from_signed(int s) { return {std::abs(s) - 1, s > 0}; }
  bool operator==(const Dir&) const = default;
};

int dir_origin(const LabeledGraph& g, Dir d);
int dir_target(const LabeledGraph& g, Dir d);
// Signed label read when traversing d: +label forward, -label backward.
int dir_letter(const LabeledGraph& g, Dir d);
Dir dir_reverse(Dir d);

// All directions leaving v, ordered by (signed label, edge id).
std::vector<Dir> directions_at(const LabeledGraph& g, int v);
int valence(const LabeledGraph& g, int v);

struct NaturalEdge {
  std::vector<int> path;  // signed edge ids, consecutive
  bool closed = false;

  int length() const { return static_cast<int>(path.size()); }
};

struct NaturalStructure {
  std::vector<int> branch_points;
  std::vector<NaturalEdge> natural_edges;
};

LabeledGraph core(const LabeledGraph& g, bool keep_basepoint);
bool is_core(const LabeledGraph& g, bool keep_basepoint);
NaturalStructure natural_structure(const LabeledGraph& g);
int rank(const LabeledGraph& g);
bool is_connected(const LabeledGraph& g);
// Component id per vertex, numbered from 0.
std::vector<int> components(const LabeledGraph& g);
int component_count(const LabeledGraph& g);

bool is_folded(const LabeledGraph& g);
bool isomorphic(const LabeledGraph& g1, const LabeledGraph& g2,
                bool respect_basepoint);
// Canonical serialization of a folded graph; equal strings iff isomorphic.
std::string canonical_form(const LabeledGraph& g, bool respect_basepoint);

enum class GraphFormat { JSON, DOT };
std::string serialize(const LabeledGraph& g, const Basis& basis,
                      GraphFormat format);
LabeledGraph parse_graph(const std::string& json_text, const Basis& basis);

}  // namespace fgend
