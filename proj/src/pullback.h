#pragma once

#include <optional>
#include <string>
#include <vector>

#include "stallings.h"
#include "word.h"

namespace fgend {

// Core component of a fibered product of two subgroup graphs, representing
// the class [H1 n g H2 g^-1] for the double coset of g = u1 u2^-1, where u1,
// u2 are the tree-path labels from the basepoints to the anchor vertex pair.
struct PullbackComponent {
  LabeledGraph graph;
  Word coset_rep;
  int rank = 0;
  std::optional<CyclicWord> cyclic_generator;  // set when rank == 1
  Word anchor_path_1;  // u1
  Word anchor_path_2;  // u2
  bool hat = false;    // coset_rep outside the image subgroup (pullback only)
};

struct IteratedPullback {
  int k = 0;
  std::vector<PullbackComponent> components;
  int rr = 0;

  std::vector<PullbackComponent> hat_components() const;
};

std::vector<PullbackComponent> fibered_product(const SubgroupGraph& s1,
                                               const SubgroupGraph& s2);
int reduced_rank(const std::vector<PullbackComponent>& comps);

IteratedPullback iterated_pullback(const EndoSpec& phi, int k);

enum class ScanKind { EmptyAt, PersistentCyclic, HorizonReached };

struct ScanOutcome {
  ScanKind kind = ScanKind::HorizonReached;
  int k = 0;  // emptiness level, or last level computed
  std::vector<PullbackComponent> components;  // hat components at level k
  std::string note;
};

// Computes the hat pullbacks level by level until they vanish (emptiness is
// then permanent) or the horizon is hit. Levels past 2 rr(F)^2 must have only
// cyclic hat components. Stops early with HorizonReached when the iterated
// subgroup graph outgrows size_cap edges.
ScanOutcome stabilization_scan(const EndoSpec& phi, int horizon,
                               int size_cap = 1500);

struct CyclicWitness {
  CyclicWord c;
  int j = 0;
  int d = 0;
};

// Scans roots r of cyclic hat components of levels k <= max_k for a relation
// [phi^j(r)] = [r^d] with d >= 2, j <= max_j. Any returned witness can be
// re-verified by word arithmetic alone.
std::optional<CyclicWitness> cyclic_witness_search(const EndoSpec& phi,
                                                   int max_k, int max_j,
                                                   int size_cap = 1500);

std::string pullback_report(const IteratedPullback& p, const Basis& basis);

}  // namespace fgend
