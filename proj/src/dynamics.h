#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "graphmap.h"
#include "pullback.h"
#include "stallings.h"
#include "traintrack.h"
#include "word.h"

namespace fgend {

// Folded image graph of an injective map from a free group on the target
// letters, with the marking basis re-expressed through the inverse.
struct EndoImage {
  SubgroupGraph s;
  std::vector<Letter> target_letters;  // domain letter per image word
  std::vector<Word> inv_marking;       // image of inv_marking[j] == s.marking[j]
};

EndoImage endo_image(const Basis& ambient, const std::vector<Word>& images,
                     const std::vector<Letter>& target_letters);
EndoImage endo_image(const EndoSpec& phi, int power = 1);
// Inverse image of a member word, over the target letters; absent when w is
// not in the image subgroup.
std::optional<Word> preimage_word(const EndoImage& e, const Word& w);

// Express each standard letter of the free group of rank r in the given basis
// tuple; result words are over slot letters 1..r indexing the tuple.
std::vector<Word> express_standard_in_basis(int r,
                                            const std::vector<Word>& tuple);

// Conjugacy-class system of free factors, with an optional subgraph
// realization: an ambient marked graph (marking twisted through the inverse
// of the given power of the map) containing vertex-disjoint embedded core
// subgraphs, one per component.
struct Realization {
  SubgroupGraph ambient_graph;
  int power = 0;
  std::vector<std::vector<int>> component_edges;
};

struct FreeFactorSystem {
  Basis ambient;
  std::vector<SubgroupGraph> components;
  std::optional<Realization> realization;
  bool partial = false;  // budget ran out; best effort only

  bool trivial() const { return components.empty(); }
};

bool same_system(const FreeFactorSystem& a, const FreeFactorSystem& b);
// Search S[phi^k(F)] for k <= k_cap for disjoint embedded subgraphs realizing
// the components.
std::optional<Realization> realize_system(const EndoSpec& phi,
                                          const FreeFactorSystem& a,
                                          int k_cap = 8);

struct InjectivityReport {
  bool injective = false;
  FoldTrace trace;
};

InjectivityReport is_injective(const EndoSpec& phi);
bool is_surjective(const EndoSpec& phi);

// One backward step on conjugacy classes; unique by injectivity.
std::optional<CyclicWord> preimage_class(const EndoSpec& phi,
                                         const CyclicWord& c);

struct TailProbe {
  CyclicWord cls;
  int depth_survived = 0;
  std::vector<CyclicWord> preimage_chain;
};

TailProbe infinite_tail_probe(const EndoSpec& phi, const CyclicWord& c,
                              int depth);

// First pair m > n >= 1 with label-isomorphic S[phi^m(H)], S[phi^n(H)].
std::optional<std::pair<int, int>> eventually_periodic(const EndoSpec& phi,
                                                       const SubgroupGraph& h,
                                                       int budget,
                                                       int size_cap = 4000);

FreeFactorSystem max_fixed_ffs(const EndoSpec& phi, int budget = 32);
FreeFactorSystem preimage_ffs(const EndoSpec& phi, const FreeFactorSystem& a);
FreeFactorSystem elliptic_ffs(const EndoSpec& phi, int budget = 32);

// Maximal invariant system of the coordinate free factor spanned by the given
// basis indices, under phi mapping that factor into the ambient group.
FreeFactorSystem canonical_invariant_ffs(const std::vector<int>& a_incl,
                                         const EndoSpec& phi);

std::optional<std::pair<CyclicWord, int>> periodic_class_search(
    const EndoSpec& phi, int max_len, int max_period);

std::string ffs_report(const FreeFactorSystem& a);

// Expanding immersion relative to an elliptic system: a filtered self-map
// whose lowest stratum carries the realized system and whose collapsed top
// map is an expanding immersion. With a trivial system this is the absolute
// expanding immersion. ok stays false when the move budget runs out or no
// applicable move remains; the trace always records what was tried.
struct RelativeImmersion {
  bool ok = false;
  FilteredGraphMap filtered;  // strata = {lower, top}
  CollapsedMap collapsed;
  std::vector<MoveRecord> trace;
};

// initial, when given, must be a self-map reducible to a rose representative
// of phi by bivalent homotopies (e.g. a subdivided rose).
RelativeImmersion relative_immersion(
    const EndoSpec& phi, const FreeFactorSystem& a_star, int budget = 10000,
    const std::optional<GraphMap>& initial = std::nullopt);

}  // namespace fgend
