#include "certify.h"

#include <algorithm>
#include <sstream>

#include "json.hpp"
#include "stallings.h"
#include "traintrack.h"

namespace fgend {

bool Verdict::has_fact(const std::string& prefix) const {
  for (const auto& f : facts)
    if (f.compare(0, prefix.size(), prefix) == 0) return true;
  return false;
}

int resolve_horizon(const Config& cfg, int rank) {
  int rr = rank - 1;
  int k0 = 2 * rr * rr;
  int h = cfg.pullback_horizon > 0 ? cfg.pullback_horizon
                                   : std::max(k0 + 2, 16);
  return std::max(h, k0);
}

namespace {

const char* kAssumeConverse =
    "emptiness of the stabilized pullback system is taken to bound strictly "
    "bidirectional annuli; the converse direction is assumed without proof";
const char* kAssumeHyperbolic =
    "hyperbolicity follows from atoroidality together with bounded "
    "bidirectional annuli for injective nonsurjective endomorphisms";
const char* kAssumeAutomorphism =
    "surjective inputs are an assumed external base case; bounded search can "
    "only refute, never certify";
const char* kAssumeShortFactor =
    "trivial canonical invariant system: unidirectional annuli die within "
    "twice the factor rank, leaving no Baumslag-Solitar obstruction";

bool witness_holds(const EndoSpec& phi, const Witness& w) {
  if (w.j < 1 || w.d < 1 || w.c.empty()) return false;
  Word img = w.c.word();
  for (int i = 0; i < w.j; ++i) img = apply_endo(phi, img);
  return cyclic_normal_form(img) == cyclic_power(w.c, w.d);
}

// Search for [phi^j(c)] = [c^d], j <= max_j, d >= 1, including returns
// through the inverse class.
std::optional<Witness> class_relation(const EndoSpec& phi, const CyclicWord& c,
                                      int max_j) {
  if (c.empty()) return std::nullopt;
  CyclicWord ci = cyclic_normal_form(c.word().inverse());
  Word cur = c.word();
  for (int j = 1; j <= max_j; ++j) {
    cur = apply_endo(phi, cur);
    CyclicWord u = cyclic_normal_form(cur);
    if (u.empty() || u.size() > 4096) return std::nullopt;
    if (u.size() % c.size() == 0) {
      int d = u.size() / c.size();
      if (u == cyclic_power(c, d)) return Witness{c, j, d};
      if (u == cyclic_power(ci, d)) {
        Witness w{c, 2 * j, d * d};
        if (witness_holds(phi, w)) return w;
      }
    }
  }
  return std::nullopt;
}

struct Atoroidality {
  bool certified = false;
  bool immersion = false;
  FreeFactorSystem ell;
  std::optional<Witness> found;
};

Atoroidality atoroidality(const EndoSpec& phi, const Config& cfg) {
  Atoroidality a;
  a.ell = elliptic_ffs(phi, cfg.descent_budget);
  RelativeImmersion ri = relative_immersion(phi, a.ell, cfg.move_budget);
  a.immersion = ri.ok;
  if (a.ell.trivial()) {
    a.certified = ri.ok && !a.ell.partial;
    return a;
  }
  // nontrivial system: exhaustive only when every component is cyclic and
  // its class provably has no power relation within the bounds
  bool cyclic_only = true;
  for (const auto& comp : a.ell.components) {
    if (comp.subgroup_rank() != 1) {
      cyclic_only = false;
      continue;
    }
    CyclicWord c = cyclic_normal_form(comp.marking[0]);
    if (auto w = class_relation(phi, c, cfg.witness_max_j)) {
      a.found = w;
      return a;
    }
  }
  a.certified = ri.ok && cyclic_only && !a.ell.partial;
  return a;
}

std::string join_ints(const std::vector<int>& xs) {
  std::ostringstream os;
  for (size_t i = 0; i < xs.size(); ++i) os << (i ? "," : "") << xs[i];
  return os.str();
}

// Power of phi stabilizing component i up to conjugacy, with the conjugator,
// by following the component map around its cycle.
struct ComponentReturn {
  int power = 0;
  Word conjugator;
};

std::optional<std::pair<int, Word>> component_target(
    const EndoSpec& phi, const FreeFactorSystem& sys, int i) {
  std::vector<Word> img_gens;
  for (const Word& m : sys.components[i].marking)
    img_gens.push_back(apply_endo(phi, m));
  auto [sb, trace] = subgroup_graph(phi.basis, img_gens);
  if (trace.collapse_occurred) return std::nullopt;
  for (int t = 0; t < static_cast<int>(sys.components.size()); ++t) {
    for (const PullbackComponent& pc :
         fibered_product(sb, sys.components[t])) {
      const Word& g = pc.coset_rep;
      bool good = true;
      for (const Word& w : img_gens)
        if (!contains(sys.components[t],
                      concat(g.inverse(), concat(w, g)))) {
          good = false;
          break;
        }
      if (good) return std::make_pair(t, g);
    }
  }
  return std::nullopt;
}

std::optional<ComponentReturn> component_cycle(const EndoSpec& phi,
                                               const FreeFactorSystem& sys,
                                               int i) {
  int cur = i;
  Word conj;
  int n = static_cast<int>(sys.components.size());
  for (int m = 1; m <= n; ++m) {
    auto step = component_target(phi, sys, cur);
    if (!step) return std::nullopt;
    conj = concat(apply_endo(phi, conj), step->second);
    cur = step->first;
    if (cur == i) return ComponentReturn{m, conj};
  }
  return std::nullopt;  // pre-periodic component
}

// Restriction of phi^power to component i, conjugated into itself and
// expressed over the component's marking basis.
std::optional<EndoSpec> restrict_component(const EndoSpec& phi,
                                           const FreeFactorSystem& sys, int i,
                                           const ComponentReturn& ret) {
  const SubgroupGraph& comp = sys.components[i];
  EndoSpec out;
  out.basis = Basis::standard(comp.subgroup_rank());
  for (const Word& m : comp.marking) {
    Word w = m;
    for (int p = 0; p < ret.power; ++p) w = apply_endo(phi, w);
    w = concat(ret.conjugator.inverse(), concat(w, ret.conjugator));
    auto expr = express_in_generators(comp, w);
    if (!expr) return std::nullopt;
    out.images.push_back(*expr);
  }
  return out;
}

}  // namespace

Verdict certify(const EndoSpec& phi, Config cfg) {
  cfg.pullback_horizon = resolve_horizon(cfg, phi.basis.rank);
  Verdict v;
  v.config = cfg;
  InjectivityReport rep = is_injective(phi);
  if (!rep.injective)
    throw analysis_error("endomorphism is not injective: folding collapsed a "
                         "loop after " +
                         std::to_string(rep.trace.fold_count) + " folds");
  v.facts.push_back("injective");

  if (auto p = periodic_class_search(phi, cfg.periodic_max_len,
                                     cfg.periodic_max_period)) {
    v.kind = VerdictKind::NotHyperbolic;
    v.witness = Witness{p->first, p->second, 1};
    v.facts.push_back("periodic-class");
    return v;
  }
  v.facts.push_back("no-periodic-class");

  if (auto w = cyclic_witness_search(phi, cfg.pullback_horizon,
                                     cfg.witness_max_j,
                                     cfg.pullback_size_cap)) {
    v.kind = VerdictKind::NotHyperbolic;
    v.witness = Witness{w->c, w->j, w->d};
    v.facts.push_back("cyclic-witness");
    return v;
  }
  v.facts.push_back("no-cyclic-witness");

  if (is_surjective(phi)) {
    v.facts.push_back("surjective");
    v.assumptions.push_back(kAssumeAutomorphism);
    return v;  // Inconclusive by design
  }
  v.facts.push_back("not-surjective");

  Atoroidality at = atoroidality(phi, cfg);
  if (at.found) {
    v.kind = VerdictKind::NotHyperbolic;
    v.witness = at.found;
    v.facts.push_back(at.found->d == 1 ? "periodic-class" : "cyclic-witness");
    return v;
  }
  if (at.ell.partial) v.facts.push_back("elliptic-partial");
  v.facts.push_back(at.ell.trivial()
                        ? std::string("elliptic-trivial")
                        : "elliptic-components:" +
                              std::to_string(at.ell.components.size()));
  if (at.immersion) v.facts.push_back("expanding-immersion");
  v.facts.push_back(at.certified ? "atoroidal" : "atoroidality-unresolved");

  ScanOutcome scan =
      stabilization_scan(phi, cfg.pullback_horizon, cfg.pullback_size_cap);
  if (scan.kind == ScanKind::EmptyAt) {
    v.facts.push_back("empty-at:" + std::to_string(scan.k));
    if (at.certified) {
      v.kind = VerdictKind::Hyperbolic;
      v.assumptions.push_back(kAssumeConverse);
      v.assumptions.push_back(kAssumeHyperbolic);
    }
  } else if (scan.kind == ScanKind::PersistentCyclic) {
    v.facts.push_back("persistent-cyclic");
  } else {
    v.facts.push_back("horizon-reached:" + std::to_string(scan.k));
  }
  return v;
}

Verdict certify_hnn(const std::vector<int>& a_incl, const EndoSpec& phi,
                    Config cfg) {
  std::vector<int> sorted = a_incl;
  std::sort(sorted.begin(), sorted.end());
  if (static_cast<int>(sorted.size()) == phi.basis.rank) {
    bool full = true;
    for (int i = 0; i < phi.basis.rank; ++i)
      if (sorted[i] != i) full = false;
    if (full) return certify(phi, cfg);
  }

  cfg.pullback_horizon = resolve_horizon(cfg, phi.basis.rank);
  Verdict v;
  v.config = cfg;
  {
    std::vector<Word> gens;
    for (int i : a_incl) gens.push_back(phi.images.at(i));
    auto [img, trace] = subgroup_graph(phi.basis, gens);
    if (trace.collapse_occurred ||
        img.subgroup_rank() != static_cast<int>(gens.size()))
      throw analysis_error("map is not injective on the factor");
  }
  FreeFactorSystem sys = canonical_invariant_ffs(a_incl, phi);
  v.facts.push_back("factor:" + join_ints(sorted));
  v.facts.push_back("injective");
  if (sys.partial) v.facts.push_back("canonical-partial");
  if (sys.trivial()) {
    if (!sys.partial) {
      v.facts.push_back("canonical-system-trivial");
      v.kind = VerdictKind::Hyperbolic;
      v.assumptions.push_back(kAssumeShortFactor);
    }
    return v;
  }
  v.facts.push_back("canonical-components:" +
                    std::to_string(sys.components.size()));

  bool all_certified = !sys.partial;
  for (int i = 0; i < static_cast<int>(sys.components.size()); ++i) {
    const SubgroupGraph& comp = sys.components[i];
    if (comp.subgroup_rank() == 1) {
      CyclicWord c = cyclic_normal_form(comp.marking[0]);
      int span = cfg.witness_max_j *
                 static_cast<int>(sys.components.size());
      if (auto w = class_relation(phi, c, span)) {
        v.kind = VerdictKind::NotHyperbolic;
        v.witness = w;
        v.facts.push_back(w->d == 1 ? "periodic-class" : "cyclic-witness");
        return v;
      }
      all_certified = false;
      v.facts.push_back("component-unresolved:" + std::to_string(i));
      continue;
    }
    auto cyc = component_cycle(phi, sys, i);
    std::optional<EndoSpec> restr;
    if (cyc) restr = restrict_component(phi, sys, i, *cyc);
    if (!restr) {
      all_certified = false;
      v.facts.push_back("component-unresolved:" + std::to_string(i));
      continue;
    }
    Config sub_cfg = cfg;
    sub_cfg.pullback_horizon = 0;  // re-derive for the component rank
    Verdict sub = certify(*restr, sub_cfg);
    if (sub.kind == VerdictKind::NotHyperbolic && sub.witness) {
      Witness amb{cyclic_normal_form(
                      expand_marking(comp, sub.witness->c.word())),
                  sub.witness->j * cyc->power, sub.witness->d};
      if (witness_holds(phi, amb)) {
        v.kind = VerdictKind::NotHyperbolic;
        v.witness = amb;
        v.facts.push_back("component-witness:" + std::to_string(i));
        v.facts.push_back(amb.d == 1 ? "periodic-class" : "cyclic-witness");
        return v;
      }
      all_certified = false;
      v.facts.push_back("component-unresolved:" + std::to_string(i));
    } else if (sub.kind == VerdictKind::Hyperbolic) {
      v.facts.push_back("component-hyperbolic:" + std::to_string(i));
    } else {
      all_certified = false;
      v.facts.push_back("component-inconclusive:" + std::to_string(i));
    }
  }
  if (all_certified) {
    v.kind = VerdictKind::Hyperbolic;
    v.facts.push_back("all-components-certified");
    v.assumptions.push_back(kAssumeConverse);
    v.assumptions.push_back(kAssumeHyperbolic);
  }
  return v;
}

namespace {

std::optional<std::vector<int>> parse_factor(const Verdict& v) {
  for (const auto& f : v.facts)
    if (f.rfind("factor:", 0) == 0) {
      std::vector<int> out;
      std::stringstream ss(f.substr(7));
      std::string tok;
      while (std::getline(ss, tok, ',')) out.push_back(std::stoi(tok));
      return out;
    }
  return std::nullopt;
}

bool hats_empty_at(const EndoSpec& phi, int k) {
  SubgroupGraph s1 = iterated_stallings(phi, 1);
  SubgroupGraph sk = iterated_stallings(phi, k);
  for (const PullbackComponent& c : fibered_product(sk, sk))
    if (!contains(s1, c.coset_rep)) return false;
  return true;
}

// The top-stratum length of the k-th iterate of edge j is the j-th entry of
// the all-ones row vector times A^k; expansion means it keeps growing.
bool expanding_by_iteration(const CollapsedMap& q) {
  TransitionMatrix A = transition_matrix(q);
  if (A.size == 0) return false;
  std::vector<long> row(A.size, 1), after_one;
  for (int it = 0; it < 12; ++it) {
    std::vector<long> next(A.size, 0);
    for (int j = 0; j < A.size; ++j) {
      long acc = 0;
      for (int i = 0; i < A.size; ++i) acc += row[i] * A.at(i, j);
      next[j] = std::min<long>(acc, 1L << 50);
    }
    row = next;
    if (it == 0) after_one = row;
  }
  for (int j = 0; j < A.size; ++j)
    if (row[j] <= after_one[j]) return false;
  return true;
}

}  // namespace

VerifyResult verify_certificate(const Verdict& v, const EndoSpec& phi) {
  auto fail = [](const std::string& f) { return VerifyResult{false, f}; };
  Config cfg = v.config;
  int horizon = resolve_horizon(cfg, phi.basis.rank);
  auto factor = parse_factor(v);

  if (v.kind == VerdictKind::NotHyperbolic) {
    if (!v.witness || !witness_holds(phi, *v.witness))
      return fail("witness");
  }
  if (v.witness && !witness_holds(phi, *v.witness)) return fail("witness");

  if (factor) {
    // re-run the reduction pipeline fresh and demand agreement
    Verdict redo = certify_hnn(*factor, phi, cfg);
    if (redo.kind != v.kind) return fail("factor:" + join_ints(*factor));
    if (redo.witness.has_value() != v.witness.has_value())
      return fail("witness");
    if (redo.witness &&
        (!(redo.witness->c == v.witness->c) ||
         redo.witness->j != v.witness->j || redo.witness->d != v.witness->d))
      return fail("witness");
  }

  std::optional<Atoroidality> at;  // computed on demand, reused across facts
  auto need_atoroidality = [&]() -> Atoroidality& {
    if (!at) at = atoroidality(phi, cfg);
    return *at;
  };

  for (const auto& f : v.facts) {
    std::string head = f.substr(0, f.find(':'));
    std::string tail =
        f.find(':') == std::string::npos ? "" : f.substr(f.find(':') + 1);
    if (factor && head != "injective") continue;  // covered by the re-run
    if (head == "injective") {
      if (factor) {
        std::vector<Word> gens;
        for (int i : *factor) gens.push_back(phi.images.at(i));
        auto [img, trace] = subgroup_graph(phi.basis, gens);
        if (trace.collapse_occurred ||
            img.subgroup_rank() != static_cast<int>(gens.size()))
          return fail(f);
      } else if (!is_injective(phi).injective) {
        return fail(f);
      }
    } else if (head == "surjective") {
      if (!is_surjective(phi)) return fail(f);
    } else if (head == "not-surjective") {
      if (is_surjective(phi)) return fail(f);
    } else if (head == "no-periodic-class") {
      if (periodic_class_search(phi, cfg.periodic_max_len,
                                cfg.periodic_max_period))
        return fail(f);
    } else if (head == "periodic-class") {
      if (!v.witness || v.witness->d != 1) return fail(f);
    } else if (head == "no-cyclic-witness") {
      if (cyclic_witness_search(phi, horizon, cfg.witness_max_j,
                                cfg.pullback_size_cap))
        return fail(f);
    } else if (head == "cyclic-witness") {
      if (!v.witness || v.witness->d < 2) return fail(f);
    } else if (head == "elliptic-trivial") {
      if (!need_atoroidality().ell.trivial()) return fail(f);
    } else if (head == "elliptic-components") {
      if (std::to_string(need_atoroidality().ell.components.size()) != tail)
        return fail(f);
    } else if (head == "expanding-immersion") {
      Atoroidality& a = need_atoroidality();
      if (!a.immersion) return fail(f);
      RelativeImmersion ri = relative_immersion(phi, a.ell, cfg.move_budget);
      if (!ri.ok || !expanding_by_iteration(ri.collapsed)) return fail(f);
    } else if (head == "atoroidal") {
      if (!need_atoroidality().certified) return fail(f);
    } else if (head == "empty-at") {
      if (!hats_empty_at(phi, std::stoi(tail))) return fail(f);
    } else if (head == "persistent-cyclic" || head == "horizon-reached") {
      ScanOutcome scan =
          stabilization_scan(phi, horizon, cfg.pullback_size_cap);
      if (head == "persistent-cyclic" &&
          scan.kind != ScanKind::PersistentCyclic)
        return fail(f);
      if (head == "horizon-reached" &&
          (scan.kind != ScanKind::HorizonReached ||
           std::to_string(scan.k) != tail))
        return fail(f);
    }
  }

  if (v.kind == VerdictKind::Hyperbolic) {
    bool torus_route = v.has_fact("empty-at:") && v.has_fact("atoroidal");
    bool hnn_route = v.has_fact("canonical-system-trivial") ||
                     v.has_fact("all-components-certified");
    if (!torus_route && !hnn_route) return fail("kind");
  }
  return VerifyResult{true, ""};
}

std::string verdict_json(const Verdict& v, const Basis& basis) {
  nlohmann::json j;
  switch (v.kind) {
    case VerdictKind::Hyperbolic: j["verdict"] = "Hyperbolic"; break;
    case VerdictKind::NotHyperbolic: j["verdict"] = "NotHyperbolic"; break;
    case VerdictKind::Inconclusive: j["verdict"] = "Inconclusive"; break;
  }
  if (v.witness) {
    j["witness"] = {{"c", format_cyclic(basis, v.witness->c)},
                    {"j", v.witness->j},
                    {"d", v.witness->d}};
  } else {
    j["witness"] = nullptr;
  }
  j["facts"] = v.facts;
  j["assumptions"] = v.assumptions;
  j["config"] = {{"pullback_horizon", v.config.pullback_horizon},
                 {"witness_max_j", v.config.witness_max_j},
                 {"periodic_max_len", v.config.periodic_max_len},
                 {"periodic_max_period", v.config.periodic_max_period},
                 {"move_budget", v.config.move_budget},
                 {"descent_budget", v.config.descent_budget},
                 {"pullback_size_cap", v.config.pullback_size_cap}};
  return j.dump();
}

}  // namespace fgend
