#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "certify.h"
#include "dynamics.h"
#include "graphmap.h"
#include "pullback.h"
#include "traintrack.h"

using namespace fgend;

namespace {

EndoSpec load_endo(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw input_error("cannot open " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_endo(buf.str());
}

std::string kind_name(VerdictKind k) {
  switch (k) {
    case VerdictKind::Hyperbolic: return "Hyperbolic";
    case VerdictKind::NotHyperbolic: return "NotHyperbolic";
    default: return "Inconclusive";
  }
}

void print_verdict(const Verdict& v, const Basis& basis, bool json) {
  if (json) {
    std::cout << verdict_json(v, basis) << "\n";
    return;
  }
  std::cout << "verdict: " << kind_name(v.kind) << "\n";
  if (v.witness)
    std::cout << "witness: c=" << format_cyclic(basis, v.witness->c)
              << " j=" << v.witness->j << " d=" << v.witness->d << "\n";
  for (const auto& f : v.facts) std::cout << "fact: " << f << "\n";
  for (const auto& a : v.assumptions) std::cout << "assumes: " << a << "\n";
}

// Distinct short conjugacy classes, for the analyze tail probes.
std::vector<CyclicWord> short_classes(const Basis& basis, int max_len) {
  std::set<CyclicWord> seen;
  std::vector<CyclicWord> out;
  std::vector<Letter> alphabet;
  for (int g = 1; g <= basis.rank; ++g) {
    alphabet.push_back(g);
    alphabet.push_back(-g);
  }
  std::vector<std::vector<Letter>> frontier = {{}};
  for (int len = 1; len <= max_len; ++len) {
    std::vector<std::vector<Letter>> next;
    for (const auto& pre : frontier)
      for (Letter l : alphabet) {
        if (!pre.empty() && pre.back() == -l) continue;
        auto w = pre;
        w.push_back(l);
        next.push_back(w);
        CyclicWord c = cyclic_normal_form(Word(reduce(w).letters()));
        if (c.size() == len && seen.insert(c).second) out.push_back(c);
      }
    frontier = next;
  }
  return out;
}

int run_analyze(const std::string& file) {
  EndoSpec phi = load_endo(file);
  InjectivityReport inj = is_injective(phi);
  std::cout << "injective: " << (inj.injective ? "yes" : "no");
  if (!inj.injective)
    std::cout << " (" << inj.trace.fold_count << " folds, collapse)";
  std::cout << "\n";
  if (!inj.injective) return 0;
  bool surj = is_surjective(phi);
  std::cout << "surjective: " << (surj ? "yes" : "no") << "\n";
  FreeFactorSystem fixed = max_fixed_ffs(phi);
  std::cout << "fixed system: " << ffs_report(fixed) << "\n";
  if (!surj) {
    FreeFactorSystem ell = elliptic_ffs(phi);
    std::cout << "elliptic system: " << ffs_report(ell) << "\n";
  }
  for (const CyclicWord& c : short_classes(phi.basis, 2)) {
    TailProbe p = infinite_tail_probe(phi, c, 8);
    std::cout << "tail [" << format_cyclic(phi.basis, c)
              << "]: depth " << p.depth_survived << "/8\n";
  }
  return 0;
}

int run_stallings(const std::string& file, int k, const std::string& dot_out) {
  EndoSpec phi = load_endo(file);
  SubgroupGraph s = iterated_stallings(phi, k);
  std::cout << serialize(s.graph, phi.basis, GraphFormat::JSON) << "\n";
  if (!dot_out.empty()) {
    std::ofstream out(dot_out);
    if (!out) throw input_error("cannot write " + dot_out);
    out << serialize(s.graph, phi.basis, GraphFormat::DOT);
  }
  return 0;
}

int run_pullback(const std::string& file, int k, bool json) {
  EndoSpec phi = load_endo(file);
  IteratedPullback p = iterated_pullback(phi, k);
  if (json) {
    std::cout << pullback_report(p, phi.basis) << "\n";
    return 0;
  }
  std::cout << "k: " << p.k << "\n";
  std::cout << "components: " << p.components.size() << "\n";
  for (const auto& c : p.components) {
    std::cout << "  rank " << c.rank << (c.hat ? " hat" : "")
              << " coset " << format_word(phi.basis, c.coset_rep);
    if (c.cyclic_generator)
      std::cout << " cyclic [" << format_cyclic(phi.basis, *c.cyclic_generator)
                << "]";
    std::cout << "\n";
  }
  std::cout << "rr: " << p.rr << "\n";
  return 0;
}

int run_traintrack(const std::string& file) {
  EndoSpec phi = load_endo(file);
  TrackOutcome t = make_train_track(from_endo(phi));
  std::cout << "train track: " << (t.ok ? "yes" : "no") << "\n";
  SpectralResult s = pf_eigenvalue(transition_matrix(t.map));
  std::cout << "lambda: " << s.lambda << "\n";
  std::cout << "moves: " << t.trace.size() << "\n";
  std::vector<bool> prof = expansion_profile(t.map);
  std::cout << "expanding edges:";
  for (size_t i = 0; i < prof.size(); ++i)
    if (prof[i]) std::cout << " " << i;
  std::cout << "\n";
  return 0;
}

std::vector<int> parse_factor(const Basis& basis, const std::string& spec) {
  std::vector<int> out;
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    int idx = -1;
    for (int i = 0; i < basis.rank; ++i)
      if (basis.names[i] == item) idx = i;
    if (idx < 0) throw input_error("unknown basis letter: " + item);
    out.push_back(idx);
  }
  if (out.empty()) throw input_error("empty factor");
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dynamical invariants of free group endomorphisms"};
  app.require_subcommand(1);

  std::string file, dot_out, factor_spec;
  int k = 1;
  bool json = false;
  Config cfg;

  auto* analyze = app.add_subcommand("analyze", "injectivity and factor systems");
  analyze->add_option("file", file)->required();

  auto* stallings = app.add_subcommand("stallings", "subgroup graph of phi^k");
  stallings->add_option("file", file)->required();
  stallings->add_option("-k", k, "iterate");
  stallings->add_option("--dot", dot_out, "write DOT to this path");

  auto* pullback = app.add_subcommand("pullback", "iterated pullback report");
  pullback->add_option("file", file)->required();
  pullback->add_option("-k", k, "iterate");
  pullback->add_flag("--json", json);

  auto* traintrack = app.add_subcommand("traintrack", "train track representative");
  traintrack->add_option("file", file)->required();

  auto* certify_cmd = app.add_subcommand("certify", "mapping torus hyperbolicity");
  certify_cmd->add_option("file", file)->required();
  certify_cmd->add_option("--horizon", cfg.pullback_horizon);
  certify_cmd->add_option("--max-period", cfg.periodic_max_period);
  certify_cmd->add_option("--max-len", cfg.periodic_max_len);
  certify_cmd->add_flag("--json", json);

  auto* hnn = app.add_subcommand("certify-hnn", "HNN extension hyperbolicity");
  hnn->add_option("file", file)->required();
  hnn->add_option("--factor", factor_spec, "comma separated basis letters")
      ->required();
  hnn->add_option("--horizon", cfg.pullback_horizon);
  hnn->add_flag("--json", json);

  CLI11_PARSE(app, argc, argv);

  try {
    if (analyze->parsed()) return run_analyze(file);
    if (stallings->parsed()) return run_stallings(file, k, dot_out);
    if (pullback->parsed()) return run_pullback(file, k, json);
    if (traintrack->parsed()) return run_traintrack(file);
    if (certify_cmd->parsed()) {
      EndoSpec phi = load_endo(file);
      print_verdict(certify(phi, cfg), phi.basis, json);
      return 0;
    }
    if (hnn->parsed()) {
      EndoSpec phi = load_endo(file);
      std::vector<int> f = parse_factor(phi.basis, factor_spec);
      print_verdict(certify_hnn(f, phi, cfg), phi.basis, json);
      return 0;
    }
  } catch (const input_error& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return 2;
  } catch (const precondition_error& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return 2;
  } catch (const analysis_error& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 3;
  }
  return 3;
}
