#pragma once

#include <optional>
#include <string>
#include <vector>

#include "dynamics.h"
#include "pullback.h"
#include "word.h"

namespace fgend {

// Raised when the input endomorphism is not injective: the analysis of the
// mapping torus presumes an embedding.
struct analysis_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Config {
  // 0 means: derive max(2 * (rank - 1)^2 + 2, 16) from the input rank
  int pullback_horizon = 0;
  int witness_max_j = 8;
  int periodic_max_len = 8;
  int periodic_max_period = 8;
  int move_budget = 10000;
  int descent_budget = 32;
  int pullback_size_cap = 1500;
};

// The horizon actually used for a given rank.
int resolve_horizon(const Config& cfg, int rank);

enum class VerdictKind { Hyperbolic, NotHyperbolic, Inconclusive };

// [phi^j(c)] = [c^d]: d = 1 exhibits Z^2, d >= 2 exhibits BS(1, d).
struct Witness {
  CyclicWord c;
  int j = 0;
  int d = 0;
};

struct Verdict {
  VerdictKind kind = VerdictKind::Inconclusive;
  std::optional<Witness> witness;
  std::vector<std::string> facts;
  std::vector<std::string> assumptions;
  Config config;  // resolved values as used

  bool has_fact(const std::string& prefix) const;
};

// Hyperbolicity certification for the mapping torus of phi.
Verdict certify(const EndoSpec& phi, Config cfg = {});

// Hyperbolicity certification for the HNN extension over the coordinate free
// factor spanned by the (0-based) basis indices; phi maps that factor into
// the ambient group, images of other letters are ignored.
Verdict certify_hnn(const std::vector<int>& a_incl, const EndoSpec& phi,
                    Config cfg = {});

struct VerifyResult {
  bool ok = false;
  std::string failing_fact;  // empty when ok
};

// Independent re-check of every fact in the verdict from word arithmetic and
// fresh Stallings computations.
VerifyResult verify_certificate(const Verdict& v, const EndoSpec& phi);

std::string verdict_json(const Verdict& v, const Basis& basis);

}  // namespace fgend
