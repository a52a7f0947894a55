#include "word.h"

#include <algorithm>
#include <cctype>
#include <sstream>

namespace fgend {

Basis::Basis(int rank_, std::vector<std::string> names_)
    : rank(rank_), names(std::move(names_)) {
  if (rank < 2) throw input_error("basis rank must be at least 2");
  if (static_cast<int>(names.size()) != rank)
    throw input_error("basis name count does not match rank");
  for (size_t i = 0; i < names.size(); ++i)
    for (size_t j = i + 1; j < names.size(); ++j)
      if (names[i] == names[j]) throw input_error("duplicate generator name");
}

Basis Basis::standard(int rank) {
  std::vector<std::string> names;
  for (int i = 0; i < rank; ++i) names.push_back(std::string(1, char('a' + i)));
  return Basis(rank, std::move(names));
}

int letter_key(Letter l) {
  int g = std::abs(l) - 1;
  return 2 * g + (l < 0 ? 1 : 0);
}

Word Word::inverse() const {
  std::vector<Letter> out(letters_.rbegin(), letters_.rend());
  for (Letter& l : out) l = -l;
  return Word(std::move(out));
}

bool CyclicWord::operator<(const CyclicWord& o) const {
  auto key = [](Letter l) { return letter_key(l); };
  return std::lexicographical_compare(
      letters_.begin(), letters_.end(), o.letters_.begin(), o.letters_.end(),
      [&](Letter a, Letter b) { return key(a) < key(b); });
}

Word reduce(const std::vector<Letter>& letters) {
  std::vector<Letter> out;
  for (Letter l : letters) {
    if (l == 0) throw input_error("zero letter");
    if (!out.empty() && out.back() == -l)
      out.pop_back();
    else
      out.push_back(l);
  }
  return Word(std::move(out));
}

Word concat(const Word& u, const Word& v) {
  std::vector<Letter> all = u.letters();
  all.insert(all.end(), v.letters().begin(), v.letters().end());
  return reduce(all);
}

static std::vector<Letter> least_rotation(const std::vector<Letter>& w) {
  if (w.empty()) return w;
  int n = static_cast<int>(w.size());
  int best = 0;
  for (int i = 1; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      int a = letter_key(w[(i + j) % n]);
      int b = letter_key(w[(best + j) % n]);
      if (a != b) {
        if (a < b) best = i;
        break;
      }
    }
  }
  std::vector<Letter> out(n);
  for (int j = 0; j < n; ++j) out[j] = w[(best + j) % n];
  return out;
}

CyclicWord cyclic_normal_form(const Word& w) {
  std::vector<Letter> v = w.letters();
  while (v.size() >= 2 && v.front() == -v.back()) {
    v.erase(v.begin());
    v.pop_back();
  }
  return CyclicWord(least_rotation(v));
}

Word apply_endo(const EndoSpec& phi, const Word& w) {
  std::vector<Letter> out;
  for (Letter l : w.letters()) {
    int g = std::abs(l) - 1;
    if (g >= phi.basis.rank) throw input_error("letter outside basis");
    const Word& img = phi.images[g];
    if (l > 0) {
      for (Letter m : img.letters()) out.push_back(m);
    } else {
      for (auto it = img.letters().rbegin(); it != img.letters().rend(); ++it)
        out.push_back(-*it);
    }
  }
  return reduce(out);
}

EndoSpec compose(const EndoSpec& outer, const EndoSpec& inner) {
  if (outer.basis != inner.basis) throw input_error("basis mismatch");
  EndoSpec out;
  out.basis = outer.basis;
  for (const Word& img : inner.images)
    out.images.push_back(apply_endo(outer, img));
  return out;
}

EndoSpec iterate(const EndoSpec& phi, int k) {
  if (k < 0) throw input_error("negative iterate");
  EndoSpec out;
  out.basis = phi.basis;
  for (int g = 1; g <= phi.basis.rank; ++g)
    out.images.push_back(Word(std::vector<Letter>{g}));
  for (int i = 0; i < k; ++i) out = compose(phi, out);
  return out;
}

std::pair<CyclicWord, int> root_and_exponent(const CyclicWord& c) {
  if (c.empty()) throw input_error("root of empty cyclic word");
  const auto& w = c.letters();
  int n = c.size();
  for (int p = 1; p <= n; ++p) {
    if (n % p != 0) continue;
    bool periodic = true;
    for (int i = 0; i + p < n && periodic; ++i)
      if (w[i] != w[i + p]) periodic = false;
    if (periodic) {
      std::vector<Letter> r(w.begin(), w.begin() + p);
      return {cyclic_normal_form(Word(r)), n / p};
    }
  }
  return {c, 1};
}

CyclicWord cyclic_power(const CyclicWord& c, int e) {
  std::vector<Letter> out;
  for (int i = 0; i < e; ++i)
    out.insert(out.end(), c.letters().begin(), c.letters().end());
  return cyclic_normal_form(Word(out));
}

Word parse_word(const Basis& basis, const std::string& text) {
  std::vector<Letter> letters;
  for (char ch : text) {
    if (std::isspace(static_cast<unsigned char>(ch))) continue;
    if (ch == '1') continue;  // identity placeholder
    std::string lower(1, static_cast<char>(
                             std::tolower(static_cast<unsigned char>(ch))));
    auto it = std::find(basis.names.begin(), basis.names.end(), lower);
    if (it == basis.names.end())
      throw input_error(std::string("unknown symbol '") + ch + "'");
    int g = static_cast<int>(it - basis.names.begin()) + 1;
    letters.push_back(std::isupper(static_cast<unsigned char>(ch)) ? -g : g);
  }
  return reduce(letters);
}

static std::string format_letters(const Basis& basis,
                                  const std::vector<Letter>& letters) {
  std::string out;
  for (Letter l : letters) {
    int g = std::abs(l) - 1;
    if (g >= basis.rank) throw input_error("letter outside basis");
    std::string name = basis.names[g];
    if (l < 0)
      for (char& c : name) c = static_cast<char>(std::toupper(
          static_cast<unsigned char>(c)));
    out += name;
  }
  return out;
}

std::string format_word(const Basis& basis, const Word& w) {
  return format_letters(basis, w.letters());
}

std::string format_cyclic(const Basis& basis, const CyclicWord& c) {
  return format_letters(basis, c.letters());
}

static std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

EndoSpec parse_endo(const std::string& text) {
  int rank = -1;
  std::vector<std::string> names;
  std::string map_line;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    auto colon = line.find(':');
    if (colon == std::string::npos) throw input_error("malformed line: " + line);
    std::string key = trim(line.substr(0, colon));
    std::string value = trim(line.substr(colon + 1));
    if (key == "rank") {
      rank = std::stoi(value);
    } else if (key == "basis") {
      std::istringstream bs(value);
      std::string name;
      while (bs >> name) names.push_back(name);
    } else if (key == "map") {
      map_line = value;
    } else {
      throw input_error("unknown key: " + key);
    }
  }
  if (rank < 0) throw input_error("missing rank");
  if (map_line.empty()) throw input_error("missing map");
  Basis basis(rank, names);

  EndoSpec phi;
  phi.basis = basis;
  phi.images.assign(rank, Word());
  std::vector<bool> seen(rank, false);
  std::istringstream ms(map_line);
  std::string rule;
  while (std::getline(ms, rule, ';')) {
    rule = trim(rule);
    if (rule.empty()) continue;
    auto arrow = rule.find("->");
    if (arrow == std::string::npos) throw input_error("malformed rule: " + rule);
    std::string lhs = trim(rule.substr(0, arrow));
    std::string rhs = trim(rule.substr(arrow + 2));
    auto it = std::find(basis.names.begin(), basis.names.end(), lhs);
    if (it == basis.names.end()) throw input_error("unknown generator: " + lhs);
    int g = static_cast<int>(it - basis.names.begin());
    phi.images[g] = parse_word(basis, rhs);
    seen[g] = true;
  }
  for (int g = 0; g < rank; ++g)
    if (!seen[g]) throw input_error("missing image for " + basis.names[g]);
  return phi;
}

std::string format_endo(const EndoSpec& phi) {
  std::ostringstream out;
  out << "rank: " << phi.basis.rank << "\n";
  out << "basis:";
  for (const auto& n : phi.basis.names) out << " " << n;
  out << "\nmap: ";
  for (int g = 0; g < phi.basis.rank; ++g) {
    if (g) out << " ; ";
    std::string img = format_word(phi.basis, phi.images[g]);
    out << phi.basis.names[g] << " -> " << (img.empty() ? "1" : img);
  }
  out << "\n";
  return out.str();
}

}  // namespace fgend
