#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace fgend {

// Letters are nonzero ints: +i is the i-th generator (1-based), -i its inverse.
using Letter = int;

struct input_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Basis {
  int rank = 0;
  std::vector<std::string> names;

  Basis() = default;
  Basis(int rank_, std::vector<std::string> names_);

  // Standard basis a, b, c, ... of the given rank.
  static Basis standard(int rank);

  bool operator==(const Basis&) const = default;
};

// Freely reduced word.
class Word {
 public:
  Word() = default;
  explicit Word(std::vector<Letter> reduced_letters)
      : letters_(std::move(reduced_letters)) {}

  const std::vector<Letter>& letters() const { return letters_; }
  int size() const { return static_cast<int>(letters_.size()); }
  bool empty() const { return letters_.empty(); }

  Word inverse() const;
  bool operator==(const Word&) const = default;

 private:
  std::vector<Letter> letters_;
};

// Cyclically reduced word in its canonical rotation.
class CyclicWord {
 public:
  CyclicWord() = default;
  explicit CyclicWord(std::vector<Letter> canonical)
      : letters_(std::move(canonical)) {}

  const std::vector<Letter>& letters() const { return letters_; }
  int size() const { return static_cast<int>(letters_.size()); }
  bool empty() const { return letters_.empty(); }

  Word word() const { return Word(letters_); }
  bool operator==(const CyclicWord&) const = default;
  bool operator<(const CyclicWord& o) const;

 private:
  std::vector<Letter> letters_;
};

struct EndoSpec {
  Basis basis;
  std::vector<Word> images;  // one per generator

  bool operator==(const EndoSpec&) const = default;
};

// Total order on signed letters: a < a^-1 < b < b^-1 < ...
int letter_key(Letter l);

Word reduce(const std::vector<Letter>& letters);
Word concat(const Word& u, const Word& v);
CyclicWord cyclic_normal_form(const Word& w);
Word apply_endo(const EndoSpec& phi, const Word& w);
EndoSpec compose(const EndoSpec& outer, const EndoSpec& inner);
EndoSpec iterate(const EndoSpec& phi, int k);
std::pair<CyclicWord, int> root_and_exponent(const CyclicWord& c);
CyclicWord cyclic_power(const CyclicWord& c, int e);

// Text syntax: lowercase = generator, uppercase = inverse ("abA" = a b a^-1).
Word parse_word(const Basis& basis, const std::string& text);
std::string format_word(const Basis& basis, const Word& w);
std::string format_cyclic(const Basis& basis, const CyclicWord& c);

// Endomorphism file format:
//   rank: 2
//   basis: a b
//   map: a -> ab ; b -> ba
EndoSpec parse_endo(const std::string& text);
std::string format_endo(const EndoSpec& phi);

}  // namespace fgend
