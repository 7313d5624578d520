#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace ddp {

// Closed 14-relation label set. HED marks the arc from pseudo-node 0
// to the sentence root; MT attaches empty words (particles, punctuation).
enum class Relation : std::uint8_t {
  SBV, VOB, POB, ADV, CMP, ATT, F, COO, DBL, DOB, VV, IC, MT, HED
};

inline constexpr int kRelationCount = 14;

const std::array<std::string, kRelationCount>& relation_names();
std::string to_string(Relation r);
std::optional<Relation> relation_from_string(const std::string& s);

struct Token {
  int id = 0;            // 1-based position
  std::string form;
  std::string pos;       // empty = absent ("_")
  int head = 0;          // 0 = pseudo-root
  Relation rel = Relation::HED;
};

struct Sentence {
  std::vector<Token> tokens;
  int size() const { return static_cast<int>(tokens.size()); }
  std::vector<int> heads() const;
};

struct ParseError : std::runtime_error {
  int line;
  ParseError(int line_, const std::string& msg)
      : std::runtime_error("line " + std::to_string(line_) + ": " + msg), line(line_) {}
};

struct Violation {
  std::string rule;   // stable rule identifier
  int token_id;       // offending token, 0 if sentence-level
  std::string message;
};

struct ValidationReport {
  int sentence_index = 0;
  std::vector<Violation> violations;
  bool ok() const { return violations.empty(); }
};

struct TreebankStats {
  std::int64_t sentence_count = 0;
  std::int64_t token_count = 0;
  std::map<Relation, std::int64_t> relation_histogram;
  std::map<int, std::int64_t> length_histogram;
  double projective_fraction = 1.0;  // 1.0 for an empty treebank
};

// Blank-line-separated 10-column CoNLL-X. Reads ID, FORM, POSTAG, HEAD,
// DEPREL; other columns must be present but are ignored. Tree invariants
// are not enforced here, use validate(). With allow_unannotated, "_" in
// HEAD/DEPREL is accepted (head 0, HED) so unparsed input can be fed to
// the parser.
std::vector<Sentence> parse_conllx(std::istream& in, bool allow_unannotated = false);
std::vector<Sentence> parse_conllx(const std::string& text, bool allow_unannotated = false);

// Normalized output: LF endings, "_" fillers, one blank line per sentence.
void write_conllx(const std::vector<Sentence>& sentences, std::ostream& out);
std::string write_conllx(const std::vector<Sentence>& sentences);

ValidationReport validate(const Sentence& sentence, int sentence_index = 0);

TreebankStats treebank_stats(const std::vector<Sentence>& sentences);

}  // namespace ddp
