#include "ddp/conllx.hpp"

#include <sstream>

#include "ddp/decoder.hpp"

namespace ddp {

const std::array<std::string, kRelationCount>& relation_names() {
  static const std::array<std::string, kRelationCount> names = {
      "SBV", "VOB", "POB", "ADV", "CMP", "ATT", "F",
      "COO", "DBL", "DOB", "VV",  "IC",  "MT",  "HED"};
  return names;
}

std::string to_string(Relation r) { return relation_names()[static_cast<int>(r)]; }

std::optional<Relation> relation_from_string(const std::string& s) {
  const auto& names = relation_names();
  for (int i = 0; i < kRelationCount; ++i)
    if (names[i] == s) return static_cast<Relation>(i);
  return std::nullopt;
}

std::vector<int> Sentence::heads() const {
  std::vector<int> h;
  h.reserve(tokens.size());
  for (const Token& t : tokens) h.push_back(t.head);
  return h;
}

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    std::size_t tab = line.find('\t', start);
    if (tab == std::string::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, tab - start));
    start = tab + 1;
  }
  return fields;
}

int parse_int(const std::string& s, int line_no, const char* what) {
  if (s.empty()) throw ParseError(line_no, std::string("empty ") + what);
  std::size_t pos = 0;
  int v;
  try {
    v = std::stoi(s, &pos);
  } catch (const std::exception&) {
    throw ParseError(line_no, std::string("non-integer ") + what + ": '" + s + "'");
  }
  if (pos != s.size())
    throw ParseError(line_no, std::string("non-integer ") + what + ": '" + s + "'");
  return v;
}

}  // namespace

std::vector<Sentence> parse_conllx(std::istream& in, bool allow_unannotated) {
  std::vector<Sentence> sentences;
  Sentence current;
  int line_no = 0;
  std::string line;

  auto flush = [&]() {
    if (!current.tokens.empty()) {
      sentences.push_back(std::move(current));
      current = Sentence{};
    }
  };

  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) {
      flush();
      continue;
    }
    std::vector<std::string> f = split_tabs(line);
    if (f.size() != 10)
      throw ParseError(line_no,
                       "expected 10 tab-separated columns, got " + std::to_string(f.size()));
    Token tok;
    tok.id = parse_int(f[0], line_no, "ID");
    if (tok.id != current.size() + 1)
      throw ParseError(line_no, "ID " + std::to_string(tok.id) + " breaks 1..n sequence (expected " +
                                    std::to_string(current.size() + 1) + ")");
    tok.form = f[1];
    if (tok.form.empty()) throw ParseError(line_no, "empty FORM");
    if (tok.form.find_first_of(" \t") != std::string::npos)
      throw ParseError(line_no, "FORM contains whitespace");
    if (f[4] != "_") tok.pos = f[4];
    if (allow_unannotated && f[6] == "_" && f[7] == "_") {
      tok.head = 0;
      tok.rel = Relation::HED;
    } else {
      tok.head = parse_int(f[6], line_no, "HEAD");
      auto rel = relation_from_string(f[7]);
      if (!rel) throw ParseError(line_no, "unknown DEPREL label '" + f[7] + "'");
      tok.rel = *rel;
    }
    current.tokens.push_back(std::move(tok));
  }
  flush();
  return sentences;
}

std::vector<Sentence> parse_conllx(const std::string& text, bool allow_unannotated) {
  std::istringstream in(text);
  return parse_conllx(in, allow_unannotated);
}

void write_conllx(const std::vector<Sentence>& sentences, std::ostream& out) {
  for (const Sentence& s : sentences) {
    for (const Token& t : s.tokens) {
      out << t.id << '\t' << t.form << "\t_\t_\t" << (t.pos.empty() ? "_" : t.pos) << "\t_\t"
          << t.head << '\t' << to_string(t.rel) << "\t_\t_\n";
    }
    out << '\n';
  }
}

std::string write_conllx(const std::vector<Sentence>& sentences) {
  std::ostringstream out;
  write_conllx(sentences, out);
  return out.str();
}

ValidationReport validate(const Sentence& sentence, int sentence_index) {
  ValidationReport report;
  report.sentence_index = sentence_index;
  const int n = sentence.size();
  auto flag = [&](const std::string& rule, int token_id, const std::string& msg) {
    report.violations.push_back({rule, token_id, msg});
  };

  if (n == 0) {
    flag("empty-sentence", 0, "sentence has no tokens");
    return report;
  }

  int roots = 0;
  for (const Token& t : sentence.tokens) {
    if (t.head < 0 || t.head > n)
      flag("head-range", t.id, "head " + std::to_string(t.head) + " outside [0," +
                                   std::to_string(n) + "]");
    if (t.head == t.id) flag("self-loop", t.id, "token is its own head");
    if (t.head == 0) {
      ++roots;
      if (t.rel != Relation::HED)
        flag("root-label", t.id, "arc from node 0 labeled " + to_string(t.rel) + ", expected HED");
    } else if (t.rel == Relation::HED) {
      flag("hed-off-root", t.id, "HED used on a non-root arc");
    }
  }
  if (roots == 0) flag("no-root", 0, "no token attaches to node 0");
  if (roots > 1) flag("multiple-roots", 0, std::to_string(roots) + " tokens attach to node 0");

  // Cycle detection: walk head links; anything that cannot reach node 0
  // within n steps sits on or under a cycle.
  for (const Token& t : sentence.tokens) {
    int cur = t.id;
    bool reached = false;
    for (int steps = 0; steps <= n; ++steps) {
      int h = sentence.tokens[cur - 1].head;
      if (h < 0 || h > n || h == cur) break;  // already flagged above
      if (h == 0) {
        reached = true;
        break;
      }
      cur = h;
    }
    if (!reached) flag("cycle", t.id, "token cannot reach node 0 through head links");
  }

  return report;
}

TreebankStats treebank_stats(const std::vector<Sentence>& sentences) {
  TreebankStats stats;
  for (int i = 0; i < kRelationCount; ++i) stats.relation_histogram[static_cast<Relation>(i)] = 0;
  std::int64_t projective = 0;
  for (const Sentence& s : sentences) {
    ++stats.sentence_count;
    stats.token_count += s.size();
    ++stats.length_histogram[s.size()];
    for (const Token& t : s.tokens) ++stats.relation_histogram[t.rel];
    if (check_projective_tree(s.heads())) ++projective;
  }
  stats.projective_fraction =
      stats.sentence_count == 0 ? 1.0
                                : static_cast<double>(projective) / stats.sentence_count;
  return stats;
}

}  // namespace ddp
