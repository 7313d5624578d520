#include "ddp/evaluator.hpp"

#include <iomanip>
#include <sstream>

#include "ddp/utf8.hpp"

namespace ddp {

EvalResult attachment_scores(const std::vector<Sentence>& gold,
                             const std::vector<Sentence>& pred, bool exclude_mt_punct) {
  if (gold.size() != pred.size())
    throw EvalError("corpus size mismatch: gold has " + std::to_string(gold.size()) +
                    " sentences, pred has " + std::to_string(pred.size()));

  EvalResult result;
  std::int64_t head_correct = 0, label_correct = 0;
  for (std::size_t s = 0; s < gold.size(); ++s) {
    const Sentence& g = gold[s];
    const Sentence& p = pred[s];
    if (g.size() != p.size())
      throw EvalError("sentence " + std::to_string(s + 1) + ": length mismatch (" +
                      std::to_string(g.size()) + " vs " + std::to_string(p.size()) + ")");
    auto& bucket = result.per_length[g.size()];
    for (int i = 0; i < g.size(); ++i) {
      const Token& gt = g.tokens[i];
      const Token& pt = p.tokens[i];
      if (gt.form != pt.form)
        throw EvalError("sentence " + std::to_string(s + 1) + " token " + std::to_string(i + 1) +
                        ": form mismatch ('" + gt.form + "' vs '" + pt.form + "')");
      if (exclude_mt_punct && gt.rel == Relation::MT && is_all_punct(gt.form)) continue;
      ++result.token_count;
      ++bucket.total;
      auto& rel = result.per_relation[gt.rel];
      ++rel.total;
      bool head_ok = gt.head == pt.head;
      bool label_ok = head_ok && gt.rel == pt.rel;
      if (head_ok) {
        ++head_correct;
        ++bucket.head_correct;
      }
      if (label_ok) {
        ++label_correct;
        ++bucket.label_correct;
        ++rel.correct;
      }
    }
  }
  result.uas = result.token_count == 0 ? 0.0
                                       : static_cast<double>(head_correct) / result.token_count;
  result.las = result.token_count == 0 ? 0.0
                                       : static_cast<double>(label_correct) / result.token_count;
  return result;
}

std::string EvalResult::report() const {
  std::ostringstream out;
  out << std::fixed << std::setprecision(2);
  out << "tokens: " << token_count << "\n";
  out << "UAS: " << uas * 100.0 << "%\n";
  out << "LAS: " << las * 100.0 << "%\n";
  out << "per-relation (correct/total):\n";
  for (const auto& [rel, c] : per_relation)
    out << "  " << to_string(rel) << "\t" << c.correct << "/" << c.total << "\n";
  out << "per-length (head-correct/label-correct/total):\n";
  for (const auto& [len, c] : per_length)
    out << "  " << len << "\t" << c.head_correct << "/" << c.label_correct << "/" << c.total
        << "\n";
  return out.str();
}

std::string EvalResult::key_values() const {
  std::ostringstream out;
  out << std::setprecision(17);
  out << "uas=" << uas << "\n" << "las=" << las << "\n" << "tokens=" << token_count << "\n";
  return out.str();
}

}  // namespace ddp
