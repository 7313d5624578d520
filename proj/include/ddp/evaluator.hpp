#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "ddp/conllx.hpp"

namespace ddp {

struct EvalError : std::runtime_error {
  explicit EvalError(const std::string& msg) : std::runtime_error(msg) {}
};

struct RelationCounts {
  std::int64_t correct = 0;  // correct head and label
  std::int64_t total = 0;    // gold occurrences
};

struct LengthBucketCounts {
  std::int64_t head_correct = 0;
  std::int64_t label_correct = 0;
  std::int64_t total = 0;
};

struct EvalResult {
  double uas = 0.0;
  double las = 0.0;
  std::int64_t token_count = 0;
  std::map<Relation, RelationCounts> per_relation;
  std::map<int, LengthBucketCounts> per_length;  // keyed by sentence length

  std::string report() const;     // human-readable breakdown
  std::string key_values() const; // "uas=... las=... tokens=..." block
};

// Corpus-level micro-averaged UAS/LAS. With exclude_mt_punct, tokens
// whose gold relation is MT and whose form is pure punctuation are
// dropped from numerator and denominator.
EvalResult attachment_scores(const std::vector<Sentence>& gold,
                             const std::vector<Sentence>& pred,
                             bool exclude_mt_punct = false);

}  // namespace ddp
