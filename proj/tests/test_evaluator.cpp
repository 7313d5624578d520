#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <random>

#include "ddp/evaluator.hpp"
#include "ddp/utf8.hpp"
#include "oracles.hpp"

using namespace ddp;

namespace {

// gold/pred pair over one 10-token sentence with a chosen number of
// correct heads and correct head+label tokens.
std::pair<std::vector<Sentence>, std::vector<Sentence>> make_pair(int head_ok, int label_ok) {
  Sentence gold;
  for (int i = 1; i <= 10; ++i)
    gold.tokens.push_back({i, "w" + std::to_string(i), "", i == 1 ? 0 : 1,
                           i == 1 ? Relation::HED : Relation::ATT});
  Sentence pred = gold;
  for (int i = 0; i < 10; ++i) {
    if (i >= head_ok) {
      pred.tokens[i].head = (gold.tokens[i].head + 2) % 10 + 1;
      if (pred.tokens[i].head == pred.tokens[i].id) pred.tokens[i].head = 0;
      pred.tokens[i].rel = pred.tokens[i].head == 0 ? Relation::HED : Relation::VOB;
    } else if (i >= label_ok) {
      pred.tokens[i].rel = gold.tokens[i].rel == Relation::VOB ? Relation::ATT : Relation::VOB;
    }
  }
  return {{gold}, {pred}};
}

}  // namespace

TEST_CASE("identity scores 100/100") {
  std::mt19937_64 rng(1);
  std::vector<Sentence> corpus;
  for (int i = 0; i < 20; ++i) corpus.push_back(oracle::random_sentence(rng));
  EvalResult r = attachment_scores(corpus, corpus);
  CHECK(r.uas == 1.0);
  CHECK(r.las == 1.0);
}

TEST_CASE("8 of 10 heads, 7 of 10 labels gives UAS 0.80 LAS 0.70") {
  auto [gold, pred] = make_pair(8, 7);
  EvalResult r = attachment_scores(gold, pred);
  CHECK(r.token_count == 10);
  CHECK(r.uas == 0.80);
  CHECK(r.las == 0.70);
}

TEST_CASE("all heads wrong gives 0/0") {
  auto [gold, pred] = make_pair(0, 0);
  EvalResult r = attachment_scores(gold, pred);
  CHECK(r.uas == 0.0);
  CHECK(r.las == 0.0);
}

TEST_CASE("alignment mismatches are errors naming the position") {
  std::mt19937_64 rng(2);
  std::vector<Sentence> gold{oracle::random_sentence(rng)};
  SUBCASE("sentence count") {
    CHECK_THROWS_AS(attachment_scores(gold, {}), EvalError);
  }
  SUBCASE("form mismatch") {
    std::vector<Sentence> pred = gold;
    pred[0].tokens[0].form += "x";
    CHECK_THROWS_WITH_AS(attachment_scores(gold, pred), doctest::Contains("token 1"), EvalError);
  }
  SUBCASE("length mismatch") {
    std::vector<Sentence> pred = gold;
    pred[0].tokens.push_back(pred[0].tokens.back());
    CHECK_THROWS_AS(attachment_scores(gold, pred), EvalError);
  }
}

TEST_CASE("LAS <= UAS over random pairs and counts stay consistent") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<Sentence> gold, pred;
    for (int i = 0; i < 5; ++i) {
      Sentence g = oracle::random_sentence(rng);
      Sentence p = g;
      for (Token& t : p.tokens) {
        if (rng() % 3 == 0) t.head = static_cast<int>(rng() % (p.size() + 1));
        if (t.head == t.id) t.head = 0;
        if (rng() % 3 == 0)
          t.rel = static_cast<Relation>(rng() % kRelationCount);
      }
      gold.push_back(std::move(g));
      pred.push_back(std::move(p));
    }
    EvalResult r = attachment_scores(gold, pred);
    CHECK(r.las <= r.uas);
    std::int64_t total = 0;
    for (const auto& [rel, c] : r.per_relation) total += c.total;
    CHECK(total == r.token_count);
  }
}

TEST_CASE("scores are invariant under corpus reordering") {
  std::mt19937_64 rng(4);
  std::vector<Sentence> gold, pred;
  for (int i = 0; i < 8; ++i) {
    Sentence g = oracle::random_sentence(rng);
    Sentence p = g;
    if (p.size() > 1) p.tokens[1].head = 0;
    gold.push_back(g);
    pred.push_back(p);
  }
  EvalResult a = attachment_scores(gold, pred);
  std::vector<Sentence> gold_r(gold.rbegin(), gold.rend());
  std::vector<Sentence> pred_r(pred.rbegin(), pred.rend());
  EvalResult b = attachment_scores(gold_r, pred_r);
  CHECK(a.uas == b.uas);
  CHECK(a.las == b.las);
}

TEST_CASE("concatenation obeys the token-weighted micro-average identity") {
  std::mt19937_64 rng(5);
  auto perturbed = [&](const std::vector<Sentence>& gold) {
    std::vector<Sentence> pred = gold;
    for (Sentence& s : pred)
      for (Token& t : s.tokens)
        if (rng() % 2 == 0) {
          t.head = static_cast<int>(rng() % (s.size() + 1));
          if (t.head == t.id) t.head = 0;
        }
    return pred;
  };
  std::vector<Sentence> g1, g2;
  for (int i = 0; i < 6; ++i) g1.push_back(oracle::random_sentence(rng));
  for (int i = 0; i < 9; ++i) g2.push_back(oracle::random_sentence(rng));
  std::vector<Sentence> p1 = perturbed(g1), p2 = perturbed(g2);

  EvalResult a = attachment_scores(g1, p1);
  EvalResult b = attachment_scores(g2, p2);
  std::vector<Sentence> gc = g1, pc = p1;
  gc.insert(gc.end(), g2.begin(), g2.end());
  pc.insert(pc.end(), p2.begin(), p2.end());
  EvalResult c = attachment_scores(gc, pc);

  double expected_uas =
      (a.uas * a.token_count + b.uas * b.token_count) / (a.token_count + b.token_count);
  double expected_las =
      (a.las * a.token_count + b.las * b.token_count) / (a.token_count + b.token_count);
  CHECK(std::abs(c.uas - expected_uas) <= 1e-12);
  CHECK(std::abs(c.las - expected_las) <= 1e-12);
}

TEST_CASE("exclude_mt_punct drops only punctuation MT tokens") {
  Sentence gold;
  gold.tokens.push_back({1, "word", "", 0, Relation::HED});
  gold.tokens.push_back({2, "\xef\xbc\x8c", "", 1, Relation::MT});  // fullwidth comma
  gold.tokens.push_back({3, "le", "", 1, Relation::MT});            // MT but not punctuation
  gold.tokens.push_back({4, ".", "", 1, Relation::MT});
  Sentence pred = gold;
  pred.tokens[1].head = 3;  // wrong head on the excluded comma
  pred.tokens[3].head = 3;  // wrong head on the excluded period

  EvalResult with_all = attachment_scores({gold}, {pred});
  CHECK(with_all.token_count == 4);
  CHECK(with_all.uas == 0.5);

  EvalResult excl = attachment_scores({gold}, {pred}, true);
  CHECK(excl.token_count == 2);
  CHECK(excl.uas == 1.0);
  CHECK(excl.las == 1.0);
}

TEST_CASE("punctuation detection is character-class based") {
  CHECK(is_all_punct(","));
  CHECK(is_all_punct("!?"));
  CHECK(is_all_punct("\xe3\x80\x82"));  // ideographic full stop
  CHECK(is_all_punct("\xef\xbc\x8c"));  // fullwidth comma
  CHECK(!is_all_punct("a,"));
  CHECK(!is_all_punct("word"));
  CHECK(!is_all_punct("\xe4\xb8\xad"));  // CJK ideograph
  CHECK(!is_all_punct(""));
}
