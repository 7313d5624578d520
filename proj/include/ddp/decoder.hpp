#pragma once

#include <vector>

#include "ddp/conllx.hpp"
#include "ddp/tensor.hpp"

namespace ddp {

// Arc score matrix S_arc[d][h] (head h for dependent d, row 0 unused)
// and relation score tensor S_rel[d][h][l], both over nodes 0..n.
struct ScorePair {
  Tensor arc;  // [n+1, n+1]
  Tensor rel;  // [n+1, n+1, kRelationCount]
  int n() const { return arc.rows() - 1; }
};

struct DecodeResult {
  std::vector<int> heads;       // heads[d-1] in [0, n]
  std::vector<Relation> rels;
  bool used_fast_path = false;
  double score = 0.0;           // total arc score
};

// heads[d-1] = argmax_h S_arc[d][h] over h != d, ties to the smaller h.
std::vector<int> greedy_heads(const Tensor& s_arc);

// True iff heads forms a single-root tree whose in-order traversal
// (left dependents ascending, node, right dependents ascending, from
// node 0) emits positions 0..n in order.
bool check_projective_tree(const std::vector<int>& heads);

// Max-score single-root projective tree over S_arc; O(n^3) span DP with
// a root-arc usage flag. -inf entries act as masks; an infeasible root
// column or n=0 is an error.
std::pair<std::vector<int>, double> eisner(const Tensor& s_arc);

// Masked label argmax: HED forced on the head-0 arc, forbidden elsewhere.
std::vector<Relation> assign_labels(const Tensor& s_rel, const std::vector<int>& heads);

// Greedy fast path when it already yields a projective single-root tree,
// Eisner otherwise; labels assigned on the chosen heads.
DecodeResult decode(const ScorePair& scores);

}  // namespace ddp
