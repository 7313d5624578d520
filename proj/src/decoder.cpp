#include "ddp/decoder.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace ddp {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
}

std::vector<int> greedy_heads(const Tensor& s_arc) {
  const int n = s_arc.rows() - 1;
  std::vector<int> heads(n);
  for (int d = 1; d <= n; ++d) {
    int best = -1;
    double best_score = kNegInf;
    for (int h = 0; h <= n; ++h) {
      if (h == d) continue;
      if (s_arc.at(d, h) > best_score) {
        best_score = s_arc.at(d, h);
        best = h;
      }
    }
    heads[d - 1] = best;
  }
  return heads;
}

bool check_projective_tree(const std::vector<int>& heads) {
  const int n = static_cast<int>(heads.size());
  if (n == 0) return false;

  int roots = 0;
  for (int d = 1; d <= n; ++d) {
    int h = heads[d - 1];
    if (h < 0 || h > n || h == d) return false;
    if (h == 0) ++roots;
  }
  if (roots != 1) return false;

  std::vector<std::vector<int>> children(n + 1);
  for (int d = 1; d <= n; ++d) children[heads[d - 1]].push_back(d);  // ascending by d

  // Iterative in-order traversal from node 0; a cycle simply leaves some
  // positions unvisited, which the sequence check catches.
  std::vector<int> order;
  order.reserve(n + 1);
  // (node, next-child-slot, emitted-self)
  std::vector<std::array<int, 3>> stack;
  stack.push_back({0, 0, 0});
  while (!stack.empty()) {
    auto& [node, slot, emitted] = stack.back();
    const auto& kids = children[node];
    if (!emitted && (slot == static_cast<int>(kids.size()) || kids[slot] > node)) {
      order.push_back(node);
      emitted = 1;
      continue;
    }
    if (slot == static_cast<int>(kids.size())) {
      stack.pop_back();
      continue;
    }
    int child = kids[slot++];
    stack.push_back({child, 0, 0});
  }

  if (static_cast<int>(order.size()) != n + 1) return false;
  for (int i = 0; i <= n; ++i)
    if (order[i] != i) return false;
  return true;
}

std::pair<std::vector<int>, double> eisner(const Tensor& s_arc) {
  const int n = s_arc.rows() - 1;
  if (n < 1) throw std::invalid_argument("eisner: empty sentence");

  // Span tables indexed [dir][flag][s][t]; dir 1 = head at left end,
  // dir 0 = head at right end; flag counts root arcs (head 0) used.
  const int m = n + 1;
  auto idx = [m](int s, int t) { return s * m + t; };
  struct Cell {
    double score = kNegInf;
    int split = -1;
    int f1 = 0;
  };
  std::vector<Cell> C[2][2], I[2][2];
  for (int dir = 0; dir < 2; ++dir)
    for (int f = 0; f < 2; ++f) {
      C[dir][f].assign(m * m, Cell{});
      I[dir][f].assign(m * m, Cell{});
    }
  for (int s = 0; s <= n; ++s) {
    C[0][0][idx(s, s)].score = 0.0;
    C[1][0][idx(s, s)].score = 0.0;
  }

  for (int len = 1; len <= n; ++len) {
    for (int s = 0; s + len <= n; ++s) {
      int t = s + len;
      // Incomplete spans: arc between the endpoints plus two complete halves.
      for (int f = 0; f < 2; ++f) {
        // Right arc s -> t; uses the root flag when s == 0.
        int arc_flag = (s == 0) ? 1 : 0;
        double arc = s_arc.at(t, s);
        Cell& right = I[1][f][idx(s, t)];
        if (f >= arc_flag && std::isfinite(arc)) {
          int rem = f - arc_flag;
          for (int r = s; r < t; ++r)
            for (int f1 = 0; f1 <= rem; ++f1) {
              double sc = C[1][f1][idx(s, r)].score + C[0][rem - f1][idx(r + 1, t)].score + arc;
              if (sc > right.score) right = {sc, r, f1};
            }
        }
        // Left arc t -> s; node 0 never takes a head.
        if (s >= 1) {
          double arc_l = s_arc.at(s, t);
          Cell& left = I[0][f][idx(s, t)];
          if (std::isfinite(arc_l)) {
            for (int r = s; r < t; ++r)
              for (int f1 = 0; f1 <= f; ++f1) {
                double sc = C[1][f1][idx(s, r)].score + C[0][f - f1][idx(r + 1, t)].score + arc_l;
                if (sc > left.score) left = {sc, r, f1};
              }
          }
        }
      }
      // Complete spans.
      for (int f = 0; f < 2; ++f) {
        Cell& right = C[1][f][idx(s, t)];
        for (int r = s + 1; r <= t; ++r)
          for (int f1 = 0; f1 <= f; ++f1) {
            double sc = I[1][f1][idx(s, r)].score + C[1][f - f1][idx(r, t)].score;
            if (sc > right.score) right = {sc, r, f1};
          }
        if (s >= 1) {
          Cell& left = C[0][f][idx(s, t)];
          for (int r = s; r < t; ++r)
            for (int f1 = 0; f1 <= f; ++f1) {
              double sc = C[0][f1][idx(s, r)].score + I[0][f - f1][idx(r, t)].score;
              if (sc > left.score) left = {sc, r, f1};
            }
        }
      }
    }
  }

  double best = C[1][1][idx(0, n)].score;
  if (!std::isfinite(best)) throw std::invalid_argument("eisner: no feasible single-root tree");

  std::vector<int> heads(n, -1);
  // Backtrack: (is_complete, dir, flag, s, t)
  struct Frame {
    bool complete;
    int dir, f, s, t;
  };
  std::vector<Frame> stack{{true, 1, 1, 0, n}};
  while (!stack.empty()) {
    Frame fr = stack.back();
    stack.pop_back();
    if (fr.s == fr.t) continue;
    if (fr.complete) {
      const Cell& c = C[fr.dir][fr.f][idx(fr.s, fr.t)];
      int r = c.split;
      if (fr.dir == 1) {
        stack.push_back({false, 1, c.f1, fr.s, r});
        stack.push_back({true, 1, fr.f - c.f1, r, fr.t});
      } else {
        stack.push_back({true, 0, c.f1, fr.s, r});
        stack.push_back({false, 0, fr.f - c.f1, r, fr.t});
      }
    } else {
      const Cell& c = I[fr.dir][fr.f][idx(fr.s, fr.t)];
      int r = c.split;
      int arc_flag = (fr.dir == 1 && fr.s == 0) ? 1 : 0;
      int rem = fr.f - arc_flag;
      if (fr.dir == 1)
        heads[fr.t - 1] = fr.s;
      else
        heads[fr.s - 1] = fr.t;
      stack.push_back({true, 1, c.f1, fr.s, r});
      stack.push_back({true, 0, rem - c.f1, r + 1, fr.t});
    }
  }
  return {heads, best};
}

std::vector<Relation> assign_labels(const Tensor& s_rel, const std::vector<int>& heads) {
  const int n = static_cast<int>(heads.size());
  std::vector<Relation> rels(n);
  const int hed = static_cast<int>(Relation::HED);
  for (int d = 1; d <= n; ++d) {
    int h = heads[d - 1];
    if (h == 0) {
      rels[d - 1] = Relation::HED;
      continue;
    }
    int best = -1;
    double best_score = kNegInf;
    for (int l = 0; l < kRelationCount; ++l) {
      if (l == hed) continue;
      double sc = s_rel.at3(d, h, l);
      if (sc > best_score) {
        best_score = sc;
        best = l;
      }
    }
    rels[d - 1] = static_cast<Relation>(best);
  }
  return rels;
}

DecodeResult decode(const ScorePair& scores) {
  DecodeResult result;
  std::vector<int> greedy = greedy_heads(scores.arc);
  if (check_projective_tree(greedy)) {
    result.heads = std::move(greedy);
    result.used_fast_path = true;
    result.score = 0.0;
    for (int d = 1; d <= scores.n(); ++d) result.score += scores.arc.at(d, result.heads[d - 1]);
  } else {
    auto [heads, score] = eisner(scores.arc);
    result.heads = std::move(heads);
    result.used_fast_path = false;
    result.score = score;
  }
  result.rels = assign_labels(scores.rel, result.heads);
  return result;
}

}  // namespace ddp
