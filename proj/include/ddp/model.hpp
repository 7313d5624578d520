#pragma once

#include <map>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "ddp/conllx.hpp"
#include "ddp/decoder.hpp"
#include "ddp/graph.hpp"
#include "ddp/tensor.hpp"

namespace ddp {

enum class InputMode { Char, Pos };

// Standard biaffine-parser sizes; char_emb_dim doubles as the char-LSTM
// hidden size
// per direction so char mode and pos mode produce the same input width.
struct HyperParams {
  int word_emb_dim = 300;
  int char_emb_dim = 50;
  int pos_emb_dim = 100;
  int lstm_hidden = 400;  // per direction
  int lstm_depth = 3;
  int arc_mlp = 500;
  int rel_mlp = 100;
  int mlp_depth = 1;
  double word_dropout = 0.33;
  double char_dropout = 0.33;
  double lstm_dropout = 0.33;
  double arc_mlp_dropout = 0.33;
  double rel_mlp_dropout = 0.33;
  double learning_rate = 2e-3;
  InputMode input_mode = InputMode::Char;

  int input_dim() const {
    return word_emb_dim + (input_mode == InputMode::Char ? 2 * char_emb_dim : pos_emb_dim);
  }
  void check() const;
};

struct Vocab {
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;

  // index -> symbol, including "<pad>"/"<unk>" at 0/1
  std::vector<std::string> words, chars, pos_tags;
  std::unordered_map<std::string, int> word_index, char_index, pos_index;

  int word_id(const std::string& w) const;
  int char_id(const std::string& c) const;
  int pos_id(const std::string& p) const;
  static int rel_id(Relation r) { return static_cast<int>(r); }

  bool has_pos() const { return pos_tags.size() > 2; }
};

Vocab build_vocab(const std::vector<Sentence>& treebank, int min_freq);

struct ParserModel {
  Vocab vocab;
  HyperParams hp;
  std::map<std::string, Tensor> params;

  void init(std::mt19937_64& rng);
  Tensor& p(const std::string& name);
  const Tensor& p(const std::string& name) const;
};

// Node handles for one scored sentence. rel_mat holds
// (H^{d-rel} ⊕ 1) U^{rel} flattened to [n+1, L*(K+1)] and head_rel the
// augmented head representations [n+1, K+1]; together they give S_rel.
struct ScoreNodes {
  Tape::Id s_arc = -1;
  Tape::Id rel_mat = -1;
  Tape::Id head_rel = -1;
  int n = 0;
};

// One forward trace over a sentence. Training passes supply an RNG for
// dropout; rng == nullptr disables all dropout (deterministic).
class ForwardPass {
 public:
  ForwardPass(const ParserModel& model, std::mt19937_64* rng = nullptr);

  Tape::Id embed_tokens(const Sentence& sentence);    // [n+1, d_in]
  Tape::Id encode(Tape::Id inputs);                   // [n+1, 2*lstm_hidden]
  ScoreNodes score(Tape::Id encoded);
  Tape::Id loss(const ScoreNodes& scores, const Sentence& gold);  // scalar

  ScorePair score_pair(const ScoreNodes& scores) const;

  Tape tape;

 private:
  Tape::Id leaf(const std::string& name);
  Tape::Id dropout(Tape::Id x, double rate);
  Tape::Id lstm_direction(Tape::Id inputs, const std::string& prefix, bool backward);
  Tape::Id mlp(Tape::Id x, const std::string& prefix, int out_dim, double drop_rate);

  const ParserModel& model_;
  std::mt19937_64* rng_;
  std::map<std::string, Tape::Id> leaves_;
};

// Full pipeline conveniences.
Tape::Id forward_loss(ForwardPass& fp, const Sentence& sentence);
ScorePair score_sentence(const ParserModel& model, const Sentence& sentence);

}  // namespace ddp
