#include "ddp/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "ddp/trainer.hpp"
#include "ddp/utf8.hpp"

namespace ddp {

void HyperParams::check() const {
  auto positive = [](int v, const char* what) {
    if (v < 1) throw std::invalid_argument(std::string(what) + " must be positive");
  };
  positive(word_emb_dim, "word_emb_dim");
  positive(char_emb_dim, "char_emb_dim");
  positive(pos_emb_dim, "pos_emb_dim");
  positive(lstm_hidden, "lstm_hidden");
  positive(lstm_depth, "lstm_depth");
  positive(arc_mlp, "arc_mlp");
  positive(rel_mlp, "rel_mlp");
  positive(mlp_depth, "mlp_depth");
  for (double r : {word_dropout, char_dropout, lstm_dropout, arc_mlp_dropout, rel_mlp_dropout})
    if (r < 0.0 || r >= 1.0) throw std::invalid_argument("dropout rate must be in [0,1)");
}

namespace {

int lookup(const std::unordered_map<std::string, int>& index, const std::string& key) {
  auto it = index.find(key);
  return it == index.end() ? Vocab::kUnk : it->second;
}

void add_symbol(std::vector<std::string>& list, std::unordered_map<std::string, int>& index,
                const std::string& sym) {
  if (index.count(sym)) return;
  index.emplace(sym, static_cast<int>(list.size()));
  list.push_back(sym);
}

void init_reserved(std::vector<std::string>& list, std::unordered_map<std::string, int>& index) {
  add_symbol(list, index, "<pad>");
  add_symbol(list, index, "<unk>");
}

}  // namespace

int Vocab::word_id(const std::string& w) const { return lookup(word_index, w); }
int Vocab::char_id(const std::string& c) const { return lookup(char_index, c); }
int Vocab::pos_id(const std::string& p) const { return lookup(pos_index, p); }

Vocab build_vocab(const std::vector<Sentence>& treebank, int min_freq) {
  if (treebank.empty()) throw std::invalid_argument("build_vocab: empty treebank");
  if (min_freq < 1) throw std::invalid_argument("build_vocab: min_freq must be positive");

  Vocab v;
  init_reserved(v.words, v.word_index);
  init_reserved(v.chars, v.char_index);
  init_reserved(v.pos_tags, v.pos_index);

  std::map<std::string, int> freq;
  for (const Sentence& s : treebank)
    for (const Token& t : s.tokens) ++freq[t.form];

  for (const Sentence& s : treebank)
    for (const Token& t : s.tokens) {
      if (freq[t.form] >= min_freq) add_symbol(v.words, v.word_index, t.form);
      for (const std::string& c : utf8_chars(t.form)) add_symbol(v.chars, v.char_index, c);
      if (!t.pos.empty()) add_symbol(v.pos_tags, v.pos_index, t.pos);
    }
  return v;
}

Tensor& ParserModel::p(const std::string& name) {
  auto it = params.find(name);
  if (it == params.end()) throw std::out_of_range("no parameter named " + name);
  return it->second;
}

const Tensor& ParserModel::p(const std::string& name) const {
  return const_cast<ParserModel*>(this)->p(name);
}

namespace {

Tensor xavier(int rows, int cols, std::mt19937_64& rng) {
  double a = std::sqrt(6.0 / (rows + cols));
  std::uniform_real_distribution<double> u(-a, a);
  Tensor t = Tensor::zeros({rows, cols});
  for (double& v : t.data) v = u(rng);
  return t;
}

Tensor embedding_init(int rows, int cols, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-0.1, 0.1);
  Tensor t = Tensor::zeros({rows, cols});
  for (double& v : t.data) v = u(rng);
  return t;
}

void init_lstm(std::map<std::string, Tensor>& params, const std::string& prefix, int in_dim,
               int hidden, std::mt19937_64& rng) {
  for (const char* dir : {"fw", "bw"})
    for (const char* gate : {"i", "f", "g", "o"}) {
      std::string base = prefix + "." + dir + ".";
      params[base + "Wx" + gate] = xavier(in_dim, hidden, rng);
      params[base + "Wh" + gate] = xavier(hidden, hidden, rng);
      params[base + "b" + gate] = Tensor::zeros({1, hidden});
    }
}

}  // namespace

void ParserModel::init(std::mt19937_64& rng) {
  hp.check();
  if (hp.input_mode == InputMode::Pos && !vocab.has_pos())
    throw std::invalid_argument("input_mode=pos but the vocabulary has no POS tags");

  params.clear();
  params["emb.word"] =
      embedding_init(static_cast<int>(vocab.words.size()), hp.word_emb_dim, rng);
  params["emb.root"] = embedding_init(1, hp.input_dim(), rng);
  if (hp.input_mode == InputMode::Char) {
    params["emb.char"] =
        embedding_init(static_cast<int>(vocab.chars.size()), hp.char_emb_dim, rng);
    init_lstm(params, "char_lstm", hp.char_emb_dim, hp.char_emb_dim, rng);
  } else {
    params["emb.pos"] =
        embedding_init(static_cast<int>(vocab.pos_tags.size()), hp.pos_emb_dim, rng);
  }

  int in_dim = hp.input_dim();
  for (int layer = 0; layer < hp.lstm_depth; ++layer) {
    init_lstm(params, "lstm" + std::to_string(layer), layer == 0 ? in_dim : 2 * hp.lstm_hidden,
              hp.lstm_hidden, rng);
  }

  int enc_dim = 2 * hp.lstm_hidden;
  for (const auto& [head, dim] : std::vector<std::pair<std::string, int>>{
           {"d_arc", hp.arc_mlp}, {"h_arc", hp.arc_mlp}, {"d_rel", hp.rel_mlp},
           {"h_rel", hp.rel_mlp}}) {
    int in = enc_dim;
    for (int d = 0; d < hp.mlp_depth; ++d) {
      std::string base = "mlp." + head + "." + std::to_string(d) + ".";
      params[base + "W"] = xavier(in, dim, rng);
      params[base + "b"] = Tensor::zeros({1, dim});
      in = dim;
    }
  }

  params["biaffine.arc.U"] = Tensor::zeros({hp.arc_mlp + 1, hp.arc_mlp});
  params["biaffine.rel.U"] =
      Tensor::zeros({hp.rel_mlp + 1, kRelationCount, hp.rel_mlp + 1});
}

ForwardPass::ForwardPass(const ParserModel& model, std::mt19937_64* rng)
    : model_(model), rng_(rng) {}

Tape::Id ForwardPass::leaf(const std::string& name) {
  auto it = leaves_.find(name);
  if (it != leaves_.end()) return it->second;
  Tape::Id id = tape.param(name, model_.p(name));
  leaves_.emplace(name, id);
  return id;
}

Tape::Id ForwardPass::dropout(Tape::Id x, double rate) {
  if (!rng_ || rate <= 0.0) return x;
  const Tensor& v = tape.value(x);
  Tensor mask = Tensor::zeros(v.shape);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double keep = 1.0 - rate;
  for (double& m : mask.data) m = (u(*rng_) < rate) ? 0.0 : 1.0 / keep;
  return tape.mul(x, tape.input(std::move(mask)));
}

Tape::Id ForwardPass::lstm_direction(Tape::Id inputs, const std::string& prefix, bool backward) {
  const int steps = tape.value(inputs).rows();
  const std::string base = prefix + (backward ? ".bw." : ".fw.");
  const int hidden = tape.value(leaf(base + "bi")).cols();

  Tape::Id h = tape.input(Tensor::zeros({1, hidden}));
  Tape::Id c = tape.input(Tensor::zeros({1, hidden}));
  std::vector<Tape::Id> outputs(steps);
  for (int step = 0; step < steps; ++step) {
    int t = backward ? steps - 1 - step : step;
    Tape::Id x = tape.gather_rows(inputs, {t});
    auto gate = [&](const char* g) {
      return tape.add(tape.add(tape.matmul(x, leaf(base + "Wx" + g)),
                               tape.matmul(h, leaf(base + "Wh" + g))),
                      leaf(base + "b" + g));
    };
    Tape::Id in_gate = tape.sigmoid(gate("i"));
    Tape::Id forget = tape.sigmoid(gate("f"));
    Tape::Id cand = tape.tanh_(gate("g"));
    Tape::Id out_gate = tape.sigmoid(gate("o"));
    c = tape.add(tape.mul(forget, c), tape.mul(in_gate, cand));
    h = tape.mul(out_gate, tape.tanh_(c));
    outputs[t] = h;
  }
  return tape.concat(outputs, 0);
}

Tape::Id ForwardPass::embed_tokens(const Sentence& sentence) {
  const HyperParams& hp = model_.hp;
  const Vocab& vocab = model_.vocab;

  std::vector<int> word_ids;
  word_ids.reserve(sentence.size());
  for (const Token& t : sentence.tokens) word_ids.push_back(vocab.word_id(t.form));
  if (rng_) word_ids = apply_token_dropout(word_ids, hp.word_dropout, *rng_);

  std::vector<Tape::Id> rows;
  rows.reserve(sentence.size() + 1);
  rows.push_back(leaf("emb.root"));

  Tape::Id word_table = leaf("emb.word");
  for (int i = 0; i < sentence.size(); ++i) {
    Tape::Id word_vec = tape.gather_rows(word_table, {word_ids[i]});
    Tape::Id extra;
    if (hp.input_mode == InputMode::Char) {
      std::vector<int> char_ids;
      for (const std::string& c : utf8_chars(sentence.tokens[i].form))
        char_ids.push_back(vocab.char_id(c));
      if (rng_) char_ids = apply_token_dropout(char_ids, hp.char_dropout, *rng_);
      Tape::Id chars = tape.gather_rows(leaf("emb.char"), char_ids);
      int m = static_cast<int>(char_ids.size());
      Tape::Id fw = tape.gather_rows(lstm_direction(chars, "char_lstm", false), {m - 1});
      Tape::Id bw = tape.gather_rows(lstm_direction(chars, "char_lstm", true), {0});
      extra = tape.concat({fw, bw}, 1);
    } else {
      if (sentence.tokens[i].pos.empty())
        throw std::invalid_argument("input_mode=pos but token " + std::to_string(i + 1) +
                                    " has no POS tag");
      int pid = vocab.pos_id(sentence.tokens[i].pos);
      if (rng_) pid = apply_token_dropout({pid}, hp.word_dropout, *rng_)[0];
      extra = tape.gather_rows(leaf("emb.pos"), {pid});
    }
    rows.push_back(tape.concat({word_vec, extra}, 1));
  }
  return tape.concat(rows, 0);
}

Tape::Id ForwardPass::encode(Tape::Id inputs) {
  Tape::Id x = inputs;
  for (int layer = 0; layer < model_.hp.lstm_depth; ++layer) {
    std::string prefix = "lstm" + std::to_string(layer);
    Tape::Id fw = lstm_direction(x, prefix, false);
    Tape::Id bw = lstm_direction(x, prefix, true);
    x = tape.concat({fw, bw}, 1);
    if (layer + 1 < model_.hp.lstm_depth) x = dropout(x, model_.hp.lstm_dropout);
  }
  return x;
}

Tape::Id ForwardPass::mlp(Tape::Id x, const std::string& head, int /*out_dim*/,
                          double drop_rate) {
  Tape::Id h = x;
  for (int d = 0; d < model_.hp.mlp_depth; ++d) {
    std::string base = "mlp." + head + "." + std::to_string(d) + ".";
    h = tape.leaky_relu(tape.add(tape.matmul(h, leaf(base + "W")), leaf(base + "b")));
  }
  return dropout(h, drop_rate);
}

ScoreNodes ForwardPass::score(Tape::Id encoded) {
  const HyperParams& hp = model_.hp;
  Tape::Id d_arc = mlp(encoded, "d_arc", hp.arc_mlp, hp.arc_mlp_dropout);
  Tape::Id h_arc = mlp(encoded, "h_arc", hp.arc_mlp, hp.arc_mlp_dropout);
  Tape::Id d_rel = mlp(encoded, "d_rel", hp.rel_mlp, hp.rel_mlp_dropout);
  Tape::Id h_rel = mlp(encoded, "h_rel", hp.rel_mlp, hp.rel_mlp_dropout);

  ScoreNodes nodes;
  nodes.n = tape.value(encoded).rows() - 1;
  nodes.s_arc = tape.matmul(tape.matmul(tape.append_ones(d_arc), leaf("biaffine.arc.U")),
                            tape.transpose(h_arc));

  int k1 = hp.rel_mlp + 1;
  Tape::Id u_rel =
      tape.reshape(leaf("biaffine.rel.U"), {k1, kRelationCount * k1});
  nodes.rel_mat = tape.matmul(tape.append_ones(d_rel), u_rel);
  nodes.head_rel = tape.append_ones(h_rel);
  return nodes;
}

Tape::Id ForwardPass::loss(const ScoreNodes& scores, const Sentence& gold) {
  const int n = gold.size();
  if (n < 1) throw std::invalid_argument("loss: empty sentence");
  std::vector<int> dep_rows(n), gold_heads(n), gold_rels(n);
  for (int d = 1; d <= n; ++d) {
    dep_rows[d - 1] = d;
    gold_heads[d - 1] = gold.tokens[d - 1].head;
    gold_rels[d - 1] = Vocab::rel_id(gold.tokens[d - 1].rel);
  }
  Tape::Id arc_ce =
      tape.cross_entropy(tape.gather_rows(scores.s_arc, dep_rows), gold_heads);
  Tape::Id rel_logits =
      tape.block_row_dot(tape.gather_rows(scores.rel_mat, dep_rows),
                         tape.gather_rows(scores.head_rel, gold_heads), kRelationCount);
  Tape::Id rel_ce = tape.cross_entropy(rel_logits, gold_rels);
  double inv_n = 1.0 / n;
  return tape.add(tape.scale(tape.sum_all(arc_ce), inv_n),
                  tape.scale(tape.sum_all(rel_ce), inv_n));
}

ScorePair ForwardPass::score_pair(const ScoreNodes& scores) const {
  const Tensor& arc = tape.value(scores.s_arc);
  const Tensor& mat = tape.value(scores.rel_mat);
  const Tensor& head = tape.value(scores.head_rel);
  const int n = scores.n;
  const int k1 = head.cols();
  ScorePair pair;
  pair.arc = arc;
  pair.rel = Tensor::zeros({n + 1, n + 1, kRelationCount});
  for (int d = 0; d <= n; ++d)
    for (int h = 0; h <= n; ++h)
      for (int l = 0; l < kRelationCount; ++l) {
        double s = 0.0;
        for (int j = 0; j < k1; ++j) s += mat.at(d, l * k1 + j) * head.at(h, j);
        pair.rel.at3(d, h, l) = s;
      }
  return pair;
}

Tape::Id forward_loss(ForwardPass& fp, const Sentence& sentence) {
  Tape::Id inputs = fp.embed_tokens(sentence);
  Tape::Id encoded = fp.encode(inputs);
  ScoreNodes scores = fp.score(encoded);
  return fp.loss(scores, sentence);
}

ScorePair score_sentence(const ParserModel& model, const Sentence& sentence) {
  ForwardPass fp(model);
  Tape::Id inputs = fp.embed_tokens(sentence);
  ScoreNodes scores = fp.score(fp.encode(inputs));
  return fp.score_pair(scores);
}

}  // namespace ddp
