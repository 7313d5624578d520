#include "ddp/trainer.hpp"

#include <atomic>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <thread>

#include "ddp/evaluator.hpp"

namespace ddp {

void TrainConfig::check() const {
  hp.check();
  if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (patience < 1) throw std::invalid_argument("patience must be >= 1");
  if (min_freq < 1) throw std::invalid_argument("min_freq must be >= 1");
}

std::vector<int> apply_token_dropout(const std::vector<int>& ids, double rate,
                                     std::mt19937_64& rng) {
  if (rate < 0.0 || rate >= 1.0) throw std::invalid_argument("token dropout rate out of [0,1)");
  std::vector<int> out = ids;
  if (rate == 0.0) return out;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int& id : out) {
    double draw = u(rng);  // one draw per id, PAD included, to keep streams aligned
    if (id != Vocab::kPad && draw < rate) id = Vocab::kUnk;
  }
  return out;
}

void adam_step(std::map<std::string, Tensor>& params, const GradientMap& grads, AdamState& state,
               double lr) {
  ++state.step;
  double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (auto& [name, theta] : params) {
    auto git = grads.find(name);
    if (git == grads.end()) continue;
    const Tensor& g = git->second;
    if (!g.same_shape(theta))
      throw ShapeError("adam_step: gradient shape " + g.shape_str() +
                       " does not match parameter " + name + " " + theta.shape_str());
    Tensor& m = state.m.try_emplace(name, Tensor::zeros(theta.shape)).first->second;
    Tensor& v = state.v.try_emplace(name, Tensor::zeros(theta.shape)).first->second;
    for (std::size_t i = 0; i < theta.data.size(); ++i) {
      m.data[i] = state.beta1 * m.data[i] + (1.0 - state.beta1) * g.data[i];
      v.data[i] = state.beta2 * v.data[i] + (1.0 - state.beta2) * g.data[i] * g.data[i];
      double m_hat = m.data[i] / bc1;
      double v_hat = v.data[i] / bc2;
      theta.data[i] -= lr * m_hat / (std::sqrt(v_hat) + state.epsilon);
    }
  }
}

// ---------------------------------------------------------------------------
// Checkpoint container

namespace {

constexpr char kMagic[4] = {'D', 'D', 'P', 'M'};
constexpr std::uint32_t kVersion = 1;

struct Writer {
  std::vector<std::uint8_t> bytes;
  void u8(std::uint8_t v) { bytes.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) bytes.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes.insert(bytes.end(), s.begin(), s.end());
  }
  void str_list(const std::vector<std::string>& list) {
    u32(static_cast<std::uint32_t>(list.size()));
    for (const std::string& s : list) str(s);
  }
};

struct Reader {
  const std::vector<std::uint8_t>& bytes;
  std::size_t pos = 0;
  void need(std::size_t n) {
    if (pos + n > bytes.size()) throw CheckpointError("truncated checkpoint container");
  }
  std::uint8_t u8() {
    need(1);
    return bytes[pos++];
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes[pos++]) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes[pos++]) << (8 * i);
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str() {
    std::uint32_t n = u32();
    need(n);
    std::string s(reinterpret_cast<const char*>(&bytes[pos]), n);
    pos += n;
    return s;
  }
  std::vector<std::string> str_list() {
    std::uint32_t n = u32();
    std::vector<std::string> out;
    out.reserve(n);
    for (std::uint32_t i = 0; i < n; ++i) out.push_back(str());
    return out;
  }
};

void index_from_list(const std::vector<std::string>& list,
                     std::unordered_map<std::string, int>& index) {
  index.clear();
  for (std::size_t i = 0; i < list.size(); ++i) index.emplace(list[i], static_cast<int>(i));
}

}  // namespace

std::vector<std::uint8_t> save_checkpoint(const ParserModel& model) {
  Writer w;
  w.bytes.insert(w.bytes.end(), kMagic, kMagic + 4);
  w.u32(kVersion);

  const HyperParams& hp = model.hp;
  for (int v : {hp.word_emb_dim, hp.char_emb_dim, hp.pos_emb_dim, hp.lstm_hidden, hp.lstm_depth,
                hp.arc_mlp, hp.rel_mlp, hp.mlp_depth})
    w.u32(static_cast<std::uint32_t>(v));
  for (double v : {hp.word_dropout, hp.char_dropout, hp.lstm_dropout, hp.arc_mlp_dropout,
                   hp.rel_mlp_dropout, hp.learning_rate})
    w.f64(v);
  w.u8(hp.input_mode == InputMode::Char ? 0 : 1);

  w.str_list(model.vocab.words);
  w.str_list(model.vocab.chars);
  w.str_list(model.vocab.pos_tags);
  std::vector<std::string> rels(relation_names().begin(), relation_names().end());
  w.str_list(rels);

  w.u32(static_cast<std::uint32_t>(model.params.size()));
  for (const auto& [name, tensor] : model.params) {
    w.str(name);
    w.u32(static_cast<std::uint32_t>(tensor.rank()));
    for (int d : tensor.shape) w.u32(static_cast<std::uint32_t>(d));
    for (double v : tensor.data) w.f32(static_cast<float>(v));
  }
  return w.bytes;
}

ParserModel load_checkpoint(const std::vector<std::uint8_t>& bytes) {
  Reader r{bytes};
  r.need(4);
  if (std::memcmp(&bytes[0], kMagic, 4) != 0)
    throw CheckpointError("bad checkpoint magic (expected DDPM)");
  r.pos = 4;
  std::uint32_t version = r.u32();
  if (version != kVersion)
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));

  ParserModel model;
  HyperParams& hp = model.hp;
  hp.word_emb_dim = static_cast<int>(r.u32());
  hp.char_emb_dim = static_cast<int>(r.u32());
  hp.pos_emb_dim = static_cast<int>(r.u32());
  hp.lstm_hidden = static_cast<int>(r.u32());
  hp.lstm_depth = static_cast<int>(r.u32());
  hp.arc_mlp = static_cast<int>(r.u32());
  hp.rel_mlp = static_cast<int>(r.u32());
  hp.mlp_depth = static_cast<int>(r.u32());
  hp.word_dropout = r.f64();
  hp.char_dropout = r.f64();
  hp.lstm_dropout = r.f64();
  hp.arc_mlp_dropout = r.f64();
  hp.rel_mlp_dropout = r.f64();
  hp.learning_rate = r.f64();
  hp.input_mode = r.u8() == 0 ? InputMode::Char : InputMode::Pos;

  model.vocab.words = r.str_list();
  model.vocab.chars = r.str_list();
  model.vocab.pos_tags = r.str_list();
  std::vector<std::string> rels = r.str_list();
  if (rels.size() != kRelationCount)
    throw CheckpointError("relation table size mismatch");
  for (int i = 0; i < kRelationCount; ++i)
    if (rels[i] != relation_names()[i]) throw CheckpointError("relation table mismatch");
  index_from_list(model.vocab.words, model.vocab.word_index);
  index_from_list(model.vocab.chars, model.vocab.char_index);
  index_from_list(model.vocab.pos_tags, model.vocab.pos_index);

  // Materialize the expected parameter set, then require the stored
  // table to match it name-for-name and shape-for-shape.
  std::mt19937_64 rng(0);
  model.init(rng);

  std::uint32_t count = r.u32();
  if (count != model.params.size())
    throw CheckpointError("tensor table has " + std::to_string(count) + " entries, expected " +
                          std::to_string(model.params.size()));
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = r.str();
    auto it = model.params.find(name);
    if (it == model.params.end()) throw CheckpointError("unexpected tensor '" + name + "'");
    Tensor& t = it->second;
    std::uint32_t rank = r.u32();
    if (rank != static_cast<std::uint32_t>(t.rank()))
      throw CheckpointError("tensor '" + name + "': rank mismatch");
    for (int d = 0; d < t.rank(); ++d)
      if (static_cast<int>(r.u32()) != t.shape[d])
        throw CheckpointError("tensor '" + name + "': shape mismatch");
    for (double& v : t.data) v = static_cast<double>(r.f32());
  }
  if (r.pos != bytes.size()) throw CheckpointError("trailing bytes after tensor table");
  return model;
}

void save_checkpoint_file(const ParserModel& model, const std::string& path) {
  std::vector<std::uint8_t> bytes = save_checkpoint(model);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot open '" + path + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw CheckpointError("write failed for '" + path + "'");
}

ParserModel load_checkpoint_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open '" + path + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return load_checkpoint(bytes);
}

// ---------------------------------------------------------------------------
// Training loop

namespace {

void accumulate(GradientMap& into, const GradientMap& grads) {
  for (const auto& [name, g] : grads) {
    auto it = into.find(name);
    if (it == into.end())
      into.emplace(name, g);
    else
      for (std::size_t i = 0; i < g.data.size(); ++i) it->second.data[i] += g.data[i];
  }
}

void clip_by_norm(GradientMap& grads, double max_norm) {
  double sq = 0.0;
  for (const auto& [name, g] : grads)
    for (double v : g.data) sq += v * v;
  double norm = std::sqrt(sq);
  if (norm <= max_norm) return;
  double factor = max_norm / norm;
  for (auto& [name, g] : grads)
    for (double& v : g.data) v *= factor;
}

void shuffle_indices(std::vector<int>& order, std::mt19937_64& rng) {
  for (std::size_t i = order.size(); i > 1; --i) {
    std::size_t j = rng() % i;
    std::swap(order[i - 1], order[j]);
  }
}

Sentence predict_sentence(const ParserModel& model, const Sentence& input) {
  DecodeResult d = decode(score_sentence(model, input));
  Sentence out = input;
  for (int i = 0; i < out.size(); ++i) {
    out.tokens[i].head = d.heads[i];
    out.tokens[i].rel = d.rels[i];
  }
  return out;
}

}  // namespace

std::vector<Sentence> parse_treebank(const ParserModel& model,
                                     const std::vector<Sentence>& input, int threads) {
  std::vector<Sentence> output(input.size());
  if (threads <= 1) {
    for (std::size_t i = 0; i < input.size(); ++i) output[i] = predict_sentence(model, input[i]);
    return output;
  }
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    while (true) {
      std::size_t i = next.fetch_add(1);
      if (i >= input.size()) break;
      output[i] = predict_sentence(model, input[i]);
    }
  };
  std::vector<std::thread> pool;
  for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
  for (std::thread& t : pool) t.join();
  return output;
}

TrainResult train(const TrainConfig& config, const std::vector<Sentence>& train_set,
                  const std::vector<Sentence>& dev_set,
                  const std::function<void(const EpochLog&)>& on_epoch) {
  config.check();
  if (train_set.empty()) throw std::invalid_argument("train: empty training set");

  std::mt19937_64 rng(config.seed);
  ParserModel model;
  model.hp = config.hp;
  model.vocab = build_vocab(train_set, config.min_freq);
  model.init(rng);

  AdamState adam;
  TrainResult result;
  result.best_model = model;
  result.best_dev_las = -1.0;
  int stall = 0;

  std::vector<int> order(train_set.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    shuffle_indices(order, rng);
    double loss_sum = 0.0;
    std::size_t cursor = 0;
    while (cursor < order.size()) {
      GradientMap batch_grads;
      std::size_t batch_end = std::min(cursor + static_cast<std::size_t>(config.batch_size),
                                       order.size());
      for (; cursor < batch_end; ++cursor) {
        const Sentence& sentence = train_set[order[cursor]];
        ForwardPass fp(model, &rng);
        Tape::Id loss_node = forward_loss(fp, sentence);
        double loss = fp.tape.value(loss_node).data[0];
        if (!std::isfinite(loss))
          throw NumericError("non-finite loss at epoch " + std::to_string(epoch));
        loss_sum += loss;
        accumulate(batch_grads, fp.tape.backward(loss_node));
      }
      if (config.clip_gradients) clip_by_norm(batch_grads, config.clip_norm);
      adam_step(model.params, batch_grads, adam, config.hp.learning_rate);
    }

    EpochLog log;
    log.epoch = epoch;
    log.mean_loss = loss_sum / static_cast<double>(train_set.size());

    if (!dev_set.empty()) {
      EvalResult dev = attachment_scores(dev_set, parse_treebank(model, dev_set));
      log.dev_uas = dev.uas;
      log.dev_las = dev.las;
      if (dev.las > result.best_dev_las) {
        result.best_dev_las = dev.las;
        result.best_epoch = epoch;
        result.best_model = model;
        stall = 0;
      } else {
        ++stall;
      }
    }
    result.epochs.push_back(log);
    if (on_epoch) on_epoch(log);
    if (!dev_set.empty() && stall >= config.patience) break;
  }

  if (dev_set.empty()) {
    result.best_model = model;
    result.best_epoch = config.epochs;
  }
  if (!config.checkpoint_path.empty())
    save_checkpoint_file(result.best_model, config.checkpoint_path);
  return result;
}

}  // namespace ddp
