#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "ddp/model.hpp"

namespace ddp {

struct CheckpointError : std::runtime_error {
  explicit CheckpointError(const std::string& msg) : std::runtime_error(msg) {}
};

struct TrainConfig {
  HyperParams hp;
  int epochs = 100;
  int batch_size = 16;   // sentences accumulated per optimizer step
  int min_freq = 2;
  std::uint64_t seed = 1;
  int patience = 10;     // epochs without dev-LAS improvement
  bool clip_gradients = false;
  double clip_norm = 5.0;
  std::string checkpoint_path;

  void check() const;
};

struct AdamState {
  std::map<std::string, Tensor> m, v;
  std::int64_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.9;
  double epsilon = 1e-12;
};

// Each id independently replaced by UNK with probability rate; PAD kept.
std::vector<int> apply_token_dropout(const std::vector<int>& ids, double rate,
                                     std::mt19937_64& rng);

void adam_step(std::map<std::string, Tensor>& params, const GradientMap& grads, AdamState& state,
               double lr);

// Checkpoint container: magic "DDPM", version, hyperparameters,
// vocabularies, then a named tensor table (f32 little-endian, row-major).
std::vector<std::uint8_t> save_checkpoint(const ParserModel& model);
ParserModel load_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint_file(const ParserModel& model, const std::string& path);
ParserModel load_checkpoint_file(const std::string& path);

struct EpochLog {
  int epoch = 0;
  double mean_loss = 0.0;
  double dev_uas = 0.0;
  double dev_las = 0.0;
};

struct TrainResult {
  ParserModel best_model;
  std::vector<EpochLog> epochs;
  double best_dev_las = 0.0;
  int best_epoch = 0;
};

// Per-epoch: seeded shuffle, gradient accumulation over batch_size
// sentences per Adam step, then dev LAS; early stop on `patience`
// epochs without improvement. Deterministic for a fixed seed.
TrainResult train(const TrainConfig& config, const std::vector<Sentence>& train_set,
                  const std::vector<Sentence>& dev_set,
                  const std::function<void(const EpochLog&)>& on_epoch = nullptr);

// Parse a treebank with a trained model (gold annotations ignored).
std::vector<Sentence> parse_treebank(const ParserModel& model,
                                     const std::vector<Sentence>& input, int threads = 1);

}  // namespace ddp
