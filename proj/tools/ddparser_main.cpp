#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "ddp/conllx.hpp"
#include "ddp/evaluator.hpp"
#include "ddp/model.hpp"
#include "ddp/trainer.hpp"

namespace {

// Exit codes: 0 ok, 1 usage, 2 data, 3 numeric, 4 model, 5 validation.
constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumeric = 3;
constexpr int kExitModel = 4;
constexpr int kExitValidation = 5;

std::vector<ddp::Sentence> read_treebank(const std::string& path, bool allow_unannotated = false) {
  std::ifstream in(path);
  if (!in) throw ddp::ParseError(0, "cannot open '" + path + "'");
  return ddp::parse_conllx(in, allow_unannotated);
}

bool parse_config_value(ddp::TrainConfig& config, const std::string& key,
                        const std::string& value) {
  ddp::HyperParams& hp = config.hp;
  auto as_int = [&](int& slot) { slot = std::stoi(value); };
  auto as_double = [&](double& slot) { slot = std::stod(value); };
  if (key == "word_emb_dim") as_int(hp.word_emb_dim);
  else if (key == "char_emb_dim") as_int(hp.char_emb_dim);
  else if (key == "pos_emb_dim") as_int(hp.pos_emb_dim);
  else if (key == "lstm_hidden") as_int(hp.lstm_hidden);
  else if (key == "lstm_depth") as_int(hp.lstm_depth);
  else if (key == "arc_mlp") as_int(hp.arc_mlp);
  else if (key == "rel_mlp") as_int(hp.rel_mlp);
  else if (key == "mlp_depth") as_int(hp.mlp_depth);
  else if (key == "word_dropout") as_double(hp.word_dropout);
  else if (key == "char_dropout") as_double(hp.char_dropout);
  else if (key == "lstm_dropout") as_double(hp.lstm_dropout);
  else if (key == "arc_mlp_dropout") as_double(hp.arc_mlp_dropout);
  else if (key == "rel_mlp_dropout") as_double(hp.rel_mlp_dropout);
  else if (key == "learning_rate") as_double(hp.learning_rate);
  else if (key == "input_mode") {
    if (value == "char") hp.input_mode = ddp::InputMode::Char;
    else if (value == "pos") hp.input_mode = ddp::InputMode::Pos;
    else throw std::invalid_argument("input_mode must be 'char' or 'pos'");
  } else if (key == "epochs") as_int(config.epochs);
  else if (key == "batch_size") as_int(config.batch_size);
  else if (key == "min_freq") as_int(config.min_freq);
  else if (key == "patience") as_int(config.patience);
  else if (key == "clip_gradients") config.clip_gradients = (value == "1" || value == "true");
  else if (key == "clip_norm") as_double(config.clip_norm);
  else if (key == "seed") config.seed = std::stoull(value);
  else return false;
  return true;
}

void load_config_file(ddp::TrainConfig& config, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open config file '" + path + "'");
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config line " + std::to_string(line_no) +
                                  ": expected key=value");
    std::string key = line.substr(0, eq);
    std::string value = line.substr(eq + 1);
    if (!parse_config_value(config, key, value))
      throw std::invalid_argument("unknown config key '" + key + "'");
  }
}

int cmd_train(const std::string& train_path, const std::string& dev_path,
              const std::string& model_path, const std::string& config_path,
              std::uint64_t seed) {
  ddp::TrainConfig config;
  config.seed = seed;
  if (!config_path.empty()) load_config_file(config, config_path);
  config.checkpoint_path = model_path;

  std::vector<ddp::Sentence> train_set = read_treebank(train_path);
  std::vector<ddp::Sentence> dev_set;
  if (!dev_path.empty()) dev_set = read_treebank(dev_path);

  std::cout << std::fixed << std::setprecision(6);
  ddp::TrainResult result = ddp::train(config, train_set, dev_set, [&](const ddp::EpochLog& log) {
    std::cout << "epoch=" << log.epoch << " loss=" << log.mean_loss;
    if (!dev_set.empty())
      std::cout << " dev_uas=" << log.dev_uas << " dev_las=" << log.dev_las;
    std::cout << "\n";
  });

  ddp::EvalResult on_train = ddp::attachment_scores(
      train_set, ddp::parse_treebank(result.best_model, train_set));
  std::cout << "train_uas=" << on_train.uas << " train_las=" << on_train.las << "\n";
  std::cout << "model written to " << model_path << "\n";
  return kExitOk;
}

int cmd_parse(const std::string& model_path, const std::string& input_path,
              const std::string& output_path, int threads) {
  ddp::ParserModel model = ddp::load_checkpoint_file(model_path);
  std::vector<ddp::Sentence> input = read_treebank(input_path, /*allow_unannotated=*/true);
  std::vector<ddp::Sentence> parsed = ddp::parse_treebank(model, input, threads);
  std::ofstream out(output_path, std::ios::binary);
  if (!out) {
    std::cerr << "cannot open '" << output_path << "' for writing\n";
    return kExitData;
  }
  ddp::write_conllx(parsed, out);
  return kExitOk;
}

int cmd_evaluate(const std::string& gold_path, const std::string& pred_path,
                 bool exclude_punct) {
  std::vector<ddp::Sentence> gold = read_treebank(gold_path);
  std::vector<ddp::Sentence> pred = read_treebank(pred_path);
  ddp::EvalResult result = ddp::attachment_scores(gold, pred, exclude_punct);
  std::cout << result.report() << result.key_values();
  return kExitOk;
}

int cmd_validate(const std::string& input_path) {
  std::vector<ddp::Sentence> sentences = read_treebank(input_path);
  std::int64_t violations = 0;
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    ddp::ValidationReport report = ddp::validate(sentences[i], static_cast<int>(i));
    for (const ddp::Violation& v : report.violations) {
      ++violations;
      std::cout << "sentence " << i + 1 << " token " << v.token_id << " [" << v.rule << "] "
                << v.message << "\n";
    }
  }
  std::cout << sentences.size() << " sentences, " << violations << " violations\n";
  return violations == 0 ? kExitOk : kExitValidation;
}

int cmd_stats(const std::string& input_path) {
  ddp::TreebankStats stats = ddp::treebank_stats(read_treebank(input_path));
  std::cout << "sentences=" << stats.sentence_count << "\n";
  std::cout << "tokens=" << stats.token_count << "\n";
  std::cout << std::fixed << std::setprecision(6)
            << "projective_fraction=" << stats.projective_fraction << "\n";
  std::cout << "relation_histogram:\n";
  for (const auto& [rel, count] : stats.relation_histogram)
    std::cout << "  " << ddp::to_string(rel) << "\t" << count << "\n";
  std::cout << "length_histogram:\n";
  for (const auto& [len, count] : stats.length_histogram)
    std::cout << "  " << len << "\t" << count << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Graph-based dependency parser with biaffine scoring and Eisner decoding"};
  app.require_subcommand(1);

  std::string train_path, dev_path, model_path, config_path, input_path, output_path;
  std::string gold_path, pred_path;
  std::uint64_t seed = 1;
  int threads = 1;
  bool exclude_punct = false;

  CLI::App* train = app.add_subcommand("train", "Train a model on a CoNLL-X treebank");
  train->add_option("--train", train_path, "training treebank")->required();
  train->add_option("--dev", dev_path, "development treebank (enables early stopping)");
  train->add_option("--model", model_path, "output checkpoint path")->required();
  train->add_option("--config", config_path, "key=value configuration file");
  train->add_option("--seed", seed, "random seed");

  CLI::App* parse = app.add_subcommand("parse", "Parse a treebank with a trained model");
  parse->add_option("--model", model_path, "checkpoint path")->required();
  parse->add_option("--input", input_path, "input CoNLL-X file")->required();
  parse->add_option("--output", output_path, "output CoNLL-X file")->required();
  parse->add_option("--threads", threads, "concurrent sentences")->check(CLI::PositiveNumber);

  CLI::App* evaluate = app.add_subcommand("evaluate", "Score predictions against gold");
  evaluate->add_option("--gold", gold_path, "gold treebank")->required();
  evaluate->add_option("--pred", pred_path, "predicted treebank")->required();
  evaluate->add_flag("--exclude-punct", exclude_punct, "drop punctuation MT tokens");

  CLI::App* validate = app.add_subcommand("validate", "Check treebank invariants");
  validate->add_option("--input", input_path, "input CoNLL-X file")->required();

  CLI::App* stats = app.add_subcommand("stats", "Print treebank statistics");
  stats->add_option("--input", input_path, "input CoNLL-X file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (train->parsed()) return cmd_train(train_path, dev_path, model_path, config_path, seed);
    if (parse->parsed()) return cmd_parse(model_path, input_path, output_path, threads);
    if (evaluate->parsed()) return cmd_evaluate(gold_path, pred_path, exclude_punct);
    if (validate->parsed()) return cmd_validate(input_path);
    if (stats->parsed()) return cmd_stats(input_path);
  } catch (const ddp::ParseError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const ddp::EvalError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const ddp::CheckpointError& e) {
    std::cerr << "model error: " << e.what() << "\n";
    return kExitModel;
  } catch (const ddp::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const ddp::ShapeError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}
