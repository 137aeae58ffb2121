#pragma once

#include "s2g/corpus.hpp"
#include "s2g/metrics.hpp"
#include "s2g/reader.hpp"
#include "s2g/retriever.hpp"

#include "json.hpp"

#include <cstdint>
#include <functional>
#include <memory>
#include <ostream>
#include <string>
#include <vector>

namespace s2g {

nlohmann::json encoder_config_to_json(const EncoderConfig& c);
/// vocab_size is not read from configs; it comes from the training vocab.
EncoderConfig encoder_config_from_json(const nlohmann::json& j);

struct TrainingConfig {
  double lr = 1e-3;
  int batch_size = 16;
  int epochs = 5;
  std::uint64_t seed = 42;

  void validate() const;
};

/// One document with sections "encoder", "retriever", "reader", "training"
/// and optional "data" paths. Unknown keys are errors.
struct RunConfig {
  EncoderConfig encoder;
  RetrieverConfig retriever;
  ReaderConfig reader;
  TrainingConfig training;
  std::string train_path;
  std::string dev_path;

  void validate() const;
  nlohmann::json to_json() const;
  static RunConfig from_json(const nlohmann::json& j);
  static RunConfig load(const std::string& path);
};

/// Paragraph document-frequency share above which a word counts as
/// frequent (function words, common suffixes).
inline constexpr double kFrequentWordShare = 0.05;

/// Vocabulary over questions, titles and sentences, in corpus order, with
/// frequent words marked.
Vocab build_vocab(const std::vector<MhrcExample>& examples);

enum class ModelKind { Retriever, Reader };
std::string to_string(ModelKind kind);

/// A trainable component: its config, vocabulary and parameters.
class Model {
 public:
  Model(ModelKind kind, RunConfig config, Vocab vocab);
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  ModelKind kind() const { return kind_; }
  const RunConfig& config() const { return config_; }
  const Vocab& vocab() const { return vocab_; }
  ParameterStore& store() { return store_; }
  const ParameterStore& store() const { return store_; }
  const RetrieverParams& retriever() const;
  const ReaderParams& reader() const;

 private:
  ModelKind kind_;
  RunConfig config_;
  Vocab vocab_;
  ParameterStore store_;
  std::unique_ptr<RetrieverParams> retriever_;
  std::unique_ptr<ReaderParams> reader_;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// "S2G1", u32 version, u64 header length, JSON header (kind, config,
/// vocab), u32 parameter count, then per parameter: u32 name length, name,
/// u64 rows, u64 cols, rows*cols little-endian f64 values.
void save_checkpoint(const std::string& path, const Model& model);
std::unique_ptr<Model> load_checkpoint(const std::string& path);

/// Called once per epoch with a JSON record; the CLI prints them as lines.
using LogSink = std::function<void(const nlohmann::json&)>;

std::unique_ptr<Model> train_model(ModelKind kind, const RunConfig& config, const std::vector<MhrcExample>& train,
                                   const std::vector<MhrcExample>* dev, const LogSink& log = {});

/// Gold paragraphs in reader order: the answer paragraph first, then by
/// context position.
std::vector<int> gold_reader_order(const MhrcExample& ex);

/// Unlabelled candidates straight from the context.
std::vector<ParagraphCandidate> context_candidates(const MhrcExample& ex);

/// Retrieval EM/F1/Gold on the top-2 selection of the configured stages.
RetrievalScores evaluate_retriever(const Model& retriever, const std::vector<MhrcExample>& examples, int threads = 1);

/// Reader metrics with gold paragraphs as input.
MetricReport evaluate_reader_gold(const Model& reader, const std::vector<MhrcExample>& examples, int threads = 1);

struct PredictionSet {
  nlohmann::json document;  // {"answer": {...}, "sp": {...}}
  std::vector<nlohmann::json> retrieval_dump;
};

PredictionSet predict(const Model& retriever, const Model& reader, const std::vector<MhrcExample>& examples,
                      int threads = 1);

/// Scores a prediction document against gold examples. Throws
/// ValidationError listing ids missing from (or unknown to) the predictions.
/// `retrieval_dump` lines, when given, add retrieval EM/F1/Gold.
MetricReport evaluate_predictions(const nlohmann::json& predictions, const std::vector<MhrcExample>& gold,
                                  const std::vector<nlohmann::json>* retrieval_dump = nullptr);

/// Runs fn(i) for i in [0, n) on up to `threads` workers.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn);

}  // namespace s2g
