#include "s2g/pipeline.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <thread>

namespace s2g {

namespace {

template <typename T, typename F>
void read_key(const std::string& section, const std::string& key, const nlohmann::json& value, T& out, F check) {
  try {
    out = value.get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(section + " config key '" + key + "': " + e.what());
  }
  check(out);
}

template <typename T>
void read_key(const std::string& section, const std::string& key, const nlohmann::json& value, T& out) {
  read_key(section, key, value, out, [](const T&) {});
}

void require_object(const nlohmann::json& j, const std::string& what) {
  if (!j.is_object()) throw ValidationError(what + " must be an object");
}

}  // namespace

nlohmann::json encoder_config_to_json(const EncoderConfig& c) {
  return {{"vocab_size", c.vocab_size}, {"d_model", c.d_model}, {"n_heads", c.n_heads},
          {"n_layers", c.n_layers},     {"d_ff", c.d_ff},       {"max_len", c.max_len},
          {"dropout_rate", c.dropout_rate}, {"match_features", c.match_features}};
}

EncoderConfig encoder_config_from_json(const nlohmann::json& j) {
  require_object(j, "encoder config");
  EncoderConfig c;
  for (const auto& [key, value] : j.items()) {
    if (key == "vocab_size") read_key("encoder", key, value, c.vocab_size);
    else if (key == "d_model") read_key("encoder", key, value, c.d_model);
    else if (key == "n_heads") read_key("encoder", key, value, c.n_heads);
    else if (key == "n_layers") read_key("encoder", key, value, c.n_layers);
    else if (key == "d_ff") read_key("encoder", key, value, c.d_ff);
    else if (key == "max_len") read_key("encoder", key, value, c.max_len);
    else if (key == "dropout_rate") read_key("encoder", key, value, c.dropout_rate);
    else if (key == "match_features") read_key("encoder", key, value, c.match_features);
    else throw ValidationError("unknown encoder config key '" + key + "'");
  }
  EncoderConfig probe = c;
  probe.vocab_size = std::max(probe.vocab_size, 1);
  probe.validate();
  return c;
}

void TrainingConfig::validate() const {
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ValidationError("training.lr must be positive");
  if (batch_size < 1) throw ValidationError("training.batch_size must be at least 1");
  if (epochs < 0) throw ValidationError("training.epochs must be non-negative");
}

void RunConfig::validate() const {
  EncoderConfig probe = encoder;
  probe.vocab_size = std::max(probe.vocab_size, 1);
  probe.validate();
  retriever.validate();
  reader.validate();
  training.validate();
  for (const auto* path : {&train_path, &dev_path}) {
    if (!path->empty() && !std::filesystem::exists(*path)) throw IoError("data path does not exist: " + *path);
  }
}

nlohmann::json RunConfig::to_json() const {
  nlohmann::json j;
  j["encoder"] = encoder_config_to_json(encoder);
  j["retriever"] = retriever.to_json();
  j["reader"] = reader.to_json();
  j["training"] = {{"lr", training.lr}, {"batch_size", training.batch_size}, {"epochs", training.epochs},
                   {"seed", training.seed}};
  j["data"] = {{"train", train_path}, {"dev", dev_path}};
  return j;
}

RunConfig RunConfig::from_json(const nlohmann::json& j) {
  require_object(j, "run config");
  RunConfig c;
  for (const auto& [key, value] : j.items()) {
    if (key == "encoder") {
      c.encoder = encoder_config_from_json(value);
    } else if (key == "retriever") {
      c.retriever = RetrieverConfig::from_json(value);
    } else if (key == "reader") {
      c.reader = ReaderConfig::from_json(value);
    } else if (key == "training") {
      require_object(value, "training config");
      for (const auto& [k, v] : value.items()) {
        if (k == "lr") read_key("training", k, v, c.training.lr);
        else if (k == "batch_size") read_key("training", k, v, c.training.batch_size);
        else if (k == "epochs") read_key("training", k, v, c.training.epochs);
        else if (k == "seed") read_key("training", k, v, c.training.seed);
        else throw ValidationError("unknown training config key '" + k + "'");
      }
    } else if (key == "data") {
      require_object(value, "data config");
      for (const auto& [k, v] : value.items()) {
        if (k == "train") read_key("data", k, v, c.train_path);
        else if (k == "dev") read_key("data", k, v, c.dev_path);
        else throw ValidationError("unknown data config key '" + k + "'");
      }
    } else {
      throw ValidationError("unknown config section '" + key + "'");
    }
  }
  c.training.validate();
  return c;
}

RunConfig RunConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError("config " + path + ": " + e.what());
  }
  RunConfig c = from_json(j);
  c.validate();
  return c;
}

Vocab build_vocab(const std::vector<MhrcExample>& examples) {
  Vocab vocab;
  std::map<int, std::size_t> df;
  std::size_t paragraphs = 0;
  for (const auto& ex : examples) {
    vocab.add_corpus({ex.question});
    for (const auto& p : ex.context) {
      vocab.add_corpus({p.title});
      vocab.add_corpus(p.sentences);
      std::set<int> seen;
      for (const auto& s : p.sentences)
        for (int id : tokenize(s, vocab)) seen.insert(id);
      for (int id : seen) ++df[id];
      ++paragraphs;
    }
  }
  for (const auto& [id, count] : df)
    if (static_cast<double>(count) > kFrequentWordShare * static_cast<double>(paragraphs)) vocab.mark_frequent(id);
  return vocab;
}

std::string to_string(ModelKind kind) { return kind == ModelKind::Retriever ? "retriever" : "reader"; }

Model::Model(ModelKind kind, RunConfig config, Vocab vocab)
    : kind_(kind), config_(std::move(config)), vocab_(std::move(vocab)) {
  config_.encoder.vocab_size = vocab_.size();
  config_.validate();
  Rng rng(config_.training.seed);
  if (kind_ == ModelKind::Retriever) {
    retriever_ = std::make_unique<RetrieverParams>(store_, config_.encoder, rng);
  } else {
    reader_ = std::make_unique<ReaderParams>(store_, config_.encoder, config_.reader, rng);
  }
}

const RetrieverParams& Model::retriever() const {
  if (!retriever_) throw ValidationError("model is a reader, not a retriever");
  return *retriever_;
}

const ReaderParams& Model::reader() const {
  if (!reader_) throw ValidationError("model is a retriever, not a reader");
  return *reader_;
}

// ---------------------------------------------------------------- checkpoint

namespace {

constexpr char kMagic[4] = {'S', '2', 'G', '1'};

template <typename T>
void write_le(std::ostream& out, T v) {
  unsigned char bytes[sizeof(T)];
  for (std::size_t i = 0; i < sizeof(T); ++i) bytes[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(bytes), sizeof bytes);
}

template <typename T>
T read_le(std::istream& in, const std::string& path) {
  unsigned char bytes[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof bytes)) throw IoError("checkpoint " + path + " is truncated");
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(bytes[i]) << (8 * i);
  return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const Model& model) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint " + path);
  nlohmann::json header;
  header["kind"] = to_string(model.kind());
  header["config"] = model.config().to_json();
  header["vocab"] = model.vocab().tokens();
  header["frequent"] = model.vocab().frequent_ids();
  const std::string text = header.dump();

  out.write(kMagic, 4);
  write_le<std::uint32_t>(out, kCheckpointVersion);
  write_le<std::uint64_t>(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  const auto& names = model.store().names();
  const auto& tensors = model.store().tensors();
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(names.size()));
  for (std::size_t i = 0; i < names.size(); ++i) {
    const Matrix& m = tensors[i].value();
    write_le<std::uint32_t>(out, static_cast<std::uint32_t>(names[i].size()));
    out.write(names[i].data(), static_cast<std::streamsize>(names[i].size()));
    write_le<std::uint64_t>(out, static_cast<std::uint64_t>(m.rows()));
    write_le<std::uint64_t>(out, static_cast<std::uint64_t>(m.cols()));
    for (Index k = 0; k < m.size(); ++k) write_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(m.data()[k]));
  }
  if (!out) throw IoError("failed writing checkpoint " + path);
}

std::unique_ptr<Model> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path);
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
    throw ValidationError("checkpoint " + path + " has a bad magic number");
  const auto version = read_le<std::uint32_t>(in, path);
  if (version != kCheckpointVersion)
    throw ValidationError("checkpoint " + path + " has format version " + std::to_string(version) + ", expected " +
                          std::to_string(kCheckpointVersion));
  const auto header_len = read_le<std::uint64_t>(in, path);
  if (header_len > (1u << 30)) throw ValidationError("checkpoint " + path + " header is implausibly large");
  std::string text(header_len, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(header_len))) throw IoError("checkpoint " + path + " is truncated");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError("checkpoint " + path + " header: " + e.what());
  }
  const std::string kind_name = header.value("kind", "");
  if (kind_name != "retriever" && kind_name != "reader")
    throw ValidationError("checkpoint " + path + " has unknown kind '" + kind_name + "'");
  const ModelKind kind = kind_name == "retriever" ? ModelKind::Retriever : ModelKind::Reader;
  RunConfig config = RunConfig::from_json(header.at("config"));
  config.train_path.clear();
  config.dev_path.clear();
  Vocab vocab;
  try {
    vocab = Vocab::from_tokens(header.at("vocab").get<std::vector<std::string>>());
    for (int id : header.value("frequent", std::vector<int>{})) vocab.mark_frequent(id);
  } catch (const std::exception& e) {
    throw ValidationError("checkpoint " + path + " vocabulary: " + e.what());
  }
  auto model = std::make_unique<Model>(kind, config, std::move(vocab));

  const auto count = read_le<std::uint32_t>(in, path);
  if (count != model->store().size())
    throw ValidationError("checkpoint " + path + " holds " + std::to_string(count) + " parameters, model expects " +
                          std::to_string(model->store().size()));
  for (std::uint32_t p = 0; p < count; ++p) {
    const auto name_len = read_le<std::uint32_t>(in, path);
    std::string name(name_len, '\0');
    if (!in.read(name.data(), name_len)) throw IoError("checkpoint " + path + " is truncated");
    if (!model->store().contains(name)) throw ValidationError("checkpoint " + path + ": unexpected parameter " + name);
    Tensor t = model->store().get(name);
    const auto rows = read_le<std::uint64_t>(in, path);
    const auto cols = read_le<std::uint64_t>(in, path);
    if (static_cast<Index>(rows) != t.rows() || static_cast<Index>(cols) != t.cols())
      throw ValidationError("checkpoint " + path + ": parameter " + name + " has shape " + std::to_string(rows) + "x" +
                            std::to_string(cols) + ", model expects " + shape_string(t.value()));
    Matrix& m = t.mutable_value();
    for (Index k = 0; k < m.size(); ++k) m.data()[k] = std::bit_cast<double>(read_le<std::uint64_t>(in, path));
  }
  return model;
}

// ------------------------------------------------------------------ training

std::vector<int> gold_reader_order(const MhrcExample& ex) {
  const auto labels = paragraph_labels(ex);
  std::vector<int> order;
  for (int pass = 0; pass < 2; ++pass)
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (labels[i].is_relevant && labels[i].has_answer == (pass == 0)) order.push_back(static_cast<int>(i));
  return order;
}

std::vector<ParagraphCandidate> context_candidates(const MhrcExample& ex) {
  std::vector<ParagraphCandidate> out;
  out.reserve(ex.context.size());
  for (const auto& p : ex.context) out.push_back({p.title, p.sentences, std::nullopt, std::nullopt});
  return out;
}

namespace {

std::vector<ParagraphText> pick(const MhrcExample& ex, const std::vector<int>& order) {
  std::vector<ParagraphText> out;
  for (int i : order) out.push_back(ex.context.at(static_cast<std::size_t>(i)));
  return out;
}

std::vector<int> relevant_indices(const std::vector<ParagraphLabels>& labels, bool answer_only) {
  std::vector<int> out;
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (answer_only ? labels[i].has_answer : labels[i].is_relevant) out.push_back(static_cast<int>(i));
  return out;
}

std::optional<Tensor> example_loss(const Model& model, const MhrcExample& ex, const ForwardContext& ctx, Rng& rng) {
  const RunConfig& c = model.config();
  if (model.kind() == ModelKind::Retriever)
    return retriever_training_loss(ex.question, candidates_of(ex), model.retriever(), model.vocab(), c.retriever, ctx);
  std::vector<int> order = gold_reader_order(ex);
  if (order.size() == 2 && uniform01(rng) < 0.5) std::swap(order[0], order[1]);
  const auto paragraphs = pick(ex, order);
  const ReaderInput input = assemble_reader_input(ex.question, paragraphs, model.vocab(), c.reader.k_max,
                                                  model.config().encoder.max_len);
  const auto labels = reader_labels(ex, paragraphs, input);
  if (!labels) return std::nullopt;
  const EvidenceSelection gold_z{labels->sentence_flags};
  const ReaderOutput out = run_reader(input, model.reader(), c.reader, ctx, &gold_z);
  return joint_loss(out, *labels, c.reader);
}

nlohmann::json dev_record(const Model& model, const std::vector<MhrcExample>& dev) {
  if (model.kind() == ModelKind::Retriever) {
    const RetrievalScores r = evaluate_retriever(model, dev);
    return {{"retrieval_em", r.em}, {"retrieval_f1", r.f1}, {"retrieval_gold", r.gold}};
  }
  return evaluate_reader_gold(model, dev).to_json();
}

}  // namespace

std::unique_ptr<Model> train_model(ModelKind kind, const RunConfig& config, const std::vector<MhrcExample>& train,
                                   const std::vector<MhrcExample>* dev, const LogSink& log) {
  auto model = std::make_unique<Model>(kind, config, build_vocab(train));
  const TrainingConfig& tc = model->config().training;
  Adam adam(model->store().tensors(), AdamOptions{tc.lr});
  Rng rng(tc.seed ^ 0x7f4a7c159e3779b9ULL);
  const ForwardContext ctx{true, &rng, model->config().encoder.dropout_rate};
  const auto start = std::chrono::steady_clock::now();

  std::vector<std::size_t> order(train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  for (int epoch = 1; epoch <= tc.epochs; ++epoch) {
    shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    std::size_t used = 0, skipped = 0, pending = 0;
    for (std::size_t step = 0; step < order.size(); ++step) {
      const MhrcExample& ex = train[order[step]];
      std::optional<Tensor> loss;
      try {
        loss = example_loss(*model, ex, ctx, rng);
      } catch (const std::domain_error& e) {
        throw ValidationError("training diverged: non-finite activations at epoch " + std::to_string(epoch) +
                              " on example '" + ex.id + "' (" + e.what() + ")");
      }
      if (!loss) {
        ++skipped;
      } else {
        const double value = loss->item();
        if (!std::isfinite(value))
          throw ValidationError("training diverged: non-finite loss at epoch " + std::to_string(epoch) +
                                " on example '" + ex.id + "'");
        backward(scale(*loss, 1.0 / tc.batch_size));
        total += value;
        ++used;
        ++pending;
      }
      if (pending > 0 && (pending == static_cast<std::size_t>(tc.batch_size) || step + 1 == order.size())) {
        adam.step();
        pending = 0;
        for (std::size_t i = 0; i < model->store().size(); ++i)
          if (!model->store().tensors()[i].value().allFinite())
            throw ValidationError("training diverged: parameter " + model->store().names()[i] +
                                  " became non-finite at epoch " + std::to_string(epoch));
      }
    }
    if (log) {
      nlohmann::json rec{{"event", "epoch"},
                         {"task", to_string(kind)},
                         {"epoch", epoch},
                         {"loss", used ? total / static_cast<double>(used) : 0.0},
                         {"examples", used},
                         {"skipped", skipped}};
      if (dev && !dev->empty()) rec["dev"] = dev_record(*model, *dev);
      rec["seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      log(rec);
    }
  }
  return model;
}

// ---------------------------------------------------------------- evaluation

void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(std::max(threads, 1)), std::max<std::size_t>(n, 1));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < n; i += workers) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

RetrievalScores evaluate_retriever(const Model& retriever, const std::vector<MhrcExample>& examples, int threads) {
  std::vector<RetrievalScores> scores(examples.size());
  parallel_for(examples.size(), threads, [&](std::size_t i) {
    const auto& ex = examples[i];
    const RetrievalState state =
        retrieve(ex.question, context_candidates(ex), retriever.retriever(), retriever.vocab(), retriever.config().retriever);
    const auto labels = paragraph_labels(ex);
    scores[i] = retrieval_metrics({state.selected->first, state.selected->second}, relevant_indices(labels, false),
                                  relevant_indices(labels, true));
  });
  MetricAccumulator acc;
  for (const auto& s : scores) acc.add_retrieval(s);
  const MetricReport rep = acc.report();
  return rep.retrieval_em ? RetrievalScores{*rep.retrieval_em, *rep.retrieval_f1, *rep.retrieval_gold}
                          : RetrievalScores{};
}

namespace {

Prediction read(const Model& reader, const MhrcExample& ex, const std::vector<int>& order) {
  const auto paragraphs = pick(ex, order);
  const ReaderConfig& rc = reader.config().reader;
  const ReaderInput input =
      assemble_reader_input(ex.question, paragraphs, reader.vocab(), rc.k_max, reader.config().encoder.max_len);
  NoGradGuard guard;
  const ReaderOutput out = run_reader(input, reader.reader(), rc, ForwardContext{});
  return decode_prediction(out, input, paragraphs, rc);
}

}  // namespace

MetricReport evaluate_reader_gold(const Model& reader, const std::vector<MhrcExample>& examples, int threads) {
  std::vector<Prediction> preds(examples.size());
  parallel_for(examples.size(), threads,
               [&](std::size_t i) { preds[i] = read(reader, examples[i], gold_reader_order(examples[i])); });
  MetricAccumulator acc;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const auto& ex = examples[i];
    const std::set<SupportingFact> gold(ex.supporting_facts.begin(), ex.supporting_facts.end());
    acc.add(answer_em_f1(preds[i].answer_text, ex.answer), sup_em_f1(preds[i].supporting_facts, gold));
  }
  return acc.report();
}

PredictionSet predict(const Model& retriever, const Model& reader, const std::vector<MhrcExample>& examples,
                      int threads) {
  if (retriever.kind() != ModelKind::Retriever) throw ValidationError("--retriever checkpoint holds a reader");
  if (reader.kind() != ModelKind::Reader) throw ValidationError("--reader checkpoint holds a retriever");
  std::vector<Prediction> preds(examples.size());
  std::vector<nlohmann::json> dump(examples.size());
  parallel_for(examples.size(), threads, [&](std::size_t i) {
    const auto& ex = examples[i];
    std::vector<int> order;
    if (ex.context.size() < 2) {
      for (std::size_t p = 0; p < ex.context.size(); ++p) order.push_back(static_cast<int>(p));
      dump[i] = {{"id", ex.id}, {"selected", order}};
    } else {
      const RetrievalState state = retrieve(ex.question, context_candidates(ex), retriever.retriever(),
                                            retriever.vocab(), retriever.config().retriever);
      order = {state.selected->first, state.selected->second};
      dump[i] = retrieval_record(ex.id, state);
    }
    preds[i] = read(reader, ex, order);
  });
  PredictionSet set;
  set.document = {{"answer", nlohmann::json::object()}, {"sp", nlohmann::json::object()}};
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const std::string& id = examples[i].id;
    if (set.document["answer"].contains(id)) throw ValidationError("duplicate example id '" + id + "'");
    set.document["answer"][id] = preds[i].answer_text;
    nlohmann::json sp = nlohmann::json::array();
    for (const auto& f : preds[i].supporting_facts) sp.push_back({f.title, f.sentence});
    set.document["sp"][id] = sp;
  }
  set.retrieval_dump = std::move(dump);
  return set;
}

MetricReport evaluate_predictions(const nlohmann::json& predictions, const std::vector<MhrcExample>& gold,
                                  const std::vector<nlohmann::json>* retrieval_dump) {
  if (!predictions.is_object() || !predictions.contains("answer") || !predictions.contains("sp") ||
      !predictions["answer"].is_object() || !predictions["sp"].is_object())
    throw ValidationError("prediction file must hold the objects \"answer\" and \"sp\"");
  const auto& answers = predictions["answer"];
  const auto& sps = predictions["sp"];

  std::map<std::string, std::pair<int, int>> selections;
  if (retrieval_dump) {
    for (const auto& rec : *retrieval_dump) {
      if (!rec.contains("id") || !rec.contains("selected") || rec["selected"].size() != 2)
        throw ValidationError("retrieval dump record without id and a selected pair");
      selections[rec["id"].get<std::string>()] = {rec["selected"][0].get<int>(), rec["selected"][1].get<int>()};
    }
  }

  std::vector<std::string> missing, unknown;
  std::set<std::string> gold_ids;
  for (const auto& ex : gold) {
    gold_ids.insert(ex.id);
    if (!answers.contains(ex.id) || !sps.contains(ex.id) || (retrieval_dump && !selections.count(ex.id)))
      missing.push_back(ex.id);
  }
  for (const auto* m : {&answers, &sps})
    for (const auto& [id, v] : m->items())
      if (!gold_ids.count(id) && std::find(unknown.begin(), unknown.end(), id) == unknown.end()) unknown.push_back(id);
  if (!missing.empty() || !unknown.empty()) {
    std::string msg = "prediction ids do not match gold ids;";
    auto list = [&](const char* what, const std::vector<std::string>& ids) {
      if (ids.empty()) return;
      msg += std::string(" ") + what + ":";
      for (const auto& id : ids) msg += " " + id;
      msg += ";";
    };
    list("missing", missing);
    list("unknown", unknown);
    throw ValidationError(msg);
  }

  MetricAccumulator acc;
  for (const auto& ex : gold) {
    const auto& answer = answers[ex.id];
    if (!answer.is_string()) throw ValidationError("answer for '" + ex.id + "' is not a string");
    std::set<SupportingFact> predicted;
    for (const auto& f : sps[ex.id]) {
      if (!f.is_array() || f.size() != 2 || !f[0].is_string() || !f[1].is_number_integer())
        throw ValidationError("supporting fact for '" + ex.id + "' is not a [title, index] pair");
      predicted.insert({f[0].get<std::string>(), f[1].get<int>()});
    }
    const std::set<SupportingFact> gold_sp(ex.supporting_facts.begin(), ex.supporting_facts.end());
    acc.add(answer_em_f1(answer.get<std::string>(), ex.answer), sup_em_f1(predicted, gold_sp));
    if (retrieval_dump) {
      const auto labels = paragraph_labels(ex);
      const auto [a, b] = selections[ex.id];
      acc.add_retrieval(retrieval_metrics({a, b}, relevant_indices(labels, false), relevant_indices(labels, true)));
    }
  }
  return acc.report();
}

}  // namespace s2g
