// s2g: gen-data | train | predict | eval
#include "s2g/pipeline.hpp"

#include "CLI11.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>

namespace {

using namespace s2g;

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  out << text;
  if (!out) throw IoError("failed writing " + path);
}

nlohmann::json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(path + ": " + e.what());
  }
}

std::vector<nlohmann::json> read_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::vector<nlohmann::json> lines;
  std::string line;
  for (int n = 1; std::getline(in, line); ++n) {
    if (line.empty()) continue;
    try {
      lines.push_back(nlohmann::json::parse(line));
    } catch (const nlohmann::json::parse_error& e) {
      throw ValidationError(path + " line " + std::to_string(n) + ": " + e.what());
    }
  }
  return lines;
}

struct GenArgs {
  std::string out = "data";
  int n_train = 2000;
  int n_dev = 200;
  std::uint64_t seed = 42;
  double fraction_comparison = 0.2;
  int entity_vocab = 240;
  bool long_paragraphs = false;
};

int cmd_gen_data(const GenArgs& a) {
  std::filesystem::create_directories(a.out);
  SyntheticSpec spec;
  spec.n_examples = a.n_train;
  spec.seed = a.seed;
  spec.fraction_comparison = a.fraction_comparison;
  spec.entity_vocab_size = a.entity_vocab;
  spec.long_paragraphs = a.long_paragraphs;
  save_distractor_dataset(a.out + "/train.json", generate_synthetic(spec));
  spec.n_examples = a.n_dev;
  spec.seed = a.seed + 0x9e3779b97f4a7c15ULL;  // disjoint stream for dev
  save_distractor_dataset(a.out + "/dev.json", generate_synthetic(spec));
  std::cout << nlohmann::json{{"event", "gen-data"}, {"train", a.out + "/train.json"}, {"n_train", a.n_train},
                              {"dev", a.out + "/dev.json"}, {"n_dev", a.n_dev}}
                   .dump()
            << "\n";
  return 0;
}

struct TrainArgs {
  std::string task;
  std::string data;
  std::string dev;
  std::string config;
  std::string out;
  int epochs = -1;
  long long seed = -1;
};

int cmd_train(const TrainArgs& a) {
  RunConfig config = a.config.empty() ? RunConfig{} : RunConfig::load(a.config);
  if (!a.data.empty()) config.train_path = a.data;
  if (!a.dev.empty()) config.dev_path = a.dev;
  if (a.epochs >= 0) config.training.epochs = a.epochs;
  if (a.seed >= 0) config.training.seed = static_cast<std::uint64_t>(a.seed);
  if (config.train_path.empty()) throw ValidationError("no training data: pass --data or set data.train");
  config.validate();

  const auto train = load_distractor_dataset(config.train_path);
  std::vector<MhrcExample> dev;
  if (!config.dev_path.empty()) dev = load_distractor_dataset(config.dev_path);
  const ModelKind kind = a.task == "retriever" ? ModelKind::Retriever : ModelKind::Reader;
  auto model = train_model(kind, config, train, dev.empty() ? nullptr : &dev,
                           [](const nlohmann::json& rec) { std::cout << rec.dump() << std::endl; });
  save_checkpoint(a.out, *model);
  std::cout << nlohmann::json{{"event", "checkpoint"}, {"task", a.task}, {"path", a.out},
                              {"parameters", model->store().scalar_count()}}
                   .dump()
            << "\n";
  return 0;
}

struct PredictArgs {
  std::string retriever;
  std::string reader;
  std::string data;
  std::string out;
  std::string retrieval_dump;
};

int cmd_predict(const PredictArgs& a, int threads) {
  const auto retriever = load_checkpoint(a.retriever);
  const auto reader = load_checkpoint(a.reader);
  const auto examples = load_distractor_dataset(a.data);
  const PredictionSet set = predict(*retriever, *reader, examples, threads);
  write_text(a.out, set.document.dump(2) + "\n");
  if (!a.retrieval_dump.empty()) {
    std::string lines;
    for (const auto& rec : set.retrieval_dump) lines += rec.dump() + "\n";
    write_text(a.retrieval_dump, lines);
  }
  std::cout << nlohmann::json{{"event", "predict"}, {"examples", examples.size()}, {"path", a.out}}.dump() << "\n";
  return 0;
}

struct EvalArgs {
  std::string pred;
  std::string gold;
  std::string retrieval;
  std::string out;
};

int cmd_eval(const EvalArgs& a) {
  const auto predictions = read_json(a.pred);
  const auto gold = load_distractor_dataset(a.gold);
  std::vector<nlohmann::json> dump;
  if (!a.retrieval.empty()) dump = read_jsonl(a.retrieval);
  const MetricReport report = evaluate_predictions(predictions, gold, a.retrieval.empty() ? nullptr : &dump);
  std::cout << report.to_table();
  std::cout << report.to_json().dump() << "\n";
  if (!a.out.empty()) write_text(a.out, report.to_json().dump(2) + "\n");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"S2G multi-hop reading comprehension: synthetic data, training, prediction and scoring"};
  app.require_subcommand(1);
  int threads = 1;
  app.add_option("--threads", threads, "Worker threads for prediction; 1 is deterministic")
      ->check(CLI::PositiveNumber);

  GenArgs gen;
  auto* g = app.add_subcommand("gen-data", "Write synthetic train.json and dev.json");
  g->add_option("--out", gen.out, "Output directory");
  g->add_option("--n-train", gen.n_train)->check(CLI::NonNegativeNumber);
  g->add_option("--n-dev", gen.n_dev)->check(CLI::NonNegativeNumber);
  g->add_option("--seed", gen.seed);
  g->add_option("--fraction-comparison", gen.fraction_comparison)->check(CLI::Range(0.0, 1.0));
  g->add_option("--entity-vocab", gen.entity_vocab);
  g->add_flag("--long-paragraphs", gen.long_paragraphs, "4-8 sentences per paragraph");

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Train the retriever or the reader");
  t->add_option("--task", tr.task)->required()->check(CLI::IsMember({"retriever", "reader"}));
  t->add_option("--data", tr.data, "Training set (overrides data.train)");
  t->add_option("--dev", tr.dev, "Dev set for per-epoch metrics");
  t->add_option("--config", tr.config, "Run config JSON");
  t->add_option("--out", tr.out, "Checkpoint path")->required();
  t->add_option("--epochs", tr.epochs, "Overrides training.epochs");
  t->add_option("--seed", tr.seed, "Overrides training.seed");

  PredictArgs pr;
  auto* p = app.add_subcommand("predict", "Retrieve, read and write the prediction file");
  p->add_option("--retriever", pr.retriever)->required();
  p->add_option("--reader", pr.reader)->required();
  p->add_option("--data", pr.data)->required();
  p->add_option("--out", pr.out)->required();
  p->add_option("--retrieval-dump", pr.retrieval_dump, "Write per-question stage logits as JSON lines");

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Score a prediction file");
  e->add_option("--pred", ev.pred)->required();
  e->add_option("--gold", ev.gold)->required();
  e->add_option("--retrieval", ev.retrieval, "Retrieval dump for EM/F1/Gold");
  e->add_option("--out", ev.out, "Also write the report as JSON");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? 0 : 1;
  }

  try {
    if (g->parsed()) return cmd_gen_data(gen);
    if (t->parsed()) return cmd_train(tr);
    if (p->parsed()) return cmd_predict(pr, threads);
    if (e->parsed()) return cmd_eval(ev);
  } catch (const s2g::IoError& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 2;
  } catch (const std::filesystem::filesystem_error& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 2;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 1;
  }
  return 1;
}
