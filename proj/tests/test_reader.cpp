#include "doctest.h"

#include "s2g/gradcheck.hpp"
#include "s2g/optim.hpp"
#include "s2g/reader.hpp"

#include <cmath>
#include <limits>

using namespace s2g;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

const std::string kQuestion = "Where was the creator of Zed born ?";

std::vector<ParagraphText> toy_paragraphs() {
  return {{"Ann", {"Ann studied law .", "Ann was born in Lund river delta ."}},
          {"Zed", {"Zed was created by Ann .", "Zed is a drama film ."}}};
}

Vocab toy_vocab() {
  Vocab v;
  v.add_corpus({kQuestion});
  for (const auto& p : toy_paragraphs()) v.add_corpus(p.sentences);
  return v;
}

EncoderConfig toy_encoder(int vocab_size) {
  EncoderConfig c;
  c.vocab_size = vocab_size;
  c.d_model = 8;
  c.n_heads = 2;
  c.n_layers = 1;
  c.d_ff = 16;
  c.max_len = 64;
  c.dropout_rate = 0.0;
  return c;
}

struct Toy {
  Vocab vocab = toy_vocab();
  ReaderConfig config;
  ParameterStore store;
  Rng rng{17};
  ReaderParams params;
  ReaderInput input;

  explicit Toy(int t = 1) {
    config.t = t;
    params = ReaderParams(store, toy_encoder(vocab.size()), config, rng);
    for (Tensor p : store.tensors()) p.mutable_value() = normal_matrix(p.rows(), p.cols(), 0.4, rng);
    input = assemble_reader_input(kQuestion, toy_paragraphs(), vocab);
  }
};

MhrcExample toy_example() {
  MhrcExample ex;
  ex.id = "toy";
  ex.question = kQuestion;
  ex.answer = "Lund river delta";
  ex.context = toy_paragraphs();
  ex.supporting_facts = {{"Ann", 1}, {"Zed", 0}};
  return ex;
}

ReaderOutput constant_output(int k, int n, double value) {
  ReaderOutput out;
  out.o_sent = Tensor::constant(Matrix::Constant(1, k, value));
  out.o_start = Tensor::constant(Matrix::Constant(1, n, value));
  out.o_end = Tensor::constant(Matrix::Constant(1, n, value));
  out.o_type = Tensor::constant(Matrix::Constant(1, 3, value));
  return out;
}

// Random layout of n tokens with contiguous sentences opened by placeholders.
SentenceMap random_map(int n, Rng& rng) {
  SentenceMap m;
  m.token_to_sentence.assign(static_cast<std::size_t>(n), SentenceMap::kNone);
  int pos = 1 + static_cast<int>(uniform_index(rng, 4));
  while (pos < n - 1) {
    const int len = 2 + static_cast<int>(uniform_index(rng, 12));
    const int end = std::min(n, pos + len);
    const int s = m.sentence_count();
    m.sentence_spans.push_back({pos, end});
    m.placeholder_positions.push_back(pos);
    for (int t = pos; t < end; ++t) m.token_to_sentence[static_cast<std::size_t>(t)] = s;
    pos = end + static_cast<int>(uniform_index(rng, 3));
  }
  return m;
}

std::optional<SpanChoice> brute_force_span(const Matrix& st, const Matrix& en, const SentenceMap& m, int max_len) {
  std::optional<SpanChoice> best;
  const int n = static_cast<int>(st.cols());
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const int si = m.token_to_sentence[static_cast<std::size_t>(i)];
      if (i > j || j - i >= max_len || si == SentenceMap::kNone || si != m.token_to_sentence[static_cast<std::size_t>(j)])
        continue;
      if (!std::isfinite(st(0, i)) || !std::isfinite(en(0, j))) continue;
      const double score = st(0, i) + en(0, j);
      if (!best || score > best->score) best = SpanChoice{i, j, score};
    }
  }
  return best;
}

}  // namespace

TEST_CASE("output shapes") {
  Toy toy;
  const auto out = run_reader(toy.input, toy.params, toy.config, {});
  const auto n = static_cast<Index>(toy.input.seq.size());
  CHECK(out.o_sent.cols() == 4);
  CHECK(out.o_sent.rows() == 1);
  CHECK(out.o_start.cols() == n);
  CHECK(out.o_end.cols() == n);
  CHECK(out.o_type.cols() == 3);
  CHECK(out.z.z.size() == 4);
  // start/end are -inf on placeholders and outside sentences
  for (int p : toy.input.map.placeholder_positions) CHECK(out.o_start(0, p) == -kInf);
  CHECK(out.o_start(0, 0) == -kInf);
  CHECK(out.o_end(0, n - 1) == -kInf);
}

TEST_CASE("selection is a threshold on the sentence logits") {
  Matrix logits(1, 4);
  logits << -0.1, 0.1, 3.0, 0.0;
  ReaderConfig c;
  CHECK(select_sentences(Tensor::constant(logits), c).z == std::vector<int>{0, 1, 1, 0});
  c.sentence_threshold = 0.9;
  CHECK(select_sentences(Tensor::constant(logits), c).z == std::vector<int>{0, 0, 1, 0});
}

TEST_CASE("with every sentence selected EGA is the full mask") {
  for (int t : {1, 2}) {
    Toy toy(t);
    NoGradGuard guard;
    const Tensor hidden = encode_reader_input(toy.input, toy.params, {});
    const EvidenceSelection all{std::vector<int>(4, 1)};
    const auto with_ega = predict_answer(hidden, toy.input.map, all, toy.params, toy.config, {});
    const auto full = build_full_mask(static_cast<int>(hidden.rows()));
    const Tensor plain = run_stack(toy.params.answer_layers, toy.params.answer_norm, hidden, &full, {});
    const Tensor spans = toy.params.span_head(plain);
    const Matrix& start = with_ega.o_start.value();
    for (Index i = 0; i < start.cols(); ++i)
      if (std::isfinite(start(0, i))) CHECK(start(0, i) == spans.value()(i, 0));
    CHECK(with_ega.o_type.value() == toy.params.type_head(slice_rows(plain, 0, 1)).value());
  }
}

TEST_CASE("tokens of unselected sentences cannot reach selected positions") {
  Toy toy(1);
  NoGradGuard guard;
  const Tensor hidden = encode_reader_input(toy.input, toy.params, {});
  const EvidenceSelection z{{0, 1, 1, 0}};
  const auto a = predict_answer(hidden, toy.input.map, z, toy.params, toy.config, {});

  Matrix changed = hidden.value();
  const auto span = toy.input.map.sentence_spans[0];
  changed.row(span.start + 1).setConstant(5.0);
  const auto b = predict_answer(Tensor::constant(changed), toy.input.map, z, toy.params, toy.config, {});
  for (int s : {1, 2}) {
    const auto sp = toy.input.map.sentence_spans[static_cast<std::size_t>(s)];
    for (int i = sp.start + 1; i < sp.end; ++i) CHECK(a.o_start(0, i) == b.o_start(0, i));
  }
  CHECK(a.o_start(0, span.start + 1) != b.o_start(0, span.start + 1));
}

TEST_CASE("joint loss fixture and linearity in the weights") {
  const ReaderOutput uniform = constant_output(4, 20, 0.0);
  ReaderLabels gold;
  gold.sentence_flags = {1, 0, 1, 0};
  gold.start = 3;
  gold.end = 5;
  ReaderConfig c;
  const double loss = joint_loss(uniform, gold, c).item();
  CHECK(std::abs(loss - (2 * std::log(2.0) + 2 * std::log(20.0) + std::log(3.0))) < 1e-12);
  CHECK(std::abs(loss - 8.477) < 1e-3);

  ReaderConfig doubled = c;
  doubled.lambda1 = 4.0;
  const double sentence_term = 2 * std::log(2.0);
  CHECK(std::abs(joint_loss(uniform, gold, doubled).item() - loss - sentence_term) < 1e-12);

  gold.type = AnswerType::Yes;
  CHECK(std::abs(joint_loss(uniform, gold, c).item() - (2 * std::log(2.0) + std::log(3.0))) < 1e-12);
  gold.type = AnswerType::Span;
  gold.start.reset();
  CHECK_THROWS_AS(joint_loss(uniform, gold, c), ValidationError);
  gold.sentence_flags = {1};
  CHECK_THROWS_AS(joint_loss(uniform, gold, c), ValidationError);
}

TEST_CASE("confident correct logits give near-zero loss") {
  ReaderOutput out = constant_output(4, 20, -60.0);
  ReaderLabels gold;
  gold.sentence_flags = {1, 0, 1, 0};
  gold.start = 3;
  gold.end = 5;
  Matrix sent(1, 4);
  sent << 60, -60, 60, -60;
  out.o_sent = Tensor::constant(sent);
  Matrix start = Matrix::Constant(1, 20, -60.0), end = start, type = Matrix::Constant(1, 3, -60.0);
  start(0, 3) = 60;
  end(0, 5) = 60;
  type(0, 0) = 60;
  out.o_start = Tensor::constant(start);
  out.o_end = Tensor::constant(end);
  out.o_type = Tensor::constant(type);
  const double loss = joint_loss(out, gold, {}).item();
  CHECK(loss >= 0.0);
  CHECK(loss < 1e-20);
}

TEST_CASE("span decoding matches brute force") {
  Rng rng(31);
  for (int trial = 0; trial < 500; ++trial) {
    const int n = 4 + static_cast<int>(uniform_index(rng, 61));
    const SentenceMap m = random_map(n, rng);
    Matrix st = normal_matrix(1, n, 2.0, rng), en = normal_matrix(1, n, 2.0, rng);
    for (int i = 0; i < n; ++i) {
      if (uniform01(rng) < 0.2) st(0, i) = -kInf;
      if (uniform01(rng) < 0.2) en(0, i) = -kInf;
    }
    const int max_len = 1 + static_cast<int>(uniform_index(rng, 8));
    const auto got = best_span(st, en, m, max_len);
    const auto want = brute_force_span(st, en, m, max_len);
    REQUIRE(got.has_value() == want.has_value());
    if (got) {
      CHECK(got->start == want->start);
      CHECK(got->end == want->end);
    }
  }
}

TEST_CASE("span decoding respects order when the peaks are reversed") {
  SentenceMap m;
  m.token_to_sentence.assign(12, 0);
  m.token_to_sentence[0] = SentenceMap::kNone;
  m.sentence_spans = {{1, 12}};
  m.placeholder_positions = {1};
  Matrix st = Matrix::Zero(1, 12), en = Matrix::Zero(1, 12);
  st(0, 1) = en(0, 1) = -kInf;
  st(0, 7) = 5.0;
  en(0, 5) = 5.0;
  st(0, 4) = 3.0;
  en(0, 9) = 3.0;
  const auto got = best_span(st, en, m, 30);
  REQUIRE(got);
  CHECK(got->start <= got->end);
  const auto want = brute_force_span(st, en, m, 30);
  CHECK(got->start == want->start);
  CHECK(got->end == want->end);
  CHECK(got->score == 8.0);
}

TEST_CASE("labels come from supporting sentences") {
  Toy toy;
  const auto ex = toy_example();
  const auto labels = reader_labels(ex, toy_paragraphs(), toy.input);
  REQUIRE(labels);
  CHECK(labels->sentence_flags == std::vector<int>{0, 1, 1, 0});
  REQUIRE(labels->start);
  CHECK(toy.input.seq.surface[static_cast<std::size_t>(*labels->start)] == "Lund");
  CHECK(toy.input.seq.surface[static_cast<std::size_t>(*labels->end)] == "delta");

  MhrcExample missing = ex;
  missing.answer = "Oslo";
  CHECK_FALSE(reader_labels(missing, toy_paragraphs(), toy.input).has_value());
}

TEST_CASE("decoding yes/no and spans") {
  Toy toy;
  const auto n = static_cast<int>(toy.input.seq.size());
  ReaderOutput out = constant_output(4, n, 0.0);
  out.z = EvidenceSelection{{0, 1, 1, 0}};
  Matrix type(1, 3);
  type << 0.0, 2.0, 1.0;
  out.o_type = Tensor::constant(type);
  const auto yes = decode_prediction(out, toy.input, toy_paragraphs(), toy.config);
  CHECK(yes.answer_text == "yes");
  CHECK(yes.supporting_facts == std::set<SupportingFact>{{"Ann", 1}, {"Zed", 0}});

  const auto labels = reader_labels(toy_example(), toy_paragraphs(), toy.input);
  Matrix start = Matrix::Constant(1, n, -kInf), end = start;
  start(0, *labels->start) = 1.0;
  end(0, *labels->end) = 1.0;
  out.o_start = Tensor::constant(start);
  out.o_end = Tensor::constant(end);
  type << 5.0, 0.0, 0.0;
  out.o_type = Tensor::constant(type);
  CHECK(decode_prediction(out, toy.input, toy_paragraphs(), toy.config).answer_text == "Lund river delta");

  // no admissible span: fall back to the better of yes/no
  out.o_start = Tensor::constant(Matrix::Constant(1, n, -kInf));
  type << 5.0, 0.0, 1.0;
  out.o_type = Tensor::constant(type);
  CHECK(decode_prediction(out, toy.input, toy_paragraphs(), toy.config).answer_text == "no");
  CHECK(detokenize({"Port", "Moresby", ",", "Papua"}) == "Port Moresby, Papua");
}

TEST_CASE("gradient check of the sentence and answer transformers") {
  Toy toy(2);
  const auto labels = *reader_labels(toy_example(), toy_paragraphs(), toy.input);
  const EvidenceSelection gold_z{labels.sentence_flags};
  Rng rng(5);
  const Tensor hidden = Tensor::constant(normal_matrix(static_cast<Index>(toy.input.seq.size()), 8, 1.0, rng));
  // Key biases have an exactly zero gradient (see the encoder tests).
  auto pick = [&](std::initializer_list<const char*> prefixes) {
    std::vector<Tensor> out;
    for (std::size_t i = 0; i < toy.store.size(); ++i) {
      const auto& name = toy.store.names()[i];
      for (const char* prefix : prefixes)
        if (name.rfind(prefix, 0) == 0 && !name.ends_with("key.bias")) out.push_back(toy.store.tensors()[i]);
    }
    return out;
  };

  SUBCASE("sentence transformer") {
    const Matrix w = normal_matrix(1, 4, 1.0, rng);
    const auto probe = [&](const Tensor& h) {
      return sum(mul(predict_sentences(h, toy.input.map, toy.params, toy.config, {}), Tensor::constant(w)));
    };
    auto params = pick({"reader.sentence"});
    CHECK(params.size() > 10);
    CHECK(finite_difference_check([&] { return probe(hidden); }, params) < 1e-4);
    CHECK(finite_difference_check(probe, hidden.value()) < 1e-4);
  }

  SUBCASE("answer transformer") {
    std::vector<int> inside;
    for (const auto& sp : toy.input.map.sentence_spans)
      for (int i = sp.start + 1; i < sp.end; ++i) inside.push_back(i);
    const Matrix ws = normal_matrix(static_cast<Index>(inside.size()), 1, 1.0, rng);
    const Matrix we = normal_matrix(static_cast<Index>(inside.size()), 1, 1.0, rng);
    const Matrix wt = normal_matrix(1, 3, 1.0, rng);
    const auto flags = cross_evidence_flags(toy.input, gold_z);
    const auto probe = [&](const Tensor& h) {
      const auto a = predict_answer(h, toy.input.map, gold_z, toy.params, toy.config, {}, flags);
      Tensor s = sum(mul(gather_rows(transpose(a.o_start), inside), Tensor::constant(ws)));
      s = add(s, sum(mul(gather_rows(transpose(a.o_end), inside), Tensor::constant(we))));
      return add(s, sum(mul(a.o_type, Tensor::constant(wt))));
    };
    auto params = pick({"reader.answer", "reader.span_head", "reader.type_head"});
    CHECK(params.size() > 10);
    CHECK(finite_difference_check([&] { return probe(hidden); }, params) < 1e-4);
    CHECK(finite_difference_check(probe, hidden.value()) < 1e-4);
  }

  SUBCASE("joint loss through the heads") {
    const auto loss = [&] {
      return joint_loss(run_reader(toy.input, toy.params, toy.config, {}, &gold_z), labels, toy.config);
    };
    auto heads = pick({"reader.sentence_head", "reader.type_head", "reader.span_head.hidden",
                       "reader.span_head.output.weight", "reader.answer_match"});
    CHECK(finite_difference_check(loss, heads) < 1e-4);
    // A constant shift of all start (end) logits cancels in the softmax.
    Tensor bias = toy.store.get("reader.span_head.output.bias");
    bias.zero_grad();
    backward(loss());
    CHECK(bias.grad().cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("cross-evidence flags mark rare words shared by selected sentences of both paragraphs") {
  const std::string question = "Were Ann and Bo born in the same place ?";
  const std::vector<ParagraphText> paragraphs{{"Ann", {"Ann studied law .", "Ann was born in Lund city ."}},
                                              {"Bo", {"Bo studied law .", "Bo was born in Lund city ."}}};
  Vocab vocab;
  vocab.add_corpus({question});
  for (const auto& p : paragraphs) vocab.add_corpus(p.sentences);
  auto flagged = [&](const Vocab& v, const std::vector<int>& z) {
    const ReaderInput input = assemble_reader_input(question, paragraphs, v);
    const auto flags = cross_evidence_flags(input, EvidenceSelection{z});
    std::vector<std::string> out;
    for (std::size_t i = 1; i < flags.size(); ++i)
      if (flags[i]) out.push_back(input.seq.surface[i]);
    CHECK(flags[0] == (out.empty() ? 0 : 2));
    return out;
  };
  using Words = std::vector<std::string>;
  // "born" and "in" are question words; "studied law" sits in unselected sentences
  CHECK(flagged(vocab, {0, 1, 0, 1}) == Words{"was", "Lund", "city", ".", "was", "Lund", "city", "."});
  CHECK(flagged(vocab, {1, 1, 0, 1}) == Words{".", "was", "Lund", "city", ".", "was", "Lund", "city", "."});
  CHECK(flagged(vocab, {1, 1, 1, 1}).size() == 14);
  CHECK(flagged(vocab, {0, 1, 0, 0}).empty());
  for (const char* w : {"was", "city", "."}) vocab.mark_frequent(vocab.id(w));
  CHECK(flagged(vocab, {0, 1, 0, 1}) == Words{"Lund", "Lund"});
}

TEST_CASE("a briefly trained reader ranks the evidence and recovers the span") {
  MhrcExample ex;
  ex.id = "delta";
  ex.question = "Where was the creator of Zed born ?";
  ex.answer = "river delta";
  ex.context = {{"Zed", {"Zed was created by Ann .", "Zed is a drama film ."}},
                {"Ann", {"Ann studied law .", "Ann was born near the river delta ."}}};
  ex.supporting_facts = {{"Zed", 0}, {"Ann", 1}};
  Vocab vocab;
  vocab.add_corpus({ex.question});
  for (const auto& p : ex.context) vocab.add_corpus(p.sentences);
  ParameterStore store;
  Rng rng(23);
  EncoderConfig ec = toy_encoder(vocab.size());
  ec.d_model = 16;
  ec.d_ff = 32;
  ReaderConfig config;
  config.t = 1;
  const ReaderParams params(store, ec, config, rng);
  const ReaderInput input = assemble_reader_input(ex.question, ex.context, vocab);
  const auto labels = *reader_labels(ex, ex.context, input);
  const EvidenceSelection gold_z{labels.sentence_flags};
  Adam adam(store.tensors(), AdamOptions{1e-2});
  for (int step = 0; step < 150; ++step) {
    backward(joint_loss(run_reader(input, params, config, {}, &gold_z), labels, config));
    adam.step();
  }

  NoGradGuard guard;
  const ReaderOutput out = run_reader(input, params, config, {});
  // the sentence holding the question's rare token "created" outranks its neighbour
  CHECK(out.o_sent(0, 0) > out.o_sent(0, 1));
  CHECK(out.o_sent(0, 3) > out.o_sent(0, 2));
  const Prediction pred = decode_prediction(out, input, ex.context, config);
  CHECK(pred.answer_text == "river delta");
  CHECK(pred.supporting_facts == std::set<SupportingFact>(ex.supporting_facts.begin(), ex.supporting_facts.end()));
}

TEST_CASE("ablations skip their transformer") {
  Toy toy;
  toy.config.use_sentence_transformer = false;
  toy.config.use_answer_transformer = false;
  NoGradGuard guard;
  const Tensor hidden = encode_reader_input(toy.input, toy.params, {});
  const auto out = run_reader(toy.input, toy.params, toy.config, {});
  const Tensor direct = toy.params.sentence_head(gather_rows(hidden, toy.input.map.placeholder_positions));
  CHECK(out.o_sent.value() == transpose(direct).value());
  // the evidence cue is still added; only the layers are gone
  const auto flags = cross_evidence_flags(toy.input, out.z);
  const Tensor cued = add(hidden, gather_rows(toy.params.answer_match, flags));
  CHECK(out.o_type.value() == toy.params.type_head(slice_rows(cued, 0, 1)).value());
}

TEST_CASE("config round trip and strictness") {
  ReaderConfig c;
  c.t = 3;
  c.use_answer_transformer = false;
  CHECK(ReaderConfig::from_json(c.to_json()).to_json() == c.to_json());
  CHECK_THROWS_AS(ReaderConfig::from_json({{"t", 0}}), ValidationError);
  CHECK_THROWS_AS(ReaderConfig::from_json({{"lambda1", -1.0}}), ValidationError);
  CHECK_THROWS_AS(ReaderConfig::from_json({{"layers", 2}}), ValidationError);
  CHECK_THROWS_AS(ReaderConfig::from_json({{"sentence_threshold", 1.5}}), ValidationError);
}
