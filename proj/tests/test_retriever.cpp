#include "doctest.h"

#include "s2g/gradcheck.hpp"
#include "s2g/retriever.hpp"

#include <algorithm>
#include <numeric>

using namespace s2g;

namespace {

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

std::vector<ParagraphCandidate> toy_paragraphs() {
  return {{"Zed", {"Zed was created by Ann ."}, false, true},
          {"Ann", {"Ann was born in Lund ."}, true, true},
          {"Bo", {"Bo was born in Rome .", "Bo studied law ."}, false, false},
          {"Kit", {"Kit was inspired by Zed ."}, false, false}};
}

const std::string kQuestion = "Where was the creator of Zed born ?";

Vocab toy_vocab() {
  Vocab v;
  v.add_corpus({kQuestion});
  for (const auto& p : toy_paragraphs()) v.add_corpus({p.text()});
  return v;
}

struct Toy {
  Vocab vocab = toy_vocab();
  ParameterStore store;
  Rng rng{3};
  RetrieverParams params{store, toy_encoder(vocab.size()), rng};

  Toy() {
    for (Tensor t : store.tensors()) t.mutable_value() = normal_matrix(t.rows(), t.cols(), 0.3, rng);
  }
};

RetrievalState with_logits(const Matrix& row) {
  RetrievalState s;
  s.initial_logits = Tensor::constant(row);
  return s;
}

}  // namespace

TEST_CASE("target scores follow answer, relevance, rest") {
  auto paras = toy_paragraphs();
  CHECK(assign_target_scores(paras) == std::vector<int>{1, 2, 0, 0});
  RetrieverConfig c;
  c.score_answer = 5;
  c.score_relevant = 3;
  c.score_irrelevant = 1;
  CHECK(assign_target_scores(paras, c) == std::vector<int>{3, 5, 1, 1});
  paras[2].has_answer.reset();
  CHECK_THROWS_AS(assign_target_scores(paras), ValidationError);
  paras[2].has_answer = true;
  CHECK_THROWS_AS(assign_target_scores(paras), ValidationError);
}

TEST_CASE("softmax target and KL fixture") {
  std::vector<int> scores{2, 1, 0, 0, 0, 0, 0, 0, 0, 0};
  const Matrix t = target_distribution(scores).value();
  CHECK(t(0, 0) == doctest::Approx(0.40807).epsilon(1e-5 / 0.40807));
  CHECK(std::abs(t(0, 1) - 0.15012) < 1e-5);
  for (int i = 2; i < 10; ++i) CHECK(std::abs(t(0, i) - 0.05523) < 1e-5);
  CHECK(std::abs(t.sum() - 1.0) < 1e-12);

  // uniform prediction against that target
  const double kl = retriever_loss(Tensor::constant(Matrix::Zero(1, 10)), scores).item();
  CHECK(std::abs(kl - 0.293732) < 1e-5);

  const std::vector<int> two{2, 1};
  const Matrix t2 = target_distribution(two).value();
  CHECK(std::abs(t2(0, 0) - std::exp(1.0) / (1.0 + std::exp(1.0))) < 1e-12);
}

TEST_CASE("retriever loss is zero at the target and positive elsewhere") {
  const std::vector<int> scores{2, 1, 0, 0};
  Matrix at(1, 4);
  at << 2, 1, 0, 0;
  CHECK(std::abs(retriever_loss(Tensor::constant(at), scores).item()) < 1e-12);
  // shifting every logit changes nothing
  CHECK(std::abs(retriever_loss(Tensor::constant((at.array() + 7.0).matrix()), scores).item()) < 1e-12);
  Matrix off(1, 4);
  off << 0, 3, 0, 0;
  CHECK(retriever_loss(Tensor::constant(off), scores).item() > 0.1);
  CHECK_THROWS_AS(retriever_loss(Tensor::constant(Matrix::Zero(1, 3)), scores), ShapeError);
  CHECK_THROWS_AS(target_distribution({}), ValidationError);
}

TEST_CASE("top indices break ties toward the lower index") {
  Matrix row(1, 5);
  row << 1.0, 3.0, 3.0, -1.0, 1.0;
  CHECK(top_indices(row, 3) == std::vector<int>{1, 2, 0});
  CHECK(top_indices(row, 9).size() == 5);
  const auto s = select_evidence_paragraphs(with_logits(row));
  CHECK(s == std::pair<int, int>{1, 2});
}

TEST_CASE("top-2 selection agrees with brute force on small sets") {
  Rng rng(21);
  for (int trial = 0; trial < 2000; ++trial) {
    const int n = 2 + static_cast<int>(uniform_index(rng, 3));
    Matrix row(1, n);
    // coarse values so ties are common
    for (int i = 0; i < n; ++i) row(0, i) = static_cast<double>(uniform_index(rng, 3));
    std::pair<int, int> best{-1, -1};
    for (int a = 0; a < n; ++a) {
      for (int b = 0; b < n; ++b) {
        if (a == b) continue;
        // a ranks before b, and nothing else outranks either
        auto before = [&](int x, int y) { return row(x) > row(y) || (row(x) == row(y) && x < y); };
        bool ok = before(a, b);
        for (int c = 0; c < n && ok; ++c)
          if (c != a && c != b) ok = before(a, c) && before(b, c);
        if (ok) best = {a, b};
      }
    }
    CHECK(select_evidence_paragraphs(with_logits(row)) == best);
  }
}

TEST_CASE("cascade input keeps every marker and drops whole sentences") {
  const Vocab vocab = toy_vocab();
  const std::vector<ParagraphCandidate> paras{{"Bo", {"Bo was born in Rome .", "Bo studied law .", "Bo studied law ."}},
                                              {"Ann", {"Ann was born in Lund .", "Ann studied law ."}},
                                              {"Zed", {"Zed was created by Ann ."}}};
  const auto full = assemble_cascade_input(kQuestion, paras, {0, 1, 2}, vocab, 512);
  CHECK(full.marker_positions.size() == 3);
  CHECK(full.seq.ids.front() == Vocab::kBos);
  CHECK(full.seq.ids.back() == Vocab::kEos);
  for (int p : full.marker_positions) CHECK(full.seq.ids[static_cast<std::size_t>(p)] == Vocab::kPara);

  const int limit = static_cast<int>(full.seq.size()) - 3;
  const auto cut = assemble_cascade_input(kQuestion, paras, {0, 1, 2}, vocab, limit);
  CHECK(static_cast<int>(cut.seq.size()) <= limit);
  CHECK(cut.marker_positions.size() == 3);
  // the last paragraph lost its only sentence but keeps its title
  CHECK(cut.seq.surface[static_cast<std::size_t>(cut.marker_positions[2]) + 1] == "Zed");
  CHECK(cut.seq.ids[static_cast<std::size_t>(cut.marker_positions[2]) + 2] == Vocab::kEos);
  // no partial sentence remains: every sentence ends with "."
  for (std::size_t m = 0; m + 1 < cut.marker_positions.size(); ++m)
    CHECK(cut.seq.surface[static_cast<std::size_t>(cut.marker_positions[m + 1]) - 1] != "studied");

  CHECK_THROWS_AS(assemble_cascade_input(kQuestion, paras, {0, 1, 2}, vocab, 5), ValidationError);
}

TEST_CASE("stage shapes") {
  Toy toy;
  const auto paras = toy_paragraphs();
  RetrieverConfig config;
  const auto state = retrieve(kQuestion, paras, toy.params, toy.vocab, config);
  CHECK(state.initial_logits.cols() == 4);
  REQUIRE(state.refined_logits);
  CHECK(state.refined_logits->cols() == 4);
  REQUIRE(state.cascaded_logits);
  CHECK(state.cascaded_logits->cols() == 3);
  CHECK(state.cascade_members.size() == 3);
  REQUIRE(state.selected);
  CHECK(state.selected->first != state.selected->second);
  CHECK(retrieval_record("q", state).at("selected").size() == 2);

  std::vector<ParagraphCandidate> one{paras[0]};
  CHECK_THROWS_AS(retrieve(kQuestion, one, toy.params, toy.vocab, config), ValidationError);
  std::vector<ParagraphCandidate> many(11, paras[0]);
  CHECK_THROWS_AS(retrieve(kQuestion, many, toy.params, toy.vocab, config), ValidationError);
}

TEST_CASE("scores are permutation equivariant over paragraphs") {
  Toy toy;
  const auto paras = toy_paragraphs();
  const std::vector<int> perm{2, 0, 3, 1};
  std::vector<ParagraphCandidate> permuted;
  for (int i : perm) permuted.push_back(paras[static_cast<std::size_t>(i)]);

  NoGradGuard guard;
  auto a = score_paragraphs_initial(kQuestion, paras, toy.params, toy.vocab, {});
  auto b = score_paragraphs_initial(kQuestion, permuted, toy.params, toy.vocab, {});
  refine_scores(a, toy.params, {}, 0);
  refine_scores(b, toy.params, {}, 1);  // paragraph 0 sits at position 1 after permuting
  for (int i = 0; i < 4; ++i) {
    const int src = perm[static_cast<std::size_t>(i)];
    CHECK(std::abs(b.initial_logits(0, i) - a.initial_logits(0, src)) < 1e-10);
    CHECK(std::abs((*b.refined_logits)(0, i) - (*a.refined_logits)(0, src)) < 1e-10);
  }
}

TEST_CASE("rare shared tokens link the first hop to the second") {
  const std::vector<std::vector<int>> all{{2, 10, 3, 20, 21, 30, 3}, {2, 10, 3, 30, 21, 40, 3}, {2, 10, 3, 50, 21, 41, 3}};
  // 30 is shared with the hop and rare; 21 is frequent; 10 is a question token
  CHECK(shared_rare_flags(all[1], all[0], all) == std::vector<int>{0, 0, 0, 1, 0, 0, 0});
  CHECK(shared_rare_flags(all[0], all[0], all) == std::vector<int>{0, 0, 0, 1, 0, 1, 0});
  CHECK(shared_rare_flags(all[2], all[0], all) == std::vector<int>{0, 0, 0, 0, 0, 0, 0});
}

TEST_CASE("gradient check of the summed stage losses") {
  Toy toy;
  const auto paras = toy_paragraphs();
  RetrieverConfig config;
  // Stage-specific parameters that every stage's wiring must reach. The mixing
  // layers and the similarity weights are checked directly in the encoder
  // tests; behind three softmax stages some of their gradient entries fall to
  // ~1e-8, below what central differences resolve.
  std::vector<Tensor> heads;
  for (const char* name : {"retriever.initial_head.weight", "retriever.initial_head.bias",
                           "retriever.refine_bi.projection.weight",
                           "retriever.refine_bi.projection.bias", "retriever.refine_match",
                           "retriever.refine_head.weight", "retriever.cascade_head.hidden.weight",
                           "retriever.cascade_head.hidden.bias", "retriever.cascade_head.output.weight"})
    heads.push_back(toy.store.get(name));
  const auto loss = [&] { return retriever_training_loss(kQuestion, paras, toy.params, toy.vocab, config, {}); };
  CHECK(finite_difference_check(loss, heads) < 1e-4);

  config.reformulation = false;
  CHECK(finite_difference_check(loss, heads) < 1e-4);
}

TEST_CASE("training loss needs labels") {
  Toy toy;
  auto paras = toy_paragraphs();
  paras[0].is_relevant.reset();
  CHECK_THROWS_AS(retriever_training_loss(kQuestion, paras, toy.params, toy.vocab, {}, {}), ValidationError);
}

TEST_CASE("config round trip and strictness") {
  RetrieverConfig c;
  c.use_cascade = false;
  c.top_k_cascade = 4;
  const auto back = RetrieverConfig::from_json(c.to_json());
  CHECK(back.to_json() == c.to_json());
  CHECK_THROWS_AS(RetrieverConfig::from_json({{"top_k", 3}}), ValidationError);
  CHECK_THROWS_AS(RetrieverConfig::from_json({{"top_k_cascade", 1}}), ValidationError);
  CHECK_THROWS_AS(RetrieverConfig::from_json({{"score_answer", 0}}), ValidationError);
  CHECK_THROWS_AS(RetrieverConfig::from_json({{"use_refine", "yes"}}), ValidationError);
}
