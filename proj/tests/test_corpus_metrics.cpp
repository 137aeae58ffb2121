#include "doctest.h"

#include "s2g/corpus.hpp"
#include "s2g/metrics.hpp"

#include <algorithm>
#include <fstream>
#include <set>

using namespace s2g;
using nlohmann::json;

namespace {

const std::string kData = S2G_TEST_DATA;

std::set<SupportingFact> facts(const json& j) {
  std::set<SupportingFact> out;
  for (const auto& f : j) out.insert({f.at(0).get<std::string>(), f.at(1).get<int>()});
  return out;
}

json record(const std::string& id) {
  return {{"_id", id},
          {"question", "Where was the creator of Zed born ?"},
          {"answer", "Lund"},
          {"supporting_facts", json::array({json::array({"Zed", 0}), json::array({"Ann", 0})})},
          {"context", json::array({json::array({"Zed", json::array({"Zed was created by Ann ."})}),
                                   json::array({"Ann", json::array({"Ann was born in Lund ."})})})}};
}

bool contains(const ParagraphText& p, const std::string& needle) {
  return std::any_of(p.sentences.begin(), p.sentences.end(),
                     [&](const std::string& s) { return s.find(needle) != std::string::npos; });
}

// Top-2 paragraphs by the number of distinct question words they contain.
std::vector<int> lexical_top2(const MhrcExample& ex) {
  std::set<std::string> q;
  for (const auto& w : split_words(ex.question)) q.insert(lowercase(w));
  std::vector<std::pair<int, int>> scored;
  for (std::size_t i = 0; i < ex.context.size(); ++i) {
    std::set<std::string> words;
    for (const auto& w : split_words(ex.context[i].title)) words.insert(lowercase(w));
    for (const auto& s : ex.context[i].sentences)
      for (const auto& w : split_words(s)) words.insert(lowercase(w));
    int overlap = 0;
    for (const auto& w : words) overlap += q.count(w) ? 1 : 0;
    scored.push_back({-overlap, static_cast<int>(i)});
  }
  std::sort(scored.begin(), scored.end());
  return {scored[0].second, scored[1].second};
}

}  // namespace

TEST_CASE("loading an empty array yields no examples") {
  CHECK(parse_distractor_dataset(json::array()).empty());
  CHECK_THROWS_AS(parse_distractor_dataset(json::object()), ValidationError);
}

TEST_CASE("a supporting fact citing a missing title names the record") {
  json doc = json::array({record("good"), record("broken-7")});
  doc[1]["supporting_facts"][1][0] = "Nobody";
  try {
    parse_distractor_dataset(doc);
    FAIL("expected a ValidationError");
  } catch (const ValidationError& e) {
    const std::string what = e.what();
    CHECK(what.find("broken-7") != std::string::npos);
    CHECK(what.find("Nobody") != std::string::npos);
  }
}

TEST_CASE("schema violations are validation errors") {
  json missing = json::array({record("a")});
  missing[0].erase("question");
  CHECK_THROWS_AS(parse_distractor_dataset(missing), ValidationError);

  json bad_index = json::array({record("b")});
  bad_index[0]["supporting_facts"][0][1] = 3;
  CHECK_THROWS_AS(parse_distractor_dataset(bad_index), ValidationError);

  json absent_answer = json::array({record("c")});
  absent_answer[0]["answer"] = "Oslo";
  CHECK_THROWS_AS(parse_distractor_dataset(absent_answer), ValidationError);

  CHECK_THROWS_AS(load_distractor_dataset(kData + "/does_not_exist.json"), IoError);
}

TEST_CASE("the Peabody Hotel case parses with two gold paragraphs") {
  const auto examples = load_distractor_dataset(kData + "/peabody.json");
  REQUIRE(examples.size() == 1);
  const auto& ex = examples[0];
  CHECK(ex.answer == "Ducks");
  CHECK(ex.answer_type == AnswerType::Span);
  CHECK(ex.context.size() == 3);
  const auto labels = paragraph_labels(ex);
  CHECK(std::count_if(labels.begin(), labels.end(), [](const ParagraphLabels& l) { return l.is_relevant; }) == 2);
  CHECK(labels[1].has_answer);
  CHECK_FALSE(labels[2].has_answer);
  CHECK_FALSE(labels[0].is_relevant);
}

TEST_CASE("datasets survive a save and load round trip") {
  SyntheticSpec spec;
  spec.seed = 5;
  spec.n_examples = 12;
  const auto examples = generate_synthetic(spec);
  const std::string path = "corpus_roundtrip.json";
  save_distractor_dataset(path, examples);
  const auto back = load_distractor_dataset(path);
  CHECK(to_json(back) == to_json(examples));
  std::remove(path.c_str());
}

TEST_CASE("the generator is a pure function of its spec") {
  SyntheticSpec spec;
  spec.seed = 1;
  spec.n_examples = 1;
  CHECK(to_json(generate_synthetic(spec)).dump() == to_json(generate_synthetic(spec)).dump());
  spec.n_examples = 50;
  const auto a = to_json(generate_synthetic(spec)).dump();
  spec.seed = 2;
  CHECK(a != to_json(generate_synthetic(spec)).dump());
}

TEST_CASE("generator invariants over 1000 seeds") {
  int bad = 0;
  for (std::uint64_t seed = 1; seed <= 1000; ++seed) {
    SyntheticSpec spec;
    spec.seed = seed;
    spec.n_examples = 4;
    spec.fraction_comparison = 0.5;
    spec.long_paragraphs = seed % 2 == 0;
    const auto examples = generate_synthetic(spec);
    int comparisons = 0;
    for (const auto& ex : examples) {
      bool ok = true;
      ex.validate();
      ok = ok && ex.context.size() == 10 && ex.supporting_facts.size() == 2;
      std::set<std::string> titles;
      for (const auto& p : ex.context) titles.insert(p.title);
      ok = ok && titles.size() == 10;
      const auto labels = paragraph_labels(ex);
      const int answer_paragraphs = static_cast<int>(
          std::count_if(labels.begin(), labels.end(), [](const ParagraphLabels& l) { return l.has_answer; }));
      if (ex.type == "comparison") {
        ++comparisons;
        ok = ok && ex.answer_type != AnswerType::Span && answer_paragraphs == 2;
      } else {
        // the answer sits in the second-hop paragraph and nowhere else
        const int gold_b = ex.paragraph_index(ex.supporting_facts[1].title);
        ok = ok && answer_paragraphs == 1 && labels[static_cast<std::size_t>(gold_b)].has_answer;
        for (std::size_t i = 0; i < ex.context.size(); ++i)
          ok = ok && contains(ex.context[i], ex.answer) == (static_cast<int>(i) == gold_b);
        ok = ok && ex.question.find(ex.supporting_facts[0].title) != std::string::npos;
      }
      bad += ok ? 0 : 1;
    }
    bad += comparisons == 2 ? 0 : 1;
  }
  CHECK(bad == 0);
}

TEST_CASE("comparison share is exact and yes/no alternate") {
  SyntheticSpec spec;
  spec.seed = 9;
  spec.n_examples = 101;
  spec.fraction_comparison = 0.2;
  const auto examples = generate_synthetic(spec);
  int yes = 0, no = 0;
  for (const auto& ex : examples) {
    yes += ex.answer_type == AnswerType::Yes;
    no += ex.answer_type == AnswerType::No;
  }
  CHECK(yes + no == 20);
  CHECK(yes == 10);
  spec.entity_vocab_size = 10;
  CHECK_THROWS_AS(generate_synthetic(spec), ValidationError);
}

TEST_CASE("question-word overlap cannot solve retrieval") {
  SyntheticSpec spec;
  spec.seed = 77;
  spec.n_examples = 500;
  int hits = 0;
  for (const auto& ex : generate_synthetic(spec)) {
    const auto top = lexical_top2(ex);
    std::set<std::string> gold;
    for (const auto& f : ex.supporting_facts) gold.insert(f.title);
    const std::set<std::string> chosen{ex.context[static_cast<std::size_t>(top[0])].title,
                                       ex.context[static_cast<std::size_t>(top[1])].title};
    hits += chosen == gold ? 1 : 0;
  }
  MESSAGE("lexical top-2 EM: " << hits / 500.0);
  CHECK(hits < 500);
}

TEST_CASE("answer normalisation") {
  CHECK(normalize_answer("The  Ducks!") == "ducks");
  CHECK(normalize_answer("An apple, a day") == "apple day");
  CHECK(answer_em_f1("The ducks", "ducks").em == 1.0);
  const auto p = answer_em_f1("Peabody Ducks", "Ducks");
  CHECK(p.em == 0.0);
  CHECK(p.precision == 0.5);
  CHECK(p.recall == 1.0);
  CHECK(answer_em_f1("yes", "no").f1 == 0.0);
  CHECK(answer_em_f1("yes the", "yes").em == 1.0);
}

TEST_CASE("metric golden file") {
  std::ifstream in(kData + "/metric_golden.json");
  REQUIRE(in);
  const json golden = json::parse(in);
  MetricAccumulator acc;
  for (const auto& c : golden.at("cases")) {
    INFO(c.at("name").get<std::string>());
    const auto ans = answer_em_f1(c.at("pred_answer").get<std::string>(), c.at("gold_answer").get<std::string>());
    const auto sup = sup_em_f1(facts(c.at("pred_sp")), facts(c.at("gold_sp")));
    const auto joint = joint_metrics(ans, sup);
    const auto& e = c.at("expected");
    CHECK(ans.em == e.at("ans_em").get<double>());
    CHECK(ans.f1 == doctest::Approx(e.at("ans_f1").get<double>()).epsilon(1e-12));
    CHECK(sup.em == e.at("sup_em").get<double>());
    CHECK(sup.f1 == doctest::Approx(e.at("sup_f1").get<double>()).epsilon(1e-12));
    CHECK(joint.em == e.at("joint_em").get<double>());
    CHECK(joint.f1 == doctest::Approx(e.at("joint_f1").get<double>()).epsilon(1e-12));
    acc.add(ans, sup);
  }
  const auto report = acc.report().to_json();
  for (const auto& [key, value] : golden.at("aggregate").items()) {
    INFO(key);
    CHECK(report.at(key).get<double>() == doctest::Approx(value.get<double>()).epsilon(1e-12));
  }
  for (const auto& c : golden.at("retrieval")) {
    INFO(c.at("name").get<std::string>());
    const auto r = retrieval_metrics(c.at("selected").get<std::vector<int>>(), c.at("gold").get<std::vector<int>>(),
                                     c.at("answer_paragraphs").get<std::vector<int>>());
    CHECK(r.em == c.at("expected").at("em").get<double>());
    CHECK(r.f1 == doctest::Approx(c.at("expected").at("f1").get<double>()).epsilon(1e-12));
    CHECK(r.gold == c.at("expected").at("gold").get<double>());
  }
}

TEST_CASE("metric invariants") {
  const auto empty = sup_em_f1({}, {});
  CHECK(empty.em == 1.0);
  CHECK(empty.f1 == 1.0);
  const auto none = sup_em_f1({{"A", 0}}, {});
  CHECK(none.f1 == 0.0);
  const auto joint = joint_metrics(answer_em_f1("x y", "x y z"), sup_em_f1({{"A", 0}}, {{"A", 0}, {"B", 1}}));
  CHECK(joint.em <= joint.f1);
  CHECK(joint.precision == doctest::Approx(1.0));
  CHECK(joint.recall == doctest::Approx(2.0 / 3.0 * 0.5));
  MetricAccumulator acc;
  CHECK(acc.report().count == 0);
  acc.add_retrieval(retrieval_metrics({1, 2}, {1, 2}, {2}));
  CHECK(acc.report().retrieval_em.value() == 1.0);
}
