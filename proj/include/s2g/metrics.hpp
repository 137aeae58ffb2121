#pragma once

#include "s2g/corpus.hpp"

#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace s2g {

/// Lowercase, strip punctuation, drop the articles a/an/the, collapse
/// whitespace.
std::string normalize_answer(std::string_view s);

struct PrfScores {
  double em = 0.0;
  double f1 = 0.0;
  double precision = 0.0;
  double recall = 0.0;
};

PrfScores answer_em_f1(std::string_view prediction, std::string_view gold);
PrfScores sup_em_f1(const std::set<SupportingFact>& predicted, const std::set<SupportingFact>& gold);

/// joint EM = product of EMs; joint precision/recall = products; F1 their
/// harmonic mean.
PrfScores joint_metrics(const PrfScores& ans, const PrfScores& sup);

struct RetrievalScores {
  double em = 0.0;
  double f1 = 0.0;
  double gold = 0.0;
};

/// `selected` is the top-2 selection, `gold` the relevant paragraphs and
/// `answer_paragraphs` those containing the answer (paragraph indices).
RetrievalScores retrieval_metrics(const std::vector<int>& selected, const std::vector<int>& gold,
                                  const std::vector<int>& answer_paragraphs);

struct MetricReport {
  double ans_em = 0, ans_f1 = 0, sup_em = 0, sup_f1 = 0, joint_em = 0, joint_f1 = 0;
  std::optional<double> retrieval_em, retrieval_f1, retrieval_gold;
  std::size_t count = 0;

  nlohmann::json to_json() const;
  std::string to_table() const;
};

/// Running mean over examples.
class MetricAccumulator {
 public:
  void add(const PrfScores& ans, const PrfScores& sup);
  void add_retrieval(const RetrievalScores& r);
  MetricReport report() const;

 private:
  double sums_[6] = {0, 0, 0, 0, 0, 0};
  double retrieval_[3] = {0, 0, 0};
  std::size_t n_ = 0;
  std::size_t n_retrieval_ = 0;
};

}  // namespace s2g
