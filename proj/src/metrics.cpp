#include "s2g/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <map>
#include <sstream>

namespace s2g {

std::string normalize_answer(std::string_view s) {
  std::string cleaned;
  cleaned.reserve(s.size());
  for (char c : s) {
    const auto u = static_cast<unsigned char>(c);
    if (u < 0x80 && std::ispunct(u)) continue;
    cleaned += static_cast<char>(std::tolower(u));
  }
  std::istringstream words(cleaned);
  std::string w, out;
  while (words >> w) {
    if (w == "a" || w == "an" || w == "the") continue;
    if (!out.empty()) out += ' ';
    out += w;
  }
  return out;
}

namespace {

double harmonic(double p, double r) { return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0; }

std::vector<std::string> words_of(const std::string& s) {
  std::istringstream in(s);
  std::vector<std::string> out;
  std::string w;
  while (in >> w) out.push_back(w);
  return out;
}

bool is_yes_no(const std::string& s) { return s == "yes" || s == "no" || s == "noanswer"; }

}  // namespace

PrfScores answer_em_f1(std::string_view prediction, std::string_view gold) {
  const std::string p = normalize_answer(prediction);
  const std::string g = normalize_answer(gold);
  PrfScores s;
  s.em = p == g ? 1.0 : 0.0;
  if ((is_yes_no(p) || is_yes_no(g)) && p != g) return s;
  const auto pw = words_of(p);
  const auto gw = words_of(g);
  if (pw.empty() && gw.empty()) return {1.0, 1.0, 1.0, 1.0};
  std::map<std::string, int> counts;
  for (const auto& w : gw) ++counts[w];
  int common = 0;
  for (const auto& w : pw) {
    auto it = counts.find(w);
    if (it != counts.end() && it->second > 0) {
      --it->second;
      ++common;
    }
  }
  if (common == 0) return s;
  s.precision = static_cast<double>(common) / static_cast<double>(pw.size());
  s.recall = static_cast<double>(common) / static_cast<double>(gw.size());
  s.f1 = harmonic(s.precision, s.recall);
  return s;
}

PrfScores sup_em_f1(const std::set<SupportingFact>& predicted, const std::set<SupportingFact>& gold) {
  if (predicted.empty() && gold.empty()) return {1.0, 1.0, 1.0, 1.0};
  std::size_t tp = 0;
  for (const auto& f : predicted) tp += gold.count(f);
  const std::size_t fp = predicted.size() - tp;
  const std::size_t fn = gold.size() - tp;
  PrfScores s;
  s.precision = predicted.empty() ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
  s.recall = gold.empty() ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
  s.f1 = harmonic(s.precision, s.recall);
  s.em = (fp == 0 && fn == 0) ? 1.0 : 0.0;
  return s;
}

PrfScores joint_metrics(const PrfScores& ans, const PrfScores& sup) {
  PrfScores j;
  j.precision = ans.precision * sup.precision;
  j.recall = ans.recall * sup.recall;
  j.f1 = harmonic(j.precision, j.recall);
  j.em = ans.em * sup.em;
  return j;
}

RetrievalScores retrieval_metrics(const std::vector<int>& selected, const std::vector<int>& gold,
                                  const std::vector<int>& answer_paragraphs) {
  const std::set<int> sel(selected.begin(), selected.end());
  const std::set<int> g(gold.begin(), gold.end());
  std::size_t tp = 0;
  for (int s : sel) tp += g.count(s);
  RetrievalScores r;
  const double p = sel.empty() ? 0.0 : static_cast<double>(tp) / static_cast<double>(sel.size());
  const double rec = g.empty() ? 0.0 : static_cast<double>(tp) / static_cast<double>(g.size());
  r.f1 = harmonic(p, rec);
  r.em = sel == g ? 1.0 : 0.0;
  r.gold = std::any_of(answer_paragraphs.begin(), answer_paragraphs.end(), [&](int a) { return sel.count(a) > 0; })
               ? 1.0
               : 0.0;
  return r;
}

void MetricAccumulator::add(const PrfScores& ans, const PrfScores& sup) {
  const PrfScores joint = joint_metrics(ans, sup);
  const double v[6] = {ans.em, ans.f1, sup.em, sup.f1, joint.em, joint.f1};
  for (int i = 0; i < 6; ++i) sums_[i] += v[i];
  ++n_;
}

void MetricAccumulator::add_retrieval(const RetrievalScores& r) {
  retrieval_[0] += r.em;
  retrieval_[1] += r.f1;
  retrieval_[2] += r.gold;
  ++n_retrieval_;
}

MetricReport MetricAccumulator::report() const {
  MetricReport rep;
  rep.count = n_;
  if (n_ > 0) {
    const double inv = 1.0 / static_cast<double>(n_);
    rep.ans_em = sums_[0] * inv;
    rep.ans_f1 = sums_[1] * inv;
    rep.sup_em = sums_[2] * inv;
    rep.sup_f1 = sums_[3] * inv;
    rep.joint_em = sums_[4] * inv;
    rep.joint_f1 = sums_[5] * inv;
  }
  if (n_retrieval_ > 0) {
    const double inv = 1.0 / static_cast<double>(n_retrieval_);
    rep.retrieval_em = retrieval_[0] * inv;
    rep.retrieval_f1 = retrieval_[1] * inv;
    rep.retrieval_gold = retrieval_[2] * inv;
  }
  return rep;
}

nlohmann::json MetricReport::to_json() const {
  nlohmann::json j;
  j["count"] = count;
  j["ans_em"] = ans_em;
  j["ans_f1"] = ans_f1;
  j["sup_em"] = sup_em;
  j["sup_f1"] = sup_f1;
  j["joint_em"] = joint_em;
  j["joint_f1"] = joint_f1;
  if (retrieval_em) {
    j["retrieval_em"] = *retrieval_em;
    j["retrieval_f1"] = *retrieval_f1;
    j["retrieval_gold"] = *retrieval_gold;
  }
  return j;
}

std::string MetricReport::to_table() const {
  char buf[512];
  std::string out;
  std::snprintf(buf, sizeof buf, "%-10s %8s %8s\n", "task", "EM", "F1");
  out += buf;
  std::snprintf(buf, sizeof buf, "%-10s %8.4f %8.4f\n", "ans", ans_em, ans_f1);
  out += buf;
  std::snprintf(buf, sizeof buf, "%-10s %8.4f %8.4f\n", "sup", sup_em, sup_f1);
  out += buf;
  std::snprintf(buf, sizeof buf, "%-10s %8.4f %8.4f\n", "joint", joint_em, joint_f1);
  out += buf;
  if (retrieval_em) {
    std::snprintf(buf, sizeof buf, "%-10s %8.4f %8.4f   gold %.4f\n", "retrieval", *retrieval_em, *retrieval_f1,
                  *retrieval_gold);
    out += buf;
  }
  std::snprintf(buf, sizeof buf, "(%zu examples)\n", count);
  out += buf;
  return out;
}

}  // namespace s2g
