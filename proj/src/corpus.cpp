#include "s2g/corpus.hpp"

#include "s2g/random.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

namespace s2g {

using nlohmann::json;

AnswerType answer_type_of(const std::string& answer) {
  const std::string a = lowercase(answer);
  if (a == "yes") return AnswerType::Yes;
  if (a == "no") return AnswerType::No;
  return AnswerType::Span;
}

int MhrcExample::paragraph_index(const std::string& title) const {
  for (std::size_t i = 0; i < context.size(); ++i) {
    if (context[i].title == title) return static_cast<int>(i);
  }
  return -1;
}

void MhrcExample::validate() const {
  if (question.empty()) throw ValidationError("example " + id + ": empty question");
  if (answer.empty()) throw ValidationError("example " + id + ": empty answer");
  bool answer_found = answer_type != AnswerType::Span;
  for (const auto& sf : supporting_facts) {
    const int p = paragraph_index(sf.title);
    if (p < 0) throw ValidationError("example " + id + ": supporting fact cites missing title '" + sf.title + "'");
    const auto& sentences = context[static_cast<std::size_t>(p)].sentences;
    if (sf.sentence < 0 || sf.sentence >= static_cast<int>(sentences.size()))
      throw ValidationError("example " + id + ": supporting fact (" + sf.title + ", " + std::to_string(sf.sentence) +
                            ") has no such sentence");
    if (!answer_found && sentences[static_cast<std::size_t>(sf.sentence)].find(answer) != std::string::npos)
      answer_found = true;
  }
  if (!answer_found)
    throw ValidationError("example " + id + ": answer '" + answer + "' does not occur in any supporting sentence");
}

std::vector<ParagraphLabels> paragraph_labels(const MhrcExample& ex) {
  std::vector<ParagraphLabels> labels(ex.context.size());
  for (const auto& sf : ex.supporting_facts) {
    const int p = ex.paragraph_index(sf.title);
    if (p >= 0) labels[static_cast<std::size_t>(p)].is_relevant = true;
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (!labels[i].is_relevant) continue;
    if (ex.answer_type != AnswerType::Span) {
      labels[i].has_answer = true;
      continue;
    }
    for (const auto& s : ex.context[i].sentences) {
      if (s.find(ex.answer) != std::string::npos) {
        labels[i].has_answer = true;
        break;
      }
    }
  }
  return labels;
}

namespace {

std::string require_string(const json& rec, const char* key, std::size_t index) {
  if (!rec.contains(key) || !rec[key].is_string())
    throw ValidationError("record " + std::to_string(index) + ": field '" + key + "' missing or not a string");
  return rec[key].get<std::string>();
}

MhrcExample parse_record(const json& rec, std::size_t index) {
  if (!rec.is_object()) throw ValidationError("record " + std::to_string(index) + ": not an object");
  MhrcExample ex;
  ex.id = require_string(rec, "_id", index);
  ex.question = require_string(rec, "question", index);
  ex.answer = require_string(rec, "answer", index);
  ex.answer_type = answer_type_of(ex.answer);
  if (rec.contains("type") && rec["type"].is_string()) ex.type = rec["type"].get<std::string>();

  const std::string where = "record " + std::to_string(index) + " (" + ex.id + ")";
  if (!rec.contains("context") || !rec["context"].is_array()) throw ValidationError(where + ": 'context' must be an array");
  for (const auto& para : rec["context"]) {
    if (!para.is_array() || para.size() != 2 || !para[0].is_string() || !para[1].is_array())
      throw ValidationError(where + ": context entries must be [title, [sentences]]");
    ParagraphText p;
    p.title = para[0].get<std::string>();
    for (const auto& s : para[1]) {
      if (!s.is_string()) throw ValidationError(where + ": sentences must be strings");
      p.sentences.push_back(s.get<std::string>());
    }
    ex.context.push_back(std::move(p));
  }
  if (!rec.contains("supporting_facts") || !rec["supporting_facts"].is_array())
    throw ValidationError(where + ": 'supporting_facts' must be an array");
  for (const auto& sf : rec["supporting_facts"]) {
    if (!sf.is_array() || sf.size() != 2 || !sf[0].is_string() || !sf[1].is_number_integer())
      throw ValidationError(where + ": supporting facts must be [title, sentence_index]");
    ex.supporting_facts.push_back({sf[0].get<std::string>(), sf[1].get<int>()});
  }
  try {
    ex.validate();
  } catch (const ValidationError& e) {
    throw ValidationError(where + ": " + e.what());
  }
  return ex;
}

}  // namespace

std::vector<MhrcExample> parse_distractor_dataset(const json& doc) {
  if (!doc.is_array()) throw ValidationError("dataset must be a JSON array of records");
  std::vector<MhrcExample> out;
  out.reserve(doc.size());
  for (std::size_t i = 0; i < doc.size(); ++i) out.push_back(parse_record(doc[i], i));
  return out;
}

std::vector<MhrcExample> load_distractor_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read dataset " + path);
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw ValidationError("dataset " + path + " is not valid JSON: " + e.what());
  }
  return parse_distractor_dataset(doc);
}

json to_json(const std::vector<MhrcExample>& examples) {
  json doc = json::array();
  for (const auto& ex : examples) {
    json rec;
    rec["_id"] = ex.id;
    rec["question"] = ex.question;
    rec["answer"] = ex.answer;
    if (!ex.type.empty()) rec["type"] = ex.type;
    json context = json::array();
    for (const auto& p : ex.context) context.push_back(json::array({p.title, p.sentences}));
    rec["context"] = std::move(context);
    json sfs = json::array();
    for (const auto& sf : ex.supporting_facts) sfs.push_back(json::array({sf.title, sf.sentence}));
    rec["supporting_facts"] = std::move(sfs);
    doc.push_back(std::move(rec));
  }
  return doc;
}

void save_distractor_dataset(const std::string& path, const std::vector<MhrcExample>& examples) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write dataset " + path);
  out << to_json(examples).dump() << '\n';
  if (!out) throw IoError("failed writing dataset " + path);
}

// ---------------------------------------------------------------------------
// Synthetic corpus

void SyntheticSpec::validate() const {
  if (n_examples < 0) throw ValidationError("synthetic: n_examples must be >= 0");
  if (n_paragraphs_per_example < 2 || n_paragraphs_per_example > 10)
    throw ValidationError("synthetic: n_paragraphs_per_example must be in [2, 10]");
  if (fraction_comparison < 0.0 || fraction_comparison > 1.0)
    throw ValidationError("synthetic: fraction_comparison must be in [0, 1]");
  if (entity_vocab_size < 40)
    throw ValidationError("synthetic: entity_vocab_size " + std::to_string(entity_vocab_size) +
                          " is too small (need >= 40 distinct entities)");
}

namespace {

struct EntityPool {
  std::vector<std::string> works;
  std::vector<std::string> persons;
  std::vector<std::string> places;
};

EntityPool make_pool(int size) {
  static const char* onsets[] = {"b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br", "dr", "kr", "tr", "sh", "th"};
  static const char* vowels[] = {"a", "e", "i", "o", "u", "ai", "ou"};
  static const char* codas[] = {"", "", "n", "r", "l", "s", "x", "th"};
  static const char* place_kinds[] = {"city", "valley", "harbor", "delta", "springs", "falls"};
  Rng rng(0x5eedULL + static_cast<std::uint64_t>(size));
  std::set<std::string> seen;
  std::vector<std::string> names;
  while (static_cast<int>(names.size()) < size) {
    std::string w;
    const int syllables = 2 + static_cast<int>(uniform_index(rng, 2));
    for (int s = 0; s < syllables; ++s) {
      w += onsets[uniform_index(rng, std::size(onsets))];
      w += vowels[uniform_index(rng, std::size(vowels))];
    }
    w += codas[uniform_index(rng, std::size(codas))];
    w[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(w[0])));
    if (seen.insert(lowercase(w)).second) names.push_back(w);
  }
  EntityPool pool;
  const int n_works = size * 2 / 5;
  const int n_persons = size * 2 / 5;
  pool.works.assign(names.begin(), names.begin() + n_works);
  pool.persons.assign(names.begin() + n_works, names.begin() + n_works + n_persons);
  for (auto it = names.begin() + n_works + n_persons; it != names.end(); ++it) {
    for (const char* kind : place_kinds) pool.places.push_back(*it + " " + kind);
  }
  return pool;
}

// Draws distinct entries, excluding anything already used in the example.
class Picker {
 public:
  Picker(const std::vector<std::string>& items, Rng& rng) : items_(items), rng_(rng) {}
  std::string take(std::set<std::string>& used) {
    for (;;) {
      const auto& s = items_[uniform_index(rng_, items_.size())];
      if (used.insert(s).second) return s;
    }
  }

 private:
  const std::vector<std::string>& items_;
  Rng& rng_;
};

const char* pick(Rng& rng, std::initializer_list<const char*> options) {
  return options.begin()[uniform_index(rng, options.size())];
}

std::string year(Rng& rng) { return std::to_string(1950 + uniform_index(rng, 70)); }

struct Builder {
  Rng& rng;
  const SyntheticSpec& spec;
  std::set<std::string>& used;
  Picker& places;

  int sentence_count() {
    return spec.long_paragraphs ? 4 + static_cast<int>(uniform_index(rng, 5)) : 1 + static_cast<int>(uniform_index(rng, 4));
  }

  std::string work_filler(const std::string& w) {
    switch (uniform_index(rng, 4)) {
      case 0: return w + " is a " + pick(rng, {"drama", "comedy", "musical", "documentary", "thriller"}) + " film .";
      case 1: return w + " was released in " + year(rng) + " .";
      case 2: return w + " received " + pick(rng, {"mixed", "positive", "poor", "warm"}) + " reviews .";
      default: return w + " was filmed in " + places.take(used) + " .";
    }
  }

  std::string person_filler(const std::string& p) {
    switch (uniform_index(rng, 3)) {
      case 0: return p + " worked as a " + pick(rng, {"writer", "painter", "teacher", "director", "singer"}) + " .";
      case 1: return p + " lived in " + places.take(used) + " .";
      default: return p + " studied " + pick(rng, {"history", "music", "law", "physics", "drama"}) + " .";
    }
  }

  // Places the key sentence at a random position among fillers; returns its index.
  template <typename Filler>
  int paragraph(ParagraphText& out, const std::string& title, const std::string& key, Filler filler) {
    out.title = title;
    const int n = sentence_count();
    const int at = static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(n)));
    for (int i = 0; i < n; ++i) out.sentences.push_back(i == at ? key : filler(title));
    return at;
  }
};

MhrcExample make_example(const EntityPool& pool, const SyntheticSpec& spec, Rng& rng, bool comparison, bool yes,
                         const std::string& id) {
  std::set<std::string> used;
  Picker works(pool.works, rng), persons(pool.persons, rng), places(pool.places, rng);
  Builder b{rng, spec, used, places};
  auto work_fill = [&](const std::string& w) { return b.work_filler(w); };
  auto person_fill = [&](const std::string& p) { return b.person_filler(p); };

  MhrcExample ex;
  ex.id = id;
  std::vector<ParagraphText> paras;
  const int n_distractors = spec.n_paragraphs_per_example - 2;

  if (!comparison) {
    const std::string w1 = works.take(used), p1 = persons.take(used), l1 = places.take(used);
    ex.type = "bridge";
    ex.question = "Where was the creator of " + w1 + " born ?";
    ex.answer = l1;
    ex.answer_type = AnswerType::Span;
    ParagraphText a, bpara;
    const int sa = b.paragraph(a, w1, w1 + " was created by " + p1 + " .", work_fill);
    const int sb = b.paragraph(bpara, p1, p1 + " was born in " + l1 + " .", person_fill);
    ex.supporting_facts = {{w1, sa}, {p1, sb}};
    paras.push_back(std::move(a));
    paras.push_back(std::move(bpara));
    for (int d = 0; d < n_distractors; ++d) {
      ParagraphText para;
      const auto kind = d < 2 ? d : uniform_index(rng, 3);
      if (kind == 0) {
        // Same relation as the second hop, different person.
        const std::string p = persons.take(used);
        b.paragraph(para, p, p + " was born in " + places.take(used) + " .", person_fill);
      } else if (kind == 1) {
        // Same relation as the first hop, unrelated work.
        const std::string w = works.take(used);
        b.paragraph(para, w, w + " was created by " + persons.take(used) + " .", work_fill);
      } else {
        // Mentions the question entity without completing the chain.
        const std::string w = works.take(used);
        b.paragraph(para, w, w + " was inspired by " + w1 + " .", work_fill);
      }
      paras.push_back(std::move(para));
    }
  } else {
    const std::string p1 = persons.take(used), p2 = persons.take(used);
    const std::string l1 = places.take(used);
    const std::string l2 = yes ? l1 : places.take(used);
    ex.type = "comparison";
    ex.question = "Were " + p1 + " and " + p2 + " born in the same place ?";
    ex.answer = yes ? "yes" : "no";
    ex.answer_type = yes ? AnswerType::Yes : AnswerType::No;
    ParagraphText a, bpara;
    const int sa = b.paragraph(a, p1, p1 + " was born in " + l1 + " .", person_fill);
    const int sb = b.paragraph(bpara, p2, p2 + " was born in " + l2 + " .", person_fill);
    ex.supporting_facts = {{p1, sa}, {p2, sb}};
    paras.push_back(std::move(a));
    paras.push_back(std::move(bpara));
    for (int d = 0; d < n_distractors; ++d) {
      ParagraphText para;
      const auto kind = d < 2 ? d : uniform_index(rng, 3);
      if (kind == 0) {
        const std::string p = persons.take(used);
        b.paragraph(para, p, p + " was born in " + places.take(used) + " .", person_fill);
      } else if (kind == 1) {
        // Mentions one of the compared persons in a different relation.
        const std::string w = works.take(used);
        b.paragraph(para, w, w + " was created by " + (uniform_index(rng, 2) ? p1 : p2) + " .", work_fill);
      } else {
        const std::string w = works.take(used);
        b.paragraph(para, w, w + " was created by " + persons.take(used) + " .", work_fill);
      }
      paras.push_back(std::move(para));
    }
  }
  shuffle(paras.begin(), paras.end(), rng);
  ex.context = std::move(paras);
  return ex;
}

}  // namespace

std::vector<MhrcExample> generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  const EntityPool pool = make_pool(spec.entity_vocab_size);
  Rng rng(spec.seed);

  const auto n = static_cast<std::size_t>(spec.n_examples);
  const auto n_comparison = static_cast<std::size_t>(std::llround(spec.fraction_comparison * static_cast<double>(n)));
  std::vector<char> is_comparison(n, 0);
  std::fill(is_comparison.begin(), is_comparison.begin() + static_cast<std::ptrdiff_t>(n_comparison), 1);
  shuffle(is_comparison.begin(), is_comparison.end(), rng);

  std::vector<MhrcExample> out;
  out.reserve(n);
  std::size_t comparisons = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const bool cmp = is_comparison[i] != 0;
    const bool yes = cmp && (comparisons++ % 2 == 0);
    out.push_back(make_example(pool, spec, rng, cmp, yes,
                               "syn" + std::to_string(spec.seed) + "-" + std::to_string(i)));
  }
  return out;
}

}  // namespace s2g
