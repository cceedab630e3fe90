#include "qc4qa/data.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

#include "qc4qa/error.hpp"

namespace qc4qa {

using ordered_json = nlohmann::ordered_json;

std::string_view to_string(Domain domain) {
  return domain == Domain::Source ? "source" : "target";
}

QuestionClass QuestionClass::cluster(int index) {
  if (index < 0) throw ValidationError("cluster index must be nonnegative");
  return {Kind::Cluster, index};
}

QuestionClass QuestionClass::parse(std::string_view text) {
  for (int i = 0; i < kNumCoarseClasses; ++i) {
    if (text == kCoarseClassNames[static_cast<std::size_t>(i)]) {
      return coarse(static_cast<CoarseClass>(i));
    }
  }
  int value = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size() || text.empty()) {
    throw ParseError("unknown question class '" + std::string(text) + "'");
  }
  return cluster(value);
}

CoarseClass QuestionClass::coarse_class() const {
  if (kind_ != Kind::Coarse) throw ValidationError("question class is a cluster index");
  return static_cast<CoarseClass>(value_);
}

std::string QuestionClass::to_string() const {
  if (kind_ == Kind::Coarse) return std::string(kCoarseClassNames[static_cast<std::size_t>(value_)]);
  return std::to_string(value_);
}

Vocabulary::Vocabulary(const std::vector<std::string>& tokens) {
  for (const auto& t : tokens) {
    if (find(t)) throw ValidationError("duplicate vocabulary token '" + t + "'");
    intern(t);
  }
}

int Vocabulary::intern(std::string_view token) {
  std::string key(token);
  if (auto it = ids_.find(key); it != ids_.end()) return it->second;
  const int id = static_cast<int>(tokens_.size());
  tokens_.push_back(key);
  ids_.emplace(std::move(key), id);
  return id;
}

std::optional<int> Vocabulary::find(std::string_view token) const {
  if (auto it = ids_.find(std::string(token)); it != ids_.end()) return it->second;
  return std::nullopt;
}

std::vector<int> Vocabulary::tokenize(std::string_view text, bool grow) {
  std::vector<int> ids;
  std::size_t i = 0;
  const auto is_space = [](char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r'; };
  while (i < text.size()) {
    while (i < text.size() && is_space(text[i])) ++i;
    std::size_t j = i;
    while (j < text.size() && !is_space(text[j])) ++j;
    if (j > i) {
      std::string_view tok = text.substr(i, j - i);
      if (grow) {
        ids.push_back(intern(tok));
      } else if (auto id = find(tok)) {
        ids.push_back(*id);
      } else {
        throw ValidationError("token '" + std::string(tok) + "' is not in the vocabulary");
      }
    }
    i = j;
  }
  return ids;
}

std::string Vocabulary::detokenize(const std::vector<int>& ids) const {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) out += ' ';
    out += token(ids[i]);
  }
  return out;
}

void Corpus::validate() const {
  std::unordered_set<std::string> seen;
  const auto vsize = static_cast<int>(vocab.size());
  for (const auto& s : samples) {
    if (!seen.insert(s.id).second) throw ValidationError("duplicate sample id '" + s.id + "'");
    for (const auto* seq : {&s.question, &s.context}) {
      for (int t : *seq) {
        if (t < 0 || t >= vsize) {
          throw ValidationError("sample '" + s.id + "': token id out of vocabulary range");
        }
      }
    }
    if (s.answer && !s.answer->valid_for(s.context.size())) {
      throw ValidationError("sample '" + s.id + "': answer span out of context bounds");
    }
    if (s.pseudo != s.confidence.has_value()) {
      throw ValidationError("sample '" + s.id + "': confidence must be present iff pseudo");
    }
    if (s.confidence && !(*s.confidence >= 0.0 && *s.confidence <= 1.0)) {
      throw ValidationError("sample '" + s.id + "': confidence outside [0,1]");
    }
  }
}

Corpus load_jsonl(const std::filesystem::path& path, Domain domain, Vocabulary vocab, bool grow) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");

  Corpus corpus;
  corpus.domain = domain;
  std::unordered_set<std::string> ids;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path.string() + ":" + std::to_string(line_no);

    ordered_json j;
    try {
      j = ordered_json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(where + ": malformed JSON: " + e.what());
    }
    QASample s;
    s.domain = domain;
    try {
      s.id = j.at("id").get<std::string>();
      s.question = vocab.tokenize(j.at("question").get<std::string>(), grow);
      s.context = vocab.tokenize(j.at("context").get<std::string>(), grow);
      if (auto it = j.find("answer"); it != j.end() && !it->is_null()) {
        s.answer = Span{it->at("start").get<int>(), it->at("end").get<int>()};
      }
      if (auto it = j.find("qclass"); it != j.end() && !it->is_null()) {
        s.qclass = QuestionClass::parse(it->get<std::string>());
      }
      if (auto it = j.find("confidence"); it != j.end() && !it->is_null()) {
        s.confidence = it->get<double>();
        s.pseudo = true;
      }
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(where + ": " + e.what());
    } catch (const ParseError& e) {
      throw ParseError(where + ": " + e.what());
    }
    if (s.answer && !s.answer->valid_for(s.context.size())) {
      throw ValidationError("sample '" + s.id + "': answer span [" + std::to_string(s.answer->start) +
                            ", " + std::to_string(s.answer->end) + "] outside a context of " +
                            std::to_string(s.context.size()) + " tokens");
    }
    if (!ids.insert(s.id).second) throw ValidationError("duplicate sample id '" + s.id + "'");
    corpus.samples.push_back(std::move(s));
  }
  corpus.vocab = std::move(vocab);
  return corpus;
}

void save_jsonl(const Corpus& corpus, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  for (const auto& s : corpus.samples) {
    ordered_json j;
    j["id"] = s.id;
    j["question"] = corpus.vocab.detokenize(s.question);
    j["context"] = corpus.vocab.detokenize(s.context);
    if (s.answer) j["answer"] = {{"start", s.answer->start}, {"end", s.answer->end}};
    if (s.qclass) j["qclass"] = s.qclass->to_string();
    if (s.confidence) j["confidence"] = *s.confidence;
    out << j.dump() << '\n';
  }
  out.flush();
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

std::map<QuestionClass, double> class_histogram(const Corpus& corpus) {
  std::map<QuestionClass, std::size_t> counts;
  for (const auto& s : corpus.samples) {
    if (!s.qclass) throw ValidationError("sample '" + s.id + "' has no question class");
    ++counts[*s.qclass];
  }
  std::map<QuestionClass, double> hist;
  const auto n = static_cast<double>(corpus.samples.size());
  for (const auto& [c, k] : counts) hist.emplace(c, static_cast<double>(k) / n);
  return hist;
}

void save_vocab(const Vocabulary& vocab, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  for (const auto& t : vocab.tokens()) out << t << '\n';
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

Vocabulary load_vocab(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) tokens.push_back(line);
  }
  return Vocabulary(tokens);
}

}  // namespace qc4qa
