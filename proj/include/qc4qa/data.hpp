#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace qc4qa {

enum class Domain { Source, Target };

std::string_view to_string(Domain domain);

// The six coarse TREC answer-type classes, in their canonical order.
enum class CoarseClass : std::uint8_t { ABBR = 0, DESC, ENTY, HUM, LOC, NUM };

inline constexpr int kNumCoarseClasses = 6;
inline constexpr std::array<std::string_view, kNumCoarseClasses> kCoarseClassNames = {
    "ABBR", "DESC", "ENTY", "HUM", "LOC", "NUM"};

// Either a supervised coarse class or an unsupervised cluster index. Ordering
// puts all coarse tags before all cluster indices.
class QuestionClass {
 public:
  enum class Kind : std::uint8_t { Coarse, Cluster };

  static QuestionClass coarse(CoarseClass c) { return {Kind::Coarse, static_cast<int>(c)}; }
  static QuestionClass cluster(int index);
  // Accepts a coarse tag ("HUM") or a decimal cluster index ("3").
  static QuestionClass parse(std::string_view text);

  Kind kind() const { return kind_; }
  bool is_cluster() const { return kind_ == Kind::Cluster; }
  // Dense index: coarse classes 0..5, clusters 0..k-1.
  int index() const { return value_; }
  CoarseClass coarse_class() const;
  std::string to_string() const;

  auto operator<=>(const QuestionClass&) const = default;

 private:
  QuestionClass(Kind kind, int value) : kind_(kind), value_(value) {}
  Kind kind_;
  int value_;
};

// Inclusive token span over a context.
struct Span {
  int start = 0;
  int end = 0;

  int length() const { return end - start + 1; }
  bool valid_for(std::size_t context_len) const {
    return start >= 0 && start <= end && static_cast<std::size_t>(end) < context_len;
  }
  auto operator<=>(const Span&) const = default;
};

struct QASample {
  std::string id;
  std::vector<int> question;
  std::vector<int> context;
  std::optional<Span> answer;
  Domain domain = Domain::Source;
  std::optional<QuestionClass> qclass;
  bool pseudo = false;
  std::optional<double> confidence;

  bool operator==(const QASample&) const = default;
};

// Token-string <-> id map; ids are assigned in first-seen order.
class Vocabulary {
 public:
  Vocabulary() = default;
  explicit Vocabulary(const std::vector<std::string>& tokens);

  int intern(std::string_view token);
  std::optional<int> find(std::string_view token) const;
  const std::string& token(int id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  // Whitespace tokenization. With grow=false an unknown token throws.
  std::vector<int> tokenize(std::string_view text, bool grow = true);
  std::string detokenize(const std::vector<int>& ids) const;

  bool operator==(const Vocabulary& other) const { return tokens_ == other.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> ids_;
};

struct Corpus {
  std::vector<QASample> samples;
  Vocabulary vocab;
  Domain domain = Domain::Source;

  std::size_t size() const { return samples.size(); }
  // Checks token bounds, id uniqueness, span bounds and the pseudo/confidence pairing.
  void validate() const;
};

// Reads a JSONL corpus. Tokens are interned into `vocab` (which may be
// pre-populated so several files share ids); with grow=false unknown tokens
// are rejected.
Corpus load_jsonl(const std::filesystem::path& path, Domain domain, Vocabulary vocab = {},
                  bool grow = true);
void save_jsonl(const Corpus& corpus, const std::filesystem::path& path);

std::map<QuestionClass, double> class_histogram(const Corpus& corpus);

void save_vocab(const Vocabulary& vocab, const std::filesystem::path& path);
Vocabulary load_vocab(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Synthetic corpora.

struct SyntheticSpec {
  int vocab_size = 600;
  int n_samples = 1000;
  std::array<double, kNumCoarseClasses> class_mixture = {1.0 / 6, 1.0 / 6, 1.0 / 6,
                                                          1.0 / 6, 1.0 / 6, 1.0 / 6};
  double cloze_fraction = 0.0;
  double vocab_drift = 0.0;
  int context_len = 24;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SyntheticSplits {
  Corpus source;               // labeled
  Corpus target_train;         // answers stripped
  Corpus target_dev;           // labeled, for evaluation only
  Corpus target_train_labels;  // target_train with gold answers kept
};

// Every token either generator can emit, in a fixed order. All synthetic
// corpora of one (source, target) pair share this vocabulary.
Vocabulary synthetic_vocabulary(const SyntheticSpec& source, const SyntheticSpec& target);

SyntheticSplits generate_synthetic(const SyntheticSpec& source, const SyntheticSpec& target,
                                   int dev_samples);

// Labeled question-only set (empty contexts) drawn from both domains' token
// pools with a uniform class mixture; used to train the supervised classifier.
Corpus generate_question_bank(const SyntheticSpec& source, const SyntheticSpec& target,
                              int n_questions, double cloze_fraction, std::uint64_t seed);

// Answer-token category names emitted by the generator, exposed for tests.
std::string_view answer_token_kind(std::string_view token);

}  // namespace qc4qa
