#include <algorithm>
#include <cmath>
#include <string>

#include "qc4qa/data.hpp"
#include "qc4qa/error.hpp"
#include "qc4qa/rng.hpp"

namespace qc4qa {
namespace {

// Token pools. Answers of every class are built from class-specific slots;
// HUM and DESC answers span two tokens.
constexpr std::array<std::string_view, 6> kWhTokens = {"what-stands-for", "why", "which",
                                                       "who", "where", "how-many"};
constexpr std::array<std::string_view, 15> kPools = {
    "abbr", "deschead", "desctail", "ent", "perfirst", "perlast", "loc", "num",
    "relabbr", "reldesc", "relenty", "relhum", "relloc", "relnum", "w"};

enum Pool : int {
  kAbbr = 0, kDescHead, kDescTail, kEnt, kPerFirst, kPerLast, kLoc, kNum,
  kRelAbbr, kRelDesc, kRelEnty, kRelHum, kRelLoc, kRelNum, kFiller
};

// Most wh-questions open with a plain "what", so the class must usually be
// read off the relation token; cloze questions only carry the latter.
constexpr std::string_view kGenericWh = "what";
constexpr double kGenericWhRate = 0.8;
constexpr std::string_view kPlaceholder = "@placeholder";
constexpr std::string_view kQuestionMark = "?";
constexpr std::string_view kPeriod = ".";

std::vector<int> answer_slots(CoarseClass c) {
  switch (c) {
    case CoarseClass::ABBR: return {kAbbr};
    case CoarseClass::DESC: return {kDescHead, kDescTail};
    case CoarseClass::ENTY: return {kEnt};
    case CoarseClass::HUM: return {kPerFirst, kPerLast};
    case CoarseClass::LOC: return {kLoc};
    case CoarseClass::NUM: return {kNum};
  }
  return {};
}

int relation_pool(CoarseClass c) { return kRelAbbr + static_cast<int>(c); }

int pool_size(const SyntheticSpec& spec) {
  return std::max(4, spec.vocab_size / static_cast<int>(kPools.size()));
}

std::string pool_token(std::string_view prefix, int pool, int index) {
  std::string t(prefix);
  t += kPools[static_cast<std::size_t>(pool)];
  t += '_';
  t += std::to_string(index);
  return t;
}

// Draws the surface token for one slot. Drifted draws come from the domain's
// exclusive sub-vocabulary; `mix` selects how often.
class TokenSource {
 public:
  TokenSource(Vocabulary& vocab, std::string_view exclusive_prefix, int pool_size, double drift)
      : vocab_(vocab), prefix_(exclusive_prefix), size_(pool_size), drift_(drift) {}

  int draw(int pool, Rng& rng) const {
    const bool exclusive = drift_ > 0.0 && rng.uniform01() < drift_;
    const int index = static_cast<int>(rng.uniform_index(static_cast<std::size_t>(size_)));
    return *vocab_.find(pool_token(exclusive ? prefix_ : std::string_view{}, pool, index));
  }

  int fixed(std::string_view token) const { return *vocab_.find(token); }

 private:
  Vocabulary& vocab_;
  std::string_view prefix_;
  int size_;
  double drift_;
};

std::vector<int> make_question(CoarseClass c, bool cloze, const TokenSource& tokens, Rng& rng) {
  const int rel = tokens.draw(relation_pool(c), rng);
  const int f1 = tokens.draw(kFiller, rng);
  const int f2 = tokens.draw(kFiller, rng);
  if (cloze) {
    return {tokens.fixed(kPlaceholder), rel, f1, f2, tokens.fixed(kPeriod)};
  }
  const bool vague = rng.uniform01() < kGenericWhRate;
  const int wh = tokens.fixed(vague ? kGenericWh : kWhTokens[static_cast<std::size_t>(c)]);
  return {wh, rel, f1, f2, tokens.fixed(kQuestionMark)};
}

QASample make_sample(std::string id, Domain domain, CoarseClass c, const SyntheticSpec& spec,
                     const TokenSource& tokens, Rng& rng) {
  QASample s;
  s.id = std::move(id);
  s.domain = domain;
  s.qclass = QuestionClass::coarse(c);
  s.question = make_question(c, rng.uniform01() < spec.cloze_fraction, tokens, rng);

  // Gold answer plus three distractor answers of other classes.
  std::vector<int> others;
  for (int k = 0; k < kNumCoarseClasses; ++k) {
    if (k != static_cast<int>(c)) others.push_back(k);
  }
  rng.shuffle(others);
  std::vector<std::vector<int>> phrases;
  phrases.reserve(4);
  std::vector<CoarseClass> phrase_class{c};
  for (int k = 0; k < 3; ++k) phrase_class.push_back(static_cast<CoarseClass>(others[static_cast<std::size_t>(k)]));
  for (CoarseClass pc : phrase_class) {
    std::vector<int> phrase;
    for (int pool : answer_slots(pc)) phrase.push_back(tokens.draw(pool, rng));
    phrases.push_back(std::move(phrase));
  }
  std::vector<std::size_t> order = {0, 1, 2, 3};
  rng.shuffle(order);

  std::size_t phrase_tokens = 0;
  for (const auto& p : phrases) phrase_tokens += p.size();
  const std::size_t fillers = static_cast<std::size_t>(spec.context_len) - phrase_tokens;
  std::vector<std::size_t> gap(order.size() + 1, 0);
  for (std::size_t f = 0; f < fillers; ++f) ++gap[rng.uniform_index(gap.size())];

  for (std::size_t slot = 0; slot <= order.size(); ++slot) {
    for (std::size_t f = 0; f < gap[slot]; ++f) s.context.push_back(tokens.draw(kFiller, rng));
    if (slot == order.size()) break;
    const std::size_t which = order[slot];
    const int start = static_cast<int>(s.context.size());
    s.context.insert(s.context.end(), phrases[which].begin(), phrases[which].end());
    if (which == 0) s.answer = Span{start, static_cast<int>(s.context.size()) - 1};
  }
  return s;
}

std::string padded_id(std::string_view prefix, int i) {
  std::string n = std::to_string(i);
  return std::string(prefix) + std::string(n.size() < 6 ? 6 - n.size() : 0, '0') + n;
}

Corpus generate_domain(std::string_view id_prefix, Domain domain, const SyntheticSpec& spec,
                       int n, std::string_view exclusive_prefix, Vocabulary& vocab, Rng& rng) {
  Corpus corpus;
  corpus.domain = domain;
  TokenSource tokens(vocab, exclusive_prefix, pool_size(spec), spec.vocab_drift);
  corpus.samples.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const auto c = static_cast<CoarseClass>(rng.categorical(spec.class_mixture));
    corpus.samples.push_back(make_sample(padded_id(id_prefix, i), domain, c, spec, tokens, rng));
  }
  return corpus;
}

}  // namespace

void SyntheticSpec::validate() const {
  if (vocab_size <= 0) throw ValidationError("vocab_size must be positive");
  if (n_samples <= 0) throw ValidationError("n_samples must be positive");
  double total = 0.0;
  for (double p : class_mixture) {
    if (!(p >= 0.0)) throw ValidationError("class_mixture entries must be nonnegative");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw ValidationError("class_mixture must sum to 1 (got " + std::to_string(total) + ")");
  }
  if (!(cloze_fraction >= 0.0 && cloze_fraction <= 1.0)) {
    throw ValidationError("cloze_fraction must lie in [0,1]");
  }
  if (!(vocab_drift >= 0.0 && vocab_drift <= 1.0)) {
    throw ValidationError("vocab_drift must lie in [0,1]");
  }
  if (context_len < 8) throw ValidationError("context_len must be at least 8");
}

Vocabulary synthetic_vocabulary(const SyntheticSpec& source, const SyntheticSpec& target) {
  Vocabulary vocab;
  vocab.intern(kPlaceholder);
  vocab.intern(kQuestionMark);
  vocab.intern(kPeriod);
  vocab.intern(kGenericWh);
  for (auto wh : kWhTokens) vocab.intern(wh);
  const int shared = std::max(pool_size(source), pool_size(target));
  for (int pool = 0; pool < static_cast<int>(kPools.size()); ++pool) {
    for (int i = 0; i < shared; ++i) vocab.intern(pool_token("", pool, i));
    for (int i = 0; i < pool_size(source); ++i) vocab.intern(pool_token("src.", pool, i));
    for (int i = 0; i < pool_size(target); ++i) vocab.intern(pool_token("tgt.", pool, i));
  }
  return vocab;
}

SyntheticSplits generate_synthetic(const SyntheticSpec& source, const SyntheticSpec& target,
                                   int dev_samples) {
  source.validate();
  target.validate();
  if (dev_samples < 0) throw ValidationError("dev_samples must be nonnegative");

  Vocabulary vocab = synthetic_vocabulary(source, target);
  SyntheticSplits out;

  Rng src_rng(source.seed);
  out.source = generate_domain("src-", Domain::Source, source, source.n_samples, "src.", vocab, src_rng);

  Rng tgt_rng(target.seed);
  out.target_train_labels =
      generate_domain("tgt-", Domain::Target, target, target.n_samples, "tgt.", vocab, tgt_rng);

  Rng dev_rng(stage_seed(target.seed, "dev"));
  out.target_dev = generate_domain("dev-", Domain::Target, target, dev_samples, "tgt.", vocab, dev_rng);

  out.target_train = out.target_train_labels;
  for (auto& s : out.target_train.samples) s.answer.reset();

  out.source.vocab = vocab;
  out.target_train.vocab = vocab;
  out.target_dev.vocab = vocab;
  out.target_train_labels.vocab = vocab;
  return out;
}

Corpus generate_question_bank(const SyntheticSpec& source, const SyntheticSpec& target,
                              int n_questions, double cloze_fraction, std::uint64_t seed) {
  source.validate();
  target.validate();
  Vocabulary vocab = synthetic_vocabulary(source, target);
  // Questions drawn half from each domain's token pools.
  TokenSource src_tokens(vocab, "src.", pool_size(source), 0.5);
  TokenSource tgt_tokens(vocab, "tgt.", pool_size(target), 0.5);
  Rng rng(seed);
  Corpus bank;
  bank.domain = Domain::Source;
  for (int i = 0; i < n_questions; ++i) {
    const auto c = static_cast<CoarseClass>(rng.uniform_index(kNumCoarseClasses));
    const bool cloze = rng.uniform01() < cloze_fraction;
    const TokenSource& tokens = rng.uniform01() < 0.5 ? src_tokens : tgt_tokens;
    QASample s;
    s.id = padded_id("qc-", i);
    s.qclass = QuestionClass::coarse(c);
    s.question = make_question(c, cloze, tokens, rng);
    bank.samples.push_back(std::move(s));
  }
  bank.vocab = std::move(vocab);
  return bank;
}

std::string_view answer_token_kind(std::string_view token) {
  if (token.starts_with("src.") || token.starts_with("tgt.")) token.remove_prefix(4);
  const auto underscore = token.rfind('_');
  if (underscore == std::string_view::npos) return token;
  return token.substr(0, underscore);
}

}  // namespace qc4qa
