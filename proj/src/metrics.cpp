#include "evalkit/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <map>
#include <numeric>
#include <set>
#include <unordered_set>

#include "evalkit/stats.hpp"

namespace evalkit {
namespace metrics {

namespace {

void check_pair_lengths(std::size_t a, std::size_t b) {
  if (a == 0 || b == 0) raise(ErrorCode::EmptyInput, "empty input");
  if (a != b)
    raise(ErrorCode::LengthMismatch,
          std::to_string(a) + " predictions vs " + std::to_string(b) +
              " references");
}

double safe_ratio(double num, double den) { return den == 0.0 ? 0.0 : num / den; }

double f1_of(double p, double r) { return p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r); }

}  // namespace

double accuracy(std::span<const std::int64_t> predictions,
                std::span<const std::int64_t> references) {
  check_pair_lengths(predictions.size(), references.size());
  std::size_t correct = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i)
    if (predictions[i] == references[i]) ++correct;
  return double(correct) / double(predictions.size());
}

Averaging averaging_from_name(const std::string& name) {
  if (name == "binary") return Averaging::Binary;
  if (name == "macro") return Averaging::Macro;
  if (name == "micro") return Averaging::Micro;
  if (name == "weighted") return Averaging::Weighted;
  raise(ErrorCode::UnknownAveraging, "unknown averaging: " + name);
}

Prf precision_recall_f1(std::span<const std::int64_t> predictions,
                        std::span<const std::int64_t> references,
                        Averaging averaging, std::int64_t pos_label) {
  check_pair_lengths(predictions.size(), references.size());
  const std::size_t n = predictions.size();

  auto one_vs_rest = [&](std::int64_t cls) {
    std::uint64_t tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < n; ++i) {
      bool p = predictions[i] == cls;
      bool r = references[i] == cls;
      if (p && r) ++tp;
      else if (p) ++fp;
      else if (r) ++fn;
    }
    Prf out;
    out.precision = safe_ratio(double(tp), double(tp + fp));
    out.recall = safe_ratio(double(tp), double(tp + fn));
    out.f1 = f1_of(out.precision, out.recall);
    return out;
  };

  switch (averaging) {
    case Averaging::Binary:
      return one_vs_rest(pos_label);
    case Averaging::Macro: {
      std::set<std::int64_t> classes(references.begin(), references.end());
      classes.insert(predictions.begin(), predictions.end());
      Prf sum;
      for (auto cls : classes) {
        Prf c = one_vs_rest(cls);
        sum.precision += c.precision;
        sum.recall += c.recall;
        sum.f1 += c.f1;
      }
      double k = double(classes.size());
      return {sum.precision / k, sum.recall / k, sum.f1 / k};
    }
    case Averaging::Micro: {
      std::set<std::int64_t> classes(references.begin(), references.end());
      classes.insert(predictions.begin(), predictions.end());
      std::uint64_t tp = 0, fp = 0, fn = 0;
      for (auto cls : classes) {
        for (std::size_t i = 0; i < n; ++i) {
          bool p = predictions[i] == cls;
          bool r = references[i] == cls;
          if (p && r) ++tp;
          else if (p) ++fp;
          else if (r) ++fn;
        }
      }
      Prf out;
      out.precision = safe_ratio(double(tp), double(tp + fp));
      out.recall = safe_ratio(double(tp), double(tp + fn));
      out.f1 = f1_of(out.precision, out.recall);
      return out;
    }
    case Averaging::Weighted: {
      std::map<std::int64_t, std::uint64_t> support;
      for (auto r : references) support[r]++;
      Prf sum;
      for (const auto& [cls, count] : support) {
        Prf c = one_vs_rest(cls);
        double w = double(count) / double(n);
        sum.precision += w * c.precision;
        sum.recall += w * c.recall;
        sum.f1 += w * c.f1;
      }
      return sum;
    }
  }
  raise(ErrorCode::UnknownAveraging, "bad averaging value");
}

std::string normalize_casefold_strip(const std::string& s) {
  std::size_t begin = 0, end = s.size();
  auto is_space = [](unsigned char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f';
  };
  while (begin < end && is_space((unsigned char)s[begin])) ++begin;
  while (end > begin && is_space((unsigned char)s[end - 1])) --end;
  std::string out = s.substr(begin, end - begin);
  for (char& c : out)
    if (c >= 'A' && c <= 'Z') c = char(c - 'A' + 'a');
  return out;
}

double exact_match(std::span<const std::string> predictions,
                   std::span<const std::string> references, bool normalize) {
  check_pair_lengths(predictions.size(), references.size());
  std::size_t hits = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    if (normalize) {
      if (normalize_casefold_strip(predictions[i]) ==
          normalize_casefold_strip(references[i]))
        ++hits;
    } else if (predictions[i] == references[i]) {
      ++hits;
    }
  }
  return double(hits) / double(predictions.size());
}

std::vector<std::string> tokenize_13a(const std::string& text) {
  std::string padded;
  padded.reserve(text.size() + 16);
  const std::size_t n = text.size();
  auto is_digit = [](unsigned char c) { return c >= '0' && c <= '9'; };
  auto is_word = [](unsigned char c) {
    return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') ||
           (c >= 'A' && c <= 'Z') || c >= 0x80;
  };
  for (std::size_t i = 0; i < n; ++i) {
    unsigned char c = (unsigned char)text[i];
    if (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f') {
      padded.push_back(' ');
    } else if (is_word(c)) {
      padded.push_back(char(c));
    } else if (c == '.' && i > 0 && i + 1 < n &&
               is_digit((unsigned char)text[i - 1]) &&
               is_digit((unsigned char)text[i + 1])) {
      padded.push_back('.');
    } else {
      padded.push_back(' ');
      padded.push_back(char(c));
      padded.push_back(' ');
    }
  }
  std::vector<std::string> tokens;
  std::size_t pos = 0;
  while (pos < padded.size()) {
    while (pos < padded.size() && padded[pos] == ' ') ++pos;
    std::size_t start = pos;
    while (pos < padded.size() && padded[pos] != ' ') ++pos;
    if (pos > start) tokens.push_back(padded.substr(start, pos - start));
  }
  return tokens;
}

namespace {

using Ngram = std::vector<std::string>;

std::map<Ngram, std::uint64_t> ngram_counts(const std::vector<std::string>& tokens,
                                            int order) {
  std::map<Ngram, std::uint64_t> counts;
  if (int(tokens.size()) < order) return counts;
  for (std::size_t i = 0; i + order <= tokens.size(); ++i) {
    Ngram g(tokens.begin() + i, tokens.begin() + i + order);
    counts[std::move(g)]++;
  }
  return counts;
}

}  // namespace

BleuScore bleu_corpus(
    const std::vector<std::vector<std::string>>& candidates,
    const std::vector<std::vector<std::vector<std::string>>>& reference_sets,
    int max_order, bool add1_smoothing) {
  if (candidates.empty()) raise(ErrorCode::EmptyInput, "empty corpus");
  if (candidates.size() != reference_sets.size())
    raise(ErrorCode::LengthMismatch, "candidate/reference corpus sizes differ");
  if (max_order < 1)
    raise(ErrorCode::InvalidValue, "max_order must be >= 1");

  std::vector<std::uint64_t> matched(max_order, 0), total(max_order, 0);
  std::uint64_t cand_len = 0, ref_len = 0;

  for (std::size_t s = 0; s < candidates.size(); ++s) {
    const auto& cand = candidates[s];
    const auto& refs = reference_sets[s];
    if (refs.empty())
      raise(ErrorCode::EmptyReferenceSet,
            "sentence " + std::to_string(s) + " has no references");

    cand_len += cand.size();
    // closest reference length, ties toward the shorter reference
    std::uint64_t best = refs.front().size();
    for (const auto& r : refs) {
      auto dist = [&](std::uint64_t len) {
        return len > cand.size() ? len - cand.size() : cand.size() - len;
      };
      if (dist(r.size()) < dist(best) ||
          (dist(r.size()) == dist(best) && r.size() < best))
        best = r.size();
    }
    ref_len += best;

    for (int order = 1; order <= max_order; ++order) {
      auto cand_counts = ngram_counts(cand, order);
      std::map<Ngram, std::uint64_t> max_ref_counts;
      for (const auto& r : refs)
        for (const auto& [g, c] : ngram_counts(r, order))
          max_ref_counts[g] = std::max(max_ref_counts[g], c);
      for (const auto& [g, c] : cand_counts) {
        auto it = max_ref_counts.find(g);
        if (it != max_ref_counts.end())
          matched[order - 1] += std::min(c, it->second);
      }
      total[order - 1] +=
          cand.size() >= std::size_t(order) ? cand.size() - order + 1 : 0;
    }
  }

  BleuScore out;
  out.candidate_length = cand_len;
  out.reference_length = ref_len;
  out.precisions.resize(max_order);
  double log_sum = 0.0;
  bool zero_precision = false;
  for (int i = 0; i < max_order; ++i) {
    double num = double(matched[i]);
    double den = double(total[i]);
    if (add1_smoothing && i > 0) {
      num += 1.0;
      den += 1.0;
    }
    double p = den == 0.0 ? 0.0 : num / den;
    out.precisions[i] = p;
    if (p == 0.0)
      zero_precision = true;
    else
      log_sum += std::log(p);
  }

  if (cand_len == 0) {
    out.brevity_penalty = 0.0;
    out.length_ratio = 0.0;
    out.bleu = 0.0;
    return out;
  }
  out.length_ratio = ref_len == 0 ? 0.0 : double(cand_len) / double(ref_len);
  out.brevity_penalty =
      cand_len > ref_len ? 1.0 : std::exp(1.0 - double(ref_len) / double(cand_len));
  out.bleu = zero_precision
                 ? 0.0
                 : out.brevity_penalty * std::exp(log_sum / double(max_order));
  return out;
}

std::size_t lcs_length(std::span<const std::string> a,
                       std::span<const std::string> b) {
  if (a.empty() || b.empty()) return 0;
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      if (a[i - 1] == b[j - 1])
        cur[j] = prev[j - 1] + 1;
      else
        cur[j] = std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

RougeLScore rouge_l_pair(std::span<const std::string> prediction_tokens,
                         std::span<const std::string> reference_tokens) {
  RougeLScore out;
  double lcs = double(lcs_length(prediction_tokens, reference_tokens));
  out.precision = safe_ratio(lcs, double(prediction_tokens.size()));
  out.recall = safe_ratio(lcs, double(reference_tokens.size()));
  // count form of 2PR/(P+R); exact where the ratio form would round
  out.f1 = safe_ratio(2.0 * lcs,
                      double(prediction_tokens.size() + reference_tokens.size()));
  return out;
}

RougeLScore rouge_l_corpus(std::span<const std::string> predictions,
                           std::span<const std::string> references) {
  check_pair_lengths(predictions.size(), references.size());
  RougeLScore sum;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    auto p = tokenize_13a(predictions[i]);
    auto r = tokenize_13a(references[i]);
    RougeLScore s = rouge_l_pair(p, r);
    sum.precision += s.precision;
    sum.recall += s.recall;
    sum.f1 += s.f1;
  }
  double n = double(predictions.size());
  return {sum.precision / n, sum.recall / n, sum.f1 / n};
}

PerplexityScore perplexity_from_logprobs(
    const std::vector<std::vector<double>>& logprobs) {
  if (logprobs.empty()) raise(ErrorCode::EmptyInput, "no examples");
  PerplexityScore out;
  out.perplexities.reserve(logprobs.size());
  for (std::size_t i = 0; i < logprobs.size(); ++i) {
    const auto& seq = logprobs[i];
    if (seq.empty())
      raise(ErrorCode::EmptyInput,
            "example " + std::to_string(i) + " has no log-probabilities");
    double sum = 0.0;
    for (double lp : seq) {
      if (lp > 0.0)
        raise(ErrorCode::PositiveLogProb,
              "example " + std::to_string(i) + " has a positive log-probability");
      sum += lp;
    }
    out.perplexities.push_back(std::exp(-sum / double(seq.size())));
  }
  out.mean_perplexity =
      std::accumulate(out.perplexities.begin(), out.perplexities.end(), 0.0) /
      double(out.perplexities.size());
  return out;
}

ContingencyPair contingency_pair(std::span<const std::int64_t> predictions_a,
                                 std::span<const std::int64_t> predictions_b,
                                 std::span<const std::int64_t> references) {
  check_pair_lengths(predictions_a.size(), references.size());
  if (predictions_a.size() != predictions_b.size())
    raise(ErrorCode::LengthMismatch, "prediction columns differ in length");
  ContingencyPair c;
  for (std::size_t i = 0; i < references.size(); ++i) {
    bool a = predictions_a[i] == references[i];
    bool b = predictions_b[i] == references[i];
    if (a && b) ++c.n11;
    else if (a) ++c.n10;
    else if (b) ++c.n01;
    else ++c.n00;
  }
  return c;
}

double mcnemar_exact_p(std::uint64_t n01, std::uint64_t n10) {
  const std::uint64_t m = n01 + n10;
  if (m == 0) return 1.0;
  const std::uint64_t k = std::min(n01, n10);

  double tail;
  if (m <= 62) {
    // exact integer binomial sum; C(62,31) fits in 64 bits
    std::uint64_t sum = 0, comb = 1;
    for (std::uint64_t i = 0; i <= k; ++i) {
      sum += comb;
      comb = comb * (m - i) / (i + 1);
    }
    tail = double(sum) * std::ldexp(1.0, -int(m));
  } else if (m <= 900) {
    double term = std::ldexp(1.0, -int(m));
    tail = 0.0;
    for (std::uint64_t i = 0; i <= k; ++i) {
      tail += term;
      term = term * double(m - i) / double(i + 1);
    }
  } else {
    // log-space for very large discordant totals
    const double log_half = -std::log(2.0);
    std::vector<double> logs;
    logs.reserve(k + 1);
    double max_log = -HUGE_VAL;
    for (std::uint64_t i = 0; i <= k; ++i) {
      double lg = std::lgamma(double(m) + 1) - std::lgamma(double(i) + 1) -
                  std::lgamma(double(m - i) + 1) + double(m) * log_half;
      logs.push_back(lg);
      max_log = std::max(max_log, lg);
    }
    double s = 0.0;
    for (double lg : logs) s += std::exp(lg - max_log);
    tail = std::exp(max_log) * s;
  }
  return std::min(1.0, 2.0 * tail);
}

McNemarResult mcnemar(std::span<const std::int64_t> predictions_a,
                      std::span<const std::int64_t> predictions_b,
                      std::span<const std::int64_t> references) {
  ContingencyPair c = contingency_pair(predictions_a, predictions_b, references);
  McNemarResult out;
  out.n01 = c.n01;
  out.n10 = c.n10;
  std::uint64_t m = c.n01 + c.n10;
  out.statistic =
      m == 0 ? 0.0
             : double(c.n01 > c.n10 ? c.n01 - c.n10 : c.n10 - c.n01) *
                   double(c.n01 > c.n10 ? c.n01 - c.n10 : c.n10 - c.n01) /
                   double(m);
  out.p_value = mcnemar_exact_p(c.n01, c.n10);
  return out;
}

PairedBootstrapResult paired_bootstrap(
    std::span<const std::int64_t> predictions_a,
    std::span<const std::int64_t> predictions_b,
    std::span<const std::int64_t> references, const LabelMetricFn& metric,
    std::uint64_t iterations, std::uint64_t seed) {
  check_pair_lengths(predictions_a.size(), references.size());
  if (predictions_a.size() != predictions_b.size())
    raise(ErrorCode::LengthMismatch, "prediction columns differ in length");
  const std::size_t n = references.size();

  PairedBootstrapResult out;
  out.delta = metric(predictions_a, references) - metric(predictions_b, references);

  stats::ResamplePlan plan{n, iterations, seed};
  std::vector<std::int64_t> ra(n), rb(n), rr(n);
  std::uint64_t opposing = 0;
  for (std::uint64_t b = 0; b < iterations; ++b) {
    auto idx = stats::resample_indices(plan, b);
    for (std::size_t i = 0; i < n; ++i) {
      ra[i] = predictions_a[idx[i]];
      rb[i] = predictions_b[idx[i]];
      rr[i] = references[idx[i]];
    }
    double d = metric(ra, rr) - metric(rb, rr);
    if (d > 0) ++out.wins_a;
    else if (d < 0) ++out.wins_b;
    else ++out.ties;
    if (out.delta > 0 ? d <= 0 : d >= 0) ++opposing;
  }
  out.p_value = out.delta == 0.0
                    ? 1.0
                    : std::min(1.0, 2.0 * double(opposing) / double(iterations));
  return out;
}

LabelDistributionResult label_distribution(std::span<const std::int64_t> labels) {
  if (labels.empty()) raise(ErrorCode::EmptyInput, "no labels");
  std::map<std::int64_t, std::uint64_t> counts;
  for (auto l : labels) counts[l]++;
  LabelDistributionResult out;
  double n = double(labels.size());
  std::uint64_t max_count = 0, min_count = labels.size();
  for (const auto& [label, count] : counts) {
    double p = double(count) / n;
    out.proportions[std::to_string(label)] = p;
    out.entropy_nats -= p * std::log(p);
    max_count = std::max(max_count, count);
    min_count = std::min(min_count, count);
  }
  if (out.entropy_nats < 0.0) out.entropy_nats = 0.0;  // -0 from single label
  out.imbalance_ratio = double(max_count) / double(min_count);
  return out;
}

DuplicatesResult duplicates_fraction(std::span<const std::string> rows) {
  if (rows.empty()) raise(ErrorCode::EmptyInput, "no rows");
  std::unordered_set<std::string> unique(rows.begin(), rows.end());
  DuplicatesResult out;
  out.n_unique = unique.size();
  out.duplicate_fraction =
      double(rows.size() - unique.size()) / double(rows.size());
  return out;
}

namespace {

std::size_t utf8_length(const std::string& s) {
  std::size_t n = 0;
  for (unsigned char c : s)
    if ((c & 0xC0) != 0x80) ++n;
  return n;
}

}  // namespace

TextLengthResult text_length_stats(std::span<const std::string> rows,
                                   bool unit_tokens) {
  if (rows.empty()) raise(ErrorCode::EmptyInput, "no rows");
  std::vector<double> lengths;
  lengths.reserve(rows.size());
  for (const auto& s : rows)
    lengths.push_back(unit_tokens ? double(tokenize_13a(s).size())
                                  : double(utf8_length(s)));

  TextLengthResult out;
  double n = double(lengths.size());
  out.mean = std::accumulate(lengths.begin(), lengths.end(), 0.0) / n;
  double var = 0.0;
  for (double l : lengths) var += (l - out.mean) * (l - out.mean);
  out.stddev = std::sqrt(var / n);  // population std
  auto [mn, mx] = std::minmax_element(lengths.begin(), lengths.end());
  out.min = *mn;
  out.max = *mx;

  constexpr int kBins = 10;
  out.histogram_counts.assign(kBins, 0.0);
  double lo = out.min;
  double width = (out.max - out.min) / kBins;
  if (width == 0.0) width = 1.0 / kBins;  // degenerate: everything in bin 0
  out.histogram_edges.resize(kBins + 1);
  for (int i = 0; i <= kBins; ++i) out.histogram_edges[i] = lo + width * i;
  for (double l : lengths) {
    int bin = int((l - lo) / width);
    if (bin >= kBins) bin = kBins - 1;  // max lands in the last bin
    if (bin < 0) bin = 0;
    out.histogram_counts[bin] += 1.0;
  }
  return out;
}

}  // namespace metrics

// ---------------------------------------------------------------------------
// built-in module table

namespace {

using metrics::Averaging;

const IntColumn& int_col(const Table& t, const char* name) {
  return std::get<IntColumn>(t.column(name));
}
const StringColumn& str_col(const Table& t, const char* name) {
  return std::get<StringColumn>(t.column(name));
}

ScoreMap score_accuracy(const Table& rows, const json&) {
  return {{"accuracy",
           metrics::accuracy(int_col(rows, "predictions"),
                             int_col(rows, "references"))}};
}

ScoreMap score_f1(const Table& rows, const json& params) {
  Averaging avg =
      metrics::averaging_from_name(params.at("average").get<std::string>());
  auto prf = metrics::precision_recall_f1(
      int_col(rows, "predictions"), int_col(rows, "references"), avg,
      params.at("pos_label").get<std::int64_t>());
  return {{"precision", prf.precision}, {"recall", prf.recall}, {"f1", prf.f1}};
}

ScoreMap score_exact_match(const Table& rows, const json& params) {
  std::string norm = params.at("normalize").get<std::string>();
  if (norm != "none" && norm != "casefold_strip")
    raise(ErrorCode::InvalidValue, "normalize must be none or casefold_strip");
  return {{"exact_match",
           metrics::exact_match(str_col(rows, "predictions"),
                                str_col(rows, "references"),
                                norm == "casefold_strip")}};
}

ScoreMap score_bleu(const Table& rows, const json& params) {
  const auto& preds = str_col(rows, "predictions");
  const auto& ref_sets = std::get<StringSeqColumn>(rows.column("references"));
  std::string smoothing = params.at("smoothing").get<std::string>();
  if (smoothing != "none" && smoothing != "add1clip")
    raise(ErrorCode::InvalidValue, "smoothing must be none or add1clip");
  std::string tokenizer = params.at("tokenizer").get<std::string>();
  if (tokenizer != "13a" && tokenizer != "whitespace")
    raise(ErrorCode::InvalidValue, "tokenizer must be 13a or whitespace");
  int max_order = params.at("max_order").get<int>();

  auto tokenize = [&](const std::string& s) {
    if (tokenizer == "13a") return metrics::tokenize_13a(s);
    std::vector<std::string> toks;
    std::size_t pos = 0;
    while (pos < s.size()) {
      while (pos < s.size() && s[pos] == ' ') ++pos;
      std::size_t start = pos;
      while (pos < s.size() && s[pos] != ' ') ++pos;
      if (pos > start) toks.push_back(s.substr(start, pos - start));
    }
    return toks;
  };

  std::vector<std::vector<std::string>> cands;
  std::vector<std::vector<std::vector<std::string>>> refs;
  cands.reserve(preds.size());
  refs.reserve(preds.size());
  for (std::size_t i = 0; i < preds.size(); ++i) {
    cands.push_back(tokenize(preds[i]));
    std::vector<std::vector<std::string>> set;
    for (const auto& r : ref_sets[i]) set.push_back(tokenize(r));
    refs.push_back(std::move(set));
  }
  auto score =
      metrics::bleu_corpus(cands, refs, max_order, smoothing == "add1clip");
  return {{"bleu", score.bleu},
          {"precisions", score.precisions},
          {"brevity_penalty", score.brevity_penalty},
          {"length_ratio", score.length_ratio}};
}

ScoreMap score_rouge_l(const Table& rows, const json&) {
  auto s = metrics::rouge_l_corpus(str_col(rows, "predictions"),
                                   str_col(rows, "references"));
  return {{"rougeL_precision", s.precision},
          {"rougeL_recall", s.recall},
          {"rougeL_f1", s.f1}};
}

ScoreMap score_perplexity(const Table& rows, const json&) {
  auto s = metrics::perplexity_from_logprobs(
      std::get<FloatSeqColumn>(rows.column("data")));
  return {{"mean_perplexity", s.mean_perplexity},
          {"perplexities", s.perplexities}};
}

ScoreMap score_mcnemar(const Table& rows, const json&) {
  auto s = metrics::mcnemar(int_col(rows, "predictions_a"),
                            int_col(rows, "predictions_b"),
                            int_col(rows, "references"));
  return {{"statistic", s.statistic},
          {"p_value", s.p_value},
          {"n01", double(s.n01)},
          {"n10", double(s.n10)}};
}

ScoreMap score_paired_bootstrap(const Table& rows, const json& params) {
  std::string metric_id = params.at("metric").get<std::string>();
  if (!is_canonical_module(metric_id))
    raise(ErrorCode::UnknownModule,
          "paired_bootstrap metric '" + metric_id + "' is not a built-in module");
  ModuleSpec metric_spec = canonical_module_spec(metric_id);
  FeatureSchema label_schema{{"predictions", ColumnType::Int},
                             {"references", ColumnType::Int}};
  if (!(metric_spec.features == label_schema))
    raise(ErrorCode::UnknownModule,
          "paired_bootstrap metric '" + metric_id +
              "' does not score integer predictions against references");

  auto metric_fn = [&](std::span<const std::int64_t> p,
                       std::span<const std::int64_t> r) {
    Table t(label_schema);
    t.columns[0] = IntColumn(p.begin(), p.end());
    t.columns[1] = IntColumn(r.begin(), r.end());
    ScoreMap m = metric_spec.score(t, metric_spec.default_params);
    return std::get<double>(m.at(metric_spec.primary_key));
  };

  auto s = metrics::paired_bootstrap(
      int_col(rows, "predictions_a"), int_col(rows, "predictions_b"),
      int_col(rows, "references"), metric_fn,
      params.at("iterations").get<std::uint64_t>(),
      params.at("seed").get<std::uint64_t>());
  return {{"delta", s.delta},
          {"p_value", s.p_value},
          {"wins_a", double(s.wins_a)},
          {"wins_b", double(s.wins_b)},
          {"ties", double(s.ties)}};
}

ScoreMap score_label_distribution(const Table& rows, const json&) {
  auto s = metrics::label_distribution(int_col(rows, "data"));
  return {{"proportions", s.proportions},
          {"entropy_nats", s.entropy_nats},
          {"imbalance_ratio", s.imbalance_ratio}};
}

ScoreMap score_duplicates(const Table& rows, const json&) {
  auto s = metrics::duplicates_fraction(str_col(rows, "data"));
  return {{"duplicate_fraction", s.duplicate_fraction},
          {"n_unique", double(s.n_unique)}};
}

ScoreMap score_text_length(const Table& rows, const json& params) {
  std::string unit = params.at("unit").get<std::string>();
  if (unit != "chars" && unit != "tokens")
    raise(ErrorCode::InvalidValue, "unit must be chars or tokens");
  auto s = metrics::text_length_stats(str_col(rows, "data"), unit == "tokens");
  return {{"mean", s.mean},
          {"std", s.stddev},
          {"min", s.min},
          {"max", s.max},
          {"histogram_counts", s.histogram_counts},
          {"histogram_edges", s.histogram_edges}};
}

std::vector<ModuleSpec> build_canonical_specs() {
  std::vector<ModuleSpec> specs;
  auto up = [](bool b) { return std::optional<bool>(b); };

  specs.push_back({"accuracy",
                   "1.0.0",
                   ModuleKind::Metric,
                   {{"predictions", ColumnType::Int}, {"references", ColumnType::Int}},
                   {{"accuracy", OutputKind::Number, up(true)}},
                   json::object(),
                   "accuracy",
                   score_accuracy});

  specs.push_back({"f1",
                   "1.0.0",
                   ModuleKind::Metric,
                   {{"predictions", ColumnType::Int}, {"references", ColumnType::Int}},
                   {{"precision", OutputKind::Number, up(true)},
                    {"recall", OutputKind::Number, up(true)},
                    {"f1", OutputKind::Number, up(true)}},
                   json{{"average", "binary"}, {"pos_label", 1}},
                   "f1",
                   score_f1});

  specs.push_back({"exact_match",
                   "1.0.0",
                   ModuleKind::Metric,
                   {{"predictions", ColumnType::String},
                    {"references", ColumnType::String}},
                   {{"exact_match", OutputKind::Number, up(true)}},
                   json{{"normalize", "none"}},
                   "exact_match",
                   score_exact_match});

  specs.push_back({"bleu",
                   "1.0.0",
                   ModuleKind::Metric,
                   {{"predictions", ColumnType::String},
                    {"references", ColumnType::StringSeq}},
                   {{"bleu", OutputKind::Number, up(true)},
                    {"precisions", OutputKind::Array, std::nullopt},
                    {"brevity_penalty", OutputKind::Number, std::nullopt},
                    {"length_ratio", OutputKind::Number, std::nullopt}},
                   json{{"max_order", 4}, {"smoothing", "none"}, {"tokenizer", "13a"}},
                   "bleu",
                   score_bleu});

  specs.push_back({"rouge_l",
                   "1.0.0",
                   ModuleKind::Metric,
                   {{"predictions", ColumnType::String},
                    {"references", ColumnType::String}},
                   {{"rougeL_precision", OutputKind::Number, up(true)},
                    {"rougeL_recall", OutputKind::Number, up(true)},
                    {"rougeL_f1", OutputKind::Number, up(true)}},
                   json::object(),
                   "rougeL_f1",
                   score_rouge_l});

  specs.push_back({"perplexity",
                   "1.0.0",
                   ModuleKind::Measurement,
                   {{"data", ColumnType::FloatSeq}},
                   {{"mean_perplexity", OutputKind::Number, up(false)},
                    {"perplexities", OutputKind::Array, std::nullopt}},
                   json::object(),
                   "mean_perplexity",
                   score_perplexity});

  specs.push_back({"mcnemar",
                   "1.0.0",
                   ModuleKind::Comparison,
                   {{"predictions_a", ColumnType::Int},
                    {"predictions_b", ColumnType::Int},
                    {"references", ColumnType::Int}},
                   {{"statistic", OutputKind::Number, std::nullopt},
                    {"p_value", OutputKind::Number, std::nullopt},
                    {"n01", OutputKind::Number, std::nullopt},
                    {"n10", OutputKind::Number, std::nullopt}},
                   json::object(),
                   "p_value",
                   score_mcnemar});

  specs.push_back({"paired_bootstrap",
                   "1.0.0",
                   ModuleKind::Comparison,
                   {{"predictions_a", ColumnType::Int},
                    {"predictions_b", ColumnType::Int},
                    {"references", ColumnType::Int}},
                   {{"delta", OutputKind::Number, std::nullopt},
                    {"p_value", OutputKind::Number, std::nullopt},
                    {"wins_a", OutputKind::Number, std::nullopt},
                    {"wins_b", OutputKind::Number, std::nullopt},
                    {"ties", OutputKind::Number, std::nullopt}},
                   json{{"metric", "accuracy"}, {"iterations", 1000}, {"seed", 42}},
                   "delta",
                   score_paired_bootstrap});

  specs.push_back({"label_distribution",
                   "1.0.0",
                   ModuleKind::Measurement,
                   {{"data", ColumnType::Int}},
                   {{"proportions", OutputKind::Mapping, std::nullopt},
                    {"entropy_nats", OutputKind::Number, std::nullopt},
                    {"imbalance_ratio", OutputKind::Number, std::nullopt}},
                   json::object(),
                   "entropy_nats",
                   score_label_distribution});

  specs.push_back({"duplicates",
                   "1.0.0",
                   ModuleKind::Measurement,
                   {{"data", ColumnType::String}},
                   {{"duplicate_fraction", OutputKind::Number, std::nullopt},
                    {"n_unique", OutputKind::Number, std::nullopt}},
                   json::object(),
                   "duplicate_fraction",
                   score_duplicates});

  specs.push_back({"text_length",
                   "1.0.0",
                   ModuleKind::Measurement,
                   {{"data", ColumnType::String}},
                   {{"mean", OutputKind::Number, std::nullopt},
                    {"std", OutputKind::Number, std::nullopt},
                    {"min", OutputKind::Number, std::nullopt},
                    {"max", OutputKind::Number, std::nullopt},
                    {"histogram_counts", OutputKind::Array, std::nullopt},
                    {"histogram_edges", OutputKind::Array, std::nullopt}},
                   json{{"unit", "chars"}},
                   "mean",
                   score_text_length});

  return specs;
}

const std::vector<ModuleSpec>& canonical_specs() {
  static const std::vector<ModuleSpec> specs = build_canonical_specs();
  return specs;
}

}  // namespace

const std::vector<std::string>& canonical_module_ids() {
  static const std::vector<std::string> ids = [] {
    std::vector<std::string> out;
    for (const auto& s : canonical_specs()) out.push_back(s.id);
    return out;
  }();
  return ids;
}

bool is_canonical_module(const std::string& id) {
  for (const auto& s : canonical_specs())
    if (s.id == id) return true;
  return false;
}

ModuleSpec canonical_module_spec(const std::string& id) {
  for (const auto& s : canonical_specs())
    if (s.id == id) return s;
  raise(ErrorCode::UnknownModule, "no built-in module named '" + id + "'");
}

}  // namespace evalkit
