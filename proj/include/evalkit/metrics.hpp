#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "evalkit/module.hpp"

namespace evalkit {
namespace metrics {

// ---- classification ----

double accuracy(std::span<const std::int64_t> predictions,
                std::span<const std::int64_t> references);

enum class Averaging { Binary, Macro, Micro, Weighted };
Averaging averaging_from_name(const std::string& name);

struct Prf {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

// Zero-division convention: any ratio with a zero denominator is 0.
Prf precision_recall_f1(std::span<const std::int64_t> predictions,
                        std::span<const std::int64_t> references,
                        Averaging averaging, std::int64_t pos_label = 1);

// ---- text ----

std::string normalize_casefold_strip(const std::string& s);

double exact_match(std::span<const std::string> predictions,
                   std::span<const std::string> references, bool normalize);

// Deterministic tokenizer: whitespace splits; every other non-alphanumeric
// ASCII byte becomes its own token, except '.' between two digits; bytes
// >= 0x80 are treated as word characters so UTF-8 sequences stay intact.
std::vector<std::string> tokenize_13a(const std::string& text);

struct BleuScore {
  double bleu = 0.0;
  std::vector<double> precisions;
  double brevity_penalty = 1.0;
  double length_ratio = 0.0;
  std::uint64_t candidate_length = 0;
  std::uint64_t reference_length = 0;
};

// Corpus BLEU: clipped n-gram precision, uniform-weight geometric mean,
// multiplicative brevity penalty. Reference length is the per-sentence
// closest length, ties broken toward the shorter reference.
// add1_smoothing adds 1 to numerator and denominator for orders >= 2.
BleuScore bleu_corpus(
    const std::vector<std::vector<std::string>>& candidates,
    const std::vector<std::vector<std::vector<std::string>>>& reference_sets,
    int max_order = 4, bool add1_smoothing = false);

std::size_t lcs_length(std::span<const std::string> a,
                       std::span<const std::string> b);

struct RougeLScore {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

RougeLScore rouge_l_pair(std::span<const std::string> prediction_tokens,
                         std::span<const std::string> reference_tokens);
// corpus score = arithmetic mean of sentence-level scores
RougeLScore rouge_l_corpus(std::span<const std::string> predictions,
                           std::span<const std::string> references);

struct PerplexityScore {
  double mean_perplexity = 0.0;
  std::vector<double> perplexities;
};

// logprobs are natural-log token probabilities, all <= 0;
// per example ppl = exp(-mean(logprobs)).
PerplexityScore perplexity_from_logprobs(
    const std::vector<std::vector<double>>& logprobs);

// ---- comparisons ----

struct ContingencyPair {
  std::uint64_t n00 = 0, n01 = 0, n10 = 0, n11 = 0;
};

ContingencyPair contingency_pair(std::span<const std::int64_t> predictions_a,
                                 std::span<const std::int64_t> predictions_b,
                                 std::span<const std::int64_t> references);

// Exact two-sided binomial test on the discordant pairs:
// m = n01+n10, k = min(n01,n10), p = min(1, 2 * sum_{i<=k} C(m,i) / 2^m).
double mcnemar_exact_p(std::uint64_t n01, std::uint64_t n10);

struct McNemarResult {
  double statistic = 0.0;  // (n01-n10)^2 / (n01+n10), 0 when no discordance
  double p_value = 1.0;
  std::uint64_t n01 = 0;
  std::uint64_t n10 = 0;
};

McNemarResult mcnemar(std::span<const std::int64_t> predictions_a,
                      std::span<const std::int64_t> predictions_b,
                      std::span<const std::int64_t> references);

struct PairedBootstrapResult {
  double delta = 0.0;
  double p_value = 1.0;
  std::uint64_t wins_a = 0;
  std::uint64_t wins_b = 0;
  std::uint64_t ties = 0;
};

using LabelMetricFn = std::function<double(std::span<const std::int64_t>,
                                           std::span<const std::int64_t>)>;

PairedBootstrapResult paired_bootstrap(
    std::span<const std::int64_t> predictions_a,
    std::span<const std::int64_t> predictions_b,
    std::span<const std::int64_t> references, const LabelMetricFn& metric,
    std::uint64_t iterations = 1000, std::uint64_t seed = 42);

// ---- measurements ----

struct LabelDistributionResult {
  std::map<std::string, double> proportions;
  double entropy_nats = 0.0;
  double imbalance_ratio = 1.0;  // max count / min count over observed labels
};

LabelDistributionResult label_distribution(std::span<const std::int64_t> labels);

struct DuplicatesResult {
  double duplicate_fraction = 0.0;
  std::uint64_t n_unique = 0;
};

DuplicatesResult duplicates_fraction(std::span<const std::string> rows);

struct TextLengthResult {
  double mean = 0.0, stddev = 0.0, min = 0.0, max = 0.0;
  std::vector<double> histogram_counts;  // 10 equal-width bins
  std::vector<double> histogram_edges;   // 11 edges
};

// unit_tokens=false counts UTF-8 code points, true counts tokenize_13a tokens
TextLengthResult text_length_stats(std::span<const std::string> rows,
                                   bool unit_tokens);

}  // namespace metrics

// Built-in module table. Ids: accuracy, f1, exact_match, bleu, rouge_l,
// perplexity, mcnemar, paired_bootstrap, label_distribution, duplicates,
// text_length.
const std::vector<std::string>& canonical_module_ids();
bool is_canonical_module(const std::string& id);
ModuleSpec canonical_module_spec(const std::string& id);  // UnknownModule

}  // namespace evalkit
