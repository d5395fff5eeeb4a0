#include "evalkit/cards.hpp"

#include <map>

namespace evalkit {

namespace {

const char* kAccuracyCard = R"(# accuracy

## Description
Fraction of predictions that exactly equal their reference label:
accuracy = correct / total.

## Intended Use
Single-label classification where classes are reasonably balanced. For
imbalanced datasets prefer f1 alongside accuracy.

## Output Range
`accuracy` is in [0, 1]; 1 means every prediction matched its reference.

## Usage Examples
predictions [1, 1] against references [1, 0] score 0.5. Lists are integer
labels of equal length.

## Limitations and Biases
Insensitive to class imbalance: a majority-class predictor on a 95/5 split
scores 0.95. Says nothing about which classes are confused.

## Citation
Standard definition; no canonical citation.
)";

const char* kF1Card = R"(# f1

## Description
Precision, recall, and their harmonic mean (F1) from the confusion counts.
Averaging modes: binary (one positive label), macro (unweighted class
mean), micro (global counts), weighted (reference-support weighted).

## Intended Use
Classification with class imbalance or asymmetric error costs, where
accuracy alone is misleading.

## Output Range
`precision`, `recall`, and `f1` are each in [0, 1]. Any ratio with a zero
denominator is reported as 0, never NaN.

## Usage Examples
predictions [1,1,0,0] vs references [1,0,1,0] with binary averaging and
positive label 1 give precision 0.5, recall 0.5, f1 0.5.

## Limitations and Biases
The positive-label choice changes binary scores entirely. Macro averaging
can be dominated by rare classes; micro equals accuracy for single-label
tasks.

## Citation
van Rijsbergen, Information Retrieval, 1979.
)";

const char* kExactMatchCard = R"(# exact_match

## Description
Fraction of predictions that are byte-identical to their reference string,
optionally after casefolding ASCII letters and stripping surrounding
whitespace (normalize = "casefold_strip").

## Intended Use
Extractive question answering and other tasks with short free-text answers
where string identity is meaningful.

## Output Range
`exact_match` is in [0, 1].

## Usage Examples
["a", "b"] vs ["a", "c"] scores 0.5. With normalize "casefold_strip",
"A " matches "a".

## Limitations and Biases
All-or-nothing per example: a one-character difference scores zero. The
normalizer only folds ASCII; multilingual text may need more.

## Citation
Rajpurkar et al., SQuAD: 100,000+ Questions for Machine Comprehension of
Text, EMNLP 2016.
)";

const char* kBleuCard = R"(# bleu

## Description
Corpus BLEU: clipped n-gram precisions p_n up to max_order (default 4),
combined as BP * exp(mean(log p_n)). Each candidate n-gram's match count
is capped at its maximum count in any single reference. The brevity
penalty is 1 when the candidate corpus is longer than the reference
length, else exp(1 - r/c); the reference length r sums each sentence's
closest reference length, ties broken toward the shorter reference.
Text is tokenized with the deterministic built-in 13a-style tokenizer
unless tokenizer = "whitespace". smoothing = "add1clip" adds one to
numerator and denominator of orders >= 2.

## Intended Use
Machine-translation style generation scored against one or more
references, at corpus level.

## Output Range
`bleu` is in [0, 1] (1 only for a perfect match of length and content).
`precisions` holds p_1..p_max_order, each in [0, 1]. `brevity_penalty` is
in [0, 1]. `length_ratio` is candidate length / reference length, with 0
reported for an empty reference length. With smoothing "none" any zero
p_n yields bleu 0; an empty candidate corpus yields bleu 0 with
brevity_penalty 0.

## Usage Examples
A candidate identical to its only reference with at least four tokens
scores bleu 1.0. Candidate "the the the the the the the" against the two
classic cat/mat references has clipped unigram precision 2/7.

## Limitations and Biases
Sensitive to tokenization; scores are only comparable when the tokenizer
and smoothing match. Weak correlation with human judgement on some tasks
and languages; penalizes legitimate paraphrases.

## Citation
Papineni et al., BLEU: a Method for Automatic Evaluation of Machine
Translation, ACL 2002.
)";

const char* kRougeLCard = R"(# rouge_l

## Description
Sentence-level ROUGE-L from the longest common subsequence of the
tokenized prediction and reference: precision = LCS/|prediction|,
recall = LCS/|reference|, f1 = harmonic mean. The corpus score is the
arithmetic mean over sentence pairs.

## Intended Use
Summarization-style comparison of generated text against a single
reference per example.

## Output Range
`rougeL_precision`, `rougeL_recall`, and `rougeL_f1` are each in [0, 1];
a zero-denominator ratio is reported as 0.

## Usage Examples
Prediction "the cat" against reference "the cat sat" gives precision 1.0,
recall 2/3, f1 0.8.

## Limitations and Biases
Subsequence matching ignores fluency and factuality; whitespace-level
tokenization makes scores language dependent. The corpus score averages
sentence scores rather than computing a summary-level LCS union.

## Citation
Lin, ROUGE: A Package for Automatic Evaluation of Summaries, 2004.
)";

const char* kPerplexityCard = R"(# perplexity

## Description
Perplexity from externally produced token log-probabilities (natural
log). Per example ppl = exp(-mean(logprobs)); `mean_perplexity` is the
arithmetic mean of the per-example values.

## Intended Use
Comparing language-model fits where the caller controls the scoring
model and tokenization and supplies the log-probabilities.

## Output Range
`mean_perplexity` is in [1, inf) for valid inputs (each per-example value
in `perplexities` is exp of a non-negative number). Lower is better.

## Usage Examples
Four tokens each with log-probability ln(1/4) give perplexity 4.0.

## Limitations and Biases
Values are not comparable across different producing models, tokenizers,
or datasets; only compare numbers produced under identical conditions.
Positive log-probabilities are rejected.

## Citation
Jelinek et al., Perplexity - a measure of the difficulty of speech
recognition tasks, 1977.
)";

const char* kMcnemarCard = R"(# mcnemar

## Description
Exact McNemar test on paired classifier decisions. From aligned
predictions, n01 counts examples only model B got right and n10 those
only model A got right. The p-value is the exact two-sided binomial tail:
with m = n01 + n10 and k = min(n01, n10),
p = min(1, 2 * sum_{i<=k} C(m, i) / 2^m). The chi-square style statistic
(n01 - n10)^2 / m is reported for reference alongside.

## Intended Use
Deciding whether two models' error patterns on the same examples differ
beyond chance.

## Output Range
`p_value` is in (0, 1]; with no discordant pairs (m = 0) it is 1.
`statistic` is >= 0 and 0 when m = 0. `n01` and `n10` are non-negative
counts.

## Usage Examples
n01 = 8 and n10 = 2 give p = 0.109375 exactly. Identical prediction
vectors give m = 0 and p = 1.

## Limitations and Biases
Only discordant pairs carry information; large agreeing samples add no
power. Assumes paired decisions on identical examples.

## Citation
McNemar, Note on the sampling error of the difference between correlated
proportions or percentages, Psychometrika 1947.
)";

const char* kPairedBootstrapCard = R"(# paired_bootstrap

## Description
Paired bootstrap significance test for the difference of a metric between
two models on the same examples. `delta` is metric(A) - metric(B) on the
full data. Each of B iterations resamples example indices with
replacement (seeded, reproducible) and recomputes both metrics; the
p-value is twice the fraction of resampled deltas whose sign opposes (or
zeroes) the full-data delta, capped at 1. A zero full-data delta reports
p = 1.

## Intended Use
Model comparison on a shared test set with any built-in label metric
(parameter `metric`, default accuracy).

## Output Range
`delta` is in [-1, 1] for [0, 1]-valued metrics. `p_value` is in [0, 1].
`wins_a`, `wins_b`, and `ties` are resample counts summing to the
iteration count.

## Usage Examples
Identical prediction vectors give delta 0 and p 1. With model A always
right and B always wrong on 50 examples, delta is 1 and p is 0 at 1000
iterations.

## Limitations and Biases
Resolution is limited by the iteration count (p below 1/B is reported as
0). Results are seed-reproducible, not seed-independent.

## Citation
Koehn, Statistical Significance Tests for Machine Translation Evaluation,
EMNLP 2004.
)";

const char* kLabelDistributionCard = R"(# label_distribution

## Description
Distribution of integer labels: per-label proportions, Shannon entropy in
nats, and the imbalance ratio max_count / min_count over observed labels.

## Intended Use
Checking a dataset for label skew before training or evaluation.

## Output Range
`proportions` values are in (0, 1] and sum to 1. `entropy_nats` is in
[0, ln(k)] for k observed labels. `imbalance_ratio` is >= 1 and computed
over observed labels only, so it is always finite.

## Usage Examples
Labels [1, 1, 1, 0] give proportions {1: 0.75, 0: 0.25} and imbalance 3.

## Limitations and Biases
Unobserved classes are invisible: the ratio cannot flag a class that
never occurs. Entropy alone does not say which label dominates.

## Citation
Shannon, A Mathematical Theory of Communication, 1948.
)";

const char* kDuplicatesCard = R"(# duplicates

## Description
Fraction of rows that are exact duplicates of an earlier row:
duplicate_fraction = (n - n_unique) / n under byte-level string equality.

## Intended Use
Detecting repeated examples in a text dataset, e.g. train/test leakage
candidates.

## Output Range
`duplicate_fraction` is in [0, 1); `n_unique` is in [1, n].

## Usage Examples
["a", "a", "b"] gives duplicate_fraction 1/3 and n_unique 2.

## Limitations and Biases
Exact matching only: near-duplicates with different whitespace or casing
are not detected.

## Citation
No canonical citation; definitional.
)";

const char* kTextLengthCard = R"(# text_length

## Description
Population statistics of per-row text lengths: mean, std, min, max, and a
10-bin equal-width histogram. unit = "chars" counts UTF-8 code points;
unit = "tokens" counts built-in 13a-style tokenizer tokens.

## Intended Use
Profiling input lengths when choosing model context sizes or spotting
truncated rows.

## Output Range
`mean`, `std`, `min`, `max` are non-negative; `histogram_counts` has 10
non-negative bins summing to the row count; `histogram_edges` has 11
non-decreasing values. When every row has equal length the histogram
degenerates to one occupied bin.

## Usage Examples
["a", "abc"] with unit "chars" gives mean 2, std 1, min 1, max 3.

## Limitations and Biases
Code-point counting is not grapheme counting; combining characters
inflate lengths. Token counts depend on the built-in tokenizer, not on
any model's tokenizer.

## Citation
No canonical citation; definitional.
)";

const std::map<std::string, const char*>& card_table() {
  static const std::map<std::string, const char*> table = {
      {"accuracy", kAccuracyCard},
      {"f1", kF1Card},
      {"exact_match", kExactMatchCard},
      {"bleu", kBleuCard},
      {"rouge_l", kRougeLCard},
      {"perplexity", kPerplexityCard},
      {"mcnemar", kMcnemarCard},
      {"paired_bootstrap", kPairedBootstrapCard},
      {"label_distribution", kLabelDistributionCard},
      {"duplicates", kDuplicatesCard},
      {"text_length", kTextLengthCard},
  };
  return table;
}

}  // namespace

const char* canonical_card_text(const std::string& id) {
  auto it = card_table().find(id);
  return it == card_table().end() ? nullptr : it->second;
}

}  // namespace evalkit
