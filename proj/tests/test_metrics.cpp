#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <map>
#include <set>

#include "evalkit/metrics.hpp"
#include "evalkit/stats.hpp"

using namespace evalkit;
using namespace evalkit::metrics;

namespace {

// Brute-force confusion-matrix oracle, written against the definitions
// rather than the library's counting loop.
struct OraclePrf {
  double precision, recall, f1;
};

OraclePrf oracle_binary(const std::vector<std::int64_t>& preds,
                        const std::vector<std::int64_t>& refs,
                        std::int64_t pos) {
  double tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i] == pos && refs[i] == pos) tp += 1;
    if (preds[i] == pos && refs[i] != pos) fp += 1;
    if (preds[i] != pos && refs[i] == pos) fn += 1;
  }
  OraclePrf out{};
  out.precision = tp + fp > 0 ? tp / (tp + fp) : 0.0;
  out.recall = tp + fn > 0 ? tp / (tp + fn) : 0.0;
  out.f1 = out.precision + out.recall > 0
               ? 2 * out.precision * out.recall / (out.precision + out.recall)
               : 0.0;
  return out;
}

double oracle_accuracy(const std::vector<std::int64_t>& preds,
                       const std::vector<std::int64_t>& refs) {
  double hit = 0;
  for (std::size_t i = 0; i < preds.size(); ++i)
    if (preds[i] == refs[i]) hit += 1;
  return hit / double(preds.size());
}

// Exact binomial tail via 128-bit integers and long doubles; independent
// of the recurrence in the implementation. Valid for m <= 62.
double oracle_mcnemar_p(std::uint64_t n01, std::uint64_t n10) {
  std::uint64_t m = n01 + n10;
  if (m == 0) return 1.0;
  std::uint64_t k = std::min(n01, n10);
  unsigned __int128 sum = 0, comb = 1;
  for (std::uint64_t i = 0; i <= k; ++i) {
    sum += comb;
    comb = comb * (m - i) / (i + 1);
  }
  long double p =
      2.0L * (long double)(std::uint64_t)sum / std::pow(2.0L, (long double)m);
  return p > 1.0L ? 1.0 : double(p);
}

}  // namespace

TEST_CASE("accuracy fixtures") {
  CHECK(accuracy(std::vector<std::int64_t>{1, 1}, std::vector<std::int64_t>{1, 0}) == 0.5);
  CHECK(accuracy(std::vector<std::int64_t>{3, 4, 5}, std::vector<std::int64_t>{3, 4, 5}) == 1.0);
  CHECK(accuracy(std::vector<std::int64_t>{0, 0, 0}, std::vector<std::int64_t>{1, 1, 1}) == 0.0);
}

TEST_CASE("accuracy error paths") {
  std::vector<std::int64_t> empty;
  try {
    accuracy(empty, empty);
    FAIL("expected EmptyInput");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::EmptyInput);
  }
  try {
    accuracy(std::vector<std::int64_t>{1}, std::vector<std::int64_t>{1, 0});
    FAIL("expected LengthMismatch");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::LengthMismatch);
  }
}

TEST_CASE("precision/recall/f1 fixtures") {
  auto prf = precision_recall_f1(std::vector<std::int64_t>{1, 1, 0, 0},
                                 std::vector<std::int64_t>{1, 0, 1, 0},
                                 Averaging::Binary, 1);
  CHECK(prf.precision == 0.5);
  CHECK(prf.recall == 0.5);
  CHECK(prf.f1 == 0.5);

  auto perfect = precision_recall_f1(std::vector<std::int64_t>{1, 0, 1},
                                     std::vector<std::int64_t>{1, 0, 1},
                                     Averaging::Binary, 1);
  CHECK(perfect.precision == 1.0);
  CHECK(perfect.recall == 1.0);
  CHECK(perfect.f1 == 1.0);

  // no predicted positives while positives exist: 0 by convention, not NaN
  auto none = precision_recall_f1(std::vector<std::int64_t>{0, 0},
                                  std::vector<std::int64_t>{1, 1},
                                  Averaging::Binary, 1);
  CHECK(none.precision == 0.0);
  CHECK(none.recall == 0.0);
  CHECK(none.f1 == 0.0);
}

TEST_CASE("binary f1 agrees with the brute-force oracle on random instances") {
  stats::SplitMix64 gen(123);
  for (int trial = 0; trial < 300; ++trial) {
    std::size_t n = 1 + gen.next() % 8;
    std::vector<std::int64_t> preds(n), refs(n);
    for (std::size_t i = 0; i < n; ++i) {
      preds[i] = std::int64_t(gen.next() % 3);
      refs[i] = std::int64_t(gen.next() % 3);
    }
    std::int64_t pos = std::int64_t(gen.next() % 3);
    auto got = precision_recall_f1(preds, refs, Averaging::Binary, pos);
    auto want = oracle_binary(preds, refs, pos);
    CHECK(got.precision == want.precision);
    CHECK(got.recall == want.recall);
    CHECK(got.f1 == want.f1);
    CHECK(accuracy(preds, refs) == oracle_accuracy(preds, refs));
  }
}

TEST_CASE("micro averaging equals accuracy for single-label data") {
  stats::SplitMix64 gen(5);
  for (int trial = 0; trial < 50; ++trial) {
    std::size_t n = 1 + gen.next() % 8;
    std::vector<std::int64_t> preds(n), refs(n);
    for (std::size_t i = 0; i < n; ++i) {
      preds[i] = std::int64_t(gen.next() % 3);
      refs[i] = std::int64_t(gen.next() % 3);
    }
    auto micro = precision_recall_f1(preds, refs, Averaging::Micro, 0);
    CHECK(micro.f1 == doctest::Approx(accuracy(preds, refs)).epsilon(1e-12));
  }
}

TEST_CASE("relabeling bijection leaves accuracy and macro f1 unchanged") {
  std::vector<std::int64_t> preds{0, 1, 2, 1, 0, 2, 1};
  std::vector<std::int64_t> refs{0, 2, 2, 1, 1, 2, 0};
  auto relabel = [](std::int64_t v) { return 9 - 3 * v; };  // injective
  std::vector<std::int64_t> rp, rr;
  for (auto v : preds) rp.push_back(relabel(v));
  for (auto v : refs) rr.push_back(relabel(v));

  CHECK(accuracy(preds, refs) == accuracy(rp, rr));
  auto a = precision_recall_f1(preds, refs, Averaging::Macro, 0);
  auto b = precision_recall_f1(rp, rr, Averaging::Macro, 0);
  CHECK(a.f1 == b.f1);
  CHECK(a.precision == b.precision);
  CHECK(a.recall == b.recall);
}

TEST_CASE("unknown averaging name is rejected") {
  try {
    averaging_from_name("harmonic");
    FAIL("expected UnknownAveraging");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::UnknownAveraging);
  }
}

TEST_CASE("exact match fixtures") {
  CHECK(exact_match(std::vector<std::string>{"a", "b"},
                    std::vector<std::string>{"a", "c"}, false) == 0.5);
  CHECK(exact_match(std::vector<std::string>{"x", "y"},
                    std::vector<std::string>{"x", "y"}, false) == 1.0);
  CHECK(exact_match(std::vector<std::string>{"A "},
                    std::vector<std::string>{"a"}, true) == 1.0);
  CHECK(exact_match(std::vector<std::string>{"A "},
                    std::vector<std::string>{"a"}, false) == 0.0);
}

TEST_CASE("tokenize_13a byte-level vectors") {
  CHECK(tokenize_13a("Hello, world!") ==
        std::vector<std::string>{"Hello", ",", "world", "!"});
  CHECK(tokenize_13a("3.14") == std::vector<std::string>{"3.14"});
  CHECK(tokenize_13a("") == std::vector<std::string>{});
  CHECK(tokenize_13a("  spaced\tout\n") == std::vector<std::string>{"spaced", "out"});
  CHECK(tokenize_13a("end.") == std::vector<std::string>{"end", "."});
  CHECK(tokenize_13a("1.2.3") == std::vector<std::string>{"1.2.3"});
  CHECK(tokenize_13a("a.b") == std::vector<std::string>{"a", ".", "b"});
  CHECK(tokenize_13a("don't") == std::vector<std::string>{"don", "'", "t"});
  // UTF-8 sequences stay intact
  CHECK(tokenize_13a("caf\xc3\xa9 au lait") ==
        std::vector<std::string>{"caf\xc3\xa9", "au", "lait"});
}

TEST_CASE("bleu: identical candidate and reference scores 1") {
  std::vector<std::string> sentence{"the", "cat", "sat", "on", "the", "mat"};
  auto score = bleu_corpus({sentence}, {{sentence}});
  CHECK(score.bleu == 1.0);
  CHECK(score.brevity_penalty == 1.0);
  for (double p : score.precisions) CHECK(p == 1.0);

  // appending another matching pair keeps the corpus at 1.0
  auto extended = bleu_corpus({sentence, sentence}, {{sentence}, {sentence}});
  CHECK(extended.bleu == 1.0);
}

TEST_CASE("bleu clipped unigram precision fixture") {
  std::vector<std::string> candidate{"the", "the", "the", "the", "the", "the", "the"};
  std::vector<std::string> ref1{"the", "cat", "is", "on", "the", "mat"};
  std::vector<std::string> ref2{"there", "is", "a", "cat", "on", "the", "mat"};
  auto score = bleu_corpus({candidate}, {{ref1, ref2}});
  CHECK(score.precisions[0] == 2.0 / 7.0);
  CHECK(score.bleu == 0.0);  // no bigram matches, no smoothing
}

TEST_CASE("bleu brevity penalty fixture: c=3 against r=6") {
  std::vector<std::string> candidate{"a", "b", "c"};
  std::vector<std::string> reference{"a", "b", "c", "d", "e", "f"};
  auto score = bleu_corpus({candidate}, {{reference}}, /*max_order=*/3);
  for (double p : score.precisions) CHECK(p == 1.0);
  CHECK(score.brevity_penalty == doctest::Approx(std::exp(-1.0)).epsilon(1e-13));
  CHECK(score.bleu == doctest::Approx(std::exp(-1.0)).epsilon(1e-13));
  CHECK(score.length_ratio == 0.5);
}

TEST_CASE("bleu closest reference length breaks ties toward the shorter") {
  std::vector<std::string> candidate{"a", "b", "c", "d"};  // c = 4
  std::vector<std::string> shorter{"a", "b", "c"};         // |r| = 3
  std::vector<std::string> longer{"a", "b", "c", "d", "e"};  // |r| = 5
  auto score = bleu_corpus({candidate}, {{shorter, longer}});
  CHECK(score.reference_length == 3);
  CHECK(score.brevity_penalty == 1.0);  // c > r
}

TEST_CASE("bleu clipping never exceeds the naive per-type bound") {
  stats::SplitMix64 gen(77);
  const std::vector<std::string> vocab{"a", "b", "c", "d"};
  for (int trial = 0; trial < 100; ++trial) {
    auto sentence = [&](std::size_t len) {
      std::vector<std::string> s;
      for (std::size_t i = 0; i < len; ++i) s.push_back(vocab[gen.next() % vocab.size()]);
      return s;
    };
    auto cand = sentence(1 + gen.next() % 8);
    auto ref = sentence(1 + gen.next() % 8);
    auto score = bleu_corpus({cand}, {{ref}}, 1);

    // naive clipped count oracle
    std::map<std::string, int> cand_counts, ref_counts;
    for (const auto& t : cand) cand_counts[t]++;
    for (const auto& t : ref) ref_counts[t]++;
    int clipped = 0;
    for (const auto& [t, c] : cand_counts)
      clipped += std::min(c, ref_counts.count(t) ? ref_counts[t] : 0);
    CHECK(score.precisions[0] == double(clipped) / double(cand.size()));
    CHECK(score.bleu >= 0.0);
    CHECK(score.bleu <= 1.0);
  }
}

TEST_CASE("bleu rejects an empty reference set") {
  try {
    bleu_corpus({{"a"}}, {{}});
    FAIL("expected EmptyReferenceSet");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::EmptyReferenceSet);
  }
}

TEST_CASE("bleu add-1 smoothing keeps higher orders nonzero") {
  std::vector<std::string> candidate{"x", "y"};
  std::vector<std::string> reference{"x", "z"};
  auto unsmoothed = bleu_corpus({candidate}, {{reference}}, 2, false);
  CHECK(unsmoothed.bleu == 0.0);
  auto smoothed = bleu_corpus({candidate}, {{reference}}, 2, true);
  CHECK(smoothed.precisions[1] == 0.5);  // (0+1)/(1+1)
  CHECK(smoothed.bleu > 0.0);
}

TEST_CASE("rouge-l fixtures") {
  auto all_match = rouge_l_corpus(std::vector<std::string>{"the cat sat"},
                                  std::vector<std::string>{"the cat sat"});
  CHECK(all_match.precision == 1.0);
  CHECK(all_match.recall == 1.0);
  CHECK(all_match.f1 == 1.0);

  auto partial = rouge_l_corpus(std::vector<std::string>{"the cat"},
                                std::vector<std::string>{"the cat sat"});
  CHECK(partial.precision == 1.0);
  CHECK(partial.recall == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  CHECK(partial.f1 == 0.8);  // 2*LCS/(|pred|+|ref|) = 4/5, exact

  auto disjoint = rouge_l_corpus(std::vector<std::string>{"aa bb"},
                                 std::vector<std::string>{"cc dd"});
  CHECK(disjoint.precision == 0.0);
  CHECK(disjoint.recall == 0.0);
  CHECK(disjoint.f1 == 0.0);
}

TEST_CASE("lcs length on token vectors") {
  std::vector<std::string> a{"a", "b", "c", "d"};
  std::vector<std::string> b{"x", "b", "d", "y"};
  CHECK(lcs_length(a, b) == 2);
  CHECK(lcs_length(a, a) == 4);
  CHECK(lcs_length(a, std::vector<std::string>{}) == 0);
}

TEST_CASE("perplexity fixtures") {
  auto ones = perplexity_from_logprobs({{0.0, 0.0, 0.0}});
  CHECK(ones.perplexities[0] == 1.0);
  CHECK(ones.mean_perplexity == 1.0);

  double ln_quarter = std::log(0.25);
  auto four = perplexity_from_logprobs({{ln_quarter, ln_quarter, ln_quarter, ln_quarter}});
  CHECK(four.perplexities[0] == doctest::Approx(4.0).epsilon(1e-12));

  auto geo = perplexity_from_logprobs({{std::log(0.5), std::log(1.0 / 8.0)}});
  CHECK(geo.perplexities[0] == doctest::Approx(4.0).epsilon(1e-12));

  // constant logprob sequence: ppl = exp(-logprob) exactly
  double lp = -1.75;
  auto constant = perplexity_from_logprobs({{lp, lp, lp, lp, lp}});
  CHECK(constant.perplexities[0] == std::exp(1.75));
}

TEST_CASE("perplexity rejects positive logprobs and empty sequences") {
  try {
    perplexity_from_logprobs({{0.5}});
    FAIL("expected PositiveLogProb");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::PositiveLogProb);
  }
  try {
    perplexity_from_logprobs({{}});
    FAIL("expected EmptyInput");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::EmptyInput);
  }
}

TEST_CASE("mcnemar fixtures") {
  // n01 = n10 = 5 comes out perfectly symmetric
  std::vector<std::int64_t> refs(10, 1);
  std::vector<std::int64_t> a{1, 1, 1, 1, 1, 0, 0, 0, 0, 0};
  std::vector<std::int64_t> b{0, 0, 0, 0, 0, 1, 1, 1, 1, 1};
  auto sym = mcnemar(a, b, refs);
  CHECK(sym.statistic == 0.0);
  CHECK(sym.p_value == 1.0);
  CHECK(sym.n01 == 5);
  CHECK(sym.n10 == 5);

  // n01 = 8, n10 = 2 -> p = 2*(1+10+45)/1024 = 0.109375
  CHECK(mcnemar_exact_p(8, 2) == doctest::Approx(0.109375).epsilon(1e-15));
  CHECK(mcnemar_exact_p(2, 8) == doctest::Approx(0.109375).epsilon(1e-15));

  // identical prediction vectors: no discordance
  auto same = mcnemar(a, a, refs);
  CHECK(same.p_value == 1.0);
  CHECK(same.statistic == 0.0);
  CHECK(same.n01 + same.n10 == 0);
}

TEST_CASE("mcnemar exact p matches the binomial oracle for all m <= 20") {
  for (std::uint64_t m = 0; m <= 20; ++m) {
    for (std::uint64_t n01 = 0; n01 <= m; ++n01) {
      std::uint64_t n10 = m - n01;
      CHECK(mcnemar_exact_p(n01, n10) ==
            doctest::Approx(oracle_mcnemar_p(n01, n10)).epsilon(1e-12));
    }
  }
}

TEST_CASE("mcnemar statistic is the squared discordance ratio") {
  auto r = mcnemar(std::vector<std::int64_t>{1, 1, 1, 0, 0, 0},
                   std::vector<std::int64_t>{0, 0, 0, 1, 1, 1},
                   std::vector<std::int64_t>{1, 1, 1, 1, 1, 1});
  // n10 = 3, n01 = 3 -> statistic 0; perturb for a nonzero case
  CHECK(r.statistic == 0.0);
  auto r2 = mcnemar(std::vector<std::int64_t>{1, 1, 1, 1, 0, 0},
                    std::vector<std::int64_t>{0, 0, 0, 0, 1, 1},
                    std::vector<std::int64_t>{1, 1, 1, 1, 1, 1});
  // n10 = 4, n01 = 2 -> (2-4)^2/6
  CHECK(r2.statistic == doctest::Approx(4.0 / 6.0).epsilon(1e-12));
}

TEST_CASE("mcnemar survives large discordant totals") {
  double p = mcnemar_exact_p(600, 400);
  CHECK(p > 0.0);
  CHECK(p < 1e-9);
  double p_huge = mcnemar_exact_p(1200, 800);
  CHECK(p_huge >= 0.0);
  CHECK(p_huge < 1e-18);
  CHECK(mcnemar_exact_p(1000, 1000) == 1.0);
}

TEST_CASE("paired bootstrap fixtures") {
  LabelMetricFn acc = [](std::span<const std::int64_t> p,
                         std::span<const std::int64_t> r) {
    return accuracy(p, r);
  };

  std::vector<std::int64_t> refs(50, 1);
  std::vector<std::int64_t> right(50, 1), wrong(50, 0);

  auto equal = paired_bootstrap(right, right, refs, acc, 200, 7);
  CHECK(equal.delta == 0.0);
  CHECK(equal.p_value == 1.0);
  CHECK(equal.ties == 200);

  auto landslide = paired_bootstrap(right, wrong, refs, acc, 1000, 7);
  CHECK(landslide.delta == 1.0);
  CHECK(landslide.p_value == 0.0);
  CHECK(landslide.wins_a == 1000);

  // fixed seed, fixed inputs: bit-identical across runs
  std::vector<std::int64_t> a{1, 0, 1, 1, 0, 1, 0, 1}, b{1, 1, 0, 1, 0, 0, 0, 1},
      r{1, 1, 1, 1, 0, 1, 0, 0};
  auto run1 = paired_bootstrap(a, b, r, acc, 500, 42);
  auto run2 = paired_bootstrap(a, b, r, acc, 500, 42);
  CHECK(run1.delta == run2.delta);
  CHECK(run1.p_value == run2.p_value);
  CHECK(run1.wins_a == run2.wins_a);
  CHECK(run1.wins_b == run2.wins_b);
  CHECK(run1.ties == run2.ties);
}

TEST_CASE("label distribution fixtures") {
  auto even = label_distribution(std::vector<std::int64_t>{0, 1, 0, 1});
  CHECK(even.proportions.at("0") == 0.5);
  CHECK(even.proportions.at("1") == 0.5);
  CHECK(even.entropy_nats == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(even.imbalance_ratio == 1.0);

  auto skewed = label_distribution(std::vector<std::int64_t>{1, 1, 1, 0});
  CHECK(skewed.proportions.at("1") == 0.75);
  CHECK(skewed.proportions.at("0") == 0.25);
  CHECK(skewed.imbalance_ratio == 3.0);

  auto constant = label_distribution(std::vector<std::int64_t>{7, 7, 7});
  CHECK(constant.entropy_nats == 0.0);
  CHECK(constant.imbalance_ratio == 1.0);
}

TEST_CASE("duplicates fixtures") {
  auto unique = duplicates_fraction(std::vector<std::string>{"a", "b", "c"});
  CHECK(unique.duplicate_fraction == 0.0);
  CHECK(unique.n_unique == 3);

  auto one_dup = duplicates_fraction(std::vector<std::string>{"a", "a", "b"});
  CHECK(one_dup.duplicate_fraction == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK(one_dup.n_unique == 2);

  auto all_same = duplicates_fraction(std::vector<std::string>{"x", "x", "x", "x"});
  CHECK(all_same.duplicate_fraction == 0.75);
  CHECK(all_same.n_unique == 1);
}

TEST_CASE("text length fixtures") {
  auto equal = text_length_stats(std::vector<std::string>{"ab", "ab"}, false);
  CHECK(equal.mean == 2.0);
  CHECK(equal.stddev == 0.0);
  CHECK(equal.min == 2.0);
  CHECK(equal.max == 2.0);
  CHECK(equal.histogram_counts[0] == 2.0);

  auto spread = text_length_stats(std::vector<std::string>{"a", "abc"}, false);
  CHECK(spread.mean == 2.0);
  CHECK(spread.stddev == 1.0);  // population std
  CHECK(spread.min == 1.0);
  CHECK(spread.max == 3.0);
  CHECK(spread.histogram_counts.size() == 10);
  CHECK(spread.histogram_edges.size() == 11);
  double total = 0;
  for (double c : spread.histogram_counts) total += c;
  CHECK(total == 2.0);

  auto tokens = text_length_stats(std::vector<std::string>{"a b"}, true);
  CHECK(tokens.mean == 2.0);

  // UTF-8 code points, not bytes
  auto utf8 = text_length_stats(std::vector<std::string>{"caf\xc3\xa9"}, false);
  CHECK(utf8.mean == 4.0);
}
