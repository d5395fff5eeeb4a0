#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "evalkit/metrics.hpp"
#include "evalkit/module.hpp"
#include "evalkit/stats.hpp"

using namespace evalkit;

namespace {

EvaluationModule make(const std::string& id) {
  return EvaluationModule(canonical_module_spec(id));
}

Batch label_batch(IntColumn preds, IntColumn refs) {
  return Batch().set("predictions", std::move(preds)).set("references", std::move(refs));
}

}  // namespace

TEST_CASE("sequential add_batch then compute scores all rows and resets") {
  EvaluationModule accuracy = make("accuracy");
  accuracy.add_batch(label_batch({1, 1}, {1, 0}));
  CHECK(accuracy.buffered_rows() == 2);
  ModuleResult result = accuracy.compute();
  CHECK(result.number("accuracy") == 0.5);
  CHECK(result.module_id == "accuracy");
  CHECK(result.module_version == "1.0.0");
  CHECK(accuracy.buffered_rows() == 0);

  // reset property: an immediate second compute has nothing to score
  try {
    accuracy.compute();
    FAIL("expected EmptyInput");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::EmptyInput);
  }
}

TEST_CASE("inline compute equals the sequential path") {
  EvaluationModule sequential = make("accuracy");
  sequential.add_batch(label_batch({1, 1}, {1, 0}));
  ModuleResult a = sequential.compute();

  EvaluationModule oneshot = make("accuracy");
  ModuleResult b = oneshot.compute(label_batch({1, 1}, {1, 0}));
  CHECK(a.values == b.values);
}

TEST_CASE("mixing add_batch with an inline batch appends then computes") {
  EvaluationModule accuracy = make("accuracy");
  accuracy.add_batch(label_batch({1, 1}, {1, 0}));
  ModuleResult mixed = accuracy.compute(label_batch({0, 0}, {0, 1}));
  // 2 correct of 4
  CHECK(mixed.number("accuracy") == 0.5);
}

TEST_CASE("two successive batches accumulate additively") {
  EvaluationModule accuracy = make("accuracy");
  accuracy.add_batch(label_batch({1, 1, 0}, {1, 1, 0}));
  accuracy.add_batch(label_batch({0, 1}, {1, 1}));
  CHECK(accuracy.buffered_rows() == 5);
  CHECK(accuracy.compute().number("accuracy") == 0.8);
}

TEST_CASE("snapshot=true keeps the accumulation buffer") {
  EvaluationModule accuracy = make("accuracy");
  accuracy.add_batch(label_batch({1}, {1}));
  ModuleResult first = accuracy.compute(nullptr, json{{"snapshot", true}});
  CHECK(first.number("accuracy") == 1.0);
  CHECK(accuracy.buffered_rows() == 1);
  accuracy.add_batch(label_batch({0}, {1}));
  ModuleResult second = accuracy.compute();
  CHECK(second.number("accuracy") == 0.5);
  CHECK(accuracy.buffered_rows() == 0);
}

TEST_CASE("batch-boundary permutations do not change the result") {
  IntColumn preds, refs;
  stats::SplitMix64 gen(99);
  for (int i = 0; i < 24; ++i) {
    preds.push_back(std::int64_t(gen.next() % 3));
    refs.push_back(std::int64_t(gen.next() % 3));
  }
  auto compute_with_boundaries = [&](const std::vector<std::size_t>& cuts) {
    EvaluationModule f1 = make("f1");
    std::size_t begin = 0;
    for (std::size_t cut : cuts) {
      f1.add_batch(label_batch(IntColumn(preds.begin() + begin, preds.begin() + cut),
                               IntColumn(refs.begin() + begin, refs.begin() + cut)));
      begin = cut;
    }
    f1.add_batch(label_batch(IntColumn(preds.begin() + begin, preds.end()),
                             IntColumn(refs.begin() + begin, refs.end())));
    return f1.compute(nullptr, json{{"average", "macro"}});
  };
  ModuleResult whole = compute_with_boundaries({});
  CHECK(compute_with_boundaries({8, 16}).values == whole.values);
  CHECK(compute_with_boundaries({1, 2, 3, 20}).values == whole.values);
  CHECK(compute_with_boundaries({12}).values == whole.values);
}

TEST_CASE("row-permutation invariance for order-independent metrics") {
  IntColumn preds{1, 0, 2, 1, 0, 2, 2, 1};
  IntColumn refs{1, 1, 2, 0, 0, 2, 1, 1};
  EvaluationModule a = make("accuracy");
  ModuleResult forward = a.compute(label_batch(preds, refs));

  IntColumn rp(preds.rbegin(), preds.rend()), rr(refs.rbegin(), refs.rend());
  EvaluationModule b = make("accuracy");
  CHECK(b.compute(label_batch(rp, rr)).values == forward.values);
}

TEST_CASE("per-call parameter overrides do not mutate defaults") {
  EvaluationModule f1 = make("f1");
  ModuleResult macro =
      f1.compute(label_batch({1, 1, 0, 0}, {1, 0, 1, 0}), json{{"average", "macro"}});
  CHECK(macro.parameters_used["average"] == "macro");
  CHECK(f1.default_params()["average"] == "binary");

  ModuleResult plain = f1.compute(label_batch({1, 1, 0, 0}, {1, 0, 1, 0}));
  CHECK(plain.parameters_used["average"] == "binary");
  CHECK(plain.parameters_used["pos_label"] == 1);
}

TEST_CASE("unknown parameter override is rejected") {
  EvaluationModule accuracy = make("accuracy");
  try {
    accuracy.compute(label_batch({1}, {1}), json{{"averaging", "macro"}});
    FAIL("expected UnknownParameter");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::UnknownParameter);
  }
}

TEST_CASE("combined module bundles members behind one surface") {
  std::vector<std::unique_ptr<EvaluationModule>> members;
  members.push_back(std::make_unique<EvaluationModule>(canonical_module_spec("accuracy")));
  members.push_back(std::make_unique<EvaluationModule>(canonical_module_spec("f1")));
  CombinedModule combined(std::move(members));

  combined.add_batch(label_batch({1, 1}, {1, 0}));
  ModuleResult result = combined.compute();
  CHECK(result.number("accuracy") == 0.5);
  // confusion: TP=1, FP=1, FN=0 -> P=0.5, R=1, F1=2/3
  CHECK(result.number("f1") == doctest::Approx(2.0 / 3.0).epsilon(1e-4));
  CHECK(result.values.count("precision") == 1);
  CHECK(result.values.count("recall") == 1);
}

TEST_CASE("combined result matches member-wise computation") {
  IntColumn preds{1, 0, 1, 1, 0}, refs{1, 1, 1, 0, 0};
  std::vector<std::unique_ptr<EvaluationModule>> members;
  members.push_back(std::make_unique<EvaluationModule>(canonical_module_spec("accuracy")));
  members.push_back(std::make_unique<EvaluationModule>(canonical_module_spec("f1")));
  CombinedModule combined(std::move(members));
  ModuleResult merged = combined.compute(label_batch(preds, refs));

  EvaluationModule accuracy = make("accuracy");
  EvaluationModule f1 = make("f1");
  CHECK(merged.number("accuracy") ==
        accuracy.compute(label_batch(preds, refs)).number("accuracy"));
  ModuleResult f = f1.compute(label_batch(preds, refs));
  CHECK(merged.number("precision") == f.number("precision"));
  CHECK(merged.number("recall") == f.number("recall"));
  CHECK(merged.number("f1") == f.number("f1"));
}

TEST_CASE("singleton combine behaves like the bare module") {
  std::vector<std::unique_ptr<EvaluationModule>> members;
  members.push_back(std::make_unique<EvaluationModule>(canonical_module_spec("accuracy")));
  CombinedModule combined(std::move(members));
  ModuleResult combined_result = combined.compute(label_batch({1, 1}, {1, 0}));

  EvaluationModule bare = make("accuracy");
  CHECK(combined_result.values == bare.compute(label_batch({1, 1}, {1, 0})).values);
}

TEST_CASE("colliding member keys are prefixed with the module id") {
  auto make_const = [](const std::string& id, double value) {
    ModuleSpec spec;
    spec.id = id;
    spec.kind = ModuleKind::Metric;
    spec.features = {{"predictions", ColumnType::Int}, {"references", ColumnType::Int}};
    spec.output_schema = {{"score", OutputKind::Number, std::nullopt}};
    spec.score = [value](const Table&, const json&) {
      return ScoreMap{{"score", value}};
    };
    return std::make_unique<EvaluationModule>(std::move(spec));
  };
  std::vector<std::unique_ptr<EvaluationModule>> members;
  members.push_back(make_const("alpha", 0.25));
  members.push_back(make_const("beta", 0.75));
  CombinedModule combined(std::move(members));
  ModuleResult result = combined.compute(label_batch({1}, {1}));
  CHECK(result.values.count("score") == 0);
  CHECK(result.number("alpha_score") == 0.25);
  CHECK(result.number("beta_score") == 0.75);
}

TEST_CASE("combine rejects members with different schemas") {
  std::vector<std::unique_ptr<EvaluationModule>> members;
  members.push_back(std::make_unique<EvaluationModule>(canonical_module_spec("accuracy")));
  members.push_back(std::make_unique<EvaluationModule>(canonical_module_spec("exact_match")));
  try {
    CombinedModule combined(std::move(members));
    FAIL("expected IncompatibleSchemas");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::IncompatibleSchemas);
  }
}

TEST_CASE("module results serialize to json and back without loss") {
  EvaluationModule bleu = EvaluationModule(canonical_module_spec("bleu"));
  Batch batch;
  batch.set("predictions", StringColumn{"the cat sat on the mat"});
  batch.set("references", StringSeqColumn{{"the cat sat on the mat"}});
  ModuleResult result = bleu.compute(batch);

  ModuleResult round = ModuleResult::from_json(result.to_json());
  CHECK(round.values == result.values);
  CHECK(round.module_id == result.module_id);
  CHECK(round.parameters_used == result.parameters_used);
}

TEST_CASE("kind feature requirements are enforced at construction") {
  ModuleSpec spec;
  spec.id = "broken";
  spec.kind = ModuleKind::Metric;
  spec.features = {{"data", ColumnType::Int}};  // metrics need predictions/references
  spec.output_schema = {{"score", OutputKind::Number, std::nullopt}};
  spec.score = [](const Table&, const json&) { return ScoreMap{{"score", 0.0}}; };
  try {
    EvaluationModule module(std::move(spec));
    FAIL("expected InvalidManifest");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::InvalidManifest);
  }

  ModuleSpec comparison;
  comparison.id = "half";
  comparison.kind = ModuleKind::Comparison;
  comparison.features = {{"predictions_a", ColumnType::Int},
                         {"references", ColumnType::Int}};
  comparison.output_schema = {{"score", OutputKind::Number, std::nullopt}};
  comparison.score = [](const Table&, const json&) {
    return ScoreMap{{"score", 0.0}};
  };
  CHECK_THROWS_AS(EvaluationModule(std::move(comparison)), Error);
}

TEST_CASE("non-finite score values never escape compute") {
  ModuleSpec spec;
  spec.id = "nan_leaker";
  spec.kind = ModuleKind::Measurement;
  spec.features = {{"data", ColumnType::Int}};
  spec.output_schema = {{"score", OutputKind::Number, std::nullopt}};
  spec.score = [](const Table&, const json&) {
    return ScoreMap{{"score", std::nan("")}};
  };
  EvaluationModule module(std::move(spec));
  try {
    module.compute(Batch().set("data", IntColumn{1}));
    FAIL("expected Internal");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::Internal);
  }
}
