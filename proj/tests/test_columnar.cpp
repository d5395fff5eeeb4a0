#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <fstream>

#include "evalkit/columnar.hpp"
#include "evalkit/stats.hpp"

using namespace evalkit;

namespace {

FeatureSchema text_schema() {
  return {{"predictions", ColumnType::String}, {"references", ColumnType::String}};
}

Batch text_batch(std::size_t rows, std::uint64_t seed) {
  stats::SplitMix64 gen(seed);
  StringColumn preds, refs;
  for (std::size_t i = 0; i < rows; ++i) {
    preds.push_back("pred-" + std::to_string(gen.next() % 1000));
    refs.push_back("ref-" + std::to_string(gen.next() % 1000));
  }
  return Batch().set("predictions", std::move(preds)).set("references", std::move(refs));
}

bool tables_equal(const Table& a, const Table& b) {
  return a.schema == b.schema && a.columns == b.columns;
}

}  // namespace

TEST_CASE("append then materialize returns rows verbatim in order") {
  ColumnarBuffer buf(text_schema());
  Batch b1 = text_batch(3, 1);
  Batch b2 = text_batch(2, 2);
  buf.append(b1);
  buf.append(b2);
  CHECK(buf.row_count() == 5);

  Table expected(text_schema());
  expected.append_batch(b1);
  expected.append_batch(b2);
  CHECK(tables_equal(buf.materialize(), expected));
  // materialize is read-only
  CHECK(buf.row_count() == 5);
  CHECK(tables_equal(buf.materialize(), expected));
}

TEST_CASE("empty buffer materializes to zero rows") {
  ColumnarBuffer buf(text_schema());
  CHECK(buf.materialize().row_count() == 0);
  CHECK(buf.row_count() == 0);
}

TEST_CASE("tiny threshold forces spill segments and bounds the chunk") {
  BufferOptions options;
  options.spill_threshold_bytes = 1024;
  ColumnarBuffer buf(text_schema(), options);
  for (int i = 0; i < 40; ++i) buf.append(text_batch(16, 100 + i));  // ~10 KiB
  CHECK(buf.segments().size() >= 1);
  CHECK(buf.in_memory_bytes() <= 1024);
  CHECK(buf.row_count() == 40 * 16);
}

TEST_CASE("spilled and unspilled buffers materialize identically") {
  BufferOptions tiny;
  tiny.spill_threshold_bytes = 256;
  BufferOptions huge;
  huge.spill_threshold_bytes = 1ull << 30;
  ColumnarBuffer spilled(text_schema(), tiny);
  ColumnarBuffer unspilled(text_schema(), huge);
  for (int i = 0; i < 10; ++i) {
    Batch b = text_batch(7, 500 + i);
    spilled.append(b);
    unspilled.append(b);
  }
  CHECK(spilled.segments().size() >= 1);
  CHECK(unspilled.segments().empty());
  CHECK(tables_equal(spilled.materialize(), unspilled.materialize()));
}

TEST_CASE("allocation accounting stays within threshold plus one batch") {
  BufferOptions options;
  options.spill_threshold_bytes = 1024;
  ColumnarBuffer buf(text_schema(), options);
  std::size_t max_batch_bytes = 0;
  for (int i = 0; i < 100; ++i) {
    Batch b = text_batch(8, 900 + i);
    std::size_t bytes = 0;
    for (const auto& [name, col] : b.columns) bytes += column_encoded_bytes(col);
    max_batch_bytes = std::max(max_batch_bytes, bytes);
    buf.append(b);
  }
  CHECK(buf.peak_in_memory_bytes() <= 1024 + max_batch_bytes);
}

TEST_CASE("segment corruption is detected at materialize time") {
  BufferOptions options;
  options.spill_threshold_bytes = 64;
  ColumnarBuffer buf(text_schema(), options);
  buf.append(text_batch(8, 7));
  REQUIRE(buf.segments().size() >= 1);

  auto path = buf.segments().front().path;
  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(60);  // inside the payload
    char byte = 0;
    f.seekg(60);
    f.get(byte);
    byte = char(byte ^ 0x01);
    f.seekp(60);
    f.put(byte);
  }
  try {
    buf.materialize();
    FAIL("expected ChecksumMismatch");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ChecksumMismatch);
  }
}

TEST_CASE("merge concatenates partitions in order") {
  ColumnarBuffer p1(text_schema()), p2(text_schema());
  Batch b1 = text_batch(2, 11), b2 = text_batch(3, 12);
  p1.append(b1);
  p2.append(b2);

  ColumnarBuffer merged = ColumnarBuffer::merge({&p1, &p2});
  CHECK(merged.row_count() == 5);
  Table expected(text_schema());
  expected.append_batch(b1);
  expected.append_batch(b2);
  CHECK(tables_equal(merged.materialize(), expected));
  // sources untouched
  CHECK(p1.row_count() == 2);
  CHECK(p2.row_count() == 3);
}

TEST_CASE("merge of a single partition reproduces it") {
  BufferOptions tiny;
  tiny.spill_threshold_bytes = 128;
  ColumnarBuffer p(text_schema(), tiny);
  for (int i = 0; i < 6; ++i) p.append(text_batch(4, 40 + i));
  ColumnarBuffer merged = ColumnarBuffer::merge({&p});
  CHECK(tables_equal(merged.materialize(), p.materialize()));
}

TEST_CASE("merge rejects mismatched schemas") {
  ColumnarBuffer a(text_schema());
  ColumnarBuffer b({{"data", ColumnType::String}});
  a.append(text_batch(1, 1));
  b.append(Batch().set("data", StringColumn{"x"}));
  try {
    ColumnarBuffer::merge({&a, &b});
    FAIL("expected IncompatibleSchemas");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::IncompatibleSchemas);
  }
}

TEST_CASE("reset drops rows and segment files") {
  BufferOptions options;
  options.spill_threshold_bytes = 64;
  ColumnarBuffer buf(text_schema(), options);
  buf.append(text_batch(8, 3));
  REQUIRE(buf.segments().size() >= 1);
  auto seg_path = buf.segments().front().path;
  buf.reset();
  CHECK(buf.row_count() == 0);
  CHECK(buf.segments().empty());
  CHECK(!std::filesystem::exists(seg_path));
  CHECK(buf.materialize().row_count() == 0);
}

TEST_CASE("spill threshold can come from the environment") {
  setenv("EVALKIT_SPILL_THRESHOLD", "2048", 1);
  ColumnarBuffer buf(text_schema());
  CHECK(buf.spill_threshold_bytes() == 2048);
  unsetenv("EVALKIT_SPILL_THRESHOLD");
  ColumnarBuffer dflt(text_schema());
  CHECK(dflt.spill_threshold_bytes() == (64ull << 20));
}

TEST_CASE("segment files live under the configured spill directory") {
  auto dir = std::filesystem::temp_directory_path() / "evalkit-test-spilldir";
  std::filesystem::remove_all(dir);
  BufferOptions options;
  options.spill_threshold_bytes = 64;
  options.spill_dir = dir;
  ColumnarBuffer buf(text_schema(), options);
  buf.append(text_batch(8, 5));
  REQUIRE(buf.segments().size() >= 1);
  auto seg = buf.segments().front().path.string();
  CHECK(seg.rfind(dir.string(), 0) == 0);
}

TEST_CASE("spill directory can come from the environment") {
  auto dir = std::filesystem::temp_directory_path() / "evalkit-test-envdir";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  setenv("EVALKIT_SPILL_DIR", dir.c_str(), 1);
  BufferOptions options;
  options.spill_threshold_bytes = 64;
  ColumnarBuffer buf(text_schema(), options);
  buf.append(text_batch(8, 21));
  unsetenv("EVALKIT_SPILL_DIR");
  REQUIRE(buf.segments().size() >= 1);
  CHECK(buf.segments().front().path.string().rfind(dir.string(), 0) == 0);
}

TEST_CASE("spilled buffers feed canonical metrics identically merged or not") {
  // multi-worker shape: per-worker partitions merged before compute
  FeatureSchema schema{{"predictions", ColumnType::Int},
                       {"references", ColumnType::Int}};
  BufferOptions tiny;
  tiny.spill_threshold_bytes = 96;
  ColumnarBuffer w1(schema, tiny), w2(schema, tiny), whole(schema);
  stats::SplitMix64 gen(31);
  auto push = [&](ColumnarBuffer& buf, std::size_t rows) {
    IntColumn p, r;
    for (std::size_t i = 0; i < rows; ++i) {
      p.push_back(std::int64_t(gen.next() % 2));
      r.push_back(std::int64_t(gen.next() % 2));
    }
    Batch b = Batch().set("predictions", p).set("references", r);
    buf.append(b);
    whole.append(b);
  };
  push(w1, 17);
  push(w2, 9);
  ColumnarBuffer merged = ColumnarBuffer::merge({&w1, &w2});
  Table a = merged.materialize();
  Table b = whole.materialize();
  CHECK(a.columns == b.columns);
}

TEST_CASE("a swapped-in valid segment still fails the recorded checksum") {
  BufferOptions options;
  options.spill_threshold_bytes = 64;
  ColumnarBuffer victim(text_schema(), options);
  ColumnarBuffer donor(text_schema(), options);
  victim.append(text_batch(8, 1001));
  donor.append(text_batch(8, 2002));
  REQUIRE(!victim.segments().empty());
  REQUIRE(!donor.segments().empty());

  // internally consistent file, wrong content for this buffer
  std::filesystem::copy_file(donor.segments().front().path,
                             victim.segments().front().path,
                             std::filesystem::copy_options::overwrite_existing);
  try {
    victim.materialize();
    FAIL("expected ChecksumMismatch");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ChecksumMismatch);
  }
}
