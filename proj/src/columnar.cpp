#include "evalkit/columnar.hpp"

#include <unistd.h>

#include <atomic>
#include <cstdlib>
#include <cstring>
#include <fstream>

#include "evalkit/hash.hpp"

namespace evalkit {

namespace {

constexpr char kMagic[16] = {'E', 'V', 'A', 'L', 'S', 'P', 'I', 'L',
                             'L', 'S', 'E', 'G', 1,   0,   0,   0};

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(char((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(char((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& out, double d) {
  std::uint64_t v;
  std::memcpy(&v, &d, 8);
  put_u64(out, v);
}

class Reader {
 public:
  Reader(const char* data, std::size_t size)
      : p_(data), end_(data + size), begin_(data) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t((unsigned char)p_[i]) << (8 * i);
    p_ += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t((unsigned char)p_[i]) << (8 * i);
    p_ += 8;
    return v;
  }
  double f64() {
    std::uint64_t v = u64();
    double d;
    std::memcpy(&d, &v, 8);
    return d;
  }
  std::string str() {
    std::uint32_t n = u32();
    need(n);
    std::string s(p_, n);
    p_ += n;
    return s;
  }
  bool done() const { return p_ == end_; }
  std::size_t consumed() const { return std::size_t(p_ - begin_); }

 private:
  void need(std::size_t n) {
    if (std::size_t(end_ - p_) < n)
      raise(ErrorCode::SpillIOFailure, "truncated spill segment");
  }
  const char* p_;
  const char* end_;
  const char* begin_;
};

std::string encode_column(const Column& col) {
  std::string out;
  struct Enc {
    std::string& out;
    void operator()(const IntColumn& v) {
      for (auto x : v) put_u64(out, std::uint64_t(x));
    }
    void operator()(const FloatColumn& v) {
      for (auto x : v) put_f64(out, x);
    }
    void operator()(const StringColumn& v) {
      for (const auto& s : v) {
        put_u32(out, std::uint32_t(s.size()));
        out.append(s);
      }
    }
    void operator()(const StringSeqColumn& v) {
      for (const auto& seq : v) {
        put_u32(out, std::uint32_t(seq.size()));
        for (const auto& s : seq) {
          put_u32(out, std::uint32_t(s.size()));
          out.append(s);
        }
      }
    }
    void operator()(const FloatSeqColumn& v) {
      for (const auto& seq : v) {
        put_u32(out, std::uint32_t(seq.size()));
        for (auto x : seq) put_f64(out, x);
      }
    }
  };
  std::visit(Enc{out}, col);
  return out;
}

Column decode_column(Reader& r, ColumnType type, std::uint64_t rows) {
  switch (type) {
    case ColumnType::Int: {
      IntColumn v;
      v.reserve(rows);
      for (std::uint64_t i = 0; i < rows; ++i) v.push_back(std::int64_t(r.u64()));
      return v;
    }
    case ColumnType::Float: {
      FloatColumn v;
      v.reserve(rows);
      for (std::uint64_t i = 0; i < rows; ++i) v.push_back(r.f64());
      return v;
    }
    case ColumnType::String: {
      StringColumn v;
      v.reserve(rows);
      for (std::uint64_t i = 0; i < rows; ++i) v.push_back(r.str());
      return v;
    }
    case ColumnType::StringSeq: {
      StringSeqColumn v;
      v.reserve(rows);
      for (std::uint64_t i = 0; i < rows; ++i) {
        std::uint32_t n = r.u32();
        std::vector<std::string> seq;
        seq.reserve(n);
        for (std::uint32_t j = 0; j < n; ++j) seq.push_back(r.str());
        v.push_back(std::move(seq));
      }
      return v;
    }
    case ColumnType::FloatSeq: {
      FloatSeqColumn v;
      v.reserve(rows);
      for (std::uint64_t i = 0; i < rows; ++i) {
        std::uint32_t n = r.u32();
        std::vector<double> seq;
        seq.reserve(n);
        for (std::uint32_t j = 0; j < n; ++j) seq.push_back(r.f64());
        v.push_back(std::move(seq));
      }
      return v;
    }
  }
  raise(ErrorCode::SpillIOFailure, "bad column type in segment");
}

std::uint64_t env_threshold() {
  if (const char* s = std::getenv("EVALKIT_SPILL_THRESHOLD")) {
    char* end = nullptr;
    unsigned long long v = std::strtoull(s, &end, 10);
    if (end && *end == '\0' && v > 0) return v;
  }
  return 64ull << 20;
}

std::filesystem::path env_spill_dir() {
  if (const char* s = std::getenv("EVALKIT_SPILL_DIR")) {
    if (*s) return s;
  }
  return std::filesystem::temp_directory_path();
}

bool env_keep() {
  const char* s = std::getenv("EVALKIT_SPILL_KEEP");
  return s && *s == '1';
}

std::atomic<std::uint64_t> g_buffer_counter{0};

}  // namespace

std::string encode_segment_payload(const Table& rows) {
  std::string payload;
  for (const auto& col : rows.columns) {
    std::string block = encode_column(col);
    put_u64(payload, block.size());
    payload.append(block);
  }
  return payload;
}

void write_segment_file(const std::filesystem::path& path, const Table& rows,
                        SpillSegment& out) {
  std::string payload = encode_segment_payload(rows);
  std::uint64_t checksum = fnv1a64(payload.data(), payload.size());
  std::string header;
  header.append(kMagic, 16);
  put_u64(header, rows.schema.fingerprint());
  put_u64(header, rows.row_count());
  put_u64(header, payload.size());
  put_u64(header, checksum);

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) raise(ErrorCode::SpillIOFailure, "cannot open segment: " + path.string());
  f.write(header.data(), std::streamsize(header.size()));
  f.write(payload.data(), std::streamsize(payload.size()));
  f.flush();
  if (!f) raise(ErrorCode::SpillIOFailure, "write failed: " + path.string());

  out.path = path;
  out.row_count = rows.row_count();
  out.checksum = checksum;
  out.schema_fingerprint = rows.schema.fingerprint();
}

Table decode_segment_file(const std::filesystem::path& path,
                          const FeatureSchema& schema,
                          std::optional<std::uint64_t> expected_checksum) {
  std::ifstream f(path, std::ios::binary);
  if (!f) raise(ErrorCode::SpillIOFailure, "cannot open segment: " + path.string());
  std::string data((std::istreambuf_iterator<char>(f)),
                   std::istreambuf_iterator<char>());
  if (data.size() < 48 || std::memcmp(data.data(), kMagic, 16) != 0)
    raise(ErrorCode::SpillIOFailure, "bad segment header: " + path.string());

  Reader hdr(data.data() + 16, 32);
  std::uint64_t fingerprint = hdr.u64();
  std::uint64_t rows = hdr.u64();
  std::uint64_t payload_size = hdr.u64();
  std::uint64_t checksum = hdr.u64();

  if (fingerprint != schema.fingerprint())
    raise(ErrorCode::SchemaMismatch,
          "segment schema fingerprint mismatch: " + path.string());
  if (data.size() - 48 != payload_size)
    raise(ErrorCode::SpillIOFailure, "segment size mismatch: " + path.string());
  if (fnv1a64(data.data() + 48, payload_size) != checksum)
    raise(ErrorCode::ChecksumMismatch,
          "segment checksum mismatch: " + path.string());
  if (expected_checksum && checksum != *expected_checksum)
    raise(ErrorCode::ChecksumMismatch,
          "segment content differs from the recorded checksum: " + path.string());

  Table out(schema);
  Reader r(data.data() + 48, payload_size);
  const char* payload_begin = data.data() + 48;
  for (std::size_t i = 0; i < schema.size(); ++i) {
    std::uint64_t block_size = r.u64();
    const char* block_start = payload_begin + r.consumed();
    out.columns[i] = decode_column(r, schema.columns[i].type, rows);
    std::uint64_t decoded = std::uint64_t(payload_begin + r.consumed() - block_start);
    if (decoded != block_size)
      raise(ErrorCode::SpillIOFailure,
            "column block length mismatch in " + path.string());
  }
  if (!r.done())
    raise(ErrorCode::SpillIOFailure, "trailing bytes in segment: " + path.string());
  return out;
}

ColumnarBuffer::ColumnarBuffer(FeatureSchema schema, BufferOptions options)
    : schema_(std::move(schema)), chunk_(schema_) {
  threshold_ = options.spill_threshold_bytes ? options.spill_threshold_bytes
                                             : env_threshold();
  keep_files_ = options.keep_spill_files || env_keep();
  std::filesystem::path base =
      options.spill_dir.empty() ? env_spill_dir() : options.spill_dir;
  dir_ = base / ("evalkit-spill-" + std::to_string(::getpid()) + "-" +
                 std::to_string(g_buffer_counter.fetch_add(1)));
}

ColumnarBuffer::~ColumnarBuffer() { remove_files(); }

ColumnarBuffer::ColumnarBuffer(ColumnarBuffer&& other) noexcept
    : schema_(std::move(other.schema_)),
      chunk_(std::move(other.chunk_)),
      segments_(std::move(other.segments_)),
      threshold_(other.threshold_),
      row_count_(other.row_count_),
      chunk_bytes_(other.chunk_bytes_),
      peak_chunk_bytes_(other.peak_chunk_bytes_),
      dir_(std::move(other.dir_)),
      keep_files_(other.keep_files_),
      owns_dir_(other.owns_dir_),
      next_segment_id_(other.next_segment_id_) {
  other.segments_.clear();
  other.owns_dir_ = false;
  other.row_count_ = 0;
}

ColumnarBuffer& ColumnarBuffer::operator=(ColumnarBuffer&& other) noexcept {
  if (this != &other) {
    remove_files();
    schema_ = std::move(other.schema_);
    chunk_ = std::move(other.chunk_);
    segments_ = std::move(other.segments_);
    threshold_ = other.threshold_;
    row_count_ = other.row_count_;
    chunk_bytes_ = other.chunk_bytes_;
    peak_chunk_bytes_ = other.peak_chunk_bytes_;
    dir_ = std::move(other.dir_);
    keep_files_ = other.keep_files_;
    owns_dir_ = other.owns_dir_;
    next_segment_id_ = other.next_segment_id_;
    other.segments_.clear();
    other.owns_dir_ = false;
    other.row_count_ = 0;
  }
  return *this;
}

void ColumnarBuffer::remove_files() noexcept {
  if (keep_files_) return;
  std::error_code ec;
  for (const auto& seg : segments_) std::filesystem::remove(seg.path, ec);
  if (owns_dir_) std::filesystem::remove(dir_, ec);
}

void ColumnarBuffer::append(const Batch& batch) {
  append_rows(batch_to_table(schema_, batch));
}

void ColumnarBuffer::append_rows(const Table& rows) {
  if (!(rows.schema == schema_))
    raise(ErrorCode::SchemaMismatch, "rows do not match buffer schema");
  if (rows.row_count() == 0) raise(ErrorCode::EmptyBatch, "batch has zero rows");
  chunk_.append_table(rows);
  row_count_ += rows.row_count();
  chunk_bytes_ = 0;
  for (const auto& col : chunk_.columns) chunk_bytes_ += column_encoded_bytes(col);
  peak_chunk_bytes_ = std::max(peak_chunk_bytes_, chunk_bytes_);
  if (chunk_bytes_ > threshold_) flush_chunk();
}

void ColumnarBuffer::flush_chunk() {
  if (chunk_.row_count() == 0) return;
  if (!owns_dir_) {
    std::error_code ec;
    std::filesystem::create_directories(dir_, ec);
    if (ec) raise(ErrorCode::SpillIOFailure, "cannot create spill dir: " + dir_.string());
    owns_dir_ = true;
  }
  SpillSegment seg;
  auto path = dir_ / ("seg-" + std::to_string(next_segment_id_++) + ".bin");
  write_segment_file(path, chunk_, seg);
  segments_.push_back(seg);
  chunk_ = Table(schema_);
  chunk_bytes_ = 0;
}

Table ColumnarBuffer::materialize() const {
  Table out(schema_);
  for (const auto& seg : segments_)
    out.append_table(decode_segment_file(seg.path, schema_, seg.checksum));
  if (chunk_.row_count() > 0) out.append_table(chunk_);
  return out;
}

void ColumnarBuffer::reset() {
  if (!keep_files_) {
    std::error_code ec;
    for (const auto& seg : segments_) std::filesystem::remove(seg.path, ec);
  }
  segments_.clear();
  chunk_ = Table(schema_);
  chunk_bytes_ = 0;
  row_count_ = 0;
}

ColumnarBuffer ColumnarBuffer::merge(
    const std::vector<const ColumnarBuffer*>& parts, BufferOptions options) {
  if (parts.empty())
    raise(ErrorCode::EmptyInput, "merge needs at least one partition");
  const FeatureSchema& schema = parts.front()->schema();
  for (const auto* p : parts)
    if (!(p->schema() == schema))
      raise(ErrorCode::IncompatibleSchemas, "partition schemas differ");

  ColumnarBuffer out(schema, options);
  // segment-at-a-time keeps the merge within the destination threshold
  for (const auto* p : parts) {
    for (const auto& seg : p->segments_)
      out.append_rows(decode_segment_file(seg.path, schema, seg.checksum));
    if (p->chunk_.row_count() > 0) out.append_rows(p->chunk_);
  }
  return out;
}

}  // namespace evalkit
