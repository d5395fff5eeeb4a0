#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "evalkit/schema.hpp"

namespace evalkit {

// On-disk format (all integers little-endian):
//   bytes  0..15  magic "EVALSPILLSEG" 0x01 0x00 0x00 0x00
//   bytes 16..23  schema fingerprint (FNV-1a 64 of FeatureSchema::to_string)
//   bytes 24..31  row count
//   bytes 32..39  payload size in bytes
//   bytes 40..47  checksum (FNV-1a 64 of payload)
//   bytes 48..    payload: one length-prefixed block per column in schema
//                 order; ints/floats 8 bytes per row, strings u32 length +
//                 UTF-8 bytes, sequences u32 element count + elements.
struct SpillSegment {
  std::filesystem::path path;
  std::uint64_t row_count = 0;
  std::uint64_t checksum = 0;
  std::uint64_t schema_fingerprint = 0;
};

struct BufferOptions {
  // 0 means: take EVALKIT_SPILL_THRESHOLD from the environment, else 64 MiB.
  std::uint64_t spill_threshold_bytes = 0;
  // empty means: EVALKIT_SPILL_DIR from the environment, else the system
  // temp directory.
  std::filesystem::path spill_dir;
  // keep segment files on drop (debugging); EVALKIT_SPILL_KEEP=1 also works.
  bool keep_spill_files = false;
};

class ColumnarBuffer {
 public:
  explicit ColumnarBuffer(FeatureSchema schema, BufferOptions options = {});
  ~ColumnarBuffer();

  ColumnarBuffer(ColumnarBuffer&&) noexcept;
  ColumnarBuffer& operator=(ColumnarBuffer&&) noexcept;
  ColumnarBuffer(const ColumnarBuffer&) = delete;
  ColumnarBuffer& operator=(const ColumnarBuffer&) = delete;

  void append(const Batch& batch);
  void append_rows(const Table& rows);

  // All rows in append order; the buffer itself is unchanged.
  Table materialize() const;

  void reset();  // drops all rows and segment files

  const FeatureSchema& schema() const { return schema_; }
  std::uint64_t row_count() const { return row_count_; }
  std::uint64_t spill_threshold_bytes() const { return threshold_; }
  const std::vector<SpillSegment>& segments() const { return segments_; }
  std::size_t in_memory_bytes() const { return chunk_bytes_; }
  std::size_t peak_in_memory_bytes() const { return peak_chunk_bytes_; }

  static ColumnarBuffer merge(const std::vector<const ColumnarBuffer*>& parts,
                              BufferOptions options = {});

 private:
  void flush_chunk();
  void remove_files() noexcept;

  FeatureSchema schema_;
  Table chunk_;
  std::vector<SpillSegment> segments_;
  std::uint64_t threshold_ = 0;
  std::uint64_t row_count_ = 0;
  std::size_t chunk_bytes_ = 0;
  std::size_t peak_chunk_bytes_ = 0;
  std::filesystem::path dir_;
  bool keep_files_ = false;
  bool owns_dir_ = false;
  std::uint64_t next_segment_id_ = 0;
};

// Segment encode/decode, exposed for tests and tooling. When
// expected_checksum is set, the file's checksum must also match it (the
// owning buffer pins the value recorded at write time).
std::string encode_segment_payload(const Table& rows);
Table decode_segment_file(const std::filesystem::path& path,
                          const FeatureSchema& schema,
                          std::optional<std::uint64_t> expected_checksum = {});
void write_segment_file(const std::filesystem::path& path, const Table& rows,
                        SpillSegment& out);

}  // namespace evalkit
