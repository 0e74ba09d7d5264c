#pragma once

#include <cstdint>
#include <fstream>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "stagepoly/features.hpp"

namespace stagepoly {

enum class Task { binary, regression };

/// Restartable single-consumer example source. Multiple independent
/// readers over the same file are fine; one reader is not shared.
class ExampleStream {
 public:
  virtual ~ExampleStream() = default;
  virtual bool next(Example& out) = 0;
  virtual void reset() = 0;
};

class VectorStream final : public ExampleStream {
 public:
  VectorStream() = default;
  explicit VectorStream(std::vector<Example> examples)
      : examples_(std::move(examples)) {}
  bool next(Example& out) override {
    if (pos_ >= examples_.size()) return false;
    out = examples_[pos_++];
    return true;
  }
  void reset() override { pos_ = 0; }
  std::size_t size() const noexcept { return examples_.size(); }

 private:
  std::vector<Example> examples_;
  std::size_t pos_ = 0;
};

/// Parses one record: `<label> [<importance>] | <feat>[:<value>] ...`.
/// A feature token that is all digits is used as the id directly; anything
/// else is hashed into the b-bit base-id space. Duplicate ids sum their
/// values; token order is preserved. For binary tasks -1/+1 and 0/1 labels
/// both normalize to 0/1.
Example parse_example(std::string_view line, Task task, const HashConfig& cfg,
                      std::uint64_t line_no = 0);

/// Numeric-id text form of an example; parse_example(format_example(e))
/// reproduces e.
std::string format_example(const Example& ex);

struct DatasetManifest {
  std::string name;
  std::string path;  // resolved against the manifest file's directory
  Task task = Task::binary;
  std::optional<std::uint64_t> declared_examples;
  std::optional<std::uint64_t> declared_features;
};

DatasetManifest load_manifest(const std::string& manifest_path);

/// Streams a whole file, one example per line; whitespace-only lines are
/// skipped. Constant-size line buffer.
class FileStream final : public ExampleStream {
 public:
  FileStream(std::string path, Task task, HashConfig cfg);
  bool next(Example& out) override;
  void reset() override;

 private:
  std::string path_;
  Task task_;
  HashConfig cfg_;
  std::ifstream in_;
  std::uint64_t line_no_ = 0;
};

enum class SplitSide { train, test };

// Deterministic assignment for a block of consecutive examples: for block
// [start, start+len), the quota floor((start+len)*test_fraction) -
// floor(start*test_fraction) members with the largest index hashes go to
// the test side. Exposed for tests.
std::vector<SplitSide> split_block(std::uint64_t block_start,
                                   std::uint32_t block_len,
                                   double test_fraction, std::uint64_t seed);

/// One side of a seeded, disjoint, exhaustive train/test split of a file.
/// fraction is the train share (the split keeps it exact per block of 32
/// examples). Memory use is one block regardless of file size.
class SplitStream final : public ExampleStream {
 public:
  SplitStream(std::string path, Task task, HashConfig cfg, double fraction,
              std::uint64_t seed, SplitSide side);
  bool next(Example& out) override;
  void reset() override;

 private:
  bool refill();

  std::string path_;
  Task task_;
  HashConfig cfg_;
  double fraction_;
  std::uint64_t seed_;
  SplitSide side_;
  std::ifstream in_;
  std::uint64_t consumed_ = 0;  // examples read from the file so far
  std::uint64_t line_no_ = 0;
  std::vector<std::pair<std::string, std::uint64_t>> block_;  // line, line_no
  std::vector<SplitSide> sides_;
  std::size_t block_pos_ = 0;
};

/// Counts examples (non-blank lines). Throws EmptyData when none.
std::uint64_t count_examples(const std::string& path);

/// Both sides of the seeded split in one call; throws EmptyData when the
/// file has no examples. fraction defaults to the 80% train share.
std::pair<std::unique_ptr<ExampleStream>, std::unique_ptr<ExampleStream>>
split_dataset(const std::string& path, Task task, const HashConfig& cfg,
              double fraction = 0.8, std::uint64_t seed = 0);

}  // namespace stagepoly
