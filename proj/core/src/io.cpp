#include "stagepoly/io.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <sstream>

#include <json.hpp>

namespace stagepoly {

namespace {

constexpr std::uint32_t kSplitBlock = 32;

bool blank(std::string_view s) {
  return std::all_of(s.begin(), s.end(),
                     [](unsigned char c) { return std::isspace(c); });
}

std::vector<std::string_view> tokenize(std::string_view s) {
  std::vector<std::string_view> toks;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    std::size_t j = i;
    while (j < s.size() && !std::isspace(static_cast<unsigned char>(s[j]))) ++j;
    if (j > i) toks.push_back(s.substr(i, j - i));
    i = j;
  }
  return toks;
}

bool parse_double(std::string_view s, double& out) {
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);  // "+1" labels
  const char* begin = s.data();
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(begin, end, out);
  return ec == std::errc{} && ptr == end;
}

bool all_digits(std::string_view s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](unsigned char c) {
    return std::isdigit(c);
  });
}

[[noreturn]] void parse_fail(std::uint64_t line_no, const std::string& what) {
  throw ParseError("line " + std::to_string(line_no) + ": " + what);
}

}  // namespace

Example parse_example(std::string_view line, Task task, const HashConfig& cfg,
                      std::uint64_t line_no) {
  const std::size_t bar = line.find('|');
  if (bar == std::string_view::npos) parse_fail(line_no, "missing '|'");

  const auto head = tokenize(line.substr(0, bar));
  if (head.empty() || head.size() > 2)
    parse_fail(line_no, "expected '<label> [<importance>] |'");

  Example ex;
  if (!parse_double(head[0], ex.label) || !std::isfinite(ex.label))
    parse_fail(line_no, "unparseable label '" + std::string(head[0]) + "'");
  if (head.size() == 2) {
    if (!parse_double(head[1], ex.importance) ||
        !std::isfinite(ex.importance) || ex.importance <= 0.0)
      parse_fail(line_no, "bad importance '" + std::string(head[1]) + "'");
  }
  if (task == Task::binary) {
    if (ex.label == -1.0 || ex.label == 0.0)
      ex.label = 0.0;
    else if (ex.label == 1.0)
      ex.label = 1.0;
    else
      parse_fail(line_no, "binary label must be -1/+1 or 0/1");
  }

  for (std::string_view tok : tokenize(line.substr(bar + 1))) {
    std::string_view name = tok;
    double value = 1.0;
    if (const std::size_t colon = tok.rfind(':');
        colon != std::string_view::npos) {
      name = tok.substr(0, colon);
      if (!parse_double(tok.substr(colon + 1), value))
        parse_fail(line_no, "bad feature value in '" + std::string(tok) + "'");
    }
    if (name.empty()) parse_fail(line_no, "empty feature name");
    if (!std::isfinite(value))
      parse_fail(line_no, "non-finite feature value in '" + std::string(tok) + "'");
    VarId id;
    if (all_digits(name)) {
      std::uint64_t parsed = 0;
      auto [ptr, ec] = std::from_chars(name.data(), name.data() + name.size(), parsed);
      if (ec != std::errc{}) parse_fail(line_no, "bad feature id");
      id = parsed;
    } else {
      id = hash_token(name, cfg);
    }
    bool merged = false;
    for (auto& [eid, ev] : ex.features)
      if (eid == id) {
        ev += value;
        merged = true;
        break;
      }
    if (!merged) ex.features.emplace_back(id, value);
  }
  return ex;
}

std::string format_example(const Example& ex) {
  std::ostringstream os;
  os.precision(17);
  os << ex.label;
  if (ex.importance != 1.0) os << ' ' << ex.importance;
  os << " |";
  for (const auto& [id, value] : ex.features) {
    os << ' ' << id;
    if (value != 1.0) os << ':' << value;
  }
  return os.str();
}

DatasetManifest load_manifest(const std::string& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw EmptyData("cannot open manifest " + manifest_path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("manifest " + manifest_path + ": " + e.what());
  }
  DatasetManifest m;
  try {
    m.name = j.at("name").get<std::string>();
    m.path = j.at("path").get<std::string>();
    const auto task = j.at("task").get<std::string>();
    if (task == "binary")
      m.task = Task::binary;
    else if (task == "regression")
      m.task = Task::regression;
    else
      throw ParseError("manifest " + manifest_path + ": unknown task '" + task + "'");
    if (j.contains("n")) m.declared_examples = j["n"].get<std::uint64_t>();
    if (j.contains("d")) m.declared_features = j["d"].get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("manifest " + manifest_path + ": " + e.what());
  }
  const auto dir = std::filesystem::path(manifest_path).parent_path();
  m.path = (dir / m.path).string();
  return m;
}

FileStream::FileStream(std::string path, Task task, HashConfig cfg)
    : path_(std::move(path)), task_(task), cfg_(cfg), in_(path_) {
  if (!in_) throw EmptyData("cannot open " + path_);
}

bool FileStream::next(Example& out) {
  std::string line;
  while (std::getline(in_, line)) {
    ++line_no_;
    if (blank(line)) continue;
    out = parse_example(line, task_, cfg_, line_no_);
    return true;
  }
  return false;
}

void FileStream::reset() {
  in_.close();
  in_.clear();
  in_.open(path_);
  if (!in_) throw EmptyData("cannot reopen " + path_);
  line_no_ = 0;
}

std::vector<SplitSide> split_block(std::uint64_t block_start,
                                   std::uint32_t block_len,
                                   double test_fraction, std::uint64_t seed) {
  // the epsilon absorbs representation error in fractions like 1 - 0.8
  const auto quota_at = [&](std::uint64_t n) {
    return static_cast<std::uint64_t>(
        std::floor(static_cast<double>(n) * test_fraction + 1e-9));
  };
  const std::uint64_t quota =
      quota_at(block_start + block_len) - quota_at(block_start);

  std::vector<std::pair<std::uint64_t, std::uint32_t>> hashed(block_len);
  for (std::uint32_t i = 0; i < block_len; ++i)
    hashed[i] = {mix64(seed ^ mix64(block_start + i)), i};
  std::sort(hashed.begin(), hashed.end());

  std::vector<SplitSide> sides(block_len, SplitSide::train);
  for (std::uint64_t k = 0; k < quota && k < block_len; ++k)
    sides[hashed[block_len - 1 - k].second] = SplitSide::test;
  return sides;
}

SplitStream::SplitStream(std::string path, Task task, HashConfig cfg,
                         double fraction, std::uint64_t seed, SplitSide side)
    : path_(std::move(path)),
      task_(task),
      cfg_(cfg),
      fraction_(fraction),
      seed_(seed),
      side_(side),
      in_(path_) {
  if (!(fraction > 0.0 && fraction < 1.0))
    throw InvalidParam("split fraction must be in (0, 1)");
  if (!in_) throw EmptyData("cannot open " + path_);
}

bool SplitStream::refill() {
  block_.clear();
  sides_.clear();
  block_pos_ = 0;
  std::string line;
  while (block_.size() < kSplitBlock && std::getline(in_, line)) {
    ++line_no_;
    if (blank(line)) continue;
    block_.emplace_back(line, line_no_);
  }
  if (block_.empty()) return false;
  sides_ = split_block(consumed_, static_cast<std::uint32_t>(block_.size()),
                       1.0 - fraction_, seed_);
  consumed_ += block_.size();
  return true;
}

bool SplitStream::next(Example& out) {
  for (;;) {
    while (block_pos_ < block_.size()) {
      const std::size_t i = block_pos_++;
      if (sides_[i] == side_) {
        out = parse_example(block_[i].first, task_, cfg_, block_[i].second);
        return true;
      }
    }
    if (!refill()) return false;
  }
}

void SplitStream::reset() {
  in_.close();
  in_.clear();
  in_.open(path_);
  if (!in_) throw EmptyData("cannot reopen " + path_);
  consumed_ = 0;
  line_no_ = 0;
  block_.clear();
  sides_.clear();
  block_pos_ = 0;
}

std::uint64_t count_examples(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw EmptyData("cannot open " + path);
  std::uint64_t n = 0;
  std::string line;
  while (std::getline(in, line))
    if (!blank(line)) ++n;
  if (n == 0) throw EmptyData(path + " has no examples");
  return n;
}

std::pair<std::unique_ptr<ExampleStream>, std::unique_ptr<ExampleStream>>
split_dataset(const std::string& path, Task task, const HashConfig& cfg,
              double fraction, std::uint64_t seed) {
  count_examples(path);  // rejects empty files up front
  return {std::make_unique<SplitStream>(path, task, cfg, fraction, seed,
                                        SplitSide::train),
          std::make_unique<SplitStream>(path, task, cfg, fraction, seed,
                                        SplitSide::test)};
}

}  // namespace stagepoly
