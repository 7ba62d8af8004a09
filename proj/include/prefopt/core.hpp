#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace prefopt {

using TokenId = std::uint32_t;

/// Ordered token ids. The owning vocabulary size travels with the dataset or
/// the model parameters; `validate_tokens` checks membership.
using TokenSeq = std::vector<TokenId>;

/// Throws ValidationError if any id is >= vocab_size.
void validate_tokens(const TokenSeq& seq, std::size_t vocab_size, std::string_view what);

/// The generation sentinel is always the last id of the vocabulary.
inline TokenId eos_token(std::size_t vocab_size) { return static_cast<TokenId>(vocab_size - 1); }

// Byte-level codec: ids 0..255 are raw bytes, 256 is EOS.
inline constexpr std::size_t kByteVocabSize = 257;
inline constexpr TokenId kByteEos = 256;

TokenSeq tokenize_bytes(std::string_view text, bool append_eos = false);
/// Decodes byte ids, stopping at the first EOS. Throws ValidationError on ids > 256.
std::string detokenize_bytes(const TokenSeq& seq);

enum class Category { Long, Short, MCQ, Safety, Video };

inline constexpr std::array<Category, 5> kAllCategories = {
    Category::Long, Category::Short, Category::MCQ, Category::Safety, Category::Video};

std::string_view to_string(Category c);
/// Throws SchemaError on unknown names.
Category parse_category(std::string_view name);

/// Precomputed encoding of the query input (image, video or text).
struct QueryFeatures {
  std::string id;
  std::vector<double> features;
  Category category = Category::Short;

  bool operator==(const QueryFeatures&) const = default;
};

struct DimScores {
  double helpfulness = 0.0;
  double faithfulness = 0.0;
  double ethics = 0.0;

  bool operator==(const DimScores&) const = default;
};

struct AnnotatedResponse {
  std::string model_name;
  TokenSeq tokens;
  std::uint32_t rank = 1;  // 1 = best, ties allowed
  DimScores dim_scores;    // metadata only, no loss reads these
  TokenSeq critique;       // enhanced annotation, the critique-head target

  bool operator==(const AnnotatedResponse&) const = default;
};

struct RankedResponseSet {
  QueryFeatures query;
  std::vector<AnnotatedResponse> responses;

  /// False when every response shares one rank; such sets produce no pairs.
  bool usable_for_pairs() const;

  bool operator==(const RankedResponseSet&) const = default;
};

struct Dataset {
  std::vector<RankedResponseSet> items;
  std::size_t vocab_size = 0;
  std::size_t feature_dim = 0;

  bool operator==(const Dataset&) const = default;
};

/// Parses annotation JSONL. Each line may carry an optional "vocab_size"; when
/// no line does, the vocabulary is max(token id) + 1. `vocab_override` wins
/// over both. Errors name the 1-based line number.
Dataset parse_dataset(std::istream& in, std::optional<std::size_t> vocab_override = std::nullopt);
Dataset load_dataset(const std::filesystem::path& path,
                     std::optional<std::size_t> vocab_override = std::nullopt);

/// Canonical JSONL form (one object per item, "vocab_size" on every line).
void write_dataset(std::ostream& out, const Dataset& dataset);
std::string serialize_dataset(const Dataset& dataset);

}  // namespace prefopt
