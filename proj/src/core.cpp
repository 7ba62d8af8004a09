#include "prefopt/core.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "prefopt/errors.hpp"

namespace prefopt {

using nlohmann::json;

void validate_tokens(const TokenSeq& seq, std::size_t vocab_size, std::string_view what) {
  for (TokenId t : seq) {
    if (t >= vocab_size) {
      throw ValidationError(std::string(what) + ": token id " + std::to_string(t) +
                            " out of range for vocabulary of size " + std::to_string(vocab_size));
    }
  }
}

TokenSeq tokenize_bytes(std::string_view text, bool append_eos) {
  TokenSeq out;
  out.reserve(text.size() + (append_eos ? 1 : 0));
  for (char ch : text) out.push_back(static_cast<unsigned char>(ch));
  if (append_eos) out.push_back(kByteEos);
  return out;
}

std::string detokenize_bytes(const TokenSeq& seq) {
  std::string out;
  out.reserve(seq.size());
  for (TokenId t : seq) {
    if (t == kByteEos) break;
    if (t > kByteEos) throw ValidationError("byte codec: token id " + std::to_string(t) + " is not a byte");
    out.push_back(static_cast<char>(static_cast<unsigned char>(t)));
  }
  return out;
}

std::string_view to_string(Category c) {
  switch (c) {
    case Category::Long: return "Long";
    case Category::Short: return "Short";
    case Category::MCQ: return "MCQ";
    case Category::Safety: return "Safety";
    case Category::Video: return "Video";
  }
  return "?";
}

Category parse_category(std::string_view name) {
  for (Category c : kAllCategories) {
    if (to_string(c) == name) return c;
  }
  throw SchemaError("unknown category '" + std::string(name) + "'");
}

bool RankedResponseSet::usable_for_pairs() const {
  if (responses.size() < 2) return false;
  const auto first = responses.front().rank;
  return std::any_of(responses.begin(), responses.end(),
                     [first](const AnnotatedResponse& r) { return r.rank != first; });
}

namespace {

std::string at_line(std::size_t line) { return "line " + std::to_string(line) + ": "; }

double finite_number(const json& j, std::size_t line, std::string_view field) {
  if (!j.is_number()) throw SchemaError(at_line(line) + std::string(field) + " must be a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) throw ValidationError(at_line(line) + std::string(field) + " is not finite");
  return v;
}

TokenSeq token_list(const json& j, std::size_t line, std::string_view field) {
  if (!j.is_array()) throw SchemaError(at_line(line) + std::string(field) + " must be an array");
  TokenSeq out;
  out.reserve(j.size());
  for (const auto& t : j) {
    if (!t.is_number_unsigned()) {
      throw SchemaError(at_line(line) + std::string(field) + " must hold non-negative integers");
    }
    const auto v = t.get<std::uint64_t>();
    if (v > UINT32_MAX) throw SchemaError(at_line(line) + std::string(field) + " id exceeds u32");
    out.push_back(static_cast<TokenId>(v));
  }
  return out;
}

const json& require(const json& obj, const char* key, std::size_t line) {
  auto it = obj.find(key);
  if (it == obj.end()) throw SchemaError(at_line(line) + "missing field '" + key + "'");
  return *it;
}

RankedResponseSet parse_item(const json& obj, std::size_t line) {
  if (!obj.is_object()) throw SchemaError(at_line(line) + "expected a JSON object");
  RankedResponseSet item;
  const auto& id = require(obj, "id", line);
  if (!id.is_string()) throw SchemaError(at_line(line) + "id must be a string");
  item.query.id = id.get<std::string>();
  const auto& cat = require(obj, "category", line);
  if (!cat.is_string()) throw SchemaError(at_line(line) + "category must be a string");
  try {
    item.query.category = parse_category(cat.get<std::string>());
  } catch (const SchemaError& e) {
    throw SchemaError(at_line(line) + e.what());
  }
  const auto& feats = require(obj, "features", line);
  if (!feats.is_array()) throw SchemaError(at_line(line) + "features must be an array");
  for (const auto& f : feats) item.query.features.push_back(finite_number(f, line, "features"));

  const auto& responses = require(obj, "responses", line);
  if (!responses.is_array()) throw SchemaError(at_line(line) + "responses must be an array");
  if (responses.size() < 2) throw ValidationError(at_line(line) + "a ranked set needs at least two responses");
  for (const auto& r : responses) {
    if (!r.is_object()) throw SchemaError(at_line(line) + "response must be an object");
    AnnotatedResponse resp;
    const auto& model = require(r, "model", line);
    if (!model.is_string()) throw SchemaError(at_line(line) + "model must be a string");
    resp.model_name = model.get<std::string>();
    resp.tokens = token_list(require(r, "tokens", line), line, "tokens");
    const auto& rank = require(r, "rank", line);
    if (!rank.is_number_integer()) throw SchemaError(at_line(line) + "rank must be an integer");
    const auto rank_value = rank.get<std::int64_t>();
    if (rank_value < 1 || rank_value > UINT32_MAX) {
      throw ValidationError(at_line(line) + "rank must be >= 1 (got " + std::to_string(rank_value) + ")");
    }
    resp.rank = static_cast<std::uint32_t>(rank_value);
    const auto& scores = require(r, "scores", line);
    if (!scores.is_object()) throw SchemaError(at_line(line) + "scores must be an object");
    resp.dim_scores.helpfulness = finite_number(require(scores, "helpfulness", line), line, "helpfulness");
    resp.dim_scores.faithfulness = finite_number(require(scores, "faithfulness", line), line, "faithfulness");
    resp.dim_scores.ethics = finite_number(require(scores, "ethics", line), line, "ethics");
    resp.critique = token_list(require(r, "critique", line), line, "critique");
    item.responses.push_back(std::move(resp));
  }
  return item;
}

TokenId max_token(const RankedResponseSet& item) {
  TokenId m = 0;
  for (const auto& r : item.responses) {
    for (TokenId t : r.tokens) m = std::max(m, t);
    for (TokenId t : r.critique) m = std::max(m, t);
  }
  return m;
}

}  // namespace

Dataset parse_dataset(std::istream& in, std::optional<std::size_t> vocab_override) {
  Dataset ds;
  std::optional<std::size_t> declared_vocab;
  std::vector<std::size_t> item_lines;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    json obj;
    try {
      obj = json::parse(text);
    } catch (const json::parse_error& e) {
      throw ParseError(at_line(line) + "malformed JSON: " + e.what());
    }
    RankedResponseSet item = parse_item(obj, line);

    if (ds.items.empty()) {
      ds.feature_dim = item.query.features.size();
    } else if (item.query.features.size() != ds.feature_dim) {
      throw SchemaError(at_line(line) + "feature dimension " + std::to_string(item.query.features.size()) +
                        " differs from " + std::to_string(ds.feature_dim));
    }
    if (auto it = obj.find("vocab_size"); it != obj.end()) {
      if (!it->is_number_unsigned() || it->get<std::uint64_t>() < 2) {
        throw SchemaError(at_line(line) + "vocab_size must be an integer >= 2");
      }
      const auto v = it->get<std::size_t>();
      if (declared_vocab && *declared_vocab != v) {
        throw SchemaError(at_line(line) + "vocab_size " + std::to_string(v) + " differs from " +
                          std::to_string(*declared_vocab));
      }
      declared_vocab = v;
    }
    ds.items.push_back(std::move(item));
    item_lines.push_back(line);
  }

  if (vocab_override) {
    ds.vocab_size = *vocab_override;
  } else if (declared_vocab) {
    ds.vocab_size = *declared_vocab;
  } else {
    std::size_t v = 0;
    for (const auto& item : ds.items) v = std::max<std::size_t>(v, max_token(item) + 1);
    ds.vocab_size = std::max<std::size_t>(v, 2);
  }
  for (std::size_t i = 0; i < ds.items.size(); ++i) {
    for (const auto& r : ds.items[i].responses) {
      try {
        validate_tokens(r.tokens, ds.vocab_size, "tokens");
        validate_tokens(r.critique, ds.vocab_size, "critique");
      } catch (const ValidationError& e) {
        throw SchemaError(at_line(item_lines[i]) + e.what());
      }
    }
  }
  return ds;
}

Dataset load_dataset(const std::filesystem::path& path, std::optional<std::size_t> vocab_override) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open dataset '" + path.string() + "'");
  return parse_dataset(in, vocab_override);
}

void write_dataset(std::ostream& out, const Dataset& dataset) {
  for (const auto& item : dataset.items) {
    json obj;
    obj["id"] = item.query.id;
    obj["category"] = std::string(to_string(item.query.category));
    obj["features"] = item.query.features;
    obj["vocab_size"] = dataset.vocab_size;
    json responses = json::array();
    for (const auto& r : item.responses) {
      responses.push_back({{"model", r.model_name},
                           {"tokens", r.tokens},
                           {"rank", r.rank},
                           {"scores",
                            {{"helpfulness", r.dim_scores.helpfulness},
                             {"faithfulness", r.dim_scores.faithfulness},
                             {"ethics", r.dim_scores.ethics}}},
                           {"critique", r.critique}});
    }
    obj["responses"] = std::move(responses);
    out << obj.dump() << '\n';
  }
}

std::string serialize_dataset(const Dataset& dataset) {
  std::ostringstream out;
  write_dataset(out, dataset);
  return out.str();
}

}  // namespace prefopt
