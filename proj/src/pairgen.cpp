#include "prefopt/pairgen.hpp"

#include <cmath>
#include <string>
#include <unordered_map>

#include <json.hpp>

#include "prefopt/errors.hpp"

namespace prefopt {

using nlohmann::json;

PairSet all_pairs(const RankedResponseSet& set) {
  PairSet out;
  const auto& rs = set.responses;
  for (std::size_t i = 0; i < rs.size(); ++i) {
    for (std::size_t j = i + 1; j < rs.size(); ++j) {
      if (rs[i].rank == rs[j].rank) continue;
      const bool i_wins = rs[i].rank < rs[j].rank;
      const std::size_t w = i_wins ? i : j;
      const std::size_t l = i_wins ? j : i;
      ComparisonPair p;
      p.query = set.query;
      p.chosen = rs[w].tokens;
      p.rejected = rs[l].tokens;
      p.chosen_idx = static_cast<std::uint32_t>(w);
      p.rejected_idx = static_cast<std::uint32_t>(l);
      out.pairs.push_back(std::move(p));
    }
  }
  out.all_tied = out.pairs.empty() && rs.size() >= 2;
  return out;
}

std::vector<ComparisonPair> all_pairs(const Dataset& dataset) {
  std::vector<ComparisonPair> out;
  for (const auto& item : dataset.items) {
    auto set = all_pairs(item);
    out.insert(out.end(), std::make_move_iterator(set.pairs.begin()), std::make_move_iterator(set.pairs.end()));
  }
  return out;
}

std::vector<ComparisonPair> attach_margins(std::vector<ComparisonPair> pairs, const RewardTable& scores) {
  auto lookup = [&scores](const std::string& id, std::uint32_t idx) {
    auto it = scores.find({id, idx});
    if (it == scores.end()) {
      throw LookupError("no reward score for query '" + id + "' response " + std::to_string(idx));
    }
    return it->second;
  };
  for (auto& p : pairs) {
    p.delta = lookup(p.query.id, p.chosen_idx) - lookup(p.query.id, p.rejected_idx);
    if (!std::isfinite(p.delta)) throw NumericError("non-finite reward margin for query '" + p.query.id + "'");
  }
  return pairs;
}

QueryFeatures mixup_query(const QueryFeatures& x, const QueryFeatures& x_other, double alpha) {
  if (x.features.size() != x_other.features.size()) {
    throw ShapeError("mixup partners have different feature dimensions");
  }
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ParameterError("mixup alpha must lie in [0, 1]");
  QueryFeatures out;
  out.id = x.id + "#mix";
  out.category = x.category;
  out.features.resize(x.features.size());
  for (std::size_t i = 0; i < x.features.size(); ++i) {
    out.features[i] = alpha * x.features[i] + (1.0 - alpha) * x_other.features[i];
  }
  return out;
}

std::vector<ComparisonPair> attach_vision_negatives(std::vector<ComparisonPair> pairs, const Dataset& dataset,
                                                    double alpha) {
  std::unordered_map<std::string, std::size_t> position;
  for (std::size_t i = 0; i < dataset.items.size(); ++i) position.emplace(dataset.items[i].query.id, i);
  const std::size_t n = dataset.items.size();
  for (auto& p : pairs) {
    auto it = position.find(p.query.id);
    if (it == position.end()) throw LookupError("pair query '" + p.query.id + "' not in dataset");
    const auto& partner = dataset.items[(it->second + 1) % n].query;
    p.vision_query = mixup_query(p.query, partner, alpha);
  }
  return pairs;
}

SelfPairResult self_pairs(const PolicyParams& policy, const QueryFeatures& query, std::size_t n_samples,
                          const ResponseScorer& reward, std::uint64_t rng_seed, std::size_t max_len,
                          double temperature) {
  if (n_samples < 2) throw ParameterError("self_pairs needs at least two samples");
  SelfPairResult out;
  Rng rng(rng_seed);
  for (std::size_t i = 0; i < n_samples; ++i) {
    out.samples.push_back(sample(policy, query.features, max_len, temperature, rng));
    out.scores.push_back(reward(query, out.samples.back()));
  }
  std::size_t best = 0;
  std::size_t worst = 0;
  for (std::size_t i = 1; i < n_samples; ++i) {
    if (out.scores[i] > out.scores[best]) best = i;
    if (out.scores[i] < out.scores[worst]) worst = i;
  }
  if (!(out.scores[best] > out.scores[worst])) {
    out.degenerate = true;
    return out;
  }
  ComparisonPair p;
  p.query = query;
  p.chosen = out.samples[best];
  p.rejected = out.samples[worst];
  p.delta = out.scores[best] - out.scores[worst];
  p.chosen_idx = static_cast<std::uint32_t>(best);
  p.rejected_idx = static_cast<std::uint32_t>(worst);
  out.pairs.push_back(std::move(p));
  return out;
}

void write_pairs(std::ostream& out, const std::vector<ComparisonPair>& pairs) {
  for (const auto& p : pairs) {
    json obj{{"query_id", p.query.id},
             {"chosen_idx", p.chosen_idx},
             {"rejected_idx", p.rejected_idx},
             {"delta", p.delta},
             {"vision", p.vision_query.has_value()}};
    out << obj.dump() << '\n';
  }
}

std::vector<PairRecord> read_pairs(std::istream& in) {
  std::vector<PairRecord> out;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto obj = json::parse(text);
      PairRecord r;
      r.query_id = obj.at("query_id").get<std::string>();
      r.chosen_idx = obj.at("chosen_idx").get<std::uint32_t>();
      r.rejected_idx = obj.at("rejected_idx").get<std::uint32_t>();
      r.delta = obj.at("delta").get<double>();
      r.vision = obj.at("vision").get<bool>();
      out.push_back(std::move(r));
    } catch (const json::exception& e) {
      throw ParseError("line " + std::to_string(line) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace prefopt
