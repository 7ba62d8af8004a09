#include "prefopt/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "prefopt/errors.hpp"
#include "prefopt/eval.hpp"

namespace prefopt {

using nlohmann::json;
using nlohmann::ordered_json;

void TrainConfig::validate() const {
  alignment.validate();
  // lr = 0 is accepted as a null update.
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) throw ValidationError("lr must be finite and >= 0");
  if (batch_size < 1) throw ValidationError("batch_size must be >= 1");
  if (steps < 1) throw ValidationError("steps must be >= 1");
  if (!freeze_reference) throw ValidationError("freeze_reference must be true for alignment training");
  if (!(mixup_alpha >= 0.0 && mixup_alpha <= 1.0)) throw ValidationError("mixup_alpha must lie in [0, 1]");
  if (!(init_scale >= 0.0) || !std::isfinite(init_scale)) throw ValidationError("init_scale must be finite and >= 0");
}

namespace {

double as_real(const json& v, const std::string& key) {
  if (!v.is_number()) throw ValidationError(key + " must be a number");
  return v.get<double>();
}

std::uint64_t as_count(const json& v, const std::string& key) {
  if (v.is_number_unsigned()) return v.get<std::uint64_t>();
  if (v.is_number_integer()) throw ValidationError(key + " must be >= 0");
  throw ValidationError(key + " must be a non-negative integer");
}

bool as_flag(const json& v, const std::string& key) {
  if (!v.is_boolean()) throw ValidationError(key + " must be true or false");
  return v.get<bool>();
}

void set_key(TrainConfig& cfg, const std::string& key, const json& v) {
  if (key == "beta_ori") cfg.alignment.scaling.beta_ori = as_real(v, key);
  else if (key == "w") cfg.alignment.scaling.w = as_real(v, key);
  else if (key == "k") cfg.alignment.scaling.k = as_real(v, key);
  else if (key == "lambda") cfg.alignment.lambda = as_real(v, key);
  else if (key == "beta_vision") cfg.alignment.beta_vision = as_real(v, key);
  else if (key == "sft_weight") cfg.alignment.sft_weight = as_real(v, key);
  else if (key == "lr") cfg.learning_rate = as_real(v, key);
  else if (key == "batch_size") cfg.batch_size = as_count(v, key);
  else if (key == "steps") cfg.steps = as_count(v, key);
  else if (key == "seed") cfg.seed = as_count(v, key);
  else if (key == "shuffle") cfg.shuffle = as_flag(v, key);
  else if (key == "freeze_reference") cfg.freeze_reference = as_flag(v, key);
  else if (key == "mixup_alpha") cfg.mixup_alpha = as_real(v, key);
  else if (key == "init_scale") cfg.init_scale = as_real(v, key);
  else throw ValidationError("unknown config key '" + key + "'");
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

}  // namespace

TrainConfig parse_train_config(std::string_view text) {
  TrainConfig cfg;
  const std::string body = trim(text);
  if (!body.empty() && body.front() == '{') {
    json obj;
    try {
      obj = json::parse(body);
    } catch (const json::parse_error& e) {
      throw ParseError(std::string("config: malformed JSON: ") + e.what());
    }
    for (const auto& [key, value] : obj.items()) set_key(cfg, key, value);
  } else {
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
      ++n;
      if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
      const std::string content = trim(line);
      if (content.empty()) continue;
      const auto eq = content.find('=');
      if (eq == std::string::npos) throw ParseError("config line " + std::to_string(n) + ": expected key = value");
      const std::string key = trim(std::string_view(content).substr(0, eq));
      const std::string raw = trim(std::string_view(content).substr(eq + 1));
      json value;
      try {
        value = json::parse(raw);
      } catch (const json::parse_error&) {
        throw ValidationError(key + ": cannot parse value '" + raw + "'");
      }
      set_key(cfg, key, value);
    }
  }
  cfg.validate();
  return cfg;
}

TrainConfig load_train_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_train_config(buf.str());
}

ordered_json to_json(const TrainConfig& cfg) {
  return {{"beta_ori", cfg.alignment.scaling.beta_ori},
          {"w", cfg.alignment.scaling.w},
          {"k", cfg.alignment.scaling.k},
          {"lambda", cfg.alignment.lambda},
          {"beta_vision", cfg.alignment.beta_vision},
          {"sft_weight", cfg.alignment.sft_weight},
          {"lr", cfg.learning_rate},
          {"batch_size", cfg.batch_size},
          {"steps", cfg.steps},
          {"seed", cfg.seed},
          {"shuffle", cfg.shuffle},
          {"freeze_reference", cfg.freeze_reference},
          {"mixup_alpha", cfg.mixup_alpha},
          {"init_scale", cfg.init_scale}};
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

BatchSchedule::BatchSchedule(std::size_t n_items, std::size_t batch_size, std::uint64_t seed, bool shuffle,
                             std::size_t epoch, std::size_t cursor)
    : n_(n_items), batch_(batch_size), seed_(seed), shuffle_(shuffle), epoch_(epoch), cursor_(cursor) {
  if (n_items == 0) throw ParameterError("nothing to train on");
  if (batch_size == 0) throw ParameterError("batch_size must be >= 1");
  if (cursor > n_items) throw ValidationError("schedule cursor beyond epoch length");
  build_order();
}

void BatchSchedule::build_order() {
  order_.resize(n_);
  std::iota(order_.begin(), order_.end(), 0);
  if (!shuffle_) return;
  Rng rng(splitmix64(seed_ ^ splitmix64(epoch_)));
  for (std::size_t i = n_; i > 1; --i) std::swap(order_[i - 1], order_[rng.below(i)]);
}

std::vector<std::size_t> BatchSchedule::next() {
  if (cursor_ == n_) {
    ++epoch_;
    cursor_ = 0;
    build_order();
  }
  const std::size_t end = std::min(n_, cursor_ + batch_);
  std::vector<std::size_t> out(order_.begin() + static_cast<std::ptrdiff_t>(cursor_),
                               order_.begin() + static_cast<std::ptrdiff_t>(end));
  cursor_ = end;
  return out;
}

void write_step_log(std::ostream& out, const PolicyStepLog& log) {
  ordered_json j{{"step", log.step},         {"loss", log.loss},           {"dpo_term", log.dpo_term},
                 {"sft_term", log.sft_term}, {"beta_mean", log.beta_mean}, {"beta_max", log.beta_max}};
  out << j.dump() << '\n';
}

void write_step_log(std::ostream& out, const RewardStepLog& log) {
  ordered_json j{{"step", log.step},
                 {"loss", log.loss},
                 {"critique_term", log.critique_term},
                 {"score_term", log.score_term}};
  out << j.dump() << '\n';
}

std::vector<ComparisonPair> build_policy_pairs(const Dataset& dataset, const RewardTable* scores,
                                               const TrainConfig& cfg) {
  auto pairs = all_pairs(dataset);
  if (scores) pairs = attach_margins(std::move(pairs), *scores);
  if (cfg.alignment.lambda > 0.0) pairs = attach_vision_negatives(std::move(pairs), dataset, cfg.mixup_alpha);
  return pairs;
}

Dataset subset(const Dataset& dataset, const std::vector<std::size_t>& indices) {
  Dataset out;
  out.vocab_size = dataset.vocab_size;
  out.feature_dim = dataset.feature_dim;
  for (std::size_t i : indices) {
    if (i >= dataset.items.size()) throw ParameterError("subset index out of range");
    out.items.push_back(dataset.items[i]);
  }
  return out;
}

namespace {

class Fnv {
 public:
  void bytes(const void* data, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h_ ^= b[i];
      h_ *= 1099511628211ULL;
    }
  }
  void u64(std::uint64_t v) { bytes(&v, sizeof v); }
  void real(double v) { bytes(&v, sizeof v); }
  void str(const std::string& s) {
    u64(s.size());
    bytes(s.data(), s.size());
  }
  void tokens(const TokenSeq& t) {
    u64(t.size());
    bytes(t.data(), t.size() * sizeof(TokenId));
  }
  void query(const QueryFeatures& q) {
    str(q.id);
    u64(q.features.size());
    for (double f : q.features) real(f);
  }
  std::uint64_t value() const { return h_; }

 private:
  std::uint64_t h_ = 1469598103934665603ULL;
};

}  // namespace

std::uint64_t pairs_fingerprint(const std::vector<ComparisonPair>& pairs) {
  Fnv h;
  h.u64(pairs.size());
  for (const auto& p : pairs) {
    h.query(p.query);
    h.tokens(p.chosen);
    h.tokens(p.rejected);
    h.real(p.delta);
    h.u64(p.vision_query ? 1 : 0);
    if (p.vision_query) h.query(*p.vision_query);
  }
  return h.value();
}

std::uint64_t comparisons_fingerprint(const std::vector<RewardComparison>& batch) {
  Fnv h;
  h.u64(batch.size());
  for (const auto& c : batch) {
    h.query(c.query);
    h.tokens(c.chosen);
    h.tokens(c.chosen_critique.tokens);
    h.tokens(c.rejected);
    h.tokens(c.rejected_critique.tokens);
  }
  return h.value();
}

namespace {

ordered_json params_json(const PolicyParams& p) {
  const std::size_t V = p.vocab_size();
  const std::size_t c = p.cond_dim();
  ordered_json start = ordered_json::array();
  for (std::size_t v = 0; v < V; ++v) start.push_back(p.start(v));
  ordered_json transition = ordered_json::array();
  for (std::size_t a = 0; a < V; ++a) {
    ordered_json row = ordered_json::array();
    for (std::size_t b = 0; b < V; ++b) row.push_back(p.transition(a, b));
    transition.push_back(std::move(row));
  }
  ordered_json proj = ordered_json::array();
  for (std::size_t v = 0; v < V; ++v) {
    ordered_json row = ordered_json::array();
    for (std::size_t k = 0; k < c; ++k) row.push_back(p.proj(v, k));
    proj.push_back(std::move(row));
  }
  return {{"vocab_size", V}, {"cond_dim", c}, {"start", start}, {"transition", transition}, {"query_proj", proj}};
}

PolicyParams params_from_json(const json& j) {
  const auto V = j.at("vocab_size").get<std::size_t>();
  const auto c = j.at("cond_dim").get<std::size_t>();
  std::vector<double> flat = j.at("start").get<std::vector<double>>();
  if (flat.size() != V) throw SchemaError("checkpoint: start has wrong length");
  const auto& transition = j.at("transition");
  const auto& proj = j.at("query_proj");
  if (transition.size() != V || proj.size() != V) throw SchemaError("checkpoint: matrix has wrong row count");
  for (const auto& row : transition) {
    if (row.size() != V) throw SchemaError("checkpoint: transition row has wrong length");
    for (const auto& v : row) flat.push_back(v.get<double>());
  }
  for (const auto& row : proj) {
    if (row.size() != c) throw SchemaError("checkpoint: query_proj row has wrong length");
    for (const auto& v : row) flat.push_back(v.get<double>());
  }
  return PolicyParams(V, c, std::move(flat));
}

TrainConfig config_from_json(const json& j) {
  TrainConfig cfg;
  for (const auto& [key, value] : j.items()) set_key(cfg, key, value);
  cfg.validate();
  return cfg;
}

void check_header(const json& j, std::string_view kind) {
  if (j.at("format_version").get<int>() != kCheckpointFormatVersion) {
    throw SchemaError("checkpoint: unsupported format_version");
  }
  if (j.at("kind").get<std::string>() != kind) {
    throw SchemaError("checkpoint: expected kind '" + std::string(kind) + "'");
  }
}

template <typename Fn>
auto guarded(Fn&& fn) {
  try {
    return fn();
  } catch (const json::exception& e) {
    throw SchemaError(std::string("checkpoint: ") + e.what());
  }
}

}  // namespace

ordered_json to_json(const PolicyCheckpoint& ckpt) {
  ordered_json history = ordered_json::array();
  for (const auto& h : ckpt.history) {
    history.push_back({{"step", h.step},
                       {"loss", h.loss},
                       {"dpo_term", h.dpo_term},
                       {"sft_term", h.sft_term},
                       {"beta_mean", h.beta_mean},
                       {"beta_max", h.beta_max}});
  }
  return {{"format_version", kCheckpointFormatVersion},
          {"kind", "policy"},
          {"config", to_json(ckpt.config)},
          {"step", ckpt.step},
          {"rng", {{"seed", ckpt.config.seed}, {"epoch", ckpt.epoch}, {"cursor", ckpt.cursor}}},
          {"data_fingerprint", ckpt.data_fingerprint},
          {"policy", params_json(ckpt.policy)},
          {"reference", params_json(ckpt.reference)},
          {"history", std::move(history)}};
}

ordered_json to_json(const RewardCheckpoint& ckpt) {
  ordered_json history = ordered_json::array();
  for (const auto& h : ckpt.history) {
    history.push_back(
        {{"step", h.step}, {"loss", h.loss}, {"critique_term", h.critique_term}, {"score_term", h.score_term}});
  }
  return {{"format_version", kCheckpointFormatVersion},
          {"kind", "reward"},
          {"config", to_json(ckpt.config)},
          {"objective", ckpt.objective == RewardObjective::Total ? "total" : "plain"},
          {"step", ckpt.step},
          {"rng", {{"seed", ckpt.config.seed}, {"epoch", ckpt.epoch}, {"cursor", ckpt.cursor}}},
          {"data_fingerprint", ckpt.data_fingerprint},
          {"model", {{"critique_head", params_json(ckpt.model.critique_head)}, {"score_weights", ckpt.model.score_weights}}},
          {"history", std::move(history)}};
}

PolicyCheckpoint policy_checkpoint_from_json(const json& j) {
  return guarded([&] {
    check_header(j, "policy");
    PolicyCheckpoint ckpt;
    ckpt.config = config_from_json(j.at("config"));
    ckpt.step = j.at("step").get<std::size_t>();
    ckpt.epoch = j.at("rng").at("epoch").get<std::size_t>();
    ckpt.cursor = j.at("rng").at("cursor").get<std::size_t>();
    ckpt.data_fingerprint = j.at("data_fingerprint").get<std::uint64_t>();
    ckpt.policy = params_from_json(j.at("policy"));
    ckpt.reference = params_from_json(j.at("reference"));
    for (const auto& h : j.at("history")) {
      ckpt.history.push_back({h.at("step").get<std::size_t>(), h.at("loss").get<double>(),
                              h.at("dpo_term").get<double>(), h.at("sft_term").get<double>(),
                              h.at("beta_mean").get<double>(), h.at("beta_max").get<double>()});
    }
    return ckpt;
  });
}

RewardCheckpoint reward_checkpoint_from_json(const json& j) {
  return guarded([&] {
    check_header(j, "reward");
    RewardCheckpoint ckpt;
    ckpt.config = config_from_json(j.at("config"));
    const auto objective = j.at("objective").get<std::string>();
    if (objective != "total" && objective != "plain") throw SchemaError("checkpoint: unknown objective");
    ckpt.objective = objective == "total" ? RewardObjective::Total : RewardObjective::Plain;
    ckpt.step = j.at("step").get<std::size_t>();
    ckpt.epoch = j.at("rng").at("epoch").get<std::size_t>();
    ckpt.cursor = j.at("rng").at("cursor").get<std::size_t>();
    ckpt.data_fingerprint = j.at("data_fingerprint").get<std::uint64_t>();
    ckpt.model.critique_head = params_from_json(j.at("model").at("critique_head"));
    ckpt.model.score_weights = j.at("model").at("score_weights").get<std::vector<double>>();
    ckpt.model.validate();
    for (const auto& h : j.at("history")) {
      ckpt.history.push_back({h.at("step").get<std::size_t>(), h.at("loss").get<double>(),
                              h.at("critique_term").get<double>(), h.at("score_term").get<double>()});
    }
    return ckpt;
  });
}

std::string serialize_checkpoint(const PolicyCheckpoint& ckpt) { return to_json(ckpt).dump() + "\n"; }

std::string serialize_checkpoint(const RewardCheckpoint& ckpt) { return to_json(ckpt).dump() + "\n"; }

namespace {

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint '" + path.string() + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError("checkpoint '" + path.string() + "': " + e.what());
  }
}

}  // namespace

PolicyCheckpoint load_policy_checkpoint(const std::filesystem::path& path) {
  return policy_checkpoint_from_json(read_json_file(path));
}

RewardCheckpoint load_reward_checkpoint(const std::filesystem::path& path) {
  return reward_checkpoint_from_json(read_json_file(path));
}

PolicyTrainer::PolicyTrainer(std::vector<ComparisonPair> pairs, TrainConfig cfg, PolicyParams policy,
                             FrozenPolicy reference, BatchSchedule schedule, std::size_t step,
                             std::vector<PolicyStepLog> history)
    : pairs_(std::move(pairs)),
      cfg_(std::move(cfg)),
      policy_(std::move(policy)),
      reference_(std::move(reference)),
      schedule_(std::move(schedule)),
      step_(step),
      history_(std::move(history)) {}

namespace {

template <typename T>
std::vector<T> validated(std::vector<T> data, const TrainConfig& cfg) {
  cfg.validate();
  if (data.empty()) throw ParameterError("no comparisons to train on");
  return data;
}

}  // namespace

PolicyTrainer::PolicyTrainer(std::vector<ComparisonPair> pairs, std::size_t vocab_size, std::size_t feature_dim,
                             TrainConfig cfg)
    : pairs_(validated(std::move(pairs), cfg)),
      cfg_(std::move(cfg)),
      policy_(init_policy(vocab_size, feature_dim, cfg_.seed, cfg_.init_scale)),
      reference_(freeze_reference(policy_)),
      schedule_(pairs_.size(), cfg_.batch_size, cfg_.seed, cfg_.shuffle) {}

PolicyTrainer PolicyTrainer::resume(std::vector<ComparisonPair> pairs, const PolicyCheckpoint& ckpt) {
  if (pairs_fingerprint(pairs) != ckpt.data_fingerprint) {
    throw ValidationError("checkpoint was written for different training pairs");
  }
  BatchSchedule schedule(pairs.size(), ckpt.config.batch_size, ckpt.config.seed, ckpt.config.shuffle, ckpt.epoch,
                         ckpt.cursor);
  return PolicyTrainer(std::move(pairs), ckpt.config, ckpt.policy, FrozenPolicy(ckpt.reference),
                       std::move(schedule), ckpt.step, ckpt.history);
}

const PolicyStepLog& PolicyTrainer::step() {
  std::vector<ComparisonPair> batch;
  for (std::size_t i : schedule_.next()) batch.push_back(pairs_[i]);
  const LossReport report = combined_loss(policy_, reference_, batch, cfg_.alignment);
  if (!std::isfinite(report.value) || !report.grad.all_finite()) {
    throw NumericError("step " + std::to_string(step_ + 1) + ": non-finite loss or gradient (loss = " +
                       std::to_string(report.value) + ")");
  }
  policy_.apply_step(report.grad, cfg_.learning_rate);
  if (!policy_.all_finite()) {
    throw NumericError("step " + std::to_string(step_ + 1) + ": parameters overflowed (lr = " +
                       std::to_string(cfg_.learning_rate) + ")");
  }
  ++step_;

  PolicyStepLog log;
  log.step = step_;
  log.loss = report.value;
  log.dpo_term = report.alignment_term;
  log.sft_term = report.sft_term;
  for (const auto& t : report.per_pair) {
    log.beta_mean += t.beta;
    log.beta_max = std::max(log.beta_max, t.beta);
  }
  log.beta_mean /= static_cast<double>(report.per_pair.size());
  history_.push_back(log);
  return history_.back();
}

void PolicyTrainer::run(std::ostream* log) {
  while (step_ < cfg_.steps) {
    const auto& entry = step();
    if (log) write_step_log(*log, entry);
  }
}

PolicyCheckpoint PolicyTrainer::checkpoint() const {
  PolicyCheckpoint ckpt;
  ckpt.config = cfg_;
  ckpt.step = step_;
  ckpt.epoch = schedule_.epoch();
  ckpt.cursor = schedule_.cursor();
  ckpt.data_fingerprint = pairs_fingerprint(pairs_);
  ckpt.policy = policy_;
  ckpt.reference = reference_.params();
  ckpt.history = history_;
  return ckpt;
}

PolicyTrainResult train_policy(std::vector<ComparisonPair> pairs, std::size_t vocab_size, std::size_t feature_dim,
                               const TrainConfig& cfg) {
  PolicyTrainer trainer(std::move(pairs), vocab_size, feature_dim, cfg);
  trainer.run();
  return {trainer.policy(), trainer.reference(), trainer.history()};
}

RewardTrainer::RewardTrainer(std::vector<RewardComparison> data, TrainConfig cfg, RewardObjective objective,
                             RewardModelParams model, BatchSchedule schedule, std::size_t step,
                             std::vector<RewardStepLog> history)
    : data_(std::move(data)),
      cfg_(std::move(cfg)),
      objective_(objective),
      model_(std::move(model)),
      schedule_(std::move(schedule)),
      step_(step),
      history_(std::move(history)) {}

RewardTrainer::RewardTrainer(std::vector<RewardComparison> data, std::size_t vocab_size, std::size_t feature_dim,
                             TrainConfig cfg, RewardObjective objective)
    : data_(validated(std::move(data), cfg)),
      cfg_(std::move(cfg)),
      objective_(objective),
      model_(init_reward_model(vocab_size, feature_dim, cfg_.seed, cfg_.init_scale)),
      schedule_(data_.size(), cfg_.batch_size, cfg_.seed, cfg_.shuffle) {}

RewardTrainer RewardTrainer::resume(std::vector<RewardComparison> data, const RewardCheckpoint& ckpt) {
  if (comparisons_fingerprint(data) != ckpt.data_fingerprint) {
    throw ValidationError("checkpoint was written for different reward training data");
  }
  BatchSchedule schedule(data.size(), ckpt.config.batch_size, ckpt.config.seed, ckpt.config.shuffle, ckpt.epoch,
                         ckpt.cursor);
  return RewardTrainer(std::move(data), ckpt.config, ckpt.objective, ckpt.model, std::move(schedule), ckpt.step,
                       ckpt.history);
}

const RewardStepLog& RewardTrainer::step() {
  std::vector<RewardComparison> batch;
  for (std::size_t i : schedule_.next()) batch.push_back(data_[i]);
  const RewardLossReport report = total_loss(model_, batch, objective_);
  if (!std::isfinite(report.value) || !report.grad.all_finite()) {
    throw NumericError("step " + std::to_string(step_ + 1) + ": non-finite reward loss or gradient");
  }
  model_.apply_step(report.grad, cfg_.learning_rate);
  const auto& w = model_.score_weights;
  if (!model_.critique_head.all_finite() ||
      !std::all_of(w.begin(), w.end(), [](double v) { return std::isfinite(v); })) {
    throw NumericError("step " + std::to_string(step_ + 1) + ": reward parameters overflowed");
  }
  ++step_;
  history_.push_back({step_, report.value, report.critique_term, report.score_term});
  return history_.back();
}

void RewardTrainer::run(std::ostream* log) {
  while (step_ < cfg_.steps) {
    const auto& entry = step();
    if (log) write_step_log(*log, entry);
  }
}

RewardCheckpoint RewardTrainer::checkpoint() const {
  RewardCheckpoint ckpt;
  ckpt.config = cfg_;
  ckpt.objective = objective_;
  ckpt.step = step_;
  ckpt.epoch = schedule_.epoch();
  ckpt.cursor = schedule_.cursor();
  ckpt.data_fingerprint = comparisons_fingerprint(data_);
  ckpt.model = model_;
  ckpt.history = history_;
  return ckpt;
}

RewardTrainResult train_reward(const Dataset& dataset, const TrainConfig& cfg, RewardObjective objective) {
  RewardTrainer trainer(reward_comparisons(dataset), dataset.vocab_size, dataset.feature_dim, cfg, objective);
  trainer.run();
  return {trainer.model(), trainer.history()};
}

GridSplit split_for_validation(const Dataset& dataset, double val_split) {
  const std::size_t n = dataset.items.size();
  if (n < 2) throw ParameterError("grid search needs at least two items to hold some out");
  if (!(val_split > 0.0 && val_split < 1.0)) throw ParameterError("val_split must lie in (0, 1)");
  const auto n_val = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::llround(val_split * static_cast<double>(n))), 1, n - 1);
  std::vector<std::size_t> train(n - n_val);
  std::vector<std::size_t> val(n_val);
  std::iota(train.begin(), train.end(), 0);
  std::iota(val.begin(), val.end(), n - n_val);
  return {subset(dataset, train), subset(dataset, val)};
}

GridResult grid_search(const Dataset& dataset, const RewardTable* scores, const TrainConfig& base,
                       const std::vector<double>& sft_grid, const std::vector<double>& lr_grid, double val_split) {
  if (sft_grid.empty() || lr_grid.empty()) throw ParameterError("grids must be nonempty");
  base.validate();
  const auto split = split_for_validation(dataset, val_split);
  const auto train_pairs = build_policy_pairs(split.train, scores, base);
  const auto val_pairs = build_policy_pairs(split.validation, scores, base);
  if (train_pairs.empty()) throw ParameterError("training split yields no pairs");
  if (val_pairs.empty()) throw ParameterError("validation split yields no pairs");

  GridResult result;
  for (double sft : sft_grid) {
    for (double lr : lr_grid) {
      TrainConfig cfg = base;
      cfg.alignment.sft_weight = sft;
      cfg.learning_rate = lr;
      const auto run = train_policy(train_pairs, dataset.vocab_size, dataset.feature_dim, cfg);
      GridCell cell{sft, lr, implicit_reward_accuracy(run.policy, run.reference, val_pairs),
                    run.history.back().loss};
      result.cells.push_back(cell);
    }
  }
  for (std::size_t i = 1; i < result.cells.size(); ++i) {
    const auto& c = result.cells[i];
    const auto& b = result.cells[result.best];
    const bool better = c.metric > b.metric ||
                        (c.metric == b.metric && (c.sft_weight < b.sft_weight ||
                                                  (c.sft_weight == b.sft_weight && c.learning_rate < b.learning_rate)));
    if (better) result.best = i;
  }
  result.best_config = base;
  result.best_config.alignment.sft_weight = result.cells[result.best].sft_weight;
  result.best_config.learning_rate = result.cells[result.best].learning_rate;
  return result;
}

ordered_json to_json(const GridResult& result) {
  ordered_json cells = ordered_json::array();
  for (const auto& c : result.cells) {
    cells.push_back({{"sft_weight", c.sft_weight},
                     {"lr", c.learning_rate},
                     {"val_accuracy", c.metric},
                     {"final_loss", c.final_loss}});
  }
  return {{"cells", std::move(cells)}, {"best_index", result.best}, {"best_config", to_json(result.best_config)}};
}

}  // namespace prefopt
