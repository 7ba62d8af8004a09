#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "prefopt/core.hpp"
#include "prefopt/losses.hpp"
#include "prefopt/pairgen.hpp"
#include "prefopt/policy.hpp"
#include "prefopt/reward.hpp"

namespace prefopt {

struct TrainConfig {
  AlignmentConfig alignment;
  double learning_rate = 0.1;
  std::size_t batch_size = 32;
  std::size_t steps = 500;
  std::uint64_t seed = 0;
  bool shuffle = true;
  bool freeze_reference = true;
  double mixup_alpha = 0.5;  // vision-negative partner weight
  double init_scale = 0.02;

  /// Throws ValidationError naming the offending key.
  void validate() const;

  bool operator==(const TrainConfig&) const = default;
};

inline const std::vector<double> kSftWeightGrid = {0.0, 0.1, 0.25, 0.5, 1.0};
inline const std::vector<double> kLearningRateGrid = {1e-7, 5e-7, 1e-6, 5e-6, 1e-5};

/// Accepts a JSON object or `key = value` lines ('#' starts a comment).
/// Keys: beta_ori, w, k, lambda, beta_vision, sft_weight, lr, batch_size,
/// steps, seed, shuffle, freeze_reference, mixup_alpha, init_scale.
/// Unknown keys and invalid values throw ValidationError.
TrainConfig parse_train_config(std::string_view text);
TrainConfig load_train_config(const std::filesystem::path& path);
nlohmann::ordered_json to_json(const TrainConfig& cfg);

/// Fixed-size batches over a per-epoch permutation. Epoch e uses a generator
/// seeded from (seed, e), so (epoch, cursor) is the whole resumable state.
class BatchSchedule {
 public:
  BatchSchedule(std::size_t n_items, std::size_t batch_size, std::uint64_t seed, bool shuffle,
                std::size_t epoch = 0, std::size_t cursor = 0);

  /// Next batch of item indices; the last batch of an epoch may be short.
  std::vector<std::size_t> next();

  std::size_t epoch() const { return epoch_; }
  std::size_t cursor() const { return cursor_; }

 private:
  void build_order();

  std::size_t n_;
  std::size_t batch_;
  std::uint64_t seed_;
  bool shuffle_;
  std::size_t epoch_;
  std::size_t cursor_;
  std::vector<std::size_t> order_;
};

struct PolicyStepLog {
  std::size_t step = 0;
  double loss = 0.0;
  double dpo_term = 0.0;
  double sft_term = 0.0;
  double beta_mean = 0.0;
  double beta_max = 0.0;

  bool operator==(const PolicyStepLog&) const = default;
};

struct RewardStepLog {
  std::size_t step = 0;
  double loss = 0.0;
  double critique_term = 0.0;
  double score_term = 0.0;

  bool operator==(const RewardStepLog&) const = default;
};

void write_step_log(std::ostream& out, const PolicyStepLog& log);
void write_step_log(std::ostream& out, const RewardStepLog& log);

/// Pairs for policy training: all_pairs per item, margins from `scores` when
/// given (else δ = 0), vision negatives attached when lambda > 0.
std::vector<ComparisonPair> build_policy_pairs(const Dataset& dataset, const RewardTable* scores,
                                               const TrainConfig& cfg);

Dataset subset(const Dataset& dataset, const std::vector<std::size_t>& indices);

/// Content hash used to refuse resuming a checkpoint against different data.
std::uint64_t pairs_fingerprint(const std::vector<ComparisonPair>& pairs);
std::uint64_t comparisons_fingerprint(const std::vector<RewardComparison>& batch);

inline constexpr int kCheckpointFormatVersion = 1;

struct PolicyCheckpoint {
  TrainConfig config;
  std::size_t step = 0;
  std::size_t epoch = 0;
  std::size_t cursor = 0;
  std::uint64_t data_fingerprint = 0;
  PolicyParams policy;
  PolicyParams reference;
  std::vector<PolicyStepLog> history;
};

struct RewardCheckpoint {
  TrainConfig config;
  RewardObjective objective = RewardObjective::Total;
  std::size_t step = 0;
  std::size_t epoch = 0;
  std::size_t cursor = 0;
  std::uint64_t data_fingerprint = 0;
  RewardModelParams model;
  std::vector<RewardStepLog> history;
};

nlohmann::ordered_json to_json(const PolicyCheckpoint& ckpt);
nlohmann::ordered_json to_json(const RewardCheckpoint& ckpt);
PolicyCheckpoint policy_checkpoint_from_json(const nlohmann::json& j);
RewardCheckpoint reward_checkpoint_from_json(const nlohmann::json& j);

/// Serialised form is a single JSON line; save → load → save is byte-stable.
std::string serialize_checkpoint(const PolicyCheckpoint& ckpt);
std::string serialize_checkpoint(const RewardCheckpoint& ckpt);
PolicyCheckpoint load_policy_checkpoint(const std::filesystem::path& path);
RewardCheckpoint load_reward_checkpoint(const std::filesystem::path& path);

/// Gradient-descent loop for the policy objective (plain SGD).
class PolicyTrainer {
 public:
  PolicyTrainer(std::vector<ComparisonPair> pairs, std::size_t vocab_size, std::size_t feature_dim,
                TrainConfig cfg);
  /// Continues from a checkpoint; throws ValidationError if the pairs differ.
  static PolicyTrainer resume(std::vector<ComparisonPair> pairs, const PolicyCheckpoint& ckpt);

  const PolicyStepLog& step();
  /// Runs until config().steps steps have been taken in total.
  void run(std::ostream* log = nullptr);

  std::size_t steps_done() const { return step_; }
  const TrainConfig& config() const { return cfg_; }
  const PolicyParams& policy() const { return policy_; }
  const FrozenPolicy& reference() const { return reference_; }
  const std::vector<PolicyStepLog>& history() const { return history_; }
  const std::vector<ComparisonPair>& pairs() const { return pairs_; }
  PolicyCheckpoint checkpoint() const;

 private:
  PolicyTrainer(std::vector<ComparisonPair> pairs, TrainConfig cfg, PolicyParams policy, FrozenPolicy reference,
                BatchSchedule schedule, std::size_t step, std::vector<PolicyStepLog> history);

  std::vector<ComparisonPair> pairs_;
  TrainConfig cfg_;
  PolicyParams policy_;
  FrozenPolicy reference_;
  BatchSchedule schedule_;
  std::size_t step_ = 0;
  std::vector<PolicyStepLog> history_;
};

struct PolicyTrainResult {
  PolicyParams policy;
  FrozenPolicy reference;
  std::vector<PolicyStepLog> history;
};

PolicyTrainResult train_policy(std::vector<ComparisonPair> pairs, std::size_t vocab_size, std::size_t feature_dim,
                               const TrainConfig& cfg);

/// Gradient-descent loop for the reward model.
class RewardTrainer {
 public:
  RewardTrainer(std::vector<RewardComparison> data, std::size_t vocab_size, std::size_t feature_dim,
                TrainConfig cfg, RewardObjective objective = RewardObjective::Total);
  static RewardTrainer resume(std::vector<RewardComparison> data, const RewardCheckpoint& ckpt);

  const RewardStepLog& step();
  void run(std::ostream* log = nullptr);

  std::size_t steps_done() const { return step_; }
  const RewardModelParams& model() const { return model_; }
  const std::vector<RewardStepLog>& history() const { return history_; }
  RewardCheckpoint checkpoint() const;

 private:
  RewardTrainer(std::vector<RewardComparison> data, TrainConfig cfg, RewardObjective objective,
                RewardModelParams model, BatchSchedule schedule, std::size_t step,
                std::vector<RewardStepLog> history);

  std::vector<RewardComparison> data_;
  TrainConfig cfg_;
  RewardObjective objective_;
  RewardModelParams model_;
  BatchSchedule schedule_;
  std::size_t step_ = 0;
  std::vector<RewardStepLog> history_;
};

struct RewardTrainResult {
  RewardModelParams model;
  std::vector<RewardStepLog> history;
};

RewardTrainResult train_reward(const Dataset& dataset, const TrainConfig& cfg,
                               RewardObjective objective = RewardObjective::Total);

struct GridCell {
  double sft_weight = 0.0;
  double learning_rate = 0.0;
  double metric = 0.0;      // held-out implicit reward accuracy
  double final_loss = 0.0;  // last logged training loss
};

struct GridResult {
  std::vector<GridCell> cells;  // sft-major, lr-minor, in grid order
  std::size_t best = 0;
  TrainConfig best_config;
};

struct GridSplit {
  Dataset train;
  Dataset validation;
};

/// The last round(val_split·n) items (at least one, at most n−1) validate.
GridSplit split_for_validation(const Dataset& dataset, double val_split);

/// Trains every (sft_weight, lr) cell from the same seed. Best = highest
/// metric, ties to smaller sft_weight then smaller lr.
GridResult grid_search(const Dataset& dataset, const RewardTable* scores, const TrainConfig& base,
                       const std::vector<double>& sft_grid, const std::vector<double>& lr_grid, double val_split);

nlohmann::ordered_json to_json(const GridResult& result);

}  // namespace prefopt
