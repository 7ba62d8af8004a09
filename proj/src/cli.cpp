#include "prefopt/cli.hpp"

#include <algorithm>
#include <fstream>
#include <functional>
#include <memory>
#include <optional>
#include <sstream>
#include <system_error>

#include <CLI11.hpp>
#include <json.hpp>

#include "prefopt/datapipe.hpp"
#include "prefopt/errors.hpp"
#include "prefopt/eval.hpp"
#include "prefopt/pairgen.hpp"
#include "prefopt/reward.hpp"
#include "prefopt/trainer.hpp"

namespace prefopt::cli {

namespace fs = std::filesystem;

void write_output(const std::string& path, std::string_view contents, std::ostream& out) {
  if (path == "-") {
    out << contents;
    out.flush();
    return;
  }
  const fs::path target(path);
  fs::path tmp = target;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot write '" + tmp.string() + "'");
    f.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    f.flush();
    if (!f) throw IoError("write to '" + tmp.string() + "' failed");
  }
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw IoError("cannot move output into place at '" + path + "'");
  }
}

namespace {

std::vector<ResponseScore> load_scores(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open reward scores '" + path + "'");
  return read_scores(in);
}

std::vector<double> parse_grid(const std::string& text, const char* name) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (item.find_first_not_of(" \t", used) != std::string::npos) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ValidationError(std::string(name) + ": cannot parse '" + item + "'");
    }
  }
  if (out.empty()) throw ValidationError(std::string(name) + " must list at least one value");
  return out;
}

RatioSpec parse_ratio(const std::string& text) {
  RatioSpec spec;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw ValidationError("ratio entries must look like Category=weight");
    const Category c = parse_category(item.substr(0, eq));
    try {
      spec.weights[c] = std::stod(item.substr(eq + 1));
    } catch (const std::exception&) {
      throw ValidationError("ratio: cannot parse weight in '" + item + "'");
    }
  }
  spec.validate();
  return spec;
}

std::string join_indices(const std::vector<std::size_t>& idx, bool as_json) {
  if (as_json) return nlohmann::json(idx).dump() + "\n";
  std::string out;
  for (std::size_t i : idx) out += std::to_string(i) + "\n";
  return out;
}

struct Logger {
  std::ostream& err;
  bool quiet = false;
  void operator()(const std::string& msg) const {
    if (!quiet) err << msg << '\n';
  }
};

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Preference-alignment toolkit: pair generation, data sampling, DPO-family and reward-model training, "
               "and reward-bench evaluation.",
               "prefopt"};
  app.require_subcommand(1, 1);
  app.option_defaults()->always_capture_default();

  bool quiet = false;
  std::function<void()> action;

  // gen-pairs
  auto* gen = app.add_subcommand("gen-pairs", "Expand ranked sets into all comparison pairs with reward margins");
  std::string gen_in, gen_rewards, gen_out = "-";
  bool gen_vision = false;
  double gen_alpha = 0.5;
  gen->add_option("--in", gen_in, "Annotation JSONL")->required();
  gen->add_option("--rewards", gen_rewards, "Reward scores JSONL (margins are 0 without it)");
  gen->add_option("--out", gen_out, "Pairs JSONL ('-' for stdout)");
  gen->add_flag("--vision", gen_vision, "Attach mixup vision negatives");
  gen->add_option("--alpha", gen_alpha, "Mixup weight on the original query")->check(CLI::Range(0.0, 1.0));
  gen->add_flag("--quiet", quiet, "Silence stderr logs");
  gen->callback([&] {
    action = [&] {
      const Dataset ds = load_dataset(gen_in);
      auto pairs = all_pairs(ds);
      if (!gen_rewards.empty()) pairs = attach_margins(std::move(pairs), to_reward_table(load_scores(gen_rewards)));
      if (gen_vision) pairs = attach_vision_negatives(std::move(pairs), ds, gen_alpha);
      std::ostringstream buf;
      write_pairs(buf, pairs);
      write_output(gen_out, buf.str(), out);
      Logger{err, quiet}("gen-pairs: " + std::to_string(pairs.size()) + " pairs from " +
                         std::to_string(ds.items.size()) + " items");
    };
  });

  // cluster-sample
  auto* cs = app.add_subcommand("cluster-sample", "Cluster query features and sample per cluster");
  std::string cs_in, cs_out = "-", cs_format = "lines", cs_ratio;
  std::size_t cs_k = kDefaultClusterCount, cs_per = 1, cs_iters = 100, cs_total = 0;
  std::uint64_t cs_seed = 0;
  bool cs_normalize = false;
  cs->add_option("--in", cs_in, "Annotation JSONL")->required();
  cs->add_option("--k", cs_k, "Number of cluster centers");
  cs->add_option("--per-cluster", cs_per, "Instances sampled from each cluster")
      ->required()
      ->default_str("")
      ->check(CLI::Validator(
          [](std::string& v) { return v == "0" ? std::string("must be at least 1") : std::string(); }, "POSITIVE"));
  cs->add_option("--max-iters", cs_iters, "Lloyd iteration cap");
  cs->add_option("--seed", cs_seed, "Random seed");
  cs->add_flag("--normalize", cs_normalize, "L2-normalise features before clustering");
  cs->add_option("--ratio", cs_ratio, "Category ratio for resampling, e.g. Long=4,Short=5,MCQ=1");
  cs->add_option("--total", cs_total, "Resample the cluster sample to this size by --ratio (0 = off)");
  cs->add_option("--format", cs_format, "Output format")->check(CLI::IsMember({"lines", "json"}));
  cs->add_option("--out", cs_out, "Output path ('-' for stdout)");
  cs->add_flag("--quiet", quiet, "Silence stderr logs");
  cs->callback([&] {
    action = [&] {
      const Dataset ds = load_dataset(cs_in);
      std::vector<Point> points;
      for (const auto& item : ds.items) points.push_back(item.query.features);
      if (cs_normalize) points = normalize_rows(std::move(points));
      const auto model = kmeans(points, cs_k, cs_iters, cs_seed);
      auto picked = cluster_sample(model, cs_per, cs_seed);
      Logger log{err, quiet};
      log("cluster-sample: inertia " + std::to_string(model.inertia) + " after " + std::to_string(model.iterations) +
          " iterations; " + std::to_string(picked.size()) + " sampled");
      if (cs_total > 0) {
        const RatioSpec spec = cs_ratio.empty() ? default_ratio() : parse_ratio(cs_ratio);
        std::vector<Category> cats;
        for (std::size_t i : picked) cats.push_back(ds.items[i].query.category);
        const auto local = stratified_resample(cats, spec, cs_total, cs_seed);
        std::vector<std::size_t> resampled;
        for (std::size_t j : local) resampled.push_back(picked[j]);
        picked = std::move(resampled);
      } else if (!cs_ratio.empty()) {
        throw ValidationError("--ratio requires --total");
      }
      write_output(cs_out, join_indices(picked, cs_format == "json"), out);
    };
  });

  // score
  auto* sc = app.add_subcommand("score", "Score every response with a trained reward model");
  std::string sc_in, sc_ckpt, sc_mode = "inferred", sc_out = "-";
  std::size_t sc_max_len = 32;
  sc->add_option("--in", sc_in, "Annotation JSONL")->required();
  sc->add_option("--ckpt", sc_ckpt, "Reward model checkpoint")->required();
  sc->add_option("--mode", sc_mode, "Critique source")->check(CLI::IsMember({"inferred", "gt", "none"}));
  sc->add_option("--max-len", sc_max_len, "Generated critique length cap");
  sc->add_option("--out", sc_out, "Scores JSONL ('-' for stdout)");
  sc->add_flag("--quiet", quiet, "Silence stderr logs");
  sc->callback([&] {
    action = [&] {
      const Dataset ds = load_dataset(sc_in);
      const auto ckpt = load_reward_checkpoint(sc_ckpt);
      const auto scores = score_dataset(ckpt.model, ds, parse_critique_source(sc_mode), sc_max_len);
      std::ostringstream buf;
      write_scores(buf, scores);
      write_output(sc_out, buf.str(), out);
      Logger{err, quiet}("score: " + std::to_string(scores.size()) + " responses scored");
    };
  });

  // train-dpo
  auto* td = app.add_subcommand("train-dpo", "Train a policy with the margin-scaled DPO objective");
  std::string td_in, td_rewards, td_config, td_out, td_log, td_resume;
  std::optional<std::uint64_t> td_seed;
  std::optional<std::size_t> td_steps;
  td->add_option("--in", td_in, "Annotation JSONL")->required();
  td->add_option("--rewards", td_rewards, "Reward scores JSONL for margins");
  td->add_option("--config", td_config, "Config file (JSON or key=value)");
  td->add_option("--out", td_out, "Checkpoint path")->required();
  td->add_option("--log", td_log, "Per-step JSONL training log");
  td->add_option("--resume", td_resume, "Continue from this checkpoint");
  td->add_option("--seed", td_seed, "Override the config seed");
  td->add_option("--steps", td_steps, "Override the config step count");
  td->add_flag("--quiet", quiet, "Silence stderr logs");
  td->callback([&] {
    action = [&] {
      const Dataset ds = load_dataset(td_in);
      std::optional<PolicyCheckpoint> ckpt;
      if (!td_resume.empty()) ckpt = load_policy_checkpoint(td_resume);
      TrainConfig cfg = ckpt ? ckpt->config : (td_config.empty() ? TrainConfig{} : load_train_config(td_config));
      if (td_seed && !ckpt) cfg.seed = *td_seed;
      if (td_steps) cfg.steps = *td_steps;
      cfg.validate();
      std::optional<RewardTable> table;
      if (!td_rewards.empty()) table = to_reward_table(load_scores(td_rewards));
      auto pairs = build_policy_pairs(ds, table ? &*table : nullptr, cfg);
      if (pairs.empty()) throw ParameterError("dataset yields no comparison pairs");
      std::optional<PolicyTrainer> trainer;
      if (ckpt) {
        ckpt->config.steps = cfg.steps;
        trainer.emplace(PolicyTrainer::resume(std::move(pairs), *ckpt));
      } else {
        trainer.emplace(std::move(pairs), ds.vocab_size, ds.feature_dim, cfg);
      }
      std::ostringstream log;
      trainer->run(&log);
      if (!td_log.empty()) write_output(td_log, log.str(), out);
      write_output(td_out, serialize_checkpoint(trainer->checkpoint()), out);
      const auto& last = trainer->history().back();
      nlohmann::ordered_json summary{{"steps", trainer->steps_done()},
                                     {"final_loss", last.loss},
                                     {"train_implicit_accuracy",
                                      implicit_reward_accuracy(trainer->policy(), trainer->reference(),
                                                               trainer->pairs())}};
      out << summary.dump() << '\n';
      Logger{err, quiet}("train-dpo: " + std::to_string(trainer->steps_done()) + " steps, final loss " +
                         std::to_string(last.loss));
    };
  });

  // train-rm
  auto* tr = app.add_subcommand("train-rm", "Train the critique-based reward model");
  std::string tr_in, tr_config, tr_out, tr_log, tr_resume;
  bool tr_plain = false;
  std::optional<std::uint64_t> tr_seed;
  std::optional<std::size_t> tr_steps;
  tr->add_option("--in", tr_in, "Annotation JSONL with critiques")->required();
  tr->add_option("--config", tr_config, "Config file (JSON or key=value)");
  tr->add_option("--out", tr_out, "Checkpoint path")->required();
  tr->add_option("--log", tr_log, "Per-step JSONL training log");
  tr->add_option("--resume", tr_resume, "Continue from this checkpoint");
  tr->add_flag("--plain", tr_plain, "Train the scorer alone without critiques");
  tr->add_option("--seed", tr_seed, "Override the config seed");
  tr->add_option("--steps", tr_steps, "Override the config step count");
  tr->add_flag("--quiet", quiet, "Silence stderr logs");
  tr->callback([&] {
    action = [&] {
      const Dataset ds = load_dataset(tr_in);
      std::optional<RewardCheckpoint> ckpt;
      if (!tr_resume.empty()) ckpt = load_reward_checkpoint(tr_resume);
      TrainConfig cfg = ckpt ? ckpt->config : (tr_config.empty() ? TrainConfig{} : load_train_config(tr_config));
      if (tr_seed && !ckpt) cfg.seed = *tr_seed;
      if (tr_steps) cfg.steps = *tr_steps;
      cfg.validate();
      auto data = reward_comparisons(ds);
      if (data.empty()) throw ParameterError("dataset yields no comparison pairs");
      std::optional<RewardTrainer> trainer;
      if (ckpt) {
        ckpt->config.steps = cfg.steps;
        trainer.emplace(RewardTrainer::resume(std::move(data), *ckpt));
      } else {
        trainer.emplace(std::move(data), ds.vocab_size, ds.feature_dim, cfg,
                        tr_plain ? RewardObjective::Plain : RewardObjective::Total);
      }
      std::ostringstream log;
      trainer->run(&log);
      if (!tr_log.empty()) write_output(tr_log, log.str(), out);
      write_output(tr_out, serialize_checkpoint(trainer->checkpoint()), out);
      const auto& last = trainer->history().back();
      nlohmann::ordered_json summary{{"steps", trainer->steps_done()}, {"final_loss", last.loss}};
      out << summary.dump() << '\n';
      Logger{err, quiet}("train-rm: " + std::to_string(trainer->steps_done()) + " steps, final loss " +
                         std::to_string(last.loss));
    };
  });

  // eval-rm
  auto* ev = app.add_subcommand("eval-rm", "Compute ACC and ACC+ of a reward model on a bench");
  std::string ev_bench, ev_ckpt, ev_mode = "inferred", ev_out = "-";
  std::size_t ev_max_len = 32;
  bool ev_csv = false;
  ev->add_option("--bench", ev_bench, "Bench JSONL")->required();
  ev->add_option("--ckpt", ev_ckpt, "Reward model checkpoint")->required();
  ev->add_option("--mode", ev_mode, "Critique source")->check(CLI::IsMember({"inferred", "gt", "none"}));
  ev->add_option("--max-len", ev_max_len, "Generated critique length cap");
  ev->add_flag("--csv", ev_csv, "Emit a flat CSV table instead of JSON");
  ev->add_option("--out", ev_out, "Report path ('-' for stdout)");
  ev->add_flag("--quiet", quiet, "Silence stderr logs");
  ev->callback([&] {
    action = [&] {
      const Dataset bench = load_dataset(ev_bench);
      const auto ckpt = load_reward_checkpoint(ev_ckpt);
      const auto report = eval_reward_model(ckpt.model, bench, parse_critique_source(ev_mode), ev_max_len);
      Logger log{err, quiet};
      for (const auto& w : report.warnings) log("warning: " + w);
      std::ostringstream buf;
      if (ev_csv) write_report_csv(buf, report);
      else write_report_json(buf, report);
      write_output(ev_out, buf.str(), out);
    };
  });

  // grid-search
  auto* gs = app.add_subcommand("grid-search", "Search SFT weight and learning rate on held-out pairs");
  std::string gs_in, gs_rewards, gs_config, gs_out = "-";
  std::string gs_sft = "0,0.1,0.25,0.5,1.0", gs_lr = "1e-7,5e-7,1e-6,5e-6,1e-5";
  double gs_val = 0.2;
  std::optional<std::uint64_t> gs_seed;
  std::optional<std::size_t> gs_steps;
  gs->add_option("--in", gs_in, "Annotation JSONL")->required();
  gs->add_option("--rewards", gs_rewards, "Reward scores JSONL for margins");
  gs->add_option("--config", gs_config, "Base config file (JSON or key=value)");
  gs->add_option("--sft-grid", gs_sft, "Comma-separated SFT weights");
  gs->add_option("--lr-grid", gs_lr, "Comma-separated learning rates");
  gs->add_option("--val-split", gs_val, "Fraction of items held out")->check(CLI::Range(0.0, 1.0));
  gs->add_option("--seed", gs_seed, "Override the config seed");
  gs->add_option("--steps", gs_steps, "Override the config step count");
  gs->add_option("--out", gs_out, "Result JSON ('-' for stdout)");
  gs->add_flag("--quiet", quiet, "Silence stderr logs");
  gs->callback([&] {
    action = [&] {
      const Dataset ds = load_dataset(gs_in);
      TrainConfig cfg = gs_config.empty() ? TrainConfig{} : load_train_config(gs_config);
      if (gs_seed) cfg.seed = *gs_seed;
      if (gs_steps) cfg.steps = *gs_steps;
      cfg.validate();
      std::optional<RewardTable> table;
      if (!gs_rewards.empty()) table = to_reward_table(load_scores(gs_rewards));
      const auto result = grid_search(ds, table ? &*table : nullptr, cfg, parse_grid(gs_sft, "--sft-grid"),
                                      parse_grid(gs_lr, "--lr-grid"), gs_val);
      write_output(gs_out, to_json(result).dump(2) + "\n", out);
      Logger{err, quiet}("grid-search: " + std::to_string(result.cells.size()) + " cells evaluated");
    };
  });

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitValidation;
  }

  try {
    if (action) action();
    return kExitOk;
  } catch (const IoError& e) {
    err << "error: " << e.what() << '\n';
    return kExitIo;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  }
}

}  // namespace prefopt::cli
