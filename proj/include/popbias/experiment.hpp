#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "popbias/config.hpp"
#include "popbias/corpus.hpp"
#include "popbias/evaluation.hpp"
#include "popbias/io.hpp"
#include "popbias/metrics.hpp"
#include "popbias/model.hpp"

namespace popbias {

inline constexpr const char* kVersion = "1.0.0";

struct TuneResult {
  std::size_t best = 0;
  Json best_params;
  std::vector<std::optional<double>> scores;  // mean AP@k per grid point; empty = failed
  std::vector<std::string> failures;          // diagnostic per grid point, empty if ok
  std::size_t ap_k = 0;
};

/// Grid search by mean AP@k on a validation split re-masked from `train`.
/// The first best point in grid order wins; failed points are skipped.
inline TuneResult tune(const std::string& family, const std::vector<Json>& grid, const InteractionDataset& train,
                       std::uint64_t tune_seed, std::size_t ap_k = 0, unsigned threads = 1) {
  if (grid.empty()) throw ValidationError("tuning grid is empty");
  TuneResult r;
  r.ap_k = ap_k ? ap_k : default_ap_k(train.num_artists());
  r.scores.resize(grid.size());
  r.failures.resize(grid.size());
  if (grid.size() == 1) {
    r.best_params = grid[0];
    return r;
  }
  const auto validation = split_mask(train, 0.1, tune_seed);
  auto inner = std::make_shared<const InteractionDataset>(validation.train);
  std::optional<std::size_t> best;
  for (std::size_t g = 0; g < grid.size(); ++g) {
    try {
      auto model = make_model(family, grid[g]);
      model->fit(inner, threads);
      r.scores[g] = mean_average_precision(*model, validation, r.ap_k, threads);
      if (!r.scores[g]) r.failures[g] = "AP undefined for every validation user";
    } catch (const NumericalError& e) {
      r.failures[g] = e.what();
    } catch (const ValidationError& e) {
      r.failures[g] = e.what();
    }
    if (r.scores[g] && (!best || *r.scores[g] > *r.scores[*best])) best = g;
  }
  if (!best) throw ValidationError("tuning " + family + ": every grid point failed");
  r.best = *best;
  r.best_params = grid[*best];
  return r;
}

// ---------------------------------------------------------------------------

struct GroupSummary {
  std::string name;
  std::size_t users = 0;
  std::size_t evaluated = 0;  // users with a defined AUC
  std::size_t skipped = 0;
  double auc_mean = std::numeric_limits<double>::quiet_NaN();
  std::optional<double> auc_stderr;
  double gap_p = std::numeric_limits<double>::quiet_NaN();
  double gap_r = std::numeric_limits<double>::quiet_NaN();
  double delta_gap = std::numeric_limits<double>::quiet_NaN();
};

struct ModelSummary {
  std::string label;
  std::string family;
  Json params;
  TuneResult tuning;
  std::vector<GroupSummary> groups;  // all, low, medium, high

  const GroupSummary& group(std::string_view name) const {
    for (const auto& g : groups)
      if (g.name == name) return g;
    throw ValidationError("no group '" + std::string(name) + "'");
  }
};

struct ExperimentReport {
  std::size_t num_users = 0, num_artists = 0, num_pairs = 0, masked_pairs = 0, trainable_artists = 0;
  std::vector<std::pair<std::string, std::string>> provenance;
  std::vector<ModelSummary> models;

  const ModelSummary& model(std::string_view label) const {
    for (const auto& m : models)
      if (m.label == label) return m;
    throw ValidationError("no model '" + std::string(label) + "' in report");
  }
};

/// Aggregates per-user evaluations into All/Low/Medium/High rows.
inline std::vector<GroupSummary> summarize_groups(const std::vector<UserEvaluation>& evals,
                                                  const std::vector<Group>& groups) {
  std::vector<GroupSummary> out;
  auto build = [&](std::string name, auto&& member) {
    GroupSummary s;
    s.name = std::move(name);
    std::vector<double> aucs, prof, rec;
    for (std::size_t u = 0; u < evals.size(); ++u) {
      if (!member(u)) continue;
      ++s.users;
      if (evals[u].auc)
        aucs.push_back(*evals[u].auc);
      else
        ++s.skipped;
      if (evals[u].profile_popularity && evals[u].recommended_popularity) {
        prof.push_back(*evals[u].profile_popularity);
        rec.push_back(*evals[u].recommended_popularity);
      }
    }
    s.evaluated = aucs.size();
    if (!aucs.empty()) {
      const auto m = mean_with_stderr(aucs);
      s.auc_mean = m.mean;
      s.auc_stderr = m.std_error;
    }
    if (!prof.empty()) {
      s.gap_p = ordered_sum(prof) / static_cast<double>(prof.size());
      s.gap_r = ordered_sum(rec) / static_cast<double>(rec.size());
      if (s.gap_p > 0.0) s.delta_gap = delta_gap(s.gap_p, s.gap_r);
    }
    out.push_back(std::move(s));
  };
  build("all", [](std::size_t) { return true; });
  for (Group g : kAllGroups) build(std::string(to_string(g)), [&](std::size_t u) { return groups[u] == g; });
  return out;
}

namespace detail {

inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

/// Re-throws with the pipeline stage prefixed, keeping the error category.
template <typename F>
auto staged(const std::string& stage, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const NumericalError& e) {
    throw NumericalError(stage + ": " + e.what());
  } catch (const ValidationError& e) {
    throw ValidationError(stage + ": " + e.what());
  }
}

}  // namespace detail

inline InteractionDataset load_dataset(const ExperimentConfig& cfg) {
  if (cfg.synthetic) return generate_synthetic(*cfg.synthetic, cfg.synthetic_seed);
  return ingest_interactions(cfg.interactions, cfg.groups);
}

/// Evaluates one fitted model on a split and aggregates per group.
inline std::vector<GroupSummary> evaluate_model(const Recommender& model, const SplitDataset& split,
                                                const PopularityTable& pop,
                                                const std::vector<std::vector<Index>>& gap_profiles,
                                                const std::vector<Group>& groups, const EvaluationOptions& opts) {
  return summarize_groups(evaluate_users(model, split, pop, gap_profiles, opts), groups);
}

/// Full pipeline: load/generate, split, tune, fit, rank, aggregate.
inline ExperimentReport run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  ExperimentReport report;
  auto dataset = detail::staged("load", [&] { return load_dataset(cfg); });
  const auto split = detail::staged("split", [&] { return split_mask(dataset, cfg.holdout_fraction, cfg.split_seed); });
  const auto pop = compute_popularity(split, cfg.popularity_scope);
  std::vector<Group> groups = dataset.groups() ? *dataset.groups() : assign_mainstream_groups(dataset, compute_popularity(dataset));

  std::vector<std::vector<Index>> gap_profiles(dataset.num_users());
  for (std::size_t u = 0; u < dataset.num_users(); ++u) {
    const auto r = cfg.gap_profile_train_only ? split.train.row(u) : dataset.row(u);
    gap_profiles[u].assign(r.begin(), r.end());
  }

  report.num_users = dataset.num_users();
  report.num_artists = dataset.num_artists();
  report.num_pairs = dataset.num_pairs();
  report.masked_pairs = split.num_masked();
  report.trainable_artists = long_tail_stats(dataset, &split).trainable_artists;
  report.provenance = {
      {"version", kVersion},
      {"config_hash", detail::hex64(detail::fnv1a(cfg.source.dump()))},
      {"dataset", cfg.synthetic ? "synthetic" : cfg.interactions.filename().string()},
      {"synthetic_seed", cfg.synthetic ? std::to_string(cfg.synthetic_seed) : "none"},
      {"split_seed", std::to_string(cfg.split_seed)},
      {"tune_seed", std::to_string(cfg.tune_seed)},
      {"holdout_fraction", std::to_string(cfg.holdout_fraction)},
      {"top_n", std::to_string(cfg.top_n)},
      {"popularity_scope", cfg.popularity_scope == PopularityScope::AllData ? "all" : "train"},
      {"gap_profile", cfg.gap_profile_train_only ? "train" : "full"},
      {"groups", dataset.groups() ? "supplied" : "terciles"},
  };

  auto train = std::make_shared<const InteractionDataset>(split.train);
  const EvaluationOptions opts{cfg.top_n, cfg.threads};
  for (const auto& spec : cfg.models) {
    ModelSummary m;
    m.label = spec.label;
    m.family = spec.family;
    m.tuning = detail::staged("tune " + spec.label, [&] {
      return tune(spec.family, spec.grid, split.train, cfg.tune_seed, cfg.ap_k, cfg.threads);
    });
    m.params = m.tuning.best_params;
    auto model = detail::staged("fit " + spec.label, [&] {
      auto mdl = make_model(spec.family, m.params);
      mdl->fit(train, cfg.threads);
      return mdl;
    });
    m.groups = detail::staged("evaluate " + spec.label,
                              [&] { return evaluate_model(*model, split, pop, gap_profiles, groups, opts); });
    report.models.push_back(std::move(m));
  }
  return report;
}

// ---------------------------------------------------------------------------
// Report output

namespace detail {

inline std::string fixed6(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

inline std::string fixed3(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.3f", v);
  return buf;
}

inline std::string pad(std::string s, std::size_t width) {
  if (s.size() < width) s.insert(0, width - s.size(), ' ');
  return s;
}

inline std::string pad_right(std::string s, std::size_t width) {
  if (s.size() < width) s.append(width - s.size(), ' ');
  return s;
}

}  // namespace detail

/// One `metric.model.group=value` line per value; reals at 6 decimals.
inline void write_report_kv(std::ostream& out, const ExperimentReport& r) {
  out << "dataset.users=" << r.num_users << '\n'
      << "dataset.artists=" << r.num_artists << '\n'
      << "dataset.pairs=" << r.num_pairs << '\n'
      << "dataset.masked_pairs=" << r.masked_pairs << '\n'
      << "dataset.trainable_artists=" << r.trainable_artists << '\n';
  for (const auto& [k, v] : r.provenance) out << "provenance." << k << '=' << v << '\n';
  for (const auto& m : r.models) {
    out << "model." << m.label << ".family=" << m.family << '\n';
    out << "model." << m.label << ".params=" << m.params.dump() << '\n';
    for (std::size_t g = 0; g < m.tuning.scores.size(); ++g) {
      out << "tune." << m.label << ".point" << g << '=';
      if (m.tuning.scores[g])
        out << detail::fixed6(*m.tuning.scores[g]);
      else
        out << (m.tuning.failures[g].empty() ? "skipped" : "failed");
      out << '\n';
    }
    for (const auto& g : m.groups) {
      const std::string key = "." + m.label + "." + g.name + "=";
      out << "auc_mean" << key << detail::fixed6(g.auc_mean) << '\n';
      out << "auc_stderr" << key << (g.auc_stderr ? detail::fixed6(*g.auc_stderr) : "undefined") << '\n';
      out << "gap_p" << key << detail::fixed6(g.gap_p) << '\n';
      out << "gap_r" << key << detail::fixed6(g.gap_r) << '\n';
      out << "delta_gap" << key << detail::fixed6(g.delta_gap) << '\n';
      out << "users" << key << g.users << '\n';
      out << "skipped" << key << g.skipped << '\n';
    }
  }
}

/// Aligned accuracy and popularity-bias tables.
inline void write_report_txt(std::ostream& out, const ExperimentReport& r) {
  static const char* kGroups[] = {"all", "low", "medium", "high"};
  static const char* kHeads[] = {"All", "Low MS", "Med MS", "High MS"};
  std::size_t name_w = 12;
  for (const auto& m : r.models) name_w = std::max(name_w, m.label.size() + 2);
  out << "Dataset: " << r.num_users << " users, " << r.num_artists << " artists, " << r.num_pairs << " pairs ("
      << r.masked_pairs << " masked, " << r.trainable_artists << " trainable artists)\n\n";

  out << "Accuracy - mean AUC (stderr)\n" << detail::pad_right("", name_w);
  for (const char* h : kHeads) out << detail::pad(h, 18);
  out << '\n';
  for (const auto& m : r.models) {
    out << detail::pad_right(m.label, name_w);
    for (const char* g : kGroups) {
      const auto& s = m.group(g);
      out << detail::pad(detail::fixed3(s.auc_mean) + " (" + (s.auc_stderr ? detail::fixed3(*s.auc_stderr) : "n/a") + ")", 18);
    }
    out << '\n';
  }

  out << "\nPopularity bias - delta GAP\n" << detail::pad_right("", name_w);
  for (const char* h : kHeads) out << detail::pad(h, 10);
  out << '\n';
  for (const auto& m : r.models) {
    out << detail::pad_right(m.label, name_w);
    for (const char* g : kGroups) out << detail::pad(detail::fixed3(m.group(g).delta_gap), 10);
    out << '\n';
  }

  out << "\nGAP_p / GAP_r\n" << detail::pad_right("", name_w);
  for (const char* h : kHeads) out << detail::pad(h, 18);
  out << '\n';
  for (const auto& m : r.models) {
    out << detail::pad_right(m.label, name_w);
    for (const char* g : kGroups) {
      const auto& s = m.group(g);
      out << detail::pad(detail::fixed3(s.gap_p) + " / " + detail::fixed3(s.gap_r), 18);
    }
    out << '\n';
  }

  out << "\nUsers evaluated (skipped)\n" << detail::pad_right("", name_w);
  for (const char* h : kHeads) out << detail::pad(h, 14);
  out << '\n';
  for (const auto& m : r.models) {
    out << detail::pad_right(m.label, name_w);
    for (const char* g : kGroups) {
      const auto& s = m.group(g);
      out << detail::pad(std::to_string(s.evaluated) + " (" + std::to_string(s.skipped) + ")", 14);
    }
    out << '\n';
  }

  out << "\nSelected hyperparameters\n";
  for (const auto& m : r.models) out << "  " << m.label << ": " << m.params.dump() << '\n';
  out << "\nProvenance\n";
  for (const auto& [k, v] : r.provenance) out << "  " << k << " = " << v << '\n';
}

/// Writes files via temporaries so a failure leaves no partial output.
inline void write_files_atomically(const std::filesystem::path& dir,
                            std::initializer_list<std::pair<std::string, std::function<void(std::ostream&)>>> files) {
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> temps;
  try {
    for (const auto& [name, writer] : files) {
      const auto tmp = dir / (name + ".tmp");
      temps.push_back(tmp);
      std::ofstream out(tmp, std::ios::binary);
      if (!out) throw ValidationError("cannot write '" + tmp.string() + "'");
      writer(out);
      if (!out) throw ValidationError("write failed for '" + tmp.string() + "'");
    }
    std::size_t i = 0;
    for (const auto& [name, writer] : files) std::filesystem::rename(temps[i++], dir / name);
  } catch (...) {
    for (const auto& t : temps) std::filesystem::remove(t);
    throw;
  }
}

inline void write_report_files(const std::filesystem::path& dir, const ExperimentReport& r) {
  write_files_atomically(dir, {{"report.txt", [&](std::ostream& o) { write_report_txt(o, r); }},
                               {"report.kv", [&](std::ostream& o) { write_report_kv(o, r); }}});
}

// ---------------------------------------------------------------------------
// Long-tail plot data

/// Rank/phi series (descending popularity) plus the coverage curve.
inline void write_tail_rank(std::ostream& out, const InteractionDataset& d) {
  if (d.num_users() == 0) throw ValidationError("tail plot of an empty dataset");
  const auto pop = compute_popularity(d);
  const auto order = artists_by_popularity(pop);
  out << "rank\tartist\tphi\n";
  for (std::size_t i = 0; i < order.size(); ++i)
    out << (i + 1) << '\t' << d.artists()[order[i]] << '\t' << detail::fixed6(pop[order[i]]) << '\n';
}

inline void emit_tail_plot_data(const std::filesystem::path& dir, const InteractionDataset& d) {
  const auto stats = long_tail_stats(d);
  write_files_atomically(dir, {{"tail_rank.tsv", [&](std::ostream& o) { write_tail_rank(o, d); }},
                               {"coverage.tsv", [&](std::ostream& o) { write_coverage(o, stats); }}});
}

}  // namespace popbias
