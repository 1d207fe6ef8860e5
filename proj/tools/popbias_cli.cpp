// Command-line harness: data generation, splitting, tuning, experiments,
// simulated-user GAP analysis and long-tail plot data.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "popbias.hpp"

namespace fs = std::filesystem;
using namespace popbias;

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitNumerical = 3;

struct CommonOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  unsigned threads = 1;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--config", o.config, "JSON experiment config");
  cmd->add_option("--seed", o.seed, "Override the seed (split seed for run/tune, generator seed for synth)");
  cmd->add_option("--out", o.out, "Output directory");
  cmd->add_option("--threads", o.threads, "Worker threads (0 = hardware)");
}

fs::path require_out(const CommonOptions& o) {
  if (o.out.empty()) throw ValidationError("--out is required");
  return o.out;
}

void print_summary(const InteractionDataset& d, std::ostream& os) {
  const auto stats = long_tail_stats(d);
  os << "users\t" << d.num_users() << "\nartists\t" << d.num_artists() << "\npairs\t" << d.num_pairs() << '\n';
  if (d.num_pairs() > 0) os << "coverage@0.05\t" << detail::fixed6(stats.coverage_at(0.05)) << '\n';
  if (d.groups()) {
    std::size_t n[3] = {0, 0, 0};
    for (Group g : *d.groups()) ++n[static_cast<int>(g)];
    os << "groups\tlow=" << n[0] << " medium=" << n[1] << " high=" << n[2] << '\n';
  }
}

void write_dataset(const fs::path& dir, const InteractionDataset& d) {
  if (d.groups())
    write_files_atomically(dir, {{"interactions.tsv", [&](std::ostream& o) { write_interactions(o, d); }},
                                 {"groups.tsv", [&](std::ostream& o) { write_groups(o, d); }}});
  else
    write_files_atomically(dir, {{"interactions.tsv", [&](std::ostream& o) { write_interactions(o, d); }}});
}

ExperimentConfig config_with_overrides(const CommonOptions& o) {
  if (o.config.empty()) throw ValidationError("--config is required");
  auto cfg = load_experiment_config(o.config);
  if (o.seed) cfg.split_seed = *o.seed;
  cfg.threads = o.threads;
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Popularity-bias experiments for implicit-feedback recommenders"};
  app.require_subcommand(1);

  CommonOptions common;
  std::string interactions, groups, records, synth_json;
  double holdout = 0.2;
  bool save_models = false;
  SyntheticConfig synth;

  auto* ingest = app.add_subcommand("ingest", "Validate an interactions file and print a summary");
  add_common(ingest, common);
  ingest->add_option("--interactions", interactions, "TSV of user, artist, count")->required();
  ingest->add_option("--groups", groups, "TSV of user, low|medium|high");

  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic long-tail dataset");
  add_common(synth_cmd, common);
  synth_cmd->add_option("--users", synth.num_users);
  synth_cmd->add_option("--artists", synth.num_artists);
  synth_cmd->add_option("--zipf", synth.zipf_exponent);
  synth_cmd->add_option("--profile-min", synth.profile_min);
  synth_cmd->add_option("--profile-max", synth.profile_max);

  auto* split_cmd = app.add_subcommand("split", "Mask a fraction of every profile");
  add_common(split_cmd, common);
  split_cmd->add_option("--interactions", interactions)->required();
  split_cmd->add_option("--groups", groups);
  split_cmd->add_option("--holdout", holdout, "Fraction of each profile to mask");

  auto* tune_cmd = app.add_subcommand("tune", "Grid-search hyperparameters by mean AP@k");
  add_common(tune_cmd, common);

  auto* run_cmd = app.add_subcommand("run", "Run a full experiment and write report.txt / report.kv");
  add_common(run_cmd, common);
  run_cmd->add_flag("--save-models", save_models, "Also write <label>.model containers");

  auto* gap_cmd = app.add_subcommand("gapcalc", "Delta GAP analysis of simulated-user records");
  add_common(gap_cmd, common);
  gap_cmd->add_option("--records", records, "CSV of simulated-user records")->required();

  auto* tail_cmd = app.add_subcommand("tailplot", "Write long-tail plot data");
  add_common(tail_cmd, common);
  tail_cmd->add_option("--interactions", interactions);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitValidation;
  }

  try {
    if (*ingest) {
      const auto d = ingest_interactions(interactions, groups);
      print_summary(d, std::cout);
      if (!common.out.empty()) write_dataset(common.out, d);
    } else if (*synth_cmd) {
      std::uint64_t seed = 1;
      if (!common.config.empty()) {
        const auto cfg = load_experiment_config(common.config);
        if (!cfg.synthetic) throw ValidationError("config has no dataset.synthetic section");
        synth = *cfg.synthetic;
        seed = cfg.synthetic_seed;
      }
      if (common.seed) seed = *common.seed;
      const auto d = generate_synthetic(synth, seed);
      print_summary(d, std::cout);
      write_dataset(require_out(common), d);
    } else if (*split_cmd) {
      const auto d = ingest_interactions(interactions, groups);
      const auto split = split_mask(d, holdout, common.seed.value_or(42));
      write_files_atomically(require_out(common),
                             {{"train.tsv", [&](std::ostream& o) { write_interactions(o, split.train); }},
                              {"masked.tsv", [&](std::ostream& o) {
                                 o << "user_id\tartist_id\n";
                                 for (std::size_t u = 0; u < d.num_users(); ++u)
                                   for (Index a : split.masked[u]) o << d.users()[u] << '\t' << d.artists()[a] << '\n';
                               }}});
      const auto stats = long_tail_stats(d, &split);
      std::cout << "masked\t" << split.num_masked() << "\ntrainable_artists\t" << stats.trainable_artists << '\n';
    } else if (*tune_cmd) {
      const auto cfg = config_with_overrides(common);
      const auto d = load_dataset(cfg);
      const auto split = split_mask(d, cfg.holdout_fraction, cfg.split_seed);
      Json out = Json::object();
      for (const auto& spec : cfg.models) {
        const auto r = tune(spec.family, spec.grid, split.train, cfg.tune_seed, cfg.ap_k, cfg.threads);
        Json scores = Json::array();
        for (std::size_t g = 0; g < r.scores.size(); ++g) {
          if (r.scores[g])
            scores.push_back(*r.scores[g]);
          else
            scores.push_back(r.failures[g].empty() ? Json("skipped") : Json("failed: " + r.failures[g]));
        }
        out[spec.label] = {{"best_index", r.best}, {"best_params", r.best_params}, {"ap_k", r.ap_k}, {"scores", scores}};
        std::cout << spec.label << "\t" << r.best_params.dump() << '\n';
      }
      if (!common.out.empty())
        write_files_atomically(common.out, {{"tune.json", [&](std::ostream& o) { o << out.dump(2) << '\n'; }}});
    } else if (*run_cmd) {
      const auto cfg = config_with_overrides(common);
      const fs::path out = require_out(common);
      const auto report = run_experiment(cfg);
      write_report_files(out, report);
      if (save_models) {
        const auto d = load_dataset(cfg);
        const auto split = split_mask(d, cfg.holdout_fraction, cfg.split_seed);
        auto train = std::make_shared<const InteractionDataset>(split.train);
        for (const auto& m : report.models) {
          auto model = make_model(m.family, m.params);
          model->fit(train, cfg.threads);
          std::ofstream f(out / (m.label + ".model"), std::ios::binary);
          model->save().write(f);
        }
      }
      write_report_txt(std::cout, report);
    } else if (*gap_cmd) {
      std::ifstream in(records);
      if (!in) throw ValidationError("cannot open '" + records + "'");
      const auto report = gapcalc(read_simulated_records(in, records));
      write_gapcalc_txt(std::cout, report);
      if (!common.out.empty()) write_gapcalc_files(common.out, report);
    } else if (*tail_cmd) {
      InteractionDataset d;
      if (!interactions.empty())
        d = ingest_interactions(interactions);
      else if (!common.config.empty())
        d = load_dataset(load_experiment_config(common.config));
      else
        throw ValidationError("tailplot needs --interactions or --config");
      emit_tail_plot_data(require_out(common), d);
      print_summary(d, std::cout);
    }
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitValidation;
  }
  return 0;
}
