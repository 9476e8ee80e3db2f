#include <CLI11.hpp>
#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include "trajcluster/ehr.hpp"
#include "trajcluster/experiment.hpp"
#include "trajcluster/io.hpp"
#include "trajcluster/synthetic.hpp"

namespace tc = trajcluster;

namespace {

std::string default_out(const std::string& leaf) {
  const char* root = std::getenv("TRAJCLUSTER_OUT");
  return root ? std::string(root) + "/" + leaf : leaf;
}

int run_stage(const std::string& stage, const std::function<void()>& fn) {
  try {
    fn();
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error [" << stage << "]: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Semi-supervised patient trajectory clustering with survival outcomes"};
  app.require_subcommand(1);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "Generate the synthetic benchmark dataset");
  std::string gen_config_path;
  std::string gen_out = default_out("dataset");
  std::optional<std::uint64_t> gen_seed;
  std::optional<double> gen_scale;
  gen->add_option("--config", gen_config_path, "Generator config JSON (defaults when omitted)");
  gen->add_option("--out", gen_out, "Output directory");
  gen->add_option("--seed", gen_seed, "Override the config seed");
  gen->add_option("--scale", gen_scale, "Scale the patient count by a factor in (0, 1]");

  // run
  auto* run = app.add_subcommand("run", "Run one experiment from a manifest");
  std::string run_manifest_path;
  std::optional<std::string> run_out;
  std::optional<std::string> run_scenario;
  std::optional<int> run_k;
  std::optional<std::uint64_t> run_seed;
  bool run_skip_pretrain = false;
  run->add_option("--config", run_manifest_path, "Experiment manifest JSON")->required();
  run->add_option("--out", run_out, "Override the manifest output directory");
  run->add_option("--scenario", run_scenario, "recon_only|outcome_only|combined|custom");
  run->add_option("--k", run_k, "Number of clusters");
  run->add_option("--seed", run_seed, "Override the manifest seed");
  run->add_flag("--skip-pretrain", run_skip_pretrain, "Skip autoencoder pre-training");

  // reproduce-table2
  auto* tab = app.add_subcommand("reproduce-table2",
                                 "Run every method at k=3 and k=6 and emit the ARI matrix");
  std::string tab_out = default_out("table2");
  double tab_scale = 0.1;
  std::uint64_t tab_seed = 0;
  int tab_repeats = 5;
  tab->add_option("--out", tab_out, "Output directory");
  tab->add_option("--scale", tab_scale, "Patient-count scale factor in (0, 1]");
  tab->add_option("--seed", tab_seed, "Benchmark seed");
  tab->add_option("--repeats", tab_repeats, "Training repeats per method");

  // encode-events
  auto* enc = app.add_subcommand("encode-events",
                                 "Encode longitudinal event records into window tensors");
  std::string enc_events_path;
  std::string enc_out = default_out("encoded");
  double enc_prevalence = 0.01;
  int enc_window_days = 90;
  std::optional<std::string> enc_index_code;
  enc->add_option("--events", enc_events_path, "Events CSV (patient_id,date,channel,code,value)")
      ->required();
  enc->add_option("--out", enc_out, "Output directory");
  enc->add_option("--min-prevalence", enc_prevalence, "Vocabulary prevalence threshold");
  enc->add_option("--window-days", enc_window_days, "Window length in days");
  enc->add_option("--index-code", enc_index_code,
                  "Align trajectories at the first 'channel:code' event");

  CLI11_PARSE(app, argc, argv);

  if (gen->parsed()) {
    return run_stage("gen-data", [&] {
      tc::synth::SyntheticConfig config;
      if (!gen_config_path.empty()) config = tc::synth::config_from_json_file(gen_config_path);
      if (gen_seed) config.seed = *gen_seed;
      if (gen_scale) config = config.scaled(*gen_scale);
      tc::exp::cmd_gen_data(config, gen_out);
      std::cout << "wrote " << gen_out << "/features.csv (" << config.n_patients << " patients)\n";
    });
  }

  if (run->parsed()) {
    return run_stage("run", [&] {
      tc::exp::ExperimentManifest manifest =
          tc::exp::ExperimentManifest::from_json_file(run_manifest_path);
      if (run_out) manifest.out_dir = *run_out;
      if (run_scenario) manifest.scenario = *run_scenario;
      if (run_k) manifest.k = *run_k;
      if (run_seed) manifest.seed = *run_seed;
      if (run_skip_pretrain) manifest.skip_pretrain = true;
      if (manifest.out_dir.empty()) manifest.out_dir = default_out("run");
      tc::exp::run_experiment(manifest);
      std::cout << "wrote " << manifest.out_dir << "/metrics.json\n";
    });
  }

  if (tab->parsed()) {
    return run_stage("reproduce-table2", [&] {
      tc::synth::SyntheticConfig config;
      config.seed = tab_seed;
      config = config.scaled(tab_scale);
      tc::exp::ExperimentManifest manifest;
      manifest.dataset_dir = "(generated)";
      manifest.out_dir = tab_out;
      manifest.seed = tab_seed;
      tc::exp::BenchmarkContext ctx = tc::exp::make_benchmark_context(config, manifest);
      tc::exp::reproduce_table2(ctx, tab_out, tab_repeats);
      std::cout << "wrote " << tab_out << "/table2_ari.csv\n";
    });
  }

  if (enc->parsed()) {
    return run_stage("encode-events", [&] {
      const auto events = tc::ehr::read_events_csv(enc_events_path);
      std::optional<std::pair<tc::ehr::Channel, std::string>> index;
      if (enc_index_code) {
        const auto colon = enc_index_code->find(':');
        if (colon == std::string::npos)
          throw std::invalid_argument("--index-code expects 'channel:code'");
        index = {tc::ehr::channel_from_string(enc_index_code->substr(0, colon)),
                 enc_index_code->substr(colon + 1)};
      }
      const auto encoded = tc::ehr::encode_cohort(events, enc_prevalence, enc_window_days, index);
      tc::ehr::write_encoded_cohort(encoded, enc_out);
      std::cout << "wrote " << enc_out << "/tensors.csv (" << encoded.cohort.size()
                << " patients, " << encoded.cohort.layout.width() << " features per window)\n";
    });
  }

  return 0;
}
