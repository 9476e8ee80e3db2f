#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <numeric>

#include "trajcluster/baselines.hpp"
#include "trajcluster/experiment.hpp"
#include "trajcluster/losses.hpp"
#include "trajcluster/metrics.hpp"
#include "trajcluster/network.hpp"
#include "trajcluster/synthetic.hpp"
#include "trajcluster/trainer.hpp"

namespace py = pybind11;
using namespace trajcluster;

namespace {

using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;
using LabelArray = py::array_t<long long, py::array::c_style | py::array::forcecast>;

Tensor tensor_from_array(const DoubleArray& a) {
  if (a.ndim() != 2) throw std::invalid_argument("expected a 2-D array");
  Tensor t(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)));
  std::copy(a.data(), a.data() + t.size(), t.data());
  return t;
}

py::array_t<double> array_from_tensor(const Tensor& t) {
  py::array_t<double> a({t.rows(), t.cols()});
  std::copy(t.data(), t.data() + t.size(), a.mutable_data());
  return a;
}

std::vector<int> labels_from_array(const LabelArray& a) {
  std::vector<int> out(static_cast<std::size_t>(a.size()));
  for (py::ssize_t i = 0; i < a.size(); ++i)
    out[static_cast<std::size_t>(i)] = static_cast<int>(a.data()[i]);
  return out;
}

py::dict dataset_to_dict(const synth::SyntheticDataset& ds) {
  py::dict d;
  d["features"] = array_from_tensor(ds.features);
  const py::ssize_t n = static_cast<py::ssize_t>(ds.size());
  py::array_t<long long> noise(n), outcome(n), combined(n), events(n);
  py::array_t<double> times(n);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    noise.mutable_data()[i] = ds.noise_labels[i];
    outcome.mutable_data()[i] = ds.outcome_labels[i];
    combined.mutable_data()[i] = ds.combined_labels[i];
    times.mutable_data()[i] = ds.outcomes[i].time;
    events.mutable_data()[i] = ds.outcomes[i].event;
  }
  d["noise_labels"] = noise;
  d["outcome_labels"] = outcome;
  d["combined_labels"] = combined;
  d["times"] = times;
  d["events"] = events;
  return d;
}

}  // namespace

PYBIND11_MODULE(_trajcluster, m) {
  m.doc() = "Semi-supervised patient trajectory clustering with survival outcomes";

  m.def(
      "generate_dataset",
      [](int n_patients, std::uint64_t seed, int k_noise, int n_noise_features, double noise_std,
         int k_outcome, int n_outcome_features, double combined_std, double tte_min,
         double tte_max, double censor_prob, double tte_cap) {
        synth::SyntheticConfig c;
        c.n_patients = n_patients;
        c.seed = seed;
        c.k_noise = k_noise;
        c.n_noise_features = n_noise_features;
        c.noise_std = noise_std;
        c.k_outcome = k_outcome;
        c.k_combined = 2 * k_outcome;
        c.n_outcome_features = n_outcome_features;
        c.combined_std = combined_std;
        c.tte_min = tte_min;
        c.tte_max = tte_max;
        c.censor_prob = censor_prob;
        c.tte_cap = tte_cap;
        return dataset_to_dict(synth::generate_dataset(c));
      },
      py::arg("n_patients") = 6000, py::arg("seed") = 0, py::arg("k_noise") = 3,
      py::arg("n_noise_features") = 200, py::arg("noise_std") = 0.8, py::arg("k_outcome") = 3,
      py::arg("n_outcome_features") = 200, py::arg("combined_std") = 0.5,
      py::arg("tte_min") = 10.0, py::arg("tte_max") = 10000.0, py::arg("censor_prob") = 0.5,
      py::arg("tte_cap") = 2000.0,
      "Generate the synthetic benchmark with known noise/outcome/combined clusters.");

  m.def(
      "adjusted_rand_index",
      [](const LabelArray& a, const LabelArray& b) {
        return metrics::adjusted_rand_index(labels_from_array(a), labels_from_array(b));
      },
      py::arg("labels_a"), py::arg("labels_b"));

  m.def(
      "normalized_mutual_information",
      [](const LabelArray& a, const LabelArray& b) {
        return metrics::normalized_mutual_information(labels_from_array(a),
                                                      labels_from_array(b));
      },
      py::arg("labels_a"), py::arg("labels_b"));

  m.def(
      "kaplan_meier",
      [](const std::vector<double>& times, const std::vector<int>& events) {
        const metrics::StepCurve c = metrics::kaplan_meier(times, events);
        py::dict d;
        d["times"] = c.times;
        d["survival"] = c.survival;
        d["at_risk"] = c.at_risk;
        d["events"] = c.events;
        return d;
      },
      py::arg("times"), py::arg("events"));

  m.def(
      "logrank_test",
      [](const std::vector<double>& times, const std::vector<int>& events,
         const LabelArray& labels) {
        const metrics::LogrankResult r =
            metrics::logrank_test(times, events, labels_from_array(labels));
        py::dict d;
        d["statistic"] = r.statistic;
        d["df"] = r.df;
        d["p_value"] = r.p_value;
        return d;
      },
      py::arg("times"), py::arg("events"), py::arg("labels"));

  m.def(
      "cox_loss",
      [](const std::vector<double>& risks, const std::vector<double>& times,
         const std::vector<int>& events) { return loss::cox_loss_value(risks, times, events); },
      py::arg("risks"), py::arg("times"), py::arg("events"),
      "Negative mean Cox partial likelihood (risk sets use >= on times).");

  m.def(
      "pca",
      [](const DoubleArray& data, int n_components) {
        const baseline::PcaResult p = baseline::pca(tensor_from_array(data), n_components);
        return py::make_tuple(array_from_tensor(p.components), array_from_tensor(p.projected),
                              p.explained_variance);
      },
      py::arg("data"), py::arg("n_components"));

  m.def(
      "kmeans",
      [](const DoubleArray& data, int k, std::uint64_t seed) {
        Rng rng(seed);
        const baseline::KMeansResult r = baseline::kmeans(tensor_from_array(data), k, rng);
        return py::make_tuple(r.labels, array_from_tensor(r.centroids), r.inertia);
      },
      py::arg("data"), py::arg("k"), py::arg("seed") = 0);

  m.def(
      "rsf_cluster",
      [](const DoubleArray& features, const std::vector<double>& times,
         const std::vector<int>& events, int k, std::uint64_t seed) {
        Rng rng(seed);
        return baseline::rsf_cluster(tensor_from_array(features), times, events, k, rng);
      },
      py::arg("features"), py::arg("times"), py::arg("events"), py::arg("k"),
      py::arg("seed") = 0,
      "Survival-tree risk clustering: ten depth-4 log-rank trees on 75% feature subsets.");

  m.def(
      "soft_assign",
      [](const DoubleArray& z, const DoubleArray& centroids) {
        return array_from_tensor(
            net::student_t_soft_assign(tensor_from_array(z), tensor_from_array(centroids)));
      },
      py::arg("z"), py::arg("centroids"),
      "Student-t kernel soft cluster assignments, rows normalized to 1.");

  m.def(
      "target_distribution",
      [](const DoubleArray& q) {
        return array_from_tensor(net::target_distribution(tensor_from_array(q)));
      },
      py::arg("q"), "Self-training target: q^2 over soft frequencies, renormalized.");

  m.def(
      "overlap_table",
      [](const LabelArray& a, const LabelArray& b) {
        return metrics::overlap_table(labels_from_array(a), labels_from_array(b));
      },
      py::arg("labels_a"), py::arg("labels_b"));

  m.def(
      "run_scenario",
      [](const DoubleArray& features, const std::vector<double>& times,
         const std::vector<int>& events, const std::string& scenario, int k, std::uint64_t seed,
         int embed_width, int latent_width, int warmup_epochs, int epochs, int batch_size,
         const std::string& normalize_features) {
        exp::BenchmarkContext ctx;
        ctx.seed = seed;
        ctx.dataset.features = tensor_from_array(features);
        const int n = ctx.dataset.features.rows();
        if (static_cast<int>(times.size()) != n || static_cast<int>(events.size()) != n)
          throw std::invalid_argument("times/events must match the feature rows");
        ctx.dataset.outcomes.resize(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i)
          ctx.dataset.outcomes[static_cast<std::size_t>(i)] = {
              times[static_cast<std::size_t>(i)], events[static_cast<std::size_t>(i)]};
        ctx.dataset.noise_labels.assign(static_cast<std::size_t>(n), 0);
        ctx.dataset.outcome_labels.assign(static_cast<std::size_t>(n), 0);
        ctx.dataset.combined_labels.assign(static_cast<std::size_t>(n), 0);

        ctx.manifest.dataset_dir = "(in-memory)";
        ctx.manifest.out_dir = "(none)";
        ctx.manifest.scenario = scenario;
        ctx.manifest.k = k;
        ctx.manifest.seed = seed;
        ctx.manifest.embed_width = embed_width;
        ctx.manifest.latent_width = latent_width;
        ctx.manifest.warmup_epochs = warmup_epochs;
        ctx.manifest.finetune_epochs = epochs;
        ctx.manifest.recon_warmup_epochs = warmup_epochs;
        ctx.manifest.recon_finetune_epochs = epochs;
        ctx.manifest.outcome_warmup_epochs = warmup_epochs;
        ctx.manifest.outcome_finetune_epochs = epochs;
        ctx.manifest.finetune_batch_size = batch_size;
        ctx.manifest.normalize_features = normalize_features;

        ctx.cohort = exp::benchmark_cohort(ctx.dataset, ctx.manifest);
        const auto result =
            exp::run_scenario_training(ctx, exp::scenario_from_string(scenario), k, seed);

        py::dict d;
        d["labels"] = result.labels;
        d["q"] = array_from_tensor(result.q);
        std::vector<double> lc;
        for (const auto& e : result.curve) lc.push_back(e.cluster);
        d["cluster_loss_curve"] = lc;
        d["sharp_fraction"] = result.sharp_fraction;
        return d;
      },
      py::arg("features"), py::arg("times"), py::arg("events"), py::arg("scenario") = "combined",
      py::arg("k") = 6, py::arg("seed") = 0, py::arg("embed_width") = 64,
      py::arg("latent_width") = 16, py::arg("warmup_epochs") = 25, py::arg("epochs") = 50,
      py::arg("batch_size") = 256, py::arg("normalize_features") = "per_feature",
      "Train one loss-weight scenario end to end; returns hard labels, soft "
      "assignments, the cluster-loss curve and the sharpness trajectory.");
}
