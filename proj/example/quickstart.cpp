// Generate two synthetic nights, featurize them and classify the windows of
// one night with a k-NN model fit on the other.

#include <cstdio>
#include <vector>

#include "apsense/apsense.hpp"

int main() {
  apsense::PipelineConfig cfg;
  cfg.preprocess.hp_cutoff_hz = 0.5;  // keep the cardiac band on synthetic data

  auto night = [&](const char* id, std::uint64_t seed) {
    apsense::SynthConfig sc;
    sc.subject_id = id;
    sc.duration_s = 1800;
    sc.apnea_events_per_hour = 24;
    sc.seed = seed;
    auto syn = apsense::generate(sc);
    return apsense::prepare_subject(syn.record, syn.events, cfg, 0);
  };
  const auto train = night("train", 1);
  const auto test = night("test", 2);

  std::vector<apsense::FeatureMatrix> feats;
  std::vector<int> labels;
  for (const auto* w : train.retained()) {
    feats.push_back(*w->features);
    labels.push_back(w->label);
  }
  const auto keep = apsense::undersample_indices(labels, 7);
  std::vector<apsense::FeatureMatrix> bal;
  std::vector<int> bal_labels;
  for (auto i : keep) {
    bal.push_back(feats[i]);
    bal_labels.push_back(labels[i]);
  }
  const auto z = apsense::Standardizer::fit(bal);
  std::vector<apsense::FeatureMatrix> zs;
  for (const auto& f : bal) zs.push_back(z.apply(f));
  const auto space = apsense::ReferenceSpace::build(apsense::flatten(zs), apsense::kFeatureSize, bal_labels);

  std::vector<int> pred, truth;
  for (const auto* w : test.retained()) {
    pred.push_back(space.predict(z.apply(*w->features).values, cfg.k));
    truth.push_back(w->label);
  }
  const auto m = apsense::compute_metrics(pred, truth);
  std::printf("windows %zu  accuracy %.2f%%\n", truth.size(), m.accuracy);
  std::printf("sAHI %.2f  pAHI %.2f\n", apsense::sahi(truth), apsense::pahi(pred));
  return 0;
}
