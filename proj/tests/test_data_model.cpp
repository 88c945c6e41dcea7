#include <set>

#include "doctest.h"
#include "helpers.hpp"
#include "vipeeg/data_model.hpp"

using namespace vipeeg;

TEST_CASE("double banana montage is valid and symmetric") {
  const auto m = standard_double_banana();
  CHECK_NOTHROW(validate_montage(m));
  REQUIRE(m.pairs.size() == 16);
  CHECK(m.channel_name(0) == "Fp1-F7");
  for (int c = 0; c < 16; ++c) {
    CHECK(homologous_channel(homologous_channel(c)) == c);
    CHECK(is_left_hemisphere(c) != is_left_hemisphere(homologous_channel(c)));
  }
}

TEST_CASE("montage validation rejects bad labels and shapes") {
  auto m = standard_double_banana();
  m.pairs[3].anode = "Xx9";
  CHECK_THROWS_AS(validate_montage(m), ConfigError);
  m = standard_double_banana();
  m.pairs.pop_back();
  CHECK_THROWS_AS(validate_montage(m), ConfigError);
  CHECK(is_10_20_label("Cz"));
  CHECK_FALSE(is_10_20_label("Q1"));
}

TEST_CASE("apply_montage subtracts cathode from anode") {
  const auto m = standard_double_banana();
  std::set<std::string> names;
  for (const auto& p : m.pairs) names.insert({p.anode, p.cathode});
  std::vector<std::string> electrodes(names.begin(), names.end());
  Rng rng(3);
  Matrix ref(electrodes.size(), 7);
  for (double& v : ref.data()) v = normal(rng);
  const auto bip = apply_montage(ref, electrodes, m);
  REQUIRE(bip.rows() == 16);
  auto idx = [&](const std::string& n) {
    return static_cast<std::size_t>(std::find(electrodes.begin(), electrodes.end(), n) - electrodes.begin());
  };
  for (std::size_t c = 0; c < 16; ++c)
    for (std::size_t t = 0; t < 7; ++t)
      CHECK(bip(c, t) == ref(idx(m.pairs[c].anode), t) - ref(idx(m.pairs[c].cathode), t));
  electrodes.pop_back();
  Matrix short_ref(electrodes.size(), 7);
  CHECK_THROWS_AS(apply_montage(short_ref, electrodes, m), DataError);
}

TEST_CASE("soft labels and consensus") {
  AnnotationSet a;
  a.votes = {3, 1, 0, 0, 0, 0};
  const auto y = soft_label(a);
  CHECK(y.p[0] == doctest::Approx(0.75));
  CHECK(y.p[1] == doctest::Approx(0.25));
  CHECK(consensus(a) == ClassId::Seizure);
  a.votes = {0, 2, 0, 2, 0, 0};
  CHECK(consensus(a) == ClassId::LPD);
  AnnotationSet empty;
  CHECK_THROWS_AS(soft_label(empty), DataError);
}

TEST_CASE("manifest round trip and validation") {
  const auto ds = generate(testutil::small_synth());
  const auto dir = testutil::scratch_dir("manifest");
  write_manifest_csv(dir / "m.csv", ds.manifest, "note");
  const auto back = read_manifest_csv(dir / "m.csv");
  REQUIRE(back.entries.size() == ds.manifest.entries.size());
  for (std::size_t i = 0; i < back.entries.size(); ++i) {
    CHECK(back.entries[i].segment_id == ds.manifest.entries[i].segment_id);
    CHECK(back.entries[i].votes == ds.manifest.entries[i].votes);
    CHECK(back.entries[i].subset == ds.manifest.entries[i].subset);
  }
  CHECK(testutil::slurp(dir / "m.csv").rfind("# note\n", 0) == 0);

  auto dup = ds.manifest;
  dup.entries[1].segment_id = dup.entries[0].segment_id;
  CHECK_THROWS_AS(validate_manifest(dup), DataError);
  auto split = ds.manifest;
  split.entries[1].recording_id = split.entries[0].recording_id;
  split.entries[1].patient_id = "P9999";
  CHECK_THROWS_AS(validate_manifest(split), DataError);
  CHECK_THROWS_AS(read_manifest_csv(dir / "missing.csv"), DataError);
}

TEST_CASE("signal files round trip at float32 precision") {
  const auto ds = generate(testutil::small_synth(2, 1));
  const auto dir = testutil::scratch_dir("signal");
  write_dataset(dir, ds);
  const auto seg = load_bipolar_segment(dir / ds.manifest.entries[0].path);
  REQUIRE(seg.samples.rows() == ds.segments[0].samples.rows());
  REQUIRE(seg.samples.cols() == ds.segments[0].samples.cols());
  for (std::size_t i = 0; i < seg.samples.data().size(); ++i)
    CHECK(seg.samples.data()[i] == static_cast<double>(static_cast<float>(ds.segments[0].samples.data()[i])));
  CHECK(seg.patient_id == ds.segments[0].patient_id);
  std::ofstream(dir / "bad.bin") << "not a signal\n";
  CHECK_THROWS_AS(read_signal(dir / "bad.bin"), DataError);
}

TEST_CASE("folds keep patients together and balance counts") {
  const auto ds = generate(testutil::small_synth(13, 3));
  for (auto balance : {FoldBalance::Patients, FoldBalance::Segments}) {
    const auto fa = split_folds(ds.manifest, 5, 7, balance);
    std::vector<int> count(5, 0);
    for (const auto& p : ds.manifest.patients()) ++count[static_cast<std::size_t>(fa.fold_of(p))];
    CHECK(*std::max_element(count.begin(), count.end()) - *std::min_element(count.begin(), count.end()) <= 1);
    const auto again = split_folds(ds.manifest, 5, 7, balance);
    CHECK(again.fold_of_patient == fa.fold_of_patient);
  }
  CHECK_THROWS_AS(split_folds(ds.manifest, 14, 0), DataError);
  CHECK_THROWS_AS(split_folds(ds.manifest, 1, 0), ConfigError);
}

TEST_CASE("summary counts consensus classes per subset") {
  const auto ds = generate(testutil::small_synth(5, 6));
  const auto t = summarize(ds.manifest);
  REQUIRE(t.columns.size() == 3);
  std::array<std::size_t, kNumClasses> whole{};
  std::size_t high = 0;
  for (const auto& e : ds.manifest.entries) {
    ++whole[static_cast<std::size_t>(index_of(consensus(e.votes)))];
    high += e.subset == Subset::High;
  }
  CHECK(t.columns[0].counts == whole);
  CHECK(t.columns[0].segments == 30);
  CHECK(t.columns[2].segments == high);
  CHECK(t.columns[1].segments + t.columns[2].segments == 30);
  CHECK(format_summary(t).find("Seizure") != std::string::npos);
}
