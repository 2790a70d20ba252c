#include "ctpipe/manifest.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "ctpipe/synthgen.hpp"

using namespace ctpipe;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("ctpipe_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

fs::path write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
  return path;
}

const char* kSmallManifest =
    R"({"taxonomy": ["wildebeest", "zebra"]}
{"event_id": "e1", "image_id": "i1", "features": [1.0, 2.0], "empty": false, "species": "zebra", "count": 2}
{"event_id": "e2", "image_id": "i2", "features": [0.5, 0.5], "empty": true}
{"event_id": "e3", "image_id": "i3", "features": [3.0, 4.0], "empty": false, "species": "wildebeest", "count": 30, "attributes": {"standing": true, "moving": true}}
)";

Dataset make_events_dataset(std::size_t n_events, std::size_t n_multi) {
  Taxonomy tax({"a", "b", "c"});
  std::vector<CaptureEvent> events;
  for (std::size_t i = 0; i < n_events; ++i) {
    CaptureEvent e;
    e.event_id = "ev" + std::to_string(i);
    e.label = LabelSet::animal(0, count_to_bin(1));
    if (i < n_multi) e.extra_species = {1};
    e.images.push_back(ImageRecord{"im" + std::to_string(i), e.event_id, {0.0, 0.0}, e.label});
    events.push_back(propagate_event_labels(std::move(e)));
  }
  return Dataset(Taxonomy({"a", "b", "c"}), std::move(events));
}

}  // namespace

TEST(LoadManifest, ParsesSmallmanifest) {
  const auto dir = temp_dir("load_small");
  const auto path = write_text(dir / "m.jsonl", kSmallManifest);

  const Dataset d = load_manifest(path);
  ASSERT_EQ(d.events().size(), 3u);
  EXPECT_EQ(d.n_images(), 3u);
  EXPECT_EQ(d.taxonomy().size(), 2);

  const auto& e1 = d.events()[0];
  EXPECT_FALSE(e1.label.empty);
  EXPECT_EQ(*e1.label.species, 1);  // zebra
  EXPECT_EQ(e1.label.count->index, 1);
  EXPECT_EQ(e1.images[0].label, e1.label);  // propagated

  const auto& e3 = d.events()[2];
  ASSERT_TRUE(e3.label.attributes.has_value());
  EXPECT_TRUE(e3.label.attributes->standing);
  EXPECT_TRUE(e3.label.attributes->moving);
  EXPECT_FALSE(e3.label.attributes->resting);
  EXPECT_EQ(e3.label.count->index, 10);  // 30 -> "11-50"

  EXPECT_EQ(d.stats().n_empty_events, 1u);
}

TEST(LoadManifest, MultiImageEventGroupsContiguousLines) {
  const auto dir = temp_dir("load_group");
  const auto path = write_text(dir / "m.jsonl",
      R"({"taxonomy": ["a"]}
{"event_id": "e1", "image_id": "i1", "features": [1], "empty": false, "species": "a", "count": 1}
{"event_id": "e1", "image_id": "i2", "features": [2], "empty": false, "species": "a", "count": 1}
{"event_id": "e1", "image_id": "i3", "features": [3], "empty": false, "species": "a", "count": 1}
)");
  const Dataset d = load_manifest(path);
  ASSERT_EQ(d.events().size(), 1u);
  EXPECT_EQ(d.events()[0].images.size(), 3u);
}

TEST(LoadManifest, MalformedLineReportsLineNumber) {
  const auto dir = temp_dir("load_bad");
  const auto path = write_text(dir / "m.jsonl",
      "{\"taxonomy\": [\"a\"]}\n"
      "{\"event_id\": \"e1\", \"image_id\": \"i1\", \"features\": [1], \"empty\": true}\n"
      "not json at all\n");
  try {
    load_manifest(path);
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
  }
}

TEST(LoadManifest, UnknownSpeciesIsTaxonomyError) {
  const auto dir = temp_dir("load_species");
  const auto path = write_text(dir / "m.jsonl",
      "{\"taxonomy\": [\"a\"]}\n"
      "{\"event_id\": \"e1\", \"image_id\": \"i1\", \"features\": [1], \"empty\": false, "
      "\"species\": \"mystery\", \"count\": 1}\n");
  try {
    load_manifest(path);
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("unknown species"), std::string::npos) << e.what();
  }
}

TEST(LoadManifest, DuplicateEventIdIsIntegrityError) {
  const auto dir = temp_dir("load_dup");
  const auto path = write_text(dir / "m.jsonl",
      R"({"taxonomy": ["a"]}
{"event_id": "e1", "image_id": "i1", "features": [1], "empty": true}
{"event_id": "e2", "image_id": "i2", "features": [2], "empty": true}
{"event_id": "e1", "image_id": "i3", "features": [3], "empty": true}
)");
  try {
    load_manifest(path);
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("duplicate event_id"), std::string::npos) << e.what();
  }
}

TEST(LoadManifest, DuplicateImageIdRejected) {
  const auto dir = temp_dir("load_dupimg");
  const auto path = write_text(dir / "m.jsonl",
      R"({"taxonomy": ["a"]}
{"event_id": "e1", "image_id": "i1", "features": [1], "empty": true}
{"event_id": "e2", "image_id": "i1", "features": [2], "empty": true}
)");
  EXPECT_THROW(load_manifest(path), DataError);
}

TEST(LoadManifest, ConflictingEventLabelsRejected) {
  const auto dir = temp_dir("load_conflict");
  const auto path = write_text(dir / "m.jsonl",
      R"({"taxonomy": ["a", "b"]}
{"event_id": "e1", "image_id": "i1", "features": [1], "empty": false, "species": "a", "count": 1}
{"event_id": "e1", "image_id": "i2", "features": [2], "empty": false, "species": "b", "count": 1}
)");
  EXPECT_THROW(load_manifest(path), DataError);
}

TEST(LoadManifest, EmptyRecordMustNotCarryLabels) {
  const auto dir = temp_dir("load_emptylabels");
  const auto path = write_text(dir / "m.jsonl",
      R"({"taxonomy": ["a"]}
{"event_id": "e1", "image_id": "i1", "features": [1], "empty": true, "species": "a", "count": 1}
)");
  EXPECT_THROW(load_manifest(path), DataError);
}

TEST(LoadManifest, UnknownFieldsIgnored) {
  const auto dir = temp_dir("load_unknown");
  const auto path = write_text(dir / "m.jsonl",
      R"({"taxonomy": ["a"], "comment": "hi"}
{"event_id": "e1", "image_id": "i1", "features": [1], "empty": true, "camera": "C04"}
)");
  EXPECT_EQ(load_manifest(path).events().size(), 1u);
}

TEST(LoadManifest, FeatureRefLoadsSidecarFile) {
  const auto dir = temp_dir("load_ref");
  write_text(dir / "feat.json", "[1.5, -2.0, 3.25]");
  const auto path = write_text(dir / "m.jsonl",
      R"({"taxonomy": ["a"]}
{"event_id": "e1", "image_id": "i1", "feature_ref": "feat.json", "empty": true}
)");
  const Dataset d = load_manifest(path);
  EXPECT_EQ(d.events()[0].images[0].features, (std::vector<double>{1.5, -2.0, 3.25}));
}

TEST(LoadManifest, SplitHintsParsed) {
  const auto dir = temp_dir("load_hint");
  const auto path = write_text(dir / "m.jsonl",
      R"({"taxonomy": ["a"]}
{"event_id": "e1", "image_id": "i1", "features": [1], "empty": true, "split": "train"}
{"event_id": "e2", "image_id": "i2", "features": [2], "empty": true, "split": "test"}
)");
  const Dataset d = load_manifest(path);
  EXPECT_EQ(d.events()[0].split_hint, SplitHint::train);
  EXPECT_EQ(d.events()[1].split_hint, SplitHint::test);

  const auto split = split_by_hint(d);
  ASSERT_TRUE(split.has_value());
  EXPECT_EQ(split->first.events().size(), 1u);
  EXPECT_EQ(split->second.events().size(), 1u);
}

TEST(LoadManifest, ConflictingSplitHintsRejected) {
  const auto dir = temp_dir("load_hintconflict");
  const auto path = write_text(dir / "m.jsonl",
      R"({"taxonomy": ["a"]}
{"event_id": "e1", "image_id": "i1", "features": [1], "empty": true, "split": "train"}
{"event_id": "e1", "image_id": "i2", "features": [2], "empty": true, "split": "test"}
)");
  EXPECT_THROW(load_manifest(path), DataError);
}

TEST(SplitByHint, AbsentWhenAnyEventUnhinted) {
  const auto dir = temp_dir("load_partial_hint");
  const auto path = write_text(dir / "m.jsonl",
      R"({"taxonomy": ["a"]}
{"event_id": "e1", "image_id": "i1", "features": [1], "empty": true, "split": "train"}
{"event_id": "e2", "image_id": "i2", "features": [2], "empty": true}
)");
  EXPECT_EQ(split_by_hint(load_manifest(path)), std::nullopt);
}

TEST(SaveManifest, RoundTripsSynthDataset) {
  const auto dir = temp_dir("roundtrip");
  SynthConfig cfg;
  cfg.n_classes = 5;
  cfg.feature_dim = 4;
  cfg.n_events = 60;
  cfg.empty_fraction = 0.5;
  cfg.noise_rate = 0.1;
  cfg.images_per_event = {0.2, 0.3, 0.5};
  cfg.seed = 11;

  const Dataset d = generate(cfg);
  save_manifest(d, dir / "m.jsonl");
  const Dataset loaded = load_manifest(dir / "m.jsonl");
  EXPECT_TRUE(d == loaded);
}

TEST(FilterSingleSpecies, RemovesMultiSpeciesEvents) {
  const Dataset d = make_events_dataset(100, 5);
  const FilterResult r = filter_single_species(d);
  EXPECT_EQ(r.dataset.events().size(), 95u);
  EXPECT_EQ(r.removed_events, 5u);
  EXPECT_DOUBLE_EQ(r.removed_fraction, 0.05);
}

TEST(FilterSingleSpecies, IdentityOnCleanAndEmptyDatasets) {
  const Dataset d = make_events_dataset(10, 0);
  const FilterResult r = filter_single_species(d);
  EXPECT_TRUE(r.dataset == d);
  EXPECT_EQ(r.removed_events, 0u);

  const Dataset none(Taxonomy({"a"}), {});
  EXPECT_EQ(filter_single_species(none).dataset.events().size(), 0u);
}

TEST(FilterSingleSpecies, MultiSpeciesManifestFieldParses) {
  const auto dir = temp_dir("multi");
  const auto path = write_text(dir / "m.jsonl",
      R"({"taxonomy": ["a", "b"]}
{"event_id": "e1", "image_id": "i1", "features": [1], "empty": false, "species": ["a", "b"], "count": 2}
{"event_id": "e2", "image_id": "i2", "features": [2], "empty": false, "species": "b", "count": 1}
)");
  const Dataset d = load_manifest(path);
  EXPECT_TRUE(d.events()[0].multi_species());
  EXPECT_EQ(d.stats().n_multi_species_events, 1u);
  const FilterResult r = filter_single_species(d);
  EXPECT_EQ(r.dataset.events().size(), 1u);
  EXPECT_EQ(r.dataset.events()[0].event_id, "e2");

  // multi-species events survive a save/load round trip
  save_manifest(d, dir / "again.jsonl");
  EXPECT_TRUE(load_manifest(dir / "again.jsonl") == d);
}

TEST(SplitByEvent, FractionAndDeterminism) {
  const Dataset d = make_events_dataset(10, 0);
  const SplitSpec spec{0.8, 42};
  const auto [train, test] = split_by_event(d, spec);
  EXPECT_EQ(train.events().size(), 8u);
  EXPECT_EQ(test.events().size(), 2u);

  const auto [train2, test2] = split_by_event(d, spec);
  EXPECT_TRUE(train == train2);
  EXPECT_TRUE(test == test2);
}

TEST(SplitByEvent, PartitionAndEventAtomicity) {
  SynthConfig cfg;
  cfg.n_classes = 4;
  cfg.feature_dim = 3;
  cfg.n_events = 80;
  cfg.empty_fraction = 0.4;
  cfg.images_per_event = {0.3, 0.3, 0.4};
  cfg.seed = 3;
  const Dataset d = generate(cfg);

  const auto [train, test] = split_by_event(d, SplitSpec{0.7, 9});

  std::set<std::string> train_events, test_events, train_images, test_images;
  for (const auto& e : train.events()) {
    train_events.insert(e.event_id);
    for (const auto& img : e.images) train_images.insert(img.image_id);
  }
  for (const auto& e : test.events()) {
    test_events.insert(e.event_id);
    for (const auto& img : e.images) test_images.insert(img.image_id);
  }

  for (const auto& id : train_events) EXPECT_EQ(test_events.count(id), 0u);
  for (const auto& id : train_images) EXPECT_EQ(test_images.count(id), 0u);
  EXPECT_EQ(train_events.size() + test_events.size(), d.events().size());
  EXPECT_EQ(train_images.size() + test_images.size(), d.n_images());
}

TEST(SplitByEvent, CorpusScaleMirror) {
  // 301,400 -> 284,000 train + 17,400 test, run at 1/1000 scale
  const Dataset d = make_events_dataset(301, 0);
  const double fraction = 284000.0 / 301400.0;
  const auto [train, test] = split_by_event(d, SplitSpec{fraction, 7});
  EXPECT_EQ(train.events().size(), 284u);
  EXPECT_EQ(test.events().size(), 17u);
}

TEST(SplitByEvent, TooFewEventsRejected) {
  const Dataset d = make_events_dataset(1, 0);
  EXPECT_THROW(split_by_event(d, SplitSpec{0.5, 0}), DataError);
}

namespace {

// n_empty single-image empty events + n_animal single-image animal events
Dataset empties_dataset(std::size_t n_empty, std::size_t n_animal) {
  std::vector<CaptureEvent> events;
  for (std::size_t i = 0; i < n_empty + n_animal; ++i) {
    CaptureEvent e;
    e.event_id = "ev" + std::to_string(i);
    e.label = i < n_empty ? LabelSet::empty_label() : LabelSet::animal(0, count_to_bin(1));
    e.images.push_back(ImageRecord{"im" + std::to_string(i), e.event_id, {double(i)}, e.label});
    events.push_back(propagate_event_labels(std::move(e)));
  }
  return Dataset(Taxonomy({"a"}), std::move(events));
}

}  // namespace

TEST(BalanceEmpty, EqualizesEmptyAndNonEmptyImages) {
  const Dataset d = empties_dataset(75, 25);
  const BalanceResult r = balance_empty(d, 5);
  EXPECT_FALSE(r.shortfall);
  const auto& s = r.dataset.stats();
  EXPECT_EQ(s.n_empty_images, 25u);
  EXPECT_EQ(s.n_images - s.n_empty_images, 25u);
}

TEST(BalanceEmpty, AlreadyBalancedUnchanged) {
  const Dataset d = empties_dataset(30, 30);
  const BalanceResult r = balance_empty(d, 5);
  EXPECT_TRUE(r.dataset == d);
}

TEST(BalanceEmpty, ShortfallKeepsAllAndWarns) {
  const Dataset d = empties_dataset(10, 25);
  const BalanceResult r = balance_empty(d, 5);
  EXPECT_TRUE(r.shortfall);
  EXPECT_FALSE(r.warning.empty());
  EXPECT_EQ(r.dataset.stats().n_empty_images, 10u);
  EXPECT_EQ(r.dataset.stats().n_images, 35u);
}

TEST(BalanceEmpty, DeterministicUnderSeed) {
  const Dataset d = empties_dataset(50, 20);
  EXPECT_TRUE(balance_empty(d, 9).dataset == balance_empty(d, 9).dataset);
}

TEST(SubsampleEmpty, CapsEmptyPool) {
  const Dataset d = empties_dataset(50, 20);
  const BalanceResult r = subsample_empty(d, 7, 1);
  EXPECT_EQ(r.dataset.stats().n_empty_images, 7u);
  EXPECT_EQ(r.dataset.stats().n_images, 27u);
}

TEST(DatasetStats, RecomputableFromEvents) {
  SynthConfig cfg;
  cfg.n_classes = 3;
  cfg.feature_dim = 2;
  cfg.n_events = 50;
  cfg.empty_fraction = 0.5;
  cfg.seed = 21;
  const Dataset d = generate(cfg);

  std::size_t images = 0, empty_events = 0;
  std::vector<std::size_t> per_class(3, 0);
  for (const auto& e : d.events()) {
    images += e.images.size();
    if (e.label.empty) {
      ++empty_events;
    } else {
      ++per_class[static_cast<std::size_t>(*e.label.species)];
    }
  }
  EXPECT_EQ(d.stats().n_images, images);
  EXPECT_EQ(d.stats().n_empty_events, empty_events);
  EXPECT_EQ(d.stats().events_per_class, per_class);
}
