#include <catch2/catch_amalgamated.hpp>

#include <set>

#include "birdsong/evaluate.hpp"
#include "birdsong/rng.hpp"

using namespace birdsong;

namespace {

DatasetManifest uniform_manifest(std::size_t n_classes, std::size_t per_class) {
    DatasetManifest m;
    for (std::size_t c = 0; c < n_classes; ++c)
        for (std::size_t r = 0; r < per_class; ++r) {
            RecordingEntry e;
            e.id = "c" + std::to_string(c) + "_r" + std::to_string(r);
            e.species_label = "species" + std::to_string(c);
            m.entries.push_back(e);
        }
    m.rebuild_class_table();
    return m;
}

Matrix random_predictions(std::size_t n, std::size_t classes, Rng& rng) {
    Matrix m(n, classes, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        double sum = 0.0;
        for (std::size_t c = 0; c < classes; ++c) {
            m(i, c) = rng.next_double() + 1e-9;
            sum += m(i, c);
        }
        for (std::size_t c = 0; c < classes; ++c) m(i, c) /= sum;
    }
    return m;
}

}  // namespace

TEST_CASE("split_dataset follows exact ratios on 10 recordings") {
    const auto manifest = uniform_manifest(1, 10);
    SplitSpec spec;
    spec.seed = 4;
    const auto parts = split_dataset(manifest, spec);
    CHECK(parts.train.entries.size() == 8);
    CHECK(parts.val.entries.size() == 1);
    CHECK(parts.test.entries.size() == 1);
}

TEST_CASE("split_dataset with ratios (1,0,0) puts everything in train") {
    const auto manifest = uniform_manifest(3, 4);
    SplitSpec spec;
    spec.train = 1.0;
    spec.val = 0.0;
    spec.test = 0.0;
    const auto parts = split_dataset(manifest, spec);
    CHECK(parts.train.entries.size() == 12);
    CHECK(parts.val.entries.empty());
    CHECK(parts.test.entries.empty());
}

TEST_CASE("split_dataset is stratified, exhaustive and deterministic") {
    const auto manifest = uniform_manifest(3, 10);
    SplitSpec spec;
    spec.seed = 11;
    const auto parts = split_dataset(manifest, spec);

    std::set<std::string> seen;
    for (const auto* part : {&parts.train, &parts.val, &parts.test})
        for (const auto& e : part->entries) REQUIRE(seen.insert(e.id).second);
    CHECK(seen.size() == 30);

    // per-class ratios hold exactly for 10 recordings each
    for (std::size_t c = 0; c < 3; ++c) {
        const std::string label = "species" + std::to_string(c);
        auto count = [&](const DatasetManifest& m) {
            std::size_t n = 0;
            for (const auto& e : m.entries)
                if (e.species_label == label) ++n;
            return n;
        };
        CHECK(count(parts.train) == 8);
        CHECK(count(parts.val) == 1);
        CHECK(count(parts.test) == 1);
    }

    const auto again = split_dataset(manifest, spec);
    REQUIRE(again.train.entries.size() == parts.train.entries.size());
    for (std::size_t i = 0; i < parts.train.entries.size(); ++i)
        REQUIRE(again.train.entries[i].id == parts.train.entries[i].id);
}

TEST_CASE("small classes are reported and placed train-first") {
    auto manifest = uniform_manifest(1, 10);
    RecordingEntry rare;
    rare.id = "rare_1";
    rare.species_label = "rare";
    manifest.entries.push_back(rare);
    manifest.rebuild_class_table();

    SplitSpec spec;
    spec.seed = 3;
    const auto parts = split_dataset(manifest, spec);
    REQUIRE_FALSE(parts.warnings.empty());
    bool in_train = false;
    for (const auto& e : parts.train.entries) in_train |= e.id == "rare_1";
    CHECK(in_train);
}

TEST_CASE("grouped splitting keeps all clips of a recording together") {
    // 3 recordings, clips spread over them
    std::vector<int> labels{0, 0, 0, 0, 1, 1, 1, 1};
    std::vector<std::string> groups{"r0", "r0", "r1", "r1", "r2", "r2", "r3", "r3"};
    SplitSpec spec;
    spec.train = 0.5;
    spec.val = 0.25;
    spec.test = 0.25;
    spec.seed = 7;
    const auto idx = split_indices(labels, groups, spec);

    auto partition_of = [&](std::size_t item) {
        if (std::find(idx.train.begin(), idx.train.end(), item) != idx.train.end()) return 0;
        if (std::find(idx.val.begin(), idx.val.end(), item) != idx.val.end()) return 1;
        return 2;
    };
    for (std::size_t i = 0; i < labels.size(); i += 2)
        REQUIRE(partition_of(i) == partition_of(i + 1));
}

TEST_CASE("kfold partitions items with near-equal folds") {
    std::vector<int> labels(10, 0);
    std::vector<std::string> groups;
    for (int i = 0; i < 10; ++i) groups.push_back("g" + std::to_string(i));

    SECTION("10 items, 5 folds of 2") {
        const auto folds = kfold(labels, groups, 5, 3);
        REQUIRE(folds.size() == 5);
        std::set<std::size_t> tested;
        for (const auto& [train, test] : folds) {
            CHECK(test.size() == 2);
            CHECK(train.size() == 8);
            for (std::size_t i : test) REQUIRE(tested.insert(i).second);
            for (std::size_t i : train)
                REQUIRE(std::find(test.begin(), test.end(), i) == test.end());
        }
        CHECK(tested.size() == 10);
    }
    SECTION("k equal to item count is leave-one-out") {
        const auto folds = kfold(labels, groups, 10, 3);
        for (const auto& [train, test] : folds) {
            CHECK(test.size() == 1);
            CHECK(train.size() == 9);
        }
    }
    SECTION("too many folds") {
        CHECK_THROWS_AS(kfold(labels, groups, 11, 3), TooFewItems);
    }
}

TEST_CASE("kfold respects recording groups") {
    std::vector<int> labels(12, 0);
    std::vector<std::string> groups;
    for (int i = 0; i < 12; ++i) groups.push_back("rec" + std::to_string(i / 3));

    const auto folds = kfold(labels, groups, 2, 5);
    for (const auto& [train, test] : folds) {
        std::set<std::string> train_groups, test_groups;
        for (std::size_t i : train) train_groups.insert(groups[i]);
        for (std::size_t i : test) test_groups.insert(groups[i]);
        for (const auto& g : test_groups) REQUIRE_FALSE(train_groups.count(g));
    }
}

TEST_CASE("compute_metrics on all-correct predictions") {
    Matrix preds(4, 3, 0.0);
    std::vector<int> labels{0, 1, 2, 1};
    for (std::size_t i = 0; i < 4; ++i) preds(i, static_cast<std::size_t>(labels[i])) = 1.0;
    const auto report = compute_metrics(preds, labels);
    CHECK(report.accuracy == 1.0);
    CHECK(report.macro_precision == 1.0);
    CHECK(report.macro_recall == 1.0);
    CHECK(report.macro_f1 == 1.0);
    CHECK(report.top_k_accuracy.at(1) == 1.0);
}

TEST_CASE("top-k rule: true class ranked 4th fails top-3, passes top-5") {
    Matrix preds(1, 6, 0.0);
    preds(0, 0) = 0.3;
    preds(0, 1) = 0.25;
    preds(0, 2) = 0.2;
    preds(0, 3) = 0.15;  // the true class, ranked 4th
    preds(0, 4) = 0.07;
    preds(0, 5) = 0.03;
    const auto report = compute_metrics(preds, {3});
    CHECK(report.top_k_accuracy.at(3) == 0.0);
    CHECK(report.top_k_accuracy.at(5) == 1.0);
}

TEST_CASE("hand-built confusion matrix oracle") {
    // confusion [[2,1,0],[0,2,0],[1,0,1]] -> rows true, cols predicted
    // sample list realizing it:
    std::vector<int> labels{0, 0, 0, 1, 1, 2, 2};
    std::vector<int> predicted{0, 0, 1, 1, 1, 0, 2};
    Matrix preds(labels.size(), 3, 0.0);
    for (std::size_t i = 0; i < labels.size(); ++i)
        preds(i, static_cast<std::size_t>(predicted[i])) = 1.0;

    const auto report = compute_metrics(preds, labels);
    CHECK(report.accuracy == Catch::Approx(5.0 / 7.0));
    REQUIRE(report.confusion ==
            std::vector<std::vector<std::size_t>>{{2, 1, 0}, {0, 2, 0}, {1, 0, 1}});
    // hand arithmetic: precision = TP / column sums, recall = TP / row sums
    CHECK(report.precision[0] == Catch::Approx(2.0 / 3.0));
    CHECK(report.precision[1] == Catch::Approx(2.0 / 3.0));
    CHECK(report.precision[2] == Catch::Approx(1.0));
    CHECK(report.recall[0] == Catch::Approx(2.0 / 3.0));
    CHECK(report.recall[1] == Catch::Approx(1.0));
    CHECK(report.recall[2] == Catch::Approx(1.0 / 2.0));
    CHECK(report.macro_f1 ==
          Catch::Approx((2.0 / 3.0 + 4.0 / 5.0 + 2.0 / 3.0) / 3.0));
}

TEST_CASE("undefined precision counts as zero in the macro mean") {
    Matrix preds(2, 3, 0.0);
    preds(0, 0) = 1.0;
    preds(1, 0) = 1.0;  // class 2 never predicted, class 1 never true
    const auto report = compute_metrics(preds, {0, 2});
    CHECK(report.precision[2] == 0.0);
    CHECK(report.macro_precision == Catch::Approx((0.5 + 0.0 + 0.0) / 3.0));
}

TEST_CASE("top-k accuracy is monotone in k and saturates at 1") {
    Rng rng(15);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t classes = 2 + rng.next_below(8);
        const std::size_t n = 1 + rng.next_below(30);
        const auto preds = random_predictions(n, classes, rng);
        std::vector<int> labels(n);
        for (auto& l : labels) l = static_cast<int>(rng.next_below(classes));

        std::vector<std::size_t> ks;
        for (std::size_t k = 1; k <= classes; ++k) ks.push_back(k);
        const auto report = compute_metrics(preds, labels, ks);

        double prev = 0.0;
        for (std::size_t k = 1; k <= classes; ++k) {
            const double v = report.top_k_accuracy.at(k);
            REQUIRE(v >= prev);
            prev = v;
        }
        REQUIRE(report.top_k_accuracy.at(classes) == 1.0);
    }
}

TEST_CASE("length mismatches are rejected") {
    Matrix preds(3, 2, 0.5);
    CHECK_THROWS_AS(compute_metrics(preds, {0, 1}), LengthMismatch);
}

TEST_CASE("vote_group majority and probability modes") {
    SECTION("majority [A, A, B] -> A") {
        const auto cls = vote_group({{0.9, 0.1}, {0.8, 0.2}, {0.2, 0.8}}, VoteMode::majority);
        CHECK(cls == 0);
    }
    SECTION("probability mode sums the vectors") {
        const auto cls =
            vote_group({{0.6, 0.4}, {0.1, 0.9}}, VoteMode::probability);
        CHECK(cls == 1);  // sums: 0.7 vs 1.3
    }
    SECTION("majority tie falls back to summed probabilities") {
        // one argmax vote each; sums favour A (1.1 vs 0.9)
        const auto cls = vote_group({{0.9, 0.1}, {0.2, 0.8}}, VoteMode::majority);
        CHECK(cls == 0);
    }
    SECTION("empty group throws") {
        CHECK_THROWS_AS(vote_group({}, VoteMode::majority), EmptyGroup);
    }
}

TEST_CASE("majority tie with probability sums favouring B picks B") {
    // argmax votes: A, B (tie); sums: A = 0.55 + 0.1 = 0.65, B = 0.45 + 0.9 = 1.35
    const auto cls = vote_group({{0.55, 0.45}, {0.1, 0.9}}, VoteMode::majority);
    CHECK(cls == 1);
}

TEST_CASE("vote_audio with one clip per recording reproduces clip argmax") {
    std::vector<ClipPrediction> clips;
    clips.push_back({"r1", {0.2, 0.8}});
    clips.push_back({"r2", {0.7, 0.3}});
    const auto verdicts = vote_audio(clips, VoteMode::majority);
    CHECK(verdicts.at("r1") == 1);
    CHECK(verdicts.at("r2") == 0);
}

TEST_CASE("vote_audio is invariant to clip order within a recording") {
    Rng rng(8);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t classes = 2 + rng.next_below(5);
        const std::size_t n_clips = 1 + rng.next_below(8);
        std::vector<ClipPrediction> clips;
        for (std::size_t i = 0; i < n_clips; ++i) {
            ClipPrediction p;
            p.recording_id = "rec";
            double sum = 0.0;
            p.probs.resize(classes);
            for (auto& v : p.probs) {
                v = rng.next_double() + 1e-9;
                sum += v;
            }
            for (auto& v : p.probs) v /= sum;
            clips.push_back(std::move(p));
        }
        const auto mode = trial % 2 == 0 ? VoteMode::majority : VoteMode::probability;
        const auto base = vote_audio(clips, mode).at("rec");

        // a deterministic shuffle of the clip order
        for (std::size_t i = clips.size(); i > 1; --i)
            std::swap(clips[i - 1], clips[static_cast<std::size_t>(rng.next_below(i))]);
        REQUIRE(vote_audio(clips, mode).at("rec") == base);
    }
}

TEST_CASE("metrics report serializes to JSON with all fields") {
    Matrix preds(2, 2, 0.0);
    preds(0, 0) = 1.0;
    preds(1, 1) = 1.0;
    auto report = compute_metrics(preds, {0, 1});
    report.audio_accuracy = 0.5;
    const auto j = report.to_json();
    CHECK(j["accuracy"] == 1.0);
    CHECK(j["audio_accuracy"] == 0.5);
    CHECK(j.contains("confusion"));
    CHECK(j.contains("top_k_accuracy"));
}
