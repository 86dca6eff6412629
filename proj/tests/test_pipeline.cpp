#include <catch2/catch_amalgamated.hpp>

#include <fstream>
#include <thread>

#include "birdsong/cli_app.hpp"
#include "birdsong/fetch.hpp"
#include "birdsong/pipeline.hpp"
#include "support/synthetic.hpp"

using namespace birdsong;

namespace {

PipelineConfig small_config(const std::filesystem::path& root, const std::string& model_kind,
                            double window_s = 5.0) {
    PipelineConfig cfg = config_from_json(nlohmann::json::object());
    cfg.data_dir = root / "data";
    cfg.cache_dir = root / "cache";
    cfg.output_dir = root / "out";
    cfg.model.kind = model_kind;
    cfg.model.epochs = 2;
    cfg.model.n_trees = 10;
    cfg.seed = 7;
    cfg.split.seed = 7;
    cfg.plans.clear();
    AugmentPlan plan;
    plan.window_s = window_s;
    plan.min_len_s = window_s;
    cfg.plans.push_back(plan);
    return cfg;
}

std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("preprocess caches features, images and clips with the documented layout") {
    synthetic::TempDir tmp("preprocess");
    synthetic::make_corpus(tmp.path / "data", 2, 3, 7.0, 50);
    auto cfg = small_config(tmp.path, "forest");

    const auto summary = cmd_preprocess(cfg);
    CHECK(summary.clips_written == 6);  // 7 s -> one 5 s window each
    CHECK(summary.failures.empty());
    CHECK(summary.per_class.at("whistler") == 3);
    CHECK(summary.per_class.at("pulser") == 3);

    CHECK(std::filesystem::exists(cfg.cache_dir / "features.csv"));
    CHECK(std::filesystem::exists(cfg.cache_dir / "images.csv"));
    // clip cache layout: <cache>/clips/<source_id>/<start_ms>_<tags>.wav
    CHECK(std::filesystem::exists(cfg.cache_dir / "clips" / "whistler_0" / "0_origin.wav"));

    std::size_t pgm_count = 0;
    for (const auto& e : std::filesystem::directory_iterator(cfg.cache_dir / "images"))
        pgm_count += e.path().extension() == ".pgm" ? 1 : 0;
    CHECK(pgm_count == 6);

    // features.csv header matches the export contract
    std::ifstream in(cfg.cache_dir / "features.csv");
    std::string header;
    std::getline(in, header);
    CHECK(header ==
          "clip_id,f0,f1,f2,f3,f4,f5,f6,f7,f8,f9,f10,f11,f12,f13,f14,f15,label");
}

TEST_CASE("preprocess count formula: 100 s recording, 5s origin + 2s stride") {
    synthetic::TempDir tmp("preprocess_counts");
    std::filesystem::create_directories(tmp.path / "data");
    const auto audio = synthetic::species_recording(0, 100.0, 3);
    save_wav(tmp.path / "data" / "long.wav", audio);

    DatasetManifest m;
    RecordingEntry e;
    e.id = "long";
    e.species_label = "whistler";
    e.file_path = (tmp.path / "data" / "long.wav").string();
    e.duration_s = 100.0;
    m.entries.push_back(e);
    m.rebuild_class_table();
    save_manifest_csv(tmp.path / "data" / "manifest.csv", m);

    auto cfg = small_config(tmp.path, "forest");
    cfg.cache_clips = false;
    cfg.plans.clear();
    AugmentPlan plan;
    plan.window_s = 5.0;
    plan.stride_s = 2.0;
    plan.min_len_s = 5.0;
    plan.with_origin = true;
    cfg.plans.push_back(plan);

    const auto summary = cmd_preprocess(cfg);
    CHECK(summary.clips_written == 68);
}

TEST_CASE("preprocess isolates corrupt recordings") {
    synthetic::TempDir tmp("preprocess_corrupt");
    synthetic::make_corpus(tmp.path / "data", 2, 2, 7.0, 51);

    // corrupt one file and extend the manifest with it
    auto manifest = load_manifest(tmp.path / "data" / "manifest.csv");
    const auto bad_path = tmp.path / "data" / "broken.wav";
    std::ofstream bad(bad_path, std::ios::binary);
    bad << "this is not a wav";
    bad.close();
    RecordingEntry e;
    e.id = "broken";
    e.species_label = "whistler";
    e.file_path = bad_path.string();
    manifest.entries.push_back(e);
    manifest.rebuild_class_table();
    save_manifest_csv(tmp.path / "data" / "manifest.csv", manifest);

    auto cfg = small_config(tmp.path, "forest");
    std::ostringstream log;
    const auto summary = cmd_preprocess(cfg, default_recording_loader, log);
    CHECK(summary.clips_written == 4);
    REQUIRE(summary.failures.size() == 1);
    CHECK(summary.failures[0].first == "broken");
    CHECK(log.str().find("1 failures") != std::string::npos);
}

TEST_CASE("empty manifest preprocesses to empty caches") {
    synthetic::TempDir tmp("preprocess_empty");
    std::filesystem::create_directories(tmp.path / "data");
    DatasetManifest m;
    save_manifest_csv(tmp.path / "data" / "manifest.csv", m);
    auto cfg = small_config(tmp.path, "forest");
    const auto summary = cmd_preprocess(cfg);
    CHECK(summary.clips_written == 0);
    CHECK(std::filesystem::exists(cfg.cache_dir / "features.csv"));
}

TEST_CASE("train, evaluate and predict run end to end on the numeric path") {
    synthetic::TempDir tmp("numeric_e2e");
    synthetic::make_corpus(tmp.path / "data", 3, 8, 7.0, 52);
    auto cfg = small_config(tmp.path, "forest");
    cfg.cache_clips = false;
    cmd_preprocess(cfg);

    std::ostringstream log;
    const auto outcome = cmd_train(cfg, log);
    REQUIRE(std::filesystem::exists(outcome.artifact_path));

    const auto eval = cmd_evaluate(cfg, log);
    CHECK(eval.report.accuracy >= 0.0);
    CHECK(eval.report.audio_accuracy.has_value());
    CHECK(std::filesystem::exists(eval.report_json));
    CHECK(std::filesystem::exists(eval.report_txt));
    CHECK(std::filesystem::exists(cfg.output_dir / "confusion.csv"));

    // predict on a training-set recording of an easy class
    const auto predict = cmd_predict(cfg, tmp.path / "data" / "whistler_0.wav", log);
    REQUIRE(predict.ranked.size() == 3);
}

TEST_CASE("five-fold CV evaluates without a trained artifact") {
    synthetic::TempDir tmp("cv");
    synthetic::make_corpus(tmp.path / "data", 2, 6, 7.0, 53);
    auto cfg = small_config(tmp.path, "knn");
    cfg.cache_clips = false;
    cfg.cv_folds = 5;
    cmd_preprocess(cfg);

    std::ostringstream log;
    const auto eval = cmd_evaluate(cfg, log);
    CHECK(eval.report.accuracy > 0.0);

    // paper-mode (ungrouped) also runs
    cfg.paper_mode = true;
    const auto leaky = cmd_evaluate(cfg, log);
    CHECK(leaky.report.accuracy >= 0.0);
}

TEST_CASE("unknown model kinds fail without writing an artifact") {
    synthetic::TempDir tmp("unknown_kind");
    synthetic::make_corpus(tmp.path / "data", 2, 3, 7.0, 54);
    auto cfg = small_config(tmp.path, "svm");
    cmd_preprocess(cfg);
    CHECK_THROWS_AS(cmd_train(cfg), ParseError);
    CHECK_FALSE(std::filesystem::exists(cfg.output_dir / "model.bsng"));
}

TEST_CASE("evaluate without an artifact reports a clear error") {
    synthetic::TempDir tmp("missing_artifact");
    synthetic::make_corpus(tmp.path / "data", 2, 3, 7.0, 55);
    auto cfg = small_config(tmp.path, "forest");
    cmd_preprocess(cfg);
    CHECK_THROWS_WITH(cmd_evaluate(cfg), Catch::Matchers::ContainsSubstring("run train first"));
}

TEST_CASE("evaluate with an all-correct stub model reports accuracy 1") {
    synthetic::TempDir tmp("stub_model");
    synthetic::make_corpus(tmp.path / "data", 2, 8, 7.0, 56);
    auto cfg = small_config(tmp.path, "knn");
    cfg.cache_clips = false;
    cmd_preprocess(cfg);

    // a 1-NN trained on the full cache classifies its own clips perfectly
    const auto manifest = load_manifest(cfg.manifest());
    const auto cache = load_feature_cache(cfg, manifest.class_table);
    NumericSet all;
    all.items = cache.points;
    all.labels = cache.labels;
    ModelArtifact artifact;
    artifact.kind = ModelKind::knn;
    artifact.class_table = manifest.class_table;
    artifact.hyper_params = {{"kind", "knn"}, {"k", 1}};
    artifact.model = knn_fit(all, 1, static_cast<int>(manifest.class_table.size()));
    std::filesystem::create_directories(cfg.output_dir);
    save_model_file(cfg.output_dir / "model.bsng", artifact);

    std::ostringstream log;
    const auto eval = cmd_evaluate(cfg, log);
    CHECK(eval.report.accuracy == 1.0);
    CHECK(eval.report.audio_accuracy.value() == 1.0);
}

TEST_CASE("cnn pipeline trains, saves history and evaluates") {
    synthetic::TempDir tmp("cnn_pipeline");
    synthetic::make_corpus(tmp.path / "data", 2, 8, 7.0, 57);
    auto cfg = small_config(tmp.path, "cnn");
    cfg.cache_clips = false;
    cfg.model.epochs = 2;
    cfg.model.batch_size = 4;
    cmd_preprocess(cfg);

    std::ostringstream log;
    const auto outcome = cmd_train(cfg, log);
    REQUIRE(outcome.history.has_value());
    CHECK(std::filesystem::exists(cfg.output_dir / "history.json"));
    CHECK(std::filesystem::exists(outcome.artifact_path));

    const auto eval = cmd_evaluate(cfg, log);
    CHECK(eval.report.confusion.size() == 2);
}

TEST_CASE("ablation grid produces one row per plan and survives failures") {
    synthetic::TempDir tmp("ablate");
    synthetic::make_corpus(tmp.path / "data", 2, 8, 7.0, 58);
    auto cfg = small_config(tmp.path, "cnn");
    cfg.model.epochs = 1;
    cfg.model.batch_size = 4;

    AugmentPlan second = cfg.plans[0];
    second.transforms.gaussian = true;
    second.transforms.highpass = true;
    cfg.plans.push_back(second);

    // a plan that yields nothing: window longer than every recording
    AugmentPlan empty_plan;
    empty_plan.window_s = 60.0;
    empty_plan.min_len_s = 60.0;
    cfg.plans.push_back(empty_plan);

    std::ostringstream log;
    const auto rows = cmd_ablate(cfg, default_recording_loader, log);
    REQUIRE(rows.size() == 3);
    CHECK_FALSE(rows[0].failed);
    CHECK_FALSE(rows[1].failed);
    CHECK(rows[2].failed);
    CHECK(rows[0].image_count > 0);
    CHECK(std::filesystem::exists(cfg.output_dir / "ablation.json"));

    // identical split, so both working rows saw the same recordings
    CHECK(rows[0].image_count == rows[1].image_count);
}

TEST_CASE("preprocess output is byte-reproducible under a fixed seed") {
    synthetic::TempDir tmp("repro");
    synthetic::make_corpus(tmp.path / "data", 2, 3, 7.0, 59);

    auto cfg1 = small_config(tmp.path, "forest");
    cfg1.cache_dir = tmp.path / "cache1";
    cfg1.plans[0].transforms.gaussian = true;
    cmd_preprocess(cfg1);

    auto cfg2 = cfg1;
    cfg2.cache_dir = tmp.path / "cache2";
    cmd_preprocess(cfg2);

    CHECK(read_file(cfg1.cache_dir / "features.csv") ==
          read_file(cfg2.cache_dir / "features.csv"));
}

// --- archive fetch against a local fixture server ---------------------------

namespace {

struct FixtureServer {
    httplib::Server server;
    std::thread thread;
    int port = 0;
    std::atomic<int> api_hits{0};

    FixtureServer() {
        const auto wav_bytes = encode_wav16(synthetic::tone(2000.0, 1.0));
        const std::string wav_body(wav_bytes.begin(), wav_bytes.end());

        server.Get("/api/2/recordings", [this](const httplib::Request& req,
                                               httplib::Response& res) {
            ++api_hits;
            nlohmann::json body;
            body["numPages"] = 1;
            body["page"] = 1;
            body["recordings"] = nlohmann::json::array();
            if (req.get_param_value("query") == "Grey Butcherbird") {
                body["recordings"].push_back({{"id", "xc1"},
                                              {"en", "Grey Butcherbird"},
                                              {"file", "/files/xc1.wav"},
                                              {"file-name", "XC1.wav"},
                                              {"type", "call"},
                                              {"length", "0:45"},
                                              {"also", {"Noisy Miner"}}});
                body["recordings"].push_back({{"id", "xc2"},
                                              {"en", "Grey Butcherbird"},
                                              {"file", "/files/xc2.wav"},
                                              {"file-name", "XC2.wav"},
                                              {"type", "song"},
                                              {"length", "1:02"},
                                              {"also", nlohmann::json::array()}});
            }
            res.set_content(body.dump(), "application/json");
        });
        server.Get("/files/xc1.wav", [wav_body](const httplib::Request&, httplib::Response& res) {
            res.set_content(wav_body, "audio/wav");
        });
        server.Get("/files/xc2.wav", [wav_body](const httplib::Request&, httplib::Response& res) {
            res.set_content(wav_body, "audio/wav");
        });
        server.Get("/broken/api/2/recordings",
                   [](const httplib::Request&, httplib::Response& res) {
                       res.set_content("{\"unexpected\": true}", "application/json");
                   });

        port = server.bind_to_any_port("127.0.0.1");
        thread = std::thread([this] { server.listen_after_bind(); });
        server.wait_until_ready();
    }

    ~FixtureServer() {
        server.stop();
        thread.join();
    }

    std::string base_url() const { return "http://127.0.0.1:" + std::to_string(port); }
};

}  // namespace

TEST_CASE("fetch_recordings downloads, indexes and stays idempotent") {
    FixtureServer fixture;
    synthetic::TempDir tmp("fetch");
    const auto manifest_path = tmp.path / "manifest.csv";

    FetchOptions opts;
    opts.base_url = fixture.base_url();
    opts.rate_limit_ms = 5;
    opts.limit = 10;

    SECTION("limit 0 is a no-op that touches nothing") {
        opts.limit = 0;
        const auto result = fetch_recordings("Grey Butcherbird", tmp.path, manifest_path, opts);
        CHECK(result.downloaded.empty());
        CHECK_FALSE(std::filesystem::exists(manifest_path));
        CHECK(fixture.api_hits == 0);
    }

    SECTION("two mocked records become two files and two manifest rows") {
        const auto result = fetch_recordings("Grey Butcherbird", tmp.path, manifest_path, opts);
        REQUIRE(result.downloaded.size() == 2);
        CHECK(std::filesystem::exists(tmp.path / "xc1.wav"));
        CHECK(std::filesystem::exists(tmp.path / "xc2.wav"));

        const auto manifest = load_manifest(manifest_path);
        REQUIRE(manifest.entries.size() == 2);
        CHECK(manifest.entries[0].species_label == "Grey Butcherbird");
        CHECK(manifest.entries[0].category == Category::call);
        CHECK(manifest.entries[0].duration_s == Catch::Approx(45.0));
        CHECK(manifest.entries[0].secondary_labels ==
              std::vector<std::string>{"Noisy Miner"});
        CHECK(manifest.entries[1].category == Category::song);

        // the downloaded file decodes
        const auto audio = load_wav(tmp.path / "xc1.wav");
        CHECK(audio.sample_rate == 22050);

        // repeating the fetch downloads nothing new
        const auto again = fetch_recordings("Grey Butcherbird", tmp.path, manifest_path, opts);
        CHECK(again.downloaded.empty());
        CHECK(again.skipped == 2);
        CHECK(load_manifest(manifest_path).entries.size() == 2);
    }

    SECTION("a schema change raises ApiSchemaChanged") {
        opts.base_url = fixture.base_url() + "/broken";
        CHECK_THROWS_AS(fetch_recordings("x", tmp.path, manifest_path, opts), ApiSchemaChanged);
    }
}

TEST_CASE("fetch against an unreachable host leaves the manifest untouched") {
    synthetic::TempDir tmp("fetch_down");
    FetchOptions opts;
    opts.base_url = "http://127.0.0.1:1";  // nothing listens there
    opts.rate_limit_ms = 0;
    opts.timeout_s = 1;
    const auto manifest_path = tmp.path / "manifest.csv";
    CHECK_THROWS_AS(fetch_recordings("x", tmp.path, manifest_path, opts), NetworkError);
    CHECK_FALSE(std::filesystem::exists(manifest_path));
}

// --- CLI surface -------------------------------------------------------------

TEST_CASE("cli exit codes follow the contract") {
    synthetic::TempDir tmp("cli");
    synthetic::make_corpus(tmp.path / "data", 2, 8, 7.0, 60);

    nlohmann::json config{{"paths",
                           {{"data_dir", (tmp.path / "data").string()},
                            {"cache_dir", (tmp.path / "cache").string()},
                            {"output_dir", (tmp.path / "out").string()}}},
                          {"model", {{"kind", "forest"}, {"n_trees", 5}}},
                          {"plans", {{{"window_s", 5.0}, {"min_len_s", 5.0}}}},
                          {"cache_clips", false},
                          {"seed", 5}};
    const auto config_path = tmp.path / "config.json";
    std::ofstream(config_path) << config.dump();

    std::ostringstream out, err;

    SECTION("preprocess then train then evaluate all exit 0") {
        CHECK(cli::run({"--config", config_path.string(), "preprocess"}, out, err) == 0);
        CHECK(cli::run({"--config", config_path.string(), "train"}, out, err) == 0);
        CHECK(cli::run({"--config", config_path.string(), "evaluate"}, out, err) == 0);
    }
    SECTION("evaluate without an artifact exits 1") {
        CHECK(cli::run({"--config", config_path.string(), "preprocess"}, out, err) == 0);
        CHECK(cli::run({"--config", config_path.string(), "evaluate"}, out, err) == 1);
        CHECK(err.str().find("run train first") != std::string::npos);
    }
    SECTION("a bad config exits 1") {
        const auto bad = tmp.path / "bad.json";
        std::ofstream(bad) << "{ not json";
        CHECK(cli::run({"--config", bad.string(), "preprocess"}, out, err) == 1);
    }
    SECTION("unknown model kind in config exits 1 and writes nothing") {
        nlohmann::json bad_config = config;
        bad_config["model"]["kind"] = "svm";
        const auto bad = tmp.path / "bad_kind.json";
        std::ofstream(bad) << bad_config.dump();
        CHECK(cli::run({"--config", bad.string(), "preprocess"}, out, err) == 0);
        CHECK(cli::run({"--config", bad.string(), "train"}, out, err) == 1);
        CHECK_FALSE(std::filesystem::exists(tmp.path / "out" / "model.bsng"));
    }
    SECTION("fetch with limit 0 is a successful no-op") {
        CHECK(cli::run({"--config", config_path.string(), "fetch", "--species", "x", "--limit",
                        "0"},
                       out, err) == 0);
    }
    SECTION("fetch against an unreachable host exits 2") {
        nlohmann::json net_config = config;
        net_config["fetch"] = {{"base_url", "http://127.0.0.1:1"}, {"rate_limit_ms", 0}};
        const auto net = tmp.path / "net.json";
        std::ofstream(net) << net_config.dump();
        CHECK(cli::run({"--config", net.string(), "fetch", "--species", "x", "--limit", "1"},
                       out, err) == 2);
    }
    SECTION("help exits 0") {
        CHECK(cli::run({"--help"}, out, err) == 0);
    }
}

TEST_CASE("BIRDSONG_CACHE environment override wins") {
    synthetic::TempDir tmp("env_cache");
    setenv("BIRDSONG_CACHE", (tmp.path / "env_cache_dir").c_str(), 1);
    const auto cfg = config_from_json(nlohmann::json::object());
    unsetenv("BIRDSONG_CACHE");
    CHECK(cfg.cache_dir == tmp.path / "env_cache_dir");
}
