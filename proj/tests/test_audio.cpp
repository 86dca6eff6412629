#include <catch2/catch_amalgamated.hpp>

#include "birdsong/audio.hpp"
#include "birdsong/dsp.hpp"
#include "birdsong/manifest.hpp"
#include "birdsong/rng.hpp"
#include "support/synthetic.hpp"

using namespace birdsong;

namespace {

std::vector<std::uint8_t> pcm16_wav(const std::vector<std::int16_t>& samples, int sr,
                                    int channels) {
    AudioBuffer buf;
    buf.sample_rate = sr;
    buf.channels = channels;
    for (std::int16_t s : samples) buf.samples.push_back(static_cast<double>(s) / 32768.0);
    return encode_wav16(buf);
}

}  // namespace

TEST_CASE("decode_wav scales PCM16 by 1/32768") {
    const auto bytes = pcm16_wav({32767, 0, -32768}, 22050, 1);
    const auto buf = decode_wav(bytes);
    REQUIRE(buf.sample_rate == 22050);
    REQUIRE(buf.channels == 1);
    REQUIRE(buf.samples.size() == 3);
    CHECK(buf.samples[0] == Catch::Approx(32767.0 / 32768.0));
    CHECK(buf.samples[1] == 0.0);
    CHECK(buf.samples[2] == Catch::Approx(-1.0));
}

TEST_CASE("decode_wav reads stereo header fields back") {
    std::vector<std::int16_t> samples(44100 * 2, 100);  // 1 s stereo
    const auto buf = decode_wav(pcm16_wav(samples, 44100, 2));
    CHECK(buf.sample_rate == 44100);
    CHECK(buf.channels == 2);
    CHECK(buf.frames() == 44100);
}

TEST_CASE("decode_wav rejects malformed and unsupported input") {
    std::vector<std::uint8_t> junk(100, 0x42);
    CHECK_THROWS_AS(decode_wav(junk), MalformedContainer);

    auto bytes = pcm16_wav({0, 0}, 22050, 1);
    bytes[20] = 0x55;  // format tag -> some compressed codec
    CHECK_THROWS_AS(decode_wav(bytes), UnsupportedEncoding);

    auto truncated = pcm16_wav({0, 0, 0, 0}, 22050, 1);
    truncated[40] = 0xff;  // data chunk claims more bytes than the file holds
    CHECK_THROWS_AS(decode_wav(truncated), MalformedContainer);
}

TEST_CASE("decode_wav handles float32 and pcm24 payloads") {
    // hand-build a float32 WAV
    std::vector<std::uint8_t> out;
    auto push_u32 = [&](std::uint32_t v) {
        for (int i = 0; i < 4; ++i) out.push_back((v >> (8 * i)) & 0xff);
    };
    auto push_u16 = [&](std::uint16_t v) {
        out.push_back(v & 0xff);
        out.push_back((v >> 8) & 0xff);
    };
    auto push_tag = [&](const char* t) { out.insert(out.end(), t, t + 4); };
    const std::vector<float> samples{0.5f, -0.25f, 1.0f};
    push_tag("RIFF");
    push_u32(36 + 12);
    push_tag("WAVE");
    push_tag("fmt ");
    push_u32(16);
    push_u16(3);  // IEEE float
    push_u16(1);
    push_u32(8000);
    push_u32(8000 * 4);
    push_u16(4);
    push_u16(32);
    push_tag("data");
    push_u32(12);
    for (float f : samples) {
        std::uint32_t bits;
        std::memcpy(&bits, &f, 4);
        push_u32(bits);
    }
    const auto buf = decode_wav(out);
    REQUIRE(buf.samples.size() == 3);
    CHECK(buf.samples[0] == Catch::Approx(0.5));
    CHECK(buf.samples[1] == Catch::Approx(-0.25));
    CHECK(buf.samples[2] == Catch::Approx(1.0));
}

TEST_CASE("PCM16 encode/decode round trip is exact") {
    Rng rng(7);
    std::vector<std::int16_t> samples(2048);
    for (auto& s : samples)
        s = static_cast<std::int16_t>(static_cast<std::int64_t>(rng.next_below(65536)) - 32768);
    const auto decoded = decode_wav(pcm16_wav(samples, 22050, 1));
    const auto again = decode_wav(encode_wav16(decoded));
    REQUIRE(again.samples.size() == samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i)
        REQUIRE(again.samples[i] == decoded.samples[i]);
}

TEST_CASE("to_mono averages channels per frame") {
    AudioBuffer stereo;
    stereo.sample_rate = 22050;
    stereo.channels = 2;

    SECTION("single frame") {
        stereo.samples = {1.0, 0.0};
        CHECK(to_mono(stereo).samples == std::vector<double>{0.5});
    }
    SECTION("two frames") {
        stereo.samples = {0.5, -0.5, 0.5, 0.5};
        const auto mono = to_mono(stereo);
        REQUIRE(mono.samples.size() == 2);
        CHECK(mono.samples[0] == Catch::Approx(0.0));
        CHECK(mono.samples[1] == Catch::Approx(0.5));
    }
    SECTION("mono passes through unchanged") {
        AudioBuffer mono;
        mono.sample_rate = 22050;
        mono.channels = 1;
        mono.samples = {0.2, -0.2};
        CHECK(to_mono(mono).samples == mono.samples);
    }
}

TEST_CASE("resample length and identity contracts") {
    const auto buf = synthetic::tone(1000.0, 1.0, 44100);

    SECTION("equal rates are bit-identical") {
        const auto same = resample(buf, 44100);
        CHECK(same.samples == buf.samples);
    }
    SECTION("output length follows the rate ratio") {
        const auto down = resample(buf, 22050);
        CHECK(down.samples.size() == 22050);
    }
}

TEST_CASE("resampled tone keeps its spectral peak near 1000 Hz") {
    const auto buf = synthetic::tone(1000.0, 1.0, 44100);
    const auto down = resample(buf, 22050);

    SpectrogramParams params;
    params.fmin = 0.0;  // look at the raw spectrum
    const auto spec = stft(down, params);
    // average magnitude over the middle frames, find the peak bin
    std::size_t peak = 0;
    double best = -1.0;
    for (std::size_t k = 0; k < spec.rows; ++k) {
        double mag = 0.0;
        for (std::size_t t = 4; t + 4 < spec.cols; ++t) mag += std::abs(spec(k, t));
        if (mag > best) {
            best = mag;
            peak = k;
        }
    }
    const double peak_hz = static_cast<double>(peak) * 22050.0 / 2048.0;
    CHECK(peak_hz == Catch::Approx(1000.0).margin(22050.0 / 2048.0 * 1.5));
}

TEST_CASE("downsample then upsample correlates with the original") {
    // band-limited content: tone well below target_rate/4
    const auto original = synthetic::tone(2000.0, 0.5, 22050);
    const auto up = resample(original, 44100);
    const auto back = resample(up, 22050);

    const std::size_t n = std::min(original.samples.size(), back.samples.size());
    double dot = 0.0, na = 0.0, nb = 0.0;
    // ignore filter edge ramps
    for (std::size_t i = 64; i < n - 64; ++i) {
        dot += original.samples[i] * back.samples[i];
        na += original.samples[i] * original.samples[i];
        nb += back.samples[i] * back.samples[i];
    }
    const double corr = dot / std::sqrt(na * nb);
    CHECK(corr >= 0.99);
}

TEST_CASE("manifest CSV round trip and invariants") {
    synthetic::TempDir tmp("manifest");
    const auto path = tmp.path / "manifest.csv";

    DatasetManifest m;
    for (int i = 0; i < 3; ++i) {
        RecordingEntry e;
        e.id = "rec" + std::to_string(i);
        e.species_label = i < 2 ? "Grey Butcherbird" : "Laughing Kookaburra";
        e.category = i == 0 ? Category::call : Category::song;
        e.file_path = "data/rec" + std::to_string(i) + ".wav";
        e.duration_s = 12.5 + i;
        if (i == 1) e.secondary_labels = {"Noisy Miner", "Galah"};
        m.entries.push_back(e);
    }
    m.rebuild_class_table();
    save_manifest_csv(path, m);

    const auto loaded = load_manifest(path);
    REQUIRE(loaded.entries.size() == 3);
    CHECK(loaded.class_table ==
          std::vector<std::string>{"Grey Butcherbird", "Laughing Kookaburra"});
    CHECK(loaded.entries[1].secondary_labels == std::vector<std::string>{"Noisy Miner", "Galah"});
    CHECK(loaded.entries[0].category == Category::call);

    // determinism: a second load gives the identical class table
    const auto reloaded = load_manifest(path);
    CHECK(reloaded.class_table == loaded.class_table);
}

TEST_CASE("manifest JSON form matches the CSV form") {
    synthetic::TempDir tmp("manifest_json");
    DatasetManifest m;
    RecordingEntry e;
    e.id = "x1";
    e.species_label = "Silvereye";
    m.entries.push_back(e);
    m.rebuild_class_table();

    const auto json_path = tmp.path / "manifest.json";
    save_manifest_json(json_path, m);
    const auto loaded = load_manifest(json_path);
    REQUIRE(loaded.entries.size() == 1);
    CHECK(loaded.entries[0].species_label == "Silvereye");
    CHECK(loaded.class_table == std::vector<std::string>{"Silvereye"});
}

TEST_CASE("manifest load rejects blank labels and duplicate ids") {
    synthetic::TempDir tmp("manifest_bad");
    const auto path = tmp.path / "bad.csv";

    SECTION("blank label") {
        std::ofstream out(path);
        out << "id,species_label,category,file_path,duration_s,secondary_labels\n";
        out << "r1,,call,a.wav,3,\n";
        out.close();
        CHECK_THROWS_AS(load_manifest(path), ParseError);
    }
    SECTION("duplicate id") {
        std::ofstream out(path);
        out << "id,species_label,category,file_path,duration_s,secondary_labels\n";
        out << "r1,A,call,a.wav,3,\n";
        out << "r1,B,song,b.wav,4,\n";
        out.close();
        CHECK_THROWS_AS(load_manifest(path), DuplicateId);
    }
    SECTION("empty entry list is a valid manifest") {
        std::ofstream out(path);
        out << "id,species_label,category,file_path,duration_s,secondary_labels\n";
        out.close();
        const auto m = load_manifest(path);
        CHECK(m.entries.empty());
        CHECK(m.class_table.empty());
    }
}
