#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "birdsong/cnn.hpp"
#include "birdsong/core.hpp"
#include "birdsong/forest.hpp"
#include "birdsong/knn.hpp"

namespace birdsong {

enum class ModelKind : std::uint8_t { knn = 0, forest = 1, cnn = 2 };

inline std::string to_string(ModelKind k) {
    switch (k) {
        case ModelKind::knn: return "knn";
        case ModelKind::forest: return "forest";
        case ModelKind::cnn: return "cnn";
    }
    return "unknown";
}

/// A trained classifier plus everything needed to use it: the class-label
/// table, hyper-parameters, and the learned parameters themselves.
struct ModelArtifact {
    static constexpr std::uint16_t kCurrentVersion = 1;

    ModelKind kind = ModelKind::knn;
    std::uint16_t version = kCurrentVersion;
    std::vector<std::string> class_table;
    nlohmann::json hyper_params = nlohmann::json::object();
    std::variant<KnnModel, ForestModel, CnnModel> model;
};

namespace detail {

/// Little-endian byte writer/reader for the raw parameter payload.
struct PayloadWriter {
    std::vector<std::uint8_t>& out;

    void u8(std::uint8_t v) { out.push_back(v); }
    void u16(std::uint16_t v) {
        out.push_back(v & 0xff);
        out.push_back((v >> 8) & 0xff);
    }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) out.push_back((v >> (8 * i)) & 0xff);
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) out.push_back((v >> (8 * i)) & 0xff);
    }
    void i32(std::int32_t v) { u32(static_cast<std::uint32_t>(v)); }
    void f64(double v) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, 8);
        u64(bits);
    }
    void f64_vec(const std::vector<double>& v) {
        u64(v.size());
        for (double x : v) f64(x);
    }
    void bytes(const void* p, std::size_t n) {
        const auto* b = static_cast<const std::uint8_t*>(p);
        out.insert(out.end(), b, b + n);
    }
};

struct PayloadReader {
    const std::uint8_t* p;
    const std::uint8_t* end;

    void need(std::size_t n) const {
        if (static_cast<std::size_t>(end - p) < n)
            throw TruncatedPayload("model payload ends unexpectedly");
    }
    std::uint8_t u8() {
        need(1);
        return *p++;
    }
    std::uint16_t u16() {
        need(2);
        std::uint16_t v = static_cast<std::uint16_t>(p[0] | (p[1] << 8));
        p += 2;
        return v;
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
        p += 4;
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
        p += 8;
        return v;
    }
    std::int32_t i32() { return static_cast<std::int32_t>(u32()); }
    double f64() {
        const std::uint64_t bits = u64();
        double v;
        std::memcpy(&v, &bits, 8);
        return v;
    }
    std::vector<double> f64_vec() {
        const std::uint64_t n = u64();
        need(n * 8);
        std::vector<double> v(n);
        for (auto& x : v) x = f64();
        return v;
    }
};

inline void write_knn(PayloadWriter& w, const KnnModel& m) {
    w.u64(m.k);
    w.i32(m.n_classes);
    w.f64_vec(m.feature_mean);
    w.f64_vec(m.feature_std);
    w.u64(m.feature_active.size());
    for (bool b : m.feature_active) w.u8(b ? 1 : 0);
    w.u64(m.train_points.size());
    for (const auto& pt : m.train_points) w.f64_vec(pt);
    w.u64(m.train_labels.size());
    for (int l : m.train_labels) w.i32(l);
}

inline KnnModel read_knn(PayloadReader& r) {
    KnnModel m;
    m.k = r.u64();
    m.n_classes = r.i32();
    m.feature_mean = r.f64_vec();
    m.feature_std = r.f64_vec();
    m.feature_active.resize(r.u64());
    for (std::size_t i = 0; i < m.feature_active.size(); ++i) m.feature_active[i] = r.u8() != 0;
    m.train_points.resize(r.u64());
    for (auto& pt : m.train_points) pt = r.f64_vec();
    m.train_labels.resize(r.u64());
    for (auto& l : m.train_labels) l = r.i32();
    return m;
}

inline void write_forest(PayloadWriter& w, const ForestModel& m) {
    w.u64(m.n_trees);
    w.u64(m.max_features);
    w.u64(m.seed);
    w.i32(m.n_classes);
    w.u64(m.trees.size());
    for (const auto& tree : m.trees) {
        w.u64(tree.nodes.size());
        for (const auto& n : tree.nodes) {
            w.i32(n.feature);
            w.f64(n.threshold);
            w.i32(n.left);
            w.i32(n.right);
            w.f64_vec(n.histogram);
        }
    }
}

inline ForestModel read_forest(PayloadReader& r) {
    ForestModel m;
    m.n_trees = r.u64();
    m.max_features = r.u64();
    m.seed = r.u64();
    m.n_classes = r.i32();
    m.trees.resize(r.u64());
    for (auto& tree : m.trees) {
        tree.nodes.resize(r.u64());
        for (auto& n : tree.nodes) {
            n.feature = r.i32();
            n.threshold = r.f64();
            n.left = r.i32();
            n.right = r.i32();
            n.histogram = r.f64_vec();
        }
    }
    return m;
}

inline void write_adam(PayloadWriter& w, const AdamState& s) {
    w.f64_vec(s.m);
    w.f64_vec(s.v);
}

inline AdamState read_adam(PayloadReader& r) {
    AdamState s;
    s.m = r.f64_vec();
    s.v = r.f64_vec();
    return s;
}

inline void write_cnn(PayloadWriter& w, const CnnModel& m) {
    const auto& cfg = m.config;
    w.u64(cfg.input_size);
    w.u64(cfg.kernel);
    w.u64(cfg.conv1_filters);
    w.u64(cfg.conv2_filters);
    w.u64(cfg.dense_units);
    w.u64(cfg.n_classes);
    w.u8(cfg.final_activation == FinalActivation::sigmoid ? 1 : 0);
    w.u64(m.adam_step);
    w.f64_vec(m.conv1.weights);
    w.f64_vec(m.conv1.bias);
    w.f64_vec(m.conv2.weights);
    w.f64_vec(m.conv2.bias);
    w.f64_vec(m.dense1.weights);
    w.f64_vec(m.dense1.bias);
    w.f64_vec(m.dense2.weights);
    w.f64_vec(m.dense2.bias);
    write_adam(w, m.adam_conv1_w);
    write_adam(w, m.adam_conv1_b);
    write_adam(w, m.adam_conv2_w);
    write_adam(w, m.adam_conv2_b);
    write_adam(w, m.adam_dense1_w);
    write_adam(w, m.adam_dense1_b);
    write_adam(w, m.adam_dense2_w);
    write_adam(w, m.adam_dense2_b);
}

inline CnnModel read_cnn(PayloadReader& r) {
    CnnConfig cfg;
    cfg.input_size = r.u64();
    cfg.kernel = r.u64();
    cfg.conv1_filters = r.u64();
    cfg.conv2_filters = r.u64();
    cfg.dense_units = r.u64();
    cfg.n_classes = r.u64();
    cfg.final_activation = r.u8() ? FinalActivation::sigmoid : FinalActivation::softmax;

    CnnModel m = CnnModel::create(cfg, 0);
    m.adam_step = r.u64();
    m.conv1.weights = r.f64_vec();
    m.conv1.bias = r.f64_vec();
    m.conv2.weights = r.f64_vec();
    m.conv2.bias = r.f64_vec();
    m.dense1.weights = r.f64_vec();
    m.dense1.bias = r.f64_vec();
    m.dense2.weights = r.f64_vec();
    m.dense2.bias = r.f64_vec();
    m.adam_conv1_w = read_adam(r);
    m.adam_conv1_b = read_adam(r);
    m.adam_conv2_w = read_adam(r);
    m.adam_conv2_b = read_adam(r);
    m.adam_dense1_w = read_adam(r);
    m.adam_dense1_b = read_adam(r);
    m.adam_dense2_w = read_adam(r);
    m.adam_dense2_b = read_adam(r);
    return m;
}

}  // namespace detail

/// Binary model file: magic `BSNG`, u16 version, u8 kind, u32 JSON block
/// length, JSON hyper-params (includes the class table), raw little-endian
/// parameter payload. Layout details in docs/model-format.md.
inline std::vector<std::uint8_t> save_model(const ModelArtifact& artifact) {
    nlohmann::json header = artifact.hyper_params;
    header["class_table"] = artifact.class_table;
    const std::string json_str = header.dump();

    std::vector<std::uint8_t> out;
    detail::PayloadWriter w{out};
    w.bytes("BSNG", 4);
    w.u16(artifact.version);
    w.u8(static_cast<std::uint8_t>(artifact.kind));
    w.u32(static_cast<std::uint32_t>(json_str.size()));
    w.bytes(json_str.data(), json_str.size());

    switch (artifact.kind) {
        case ModelKind::knn: detail::write_knn(w, std::get<KnnModel>(artifact.model)); break;
        case ModelKind::forest:
            detail::write_forest(w, std::get<ForestModel>(artifact.model));
            break;
        case ModelKind::cnn: detail::write_cnn(w, std::get<CnnModel>(artifact.model)); break;
    }
    return out;
}

inline ModelArtifact load_model(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < 4 || std::memcmp(bytes.data(), "BSNG", 4) != 0)
        throw BadMagic("not a model file (bad magic)");
    detail::PayloadReader r{bytes.data() + 4, bytes.data() + bytes.size()};

    ModelArtifact artifact;
    artifact.version = r.u16();
    if (artifact.version != ModelArtifact::kCurrentVersion)
        throw UnsupportedVersion("model version " + std::to_string(artifact.version));
    const std::uint8_t kind = r.u8();
    if (kind > 2) throw ParseError("unknown model kind tag");
    artifact.kind = static_cast<ModelKind>(kind);

    const std::uint32_t json_len = r.u32();
    r.need(json_len);
    std::string json_str(reinterpret_cast<const char*>(r.p), json_len);
    r.p += json_len;
    try {
        artifact.hyper_params = nlohmann::json::parse(json_str);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("model hyper-params: ") + e.what());
    }
    if (artifact.hyper_params.contains("class_table"))
        for (const auto& c : artifact.hyper_params["class_table"])
            artifact.class_table.push_back(c.get<std::string>());
    if (artifact.class_table.empty()) throw ParseError("model has an empty class table");

    switch (artifact.kind) {
        case ModelKind::knn: artifact.model = detail::read_knn(r); break;
        case ModelKind::forest: artifact.model = detail::read_forest(r); break;
        case ModelKind::cnn: artifact.model = detail::read_cnn(r); break;
    }
    return artifact;
}

inline void save_model_file(const std::filesystem::path& path, const ModelArtifact& artifact) {
    const auto bytes = save_model(artifact);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write model " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
}

inline ModelArtifact load_model_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open model " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    return load_model(bytes);
}

/// Dispatch prediction through whichever model the artifact holds.
inline std::vector<double> predict_probabilities(const ModelArtifact& artifact,
                                                 const std::vector<double>& features) {
    if (artifact.kind == ModelKind::knn)
        return knn_predict(std::get<KnnModel>(artifact.model), features);
    if (artifact.kind == ModelKind::forest)
        return forest_predict(std::get<ForestModel>(artifact.model), features);
    throw Error("numeric prediction requested from a CNN artifact");
}

}  // namespace birdsong
