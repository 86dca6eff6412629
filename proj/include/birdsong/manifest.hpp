#pragma once

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "birdsong/core.hpp"

namespace birdsong {

enum class Category { call, song, other };

inline std::string to_string(Category c) {
    switch (c) {
        case Category::call: return "call";
        case Category::song: return "song";
        default: return "other";
    }
}

inline Category category_from_string(const std::string& s) {
    if (s == "call") return Category::call;
    if (s == "song") return Category::song;
    return Category::other;
}

struct RecordingEntry {
    std::string id;
    std::string species_label;
    Category category = Category::other;
    std::string file_path;
    double duration_s = 0.0;
    std::vector<std::string> secondary_labels;  // stored, never trained on
};

struct DatasetManifest {
    std::vector<RecordingEntry> entries;
    std::vector<std::string> class_table;  // first-appearance order

    void rebuild_class_table() {
        class_table.clear();
        for (const auto& e : entries) {
            bool known = false;
            for (const auto& c : class_table)
                if (c == e.species_label) {
                    known = true;
                    break;
                }
            if (!known) class_table.push_back(e.species_label);
        }
    }

    int class_index(const std::string& label) const {
        for (std::size_t i = 0; i < class_table.size(); ++i)
            if (class_table[i] == label) return static_cast<int>(i);
        return -1;
    }
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char ch = line[i];
        if (quoted) {
            if (ch == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur += ch;
            }
        } else if (ch == '"') {
            quoted = true;
        } else if (ch == ',') {
            fields.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur += ch;
        }
    }
    fields.push_back(cur);
    return fields;
}

inline std::string csv_escape(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += "\"\"";
        else out += c;
    }
    out += '"';
    return out;
}

inline std::vector<std::string> split_on(const std::string& s, char sep) {
    std::vector<std::string> parts;
    std::string cur;
    for (char c : s) {
        if (c == sep) {
            if (!cur.empty()) parts.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (!cur.empty()) parts.push_back(cur);
    return parts;
}

inline void validate_and_index(DatasetManifest& m) {
    std::set<std::string> seen;
    for (const auto& e : m.entries) {
        if (e.species_label.empty())
            throw ParseError("manifest row '" + e.id + "' has a blank species label");
        if (e.duration_s < 0) throw ParseError("manifest row '" + e.id + "' has negative duration");
        if (!seen.insert(e.id).second) throw DuplicateId("duplicate recording id '" + e.id + "'");
    }
    m.rebuild_class_table();
}

}  // namespace detail

/// CSV manifest: header `id,species_label,category,file_path,duration_s,
/// secondary_labels`, secondary labels ';'-separated.
inline DatasetManifest load_manifest_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open manifest " + path.string());

    DatasetManifest m;
    std::string line;
    if (!std::getline(in, line)) throw ParseError("empty manifest file " + path.string());
    const auto header = detail::split_csv_line(line);
    if (header.size() != 6 || header[0] != "id" || header[1] != "species_label")
        throw ParseError("unexpected manifest header in " + path.string());

    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto f = detail::split_csv_line(line);
        if (f.size() != 6) throw ParseError("manifest row with " + std::to_string(f.size()) +
                                            " fields (expected 6) in " + path.string());
        RecordingEntry e;
        e.id = f[0];
        e.species_label = f[1];
        e.category = category_from_string(f[2]);
        e.file_path = f[3];
        try {
            e.duration_s = f[4].empty() ? 0.0 : std::stod(f[4]);
        } catch (const std::exception&) {
            throw ParseError("bad duration '" + f[4] + "' in " + path.string());
        }
        e.secondary_labels = detail::split_on(f[5], ';');
        m.entries.push_back(std::move(e));
    }
    detail::validate_and_index(m);
    return m;
}

inline void save_manifest_csv(const std::filesystem::path& path, const DatasetManifest& m) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write manifest " + path.string());
    out << "id,species_label,category,file_path,duration_s,secondary_labels\n";
    for (const auto& e : m.entries) {
        std::string secondary;
        for (std::size_t i = 0; i < e.secondary_labels.size(); ++i) {
            if (i) secondary += ';';
            secondary += e.secondary_labels[i];
        }
        out << detail::csv_escape(e.id) << ',' << detail::csv_escape(e.species_label) << ','
            << to_string(e.category) << ',' << detail::csv_escape(e.file_path) << ','
            << e.duration_s << ',' << detail::csv_escape(secondary) << '\n';
    }
}

/// Equivalent JSON form: {"entries": [{id, species_label, ...}, ...]}.
inline DatasetManifest load_manifest_json(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open manifest " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("manifest JSON: ") + e.what());
    }
    if (!j.contains("entries") || !j["entries"].is_array())
        throw ParseError("manifest JSON missing 'entries' array");

    DatasetManifest m;
    for (const auto& row : j["entries"]) {
        RecordingEntry e;
        try {
            e.id = row.at("id").get<std::string>();
            e.species_label = row.at("species_label").get<std::string>();
            e.category = category_from_string(row.value("category", "other"));
            e.file_path = row.value("file_path", "");
            e.duration_s = row.value("duration_s", 0.0);
            for (const auto& s : row.value("secondary_labels", nlohmann::json::array()))
                e.secondary_labels.push_back(s.get<std::string>());
        } catch (const nlohmann::json::exception& ex) {
            throw ParseError(std::string("manifest JSON row: ") + ex.what());
        }
        m.entries.push_back(std::move(e));
    }
    detail::validate_and_index(m);
    return m;
}

inline void save_manifest_json(const std::filesystem::path& path, const DatasetManifest& m) {
    nlohmann::json entries = nlohmann::json::array();
    for (const auto& e : m.entries) {
        entries.push_back({{"id", e.id},
                           {"species_label", e.species_label},
                           {"category", to_string(e.category)},
                           {"file_path", e.file_path},
                           {"duration_s", e.duration_s},
                           {"secondary_labels", e.secondary_labels}});
    }
    nlohmann::json j{{"entries", entries}};
    std::ofstream out(path);
    if (!out) throw Error("cannot write manifest " + path.string());
    out << j.dump(2) << '\n';
}

/// Dispatch on extension: .json loads the JSON form, anything else CSV.
inline DatasetManifest load_manifest(const std::filesystem::path& path) {
    if (path.extension() == ".json") return load_manifest_json(path);
    return load_manifest_csv(path);
}

}  // namespace birdsong
