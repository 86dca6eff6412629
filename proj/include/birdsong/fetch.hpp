#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "birdsong/core.hpp"
#include "birdsong/manifest.hpp"

namespace birdsong {

struct FetchOptions {
    std::string base_url = "https://xeno-canto.org";
    std::size_t limit = 10;
    // polite default: at least one second between archive requests
    int rate_limit_ms = 1000;
    int timeout_s = 30;
};

namespace detail {

struct UrlParts {
    std::string scheme_host;  // e.g. http://localhost:8080
    std::string path;
};

inline UrlParts split_url(const std::string& url) {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) return {"", url};  // relative path
    const auto path_start = url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) return {url, "/"};
    return {url.substr(0, path_start), url.substr(path_start)};
}

inline std::string url_encode(const std::string& s) {
    static const char* hex = "0123456789ABCDEF";
    std::string out;
    for (unsigned char c : s) {
        if (std::isalnum(c) || c == '-' || c == '_' || c == '.' || c == '~') {
            out += static_cast<char>(c);
        } else if (c == ' ') {
            out += "%20";
        } else {
            out += '%';
            out += hex[c >> 4];
            out += hex[c & 15];
        }
    }
    return out;
}

inline double parse_length_s(const std::string& text) {
    // "m:ss" or "h:mm:ss"
    std::vector<int> parts;
    std::string cur;
    for (char c : text + ":") {
        if (c == ':') {
            if (cur.empty()) return 0.0;
            try {
                parts.push_back(std::stoi(cur));
            } catch (const std::exception&) {
                return 0.0;
            }
            cur.clear();
        } else {
            cur += c;
        }
    }
    double seconds = 0.0;
    for (int p : parts) seconds = seconds * 60.0 + p;
    return seconds;
}

inline httplib::Client make_client(const std::string& scheme_host, int timeout_s) {
    httplib::Client client(scheme_host);
    client.set_connection_timeout(timeout_s);
    client.set_read_timeout(timeout_s);
    client.set_follow_location(true);
    return client;
}

}  // namespace detail

struct FetchResult {
    std::vector<RecordingEntry> downloaded;  // newly added entries
    std::size_t skipped = 0;                 // already present
};

/// Query the archive's public JSON API and download up to `limit` new
/// recordings into `dest`, updating the manifest as files land so a partial
/// run still leaves it valid. Re-running a completed fetch downloads
/// nothing.
inline FetchResult fetch_recordings(const std::string& query,
                                    const std::filesystem::path& dest,
                                    const std::filesystem::path& manifest_path,
                                    const FetchOptions& options = {}) {
    std::filesystem::create_directories(dest);

    DatasetManifest manifest;
    if (std::filesystem::exists(manifest_path)) manifest = load_manifest(manifest_path);
    std::set<std::string> known;
    for (const auto& e : manifest.entries) known.insert(e.id);

    FetchResult result;
    if (options.limit == 0) return result;

    const auto base = detail::split_url(options.base_url);
    auto client = detail::make_client(base.scheme_host, options.timeout_s);

    bool dirty = false;
    auto save_progress = [&] {
        if (!dirty) return;  // a failed run must leave an absent manifest absent
        manifest.rebuild_class_table();
        if (manifest_path.extension() == ".json")
            save_manifest_json(manifest_path, manifest);
        else
            save_manifest_csv(manifest_path, manifest);
        dirty = false;
    };

    bool first_request = true;
    auto throttle = [&] {
        if (!first_request && options.rate_limit_ms > 0)
            std::this_thread::sleep_for(std::chrono::milliseconds(options.rate_limit_ms));
        first_request = false;
    };

    int page = 1;
    int num_pages = 1;
    while (page <= num_pages && result.downloaded.size() < options.limit) {
        throttle();
        const std::string api_path = base.path == "/" || base.path.empty()
                                         ? ""
                                         : base.path;
        const std::string url = api_path + "/api/2/recordings?query=" +
                                detail::url_encode(query) + "&page=" + std::to_string(page);
        auto res = client.Get(url);
        if (!res || res->status != 200) {
            save_progress();
            throw NetworkError("archive query failed (" +
                               (res ? "HTTP " + std::to_string(res->status) : "no connection") +
                               ")");
        }

        nlohmann::json body;
        try {
            body = nlohmann::json::parse(res->body);
        } catch (const nlohmann::json::exception&) {
            save_progress();
            throw ApiSchemaChanged("archive response is not JSON");
        }
        if (!body.contains("recordings") || !body["recordings"].is_array()) {
            save_progress();
            throw ApiSchemaChanged("archive response lacks a 'recordings' array");
        }
        num_pages = body.value("numPages", 1);

        for (const auto& rec : body["recordings"]) {
            if (result.downloaded.size() >= options.limit) break;
            std::string id, file_url, species;
            try {
                id = rec.at("id").is_string() ? rec.at("id").get<std::string>()
                                              : std::to_string(rec.at("id").get<long long>());
                file_url = rec.at("file").get<std::string>();
                species = rec.at("en").get<std::string>();
            } catch (const nlohmann::json::exception&) {
                save_progress();
                throw ApiSchemaChanged("recording entry lacks id/file/en fields");
            }

            std::string ext = ".wav";
            const std::string fname = rec.value("file-name", "");
            if (const auto dot = fname.rfind('.'); dot != std::string::npos)
                ext = fname.substr(dot);
            const auto target = dest / (id + ext);

            if (known.count(id) && std::filesystem::exists(target)) {
                ++result.skipped;
                continue;
            }

            throttle();
            const auto file_parts = detail::split_url(file_url);
            httplib::Result file_res;
            if (file_parts.scheme_host.empty() || file_parts.scheme_host == base.scheme_host) {
                file_res = client.Get(file_parts.path);
            } else {
                auto file_client = detail::make_client(file_parts.scheme_host, options.timeout_s);
                file_res = file_client.Get(file_parts.path);
            }
            if (!file_res || file_res->status != 200) {
                save_progress();
                throw NetworkError("download of recording " + id + " failed");
            }
            std::ofstream out(target, std::ios::binary);
            out.write(file_res->body.data(), static_cast<std::streamsize>(file_res->body.size()));
            out.close();

            RecordingEntry entry;
            entry.id = id;
            entry.species_label = species;
            entry.category = category_from_string(rec.value("type", "other"));
            entry.file_path = target.string();
            entry.duration_s = detail::parse_length_s(rec.value("length", ""));
            for (const auto& also : rec.value("also", nlohmann::json::array()))
                if (also.is_string() && !also.get<std::string>().empty())
                    entry.secondary_labels.push_back(also.get<std::string>());

            if (!known.count(id)) {
                manifest.entries.push_back(entry);
                known.insert(id);
                dirty = true;
            }
            result.downloaded.push_back(entry);
            save_progress();
        }
        ++page;
    }

    save_progress();
    return result;
}

}  // namespace birdsong
