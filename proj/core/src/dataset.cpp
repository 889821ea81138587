#include "fuse/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace fuse {

namespace {

struct RawChannel {
    std::string name;
    // user id -> item ids, in file encounter order
    std::vector<std::pair<std::string, std::vector<std::string>>> rows;
};

json parse_line(const std::string& path, std::size_t line_no, const std::string& line) {
    try {
        return json::parse(line);
    } catch (const json::exception& e) {
        throw ParseError(path, line_no, std::string("invalid JSON: ") + e.what());
    }
}

const json& require_field(const json& obj, const char* key, const std::string& path,
                          std::size_t line_no) {
    auto it = obj.find(key);
    if (it == obj.end()) {
        throw ParseError(path, line_no, std::string("missing field \"") + key + "\"");
    }
    return *it;
}

std::vector<std::string> string_array(const json& arr, const std::string& path,
                                      std::size_t line_no, const char* key) {
    if (!arr.is_array()) {
        throw ParseError(path, line_no, std::string("field \"") + key + "\" must be an array");
    }
    std::vector<std::string> out;
    out.reserve(arr.size());
    for (const auto& v : arr) {
        if (!v.is_string()) {
            throw ParseError(path, line_no, std::string("entries of \"") + key + "\" must be strings");
        }
        out.push_back(v.get<std::string>());
    }
    return out;
}

template <typename RowFn>
void for_each_jsonl_row(const std::string& path, RowFn&& fn) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open file: " + path);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line.find_first_not_of(" \t\r") == std::string::npos) continue;
        fn(line_no, parse_line(path, line_no, line));
    }
}

RawChannel read_channel_file(const std::string& path, const std::string& name) {
    RawChannel ch;
    ch.name = name;
    std::unordered_set<std::string> seen_users;
    for_each_jsonl_row(path, [&](std::size_t line_no, const json& obj) {
        std::string user = require_field(obj, "user", path, line_no).get<std::string>();
        auto items = string_array(require_field(obj, "items", path, line_no), path, line_no, "items");
        if (!seen_users.insert(user).second) {
            throw ValidationError("channel \"" + name + "\": duplicate entry for user \"" + user + "\"");
        }
        std::unordered_set<std::string> dedup;
        for (const auto& it : items) {
            if (!dedup.insert(it).second) {
                throw ValidationError("channel \"" + name + "\": user \"" + user +
                                      "\" lists item \"" + it + "\" more than once");
            }
        }
        ch.rows.emplace_back(std::move(user), std::move(items));
    });
    return ch;
}

std::string stem_of(const std::string& path) {
    return fs::path(path).stem().string();
}

} // namespace

std::size_t GroundTruth::users_with_truth() const {
    std::size_t n = 0;
    for (const auto& r : relevant) n += !r.empty();
    return n;
}

std::int32_t Dataset::depth() const {
    std::int32_t c = 0;
    for (const auto& ch : channels) {
        for (const auto& list : ch.lists) {
            c = std::max(c, static_cast<std::int32_t>(list.size()));
        }
    }
    return c;
}

LoadedDataset load_dataset(const std::vector<std::string>& rankings_paths,
                           const std::string& truth_path,
                           const std::optional<std::string>& embeddings_path,
                           const LoadOptions& options) {
    if (rankings_paths.empty()) throw ValidationError("no channel ranking files given");
    if (!options.channel_names.empty() && options.channel_names.size() != rankings_paths.size()) {
        throw ValidationError("channel_names size does not match rankings_paths size");
    }

    LoadedDataset out;
    Dataset& ds = out.dataset;
    LoadReport& report = out.report;

    std::vector<RawChannel> raw;
    raw.reserve(rankings_paths.size());
    for (std::size_t k = 0; k < rankings_paths.size(); ++k) {
        const std::string name =
            options.channel_names.empty() ? stem_of(rankings_paths[k]) : options.channel_names[k];
        raw.push_back(read_channel_file(rankings_paths[k], name));
    }

    // User set: intersection across channels, or strict equality.
    std::unordered_map<std::string, std::size_t> user_hits;
    for (const auto& ch : raw) {
        for (const auto& [user, items] : ch.rows) ++user_hits[user];
    }
    std::vector<std::string> common;
    for (const auto& [user, hits] : user_hits) {
        if (hits == raw.size()) common.push_back(user);
    }
    if (common.size() != user_hits.size()) {
        if (options.strict_users) {
            throw ValidationError("channel user sets differ (" +
                                  std::to_string(user_hits.size() - common.size()) +
                                  " users not covered by every channel); strict mode is on");
        }
        report.users_dropped_by_intersection = user_hits.size() - common.size();
        report.warnings.push_back(std::to_string(report.users_dropped_by_intersection) +
                                  " users dropped: not present in every channel");
    }
    if (common.empty()) throw ValidationError("no user is present in every channel");
    std::sort(common.begin(), common.end());
    ds.users = std::move(common);

    std::unordered_map<std::string, UserIndex> user_index;
    user_index.reserve(ds.users.size());
    for (std::size_t i = 0; i < ds.users.size(); ++i) {
        user_index.emplace(ds.users[i], static_cast<UserIndex>(i));
    }

    std::unordered_map<std::string, ItemIndex> item_index;
    auto intern_item = [&](const std::string& id) -> ItemIndex {
        auto [it, inserted] = item_index.emplace(id, static_cast<ItemIndex>(ds.items.size()));
        if (inserted) ds.items.push_back(id);
        return it->second;
    };

    ds.channels.resize(raw.size());
    for (std::size_t k = 0; k < raw.size(); ++k) {
        ChannelRanking& ch = ds.channels[k];
        ch.channel_id = static_cast<int>(k);
        ch.channel_name = raw[k].name;
        ch.lists.assign(ds.users.size(), {});
        ch.pad_counts.assign(ds.users.size(), 0);
        for (auto& [user, items] : raw[k].rows) {
            auto uit = user_index.find(user);
            if (uit == user_index.end()) continue;  // dropped by intersection
            auto& list = ch.lists[static_cast<std::size_t>(uit->second)];
            list.reserve(items.size());
            for (const auto& item : items) list.push_back(intern_item(item));
        }
    }

    // Ground truth.
    ds.truth.relevant.assign(ds.users.size(), {});
    std::unordered_set<std::string> dropped_truth_users;
    for_each_jsonl_row(truth_path, [&](std::size_t line_no, const json& obj) {
        std::string user = require_field(obj, "user", truth_path, line_no).get<std::string>();
        auto rel = string_array(require_field(obj, "relevant", truth_path, line_no), truth_path,
                                line_no, "relevant");
        auto uit = user_index.find(user);
        if (uit == user_index.end()) {
            dropped_truth_users.insert(user);
            return;
        }
        auto& slot = ds.truth.relevant[static_cast<std::size_t>(uit->second)];
        for (const auto& id : rel) slot.push_back(intern_item(id));
        std::sort(slot.begin(), slot.end());
        slot.erase(std::unique(slot.begin(), slot.end()), slot.end());
    });
    report.truth_users_dropped = dropped_truth_users.size();
    if (report.truth_users_dropped > 0) {
        report.warnings.push_back(std::to_string(report.truth_users_dropped) +
                                  " ground-truth users dropped: absent from all channels");
    }

    // Embeddings.
    if (embeddings_path) {
        EmbeddingTable table;
        table.user_vecs.assign(ds.users.size(), {});
        table.item_vecs.assign(ds.items.size(), {});
        std::size_t skipped = 0;
        for_each_jsonl_row(*embeddings_path, [&](std::size_t line_no, const json& obj) {
            std::string id = require_field(obj, "id", *embeddings_path, line_no).get<std::string>();
            std::string kind = require_field(obj, "kind", *embeddings_path, line_no).get<std::string>();
            const json& vec_json = require_field(obj, "vec", *embeddings_path, line_no);
            if (!vec_json.is_array()) {
                throw ParseError(*embeddings_path, line_no, "field \"vec\" must be an array");
            }
            std::vector<double> vec;
            vec.reserve(vec_json.size());
            for (const auto& v : vec_json) {
                if (!v.is_number()) {
                    throw ParseError(*embeddings_path, line_no, "vector entries must be numbers");
                }
                double x = v.get<double>();
                if (!std::isfinite(x)) {
                    throw ValidationError("embedding for \"" + id + "\" has a non-finite entry");
                }
                vec.push_back(x);
            }
            if (table.dim == 0) table.dim = static_cast<int>(vec.size());
            if (static_cast<int>(vec.size()) != table.dim || vec.empty()) {
                throw ValidationError("embedding for \"" + id + "\" has dimension " +
                                      std::to_string(vec.size()) + ", expected " +
                                      std::to_string(table.dim));
            }
            ++report.embedding_rows;
            if (kind == "user") {
                auto uit = user_index.find(id);
                if (uit == user_index.end()) { ++skipped; return; }
                table.user_vecs[static_cast<std::size_t>(uit->second)] = std::move(vec);
            } else if (kind == "item") {
                auto iit = item_index.find(id);
                if (iit == item_index.end()) { ++skipped; return; }
                table.item_vecs[static_cast<std::size_t>(iit->second)] = std::move(vec);
            } else {
                throw ParseError(*embeddings_path, line_no,
                                 "field \"kind\" must be \"user\" or \"item\"");
            }
        });
        if (skipped > 0) {
            report.warnings.push_back(std::to_string(skipped) +
                                      " embeddings skipped: id not in dataset");
        }
        ds.embeddings = std::move(table);
    }

    return out;
}

LoadedDataset load_dataset_manifest(const std::string& manifest_path, const LoadOptions& options) {
    std::ifstream in(manifest_path);
    if (!in) throw ValidationError("cannot open manifest: " + manifest_path);
    json manifest;
    try {
        in >> manifest;
    } catch (const json::exception& e) {
        throw ParseError(manifest_path, 0, std::string("invalid JSON: ") + e.what());
    }
    const fs::path base = fs::path(manifest_path).parent_path();
    auto resolve = [&](const std::string& p) { return (base / p).string(); };

    LoadOptions opts = options;
    std::vector<std::string> paths;
    opts.channel_names.clear();
    for (const auto& ch : manifest.at("channels")) {
        paths.push_back(resolve(ch.at("path").get<std::string>()));
        opts.channel_names.push_back(ch.at("name").get<std::string>());
    }
    std::optional<std::string> emb;
    if (manifest.contains("embeddings") && !manifest["embeddings"].is_null()) {
        emb = resolve(manifest["embeddings"].get<std::string>());
    }
    return load_dataset(paths, resolve(manifest.at("truth").get<std::string>()), emb, opts);
}

void save_dataset(const Dataset& ds, const std::string& dir) {
    fs::create_directories(dir);
    auto sanitize = [](const std::string& s) {
        std::string out;
        for (char c : s) out.push_back(std::isalnum(static_cast<unsigned char>(c)) ? c : '_');
        return out.empty() ? std::string("channel") : out;
    };

    json manifest;
    manifest["channels"] = json::array();
    for (const auto& ch : ds.channels) {
        // index prefix keeps filenames unique even when names sanitize equal
        const std::string fname = "channel_" + std::to_string(ch.channel_id) + "_" +
                                  sanitize(ch.channel_name) + ".jsonl";
        std::ofstream out(fs::path(dir) / fname);
        if (!out) throw std::runtime_error("cannot write " + fname);
        for (std::size_t u = 0; u < ds.users.size(); ++u) {
            json row;
            row["user"] = ds.users[u];
            json items = json::array();
            for (ItemIndex it : ch.lists[u]) items.push_back(ds.items[static_cast<std::size_t>(it)]);
            row["items"] = std::move(items);
            out << row.dump() << '\n';
        }
        manifest["channels"].push_back({{"name", ch.channel_name}, {"path", fname}});
    }

    {
        std::ofstream out(fs::path(dir) / "truth.jsonl");
        if (!out) throw std::runtime_error("cannot write truth.jsonl");
        for (std::size_t u = 0; u < ds.users.size(); ++u) {
            if (ds.truth.relevant[u].empty()) continue;
            json row;
            row["user"] = ds.users[u];
            json rel = json::array();
            for (ItemIndex it : ds.truth.relevant[u]) rel.push_back(ds.items[static_cast<std::size_t>(it)]);
            row["relevant"] = std::move(rel);
            out << row.dump() << '\n';
        }
        manifest["truth"] = "truth.jsonl";
    }

    if (ds.embeddings) {
        std::ofstream out(fs::path(dir) / "embeddings.jsonl");
        if (!out) throw std::runtime_error("cannot write embeddings.jsonl");
        auto dump_vec = [&](const std::string& id, const char* kind, const std::vector<double>& v) {
            json row;
            row["id"] = id;
            row["kind"] = kind;
            row["vec"] = v;
            out << row.dump() << '\n';
        };
        for (std::size_t u = 0; u < ds.users.size(); ++u) {
            if (!ds.embeddings->user_vecs[u].empty()) {
                dump_vec(ds.users[u], "user", ds.embeddings->user_vecs[u]);
            }
        }
        for (std::size_t i = 0; i < ds.items.size(); ++i) {
            if (!ds.embeddings->item_vecs[i].empty()) {
                dump_vec(ds.items[i], "item", ds.embeddings->item_vecs[i]);
            }
        }
        manifest["embeddings"] = "embeddings.jsonl";
    } else {
        manifest["embeddings"] = nullptr;
    }

    std::ofstream mout(fs::path(dir) / "manifest.json");
    if (!mout) throw std::runtime_error("cannot write manifest.json");
    mout << manifest.dump(2) << '\n';
}

Dataset pad_channels(Dataset ds, const std::vector<ItemIndex>& fallback_order) {
    {
        std::unordered_set<ItemIndex> dedup(fallback_order.begin(), fallback_order.end());
        if (dedup.size() != fallback_order.size()) {
            throw ValidationError("padding fallback order contains duplicate items");
        }
    }
    const std::int32_t target = ds.depth();
    std::unordered_set<ItemIndex> present;
    for (auto& ch : ds.channels) {
        for (std::size_t u = 0; u < ch.lists.size(); ++u) {
            auto& list = ch.lists[u];
            if (static_cast<std::int32_t>(list.size()) >= target) continue;
            present.clear();
            present.insert(list.begin(), list.end());
            std::size_t cursor = 0;
            while (static_cast<std::int32_t>(list.size()) < target) {
                while (cursor < fallback_order.size() && present.count(fallback_order[cursor])) {
                    ++cursor;
                }
                if (cursor >= fallback_order.size()) {
                    throw ValidationError("padding fallback exhausted for user \"" + ds.users[u] +
                                          "\" in channel \"" + ch.channel_name + "\"");
                }
                list.push_back(fallback_order[cursor]);
                present.insert(fallback_order[cursor]);
                ch.pad_counts[u] += 1;
                ++cursor;
            }
        }
    }
    return ds;
}

Dataset pad_channels(Dataset ds, const std::vector<std::string>& fallback_order) {
    std::unordered_map<std::string, ItemIndex> item_index;
    for (std::size_t i = 0; i < ds.items.size(); ++i) {
        item_index.emplace(ds.items[i], static_cast<ItemIndex>(i));
    }
    std::vector<ItemIndex> fallback;
    fallback.reserve(fallback_order.size());
    for (const auto& id : fallback_order) {
        auto it = item_index.find(id);
        if (it != item_index.end()) {
            fallback.push_back(it->second);
        } else {
            fallback.push_back(static_cast<ItemIndex>(ds.items.size()));
            item_index.emplace(id, fallback.back());
            ds.items.push_back(id);
        }
    }
    if (ds.embeddings) {
        ds.embeddings->item_vecs.resize(ds.items.size());  // new ids have no vectors
    }
    return pad_channels(std::move(ds), fallback);
}

std::vector<ItemIndex> popularity_fallback(const Dataset& ds) {
    std::vector<std::int64_t> counts(ds.items.size(), 0);
    for (const auto& rel : ds.truth.relevant) {
        for (ItemIndex it : rel) counts[static_cast<std::size_t>(it)] += 1;
    }
    std::vector<ItemIndex> order(ds.items.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<ItemIndex>(i);
    std::stable_sort(order.begin(), order.end(), [&](ItemIndex a, ItemIndex b) {
        return counts[static_cast<std::size_t>(a)] > counts[static_cast<std::size_t>(b)];
    });
    return order;
}

std::size_t ValidationReport::error_count() const {
    std::size_t n = 0;
    for (const auto& issue : issues) n += issue.severity == ValidationIssue::Severity::error;
    return n;
}

ValidationReport validate_dataset(const Dataset& ds) {
    ValidationReport report;
    auto error = [&](std::string msg) {
        report.issues.push_back({ValidationIssue::Severity::error, std::move(msg)});
    };
    auto warn = [&](std::string msg) {
        report.issues.push_back({ValidationIssue::Severity::warning, std::move(msg)});
    };

    report.user_count = ds.users.size();
    if (ds.users.empty()) error("dataset has no users");
    if (ds.channels.empty()) error("dataset has no channels");

    const std::int32_t depth = ds.depth();
    std::int64_t total_items = 0, total_pads = 0;
    std::unordered_set<ItemIndex> seen;
    for (const auto& ch : ds.channels) {
        std::int32_t ch_depth = 0;
        if (ch.lists.size() != ds.users.size() || ch.pad_counts.size() != ds.users.size()) {
            error("channel \"" + ch.channel_name + "\" does not cover the dataset user set");
            report.channel_depths.push_back(0);
            continue;
        }
        bool ragged = false;
        for (std::size_t u = 0; u < ch.lists.size(); ++u) {
            const auto& list = ch.lists[u];
            ch_depth = std::max(ch_depth, static_cast<std::int32_t>(list.size()));
            if (static_cast<std::int32_t>(list.size()) != depth) ragged = true;
            seen.clear();
            for (ItemIndex it : list) {
                if (it < 0 || it >= static_cast<ItemIndex>(ds.items.size())) {
                    error("channel \"" + ch.channel_name + "\", user \"" + ds.users[u] +
                          "\": item index out of range");
                    break;
                }
                if (!seen.insert(it).second) {
                    error("channel \"" + ch.channel_name + "\", user \"" + ds.users[u] +
                          "\": duplicate item \"" + ds.items[static_cast<std::size_t>(it)] + "\"");
                    break;
                }
            }
            if (ch.pad_counts[u] > static_cast<std::int32_t>(list.size())) {
                error("channel \"" + ch.channel_name + "\", user \"" + ds.users[u] +
                      "\": pad count exceeds list length");
            }
            total_items += static_cast<std::int64_t>(list.size());
            total_pads += ch.pad_counts[u];
        }
        if (ragged) {
            warn("channel \"" + ch.channel_name + "\" has lists shorter than depth " +
                 std::to_string(depth) + " (needs padding)");
        }
        report.channel_depths.push_back(ch_depth);
    }
    report.pad_fraction = total_items > 0 ? static_cast<double>(total_pads) / total_items : 0.0;

    if (ds.truth.relevant.size() != ds.users.size()) {
        error("ground truth is not aligned with the user set");
    } else {
        std::size_t with_truth = ds.truth.users_with_truth();
        report.truth_coverage =
            ds.users.empty() ? 0.0 : static_cast<double>(with_truth) / ds.users.size();
        if (with_truth == 0) warn("no user has ground truth; metrics will be empty");
        for (std::size_t u = 0; u < ds.truth.relevant.size(); ++u) {
            for (ItemIndex it : ds.truth.relevant[u]) {
                if (it < 0 || it >= static_cast<ItemIndex>(ds.items.size())) {
                    error("ground truth for user \"" + ds.users[u] + "\": item index out of range");
                    break;
                }
            }
        }
    }

    if (ds.embeddings) {
        const auto& emb = *ds.embeddings;
        if (emb.dim <= 0) error("embedding table has non-positive dimension");
        if (emb.user_vecs.size() != ds.users.size() || emb.item_vecs.size() != ds.items.size()) {
            error("embedding table is not aligned with the dataset");
        } else {
            auto check = [&](const std::vector<std::vector<double>>& vecs, const char* what) {
                for (const auto& v : vecs) {
                    if (v.empty()) continue;
                    if (static_cast<int>(v.size()) != emb.dim) {
                        error(std::string(what) + " embedding with mismatched dimension");
                        return;
                    }
                    for (double x : v) {
                        if (!std::isfinite(x)) {
                            error(std::string(what) + " embedding with non-finite entry");
                            return;
                        }
                    }
                }
            };
            check(emb.user_vecs, "user");
            check(emb.item_vecs, "item");
        }
    }

    return report;
}

bool datasets_equivalent(const Dataset& a, const Dataset& b) {
    if (a.users != b.users) return false;
    if (a.channels.size() != b.channels.size()) return false;

    auto external = [](const Dataset& ds, const std::vector<ItemIndex>& list) {
        std::vector<std::string> out;
        out.reserve(list.size());
        for (ItemIndex it : list) out.push_back(ds.items[static_cast<std::size_t>(it)]);
        return out;
    };

    for (std::size_t k = 0; k < a.channels.size(); ++k) {
        const auto& ca = a.channels[k];
        const auto& cb = b.channels[k];
        if (ca.channel_name != cb.channel_name) return false;
        if (ca.pad_counts != cb.pad_counts) return false;
        for (std::size_t u = 0; u < a.users.size(); ++u) {
            if (external(a, ca.lists[u]) != external(b, cb.lists[u])) return false;
        }
    }
    for (std::size_t u = 0; u < a.users.size(); ++u) {
        auto ra = external(a, a.truth.relevant[u]);
        auto rb = external(b, b.truth.relevant[u]);
        std::sort(ra.begin(), ra.end());
        std::sort(rb.begin(), rb.end());
        if (ra != rb) return false;
    }
    if (a.embeddings.has_value() != b.embeddings.has_value()) return false;
    if (a.embeddings) {
        if (a.embeddings->dim != b.embeddings->dim) return false;
        for (std::size_t u = 0; u < a.users.size(); ++u) {
            if (a.embeddings->user_vecs[u] != b.embeddings->user_vecs[u]) return false;
        }
        std::unordered_map<std::string, std::size_t> b_index;
        for (std::size_t i = 0; i < b.items.size(); ++i) b_index.emplace(b.items[i], i);
        for (std::size_t i = 0; i < a.items.size(); ++i) {
            auto it = b_index.find(a.items[i]);
            const auto& va = a.embeddings->item_vecs[i];
            if (it == b_index.end()) {
                if (!va.empty()) return false;
                continue;
            }
            if (va != b.embeddings->item_vecs[it->second]) return false;
        }
    }
    return true;
}

} // namespace fuse
