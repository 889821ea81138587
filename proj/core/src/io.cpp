#include "fuse/io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

using nlohmann::json;

namespace fuse::io {

std::string read_text(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open file: " + path);
    std::ostringstream out;
    out << in.rdbuf();
    return out.str();
}

void save_text(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write file: " + path);
    out << text;
}

std::string weights_json(const WeightsDoc& doc) {
    doc.weights.validate();
    json j;
    j["weights"] = doc.weights.w;
    j["channel_names"] = doc.channel_names;
    j["source"] = doc.source;
    if (doc.weights.bounds) {
        j["bounds"] = {{"w_min", doc.weights.bounds->w_min},
                       {"w_max", doc.weights.bounds->w_max}};
    }
    return j.dump(2) + "\n";
}

WeightsDoc parse_weights_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ValidationError(std::string("weights file: invalid JSON: ") + e.what());
    }
    WeightsDoc doc;
    if (!j.contains("weights") || !j["weights"].is_array()) {
        throw ValidationError("weights file must contain a \"weights\" array");
    }
    doc.weights.w = j["weights"].get<std::vector<double>>();
    if (j.contains("bounds") && !j["bounds"].is_null()) {
        doc.weights.bounds =
            WeightBounds{j["bounds"].at("w_min").get<double>(), j["bounds"].at("w_max").get<double>()};
    }
    doc.weights.validate();
    if (j.contains("channel_names")) {
        doc.channel_names = j["channel_names"].get<std::vector<std::string>>();
        if (doc.channel_names.size() != doc.weights.size()) {
            throw ValidationError("channel_names size does not match weights size");
        }
    }
    doc.source = j.value("source", std::string{});
    return doc;
}

std::string personalized_jsonl(const PersonalizedWeights& pw, const Dataset& ds) {
    if (pw.per_user.size() != ds.num_users()) {
        throw ValidationError("personalized weights are not aligned with the dataset");
    }
    std::string out;
    for (std::size_t u = 0; u < pw.per_user.size(); ++u) {
        if (pw.per_user[u].w.empty()) continue;
        json row;
        row["user"] = ds.users[u];
        row["weights"] = pw.per_user[u].w;
        out += row.dump();
        out += '\n';
    }
    return out;
}

PersonalizedWeights parse_personalized_jsonl(const std::string& text, const Dataset& ds) {
    std::unordered_map<std::string, UserIndex> user_index;
    for (std::size_t u = 0; u < ds.num_users(); ++u) {
        user_index.emplace(ds.users[u], static_cast<UserIndex>(u));
    }
    PersonalizedWeights pw;
    pw.per_user.resize(ds.num_users());
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json row;
        try {
            row = json::parse(line);
        } catch (const json::exception& e) {
            throw ParseError("personalized weights", line_no, std::string("invalid JSON: ") + e.what());
        }
        const std::string user = row.at("user").get<std::string>();
        auto it = user_index.find(user);
        if (it == user_index.end()) {
            throw ValidationError("personalized weights reference unknown user \"" + user + "\"");
        }
        WeightVector w;
        w.w = row.at("weights").get<std::vector<double>>();
        w.validate();
        pw.per_user[static_cast<std::size_t>(it->second)] = std::move(w);
    }
    return pw;
}

std::string merged_jsonl(const std::vector<MergedSet>& merged, const Dataset& ds) {
    std::string out;
    for (const auto& m : merged) {
        json row;
        row["user"] = ds.users[static_cast<std::size_t>(m.user)];
        json items = json::array();
        for (ItemIndex it : m.items) items.push_back(ds.items[static_cast<std::size_t>(it)]);
        row["items"] = std::move(items);
        std::int64_t backfilled = 0;
        for (const auto& p : m.provenance) backfilled += p.backfilled;
        row["backfilled"] = backfilled;
        if (m.exhausted) row["exhausted"] = true;
        out += row.dump();
        out += '\n';
    }
    return out;
}

std::string bo_trace_json(const bayesopt::BoResult& result) {
    json j;
    j["beta"] = result.beta.alpha;
    j["weights"] = result.weights.w;
    j["best_score"] = result.best_score;
    json calls = json::array();
    for (const auto& obs : result.trace) {
        json c;
        c["beta"] = obs.beta;
        c["score"] = obs.score;
        if (obs.ei) {
            c["ei"] = *obs.ei;
        } else {
            c["ei"] = nullptr;
        }
        calls.push_back(std::move(c));
    }
    j["calls"] = std::move(calls);
    return j.dump(2) + "\n";
}

std::string matrix_csv(const std::vector<std::vector<double>>& matrix,
                       const std::vector<std::string>& channel_names) {
    auto quote = [](const std::string& s) {
        if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
        std::string q = "\"";
        for (char c : s) {
            if (c == '"') q += "\"\"";
            else q.push_back(c);
        }
        q += '"';
        return q;
    };
    std::string out = "channel";
    for (const auto& name : channel_names) {
        out += ',';
        out += quote(name);
    }
    out += "\r\n";
    char buf[64];
    for (std::size_t r = 0; r < matrix.size(); ++r) {
        out += quote(r < channel_names.size() ? channel_names[r] : std::to_string(r));
        for (double v : matrix[r]) {
            std::snprintf(buf, sizeof(buf), ",%.17g", v);
            out += buf;
        }
        out += "\r\n";
    }
    return out;
}

} // namespace fuse::io
