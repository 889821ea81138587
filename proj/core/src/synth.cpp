#include "fuse/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <unordered_set>

#include <json.hpp>

#include "fuse/parallel.hpp"
#include "fuse/rng.hpp"

using nlohmann::json;

namespace fuse::synth {

namespace {
constexpr std::uint64_t kUserLatent = 1;
constexpr std::uint64_t kItemLatent = 2;
constexpr std::uint64_t kTruthNoise = 3;
constexpr std::uint64_t kPool = 4;
constexpr std::uint64_t kDecision = 5;
constexpr std::uint64_t kDistractor = 6;
} // namespace

void SyntheticSpec::validate() const {
    if (n_users < 1 || n_items < 1 || n_channels < 1) {
        throw ValidationError("synthetic spec sizes must be positive");
    }
    if (depth < 1 || depth > n_items) {
        throw ValidationError("depth must lie in [1, n_items]");
    }
    if (truth_size < 1 || truth_size > n_items) {
        throw ValidationError("truth_size must lie in [1, n_items]");
    }
    if (depth + truth_size > n_items) {
        throw ValidationError("n_items must exceed depth + truth_size so distractors exist");
    }
    if (dim < 1) throw ValidationError("latent dimension must be positive");
    if (!(noise >= 0.0)) throw ValidationError("noise must be non-negative");
    if (!(pool_skew >= 1.0)) throw ValidationError("pool_skew must be >= 1");
    if (static_cast<int>(channels.size()) > n_channels) {
        throw ValidationError("more channel profiles than channels");
    }
    for (const auto& ch : channels) {
        if (!(ch.quality >= 0.0 && ch.quality <= 1.0)) {
            throw ValidationError("channel quality must lie in [0, 1]");
        }
        if (ch.overlap_with) {
            if (*ch.overlap_with < 0 || *ch.overlap_with >= n_channels) {
                throw ValidationError("overlap_with must reference a valid channel");
            }
            if (!(ch.overlap_rate >= 0.0 && ch.overlap_rate <= 1.0)) {
                throw ValidationError("overlap_rate must lie in [0, 1]");
            }
        }
    }
    double total_fraction = 0.0;
    for (const auto& seg : segments) {
        if (!(seg.fraction >= 0.0 && seg.fraction <= 1.0)) {
            throw ValidationError("segment fractions must lie in [0, 1]");
        }
        if (seg.favored_channel < 0 || seg.favored_channel >= n_channels) {
            throw ValidationError("segment favored channel out of range");
        }
        if (seg.boost < 0.0) throw ValidationError("segment boost must be non-negative");
        total_fraction += seg.fraction;
    }
    if (total_fraction > 1.0 + 1e-9) {
        throw ValidationError("segment fractions must sum to at most 1");
    }
}

Dataset generate_benchmark(const SyntheticSpec& spec, int threads) {
    spec.validate();
    const std::size_t n_users = static_cast<std::size_t>(spec.n_users);
    const std::size_t n_items = static_cast<std::size_t>(spec.n_items);
    const std::size_t k_channels = static_cast<std::size_t>(spec.n_channels);
    const int dim = spec.dim;

    Dataset ds;
    ds.users.resize(n_users);
    ds.items.resize(n_items);
    {
        char buf[32];
        for (std::size_t u = 0; u < n_users; ++u) {
            std::snprintf(buf, sizeof(buf), "u%06zu", u);
            ds.users[u] = buf;
        }
        for (std::size_t i = 0; i < n_items; ++i) {
            std::snprintf(buf, sizeof(buf), "i%06zu", i);
            ds.items[i] = buf;
        }
    }

    EmbeddingTable emb;
    emb.dim = dim;
    emb.user_vecs.resize(n_users);
    emb.item_vecs.resize(n_items);
    parallel_for(n_users, threads, [&](std::size_t u) {
        RngStream rng(derive_seed(spec.master_seed, kUserLatent, u));
        auto& v = emb.user_vecs[u];
        v.resize(static_cast<std::size_t>(dim));
        for (double& x : v) x = rng.normal();
    });
    parallel_for(n_items, threads, [&](std::size_t i) {
        RngStream rng(derive_seed(spec.master_seed, kItemLatent, i));
        auto& v = emb.item_vecs[i];
        v.resize(static_cast<std::size_t>(dim));
        for (double& x : v) x = rng.normal();
    });

    // Per-user relevance order: top items by latent affinity plus noise.
    std::vector<std::vector<ItemIndex>> relevance_order(n_users);
    ds.truth.relevant.resize(n_users);
    parallel_for(n_users, threads, [&](std::size_t u) {
        RngStream noise_rng(derive_seed(spec.master_seed, kTruthNoise, u));
        const auto& uv = emb.user_vecs[u];
        std::vector<std::pair<double, ItemIndex>> scored(n_items);
        for (std::size_t i = 0; i < n_items; ++i) {
            const auto& iv = emb.item_vecs[i];
            double dot = 0.0;
            for (int d = 0; d < dim; ++d) {
                dot += uv[static_cast<std::size_t>(d)] * iv[static_cast<std::size_t>(d)];
            }
            scored[i] = {dot + spec.noise * noise_rng.normal(), static_cast<ItemIndex>(i)};
        }
        std::partial_sort(scored.begin(), scored.begin() + spec.truth_size, scored.end(),
                          [](const auto& a, const auto& b) {
                              if (a.first != b.first) return a.first > b.first;
                              return a.second < b.second;
                          });
        auto& order = relevance_order[u];
        order.resize(static_cast<std::size_t>(spec.truth_size));
        for (int r = 0; r < spec.truth_size; ++r) order[static_cast<std::size_t>(r)] = scored[static_cast<std::size_t>(r)].second;
        auto& rel = ds.truth.relevant[u];
        rel = order;
        std::sort(rel.begin(), rel.end());
    });

    // Channel item pools: a fixed permutation per channel; distractors favor
    // the pool prefix with strength pool_skew.
    std::vector<std::vector<ItemIndex>> pools(k_channels);
    for (std::size_t k = 0; k < k_channels; ++k) {
        auto& pool = pools[k];
        pool.resize(n_items);
        std::iota(pool.begin(), pool.end(), 0);
        RngStream rng(derive_seed(spec.master_seed, kPool, k));
        rng.shuffle(pool);
    }

    // Segment boundaries by user index.
    std::vector<int> favored(n_users, -1);
    std::vector<double> boost(n_users, 0.0);
    {
        std::size_t cursor = 0;
        for (const auto& seg : spec.segments) {
            const std::size_t count = static_cast<std::size_t>(
                std::llround(seg.fraction * static_cast<double>(n_users)));
            for (std::size_t i = 0; i < count && cursor < n_users; ++i, ++cursor) {
                favored[cursor] = seg.favored_channel;
                boost[cursor] = seg.boost;
            }
        }
    }

    ds.channels.resize(k_channels);
    for (std::size_t k = 0; k < k_channels; ++k) {
        auto& ch = ds.channels[k];
        ch.channel_id = static_cast<int>(k);
        ch.channel_name = k < spec.channels.size() && !spec.channels[k].name.empty()
                              ? spec.channels[k].name
                              : "ch" + std::to_string(k);
        ch.lists.resize(n_users);
        ch.pad_counts.assign(n_users, 0);
    }

    parallel_for(n_users, threads, [&](std::size_t u) {
        std::unordered_set<ItemIndex> rel_set(ds.truth.relevant[u].begin(),
                                              ds.truth.relevant[u].end());
        for (std::size_t k = 0; k < k_channels; ++k) {
            const ChannelProfile profile =
                k < spec.channels.size() ? spec.channels[k] : ChannelProfile{};
            double q = profile.quality;
            if (favored[u] == static_cast<int>(k)) q += boost[u];
            q = std::clamp(q, 0.0, 1.0);

            RngStream decision_rng(derive_seed(spec.master_seed, kDecision, u, k));
            RngStream distractor_rng(derive_seed(spec.master_seed, kDistractor, u, k));
            std::vector<double> decisions(static_cast<std::size_t>(spec.depth));
            for (double& d : decisions) d = decision_rng.uniform();

            auto& list = ds.channels[k].lists[u];
            list.clear();
            list.reserve(static_cast<std::size_t>(spec.depth));
            std::unordered_set<ItemIndex> used;
            int rel_cursor = 0;

            for (int pos = 0; pos < spec.depth; ++pos) {
                if (decisions[static_cast<std::size_t>(pos)] < q && rel_cursor < spec.truth_size) {
                    const ItemIndex item = relevance_order[u][static_cast<std::size_t>(rel_cursor++)];
                    list.push_back(item);
                    used.insert(item);
                    continue;
                }
                // Distractor draw: skewed position in this channel's pool
                // (or a borrowed pool), rejecting relevant/used items.
                ItemIndex picked = -1;
                for (int attempt = 0; attempt < 500; ++attempt) {
                    const auto& pool =
                        (profile.overlap_with && distractor_rng.uniform() < profile.overlap_rate)
                            ? pools[static_cast<std::size_t>(*profile.overlap_with)]
                            : pools[k];
                    const double r = distractor_rng.uniform();
                    const std::size_t idx = std::min(
                        n_items - 1, static_cast<std::size_t>(static_cast<double>(n_items) *
                                                              std::pow(r, spec.pool_skew)));
                    const ItemIndex cand = pool[idx];
                    if (!rel_set.count(cand) && !used.count(cand)) {
                        picked = cand;
                        break;
                    }
                }
                if (picked < 0) {
                    // Deterministic fallback: first valid item in pool order.
                    for (ItemIndex cand : pools[k]) {
                        if (!rel_set.count(cand) && !used.count(cand)) {
                            picked = cand;
                            break;
                        }
                    }
                }
                list.push_back(picked);
                used.insert(picked);
            }
        }
    });

    ds.embeddings = std::move(emb);
    return ds;
}

SyntheticSpec preset(const std::string& name, std::uint64_t seed) {
    SyntheticSpec spec;
    spec.master_seed = seed;
    if (name == "dominant-channel") {
        spec.n_users = 1000;
        spec.n_items = 3000;
        spec.n_channels = 9;
        spec.depth = 200;
        spec.truth_size = 170;
        spec.dim = 16;
        spec.channels.assign(9, ChannelProfile{"", 0.15, std::nullopt, 0.0});
        spec.channels[0].quality = 1.0;
        spec.pool_skew = 3.0;
    } else if (name == "two-segment") {
        spec.n_users = 300;
        spec.n_items = 2500;
        spec.n_channels = 4;
        spec.depth = 80;
        spec.truth_size = 50;
        spec.dim = 16;
        spec.channels = {{"", 0.2, std::nullopt, 0.0},
                         {"", 0.2, std::nullopt, 0.0},
                         {"", 0.05, std::nullopt, 0.0},
                         {"", 0.05, std::nullopt, 0.0}};
        spec.segments = {{0.5, 0, 0.7}, {0.5, 1, 0.7}};
        spec.pool_skew = 3.0;
    } else if (name == "uniform-noise") {
        spec.n_users = 60;
        spec.n_items = 5000;
        spec.n_channels = 4;
        spec.depth = 40;
        spec.truth_size = 10;
        spec.dim = 8;
        spec.channels.assign(4, ChannelProfile{"", 0.0, std::nullopt, 0.0});
        spec.pool_skew = 6.0;
    } else {
        throw ValidationError("unknown preset \"" + name +
                              "\" (expected dominant-channel|two-segment|uniform-noise)");
    }
    return spec;
}

std::vector<std::string> preset_names() {
    return {"dominant-channel", "two-segment", "uniform-noise"};
}

namespace {

SyntheticSpec spec_from_json_obj(const json& j) {
    SyntheticSpec spec;
    if (j.contains("preset")) {
        spec = preset(j.at("preset").get<std::string>(),
                      j.value("master_seed", std::uint64_t{0}));
    }
    auto set_int = [&](const char* key, int& field) {
        if (j.contains(key)) field = j.at(key).get<int>();
    };
    set_int("n_users", spec.n_users);
    set_int("n_items", spec.n_items);
    set_int("n_channels", spec.n_channels);
    set_int("depth", spec.depth);
    set_int("truth_size", spec.truth_size);
    set_int("dim", spec.dim);
    if (j.contains("noise")) spec.noise = j.at("noise").get<double>();
    if (j.contains("pool_skew")) spec.pool_skew = j.at("pool_skew").get<double>();
    if (j.contains("master_seed")) spec.master_seed = j.at("master_seed").get<std::uint64_t>();
    if (j.contains("channels")) {
        spec.channels.clear();
        for (const auto& c : j.at("channels")) {
            ChannelProfile p;
            p.name = c.value("name", std::string{});
            p.quality = c.value("quality", 0.0);
            if (c.contains("overlap_with") && !c["overlap_with"].is_null()) {
                p.overlap_with = c.at("overlap_with").get<int>();
                p.overlap_rate = c.value("overlap_rate", 0.0);
            }
            spec.channels.push_back(std::move(p));
        }
        if (!j.contains("n_channels") && !j.contains("preset")) {
            spec.n_channels = static_cast<int>(spec.channels.size());
        }
    }
    if (j.contains("segments")) {
        spec.segments.clear();
        for (const auto& s : j.at("segments")) {
            spec.segments.push_back({s.value("fraction", 0.0), s.value("favored_channel", 0),
                                     s.value("boost", 0.5)});
        }
    }
    spec.validate();
    return spec;
}

} // namespace

SyntheticSpec spec_from_json_text(const std::string& text) {
    try {
        return spec_from_json_obj(json::parse(text));
    } catch (const json::exception& e) {
        throw ParseError(std::string("synthetic spec: invalid JSON: ") + e.what());
    }
}

SyntheticSpec spec_from_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open spec file: " + path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return spec_from_json_text(text);
}

std::string spec_to_json(const SyntheticSpec& spec) {
    json j;
    j["n_users"] = spec.n_users;
    j["n_items"] = spec.n_items;
    j["n_channels"] = spec.n_channels;
    j["depth"] = spec.depth;
    j["truth_size"] = spec.truth_size;
    j["dim"] = spec.dim;
    j["noise"] = spec.noise;
    j["pool_skew"] = spec.pool_skew;
    j["master_seed"] = spec.master_seed;
    json chans = json::array();
    for (const auto& c : spec.channels) {
        json cj;
        cj["name"] = c.name;
        cj["quality"] = c.quality;
        if (c.overlap_with) {
            cj["overlap_with"] = *c.overlap_with;
            cj["overlap_rate"] = c.overlap_rate;
        }
        chans.push_back(std::move(cj));
    }
    j["channels"] = std::move(chans);
    json segs = json::array();
    for (const auto& s : spec.segments) {
        segs.push_back({{"fraction", s.fraction},
                        {"favored_channel", s.favored_channel},
                        {"boost", s.boost}});
    }
    j["segments"] = std::move(segs);
    return j.dump(2);
}

} // namespace fuse::synth
