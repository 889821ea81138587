#pragma once

// In-memory dataset builders shared by the unit and acceptance tests.

#include <cstdio>
#include <string>
#include <vector>

#include "fuse/dataset.hpp"
#include "fuse/rng.hpp"

namespace fixtures {

inline std::string uid(std::size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "u%04zu", i);
    return buf;
}

inline std::string iid(std::size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "i%04zu", i);
    return buf;
}

/// Builds a dataset from index-space lists: channel_lists[k][u] is the
/// ranked list for user u in channel k; truth[u] the relevant items.
inline fuse::Dataset make_dataset(
    const std::vector<std::vector<std::vector<fuse::ItemIndex>>>& channel_lists,
    const std::vector<std::vector<fuse::ItemIndex>>& truth, std::size_t n_items) {
    fuse::Dataset ds;
    const std::size_t n_users = truth.size();
    for (std::size_t u = 0; u < n_users; ++u) ds.users.push_back(uid(u));
    for (std::size_t i = 0; i < n_items; ++i) ds.items.push_back(iid(i));
    ds.channels.resize(channel_lists.size());
    for (std::size_t k = 0; k < channel_lists.size(); ++k) {
        auto& ch = ds.channels[k];
        ch.channel_id = static_cast<int>(k);
        ch.channel_name = "ch" + std::to_string(k);
        ch.lists = channel_lists[k];
        ch.pad_counts.assign(n_users, 0);
    }
    ds.truth.relevant = truth;
    for (auto& rel : ds.truth.relevant) std::sort(rel.begin(), rel.end());
    return ds;
}

/// Random dataset with duplicate-free lists of length `depth` and non-empty
/// truth for every user. Deterministic in the stream.
inline fuse::Dataset random_dataset(fuse::RngStream& rng, std::size_t n_users,
                                    std::size_t n_channels, std::size_t n_items,
                                    std::size_t depth, std::size_t truth_size) {
    std::vector<fuse::ItemIndex> universe(n_items);
    for (std::size_t i = 0; i < n_items; ++i) universe[i] = static_cast<fuse::ItemIndex>(i);

    std::vector<std::vector<std::vector<fuse::ItemIndex>>> lists(
        n_channels, std::vector<std::vector<fuse::ItemIndex>>(n_users));
    for (std::size_t k = 0; k < n_channels; ++k) {
        for (std::size_t u = 0; u < n_users; ++u) {
            auto pool = universe;
            rng.shuffle(pool);
            lists[k][u].assign(pool.begin(), pool.begin() + static_cast<long>(depth));
        }
    }
    std::vector<std::vector<fuse::ItemIndex>> truth(n_users);
    for (std::size_t u = 0; u < n_users; ++u) {
        auto pool = universe;
        rng.shuffle(pool);
        truth[u].assign(pool.begin(), pool.begin() + static_cast<long>(truth_size));
    }
    return make_dataset(lists, truth, n_items);
}

/// Random weight vector on the simplex.
inline std::vector<double> random_weights(fuse::RngStream& rng, std::size_t k) {
    std::vector<double> w(k);
    double sum = 0.0;
    for (double& x : w) {
        x = rng.uniform_pos();
        sum += x;
    }
    for (double& x : w) x /= sum;
    return w;
}

} // namespace fixtures
