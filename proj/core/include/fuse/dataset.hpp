#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fuse/errors.hpp"

namespace fuse {

using UserIndex = std::int32_t;
using ItemIndex = std::int32_t;

/// One retrieval channel: a ranked item list per user. Lists are stored in
/// dataset user order; items are dense indices into Dataset::items.
struct ChannelRanking {
    int channel_id = 0;
    std::string channel_name;
    std::vector<std::vector<ItemIndex>> lists;
    std::vector<std::int32_t> pad_counts;  // padded tail items per user

    std::int32_t depth_for(UserIndex u) const {
        return static_cast<std::int32_t>(lists[static_cast<std::size_t>(u)].size());
    }
};

/// Relevant item sets per user, sorted ascending. An empty vector means the
/// user has no ground truth and is excluded from metric averages.
struct GroundTruth {
    std::vector<std::vector<ItemIndex>> relevant;

    bool has_truth(UserIndex u) const {
        return !relevant[static_cast<std::size_t>(u)].empty();
    }
    std::size_t users_with_truth() const;
};

/// Dense user/item vectors keyed by index; an empty vector marks a missing id.
struct EmbeddingTable {
    int dim = 0;
    std::vector<std::vector<double>> user_vecs;
    std::vector<std::vector<double>> item_vecs;
};

/// Immutable in-memory dataset shared by every stage: K channels over a
/// common user set, ground truth, optional embeddings.
struct Dataset {
    std::vector<std::string> users;  // index -> external id, ascending
    std::vector<std::string> items;  // index -> external id
    std::vector<ChannelRanking> channels;
    GroundTruth truth;
    std::optional<EmbeddingTable> embeddings;

    std::size_t num_users() const { return users.size(); }
    std::size_t num_channels() const { return channels.size(); }
    std::int64_t item_universe_size() const { return static_cast<std::int64_t>(items.size()); }

    /// Longest per-user list across all channels (the padding target C).
    std::int32_t depth() const;
};

struct LoadOptions {
    /// When true, channels with mismatched user sets are an error instead of
    /// being intersected.
    bool strict_users = false;
    /// Optional channel names; defaults to the file stem per path.
    std::vector<std::string> channel_names;
};

struct LoadReport {
    std::size_t users_dropped_by_intersection = 0;
    std::size_t truth_users_dropped = 0;
    std::size_t embedding_rows = 0;
    std::vector<std::string> warnings;
};

struct LoadedDataset {
    Dataset dataset;
    LoadReport report;
};

/// Loads channel rankings, ground truth, and optional embeddings from the
/// JSONL formats described in the README. Throws ParseError on malformed
/// lines and ValidationError on contract violations (duplicate items within
/// a list, embedding dimension mismatch, strict user-set mismatch).
LoadedDataset load_dataset(const std::vector<std::string>& rankings_paths,
                           const std::string& truth_path,
                           const std::optional<std::string>& embeddings_path = {},
                           const LoadOptions& options = {});

/// Loads a dataset through a manifest.json written by save_dataset.
LoadedDataset load_dataset_manifest(const std::string& manifest_path,
                                    const LoadOptions& options = {});

/// Writes the dataset back out as JSONL files plus a manifest.json in `dir`.
void save_dataset(const Dataset& ds, const std::string& dir);

/// Extends every list to the common depth C (the longest list anywhere in
/// the dataset) by appending fallback items not already present in that
/// list, updating pad counts. Throws when the fallback runs out. Idempotent.
Dataset pad_channels(Dataset ds, const std::vector<ItemIndex>& fallback_order);

/// String-id overload; unknown ids extend the item table.
Dataset pad_channels(Dataset ds, const std::vector<std::string>& fallback_order);

/// Global item popularity order computed from ground truth (most frequent
/// first, ties by item index). The CLI's default padding source.
std::vector<ItemIndex> popularity_fallback(const Dataset& ds);

struct ValidationIssue {
    enum class Severity { warning, error };
    Severity severity = Severity::warning;
    std::string message;
};

struct ValidationReport {
    std::vector<ValidationIssue> issues;
    std::vector<std::int32_t> channel_depths;  // max per channel
    std::size_t user_count = 0;
    double pad_fraction = 0.0;    // padded items / total items
    double truth_coverage = 0.0;  // users with non-empty truth / users

    std::size_t error_count() const;
    bool ok() const { return error_count() == 0; }
};

/// Structural check over every dataset invariant; violations become report
/// entries rather than exceptions.
ValidationReport validate_dataset(const Dataset& ds);

/// Deep semantic equality on the external view (ids, lists, truth,
/// embeddings), independent of internal index assignment.
bool datasets_equivalent(const Dataset& a, const Dataset& b);

} // namespace fuse
