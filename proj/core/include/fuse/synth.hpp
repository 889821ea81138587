#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fuse/dataset.hpp"

namespace fuse::synth {

struct ChannelProfile {
    std::string name;        // defaults to "ch<k>"
    double quality = 0.0;    // per-position probability of emitting a relevant item
    std::optional<int> overlap_with;  // borrow distractors from this channel's pool
    double overlap_rate = 0.0;
};

/// A block of users whose favored channel gets a quality boost.
struct Segment {
    double fraction = 0.0;
    int favored_channel = 0;
    double boost = 0.5;
};

struct SyntheticSpec {
    int n_users = 100;
    int n_items = 2000;
    int n_channels = 2;
    int depth = 50;       // per-channel list length C
    int truth_size = 20;  // relevant items per user
    int dim = 16;         // latent/embedding dimension
    std::vector<ChannelProfile> channels;  // padded with default profiles when short
    std::vector<Segment> segments;
    double noise = 0.1;     // gaussian noise on relevance scores
    double pool_skew = 3.0; // >= 1; 1 = uniform distractors, larger values
                            // concentrate each channel on its own pool prefix
    std::uint64_t master_seed = 0;

    void validate() const;
};

/// Seeded synthetic dataset: latent-factor users/items, per-user relevance
/// order, channels that interleave relevant items (rate quality, boosted for
/// the user's favored channel) with channel-biased distractors. Embeddings
/// are the latents. Byte-identical for a given spec.
Dataset generate_benchmark(const SyntheticSpec& spec, int threads = 1);

/// Named known-answer constructions used by the acceptance suite:
/// "dominant-channel", "two-segment", "uniform-noise".
SyntheticSpec preset(const std::string& name, std::uint64_t seed);
std::vector<std::string> preset_names();

SyntheticSpec spec_from_json_text(const std::string& text);
SyntheticSpec spec_from_json_file(const std::string& path);
std::string spec_to_json(const SyntheticSpec& spec);

} // namespace fuse::synth
