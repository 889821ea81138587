#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "fuse/dataset.hpp"

namespace fuse {

struct WeightBounds {
    double w_min = 0.0;
    double w_max = 1.0;
};

/// Point on the K-simplex: non-negative weights summing to 1 within 1e-9,
/// optionally constrained to a [w_min, w_max] box per channel.
struct WeightVector {
    std::vector<double> w;
    std::optional<WeightBounds> bounds;

    std::size_t size() const { return w.size(); }
    double operator[](std::size_t k) const { return w[k]; }

    static WeightVector uniform(std::size_t k);
    /// Rescales a positive vector onto the simplex. Throws if the sum is not
    /// positive and finite.
    static WeightVector normalized(std::vector<double> raw);

    /// Throws ValidationError when the simplex or bounds invariants fail.
    void validate() const;
};

/// Per-user weight vectors aligned with Dataset::users. An empty entry marks
/// a user without weights, which merge_all rejects by name.
struct PersonalizedWeights {
    std::vector<WeightVector> per_user;
};

/// Fixed-size recommendation set for one user with per-item provenance.
struct MergedSet {
    UserIndex user = 0;
    std::vector<ItemIndex> items;
    struct Provenance {
        std::int32_t channel = 0;
        std::int32_t rank = 0;
        bool backfilled = false;
    };
    std::vector<Provenance> provenance;
    /// Set when every channel ran out before reaching the budget.
    bool exhausted = false;
};

/// Reusable stamp buffers for the merge hot loop; one per worker thread.
struct MergeScratch {
    std::vector<std::uint32_t> stamp;
    std::uint32_t generation = 0;

    void reset(std::size_t universe) {
        if (stamp.size() < universe) stamp.assign(universe, 0);
        if (++generation == 0) {  // wrapped: clear and restart
            std::fill(stamp.begin(), stamp.end(), 0);
            generation = 1;
        }
    }
    bool test_and_set(ItemIndex i) {
        auto& s = stamp[static_cast<std::size_t>(i)];
        if (s == generation) return true;
        s = generation;
        return false;
    }
};

/// Integer item budget per channel: nearest_int(w_k * budget) with half away
/// from zero, then largest-remainder repair so the quotas sum to the budget
/// exactly (ties broken by lower channel index), each quota in [0, cap_k].
/// Throws when the budget exceeds the total capacity.
std::vector<std::int32_t> quotas_from_weights(const WeightVector& w, std::int32_t budget,
                                              std::span<const std::int32_t> capacities);
std::vector<std::int32_t> quotas_from_weights(const WeightVector& w, std::int32_t budget,
                                              std::int32_t uniform_capacity);

/// Merges one user's channel lists under the given weights: per-channel
/// quota prefixes, first-occurrence dedup scanning channels by descending
/// weight (ties by channel index), then round-robin backfill in the same
/// channel order until the budget is met or every channel is exhausted.
MergedSet merge_user(const Dataset& ds, UserIndex user, const WeightVector& w,
                     std::int32_t budget);
MergedSet merge_user(const Dataset& ds, UserIndex user, const WeightVector& w,
                     std::int32_t budget, MergeScratch& scratch);

std::vector<MergedSet> merge_all(const Dataset& ds, const WeightVector& w, std::int32_t budget,
                                 int threads = 1);
std::vector<MergedSet> merge_all(const Dataset& ds, const PersonalizedWeights& pw,
                                 std::int32_t budget, int threads = 1);

/// Projects a raw vector onto the simplex slice {w : w_min <= w_k <= w_max,
/// sum w = 1} by iterative clip-and-redistribute. Clipped coordinates stay
/// fixed; the residual mass is spread proportionally over untouched ones.
WeightVector project_to_bounded_simplex(std::vector<double> raw, double w_min, double w_max);

enum class BaselineMode { equal, statistical };

/// Equal weights, or weights proportional to per-channel relevant-item hit
/// counts on the validation truth (falling back to equal when no channel
/// scores a hit).
WeightVector baseline_weights(const Dataset& ds, BaselineMode mode,
                              const GroundTruth* validation_truth = nullptr);

} // namespace fuse
