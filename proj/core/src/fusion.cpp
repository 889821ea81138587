#include "fuse/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fuse/parallel.hpp"

namespace fuse {

namespace {
constexpr double kSimplexTol = 1e-9;
}

WeightVector WeightVector::uniform(std::size_t k) {
    if (k == 0) throw ValidationError("weight vector must have at least one channel");
    WeightVector out;
    out.w.assign(k, 1.0 / static_cast<double>(k));
    return out;
}

WeightVector WeightVector::normalized(std::vector<double> raw) {
    if (raw.empty()) throw ValidationError("weight vector must have at least one channel");
    double sum = 0.0;
    for (double x : raw) {
        if (!std::isfinite(x) || x < 0.0) {
            throw ValidationError("weights must be finite and non-negative");
        }
        sum += x;
    }
    if (!(sum > 0.0) || !std::isfinite(sum)) {
        throw ValidationError("weight vector sum must be positive");
    }
    for (double& x : raw) x /= sum;
    WeightVector out;
    out.w = std::move(raw);
    return out;
}

void WeightVector::validate() const {
    if (w.empty()) throw ValidationError("weight vector must have at least one channel");
    double sum = 0.0;
    for (double x : w) {
        if (!std::isfinite(x) || x < 0.0) {
            throw ValidationError("weights must be finite and non-negative");
        }
        sum += x;
    }
    if (std::abs(sum - 1.0) > kSimplexTol) {
        throw ValidationError("weights must sum to 1 (got " + std::to_string(sum) + ")");
    }
    if (bounds) {
        if (!(bounds->w_min >= 0.0 && bounds->w_min <= bounds->w_max && bounds->w_max <= 1.0)) {
            throw ValidationError("weight bounds must satisfy 0 <= w_min <= w_max <= 1");
        }
        for (double x : w) {
            if (x < bounds->w_min - kSimplexTol || x > bounds->w_max + kSimplexTol) {
                throw ValidationError("weight outside configured bounds");
            }
        }
    }
}

std::vector<std::int32_t> quotas_from_weights(const WeightVector& w, std::int32_t budget,
                                              std::span<const std::int32_t> capacities) {
    w.validate();
    const std::size_t k_channels = w.size();
    if (capacities.size() != k_channels) {
        throw ValidationError("capacity vector does not match channel count");
    }
    if (budget < 0) throw ValidationError("budget must be non-negative");
    std::int64_t total_cap = 0;
    for (std::int32_t c : capacities) {
        if (c < 0) throw ValidationError("capacities must be non-negative");
        total_cap += c;
    }
    if (budget > total_cap) {
        throw ValidationError("budget " + std::to_string(budget) +
                              " exceeds total channel capacity " + std::to_string(total_cap));
    }

    std::vector<std::int32_t> quota(k_channels);
    std::vector<double> frac(k_channels);
    std::int64_t assigned = 0;
    for (std::size_t k = 0; k < k_channels; ++k) {
        const double raw = w[k] * static_cast<double>(budget);
        const double rounded = std::round(raw);  // half away from zero
        quota[k] = static_cast<std::int32_t>(
            std::clamp<double>(rounded, 0.0, static_cast<double>(capacities[k])));
        frac[k] = raw - std::floor(raw);
        assigned += quota[k];
    }

    std::vector<std::size_t> order(k_channels);
    std::iota(order.begin(), order.end(), 0);
    if (assigned < budget) {
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return frac[a] > frac[b]; });
        while (assigned < budget) {
            for (std::size_t k : order) {
                if (assigned == budget) break;
                if (quota[k] < capacities[k]) {
                    ++quota[k];
                    ++assigned;
                }
            }
        }
    } else if (assigned > budget) {
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return frac[a] < frac[b]; });
        while (assigned > budget) {
            for (std::size_t k : order) {
                if (assigned == budget) break;
                if (quota[k] > 0) {
                    --quota[k];
                    --assigned;
                }
            }
        }
    }
    return quota;
}

std::vector<std::int32_t> quotas_from_weights(const WeightVector& w, std::int32_t budget,
                                              std::int32_t uniform_capacity) {
    std::vector<std::int32_t> caps(w.size(), uniform_capacity);
    return quotas_from_weights(w, budget, caps);
}

namespace {

/// Channel visit order: descending weight, ties by lower channel index.
std::vector<std::size_t> scan_order(const WeightVector& w) {
    std::vector<std::size_t> order(w.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return w[a] > w[b]; });
    return order;
}

} // namespace

MergedSet merge_user(const Dataset& ds, UserIndex user, const WeightVector& w,
                     std::int32_t budget, MergeScratch& scratch) {
    if (user < 0 || static_cast<std::size_t>(user) >= ds.num_users()) {
        throw ValidationError("unknown user index " + std::to_string(user));
    }
    if (w.size() != ds.num_channels()) {
        throw ValidationError("weight vector has " + std::to_string(w.size()) +
                              " entries for " + std::to_string(ds.num_channels()) + " channels");
    }
    if (budget <= 0) throw ValidationError("merge budget must be positive");

    const std::size_t u = static_cast<std::size_t>(user);
    const std::size_t k_channels = ds.num_channels();

    std::vector<std::int32_t> caps(k_channels);
    for (std::size_t k = 0; k < k_channels; ++k) {
        caps[k] = static_cast<std::int32_t>(ds.channels[k].lists[u].size());
    }
    const auto quota = quotas_from_weights(w, budget, caps);
    const auto order = scan_order(w);

    MergedSet out;
    out.user = user;
    out.items.reserve(static_cast<std::size_t>(budget));
    out.provenance.reserve(static_cast<std::size_t>(budget));
    scratch.reset(static_cast<std::size_t>(ds.item_universe_size()));

    // Quota phase: top quota_k of each channel, first occurrence wins.
    for (std::size_t k : order) {
        const auto& list = ds.channels[k].lists[u];
        for (std::int32_t r = 0; r < quota[k]; ++r) {
            const ItemIndex item = list[static_cast<std::size_t>(r)];
            if (scratch.test_and_set(item)) continue;
            out.items.push_back(item);
            out.provenance.push_back({static_cast<std::int32_t>(k), r, false});
        }
    }

    // Backfill phase: round-robin over channels in scan order, each drawing
    // its next not-yet-used ranked item.
    if (static_cast<std::int32_t>(out.items.size()) < budget) {
        std::vector<std::int32_t> cursor(k_channels);
        for (std::size_t k = 0; k < k_channels; ++k) cursor[k] = quota[k];
        bool progress = true;
        while (static_cast<std::int32_t>(out.items.size()) < budget && progress) {
            progress = false;
            for (std::size_t k : order) {
                if (static_cast<std::int32_t>(out.items.size()) == budget) break;
                const auto& list = ds.channels[k].lists[u];
                std::int32_t& c = cursor[k];
                while (c < caps[k] && scratch.stamp[static_cast<std::size_t>(list[static_cast<std::size_t>(c)])] == scratch.generation) {
                    ++c;
                }
                if (c >= caps[k]) continue;
                const ItemIndex item = list[static_cast<std::size_t>(c)];
                scratch.test_and_set(item);
                out.items.push_back(item);
                out.provenance.push_back({static_cast<std::int32_t>(k), c, true});
                ++c;
                progress = true;
            }
        }
    }

    out.exhausted = static_cast<std::int32_t>(out.items.size()) < budget;
    return out;
}

MergedSet merge_user(const Dataset& ds, UserIndex user, const WeightVector& w,
                     std::int32_t budget) {
    MergeScratch scratch;
    return merge_user(ds, user, w, budget, scratch);
}

std::vector<MergedSet> merge_all(const Dataset& ds, const WeightVector& w, std::int32_t budget,
                                 int threads) {
    w.validate();
    std::vector<MergedSet> out(ds.num_users());
    parallel_for(ds.num_users(), threads, [&, scratch = MergeScratch{}](std::size_t u) mutable {
        out[u] = merge_user(ds, static_cast<UserIndex>(u), w, budget, scratch);
    });
    return out;
}

std::vector<MergedSet> merge_all(const Dataset& ds, const PersonalizedWeights& pw,
                                 std::int32_t budget, int threads) {
    if (pw.per_user.size() != ds.num_users()) {
        throw ValidationError("personalized weights cover " + std::to_string(pw.per_user.size()) +
                              " users, dataset has " + std::to_string(ds.num_users()));
    }
    for (std::size_t u = 0; u < pw.per_user.size(); ++u) {
        if (pw.per_user[u].w.empty()) {
            throw ValidationError("personalized weights missing user \"" + ds.users[u] + "\"");
        }
    }
    std::vector<MergedSet> out(ds.num_users());
    parallel_for(ds.num_users(), threads, [&, scratch = MergeScratch{}](std::size_t u) mutable {
        out[u] = merge_user(ds, static_cast<UserIndex>(u), pw.per_user[u], budget, scratch);
    });
    return out;
}

WeightVector project_to_bounded_simplex(std::vector<double> raw, double w_min, double w_max) {
    const std::size_t k_channels = raw.size();
    if (k_channels == 0) throw ValidationError("empty weight vector");
    if (!(w_min >= 0.0 && w_min <= w_max && w_max <= 1.0)) {
        throw ValidationError("bounds must satisfy 0 <= w_min <= w_max <= 1");
    }
    const double kd = static_cast<double>(k_channels);
    if (kd * w_min > 1.0 + 1e-12 || kd * w_max < 1.0 - 1e-12) {
        throw ValidationError("infeasible bounds: K*w_min <= 1 <= K*w_max required");
    }

    double sum = 0.0;
    for (double x : raw) {
        if (!std::isfinite(x)) throw ValidationError("weights must be finite");
        sum += std::max(x, 0.0);
    }
    std::vector<double> v(k_channels);
    if (sum > 0.0) {
        for (std::size_t i = 0; i < k_channels; ++i) v[i] = std::max(raw[i], 0.0) / sum;
    } else {
        std::fill(v.begin(), v.end(), 1.0 / kd);
    }

    // Clip, then spread the residual mass over the coordinates the clip has
    // not touched. If a pass clips everything with residual left, fall back
    // to the coordinates with slack in the needed direction.
    std::vector<bool> fixed(k_channels, false);
    for (std::size_t iter = 0; iter <= 2 * k_channels + 1; ++iter) {
        for (std::size_t i = 0; i < k_channels; ++i) {
            const double c = std::clamp(v[i], w_min, w_max);
            if (c != v[i]) {
                v[i] = c;
                fixed[i] = true;
            }
        }
        const double total = std::accumulate(v.begin(), v.end(), 0.0);
        const double deficit = 1.0 - total;
        if (std::abs(deficit) <= 1e-12) break;

        std::vector<std::size_t> receivers;
        for (std::size_t i = 0; i < k_channels; ++i) {
            if (!fixed[i]) receivers.push_back(i);
        }
        if (receivers.empty()) {
            for (std::size_t i = 0; i < k_channels; ++i) {
                const bool has_slack = deficit > 0.0 ? v[i] < w_max - 1e-15
                                                     : v[i] > w_min + 1e-15;
                if (has_slack) {
                    receivers.push_back(i);
                    fixed[i] = false;
                }
            }
        }
        if (receivers.empty()) {
            throw ValidationError("bounded-simplex projection failed to converge");
        }
        double mass = 0.0;
        for (std::size_t i : receivers) mass += v[i];
        for (std::size_t i : receivers) {
            if (mass > 1e-15) {
                v[i] += deficit * v[i] / mass;
            } else {
                v[i] += deficit / static_cast<double>(receivers.size());
            }
        }
    }

    WeightVector out;
    out.w = std::move(v);
    out.bounds = WeightBounds{w_min, w_max};
    out.validate();
    return out;
}

WeightVector baseline_weights(const Dataset& ds, BaselineMode mode,
                              const GroundTruth* validation_truth) {
    const std::size_t k_channels = ds.num_channels();
    if (k_channels == 0) throw ValidationError("dataset has no channels");
    if (mode == BaselineMode::equal) return WeightVector::uniform(k_channels);

    if (validation_truth == nullptr) {
        throw ValidationError("statistical baseline requires validation truth");
    }
    if (validation_truth->relevant.size() != ds.num_users()) {
        throw ValidationError("validation truth is not aligned with the dataset user set");
    }

    std::vector<double> hits(k_channels, 0.0);
    MergeScratch marks;
    for (std::size_t u = 0; u < ds.num_users(); ++u) {
        const auto& rel = validation_truth->relevant[u];
        if (rel.empty()) continue;
        marks.reset(static_cast<std::size_t>(ds.item_universe_size()));
        for (ItemIndex it : rel) marks.test_and_set(it);
        for (std::size_t k = 0; k < k_channels; ++k) {
            for (ItemIndex it : ds.channels[k].lists[u]) {
                if (marks.stamp[static_cast<std::size_t>(it)] == marks.generation) hits[k] += 1.0;
            }
        }
    }
    const double total = std::accumulate(hits.begin(), hits.end(), 0.0);
    if (total <= 0.0) return WeightVector::uniform(k_channels);
    return WeightVector::normalized(std::move(hits));
}

} // namespace fuse
