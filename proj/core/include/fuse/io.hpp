#pragma once

#include <string>
#include <vector>

#include "fuse/bayesopt.hpp"
#include "fuse/dataset.hpp"
#include "fuse/fusion.hpp"
#include "fuse/metrics.hpp"

namespace fuse::io {

std::string read_text(const std::string& path);
void save_text(const std::string& path, const std::string& text);

/// Weights file: {"weights": [...], "channel_names": [...], "source": "..."}.
struct WeightsDoc {
    WeightVector weights;
    std::vector<std::string> channel_names;
    std::string source;
};

std::string weights_json(const WeightsDoc& doc);
WeightsDoc parse_weights_json(const std::string& text);

/// Personalized weights as JSONL {"user": "...", "weights": [...]}.
std::string personalized_jsonl(const PersonalizedWeights& pw, const Dataset& ds);
PersonalizedWeights parse_personalized_jsonl(const std::string& text, const Dataset& ds);

/// Merged sets as JSONL {"user": "...", "items": [...], "backfilled": n}.
std::string merged_jsonl(const std::vector<MergedSet>& merged, const Dataset& ds);

/// BayesOpt trace: per call (beta, score, EI at selection).
std::string bo_trace_json(const bayesopt::BoResult& result);

/// RFC-4180 CSV with a header row of channel names.
std::string matrix_csv(const std::vector<std::vector<double>>& matrix,
                       const std::vector<std::string>& channel_names);

} // namespace fuse::io
