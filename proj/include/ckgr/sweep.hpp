#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "ckgr/dataset.hpp"
#include "ckgr/eval.hpp"
#include "ckgr/trainer.hpp"

namespace ckgr {

enum class EvalSplit { Validation, Test };

// Ranks every user's full catalog minus their train items against the chosen split.
MetricSummary evaluate_model(const ModelState& state, const PreparedDataset& data, EvalSplit split, std::size_t k,
                             std::size_t workers = 1);

struct SweepProgress {
    std::function<void(std::size_t layers, const TrainResult&)> on_trained;
};

// Trains and test-evaluates one model per depth, rows labeled "L=<n>". `base.layer_dims` is
// extended with its last entry when a depth needs more layers.
EvalReport sweep_layers(const PreparedDataset& data, const std::vector<std::size_t>& layer_values,
                        const Hyperparameters& base, const SweepProgress& progress = {});

}  // namespace ckgr
