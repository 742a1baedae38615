#include "ckgr/sweep.hpp"

#include <chrono>

#include "ckgr/errors.hpp"

namespace ckgr {

MetricSummary evaluate_model(const ModelState& state, const PreparedDataset& data, EvalSplit split, std::size_t k,
                             std::size_t workers) {
    const Representations reps = compute_representations(state, data.user_side.kg, data.item_side.kg);
    const ModelRanker ranker(reps);
    const auto& truth = split == EvalSplit::Test ? data.test_items : data.validation_items;
    return evaluate_ranker(ranker, data.train_items, truth, k, workers);
}

EvalReport sweep_layers(const PreparedDataset& data, const std::vector<std::size_t>& layer_values,
                        const Hyperparameters& base, const SweepProgress& progress) {
    EvalReport report;
    for (const std::size_t layers : layer_values) {
        if (layers == 0) throw ConfigError("layer sweep values must be at least 1");
        const auto t0 = std::chrono::steady_clock::now();
        Hyperparameters hp = base;
        hp.layers = layers;
        TrainResult trained = train(init_model(hp, data), data);
        if (progress.on_trained) progress.on_trained(layers, trained);
        const MetricSummary m = evaluate_model(trained.state, data, EvalSplit::Test, hp.eval_k, hp.workers);
        const auto t1 = std::chrono::steady_clock::now();
        report.rows.push_back({"L=" + std::to_string(layers), hp.eval_k, m.precision, m.recall, hp.seed,
                               std::chrono::duration<double, std::milli>(t1 - t0).count()});
    }
    return report;
}

}  // namespace ckgr
