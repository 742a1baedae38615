#include "ckgr/eval.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <sstream>
#include <thread>
#include <unordered_map>

#include "ckgr/errors.hpp"
#include "ckgr/numeric.hpp"

namespace ckgr {

Split split_dataset(std::span<const InteractionRecord> records, std::array<double, 3> ratios, std::uint64_t seed) {
    for (double r : ratios) {
        if (!(r >= 0.0) || !std::isfinite(r)) throw ConfigError("split ratios must be non-negative");
    }
    if (!(ratios[0] > 0.0)) throw ConfigError("train ratio must be positive");
    const double sum = ratios[0] + ratios[1] + ratios[2];
    if (std::abs(sum - 1.0) > 1e-9) {
        throw ConfigError("split ratios must sum to 1 (got " + std::to_string(sum) + ")");
    }

    std::vector<std::string> user_order;
    std::unordered_map<std::string, std::vector<std::size_t>> by_user;
    for (std::size_t i = 0; i < records.size(); ++i) {
        auto [it, inserted] = by_user.try_emplace(records[i].user);
        if (inserted) user_order.push_back(records[i].user);
        it->second.push_back(i);
    }

    // 0 = train, 1 = validation, 2 = test
    std::vector<std::uint8_t> part(records.size(), 0);
    Rng rng(seed, 0x5b1f);
    for (const auto& user : user_order) {
        auto positions = by_user[user];
        const std::size_t n = positions.size();
        if (n < 3) continue;
        auto stochastic_round = [&](double x) {
            const double f = std::floor(x);
            return static_cast<std::size_t>(f) + (rng.uniform() < x - f ? 1 : 0);
        };
        std::size_t n_val = stochastic_round(static_cast<double>(n) * ratios[1]);
        std::size_t n_test = stochastic_round(static_cast<double>(n) * ratios[2]);
        while (n_val + n_test >= n) {
            if (n_test >= n_val && n_test > 0) {
                --n_test;
            } else {
                --n_val;
            }
        }
        shuffle(positions, rng);
        for (std::size_t j = 0; j < n_val; ++j) part[positions[j]] = 1;
        for (std::size_t j = n_val; j < n_val + n_test; ++j) part[positions[j]] = 2;
    }

    Split s;
    s.seed = seed;
    s.ratios = ratios;
    for (std::size_t i = 0; i < records.size(); ++i) {
        (part[i] == 0 ? s.train : part[i] == 1 ? s.validation : s.test).push_back(records[i]);
    }
    return s;
}

std::vector<ItemIndex> topk(std::span<const double> scores, std::size_t k, std::span<const ItemIndex> exclude_sorted) {
    std::vector<ItemIndex> candidates;
    candidates.reserve(scores.size());
    for (ItemIndex i = 0; i < scores.size(); ++i) {
        if (!std::binary_search(exclude_sorted.begin(), exclude_sorted.end(), i)) candidates.push_back(i);
    }
    auto better = [&](ItemIndex a, ItemIndex b) { return scores[a] > scores[b] || (scores[a] == scores[b] && a < b); };
    const std::size_t n = std::min(k, candidates.size());
    std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(n), candidates.end(), better);
    candidates.resize(n);
    return candidates;
}

PrecisionRecall precision_recall_at_k(std::span<const ItemIndex> recommended, std::span<const ItemIndex> truth,
                                      std::size_t k) {
    if (k == 0) throw ConfigError("K must be at least 1");
    if (recommended.size() > k) throw ConfigError("recommendation list longer than K");
    PrecisionRecall pr;
    for (ItemIndex i : recommended) {
        if (std::binary_search(truth.begin(), truth.end(), i)) ++pr.hits;
    }
    pr.precision = static_cast<double>(pr.hits) / static_cast<double>(k);
    pr.recall = truth.empty() ? 0.0 : static_cast<double>(pr.hits) / static_cast<double>(truth.size());
    return pr;
}

PopularityRanker::PopularityRanker(const UserItemLists& train_items, std::size_t item_count) : counts_(item_count, 0.0) {
    for (const auto& items : train_items) {
        for (ItemIndex i : items) counts_.at(i) += 1.0;
    }
}

void PopularityRanker::score(UserIndex, std::span<double> out) const { std::copy(counts_.begin(), counts_.end(), out.begin()); }

void RandomRanker::score(UserIndex user, std::span<double> out) const {
    std::vector<ItemIndex> order(items_);
    std::iota(order.begin(), order.end(), ItemIndex{0});
    Rng rng(seed_, user);
    shuffle(order, rng);
    for (std::size_t pos = 0; pos < order.size(); ++pos) out[order[pos]] = -static_cast<double>(pos);
}

void OracleRanker::score(UserIndex user, std::span<double> out) const {
    std::fill(out.begin(), out.end(), 0.0);
    if (user < truth_->size()) {
        for (ItemIndex i : (*truth_)[user]) out[i] = 1.0;
    }
}

namespace {

struct UserMetric {
    double precision = 0.0;
    double recall = 0.0;
    bool counted = false;
};

UserMetric evaluate_user(const Ranker& ranker, const UserItemLists& exclude, const UserItemLists& truth, std::size_t k,
                         UserIndex u, std::vector<double>& scores) {
    UserMetric m;
    if (u >= truth.size() || truth[u].empty()) return m;
    ranker.score(u, scores);
    static const std::vector<ItemIndex> kNone;
    const auto& ex = u < exclude.size() ? exclude[u] : kNone;
    const auto rec = topk(scores, k, ex);
    const auto pr = precision_recall_at_k(rec, truth[u], k);
    m.precision = pr.precision;
    m.recall = pr.recall;
    m.counted = true;
    return m;
}

MetricSummary reduce(std::span<const UserMetric> per_user) {
    MetricSummary s;
    for (const auto& m : per_user) {
        if (!m.counted) continue;
        s.precision += m.precision;
        s.recall += m.recall;
        ++s.users;
    }
    if (s.users) {
        s.precision /= static_cast<double>(s.users);
        s.recall /= static_cast<double>(s.users);
    }
    return s;
}

}  // namespace

MetricSummary evaluate_ranker(const Ranker& ranker, const UserItemLists& exclude, const UserItemLists& truth,
                              std::size_t k, std::size_t workers) {
    if (k == 0) throw ConfigError("K must be at least 1");
    const std::size_t n = truth.size();
    std::vector<UserMetric> per_user(n);
    workers = std::max<std::size_t>(1, std::min(workers, n));
    auto run = [&](std::size_t begin, std::size_t end) {
        std::vector<double> scores(ranker.item_count());
        for (std::size_t u = begin; u < end; ++u) {
            per_user[u] = evaluate_user(ranker, exclude, truth, k, static_cast<UserIndex>(u), scores);
        }
    };
    if (workers == 1) {
        run(0, n);
    } else {
        std::vector<std::thread> threads;
        const std::size_t chunk = (n + workers - 1) / workers;
        for (std::size_t w = 0; w < workers; ++w) {
            const std::size_t b = w * chunk, e = std::min(n, b + chunk);
            if (b < e) threads.emplace_back(run, b, e);
        }
        for (auto& t : threads) t.join();
    }
    return reduce(per_user);
}

MetricSummary evaluate_ranker(const Ranker& ranker, const UserItemLists& exclude, const UserItemLists& truth,
                              std::size_t k, std::span<const UserIndex> order) {
    if (k == 0) throw ConfigError("K must be at least 1");
    std::vector<UserMetric> per_user;
    std::vector<double> scores(ranker.item_count());
    for (UserIndex u : order) per_user.push_back(evaluate_user(ranker, exclude, truth, k, u, scores));
    return reduce(per_user);
}

void EvalReport::write_csv(std::ostream& os) const {
    os << "label,K,precision,recall,seed,wall_ms\n";
    for (const auto& r : rows) {
        std::ostringstream line;
        line << r.label << ',' << r.k << ',' << std::setprecision(6) << std::fixed << r.precision << ',' << r.recall
             << ',' << r.seed << ',' << std::setprecision(1) << r.wall_ms << '\n';
        os << line.str();
    }
}

}  // namespace ckgr
