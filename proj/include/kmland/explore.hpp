#pragma once

#include "kmland/kmeans.hpp"

#include <algorithm>
#include <cstdint>
#include <thread>
#include <vector>

namespace kmland {

struct ExploreReport {
    int starts = 0;
    int inserted = 0;
    int duplicates = 0;
    int empty_cluster = 0;
    int not_converged = 0;
};

/// Minimises `n_starts` uniform random starts (start i seeded with start_seed(seed, first_start + i))
/// and merges the results into `store` in start order, so the store is identical for any thread count.
inline ExploreReport explore(const Dataset& d, int k, int n_starts, std::uint64_t seed, MinimaStore& store,
                             int threads = 1, std::uint64_t first_start = 0, const MinimizeOptions& opt = {}) {
    ExploreReport report;
    report.starts = n_starts;
    threads = std::max(1, threads);
    const int chunk = std::max(64, 16 * threads);
    std::vector<MinimumCandidate> results;
    for (int begin = 0; begin < n_starts; begin += chunk) {
        const int count = std::min(chunk, n_starts - begin);
        results.assign(static_cast<std::size_t>(count), {});
        auto work = [&](int t) {
            for (int j = t; j < count; j += threads) {
                const auto index = first_start + static_cast<std::uint64_t>(begin + j);
                const Matrix start = sample_uniform_start(d, k, start_seed(seed, index));
                results[static_cast<std::size_t>(j)] = local_minimize(d.points, start, opt);
            }
        };
        if (threads == 1) {
            work(0);
        } else {
            std::vector<std::jthread> pool;
            for (int t = 0; t < threads; ++t) pool.emplace_back(work, t);
        }
        for (const auto& c : results) {
            switch (c.status) {
                case CandidateStatus::empty_cluster: ++report.empty_cluster; continue;
                case CandidateStatus::not_converged: ++report.not_converged; continue;
                case CandidateStatus::valid: break;
            }
            const auto outcome = store.insert(c);
            if (outcome.kind == InsertKind::inserted) {
                ++report.inserted;
            } else {
                ++report.duplicates;
            }
        }
    }
    return report;
}

}  // namespace kmland
