#pragma once

// Master-worker evaluation of cell increments. Workers are persistent
// threads fed through per-worker message channels; every round hands each
// worker its slice of meso states and loadings and collects the results,
// merged in point id order.

#include <condition_variable>
#include <deque>
#include <functional>
#include <iosfwd>
#include <map>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "mfe2/homogenization.hpp"

namespace mfe2 {

enum class PartitionPolicy { contiguous, region_aware };

PartitionPolicy partition_policy_from_string(const std::string& s);
const char* to_string(PartitionPolicy p);

struct Partition {
    std::vector<std::vector<int>> loads; // worker -> point ids
    double balance = 1.0;                // max load / mean load
    std::vector<std::string> warnings;

    std::size_t workers() const { return loads.size(); }
};

// points[i] carries label regions[i]. Contiguous splits the list into equal
// chunks; region-aware gives each region a share of the workers proportional
// to its size so that points of one cell type stay together.
Partition partition_points(const std::vector<int>& points, const std::vector<int>& regions,
                           int n_workers, PartitionPolicy policy);

struct WorkItem {
    int point = 0;
    MacroLoading loading;
};

struct WorkBatch {
    int batch_id = 0;
    int worker = 0;
    std::vector<WorkItem> items;
};

using RegistrySlice = std::map<int, MesoState>;

struct PointResult {
    int point = 0;
    EffectiveResponse response;
    MesoState state;
};

struct PointFailure {
    int point = 0;
    std::string message;
};

struct BatchResult {
    int batch_id = 0;
    int worker = 0;
    std::vector<PointResult> results; // ascending point id
    std::vector<PointFailure> failures;
    double wall_seconds = 0.0;
};

using PointEvaluator =
    std::function<RveResult(int point, const MesoState& state, const MacroLoading& loading)>;

BatchResult evaluate_batch(const WorkBatch& batch, const RegistrySlice& slice,
                           const PointEvaluator& evaluate);

// Persistent threads, each with its own job queue.
class WorkerPool {
public:
    explicit WorkerPool(int n_workers);
    ~WorkerPool();
    WorkerPool(const WorkerPool&) = delete;
    WorkerPool& operator=(const WorkerPool&) = delete;

    int size() const { return static_cast<int>(channels_.size()); }
    // Runs jobs[i] on worker i % size() and waits for all of them.
    void run(std::vector<std::function<void()>> jobs);

private:
    struct Channel {
        std::mutex mutex;
        std::condition_variable cv;
        std::deque<std::function<void()>> queue;
        bool stop = false;
    };
    void loop(Channel& ch);

    std::vector<std::unique_ptr<Channel>> channels_;
    std::vector<std::thread> threads_;
    std::mutex done_mutex_;
    std::condition_variable done_cv_;
    int pending_ = 0;
};

struct BatchTiming {
    int batch_id = 0;
    int worker = 0;
    int size = 0;
    double wall_seconds = 0.0;
};

struct RoundLog {
    int round = 0;
    double wall_seconds = 0.0;
    std::vector<BatchTiming> batches;
};

// A failed round; the message names every failed point.
class RoundFailure : public ConvergenceError {
public:
    RoundFailure(const std::string& what, std::vector<PointFailure> failures)
        : ConvergenceError(what, {}), failures_(std::move(failures)) {}
    const std::vector<PointFailure>& failures() const { return failures_; }

private:
    std::vector<PointFailure> failures_;
};

struct RoundResult {
    std::vector<PointResult> results; // ascending point id
    RoundLog log;
};

// Evaluates every point of the partition. states and loadings are indexed by
// point id. Runs on the pool when one is given and has more than one worker.
RoundResult run_round(const Partition& partition, const std::vector<MesoState>& states,
                      const std::vector<MacroLoading>& loadings, const PointEvaluator& evaluate,
                      WorkerPool* pool = nullptr, int round = 0);

// Partition plus pool plus the accumulated round log.
class Scheduler {
public:
    Scheduler(int n_workers, PartitionPolicy policy);

    void plan(const std::vector<int>& points, const std::vector<int>& regions);
    const Partition& partition() const { return partition_; }
    int workers() const { return n_workers_; }

    RoundResult run(const std::vector<MesoState>& states, const std::vector<MacroLoading>& loadings,
                    const PointEvaluator& evaluate);

    const std::vector<RoundLog>& log() const { return log_; }
    double total_round_seconds() const;

private:
    int n_workers_;
    PartitionPolicy policy_;
    Partition partition_;
    std::unique_ptr<WorkerPool> pool_;
    std::vector<RoundLog> log_;
};

// One line per batch: round, batch, worker, size, seconds.
void write_round_log(std::ostream& os, const std::vector<RoundLog>& log);

} // namespace mfe2
