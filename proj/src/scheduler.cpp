#include "mfe2/scheduler.hpp"

#include <algorithm>
#include <chrono>
#include <ostream>
#include <set>
#include <sstream>

#include "mfe2/error.hpp"

namespace mfe2 {

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0)
{
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void split_contiguous(const std::vector<int>& points, int parts, std::vector<std::vector<int>>& out)
{
    const std::size_t n = points.size();
    const auto k = static_cast<std::size_t>(parts);
    std::size_t pos = 0;
    for (std::size_t w = 0; w < k; ++w) {
        const std::size_t len = n / k + (w < n % k ? 1 : 0);
        out.emplace_back(points.begin() + static_cast<std::ptrdiff_t>(pos),
                         points.begin() + static_cast<std::ptrdiff_t>(pos + len));
        pos += len;
    }
}

} // namespace

PartitionPolicy partition_policy_from_string(const std::string& s)
{
    if (s == "contiguous") return PartitionPolicy::contiguous;
    if (s == "region-aware" || s == "region_aware") return PartitionPolicy::region_aware;
    throw InputError("unknown partition policy '" + s + "'");
}

const char* to_string(PartitionPolicy p)
{
    return p == PartitionPolicy::contiguous ? "contiguous" : "region-aware";
}

Partition partition_points(const std::vector<int>& points, const std::vector<int>& regions,
                           int n_workers, PartitionPolicy policy)
{
    if (n_workers < 1) {
        throw InputError("at least one worker is required");
    }
    if (regions.size() != points.size()) {
        throw InputError("every point needs a region label");
    }
    if (std::set<int>(points.begin(), points.end()).size() != points.size()) {
        throw InputError("point ids must be unique");
    }

    Partition p;
    if (policy == PartitionPolicy::contiguous || points.empty()) {
        split_contiguous(points, n_workers, p.loads);
    } else {
        std::map<int, std::vector<int>> groups;
        for (std::size_t i = 0; i < points.size(); ++i) groups[regions[i]].push_back(points[i]);
        std::vector<const std::vector<int>*> order;
        for (const auto& [label, pts] : groups) order.push_back(&pts);
        const auto w = static_cast<std::size_t>(n_workers);

        if (w >= order.size()) {
            // One worker per region, the rest handed out to the region with
            // the largest load per worker.
            std::vector<int> share(order.size(), 1);
            for (std::size_t extra = order.size(); extra < w; ++extra) {
                std::size_t best = 0;
                double best_load = -1.0;
                for (std::size_t r = 0; r < order.size(); ++r) {
                    const double load = static_cast<double>(order[r]->size()) / share[r];
                    if (load > best_load) {
                        best_load = load;
                        best = r;
                    }
                }
                ++share[best];
            }
            for (std::size_t r = 0; r < order.size(); ++r) split_contiguous(*order[r], share[r], p.loads);
            while (p.loads.size() < w) p.loads.emplace_back();
        } else {
            // Fewer workers than regions: whole regions, largest first, to
            // the least loaded worker.
            std::vector<std::size_t> idx(order.size());
            for (std::size_t r = 0; r < idx.size(); ++r) idx[r] = r;
            std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
                return order[a]->size() > order[b]->size();
            });
            p.loads.assign(w, {});
            for (std::size_t r : idx) {
                std::size_t target = 0;
                for (std::size_t k = 1; k < w; ++k) {
                    if (p.loads[k].size() < p.loads[target].size()) target = k;
                }
                p.loads[target].insert(p.loads[target].end(), order[r]->begin(), order[r]->end());
            }
            for (auto& l : p.loads) std::sort(l.begin(), l.end());
        }
    }

    std::size_t max_load = 0;
    int empty = 0;
    for (const auto& l : p.loads) {
        max_load = std::max(max_load, l.size());
        if (l.empty()) ++empty;
    }
    const double mean = static_cast<double>(points.size()) / n_workers;
    p.balance = mean > 0.0 ? static_cast<double>(max_load) / mean : 1.0;
    if (empty > 0) {
        p.warnings.push_back(std::to_string(empty) + " of " + std::to_string(n_workers) +
                             " workers received no points");
    }
    return p;
}

BatchResult evaluate_batch(const WorkBatch& batch, const RegistrySlice& slice,
                           const PointEvaluator& evaluate)
{
    const auto t0 = std::chrono::steady_clock::now();
    BatchResult out;
    out.batch_id = batch.batch_id;
    out.worker = batch.worker;

    std::vector<const WorkItem*> items;
    std::set<int> seen;
    for (const auto& it : batch.items) {
        if (!seen.insert(it.point).second) {
            throw InputError("point " + std::to_string(it.point) + " appears twice in a batch");
        }
        if (slice.find(it.point) == slice.end()) {
            throw InputError("registry slice lacks point " + std::to_string(it.point));
        }
        items.push_back(&it);
    }
    std::sort(items.begin(), items.end(),
              [](const WorkItem* a, const WorkItem* b) { return a->point < b->point; });

    for (const WorkItem* it : items) {
        try {
            RveResult r = evaluate(it->point, slice.at(it->point), it->loading);
            out.results.push_back({it->point, std::move(r.response), std::move(r.state)});
        } catch (const std::exception& e) {
            out.failures.push_back({it->point, e.what()});
        }
    }
    out.wall_seconds = seconds_since(t0);
    return out;
}

WorkerPool::WorkerPool(int n_workers)
{
    if (n_workers < 1) {
        throw InputError("worker pool needs at least one worker");
    }
    for (int i = 0; i < n_workers; ++i) channels_.push_back(std::make_unique<Channel>());
    for (int i = 0; i < n_workers; ++i) {
        threads_.emplace_back([this, i] { loop(*channels_[static_cast<std::size_t>(i)]); });
    }
}

WorkerPool::~WorkerPool()
{
    for (auto& ch : channels_) {
        {
            std::lock_guard<std::mutex> lock(ch->mutex);
            ch->stop = true;
        }
        ch->cv.notify_one();
    }
    for (auto& t : threads_) t.join();
}

void WorkerPool::loop(Channel& ch)
{
    for (;;) {
        std::function<void()> job;
        {
            std::unique_lock<std::mutex> lock(ch.mutex);
            ch.cv.wait(lock, [&] { return ch.stop || !ch.queue.empty(); });
            if (ch.queue.empty()) return;
            job = std::move(ch.queue.front());
            ch.queue.pop_front();
        }
        try {
            job();
        } catch (...) {
            // Jobs report their own failures; never let one escape a worker.
        }
        {
            std::lock_guard<std::mutex> lock(done_mutex_);
            --pending_;
        }
        done_cv_.notify_all();
    }
}

void WorkerPool::run(std::vector<std::function<void()>> jobs)
{
    {
        std::lock_guard<std::mutex> lock(done_mutex_);
        pending_ += static_cast<int>(jobs.size());
    }
    for (std::size_t i = 0; i < jobs.size(); ++i) {
        Channel& ch = *channels_[i % channels_.size()];
        {
            std::lock_guard<std::mutex> lock(ch.mutex);
            ch.queue.push_back(std::move(jobs[i]));
        }
        ch.cv.notify_one();
    }
    std::unique_lock<std::mutex> lock(done_mutex_);
    done_cv_.wait(lock, [&] { return pending_ == 0; });
}

RoundResult run_round(const Partition& partition, const std::vector<MesoState>& states,
                      const std::vector<MacroLoading>& loadings, const PointEvaluator& evaluate,
                      WorkerPool* pool, int round)
{
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<WorkBatch> batches;
    std::vector<RegistrySlice> slices;
    for (std::size_t w = 0; w < partition.loads.size(); ++w) {
        if (partition.loads[w].empty()) continue;
        WorkBatch b;
        b.batch_id = static_cast<int>(batches.size());
        b.worker = static_cast<int>(w);
        RegistrySlice slice;
        for (int id : partition.loads[w]) {
            if (id < 0 || static_cast<std::size_t>(id) >= states.size() ||
                static_cast<std::size_t>(id) >= loadings.size()) {
                throw InputError("round lacks state or loading for point " + std::to_string(id));
            }
            b.items.push_back({id, loadings[static_cast<std::size_t>(id)]});
            slice.emplace(id, states[static_cast<std::size_t>(id)]);
        }
        batches.push_back(std::move(b));
        slices.push_back(std::move(slice));
    }

    std::vector<BatchResult> results(batches.size());
    std::vector<std::string> errors(batches.size());
    auto job = [&](std::size_t i) {
        try {
            results[i] = evaluate_batch(batches[i], slices[i], evaluate);
        } catch (const std::exception& e) {
            errors[i] = e.what();
        }
    };
    if (pool && pool->size() > 1) {
        std::vector<std::function<void()>> jobs;
        for (std::size_t i = 0; i < batches.size(); ++i) jobs.emplace_back([&job, i] { job(i); });
        pool->run(std::move(jobs));
    } else {
        for (std::size_t i = 0; i < batches.size(); ++i) job(i);
    }

    RoundResult out;
    out.log.round = round;
    std::vector<PointFailure> failures;
    for (std::size_t i = 0; i < batches.size(); ++i) {
        if (!errors[i].empty()) {
            throw InputError("batch " + std::to_string(i) + " could not run: " + errors[i]);
        }
        auto& r = results[i];
        out.log.batches.push_back({r.batch_id, r.worker, static_cast<int>(batches[i].items.size()),
                                   r.wall_seconds});
        for (auto& pr : r.results) out.results.push_back(std::move(pr));
        failures.insert(failures.end(), r.failures.begin(), r.failures.end());
    }
    std::sort(out.results.begin(), out.results.end(),
              [](const PointResult& a, const PointResult& b) { return a.point < b.point; });
    if (!failures.empty()) {
        std::sort(failures.begin(), failures.end(),
                  [](const PointFailure& a, const PointFailure& b) { return a.point < b.point; });
        std::ostringstream os;
        os << "cell evaluation failed at point";
        os << (failures.size() > 1 ? "s " : " ");
        for (std::size_t i = 0; i < failures.size(); ++i) os << (i ? ", " : "") << failures[i].point;
        os << ": " << failures.front().message;
        throw RoundFailure(os.str(), std::move(failures));
    }
    out.log.wall_seconds = seconds_since(t0);
    return out;
}

Scheduler::Scheduler(int n_workers, PartitionPolicy policy) : n_workers_(n_workers), policy_(policy)
{
    if (n_workers < 1) {
        throw InputError("at least one worker is required");
    }
    if (n_workers > 1) pool_ = std::make_unique<WorkerPool>(n_workers);
}

void Scheduler::plan(const std::vector<int>& points, const std::vector<int>& regions)
{
    partition_ = partition_points(points, regions, n_workers_, policy_);
}

RoundResult Scheduler::run(const std::vector<MesoState>& states,
                           const std::vector<MacroLoading>& loadings, const PointEvaluator& evaluate)
{
    RoundResult r = run_round(partition_, states, loadings, evaluate, pool_.get(),
                              static_cast<int>(log_.size()));
    log_.push_back(r.log);
    return r;
}

double Scheduler::total_round_seconds() const
{
    double s = 0.0;
    for (const auto& r : log_) s += r.wall_seconds;
    return s;
}

void write_round_log(std::ostream& os, const std::vector<RoundLog>& log)
{
    os << "round,batch,worker,size,batch_seconds,round_seconds\n";
    for (const auto& r : log) {
        for (const auto& b : r.batches) {
            os << r.round << ',' << b.batch_id << ',' << b.worker << ',' << b.size << ','
               << b.wall_seconds << ',' << r.wall_seconds << '\n';
        }
    }
}

} // namespace mfe2
