#pragma once

#include <json.hpp>

#include <cstdint>
#include <deque>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace twinwatch {

/// Topic contract used across the pipeline.
namespace topics {
inline constexpr const char* trajectory_ready = "run.trajectory_ready";
inline constexpr const char* measured_ready = "run.measured_ready";
inline constexpr const char* simulation_completed = "run.simulation_completed";
inline constexpr const char* verdict = "run.verdict";
inline constexpr const char* params_updated = "twin.params_updated";
} // namespace topics

struct Event {
    std::string topic;
    nlohmann::json payload;
    std::uint64_t seq = 0;   // strictly increasing per bus
    double emitted_at = 0.0; // run-relative or wall time, publisher's choice
};

/// In-process publish/subscribe channel standing in for an external message
/// broker: thread-safe publish, per-subscriber bounded queues, exact-topic
/// and single-level-wildcard subscriptions.
class EventBus {
public:
    explicit EventBus(std::size_t queue_capacity = 10000);
    ~EventBus();

    class Subscription {
    public:
        Subscription() = default;

        /// Next queued event in per-topic publish order, if any.
        std::optional<Event> poll();
        std::vector<Event> drain();
        void unsubscribe();
        bool active() const;

    private:
        friend class EventBus;
        struct State;
        std::shared_ptr<State> state_;
    };

    /// Validates the pattern (`a.b`, `run.*`) and registers a queue for it.
    Subscription subscribe(const std::string& topic_pattern);

    /// Delivers to every current subscriber whose pattern matches; returns the
    /// event's sequence number. A full subscriber queue rejects the publish
    /// with an error rather than dropping silently; a closed bus raises
    /// LifecycleError.
    std::uint64_t publish(const std::string& topic, nlohmann::json payload, double emitted_at = 0.0);

    void close();
    bool closed() const;

    static bool pattern_matches(const std::string& pattern, const std::string& topic);

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

} // namespace twinwatch
