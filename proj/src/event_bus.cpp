#include "twinwatch/event_bus.hpp"

#include "twinwatch/errors.hpp"

#include <algorithm>
#include <cctype>

namespace twinwatch {

namespace {

std::vector<std::string> split_segments(const std::string& s) {
    std::vector<std::string> out;
    std::size_t pos = 0;
    while (pos <= s.size()) {
        const std::size_t dot = s.find('.', pos);
        if (dot == std::string::npos) {
            out.push_back(s.substr(pos));
            break;
        }
        out.push_back(s.substr(pos, dot - pos));
        pos = dot + 1;
    }
    return out;
}

bool valid_segment(const std::string& seg, bool allow_wildcard) {
    if (seg.empty()) return false;
    if (seg == "*") return allow_wildcard;
    return std::all_of(seg.begin(), seg.end(),
                       [](unsigned char c) { return std::isalnum(c) || c == '_'; });
}

void validate_pattern(const std::string& pattern) {
    const auto segs = split_segments(pattern);
    if (segs.empty()) throw ConfigError("event bus: empty topic pattern");
    for (const auto& seg : segs)
        if (!valid_segment(seg, true)) throw ConfigError("event bus: invalid pattern: " + pattern);
}

void validate_topic(const std::string& topic) {
    const auto segs = split_segments(topic);
    if (segs.empty()) throw ConfigError("event bus: empty topic");
    for (const auto& seg : segs)
        if (!valid_segment(seg, false)) throw ConfigError("event bus: invalid topic: " + topic);
}

} // namespace

struct EventBus::Subscription::State {
    std::string pattern;
    std::deque<Event> queue;
    std::mutex* bus_mutex = nullptr;
    bool active = true;
};

struct EventBus::Impl {
    mutable std::mutex mutex;
    std::vector<std::shared_ptr<Subscription::State>> subscribers;
    std::size_t queue_capacity;
    std::uint64_t next_seq = 1;
    bool closed = false;
};

EventBus::EventBus(std::size_t queue_capacity) : impl_(std::make_unique<Impl>()) {
    impl_->queue_capacity = queue_capacity;
}

EventBus::~EventBus() = default;

bool EventBus::pattern_matches(const std::string& pattern, const std::string& topic) {
    const auto ps = split_segments(pattern);
    const auto ts = split_segments(topic);
    if (ps.size() != ts.size()) return false;
    for (std::size_t i = 0; i < ps.size(); ++i)
        if (ps[i] != "*" && ps[i] != ts[i]) return false;
    return true;
}

EventBus::Subscription EventBus::subscribe(const std::string& topic_pattern) {
    validate_pattern(topic_pattern);
    std::lock_guard<std::mutex> lock(impl_->mutex);
    if (impl_->closed) throw LifecycleError("event bus: subscribe on closed bus");
    auto state = std::make_shared<Subscription::State>();
    state->pattern = topic_pattern;
    state->bus_mutex = &impl_->mutex;
    impl_->subscribers.push_back(state);
    Subscription sub;
    sub.state_ = state;
    return sub;
}

std::uint64_t EventBus::publish(const std::string& topic, nlohmann::json payload, double emitted_at) {
    validate_topic(topic);
    std::lock_guard<std::mutex> lock(impl_->mutex);
    if (impl_->closed) throw LifecycleError("event bus: publish on closed bus");

    Event ev;
    ev.topic = topic;
    ev.payload = std::move(payload);
    ev.seq = impl_->next_seq++;
    ev.emitted_at = emitted_at;

    for (auto& sub : impl_->subscribers) {
        if (!sub->active || !pattern_matches(sub->pattern, topic)) continue;
        if (sub->queue.size() >= impl_->queue_capacity)
            throw OverflowError("event bus: subscriber queue for '" + sub->pattern + "' is full");
        sub->queue.push_back(ev);
    }
    return ev.seq;
}

void EventBus::close() {
    std::lock_guard<std::mutex> lock(impl_->mutex);
    impl_->closed = true;
}

bool EventBus::closed() const {
    std::lock_guard<std::mutex> lock(impl_->mutex);
    return impl_->closed;
}

std::optional<Event> EventBus::Subscription::poll() {
    if (!state_) return std::nullopt;
    std::lock_guard<std::mutex> lock(*state_->bus_mutex);
    if (!state_->active || state_->queue.empty()) return std::nullopt;
    Event ev = std::move(state_->queue.front());
    state_->queue.pop_front();
    return ev;
}

std::vector<Event> EventBus::Subscription::drain() {
    std::vector<Event> out;
    if (!state_) return out;
    std::lock_guard<std::mutex> lock(*state_->bus_mutex);
    while (state_->active && !state_->queue.empty()) {
        out.push_back(std::move(state_->queue.front()));
        state_->queue.pop_front();
    }
    return out;
}

void EventBus::Subscription::unsubscribe() {
    if (!state_) return;
    std::lock_guard<std::mutex> lock(*state_->bus_mutex);
    state_->active = false;
    state_->queue.clear();
}

bool EventBus::Subscription::active() const {
    if (!state_) return false;
    std::lock_guard<std::mutex> lock(*state_->bus_mutex);
    return state_->active;
}

} // namespace twinwatch
