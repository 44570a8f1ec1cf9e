#pragma once

#include "clock.hpp"
#include "errors.hpp"
#include "event.hpp"

#include <algorithm>
#include <chrono>
#include <condition_variable>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <thread>
#include <unordered_set>
#include <utility>
#include <vector>

namespace teamline {

struct TimelineOptions {
    // When false a repeated filename raises DuplicateFilename instead.
    bool auto_suffix_filenames = true;
};

/// Seconds after which an unanswered TypingStarted stops counting.
inline constexpr TimeMs kTypingExpiryMs = 60'000;

/// Append-only, totally ordered event log shared by every participant.
///
/// All mutation goes through append(); the sequence number is assigned under
/// the log mutex so concurrent appenders serialize into one order. Readers
/// get copies, so any two reads are prefix-related.
class Timeline {
public:
    class Subscription;

    explicit Timeline(std::shared_ptr<const Clock> clock, TimelineOptions options = {})
        : clock_(std::move(clock)), options_(options) {}

    Timeline(const Timeline&) = delete;
    Timeline& operator=(const Timeline&) = delete;

    Event append(const AgentId& author, EventKind kind) {
        std::unique_lock lock(mutex_);
        validate_and_normalize(author, kind);

        Event e;
        e.seq = events_.size() + 1;
        e.wall_time = clock_->now_ms();
        e.author = author;
        e.kind = std::move(kind);

        if (e.is<Join>()) members_.insert(author);
        if (e.is<FileCreated>()) filenames_.insert(e.as<FileCreated>().filename);
        events_.push_back(e);

        for (auto& sub : subscribers_) sub->push(e);
        lock.unlock();
        grew_.notify_all();
        return e;
    }

    std::vector<Event> read_since(Seq cursor) const {
        std::lock_guard lock(mutex_);
        if (cursor > events_.size())
            throw CursorBeyondHead("cursor " + std::to_string(cursor) + " beyond head " +
                                   std::to_string(events_.size()));
        return {events_.begin() + static_cast<std::ptrdiff_t>(cursor), events_.end()};
    }

    std::vector<Event> snapshot() const {
        std::lock_guard lock(mutex_);
        return events_;
    }

    Seq head() const {
        std::lock_guard lock(mutex_);
        return events_.size();
    }

    std::optional<TimeMs> last_event_time() const {
        std::lock_guard lock(mutex_);
        if (events_.empty()) return std::nullopt;
        return events_.back().wall_time;
    }

    bool is_member(const AgentId& id) const {
        std::lock_guard lock(mutex_);
        return members_.count(id) != 0;
    }

    /// Blocks until head > cursor or the timeout passes. Returns head > cursor.
    bool wait_beyond(Seq cursor, std::chrono::milliseconds timeout) const {
        std::unique_lock lock(mutex_);
        return grew_.wait_for(lock, timeout, [&] { return events_.size() > cursor; });
    }

    /// Wakes every wait_beyond() caller, e.g. when a session is shutting down.
    void interrupt_waiters() const { grew_.notify_all(); }

    /// Registers an observer. Delivery happens on a dedicated thread, in seq
    /// order, starting with the first event appended after subscription.
    [[nodiscard]] Subscription subscribe(std::function<void(const Event&)> callback);

    const Clock& clock() const { return *clock_; }

private:
    class Subscriber {
    public:
        explicit Subscriber(std::function<void(const Event&)> cb)
            : callback_(std::move(cb)), worker_([this](std::stop_token st) { run(st); }) {}

        ~Subscriber() {
            {
                std::lock_guard lock(m_);
                worker_.request_stop();
            }
            cv_.notify_all();
        }

        void push(const Event& e) {
            {
                std::lock_guard lock(m_);
                queue_.push_back(e);
            }
            cv_.notify_one();
        }

    private:
        void run(std::stop_token st) {
            for (;;) {
                std::unique_lock lock(m_);
                cv_.wait(lock, [&] { return st.stop_requested() || !queue_.empty(); });
                if (queue_.empty()) return;
                Event e = std::move(queue_.front());
                queue_.pop_front();
                lock.unlock();
                callback_(e);
            }
        }

        std::function<void(const Event&)> callback_;
        std::mutex m_;
        std::condition_variable cv_;
        std::deque<Event> queue_;
        std::jthread worker_;  // last: starts after the members above exist
    };

    void validate_and_normalize(const AgentId& author, EventKind& kind) {
        const bool exempt = std::holds_alternative<Join>(kind) || std::holds_alternative<SystemNote>(kind);
        if (!exempt && members_.count(author) == 0)
            throw UnknownAuthor("author '" + author.value + "' has not joined");
        if (auto* m = std::get_if<Message>(&kind); m && m->text.empty())
            throw EmptyMessage("message text is empty");
        if (auto* f = std::get_if<FileCreated>(&kind)) {
            if (f->filename.empty()) throw EmptyFilename("filename is empty");
            if (filenames_.count(f->filename)) {
                if (!options_.auto_suffix_filenames)
                    throw DuplicateFilename("file '" + f->filename + "' already exists");
                f->filename = next_free_name(f->filename);
            }
        }
    }

    std::string next_free_name(const std::string& base) const {
        for (int v = 2;; ++v) {
            auto candidate = base + ".v" + std::to_string(v);
            if (!filenames_.count(candidate)) return candidate;
        }
    }

    std::shared_ptr<const Clock> clock_;
    TimelineOptions options_;
    mutable std::mutex mutex_;
    mutable std::condition_variable grew_;
    std::vector<Event> events_;
    std::unordered_set<AgentId> members_;
    std::set<std::string> filenames_;
    std::vector<std::shared_ptr<Subscriber>> subscribers_;
};

/// Unsubscribes (and stops the delivery thread) on destruction.
class Timeline::Subscription {
public:
    Subscription() = default;
    Subscription(Timeline* owner, std::shared_ptr<Subscriber> sub) : owner_(owner), sub_(std::move(sub)) {}
    Subscription(Subscription&& o) noexcept : owner_(std::exchange(o.owner_, nullptr)), sub_(std::move(o.sub_)) {}
    Subscription& operator=(Subscription&& o) noexcept {
        if (this != &o) {
            reset();
            owner_ = std::exchange(o.owner_, nullptr);
            sub_ = std::move(o.sub_);
        }
        return *this;
    }
    ~Subscription() { reset(); }

    void reset() {
        if (owner_ && sub_) {
            std::lock_guard lock(owner_->mutex_);
            std::erase(owner_->subscribers_, sub_);
        }
        owner_ = nullptr;
        sub_.reset();
    }

private:
    Timeline* owner_ = nullptr;
    std::shared_ptr<Subscriber> sub_;
};

inline Timeline::Subscription Timeline::subscribe(std::function<void(const Event&)> callback) {
    auto sub = std::make_shared<Subscriber>(std::move(callback));
    std::lock_guard lock(mutex_);
    subscribers_.push_back(sub);
    return Subscription(this, std::move(sub));
}

/// Authors whose most recent TypingStarted has been neither followed by a
/// message/file of theirs nor expired at `now`. Ordered by when typing began.
inline std::vector<AgentId> active_typists(const std::vector<Event>& events, TimeMs now,
                                           TimeMs expiry_ms = kTypingExpiryMs) {
    std::map<AgentId, const Event*> typing;
    for (const auto& e : events) {
        if (e.is<TypingStarted>())
            typing[e.author] = &e;
        else if (e.is<Message>() || e.is<FileCreated>())
            typing.erase(e.author);
    }
    std::vector<const Event*> live;
    for (auto& [id, ev] : typing)
        if (now - ev->wall_time < expiry_ms) live.push_back(ev);
    std::sort(live.begin(), live.end(), [](auto* a, auto* b) { return a->seq < b->seq; });
    std::vector<AgentId> out;
    for (auto* ev : live) out.push_back(ev->author);
    return out;
}

} // namespace teamline
