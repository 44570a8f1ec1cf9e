#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <ctime>
#include <string>

namespace teamline {

/// Milliseconds since the Unix epoch on the session clock.
using TimeMs = std::int64_t;

/// Session clock. Real sessions read the system clock; simulated sessions
/// hold a virtual time that only the scheduler moves forward.
class Clock {
public:
    virtual ~Clock() = default;
    virtual TimeMs now_ms() const = 0;
    virtual bool is_virtual() const = 0;
};

class SystemClock final : public Clock {
public:
    TimeMs now_ms() const override {
        using namespace std::chrono;
        return duration_cast<milliseconds>(system_clock::now().time_since_epoch()).count();
    }
    bool is_virtual() const override { return false; }
};

class VirtualClock final : public Clock {
public:
    explicit VirtualClock(TimeMs start = 0) : now_(start) {}

    TimeMs now_ms() const override { return now_.load(std::memory_order_acquire); }
    bool is_virtual() const override { return true; }

    // Never moves backwards.
    void advance_to(TimeMs t) {
        TimeMs cur = now_.load(std::memory_order_acquire);
        while (t > cur && !now_.compare_exchange_weak(cur, t, std::memory_order_acq_rel)) {
        }
    }
    void advance_by(TimeMs dt) { now_.fetch_add(dt, std::memory_order_acq_rel); }

private:
    std::atomic<TimeMs> now_;
};

/// "6:35 PM" style label, rendered in UTC.
inline std::string time_label(TimeMs t) {
    std::time_t secs = static_cast<std::time_t>(t / 1000);
    if (t < 0 && t % 1000 != 0) --secs;
    std::tm tm{};
    gmtime_r(&secs, &tm);
    int hour12 = tm.tm_hour % 12;
    if (hour12 == 0) hour12 = 12;
    char buf[16];
    std::snprintf(buf, sizeof buf, "%d:%02d %s", hour12, tm.tm_min, tm.tm_hour < 12 ? "AM" : "PM");
    return buf;
}

/// Parses "YYYY-MM-DDTHH:MM:SSZ" (UTC) into epoch milliseconds.
inline bool parse_utc_timestamp(const std::string& text, TimeMs& out) {
    std::tm tm{};
    int y, mo, d, h, mi, s;
    char z = 0;
    if (std::sscanf(text.c_str(), "%d-%d-%dT%d:%d:%d%c", &y, &mo, &d, &h, &mi, &s, &z) < 6)
        return false;
    tm.tm_year = y - 1900;
    tm.tm_mon = mo - 1;
    tm.tm_mday = d;
    tm.tm_hour = h;
    tm.tm_min = mi;
    tm.tm_sec = s;
    out = static_cast<TimeMs>(timegm(&tm)) * 1000;
    return true;
}

} // namespace teamline
