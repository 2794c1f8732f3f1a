#pragma once

// Allocation audit. Deliberately free of Eigen includes so a translation unit can
// include this first and route Eigen's dense-storage hook through it:
//
//   #include <tensorcd/audit.hpp>
//   #define EIGEN_DENSE_STORAGE_CTOR_PLUGIN TENSORCD_AUDIT_DENSE_STORAGE_HOOK
//   #include <tensorcd/tensorcd.hpp>

#include <atomic>
#include <mutex>
#include <string>
#include <vector>

#define TENSORCD_AUDIT_DENSE_STORAGE_HOOK ::tensorcd::audit::on_dense_storage(static_cast<long>(size));

namespace tensorcd::audit {

struct ShapeRecord {
    long rows;
    long cols;
    std::string tag;
};

class Registry {
public:
    static Registry& instance() {
        static Registry r;
        return r;
    }

    void enable(bool on) { enabled_.store(on); }
    bool enabled() const { return enabled_.load(); }

    void reset() {
        std::lock_guard<std::mutex> lock(mu_);
        shapes_.clear();
        peak_.store(0);
        count_.store(0);
    }

    void record_shape(long rows, long cols, const char* tag) {
        if (!enabled()) return;
        std::lock_guard<std::mutex> lock(mu_);
        shapes_.push_back({rows, cols, tag});
    }

    void record_elements(long size) {
        if (!enabled()) return;
        count_.fetch_add(1, std::memory_order_relaxed);
        long prev = peak_.load(std::memory_order_relaxed);
        while (size > prev && !peak_.compare_exchange_weak(prev, size)) {
        }
    }

    std::vector<ShapeRecord> shapes() const {
        std::lock_guard<std::mutex> lock(mu_);
        return shapes_;
    }
    /// Largest single dense allocation (in elements) seen through the storage hook.
    long peak_elements() const { return peak_.load(); }
    long allocation_count() const { return count_.load(); }

private:
    std::atomic<bool> enabled_{false};
    std::atomic<long> peak_{0};
    std::atomic<long> count_{0};
    mutable std::mutex mu_;
    std::vector<ShapeRecord> shapes_;
};

inline void on_dense_storage(long size) { Registry::instance().record_elements(size); }

/// Records the shape of a named dense intermediate.
template <class M>
inline void note(const M& m, const char* tag) {
    Registry::instance().record_shape(static_cast<long>(m.rows()), static_cast<long>(m.cols()), tag);
}

}  // namespace tensorcd::audit
