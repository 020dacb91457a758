#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "pathqkd/errors.hpp"
#include "pathqkd/quantum.hpp"

namespace pathqkd {

using OutcomeCounts = std::array<std::uint64_t, 4>;  // pp, pm, mp, mm

struct SettingCounts {
    OutcomeCounts counts{};
    double integration_s = 0.0;
    double accidental_estimate = 0.0;  // expected accidental coincidences in this setting

    std::uint64_t total() const { return counts[0] + counts[1] + counts[2] + counts[3]; }
};

// Coincidence counts indexed by (Alice basis, Bob basis, joint outcome).
class CountTable {
public:
    void set(MeasurementSetting s, const SettingCounts& c) { entries_[idx(s)] = c; }

    void add(MeasurementSetting s, const SettingCounts& c) {
        auto& e = entries_[idx(s)];
        if (!e) {
            e = c;
            return;
        }
        for (std::size_t k = 0; k < 4; ++k) e->counts[k] += c.counts[k];
        e->integration_s += c.integration_s;
        e->accidental_estimate += c.accidental_estimate;
    }

    bool has(MeasurementSetting s) const { return entries_[idx(s)].has_value(); }

    const SettingCounts& at(MeasurementSetting s) const {
        const auto& e = entries_[idx(s)];
        if (!e) throw ValidationError("count table has no entry for setting " + s.name());
        return *e;
    }

    // Present settings in Z, X, Y x Z, X, Y order.
    std::vector<MeasurementSetting> settings() const {
        std::vector<MeasurementSetting> out;
        for (int k = 0; k < 9; ++k)
            if (entries_[static_cast<std::size_t>(k)]) out.push_back(MeasurementSetting::from_index(k));
        return out;
    }

    bool has_all_nine() const {
        for (const auto& e : entries_)
            if (!e) return false;
        return true;
    }

    friend bool operator==(const CountTable& a, const CountTable& b) {
        for (std::size_t k = 0; k < 9; ++k) {
            const auto& x = a.entries_[k];
            const auto& y = b.entries_[k];
            if (x.has_value() != y.has_value()) return false;
            if (x && (x->counts != y->counts || x->integration_s != y->integration_s ||
                      x->accidental_estimate != y->accidental_estimate))
                return false;
        }
        return true;
    }

private:
    static std::size_t idx(MeasurementSetting s) { return static_cast<std::size_t>(s.index()); }
    std::array<std::optional<SettingCounts>, 9> entries_{};
};

}  // namespace pathqkd
