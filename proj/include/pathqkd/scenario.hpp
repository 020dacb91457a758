#pragma once

// Scenario files: JSON with // and /* */ comments. Every field is optional
// and falls back to the library default; unknown fields are rejected.
// Errors name the dotted field path and, where it can be located, the line.

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "pathqkd/errors.hpp"
#include "pathqkd/link_config.hpp"
#include "pathqkd/link_sim.hpp"
#include "pathqkd/qkd.hpp"
#include "pathqkd/version.hpp"

namespace pathqkd {

using Json = nlohmann::ordered_json;

struct Campaign {
    std::vector<MeasurementSetting> settings;
    double integration_s = 1.0;
    std::map<std::string, double> overrides;  // dotted link parameter -> value

    std::vector<ScheduleEntry> schedule() const {
        std::vector<ScheduleEntry> out;
        for (const auto& s : settings) out.push_back({s, integration_s});
        return out;
    }
};

struct AnalysisParams {
    SkrParams skr;  // raw_rate_hz and alpha are filled from the counts
    std::vector<double> block_sizes{1e8, 1e7, 1e6, 1e5};
    std::string target_state = "phi_plus";
    int mc_runs = 2000;
    double variance_scale = 1.0;
};

struct Scenario {
    std::string name = "scenario";
    std::uint64_t seed = 1;
    LinkConfig link;
    AnalysisParams analysis;
    std::optional<Campaign> key;
    std::optional<Campaign> tomography;
};

inline std::vector<MeasurementSetting> all_settings() {
    std::vector<MeasurementSetting> out;
    for (int k = 0; k < 9; ++k) out.push_back(MeasurementSetting::from_index(k));
    return out;
}

// Numeric parameters addressable by dotted path, for campaign overrides
// and calibration.
inline double* link_param(LinkConfig& c, const std::string& path) {
    static const std::map<std::string, std::function<double*(LinkConfig&)>> table{
        {"source.rep_rate_hz", [](LinkConfig& l) { return &l.source.rep_rate_hz; }},
        {"source.pair_prob_per_pulse", [](LinkConfig& l) { return &l.source.pair_prob_per_pulse; }},
        {"source.multi_pair_fraction", [](LinkConfig& l) { return &l.source.multi_pair_fraction; }},
        {"source.spiral_imbalance", [](LinkConfig& l) { return &l.source.spiral_imbalance; }},
        {"source.coherence_time_ps", [](LinkConfig& l) { return &l.source.coherence_time_ps; }},
        {"channel.length_km", [](LinkConfig& l) { return &l.channel.length_km; }},
        {"channel.atten_db_per_km", [](LinkConfig& l) { return &l.channel.atten_db_per_km; }},
        {"channel.coupling_loss_db_per_facet", [](LinkConfig& l) { return &l.channel.coupling_loss_db_per_facet; }},
        {"channel.insertion_loss_db", [](LinkConfig& l) { return &l.channel.insertion_loss_db; }},
        {"channel.detector_efficiency", [](LinkConfig& l) { return &l.channel.detector_efficiency; }},
        {"channel.dark_count_rate_hz", [](LinkConfig& l) { return &l.channel.dark_count_rate_hz; }},
        {"channel.coincidence_window_s", [](LinkConfig& l) { return &l.channel.coincidence_window_s; }},
        {"channel.delay_mismatch_ps", [](LinkConfig& l) { return &l.channel.delay_mismatch_ps; }},
        {"channel.fiber_noise_hz_per_km", [](LinkConfig& l) { return &l.channel.fiber_noise_hz_per_km; }},
        {"phase_noise.bandwidth_hz", [](LinkConfig& l) { return &l.phase_noise.bandwidth_hz; }},
        {"phase_noise.std_rad", [](LinkConfig& l) { return &l.phase_noise.std_rad; }},
        {"phase_noise.jump_rate_hz", [](LinkConfig& l) { return &l.phase_noise.jump_rate_hz; }},
        {"phase_noise.jump_magnitude_rad", [](LinkConfig& l) { return &l.phase_noise.jump_magnitude_rad; }},
        {"pll.loop_rate_hz", [](LinkConfig& l) { return &l.pll.loop_rate_hz; }},
        {"pll.kp", [](LinkConfig& l) { return &l.pll.kp; }},
        {"pll.ki", [](LinkConfig& l) { return &l.pll.ki; }},
        {"pll.kd", [](LinkConfig& l) { return &l.pll.kd; }},
        {"pll.setpoint_fraction", [](LinkConfig& l) { return &l.pll.setpoint_fraction; }},
        {"pll.unlock_threshold", [](LinkConfig& l) { return &l.pll.unlock_threshold; }},
        {"pll.fringe_visibility", [](LinkConfig& l) { return &l.pll.fringe_visibility; }},
        {"pll.relock_timeout_s", [](LinkConfig& l) { return &l.pll.relock_timeout_s; }},
        {"measurement.x_phase_error_rad", [](LinkConfig& l) { return &l.measurement.x_phase_error_rad; }},
        {"measurement.y_phase_error_rad", [](LinkConfig& l) { return &l.measurement.y_phase_error_rad; }},
        {"noise_floor", [](LinkConfig& l) { return &l.noise_floor; }},
    };
    auto it = table.find(path);
    return it == table.end() ? nullptr : it->second(c);
}

inline double* scenario_param(Scenario& s, const std::string& path) {
    if (double* p = link_param(s.link, path)) return p;
    if (path == "analysis.f") return &s.analysis.skr.f;
    if (path == "analysis.sift_ratio") return &s.analysis.skr.sift_ratio;
    if (path == "analysis.eta") return &s.analysis.skr.eta;
    if (path == "key.integration_s" && s.key) return &s.key->integration_s;
    if (path == "tomography.integration_s" && s.tomography) return &s.tomography->integration_s;
    // Existing campaign overrides, e.g. "tomography.overrides.noise_floor".
    for (auto* c : {&s.key, &s.tomography}) {
        const std::string prefix = std::string(c == &s.key ? "key" : "tomography") + ".overrides.";
        if (*c && path.rfind(prefix, 0) == 0) {
            auto it = (*c)->overrides.find(path.substr(prefix.size()));
            if (it != (*c)->overrides.end()) return &it->second;
        }
    }
    return nullptr;
}

inline double& require_scenario_param(Scenario& s, const std::string& path) {
    double* p = scenario_param(s, path);
    if (!p) throw ConfigError("field '" + path + "': not an adjustable numeric parameter");
    return *p;
}

inline LinkConfig apply_overrides(LinkConfig cfg, const std::map<std::string, double>& overrides) {
    for (const auto& [path, value] : overrides) {
        double* p = link_param(cfg, path);
        if (!p) throw ConfigError("field 'overrides." + path + "': unknown link parameter");
        *p = value;
    }
    return cfg;
}

inline LinkConfig campaign_config(const Scenario& s, const Campaign& c) {
    return apply_overrides(s.link, c.overrides);
}

// ---- serialization --------------------------------------------------------

inline const char* process_name(PhaseProcess p) {
    return p == PhaseProcess::OrnsteinUhlenbeck ? "ornstein_uhlenbeck" : "random_walk";
}

inline Json settings_to_json(const std::vector<MeasurementSetting>& v) {
    Json a = Json::array();
    for (const auto& s : v) a.push_back(s.name());
    return a;
}

inline Json to_json(const Campaign& c) {
    Json j;
    j["settings"] = settings_to_json(c.settings);
    j["integration_s"] = c.integration_s;
    Json o = Json::object();
    for (const auto& [k, v] : c.overrides) o[k] = v;
    j["overrides"] = o;
    return j;
}

inline Json to_json(const LinkConfig& l) {
    Json j;
    j["source"] = {{"rep_rate_hz", l.source.rep_rate_hz},
                   {"pair_prob_per_pulse", l.source.pair_prob_per_pulse},
                   {"multi_pair_fraction", l.source.multi_pair_fraction},
                   {"spiral_imbalance", l.source.spiral_imbalance},
                   {"coherence_time_ps", l.source.coherence_time_ps}};
    j["channel"] = {{"length_km", l.channel.length_km},
                    {"atten_db_per_km", l.channel.atten_db_per_km},
                    {"coupling_loss_db_per_facet", l.channel.coupling_loss_db_per_facet},
                    {"n_facets_signal", l.channel.n_facets_signal},
                    {"n_facets_idler", l.channel.n_facets_idler},
                    {"insertion_loss_db", l.channel.insertion_loss_db},
                    {"detector_efficiency", l.channel.detector_efficiency},
                    {"dark_count_rate_hz", l.channel.dark_count_rate_hz},
                    {"coincidence_window_s", l.channel.coincidence_window_s},
                    {"delay_mismatch_ps", l.channel.delay_mismatch_ps},
                    {"fiber_noise_hz_per_km", l.channel.fiber_noise_hz_per_km}};
    j["phase_noise"] = {{"process", process_name(l.phase_noise.process)},
                        {"bandwidth_hz", l.phase_noise.bandwidth_hz},
                        {"std_rad", l.phase_noise.std_rad},
                        {"jump_rate_hz", l.phase_noise.jump_rate_hz},
                        {"jump_magnitude_rad", l.phase_noise.jump_magnitude_rad}};
    j["pll"] = {{"enabled", l.pll.enabled},
                {"loop_rate_hz", l.pll.loop_rate_hz},
                {"kp", l.pll.kp},
                {"ki", l.pll.ki},
                {"kd", l.pll.kd},
                {"setpoint_fraction", l.pll.setpoint_fraction},
                {"unlock_threshold", l.pll.unlock_threshold},
                {"relock_strategy", "fringe_scan"},
                {"fringe_visibility", l.pll.fringe_visibility},
                {"relock_hold_cycles", l.pll.relock_hold_cycles},
                {"relock_timeout_s", l.pll.relock_timeout_s},
                {"scan_cycles", l.pll.scan_cycles}};
    j["measurement"] = {{"x_phase_error_rad", l.measurement.x_phase_error_rad},
                        {"y_phase_error_rad", l.measurement.y_phase_error_rad}};
    j["noise_floor"] = l.noise_floor;
    return j;
}

inline Json to_json(const AnalysisParams& a) {
    return {{"f", a.skr.f},
            {"sift_ratio", a.skr.sift_ratio},
            {"eta", a.skr.eta},
            {"eps_sec", a.skr.eps_sec},
            {"eps_cor", a.skr.eps_cor},
            {"block_sizes", a.block_sizes},
            {"target_state", a.target_state},
            {"mc_runs", a.mc_runs},
            {"variance_scale", a.variance_scale}};
}

inline Json to_json(const Scenario& s) {
    Json j;
    j["name"] = s.name;
    j["seed"] = s.seed;
    Json link = to_json(s.link);
    for (auto it = link.begin(); it != link.end(); ++it) j[it.key()] = it.value();
    j["analysis"] = to_json(s.analysis);
    Json c = Json::object();
    if (s.key) c["key"] = to_json(*s.key);
    if (s.tomography) c["tomography"] = to_json(*s.tomography);
    j["campaigns"] = c;
    return j;
}

inline std::string serialize(const Scenario& s) { return to_json(s).dump(2) + "\n"; }

// FNV-1a over the canonical serialization.
inline std::string scenario_digest(const Scenario& s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : to_json(s).dump()) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

// ---- parsing --------------------------------------------------------------

namespace detail {

// Best-effort source line of a dotted field path: each component is looked up
// as a quoted key after the previous one.
inline int locate_line(const std::string& text, const std::string& path) {
    std::size_t pos = 0;
    std::size_t start = 0;
    bool found = false;
    while (start <= path.size()) {
        std::size_t dot = path.find('.', start);
        if (dot == std::string::npos) dot = path.size();
        std::string comp = path.substr(start, dot - start);
        const auto br = comp.find('[');
        if (br != std::string::npos) comp = comp.substr(0, br);
        const std::size_t at = text.find("\"" + comp + "\"", pos);
        if (at == std::string::npos) break;
        pos = at;
        found = true;
        start = dot + 1;
    }
    if (!found) return 0;
    return 1 + static_cast<int>(std::count(text.begin(), text.begin() + static_cast<long>(pos), '\n'));
}

class Reader {
public:
    Reader(const std::string& text, std::string source) : text_(text), source_(std::move(source)) {}

    [[noreturn]] void fail(const std::string& path, const std::string& rule) const {
        const int line = locate_line(text_, path);
        std::string where = source_;
        if (line > 0) where += ":" + std::to_string(line);
        throw ConfigError(where + ": field '" + path + "': " + rule);
    }

    const Json& object(const Json& j, const std::string& path) const {
        if (!j.is_object()) fail(path, "must be an object");
        return j;
    }

    void only(const Json& j, const std::string& path, const std::set<std::string>& allowed) const {
        for (auto it = j.begin(); it != j.end(); ++it)
            if (!allowed.count(it.key())) fail(join(path, it.key()), "unknown field");
    }

    void number(const Json& j, const std::string& path, const char* key, double& out) const {
        if (!j.contains(key)) return;
        const Json& v = j.at(key);
        if (!v.is_number()) fail(join(path, key), "must be a number");
        out = v.get<double>();
    }

    void integer(const Json& j, const std::string& path, const char* key, int& out) const {
        if (!j.contains(key)) return;
        const Json& v = j.at(key);
        if (!v.is_number_integer()) fail(join(path, key), "must be an integer");
        out = v.get<int>();
    }

    void boolean(const Json& j, const std::string& path, const char* key, bool& out) const {
        if (!j.contains(key)) return;
        const Json& v = j.at(key);
        if (!v.is_boolean()) fail(join(path, key), "must be true or false");
        out = v.get<bool>();
    }

    void string(const Json& j, const std::string& path, const char* key, std::string& out) const {
        if (!j.contains(key)) return;
        const Json& v = j.at(key);
        if (!v.is_string()) fail(join(path, key), "must be a string");
        out = v.get<std::string>();
    }

    static std::string join(const std::string& path, const std::string& key) {
        return path.empty() ? key : path + "." + key;
    }

    const std::string& text() const { return text_; }

private:
    const std::string& text_;
    std::string source_;
};

inline Json parse_text(const std::string& text, const std::string& source) {
    try {
        return Json::parse(text, nullptr, true, true);
    } catch (const Json::parse_error& e) {
        const auto byte = std::min<std::size_t>(e.byte, text.size());
        const int line = 1 + static_cast<int>(std::count(text.begin(), text.begin() + static_cast<long>(byte), '\n'));
        throw ConfigError(source + ":" + std::to_string(line) + ": malformed document: " + e.what());
    }
}

inline std::vector<MeasurementSetting> parse_settings(const Reader& r, const Json& j, const std::string& path) {
    if (j.is_string() && j.get<std::string>() == "all") return all_settings();
    if (!j.is_array()) r.fail(path, "must be \"all\" or an array of setting names such as \"ZX\"");
    std::vector<MeasurementSetting> out;
    for (std::size_t i = 0; i < j.size(); ++i) {
        const std::string p = path + "[" + std::to_string(i) + "]";
        if (!j[i].is_string()) r.fail(p, "must be a setting name such as \"ZX\"");
        auto s = MeasurementSetting::parse(j[i].get<std::string>());
        if (!s) r.fail(p, "unknown setting '" + j[i].get<std::string>() + "'");
        for (const auto& seen : out)
            if (seen == *s) r.fail(p, "duplicate setting " + s->name());
        out.push_back(*s);
    }
    if (out.empty()) r.fail(path, "must not be empty");
    return out;
}

inline Campaign parse_campaign(const Reader& r, const Json& j, const std::string& path) {
    r.object(j, path);
    r.only(j, path, {"settings", "integration_s", "overrides"});
    Campaign c;
    if (!j.contains("settings")) r.fail(path + ".settings", "is required");
    c.settings = parse_settings(r, j.at("settings"), path + ".settings");
    r.number(j, path, "integration_s", c.integration_s);
    if (!(c.integration_s > 0)) r.fail(path + ".integration_s", "must be > 0");
    if (j.contains("overrides")) {
        const Json& o = r.object(j.at("overrides"), path + ".overrides");
        LinkConfig probe;
        for (auto it = o.begin(); it != o.end(); ++it) {
            const std::string p = path + ".overrides." + it.key();
            if (!link_param(probe, it.key())) r.fail(p, "unknown link parameter");
            if (!it.value().is_number()) r.fail(p, "must be a number");
            c.overrides[it.key()] = it.value().get<double>();
        }
    }
    return c;
}

// Maps ConfigError("field 'x.y': rule") from validate() to a located message.
template <class F>
void relocate(const Reader& r, F&& f) {
    try {
        f();
    } catch (const ConfigError& e) {
        const std::string msg = e.what();
        const auto a = msg.find("field '");
        const auto b = a == std::string::npos ? a : msg.find("': ", a + 7);
        if (a == std::string::npos || b == std::string::npos) throw;
        r.fail(msg.substr(a + 7, b - a - 7), msg.substr(b + 3));
    }
}

}  // namespace detail

inline Scenario parse_scenario(const std::string& text, const std::string& source = "<scenario>") {
    using detail::Reader;
    const Json j = detail::parse_text(text, source);
    const Reader r(text, source);
    r.object(j, "");
    r.only(j, "", {"$schema", "name", "seed", "source", "channel", "phase_noise", "pll", "measurement",
                   "noise_floor", "analysis", "campaigns"});
    Scenario s;
    r.string(j, "", "name", s.name);
    if (j.contains("seed")) {
        if (!j.at("seed").is_number_unsigned()) r.fail("seed", "must be a non-negative integer");
        s.seed = j.at("seed").get<std::uint64_t>();
    }
    LinkConfig& l = s.link;
    if (j.contains("source")) {
        const Json& o = r.object(j.at("source"), "source");
        r.only(o, "source", {"rep_rate_hz", "pair_prob_per_pulse", "multi_pair_fraction", "spiral_imbalance",
                             "coherence_time_ps"});
        r.number(o, "source", "rep_rate_hz", l.source.rep_rate_hz);
        r.number(o, "source", "pair_prob_per_pulse", l.source.pair_prob_per_pulse);
        r.number(o, "source", "multi_pair_fraction", l.source.multi_pair_fraction);
        r.number(o, "source", "spiral_imbalance", l.source.spiral_imbalance);
        r.number(o, "source", "coherence_time_ps", l.source.coherence_time_ps);
    }
    if (j.contains("channel")) {
        const Json& o = r.object(j.at("channel"), "channel");
        r.only(o, "channel", {"length_km", "atten_db_per_km", "coupling_loss_db_per_facet", "n_facets_signal",
                              "n_facets_idler", "insertion_loss_db", "detector_efficiency", "dark_count_rate_hz",
                              "coincidence_window_s", "delay_mismatch_ps", "fiber_noise_hz_per_km"});
        r.number(o, "channel", "length_km", l.channel.length_km);
        r.number(o, "channel", "atten_db_per_km", l.channel.atten_db_per_km);
        r.number(o, "channel", "coupling_loss_db_per_facet", l.channel.coupling_loss_db_per_facet);
        r.integer(o, "channel", "n_facets_signal", l.channel.n_facets_signal);
        r.integer(o, "channel", "n_facets_idler", l.channel.n_facets_idler);
        r.number(o, "channel", "insertion_loss_db", l.channel.insertion_loss_db);
        r.number(o, "channel", "detector_efficiency", l.channel.detector_efficiency);
        r.number(o, "channel", "dark_count_rate_hz", l.channel.dark_count_rate_hz);
        r.number(o, "channel", "coincidence_window_s", l.channel.coincidence_window_s);
        r.number(o, "channel", "delay_mismatch_ps", l.channel.delay_mismatch_ps);
        r.number(o, "channel", "fiber_noise_hz_per_km", l.channel.fiber_noise_hz_per_km);
    }
    if (j.contains("phase_noise")) {
        const Json& o = r.object(j.at("phase_noise"), "phase_noise");
        r.only(o, "phase_noise", {"process", "bandwidth_hz", "std_rad", "jump_rate_hz", "jump_magnitude_rad"});
        std::string process = process_name(l.phase_noise.process);
        r.string(o, "phase_noise", "process", process);
        if (process == "ornstein_uhlenbeck")
            l.phase_noise.process = PhaseProcess::OrnsteinUhlenbeck;
        else if (process == "random_walk")
            l.phase_noise.process = PhaseProcess::RandomWalk;
        else
            r.fail("phase_noise.process", "must be \"ornstein_uhlenbeck\" or \"random_walk\"");
        r.number(o, "phase_noise", "bandwidth_hz", l.phase_noise.bandwidth_hz);
        r.number(o, "phase_noise", "std_rad", l.phase_noise.std_rad);
        r.number(o, "phase_noise", "jump_rate_hz", l.phase_noise.jump_rate_hz);
        r.number(o, "phase_noise", "jump_magnitude_rad", l.phase_noise.jump_magnitude_rad);
    }
    if (j.contains("pll")) {
        const Json& o = r.object(j.at("pll"), "pll");
        r.only(o, "pll", {"enabled", "loop_rate_hz", "kp", "ki", "kd", "setpoint_fraction", "unlock_threshold",
                          "relock_strategy", "fringe_visibility", "relock_hold_cycles", "relock_timeout_s",
                          "scan_cycles"});
        r.boolean(o, "pll", "enabled", l.pll.enabled);
        r.number(o, "pll", "loop_rate_hz", l.pll.loop_rate_hz);
        r.number(o, "pll", "kp", l.pll.kp);
        r.number(o, "pll", "ki", l.pll.ki);
        r.number(o, "pll", "kd", l.pll.kd);
        r.number(o, "pll", "setpoint_fraction", l.pll.setpoint_fraction);
        r.number(o, "pll", "unlock_threshold", l.pll.unlock_threshold);
        std::string strategy = "fringe_scan";
        r.string(o, "pll", "relock_strategy", strategy);
        if (strategy != "fringe_scan") r.fail("pll.relock_strategy", "must be \"fringe_scan\"");
        r.number(o, "pll", "fringe_visibility", l.pll.fringe_visibility);
        r.integer(o, "pll", "relock_hold_cycles", l.pll.relock_hold_cycles);
        r.number(o, "pll", "relock_timeout_s", l.pll.relock_timeout_s);
        r.integer(o, "pll", "scan_cycles", l.pll.scan_cycles);
    }
    if (j.contains("measurement")) {
        const Json& o = r.object(j.at("measurement"), "measurement");
        r.only(o, "measurement", {"x_phase_error_rad", "y_phase_error_rad"});
        r.number(o, "measurement", "x_phase_error_rad", l.measurement.x_phase_error_rad);
        r.number(o, "measurement", "y_phase_error_rad", l.measurement.y_phase_error_rad);
    }
    r.number(j, "", "noise_floor", l.noise_floor);
    detail::relocate(r, [&] { validate(l); });

    if (j.contains("analysis")) {
        const Json& o = r.object(j.at("analysis"), "analysis");
        r.only(o, "analysis", {"f", "sift_ratio", "eta", "eps_sec", "eps_cor", "block_sizes", "target_state",
                               "mc_runs", "variance_scale"});
        AnalysisParams& a = s.analysis;
        r.number(o, "analysis", "f", a.skr.f);
        r.number(o, "analysis", "sift_ratio", a.skr.sift_ratio);
        r.number(o, "analysis", "eta", a.skr.eta);
        r.number(o, "analysis", "eps_sec", a.skr.eps_sec);
        r.number(o, "analysis", "eps_cor", a.skr.eps_cor);
        if (o.contains("block_sizes")) {
            const Json& b = o.at("block_sizes");
            if (!b.is_array()) r.fail("analysis.block_sizes", "must be an array of numbers");
            a.block_sizes.clear();
            for (const auto& v : b) {
                if (!v.is_number() || !(v.get<double>() >= 1e3))
                    r.fail("analysis.block_sizes", "entries must be numbers >= 1000");
                a.block_sizes.push_back(v.get<double>());
            }
        }
        r.string(o, "analysis", "target_state", a.target_state);
        if (!named_state(a.target_state))
            r.fail("analysis.target_state", "must be one of phi_plus, phi_minus, mixed");
        r.integer(o, "analysis", "mc_runs", a.mc_runs);
        if (a.mc_runs < 1) r.fail("analysis.mc_runs", "must be >= 1");
        r.number(o, "analysis", "variance_scale", a.variance_scale);
        if (!(a.variance_scale >= 0)) r.fail("analysis.variance_scale", "must be >= 0");
        try {
            SkrParams probe = a.skr;
            validate(probe);
        } catch (const DomainError& e) {
            const std::string msg = e.what();
            const auto dot = msg.find('.');
            const auto sp = msg.find(' ');
            r.fail("analysis." + msg.substr(dot + 1, sp - dot - 1), msg.substr(sp + 1));
        }
    }
    if (j.contains("campaigns")) {
        const Json& o = r.object(j.at("campaigns"), "campaigns");
        r.only(o, "campaigns", {"key", "tomography"});
        if (o.contains("key")) s.key = detail::parse_campaign(r, o.at("key"), "campaigns.key");
        if (o.contains("tomography"))
            s.tomography = detail::parse_campaign(r, o.at("tomography"), "campaigns.tomography");
        for (const auto* c : {&s.key, &s.tomography}) {
            if (!*c) continue;
            const std::string path = c == &s.key ? "campaigns.key.overrides" : "campaigns.tomography.overrides";
            try {
                validate(apply_overrides(s.link, (*c)->overrides));
            } catch (const ConfigError& e) {
                const std::string msg = e.what();
                const auto a = msg.find("field '");
                const auto b = a == std::string::npos ? a : msg.find("': ", a + 7);
                if (b == std::string::npos) throw;
                r.fail(path + "." + msg.substr(a + 7, b - a - 7), msg.substr(b + 3));
            }
        }
    }
    return s;
}

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write '" + path + "'");
    out << content;
    if (!out) throw IoError("write to '" + path + "' failed");
}

inline Scenario load_scenario(const std::string& path) { return parse_scenario(read_file(path), path); }

// ---- count files ----------------------------------------------------------

struct OutputMeta {
    std::uint64_t seed = 0;
    std::string scenario_digest;
    std::string scenario_name;
};

inline Json meta_json(const OutputMeta& m) {
    return {{"tool", "pathqkd"},
            {"version", kVersion},
            {"seed", m.seed},
            {"scenario", m.scenario_name},
            {"scenario_digest", m.scenario_digest}};
}

inline Json counts_to_json(const CountTable& table, const OutputMeta& meta, const std::string& campaign) {
    Json j;
    j["format"] = "pathqkd.counts/1";
    j["meta"] = meta_json(meta);
    j["campaign"] = campaign;
    Json arr = Json::array();
    for (const auto& s : table.settings()) {
        const SettingCounts& c = table.at(s);
        Json e;
        e["basis_alice"] = std::string(1, basis_name(s.alice));
        e["basis_bob"] = std::string(1, basis_name(s.bob));
        e["integration_s"] = c.integration_s;
        e["accidental_estimate"] = c.accidental_estimate;
        Json n;
        for (std::size_t o = 0; o < 4; ++o) n[kOutcomeKeys[o]] = c.counts[o];
        e["counts"] = n;
        arr.push_back(e);
    }
    j["settings"] = arr;
    return j;
}

struct CountsFile {
    CountTable table;
    Json meta;
    std::string campaign;
};

inline CountsFile parse_counts(const std::string& text, const std::string& source = "<counts>") {
    using detail::Reader;
    const Json j = detail::parse_text(text, source);
    const Reader r(text, source);
    r.object(j, "");
    r.only(j, "", {"format", "meta", "campaign", "settings"});
    CountsFile out;
    if (j.contains("meta")) out.meta = j.at("meta");
    r.string(j, "", "campaign", out.campaign);
    if (!j.contains("settings") || !j.at("settings").is_array()) r.fail("settings", "must be an array");
    const Json& arr = j.at("settings");
    for (std::size_t i = 0; i < arr.size(); ++i) {
        const std::string p = "settings[" + std::to_string(i) + "]";
        const Json& e = r.object(arr[i], p);
        r.only(e, p, {"basis_alice", "basis_bob", "integration_s", "accidental_estimate", "counts"});
        std::string a, b;
        r.string(e, p, "basis_alice", a);
        r.string(e, p, "basis_bob", b);
        auto setting = MeasurementSetting::parse(a + b);
        if (!setting) r.fail(p, "basis_alice/basis_bob must each be Z, X or Y");
        if (out.table.has(*setting)) r.fail(p, "duplicate setting " + setting->name());
        SettingCounts c;
        r.number(e, p, "integration_s", c.integration_s);
        r.number(e, p, "accidental_estimate", c.accidental_estimate);
        if (!e.contains("counts")) r.fail(p + ".counts", "is required");
        const Json& n = r.object(e.at("counts"), p + ".counts");
        r.only(n, p + ".counts", {"pp", "pm", "mp", "mm"});
        for (std::size_t o = 0; o < 4; ++o) {
            if (!n.contains(kOutcomeKeys[o]) || !n.at(kOutcomeKeys[o]).is_number_unsigned())
                r.fail(p + ".counts." + kOutcomeKeys[o], "must be a non-negative integer");
            c.counts[o] = n.at(kOutcomeKeys[o]).get<std::uint64_t>();
        }
        out.table.set(*setting, c);
    }
    return out;
}

inline CountsFile load_counts(const std::string& path) { return parse_counts(read_file(path), path); }

}  // namespace pathqkd
