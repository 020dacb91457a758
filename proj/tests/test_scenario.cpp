#include <gtest/gtest.h>

#include <string>

#include "pathqkd/calibrate.hpp"
#include "pathqkd/scenario.hpp"

using namespace pathqkd;

namespace {

const std::string kPresets = PATHQKD_PRESETS_DIR;

std::string error_of(const std::string& text) {
    try {
        parse_scenario(text, "s.json");
    } catch (const ConfigError& e) {
        return e.what();
    }
    return "";
}

// Small scenario with short campaigns, for calibration tests.
Scenario quick_scenario() {
    Scenario s;
    s.name = "quick";
    s.seed = 3;
    s.link.noise_floor = 0.02;
    s.link.source.pair_prob_per_pulse = 0.05;
    s.key = Campaign{{MeasurementSetting{Basis::Z, Basis::Z}, MeasurementSetting{Basis::X, Basis::X},
                      MeasurementSetting{Basis::Y, Basis::Y}},
                     5.0,
                     {}};
    s.tomography = Campaign{all_settings(), 2.0, {}};
    return s;
}

}  // namespace

TEST(Scenario, PresetsRoundTrip) {
    for (const char* name : {"short-4m", "mcf-80km", "single-chip"}) {
        const Scenario a = load_scenario(kPresets + "/" + name + ".json");
        EXPECT_EQ(a.name, name);
        const Scenario b = parse_scenario(serialize(a));
        EXPECT_EQ(serialize(a), serialize(b));
        EXPECT_EQ(scenario_digest(a), scenario_digest(b));
    }
}

TEST(Scenario, DefaultsRoundTrip) {
    const Scenario s = quick_scenario();
    EXPECT_EQ(serialize(parse_scenario(serialize(s))), serialize(s));
}

TEST(Scenario, CommentsAllowed) {
    const Scenario s = parse_scenario("// note\n{\n  \"name\": \"c\", /* inline */ \"seed\": 9\n}\n");
    EXPECT_EQ(s.name, "c");
    EXPECT_EQ(s.seed, 9u);
}

TEST(Scenario, DiagnosticNamesFieldAndLine) {
    const std::string text = "{\n  \"name\": \"x\",\n  \"channel\": {\n    \"length_km\": -4\n  }\n}\n";
    const std::string e = error_of(text);
    EXPECT_NE(e.find("s.json:4"), std::string::npos) << e;
    EXPECT_NE(e.find("channel.length_km"), std::string::npos) << e;
}

TEST(Scenario, WrongTypeIsReported) {
    const std::string e = error_of("{\n  \"source\": {\n    \"rep_rate_hz\": \"fast\"\n  }\n}");
    EXPECT_NE(e.find("source.rep_rate_hz"), std::string::npos) << e;
    EXPECT_NE(e.find(":3"), std::string::npos) << e;
}

TEST(Scenario, UnknownKeyIsReported) {
    const std::string e = error_of("{\n  \"chanel\": {}\n}");
    EXPECT_NE(e.find("chanel"), std::string::npos) << e;
}

TEST(Scenario, SyntaxErrorHasLine) {
    const std::string e = error_of("{\n  \"name\": \"x\"\n  \"seed\": 1\n}");
    EXPECT_NE(e.find("s.json:3"), std::string::npos) << e;
}

TEST(Scenario, BadOverrideIsReported) {
    const std::string e = error_of(
        "{\n  \"campaigns\": {\n    \"key\": {\n      \"settings\": [\"ZZ\"],\n      \"overrides\": "
        "{ \"noise_floor\": 2 }\n    }\n  }\n}");
    EXPECT_NE(e.find("campaigns.key.overrides.noise_floor"), std::string::npos) << e;
}

TEST(Scenario, UndersampledPllIsConfigError) {
    const std::string e = error_of("{\n  \"phase_noise\": { \"bandwidth_hz\": 600 }\n}");
    EXPECT_NE(e.find("pll.loop_rate_hz"), std::string::npos) << e;
}

TEST(Scenario, ParameterPaths) {
    Scenario s = load_scenario(kPresets + "/mcf-80km.json");
    EXPECT_NE(scenario_param(s, "channel.insertion_loss_db"), nullptr);
    EXPECT_NE(scenario_param(s, "tomography.overrides.noise_floor"), nullptr);
    EXPECT_EQ(scenario_param(s, "key.overrides.noise_floor"), nullptr);
    EXPECT_EQ(scenario_param(s, "channel.nope"), nullptr);
    EXPECT_THROW(require_scenario_param(s, "nope"), ConfigError);
}

TEST(Scenario, CountsRoundTrip) {
    CountTable t;
    SettingCounts c;
    c.counts = {1, 2, 3, 4};
    c.integration_s = 2.5;
    c.accidental_estimate = 0.125;
    t.set(MeasurementSetting{Basis::X, Basis::Y}, c);
    const Json j = counts_to_json(t, OutputMeta{7, "abc", "n"}, "key");
    const CountsFile f = parse_counts(j.dump(2));
    EXPECT_TRUE(f.table == t);
    EXPECT_EQ(f.meta.at("seed").get<std::uint64_t>(), 7u);
    EXPECT_EQ(f.meta.at("scenario_digest").get<std::string>(), "abc");
    EXPECT_EQ(f.campaign, "key");
}

TEST(Scenario, CountsDiagnostics) {
    try {
        parse_counts("{\n \"settings\": [\n  {\"basis_alice\": \"Z\", \"basis_bob\": \"Q\", \"counts\": {}}\n ]\n}",
                     "c.json");
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("settings[0]"), std::string::npos) << e.what();
    }
}

TEST(Calibration, SatisfiedTargetsExitImmediately) {
    CalibrationSpec spec;
    spec.scenario = quick_scenario();
    MetricEvaluator ev;
    const double qz = ev.evaluate(spec.scenario, {"qber_z"});
    spec.free = {{"noise_floor", 0.0, 0.2}};
    spec.targets = {{{"qber_z"}, qz, std::nullopt, {}}};
    const auto r = calibrate(spec);
    EXPECT_TRUE(r.converged);
    EXPECT_EQ(r.iterations, 0);
    EXPECT_EQ(serialize(r.fitted), serialize(spec.scenario));
}

TEST(Calibration, RecoversNoiseFloor) {
    Scenario truth = quick_scenario();
    truth.link.noise_floor = 0.07;
    MetricEvaluator ev;
    const double qz = ev.evaluate(truth, {"qber_z"});
    CalibrationSpec spec;
    spec.scenario = quick_scenario();
    spec.free = {{"noise_floor", 0.0, 0.2}};
    spec.targets = {{{"qber_z"}, qz, 0.005, {}}};
    const auto r = calibrate(spec);
    EXPECT_TRUE(r.converged);
    EXPECT_NEAR(r.fitted.link.noise_floor, 0.07, 0.005);
}

TEST(Calibration, ContradictoryTargetsDoNotConverge) {
    CalibrationSpec spec;
    spec.scenario = quick_scenario();
    spec.free = {{"noise_floor", 0.0, 0.5}, {"measurement.x_phase_error_rad", 0.0, 1.5}};
    spec.targets = {{{"fidelity"}, 0.99, std::nullopt, {}}, {{"qber_x"}, 0.2, std::nullopt, {}}};
    spec.max_iterations = 20;
    const auto r = calibrate(spec);
    EXPECT_FALSE(r.converged);
    EXPECT_EQ(r.residuals.size(), 2u);

    // Independent grid scan over the same box: no point meets both targets.
    MetricEvaluator ev;
    double best = 1e9;
    for (int i = 0; i <= 10; ++i)
        for (int k = 0; k <= 10; ++k) {
            Scenario s = spec.scenario;
            s.link.noise_floor = 0.05 * i;
            s.link.measurement.x_phase_error_rad = 0.15 * k;
            const double f = ev.evaluate(s, {"fidelity"});
            const double q = ev.evaluate(s, {"qber_x"});
            best = std::min(best, std::max(std::abs(f - 0.99) / 0.99, std::abs(q - 0.2) / 0.2));
        }
    EXPECT_GT(best, 0.05);
}

TEST(Calibration, TargetsFileErrors) {
    EXPECT_THROW(parse_calibration("{\n \"targets\": []\n}", "t.json", kPresets), ConfigError);
    try {
        parse_calibration("{\n \"scenario\": \"short-4m.json\",\n \"targets\": [\n  {\"metric\": \"speed\", "
                          "\"value\": 1}\n ]\n}",
                          "t.json", kPresets);
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("targets[0].metric"), std::string::npos) << e.what();
    }
}
