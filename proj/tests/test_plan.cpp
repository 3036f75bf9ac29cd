#include "doctest.h"

#include <cmath>
#include <complex>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "nvdnp/dnp.hpp"
#include "nvdnp/plan.hpp"
#include "nvdnp/rng.hpp"
#include "nvdnp/signal.hpp"

using namespace nvdnp;
using doctest::Approx;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::string read_text(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

template <typename Node>
Stmt wrap(Node node) {
    return Stmt{std::move(node)};
}

// Triangle response with the peak on a node, so sweep ratios follow from the
// node values alone with no interpolation involved.
DnpSpectrum triangle_spectrum() {
    DnpSpectrum s;
    s.mw_frequencies_GHz = {15.9, 16.0, 16.1, 16.2, 16.3};
    s.signal = {0.2, 0.6, 1.0, 0.5, 0.1};
    return s;
}

// No relaxation, no transverse decay, no noise: acquired amplitudes read the
// stored polarization directly.
PlanPhysics quiet_physics() {
    PlanPhysics ph;
    ph.spectrum = triangle_spectrum();
    ph.P_asymptote = 0.8;
    ph.T_DNP_s = 12.0;
    ph.T1n_s = kInf;
    ph.fid.T2star_s = kInf;
    ph.fid.freq_offset_Hz = 0.0;
    ph.fid.phase_rad = 0.0;
    return ph;
}

std::vector<Stmt> random_body(std::mt19937_64& g, int depth);

Stmt random_stmt(std::mt19937_64& g, int depth) {
    static const std::string dur_units[] = {"s", "ms", "us"};
    static const std::string freq_units[] = {"GHz", "MHz"};
    // Loops only while shallow, so generated plans stay small.
    std::uniform_int_distribution<int> kind(0, depth < 2 ? 6 : 5);
    std::uniform_int_distribution<int> small(1, 40);
    std::uniform_real_distribution<double> mag(1e-3, 999.0);
    std::uniform_real_distribution<double> angle(0.1, 359.9);
    std::uniform_int_distribution<int> coin(0, 1);
    std::uniform_int_distribution<int> tri(0, 2);
    std::uniform_int_distribution<int> quad(0, 3);
    switch (kind(g)) {
        case 0: return wrap(SaturateStmt{small(g)});
        case 1: {
            const double v = mag(g);
            return wrap(WaitStmt{Duration{v, dur_units[tri(g)]}});
        }
        case 2: {
            if (coin(g) == 0) return wrap(MwStmt{false, {}});
            const double v = mag(g);
            return wrap(MwStmt{true, Frequency{v, freq_units[coin(g)]}});
        }
        case 3: return wrap(LaserStmt{coin(g) == 1});
        case 4: {
            const double a = angle(g);
            return wrap(PulseStmt{a, static_cast<Phase>(quad(g))});
        }
        case 5: {
            const int n = small(g);
            const double v = mag(g);
            return wrap(AcquireStmt{n, Duration{v, dur_units[tri(g)]}});
        }
        default: {
            const int count = 1 + small(g) % 5;
            return wrap(LoopStmt{count, random_body(g, depth + 1)});
        }
    }
}

std::vector<Stmt> random_body(std::mt19937_64& g, int depth) {
    std::uniform_int_distribution<int> len(0, 4);
    std::vector<Stmt> body;
    for (int i = len(g); i > 0; --i) body.push_back(random_stmt(g, depth));
    return body;
}

}  // namespace

TEST_CASE("plan parsing builds the expected syntax tree") {
    SUBCASE("a full protocol maps statement by statement") {
        const std::string src =
            "# polarize, then read out\n"
            "saturate 8\n"
            "laser on\n"
            "mw on 16.1GHz\n"
            "wait 60s   # build up\n"
            "mw off\n"
            "pulse 90 x\n"
            "acquire 64 0.5us\n";
        PlanAst expected;
        expected.statements = {
            wrap(SaturateStmt{8}),
            wrap(LaserStmt{true}),
            wrap(MwStmt{true, Frequency{16.1, "GHz"}}),
            wrap(WaitStmt{Duration{60.0, "s"}}),
            wrap(MwStmt{false, {}}),
            wrap(PulseStmt{90.0, Phase::X}),
            wrap(AcquireStmt{64, Duration{0.5, "us"}}),
        };
        CHECK(parse_plan(src) == expected);
    }

    SUBCASE("all four pulse phases are recognized") {
        const PlanAst ast = parse_plan("pulse 45 x\npulse 45 y\npulse 45 -x\npulse 45 -y\n");
        REQUIRE(ast.statements.size() == 4);
        CHECK(std::get<PulseStmt>(ast.statements[0].node).phase == Phase::X);
        CHECK(std::get<PulseStmt>(ast.statements[1].node).phase == Phase::Y);
        CHECK(std::get<PulseStmt>(ast.statements[2].node).phase == Phase::MinusX);
        CHECK(std::get<PulseStmt>(ast.statements[3].node).phase == Phase::MinusY);
    }

    SUBCASE("whitespace, blank lines, and comments are invisible") {
        const PlanAst a = parse_plan("laser on\nwait 5ms\n");
        const PlanAst b = parse_plan("\n  # setup\n\n\tlaser   on # now\n\n  wait 5ms\n#done");
        CHECK(a == b);
    }

    SUBCASE("numbers accept decimals and exponents, and units convert") {
        const PlanAst ast = parse_plan("wait 2.5e2us\nmw on 250MHz\n");
        const auto& w = std::get<WaitStmt>(ast.statements[0].node);
        CHECK(w.duration == Duration{250.0, "us"});
        CHECK(w.duration.seconds() == Approx(2.5e-4).epsilon(1e-15));
        const auto& m = std::get<MwStmt>(ast.statements[1].node);
        CHECK(m.freq.GHz() == Approx(0.25).epsilon(1e-15));
        CHECK(Duration{1.5, "ms"}.seconds() == Approx(1.5e-3).epsilon(1e-15));
        CHECK(Duration{3.0, "s"}.seconds() == 3.0);
    }

    SUBCASE("an empty source is an empty plan") {
        CHECK(parse_plan("").statements.empty());
        CHECK(parse_plan("# nothing but commentary\n").statements.empty());
    }

    SUBCASE("errors carry the offending line and column") {
        try {
            parse_plan("laser on\n  pulze 90 x\n");
            FAIL("expected ParseError");
        } catch (const ParseError& e) {
            CHECK(e.line == 2);
            CHECK(e.col == 3);
            CHECK(std::string(e.what()) == "line 2, col 3: unknown keyword 'pulze'");
        }
    }

    SUBCASE("keyword and argument mistakes are rejected") {
        CHECK_THROWS_WITH_AS(parse_plan("pulze 90 x\n"),
                             doctest::Contains("unknown keyword 'pulze'"), ParseError);
        CHECK_THROWS_WITH_AS(parse_plan("pulse 0 x\n"),
                             doctest::Contains("pulse angle must lie in (0, 360)"), ParseError);
        CHECK_THROWS_WITH_AS(parse_plan("pulse 360 x\n"),
                             doctest::Contains("pulse angle must lie in (0, 360)"), ParseError);
        CHECK_THROWS_WITH_AS(parse_plan("pulse 90ms x\n"),
                             doctest::Contains("pulse angle takes no unit"), ParseError);
        CHECK_THROWS_WITH_AS(parse_plan("pulse 90 z\n"),
                             doctest::Contains("pulse phase must be one of x, y, -x, -y"),
                             ParseError);
        CHECK_THROWS_WITH_AS(parse_plan("saturate 2.5\n"),
                             doctest::Contains("must be a positive integer"), ParseError);
        CHECK_THROWS_WITH_AS(parse_plan("saturate 8s\n"),
                             doctest::Contains("expects a bare integer"), ParseError);
        CHECK_THROWS_WITH_AS(parse_plan("saturate 0\n"),
                             doctest::Contains("must be a positive integer"), ParseError);
        CHECK_THROWS_WITH_AS(parse_plan("acquire 2000000000 1us\n"),
                             doctest::Contains("must be a positive integer"), ParseError);
        CHECK_THROWS_WITH_AS(parse_plan("wait 5min\n"),
                             doctest::Contains("malformed duration unit 'min' (use s, ms, or us)"),
                             ParseError);
        CHECK_THROWS_WITH_AS(parse_plan("wait -5ms\n"),
                             doctest::Contains("duration must be positive"), ParseError);
        CHECK_THROWS_WITH_AS(parse_plan("mw on 16.1kHz\n"),
                             doctest::Contains("malformed frequency unit 'kHz' (use GHz or MHz)"),
                             ParseError);
        CHECK_THROWS_WITH_AS(parse_plan("mw maybe\n"),
                             doctest::Contains("mw expects 'on <frequency>' or 'off'"), ParseError);
        CHECK_THROWS_WITH_AS(parse_plan("laser dim\n"),
                             doctest::Contains("laser expects 'on' or 'off'"), ParseError);
        CHECK_THROWS_AS(parse_plan("wait\n"), ParseError);
        CHECK_THROWS_AS(parse_plan("pulse x 90\n"), ParseError);
    }

    SUBCASE("brace balance is enforced in both directions") {
        CHECK_THROWS_WITH_AS(parse_plan("loop 2 {\n  pulse 90 x\n"),
                             doctest::Contains("unbalanced braces: loop body never closed"),
                             ParseError);
        CHECK_THROWS_WITH_AS(parse_plan("laser on\n}\n"), doctest::Contains("unbalanced '}'"),
                             ParseError);
        CHECK_THROWS_WITH_AS(parse_plan("loop 2 pulse 90 x\n"),
                             doctest::Contains("loop body must start with '{'"), ParseError);
    }
}

TEST_CASE("printed plans reparse to the same tree") {
    SUBCASE("the canonical form is stable, two-space indented text") {
        PlanAst ast;
        ast.statements = {
            wrap(SaturateStmt{3}),
            wrap(LoopStmt{2,
                          {wrap(PulseStmt{90.0, Phase::MinusY}),
                           wrap(WaitStmt{Duration{1.5, "ms"}})}}),
            wrap(AcquireStmt{16, Duration{2.0, "us"}}),
        };
        CHECK(print_plan(ast) ==
              "saturate 3\n"
              "loop 2 {\n"
              "  pulse 90 -y\n"
              "  wait 1.5ms\n"
              "}\n"
              "acquire 16 2us\n");
    }

    SUBCASE("the shipped example plans survive a round trip") {
        for (const char* name : {"/plans/cw_dnp.plan", "/plans/small_flip_t1.plan"}) {
            const std::string text = read_text(std::string(NVDNP_DATA_DIR) + name);
            REQUIRE(!text.empty());
            const PlanAst ast = parse_plan(text);
            REQUIRE(!ast.statements.empty());
            CHECK(parse_plan(print_plan(ast)) == ast);
        }
    }

    SUBCASE("nested and empty loops round-trip") {
        const PlanAst empty_loop = parse_plan("loop 2 {\n}\n");
        REQUIRE(empty_loop.statements.size() == 1);
        CHECK(std::get<LoopStmt>(empty_loop.statements[0].node).body.empty());
        CHECK(print_plan(empty_loop) == "loop 2 {\n}\n");

        const std::string nested =
            "loop 3 {\n"
            "  mw on 16.1GHz\n"
            "  loop 2 {\n"
            "    pulse 10.5 -x\n"
            "  }\n"
            "  mw off\n"
            "}\n";
        const PlanAst ast = parse_plan(nested);
        CHECK(print_plan(ast) == nested);
        CHECK(parse_plan(print_plan(ast)) == ast);
    }

    SUBCASE("randomly generated plans always round-trip") {
        std::mt19937_64 g(20240816);
        for (int trial = 0; trial < 300; ++trial) {
            PlanAst ast;
            ast.statements = random_body(g, 0);
            const std::string text = print_plan(ast);
            CHECK(parse_plan(text) == ast);
        }
    }
}

TEST_CASE("compiled timelines place every event on one clock") {
    SUBCASE("empty and wait-only plans produce no events") {
        const Timeline none = compile_timeline(parse_plan(""));
        CHECK(none.events.empty());
        CHECK(none.total_duration_s == 0.0);

        // Waits shape the clock but never appear as events themselves.
        const Timeline idle = compile_timeline(parse_plan("wait 5ms\n"));
        CHECK(idle.events.empty());
        CHECK(idle.total_duration_s == Duration{5.0, "ms"}.seconds());
    }

    SUBCASE("loops unroll into repeated events at stepped offsets") {
        const Timeline tl = compile_timeline(parse_plan("loop 4 {\n  pulse 90 y\n  wait 40us\n}\n"));
        REQUIRE(tl.events.size() == 4);
        double t = 0.0;
        for (std::size_t k = 0; k < 4; ++k) {
            CHECK(tl.events[k].t_start_s == t);
            CHECK(tl.events[k].duration_s == 0.0);
            CHECK(tl.events[k].channel == Channel::Rf);
            CHECK(std::get<RfPayload>(tl.events[k].payload) == RfPayload{90.0, Phase::Y});
            t += Duration{40.0, "us"}.seconds();
        }
        CHECK(tl.total_duration_s == t);
    }

    SUBCASE("the cw protocol compiles to the documented sequence") {
        const PlanAst ast = parse_plan(read_text(std::string(NVDNP_DATA_DIR) + "/plans/cw_dnp.plan"));
        const Timeline tl = compile_timeline(ast);
        REQUIRE(tl.events.size() == 6);

        const double comb = 8.0 * 10e-3;  // default comb spacing
        CHECK(tl.events[0].channel == Channel::Rf);
        CHECK(tl.events[0].t_start_s == 0.0);
        CHECK(tl.events[0].duration_s == comb);
        CHECK(std::get<SaturatePayload>(tl.events[0].payload) == SaturatePayload{8, 10e-3});

        CHECK(tl.events[1].t_start_s == comb);
        CHECK(std::get<LaserPayload>(tl.events[1].payload) == LaserPayload{true});
        CHECK(tl.events[2].t_start_s == comb);
        CHECK(std::get<MwPayload>(tl.events[2].payload) == MwPayload{true, 16.1});

        // The 60 s wait separates the drive from the readout without an event.
        double t = comb;
        t += Duration{60.0, "s"}.seconds();
        CHECK(tl.events[3].t_start_s == t);
        CHECK(std::get<MwPayload>(tl.events[3].payload) == MwPayload{false, 0.0});
        CHECK(tl.events[4].t_start_s == t);
        CHECK(std::get<RfPayload>(tl.events[4].payload) == RfPayload{90.0, Phase::X});

        CHECK(tl.events[5].t_start_s == t);
        CHECK(tl.events[5].channel == Channel::Acq);
        const double acq = 64.0 * Duration{0.5, "us"}.seconds();
        CHECK(tl.events[5].duration_s == acq);
        CHECK(tl.total_duration_s == t + acq);
    }

    SUBCASE("the saturation comb footprint follows the configured spacing") {
        CompileDefaults defaults;
        defaults.saturate_spacing_s = 5e-3;
        const Timeline tl = compile_timeline(parse_plan("saturate 8\n"), defaults);
        REQUIRE(tl.events.size() == 1);
        CHECK(tl.events[0].duration_s == 8.0 * 5e-3);
        CHECK(std::get<SaturatePayload>(tl.events[0].payload).spacing_s == 5e-3);
    }

    SUBCASE("bad inputs are rejected before any event is emitted") {
        CompileDefaults zero;
        zero.saturate_spacing_s = 0.0;
        CHECK_THROWS_AS(compile_timeline(parse_plan("saturate 1\n"), zero), std::invalid_argument);

        PlanAst bad;
        bad.statements = {wrap(PulseStmt{400.0, Phase::X})};
        CHECK_THROWS_AS(compile_timeline(bad), std::invalid_argument);
        PlanAst weird_unit;
        weird_unit.statements = {wrap(WaitStmt{Duration{1.0, "fortnight"}})};
        CHECK_THROWS_AS(compile_timeline(weird_unit), std::invalid_argument);
    }
}

TEST_CASE("timeline validation rejects disorder and overlap") {
    const TimelineEvent comb{0.0, 1.0, Channel::Rf, SaturatePayload{2, 0.5}};
    const TimelineEvent pulse_at = [](double t) {
        return TimelineEvent{t, 0.0, Channel::Rf, RfPayload{90.0, Phase::X}};
    }(0.5);

    SUBCASE("negative times and durations") {
        Timeline tl;
        tl.events = {TimelineEvent{-1.0, 0.0, Channel::Rf, RfPayload{90.0, Phase::X}}};
        CHECK_THROWS_WITH_AS(validate_timeline(tl), doctest::Contains("negative"), CompileError);
        tl.events = {TimelineEvent{0.0, -2.0, Channel::Acq, AcqPayload{4, 0.5}}};
        CHECK_THROWS_WITH_AS(validate_timeline(tl), doctest::Contains("negative"), CompileError);
    }

    SUBCASE("events must be sorted by start time") {
        Timeline tl;
        tl.events = {TimelineEvent{1.0, 0.0, Channel::Laser, LaserPayload{true}},
                     TimelineEvent{0.0, 0.0, Channel::Laser, LaserPayload{false}}};
        tl.total_duration_s = 1.0;
        CHECK_THROWS_WITH_AS(validate_timeline(tl), doctest::Contains("out of order"),
                             CompileError);
    }

    SUBCASE("an rf pulse inside the comb is an overlap, and the error names both") {
        Timeline tl;
        tl.events = {comb, pulse_at};
        tl.total_duration_s = 1.0;
        CHECK_THROWS_WITH_AS(validate_timeline(tl),
                             doctest::Contains("event 0 (rf at t = 0 s, duration 1 s)"),
                             CompileError);
        CHECK_THROWS_WITH_AS(validate_timeline(tl), doctest::Contains("overlaps event 1"),
                             CompileError);
    }

    SUBCASE("rf during acquisition is an overlap too") {
        Timeline tl;
        tl.events = {TimelineEvent{0.0, 1.0, Channel::Acq, AcqPayload{100, 0.01}}, pulse_at};
        tl.total_duration_s = 1.0;
        CHECK_THROWS_WITH_AS(validate_timeline(tl), doctest::Contains("overlaps"), CompileError);
    }

    SUBCASE("shared endpoints and non-rf channels are fine") {
        Timeline tl;
        tl.events = {comb,
                     TimelineEvent{1.0, 1.0, Channel::Acq, AcqPayload{100, 0.01}}};
        tl.total_duration_s = 2.0;
        CHECK_NOTHROW(validate_timeline(tl));

        // A pulse exactly at the start of an acquisition abuts, not overlaps.
        Timeline abut;
        abut.events = {TimelineEvent{0.0, 0.0, Channel::Rf, RfPayload{90.0, Phase::X}},
                       TimelineEvent{0.0, 1.0, Channel::Acq, AcqPayload{100, 0.01}}};
        abut.total_duration_s = 1.0;
        CHECK_NOTHROW(validate_timeline(abut));

        // Laser and mw state changes may sit inside anything.
        Timeline gated;
        gated.events = {TimelineEvent{0.0, 1.0, Channel::Acq, AcqPayload{100, 0.01}},
                        TimelineEvent{0.4, 0.0, Channel::Laser, LaserPayload{false}},
                        TimelineEvent{0.6, 0.0, Channel::Mw, MwPayload{true, 16.1}}};
        gated.total_duration_s = 1.0;
        CHECK_NOTHROW(validate_timeline(gated));
    }
}

TEST_CASE("timeline json round-trips and rejects malformed input") {
    SUBCASE("a compiled protocol reimports identically") {
        const PlanAst ast =
            parse_plan(read_text(std::string(NVDNP_DATA_DIR) + "/plans/cw_dnp.plan"));
        const Timeline tl = compile_timeline(ast);
        CHECK(timeline_from_json(timeline_to_json(tl)) == tl);

        const Timeline looped =
            compile_timeline(parse_plan("loop 3 {\n  pulse 45 -y\n  wait 1ms\n  acquire 2 1us\n}\n"));
        CHECK(timeline_from_json(timeline_to_json(looped)) == looped);
    }

    SUBCASE("garbage and structural mistakes are compile errors") {
        CHECK_THROWS_WITH_AS(timeline_from_json("not json at all"),
                             doctest::Contains("timeline json"), CompileError);
        CHECK_THROWS_WITH_AS(
            timeline_from_json(R"({"total_duration_s":0,"events":[
                {"t_start_s":0,"duration_s":0,"kind":"blink"}]})"),
            doctest::Contains("unknown event kind 'blink'"), CompileError);
        CHECK_THROWS_WITH_AS(
            timeline_from_json(R"({"total_duration_s":0,"events":[
                {"t_start_s":0,"duration_s":0,"kind":"pulse","angle_deg":90,"phase":"z"}]})"),
            doctest::Contains("bad phase 'z'"), CompileError);
        // Missing payload fields surface through the same error type.
        CHECK_THROWS_WITH_AS(
            timeline_from_json(R"({"total_duration_s":0,"events":[
                {"t_start_s":0,"duration_s":0,"kind":"mw","on":true}]})"),
            doctest::Contains("timeline json"), CompileError);
    }

    SUBCASE("imported timelines are validated like compiled ones") {
        const std::string overlapping = R"({"total_duration_s":1.0,"events":[
            {"t_start_s":0.0,"duration_s":1.0,"kind":"saturate","n_pulses":2,"spacing_s":0.5},
            {"t_start_s":0.5,"duration_s":0.0,"kind":"pulse","angle_deg":90,"phase":"x"}]})";
        CHECK_THROWS_WITH_AS(timeline_from_json(overlapping), doctest::Contains("overlaps"),
                             CompileError);
    }
}

TEST_CASE("execution follows the buildup and readout model") {
    SUBCASE("continuous drive matches the closed-form buildup") {
        // One T_DNP of laser+mw on the spectrum peak, then a 90 degree read.
        const PlanAst ast = parse_plan(
            "laser on\n"
            "mw on 16.1GHz\n"
            "wait 12s\n"
            "mw off\n"
            "pulse 90 x\n"
            "acquire 4 1us\n");
        const auto run = execute_plan(compile_timeline(ast), quiet_physics(), 1);
        REQUIRE(run.acquisitions.size() == 1);
        CHECK(run.warnings.empty());

        const double built = 0.8 * (1.0 - std::exp(-1.0));
        CHECK(run.acquisitions[0].samples[0].real() == Approx(built).epsilon(1e-12));
        CHECK(std::abs(run.acquisitions[0].samples[0].imag()) < 1e-15);

        // Same number the standalone buildup model produces.
        const BuildupCurve curve = simulate_buildup(12.0, 0.8, {12.0});
        CHECK(run.acquisitions[0].samples[0].real() ==
              Approx(curve.polarization[0]).epsilon(1e-12));

        // The 90 degree pulse leaves nothing longitudinal.
        CHECK(std::abs(run.final_state.polarization) < 1e-15);
        CHECK(run.final_state.laser_on);
        CHECK(!run.final_state.mw_on);
    }

    SUBCASE("the drive strength follows the response shape at the mw frequency") {
        PlanPhysics ph = quiet_physics();
        const char* body =
            "mw on 16GHz\n"
            "wait 12s\n"
            "mw off\n"
            "pulse 90 x\n"
            "acquire 1 1us\n";
        const auto shoulder =
            execute_plan(compile_timeline(parse_plan(std::string("laser on\n") + body)), ph, 0);
        CHECK(shoulder.acquisitions[0].samples[0].real() ==
              Approx(0.8 * 0.6 * (1.0 - std::exp(-1.0))).epsilon(1e-12));

        // Off the grid the response interpolates to zero: nothing builds up.
        const auto detuned = execute_plan(
            compile_timeline(parse_plan("laser on\nmw on 17GHz\nwait 12s\nmw off\npulse 90 x\n"
                                        "acquire 1 1us\n")),
            ph, 0);
        CHECK(detuned.acquisitions[0].samples[0] == std::complex<double>(0.0, 0.0));

        // A uniformly zero response is legal and also builds nothing.
        PlanPhysics flat = ph;
        flat.spectrum.signal = {0.0, 0.0, 0.0, 0.0, 0.0};
        const auto dead =
            execute_plan(compile_timeline(parse_plan(std::string("laser on\n") + body)), flat, 0);
        CHECK(dead.acquisitions[0].samples[0] == std::complex<double>(0.0, 0.0));
    }

    SUBCASE("undriven stretches relax at T1n") {
        PlanPhysics ph = quiet_physics();
        ph.T1n_s = 5.0;
        const PlanAst ast = parse_plan(
            "laser on\n"
            "mw on 16.1GHz\n"
            "wait 12s\n"
            "mw off\n"
            "laser off\n"
            "wait 5s\n"
            "pulse 90 x\n"
            "acquire 1 1us\n");
        const double built = 0.8 * (1.0 - std::exp(-1.0));
        const auto run = execute_plan(compile_timeline(ast), ph, 0);
        CHECK(run.acquisitions[0].samples[0].real() ==
              Approx(built * std::exp(-1.0)).epsilon(1e-12));

        // With T1n infinite the stored polarization keeps.
        const auto kept = execute_plan(compile_timeline(ast), quiet_physics(), 0);
        CHECK(kept.acquisitions[0].samples[0].real() == Approx(built).epsilon(1e-12));
    }

    SUBCASE("a trailing wait still advances the state to the end of the plan") {
        PlanPhysics ph = quiet_physics();
        ph.T1n_s = 5.0;
        const PlanAst ast = parse_plan(
            "laser on\nmw on 16.1GHz\nwait 12s\nmw off\nlaser off\nwait 5s\n");
        const Timeline tl = compile_timeline(ast);
        const auto run = execute_plan(tl, ph, 0);
        CHECK(run.acquisitions.empty());
        const double built = 0.8 * (1.0 - std::exp(-1.0));
        CHECK(run.final_state.polarization == Approx(built * std::exp(-1.0)).epsilon(1e-12));
        CHECK(run.final_state.clock_s == tl.total_duration_s);
    }

    SUBCASE("saturation clears everything it should") {
        PlanPhysics ph = quiet_physics();
        const PlanAst ast = parse_plan(
            "laser on\nmw on 16.1GHz\nwait 24s\nmw off\nsaturate 4\npulse 90 x\nacquire 8 1us\n");
        const auto run = execute_plan(compile_timeline(ast), ph, 0);
        REQUIRE(run.acquisitions.size() == 1);
        CHECK(run.warnings.empty());
        for (const auto& s : run.acquisitions[0].samples)
            CHECK(s == std::complex<double>(0.0, 0.0));
    }

    SUBCASE("acquiring without an excitation pulse warns and yields pure noise") {
        PlanPhysics ph = quiet_physics();
        ph.noise_sigma = 0.02;
        const PlanAst ast = parse_plan("saturate 2\nacquire 8 1us\n");
        const auto run = execute_plan(compile_timeline(ast), ph, 7);
        REQUIRE(run.acquisitions.size() == 1);
        REQUIRE(run.warnings.size() == 1);
        CHECK(run.warnings[0].find("no prior excitation pulse; expect noise only") !=
              std::string::npos);

        // The acquisition is the synthesizer's output for a zero-amplitude
        // fid under the per-acquisition derived seed, bit for bit.
        FidParams f = ph.fid;
        f.amplitude = 0.0;
        const FidRecord expect =
            synthesize_fid(f, 8, 1e-6, 0.02, derive_seed(std::uint64_t{7}, "acquire/0"));
        CHECK(run.acquisitions[0].samples == expect.samples);
        CHECK(run.acquisitions[0].dwell_s == expect.dwell_s);
    }

    SUBCASE("runs are reproducible by seed") {
        PlanPhysics ph = quiet_physics();
        ph.noise_sigma = 0.01;
        const Timeline tl = compile_timeline(parse_plan(
            "laser on\nmw on 16.1GHz\nwait 6s\nmw off\npulse 90 x\nacquire 16 1us\n"));
        const auto a = execute_plan(tl, ph, 99);
        const auto b = execute_plan(tl, ph, 99);
        const auto c = execute_plan(tl, ph, 100);
        CHECK(a.acquisitions[0].samples == b.acquisitions[0].samples);
        CHECK(a.acquisitions[0].samples != c.acquisitions[0].samples);
    }

    SUBCASE("pulses tip by sine and deplete by cosine") {
        const double pi = std::acos(-1.0);
        const PlanAst ast = parse_plan(
            "laser on\nmw on 16.1GHz\nwait 12s\nmw off\n"
            "pulse 30 x\nacquire 1 1us\npulse 30 x\nacquire 1 1us\n");
        const auto run = execute_plan(compile_timeline(ast), quiet_physics(), 0);
        REQUIRE(run.acquisitions.size() == 2);
        const double built = 0.8 * (1.0 - std::exp(-1.0));
        const double s30 = std::sin(30.0 * pi / 180.0);
        const double c30 = std::cos(30.0 * pi / 180.0);
        const double first = run.acquisitions[0].samples[0].real();
        const double second = run.acquisitions[1].samples[0].real();
        CHECK(first == Approx(built * s30).epsilon(1e-12));
        CHECK(second == Approx(built * c30 * s30).epsilon(1e-12));
        CHECK(second / first == Approx(c30).epsilon(1e-12));
    }

    SUBCASE("the pulse phase lands the signal on the matching channel") {
        const PlanAst ast = parse_plan(
            "laser on\nmw on 16.1GHz\nwait 12s\nmw off\npulse 90 -y\nacquire 1 1us\n");
        const auto run = execute_plan(compile_timeline(ast), quiet_physics(), 0);
        const double built = 0.8 * (1.0 - std::exp(-1.0));
        CHECK(run.acquisitions[0].samples[0].imag() == Approx(-built).epsilon(1e-12));
        CHECK(std::abs(run.acquisitions[0].samples[0].real()) < 1e-12);
    }

    SUBCASE("transverse magnetization decays at T2* while it waits") {
        PlanPhysics ph = quiet_physics();
        ph.fid.T2star_s = 2e-3;
        const PlanAst ast = parse_plan(
            "laser on\nmw on 16.1GHz\nwait 12s\nmw off\npulse 90 x\nwait 2ms\nacquire 1 1us\n");
        const auto run = execute_plan(compile_timeline(ast), ph, 0);
        const double built = 0.8 * (1.0 - std::exp(-1.0));
        CHECK(run.acquisitions[0].samples[0].real() ==
              Approx(built * std::exp(-1.0)).epsilon(1e-12));
    }

    SUBCASE("physics parameters are validated up front") {
        const Timeline tl = compile_timeline(parse_plan("laser on\n"));
        PlanPhysics ph = quiet_physics();
        ph.T_DNP_s = 0.0;
        CHECK_THROWS_AS(execute_plan(tl, ph), std::invalid_argument);
        ph = quiet_physics();
        ph.T_DNP_s = kInf;
        CHECK_THROWS_AS(execute_plan(tl, ph), std::invalid_argument);
        ph = quiet_physics();
        ph.T1n_s = 0.0;
        CHECK_THROWS_AS(execute_plan(tl, ph), std::invalid_argument);
        ph = quiet_physics();
        ph.noise_sigma = -1e-3;
        CHECK_THROWS_AS(execute_plan(tl, ph), std::invalid_argument);
        ph = quiet_physics();
        std::swap(ph.spectrum.mw_frequencies_GHz[1], ph.spectrum.mw_frequencies_GHz[3]);
        CHECK_THROWS_AS(execute_plan(tl, ph), std::invalid_argument);
    }
}

TEST_CASE("frequency sweeps express the response as scale factors") {
    const PlanAst plan = parse_plan(
        "laser on\n"
        "mw on 1GHz\n"  // retuned at every sweep point
        "wait 30s\n"
        "mw off\n"
        "pulse 90 x\n"
        "acquire 32 1us\n");

    SUBCASE("a noiseless sweep reads back the response ratios") {
        const PlanPhysics ph = quiet_physics();
        const std::vector<double> freqs = ph.spectrum.mw_frequencies_GHz;
        const SweepResult sw = run_fmw_sweep(plan, freqs, ph, {}, 42);
        CHECK(sw.model_index == 2);
        CHECK(sw.curve.mw_frequencies_GHz == freqs);
        CHECK(sw.curve.signal[2] == 1.0);  // the model point is its own reference
        for (std::size_t i = 0; i < freqs.size(); ++i) {
            CHECK(sw.curve.signal[i] == Approx(ph.spectrum.signal[i]).epsilon(1e-9));
        }
        CHECK(sw.raw_amplitudes == sw.curve.signal);
    }

    SUBCASE("points outside the response support scale to exactly zero") {
        const PlanPhysics ph = quiet_physics();
        const SweepResult sw = run_fmw_sweep(plan, {15.5, 16.1}, ph, {}, 0);
        CHECK(sw.model_index == 1);
        CHECK(sw.curve.signal[0] == 0.0);
        CHECK(sw.curve.signal[1] == 1.0);
    }

    SUBCASE("noisy sweeps are seed-deterministic") {
        PlanPhysics ph = quiet_physics();
        ph.noise_sigma = 0.01;
        const std::vector<double> freqs = ph.spectrum.mw_frequencies_GHz;
        const SweepResult a = run_fmw_sweep(plan, freqs, ph, {}, 42);
        const SweepResult b = run_fmw_sweep(plan, freqs, ph, {}, 42);
        const SweepResult c = run_fmw_sweep(plan, freqs, ph, {}, 43);
        CHECK(a.curve.signal == b.curve.signal);
        CHECK(a.curve.signal != c.curve.signal);
        CHECK(a.model_index == 2);  // the peak dominates this noise level
    }

    SUBCASE("degenerate sweeps are rejected") {
        const PlanPhysics ph = quiet_physics();
        CHECK_THROWS_AS(run_fmw_sweep(plan, {16.1}, ph), std::invalid_argument);
        CHECK_THROWS_AS(run_fmw_sweep(plan, {16.1, 16.0}, ph), std::invalid_argument);
        CHECK_THROWS_AS(run_fmw_sweep(plan, {16.0, 16.0}, ph), std::invalid_argument);
        const PlanAst silent = parse_plan("laser on\nwait 1s\n");
        CHECK_THROWS_AS(run_fmw_sweep(silent, {16.0, 16.1}, ph), std::invalid_argument);
    }
}
