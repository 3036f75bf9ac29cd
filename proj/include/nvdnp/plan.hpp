#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "nvdnp/dnp.hpp"
#include "nvdnp/signal.hpp"

namespace nvdnp {

// A quantity exactly as written in a plan, unit string preserved so that
// printing reproduces the source form.
struct Duration {
    double value = 0.0;
    std::string unit = "s";  // s | ms | us
    double seconds() const;
    bool operator==(const Duration&) const = default;
};

struct Frequency {
    double value = 0.0;
    std::string unit = "GHz";  // GHz | MHz
    double GHz() const;
    bool operator==(const Frequency&) const = default;
};

enum class Phase { X, Y, MinusX, MinusY };

struct SaturateStmt {
    int n_pulses = 1;
    bool operator==(const SaturateStmt&) const = default;
};
struct WaitStmt {
    Duration duration;
    bool operator==(const WaitStmt&) const = default;
};
struct MwStmt {
    bool on = false;
    Frequency freq;  // meaningful only when on
    bool operator==(const MwStmt&) const = default;
};
struct LaserStmt {
    bool on = false;
    bool operator==(const LaserStmt&) const = default;
};
struct PulseStmt {
    double angle_deg = 90.0;
    Phase phase = Phase::X;
    bool operator==(const PulseStmt&) const = default;
};
struct AcquireStmt {
    int n_points = 32;
    Duration dwell;
    bool operator==(const AcquireStmt&) const = default;
};

struct Stmt;
struct LoopStmt {
    int count = 1;
    std::vector<Stmt> body;
    bool operator==(const LoopStmt&) const = default;
};

struct Stmt {
    std::variant<SaturateStmt, WaitStmt, MwStmt, LaserStmt, PulseStmt, AcquireStmt, LoopStmt> node;
    bool operator==(const Stmt&) const = default;
};

struct PlanAst {
    std::vector<Stmt> statements;
    void validate() const;
    bool operator==(const PlanAst&) const = default;
};

class ParseError : public std::runtime_error {
  public:
    ParseError(const std::string& msg, int line_in, int col_in)
        : std::runtime_error("line " + std::to_string(line_in) + ", col " +
                             std::to_string(col_in) + ": " + msg),
          line(line_in),
          col(col_in) {}
    int line;
    int col;
};

PlanAst parse_plan(const std::string& text);

// Canonical source form; parse(print_plan(ast)) == ast for any valid AST.
std::string print_plan(const PlanAst& ast);

// ---- compiled timeline ----

enum class Channel { Laser, Mw, Rf, Acq };

struct SaturatePayload {
    int n_pulses;
    double spacing_s;
    bool operator==(const SaturatePayload&) const = default;
};
struct MwPayload {
    bool on;
    double freq_GHz;  // 0 when off
    bool operator==(const MwPayload&) const = default;
};
struct LaserPayload {
    bool on;
    bool operator==(const LaserPayload&) const = default;
};
struct RfPayload {
    double angle_deg;
    Phase phase;
    bool operator==(const RfPayload&) const = default;
};
struct AcqPayload {
    int n_points;
    double dwell_s;
    bool operator==(const AcqPayload&) const = default;
};

struct TimelineEvent {
    double t_start_s = 0.0;
    double duration_s = 0.0;
    Channel channel = Channel::Laser;
    std::variant<SaturatePayload, MwPayload, LaserPayload, RfPayload, AcqPayload> payload;
    bool operator==(const TimelineEvent&) const = default;
};

struct Timeline {
    std::vector<TimelineEvent> events;
    double total_duration_s = 0.0;
    bool operator==(const Timeline&) const = default;
};

class CompileError : public std::runtime_error {
  public:
    explicit CompileError(const std::string& msg) : std::runtime_error(msg) {}
};

struct CompileDefaults {
    // The source protocol does not fix the saturation comb; these defaults
    // are arbitrary and only set the comb's footprint on the clock.
    double saturate_spacing_s = 10e-3;
};

Timeline compile_timeline(const PlanAst& ast, const CompileDefaults& defaults = {});

// Ordering and overlap invariants; compile_timeline always passes, imported
// or hand-built timelines may not. Throws CompileError naming both events.
void validate_timeline(const Timeline& timeline);

std::string timeline_to_json(const Timeline& timeline);
Timeline timeline_from_json(const std::string& json_text);

// ---- execution against the forward models ----

struct PlanPhysics {
    DnpSpectrum spectrum;    // DNP response shape; normalized internally
    double P_asymptote = 1.0;  // polarization at the spectrum's strongest point
    double T_DNP_s = 1.0;
    double T1n_s = 1.0;
    FidParams fid;           // transverse decay and offset for acquisitions
    double noise_sigma = 0.0;
};

struct ExecutionState {
    double polarization = 0.0;
    double transverse_amp = 0.0;
    double transverse_phase_rad = 0.0;
    double mw_freq_GHz = 0.0;
    bool mw_on = false;
    bool laser_on = false;
    double clock_s = 0.0;
    bool excited_since_reset = false;
};

struct ExecutionResult {
    std::vector<FidRecord> acquisitions;
    std::vector<std::string> warnings;
    ExecutionState final_state;
};

ExecutionResult execute_plan(const Timeline& timeline, const PlanPhysics& physics,
                             std::uint64_t seed = 0);

// Run the plan once per microwave frequency (every `mw on` statement is
// retuned to the sweep point), then express each first acquisition as a
// scaling factor against the strongest one. Mirrors the FID-ratio readout
// used for sweep data.
struct SweepResult {
    DnpSpectrum curve;          // signal = scale relative to the model point
    std::size_t model_index = 0;
    std::vector<double> raw_amplitudes;  // per-point fitted scales
};

SweepResult run_fmw_sweep(const PlanAst& plan, const std::vector<double>& f_MW_GHz,
                          const PlanPhysics& physics, const CompileDefaults& defaults = {},
                          std::uint64_t seed = 0);

}  // namespace nvdnp
