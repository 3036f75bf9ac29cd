#include "nvdnp/plan.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <functional>
#include <nlohmann/json.hpp>
#include <sstream>

#include "nvdnp/csv.hpp"
#include "nvdnp/rng.hpp"

namespace nvdnp {
namespace {

constexpr double kPi = 3.14159265358979323846;

// ---- lexer ----

struct Token {
    enum class Kind { Word, Number, LBrace, RBrace, End };
    Kind kind = Kind::End;
    std::string text;  // word spelling, or the unit suffix of a number
    double number = 0.0;
    int line = 1;
    int col = 1;
};

std::vector<Token> tokenize(const std::string& text) {
    std::vector<Token> toks;
    int line = 1, col = 1;
    std::size_t i = 0;
    const auto n = text.size();
    auto advance = [&](std::size_t count) {
        for (std::size_t k = 0; k < count; ++k, ++i) {
            if (text[i] == '\n') {
                ++line;
                col = 1;
            } else {
                ++col;
            }
        }
    };
    while (i < n) {
        const char c = text[i];
        if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
            advance(1);
            continue;
        }
        if (c == '#') {
            while (i < n && text[i] != '\n') advance(1);
            continue;
        }
        Token t;
        t.line = line;
        t.col = col;
        if (c == '{' || c == '}') {
            t.kind = c == '{' ? Token::Kind::LBrace : Token::Kind::RBrace;
            t.text = c;
            advance(1);
            toks.push_back(std::move(t));
            continue;
        }
        const bool sign_number = (c == '+' || c == '-') && i + 1 < n &&
                                 (std::isdigit(static_cast<unsigned char>(text[i + 1])) ||
                                  text[i + 1] == '.');
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.' || sign_number) {
            std::size_t j = i;
            if (text[j] == '+' || text[j] == '-') ++j;
            bool saw_digit = false;
            while (j < n && std::isdigit(static_cast<unsigned char>(text[j]))) {
                ++j;
                saw_digit = true;
            }
            if (j < n && text[j] == '.') {
                ++j;
                while (j < n && std::isdigit(static_cast<unsigned char>(text[j]))) {
                    ++j;
                    saw_digit = true;
                }
            }
            if (!saw_digit) throw ParseError("malformed number", line, col);
            if (j < n && (text[j] == 'e' || text[j] == 'E')) {
                std::size_t k = j + 1;
                if (k < n && (text[k] == '+' || text[k] == '-')) ++k;
                if (k < n && std::isdigit(static_cast<unsigned char>(text[k]))) {
                    ++k;
                    while (k < n && std::isdigit(static_cast<unsigned char>(text[k]))) ++k;
                    j = k;
                }
            }
            const std::string numeric = (text[i] == '+') ? text.substr(i + 1, j - i - 1)
                                                         : text.substr(i, j - i);
            try {
                t.number = parse_double(numeric);
            } catch (const CsvError&) {
                throw ParseError("malformed number '" + numeric + "'", line, col);
            }
            std::size_t u = j;
            while (u < n && std::isalpha(static_cast<unsigned char>(text[u]))) ++u;
            t.text = text.substr(j, u - j);  // unit suffix, possibly empty
            t.kind = Token::Kind::Number;
            advance(u - i);
            toks.push_back(std::move(t));
            continue;
        }
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_' || c == '-') {
            std::size_t j = i + (c == '-' ? 1 : 0);
            if (c == '-' && (j >= n || !std::isalpha(static_cast<unsigned char>(text[j]))))
                throw ParseError("unexpected character '-'", line, col);
            while (j < n && (std::isalnum(static_cast<unsigned char>(text[j])) || text[j] == '_'))
                ++j;
            t.kind = Token::Kind::Word;
            t.text = text.substr(i, j - i);
            advance(j - i);
            toks.push_back(std::move(t));
            continue;
        }
        throw ParseError(std::string("unexpected character '") + c + "'", line, col);
    }
    Token end;
    end.kind = Token::Kind::End;
    end.line = line;
    end.col = col;
    toks.push_back(std::move(end));
    return toks;
}

// ---- parser ----

class Parser {
  public:
    explicit Parser(std::vector<Token> toks) : toks_(std::move(toks)) {}

    PlanAst run() {
        PlanAst ast;
        ast.statements = parse_stmts(false);
        const Token& t = peek();
        if (t.kind == Token::Kind::RBrace) throw ParseError("unbalanced '}'", t.line, t.col);
        return ast;
    }

  private:
    const Token& peek() const { return toks_[pos_]; }
    const Token& next() { return toks_[pos_++]; }

    std::vector<Stmt> parse_stmts(bool in_loop) {
        std::vector<Stmt> out;
        while (true) {
            const Token& t = peek();
            if (t.kind == Token::Kind::End) return out;
            if (t.kind == Token::Kind::RBrace) {
                if (in_loop) return out;
                return out;  // caller reports the unbalanced brace
            }
            out.push_back(parse_stmt());
        }
    }

    Stmt parse_stmt() {
        const Token& t = next();
        if (t.kind != Token::Kind::Word)
            throw ParseError("expected a statement keyword, got '" + t.text + "'", t.line, t.col);
        if (t.text == "saturate") return Stmt{SaturateStmt{parse_count("saturate pulse count")}};
        if (t.text == "wait") return Stmt{WaitStmt{parse_duration("wait")}};
        if (t.text == "mw") {
            const Token& w = next();
            if (w.kind == Token::Kind::Word && w.text == "off") return Stmt{MwStmt{false, {}}};
            if (w.kind == Token::Kind::Word && w.text == "on")
                return Stmt{MwStmt{true, parse_frequency("mw on")}};
            throw ParseError("mw expects 'on <frequency>' or 'off'", w.line, w.col);
        }
        if (t.text == "laser") {
            const Token& w = next();
            if (w.kind == Token::Kind::Word && (w.text == "on" || w.text == "off"))
                return Stmt{LaserStmt{w.text == "on"}};
            throw ParseError("laser expects 'on' or 'off'", w.line, w.col);
        }
        if (t.text == "pulse") {
            const Token& num = next();
            if (num.kind != Token::Kind::Number)
                throw ParseError("pulse expects an angle in degrees", num.line, num.col);
            if (!num.text.empty())
                throw ParseError("pulse angle takes no unit, got '" + num.text + "'", num.line,
                                 num.col);
            if (!(num.number > 0.0 && num.number < 360.0))
                throw ParseError("pulse angle must lie in (0, 360)", num.line, num.col);
            const Token& ph = next();
            Phase phase;
            if (ph.kind == Token::Kind::Word && ph.text == "x")
                phase = Phase::X;
            else if (ph.kind == Token::Kind::Word && ph.text == "y")
                phase = Phase::Y;
            else if (ph.kind == Token::Kind::Word && ph.text == "-x")
                phase = Phase::MinusX;
            else if (ph.kind == Token::Kind::Word && ph.text == "-y")
                phase = Phase::MinusY;
            else
                throw ParseError("pulse phase must be one of x, y, -x, -y", ph.line, ph.col);
            return Stmt{PulseStmt{num.number, phase}};
        }
        if (t.text == "acquire") {
            const int n = parse_count("acquire point count");
            return Stmt{AcquireStmt{n, parse_duration("acquire dwell")}};
        }
        if (t.text == "loop") {
            const int count = parse_count("loop count");
            const Token& open = next();
            if (open.kind != Token::Kind::LBrace)
                throw ParseError("loop body must start with '{'", open.line, open.col);
            LoopStmt loop{count, parse_stmts(true)};
            const Token& close = next();
            if (close.kind != Token::Kind::RBrace)
                throw ParseError("unbalanced braces: loop body never closed", close.line,
                                 close.col);
            return Stmt{std::move(loop)};
        }
        throw ParseError("unknown keyword '" + t.text + "'", t.line, t.col);
    }

    int parse_count(const char* what) {
        const Token& t = next();
        if (t.kind != Token::Kind::Number || !t.text.empty())
            throw ParseError(std::string(what) + " expects a bare integer", t.line, t.col);
        if (!(t.number >= 1.0) || t.number != std::floor(t.number) || t.number > 1e9)
            throw ParseError(std::string(what) + " must be a positive integer", t.line, t.col);
        return static_cast<int>(t.number);
    }

    Duration parse_duration(const char* what) {
        const Token& t = next();
        if (t.kind != Token::Kind::Number)
            throw ParseError(std::string(what) + " expects a duration", t.line, t.col);
        if (t.text != "s" && t.text != "ms" && t.text != "us")
            throw ParseError("malformed duration unit '" + t.text + "' (use s, ms, or us)", t.line,
                             t.col);
        if (!(t.number > 0.0))
            throw ParseError(std::string(what) + " duration must be positive", t.line, t.col);
        return Duration{t.number, t.text};
    }

    Frequency parse_frequency(const char* what) {
        const Token& t = next();
        if (t.kind != Token::Kind::Number)
            throw ParseError(std::string(what) + " expects a frequency", t.line, t.col);
        if (t.text != "GHz" && t.text != "MHz")
            throw ParseError("malformed frequency unit '" + t.text + "' (use GHz or MHz)", t.line,
                             t.col);
        if (!(t.number > 0.0))
            throw ParseError(std::string(what) + " frequency must be positive", t.line, t.col);
        return Frequency{t.number, t.text};
    }

    std::vector<Token> toks_;
    std::size_t pos_ = 0;
};

// ---- printing ----

const char* phase_name(Phase p) {
    switch (p) {
        case Phase::X: return "x";
        case Phase::Y: return "y";
        case Phase::MinusX: return "-x";
        case Phase::MinusY: return "-y";
    }
    return "x";
}

void print_stmts(std::ostringstream& out, const std::vector<Stmt>& stmts, int depth);

void print_one(std::ostringstream& out, const Stmt& stmt, int depth) {
    const std::string pad(static_cast<std::size_t>(depth) * 2, ' ');
    std::visit(
        [&](const auto& s) {
            using T = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<T, SaturateStmt>) {
                out << pad << "saturate " << s.n_pulses << "\n";
            } else if constexpr (std::is_same_v<T, WaitStmt>) {
                out << pad << "wait " << format_double(s.duration.value) << s.duration.unit << "\n";
            } else if constexpr (std::is_same_v<T, MwStmt>) {
                if (s.on)
                    out << pad << "mw on " << format_double(s.freq.value) << s.freq.unit << "\n";
                else
                    out << pad << "mw off\n";
            } else if constexpr (std::is_same_v<T, LaserStmt>) {
                out << pad << "laser " << (s.on ? "on" : "off") << "\n";
            } else if constexpr (std::is_same_v<T, PulseStmt>) {
                out << pad << "pulse " << format_double(s.angle_deg) << ' ' << phase_name(s.phase)
                    << "\n";
            } else if constexpr (std::is_same_v<T, AcquireStmt>) {
                out << pad << "acquire " << s.n_points << ' ' << format_double(s.dwell.value)
                    << s.dwell.unit << "\n";
            } else if constexpr (std::is_same_v<T, LoopStmt>) {
                out << pad << "loop " << s.count << " {\n";
                print_stmts(out, s.body, depth + 1);
                out << pad << "}\n";
            }
        },
        stmt.node);
}

void print_stmts(std::ostringstream& out, const std::vector<Stmt>& stmts, int depth) {
    for (const auto& s : stmts) print_one(out, s, depth);
}

// ---- validation helpers ----

void validate_duration(const Duration& d, const char* what) {
    if (d.unit != "s" && d.unit != "ms" && d.unit != "us")
        throw std::invalid_argument(std::string(what) + ": unknown duration unit '" + d.unit + "'");
    if (!(d.value > 0.0) || !std::isfinite(d.value))
        throw std::invalid_argument(std::string(what) + ": duration must be positive");
}

void validate_stmts(const std::vector<Stmt>& stmts) {
    for (const auto& stmt : stmts)
        std::visit(
            [](const auto& s) {
                using T = std::decay_t<decltype(s)>;
                if constexpr (std::is_same_v<T, SaturateStmt>) {
                    if (s.n_pulses < 1)
                        throw std::invalid_argument("saturate: need at least 1 pulse");
                } else if constexpr (std::is_same_v<T, WaitStmt>) {
                    validate_duration(s.duration, "wait");
                } else if constexpr (std::is_same_v<T, MwStmt>) {
                    if (s.on) {
                        if (s.freq.unit != "GHz" && s.freq.unit != "MHz")
                            throw std::invalid_argument("mw: unknown frequency unit '" +
                                                        s.freq.unit + "'");
                        if (!(s.freq.value > 0.0) || !std::isfinite(s.freq.value))
                            throw std::invalid_argument("mw: frequency must be positive");
                    }
                } else if constexpr (std::is_same_v<T, PulseStmt>) {
                    if (!(s.angle_deg > 0.0 && s.angle_deg < 360.0))
                        throw std::invalid_argument("pulse: angle must lie in (0, 360)");
                } else if constexpr (std::is_same_v<T, AcquireStmt>) {
                    if (s.n_points < 1)
                        throw std::invalid_argument("acquire: need at least 1 point");
                    validate_duration(s.dwell, "acquire");
                } else if constexpr (std::is_same_v<T, LoopStmt>) {
                    if (s.count < 1) throw std::invalid_argument("loop: count must be >= 1");
                    validate_stmts(s.body);
                }
            },
            stmt.node);
}

// ---- execution ----

double phase_to_rad(Phase p) {
    switch (p) {
        case Phase::X: return 0.0;
        case Phase::Y: return 0.5 * kPi;
        case Phase::MinusX: return kPi;
        case Phase::MinusY: return 1.5 * kPi;
    }
    return 0.0;
}

double interp_shape(const DnpSpectrum& s, double f_GHz) {
    const auto& xs = s.mw_frequencies_GHz;
    const auto& ys = s.signal;
    if (xs.empty() || f_GHz < xs.front() || f_GHz > xs.back()) return 0.0;
    const auto it = std::upper_bound(xs.begin(), xs.end(), f_GHz);
    if (it == xs.begin()) return ys.front();
    if (it == xs.end()) return ys.back();
    const std::size_t hi = static_cast<std::size_t>(it - xs.begin());
    const double t = (f_GHz - xs[hi - 1]) / (xs[hi] - xs[hi - 1]);
    return ys[hi - 1] + t * (ys[hi] - ys[hi - 1]);
}

void retune_mw(std::vector<Stmt>& stmts, double f_GHz) {
    for (auto& stmt : stmts)
        std::visit(
            [f_GHz](auto& s) {
                using T = std::decay_t<decltype(s)>;
                if constexpr (std::is_same_v<T, MwStmt>) {
                    if (s.on) s.freq = Frequency{f_GHz, "GHz"};
                } else if constexpr (std::is_same_v<T, LoopStmt>) {
                    retune_mw(s.body, f_GHz);
                }
            },
            stmt.node);
}

}  // namespace

double Duration::seconds() const {
    if (unit == "s") return value;
    if (unit == "ms") return value * 1e-3;
    if (unit == "us") return value * 1e-6;
    throw std::invalid_argument("Duration: unknown unit '" + unit + "'");
}

double Frequency::GHz() const {
    if (unit == "GHz") return value;
    if (unit == "MHz") return value * 1e-3;
    throw std::invalid_argument("Frequency: unknown unit '" + unit + "'");
}

void PlanAst::validate() const { validate_stmts(statements); }

PlanAst parse_plan(const std::string& text) { return Parser(tokenize(text)).run(); }

std::string print_plan(const PlanAst& ast) {
    std::ostringstream out;
    print_stmts(out, ast.statements, 0);
    return out.str();
}

Timeline compile_timeline(const PlanAst& ast, const CompileDefaults& defaults) {
    ast.validate();
    if (!(defaults.saturate_spacing_s > 0.0) || !std::isfinite(defaults.saturate_spacing_s))
        throw std::invalid_argument("compile_timeline: saturate spacing must be positive");

    Timeline out;
    double clock = 0.0;
    const std::function<void(const std::vector<Stmt>&)> emit = [&](const std::vector<Stmt>& stmts) {
        for (const auto& stmt : stmts)
            std::visit(
                [&](const auto& s) {
                    using T = std::decay_t<decltype(s)>;
                    if constexpr (std::is_same_v<T, SaturateStmt>) {
                        const double dur = double(s.n_pulses) * defaults.saturate_spacing_s;
                        out.events.push_back({clock, dur, Channel::Rf,
                                              SaturatePayload{s.n_pulses,
                                                              defaults.saturate_spacing_s}});
                        clock += dur;
                    } else if constexpr (std::is_same_v<T, WaitStmt>) {
                        clock += s.duration.seconds();
                    } else if constexpr (std::is_same_v<T, MwStmt>) {
                        out.events.push_back(
                            {clock, 0.0, Channel::Mw, MwPayload{s.on, s.on ? s.freq.GHz() : 0.0}});
                    } else if constexpr (std::is_same_v<T, LaserStmt>) {
                        out.events.push_back({clock, 0.0, Channel::Laser, LaserPayload{s.on}});
                    } else if constexpr (std::is_same_v<T, PulseStmt>) {
                        out.events.push_back(
                            {clock, 0.0, Channel::Rf, RfPayload{s.angle_deg, s.phase}});
                    } else if constexpr (std::is_same_v<T, AcquireStmt>) {
                        const double dur = double(s.n_points) * s.dwell.seconds();
                        out.events.push_back(
                            {clock, dur, Channel::Acq, AcqPayload{s.n_points, s.dwell.seconds()}});
                        clock += dur;
                    } else if constexpr (std::is_same_v<T, LoopStmt>) {
                        for (int k = 0; k < s.count; ++k) emit(s.body);
                    }
                },
                stmt.node);
    };
    emit(ast.statements);
    out.total_duration_s = clock;
    validate_timeline(out);
    return out;
}

void validate_timeline(const Timeline& timeline) {
    const auto& ev = timeline.events;
    auto describe = [&](std::size_t i) {
        const char* ch = ev[i].channel == Channel::Laser  ? "laser"
                         : ev[i].channel == Channel::Mw   ? "mw"
                         : ev[i].channel == Channel::Rf   ? "rf"
                                                          : "acq";
        return std::string("event ") + std::to_string(i) + " (" + ch + " at t = " +
               format_double(ev[i].t_start_s) + " s, duration " + format_double(ev[i].duration_s) +
               " s)";
    };
    for (std::size_t i = 0; i < ev.size(); ++i) {
        if (!(ev[i].t_start_s >= 0.0) || !(ev[i].duration_s >= 0.0))
            throw CompileError("timeline: " + describe(i) + " has negative time or duration");
        if (i > 0 && ev[i].t_start_s < ev[i - 1].t_start_s)
            throw CompileError("timeline: events out of order: " + describe(i - 1) + " then " +
                               describe(i));
    }
    // Strict interval overlap; shared endpoints are allowed (instantaneous
    // pulses legitimately abut acquisitions and combs).
    auto overlaps = [&](std::size_t a, std::size_t b) {
        return ev[a].t_start_s < ev[b].t_start_s + ev[b].duration_s &&
               ev[b].t_start_s < ev[a].t_start_s + ev[a].duration_s;
    };
    for (std::size_t i = 0; i < ev.size(); ++i) {
        if (ev[i].channel != Channel::Rf && ev[i].channel != Channel::Acq) continue;
        for (std::size_t j = i + 1; j < ev.size(); ++j) {
            const bool rf_pair = ev[i].channel == Channel::Rf && ev[j].channel == Channel::Rf;
            const bool rf_acq = (ev[i].channel == Channel::Rf && ev[j].channel == Channel::Acq) ||
                                (ev[i].channel == Channel::Acq && ev[j].channel == Channel::Rf);
            if (!rf_pair && !rf_acq) continue;
            if (overlaps(i, j))
                throw CompileError("timeline: " + describe(i) + " overlaps " + describe(j));
        }
    }
}

std::string timeline_to_json(const Timeline& timeline) {
    nlohmann::json j;
    j["total_duration_s"] = timeline.total_duration_s;
    j["events"] = nlohmann::json::array();
    for (const auto& e : timeline.events) {
        nlohmann::json je;
        je["t_start_s"] = e.t_start_s;
        je["duration_s"] = e.duration_s;
        std::visit(
            [&](const auto& p) {
                using T = std::decay_t<decltype(p)>;
                if constexpr (std::is_same_v<T, SaturatePayload>) {
                    je["channel"] = "rf";
                    je["kind"] = "saturate";
                    je["n_pulses"] = p.n_pulses;
                    je["spacing_s"] = p.spacing_s;
                } else if constexpr (std::is_same_v<T, MwPayload>) {
                    je["channel"] = "mw";
                    je["kind"] = "mw";
                    je["on"] = p.on;
                    je["freq_GHz"] = p.freq_GHz;
                } else if constexpr (std::is_same_v<T, LaserPayload>) {
                    je["channel"] = "laser";
                    je["kind"] = "laser";
                    je["on"] = p.on;
                } else if constexpr (std::is_same_v<T, RfPayload>) {
                    je["channel"] = "rf";
                    je["kind"] = "pulse";
                    je["angle_deg"] = p.angle_deg;
                    je["phase"] = phase_name(p.phase);
                } else if constexpr (std::is_same_v<T, AcqPayload>) {
                    je["channel"] = "acq";
                    je["kind"] = "acquire";
                    je["n_points"] = p.n_points;
                    je["dwell_s"] = p.dwell_s;
                }
            },
            e.payload);
        j["events"].push_back(std::move(je));
    }
    return j.dump(2);
}

Timeline timeline_from_json(const std::string& json_text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::exception& e) {
        throw CompileError(std::string("timeline json: ") + e.what());
    }
    Timeline out;
    try {
        out.total_duration_s = j.at("total_duration_s").get<double>();
        for (const auto& je : j.at("events")) {
            TimelineEvent e;
            e.t_start_s = je.at("t_start_s").get<double>();
            e.duration_s = je.at("duration_s").get<double>();
            const std::string kind = je.at("kind").get<std::string>();
            if (kind == "saturate") {
                e.channel = Channel::Rf;
                e.payload = SaturatePayload{je.at("n_pulses").get<int>(),
                                            je.at("spacing_s").get<double>()};
            } else if (kind == "mw") {
                e.channel = Channel::Mw;
                e.payload = MwPayload{je.at("on").get<bool>(), je.at("freq_GHz").get<double>()};
            } else if (kind == "laser") {
                e.channel = Channel::Laser;
                e.payload = LaserPayload{je.at("on").get<bool>()};
            } else if (kind == "pulse") {
                const std::string ph = je.at("phase").get<std::string>();
                Phase phase = ph == "x"    ? Phase::X
                              : ph == "y"  ? Phase::Y
                              : ph == "-x" ? Phase::MinusX
                              : ph == "-y" ? Phase::MinusY
                                           : throw CompileError("timeline json: bad phase '" + ph +
                                                                "'");
                e.channel = Channel::Rf;
                e.payload = RfPayload{je.at("angle_deg").get<double>(), phase};
            } else if (kind == "acquire") {
                e.channel = Channel::Acq;
                e.payload = AcqPayload{je.at("n_points").get<int>(), je.at("dwell_s").get<double>()};
            } else {
                throw CompileError("timeline json: unknown event kind '" + kind + "'");
            }
            out.events.push_back(std::move(e));
        }
    } catch (const nlohmann::json::exception& e) {
        throw CompileError(std::string("timeline json: ") + e.what());
    }
    validate_timeline(out);
    return out;
}

ExecutionResult execute_plan(const Timeline& timeline, const PlanPhysics& physics,
                             std::uint64_t seed) {
    validate_timeline(timeline);
    if (!(physics.T_DNP_s > 0.0) || !std::isfinite(physics.T_DNP_s))
        throw std::invalid_argument("execute_plan: T_DNP must be positive");
    if (!(physics.T1n_s > 0.0)) throw std::invalid_argument("execute_plan: T1n must be positive");
    if (!(physics.noise_sigma >= 0.0) || !std::isfinite(physics.noise_sigma))
        throw std::invalid_argument("execute_plan: noise sigma must be >= 0");
    physics.spectrum.validate();

    double shape_norm = 0.0;
    for (double v : physics.spectrum.signal) shape_norm = std::max(shape_norm, std::abs(v));

    ExecutionResult result;
    ExecutionState st;

    auto equilibrium = [&]() {
        if (!st.mw_on || !st.laser_on || shape_norm == 0.0) return 0.0;
        return physics.P_asymptote * interp_shape(physics.spectrum, st.mw_freq_GHz) / shape_norm;
    };
    auto advance = [&](double dt) {
        if (!(dt > 0.0)) return;
        if (st.laser_on && st.mw_on) {
            const double eq = equilibrium();
            st.polarization = eq + (st.polarization - eq) * std::exp(-dt / physics.T_DNP_s);
        } else if (std::isfinite(physics.T1n_s)) {
            st.polarization *= std::exp(-dt / physics.T1n_s);
        }
        if (std::isfinite(physics.fid.T2star_s))
            st.transverse_amp *= std::exp(-dt / physics.fid.T2star_s);
    };

    std::size_t acq_index = 0;
    for (const auto& e : timeline.events) {
        advance(e.t_start_s - st.clock_s);
        st.clock_s = e.t_start_s;
        std::visit(
            [&](const auto& p) {
                using T = std::decay_t<decltype(p)>;
                if constexpr (std::is_same_v<T, SaturatePayload>) {
                    advance(e.duration_s);
                    st.clock_s += e.duration_s;
                    st.polarization = 0.0;
                    st.transverse_amp = 0.0;
                    st.excited_since_reset = false;
                } else if constexpr (std::is_same_v<T, MwPayload>) {
                    st.mw_on = p.on;
                    st.mw_freq_GHz = p.on ? p.freq_GHz : 0.0;
                } else if constexpr (std::is_same_v<T, LaserPayload>) {
                    st.laser_on = p.on;
                } else if constexpr (std::is_same_v<T, RfPayload>) {
                    const double theta = p.angle_deg * kPi / 180.0;
                    st.transverse_amp = st.polarization * std::sin(theta);
                    st.transverse_phase_rad = phase_to_rad(p.phase);
                    st.polarization *= std::cos(theta);
                    st.excited_since_reset = true;
                } else if constexpr (std::is_same_v<T, AcqPayload>) {
                    if (!st.excited_since_reset)
                        result.warnings.push_back(
                            "acquisition " + std::to_string(acq_index) + " at t = " +
                            format_double(e.t_start_s) +
                            " s has no prior excitation pulse; expect noise only");
                    FidParams f = physics.fid;
                    f.amplitude = st.transverse_amp;
                    f.phase_rad = physics.fid.phase_rad + st.transverse_phase_rad;
                    result.acquisitions.push_back(synthesize_fid(
                        f, static_cast<std::size_t>(p.n_points), p.dwell_s, physics.noise_sigma,
                        derive_seed(seed, "acquire/" + std::to_string(acq_index))));
                    ++acq_index;
                    advance(e.duration_s);
                    st.clock_s += e.duration_s;
                }
            },
            e.payload);
    }
    advance(timeline.total_duration_s - st.clock_s);
    st.clock_s = std::max(st.clock_s, timeline.total_duration_s);
    result.final_state = st;
    return result;
}

SweepResult run_fmw_sweep(const PlanAst& plan, const std::vector<double>& f_MW_GHz,
                          const PlanPhysics& physics, const CompileDefaults& defaults,
                          std::uint64_t seed) {
    if (f_MW_GHz.size() < 2) throw std::invalid_argument("run_fmw_sweep: need at least 2 points");
    for (std::size_t i = 1; i < f_MW_GHz.size(); ++i)
        if (!(f_MW_GHz[i] > f_MW_GHz[i - 1]))
            throw std::invalid_argument("run_fmw_sweep: frequencies must be strictly ascending");

    std::vector<FidRecord> fids;
    fids.reserve(f_MW_GHz.size());
    for (std::size_t i = 0; i < f_MW_GHz.size(); ++i) {
        PlanAst tuned = plan;
        retune_mw(tuned.statements, f_MW_GHz[i]);
        const Timeline timeline = compile_timeline(tuned, defaults);
        const ExecutionResult run =
            execute_plan(timeline, physics, derive_seed(seed, "sweep/" + std::to_string(i)));
        if (run.acquisitions.empty())
            throw std::invalid_argument("run_fmw_sweep: plan has no acquire statement");
        fids.push_back(run.acquisitions.front());
    }

    std::size_t model_index = 0;
    double best = -1.0;
    for (std::size_t i = 0; i < fids.size(); ++i) {
        double peak = 0.0;
        for (const auto& s : fids[i].samples) peak = std::max(peak, std::abs(s));
        if (peak > best) {
            best = peak;
            model_index = i;
        }
    }

    SweepResult out;
    out.model_index = model_index;
    out.curve.mw_frequencies_GHz = f_MW_GHz;
    out.curve.signal.resize(fids.size());
    out.raw_amplitudes.resize(fids.size());
    for (std::size_t i = 0; i < fids.size(); ++i) {
        const double scale = fit_scaling_factor(fids[i], fids[model_index]).value;
        out.curve.signal[i] = scale;
        out.raw_amplitudes[i] = scale;
    }
    return out;
}

}  // namespace nvdnp
