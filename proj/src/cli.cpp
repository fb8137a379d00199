#include "latflow/cli.hpp"

#include "latflow/diophantine.hpp"
#include "latflow/escape.hpp"
#include "latflow/heights.hpp"
#include "latflow/mc.hpp"
#include "latflow/reduction.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include <chrono>
#include <cmath>
#include <concepts>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <memory>
#include <sstream>
#include <thread>

#ifndef LATFLOW_VERSION
#define LATFLOW_VERSION "0.0.0"
#endif

namespace latflow::cli {

namespace fs = std::filesystem;
using nlohmann::json;

std::string version() { return LATFLOW_VERSION; }

std::string sha256_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path);
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
    if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1)
        throw std::runtime_error("sha256: digest init failed");
    std::vector<char> buf(1 << 16);
    while (in) {
        in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
        if (in.gcount() > 0) EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(in.gcount()));
    }
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx.get(), md, &len);
    std::ostringstream hex;
    for (unsigned int k = 0; k < len; ++k) hex << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[k]);
    return hex.str();
}

namespace {

std::string text(double v) {
    std::ostringstream o;
    o << std::setprecision(17) << v;
    return o.str();
}
std::string text(const std::string& v) { return v; }
template <std::integral T>
std::string text(T v) {
    return std::to_string(v);
}
template <class T>
std::string text(const std::vector<T>& v) {
    std::string out;
    for (std::size_t k = 0; k < v.size(); ++k) out += (k ? "," : "") + text(v[k]);
    return out;
}

// Options that make up the resolved configuration of a subcommand, in
// registration order. Values are read back after parsing.
class Registry {
public:
    template <class T>
    CLI::Option* add(CLI::App* app, const std::string& name, T& var, const std::string& desc) {
        params_.push_back({name, [&var] { return text(var); }});
        return app->add_option("--" + name, var, desc)->capture_default_str();
    }

    json resolved() const {
        json j = json::object();
        for (const auto& [name, get] : params_) j[name] = get();
        return j;
    }

private:
    std::vector<std::pair<std::string, std::function<std::string()>>> params_;
};

struct Opts {
    std::uint64_t seed = 1;
    std::uint64_t stream = 0;
    int threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    std::string output_dir = ".";
    std::string config;

    int m = 1, n = 1;
    std::string s = "0";
    std::string lattice;
    double push = 0.0;

    double t = 1.0;
    int steps = 10;
    double c0 = 1.0;
    double a = 0.1, a_prime = 0.2, omega = 0.0;

    std::string suite;
    int d = 2, i = 0;
    std::uint64_t samples = 0;
    double beta = 0.0, c = 8.0;
    double m_tilde = -1.0;
    int calibration_lattices = 4000;
    std::uint64_t calibration_samples = 4000;
    int lattices = 0;
    double spread = 9.0;
    int vectors = 1;
    double ratio_bound = 10.0;
    int N = 2;
    double M = 4.0;
    double constant = 0.0;

    double eps = 0.1;
    int levels = 20;
    bool dani = false;
    int t_max = 20;

    double delta = 1.0;
    double resolution = 0.0;
    std::uint64_t mc_samples = 0;
    std::vector<int> ladder{2, 3, 4};
    std::string delta_text = "1";

    std::string manifest;
};

std::string utc_now() {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

// Artifacts of one command plus the manifest describing them.
class Run {
public:
    Run(std::vector<std::string> command, json params, const Opts& o)
        : command_(std::move(command)), params_(std::move(params)), seed_(o.seed), stream_(o.stream),
          threads_(o.threads), dir_(o.output_dir), started_(utc_now()) {
        fs::create_directories(dir_);
    }

    void write(const std::string& name, const std::string& content) {
        std::ofstream f(dir_ / name, std::ios::binary);
        if (!f) throw std::runtime_error("cannot write " + (dir_ / name).string());
        f << content;
        files_.push_back(name);
    }
    void write_json(const std::string& name, const json& j) { write(name, j.dump(2) + "\n"); }

    void finish(int exit_code) {
        json outputs = json::object();
        for (const auto& f : files_) outputs[f] = sha256_file((dir_ / f).string());
        const json manifest = {{"command", command_},     {"params", params_},   {"seed", seed_},
                               {"stream", stream_},       {"threads", threads_}, {"version", version()},
                               {"started", started_},     {"finished", utc_now()},
                               {"exit_code", exit_code},  {"outputs", outputs}};
        std::ofstream f(dir_ / "manifest.json");
        f << manifest.dump(2) << "\n";
    }

private:
    std::vector<std::string> command_;
    json params_;
    std::uint64_t seed_, stream_;
    int threads_;
    fs::path dir_;
    std::string started_;
    std::vector<std::string> files_;
};

std::vector<ExactEntry> parse_entries(const std::string& list, const Dimensions& dims) {
    std::vector<ExactEntry> out;
    std::stringstream ss(list);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(parse_entry(item));
    if (out.size() == 1 && dims.mn() > 1) out.assign(static_cast<std::size_t>(dims.mn()), out.front());
    if (out.size() != static_cast<std::size_t>(dims.mn()))
        throw ValidationError("--s: expected " + std::to_string(dims.mn()) + " entries, got " +
                              std::to_string(out.size()));
    return out;
}

Matrix shift_matrix(const Opts& o, const Dimensions& dims) {
    const auto entries = parse_entries(o.s, dims);
    Matrix s(dims.m(), dims.n());
    for (int k = 0; k < dims.mn(); ++k)
        s(k / dims.n(), k % dims.n()) = static_cast<double>(entries[static_cast<std::size_t>(k)].value());
    return s;
}

// g_push u_s L with L the --lattice file or Z^d.
Lattice base_lattice(const Opts& o) {
    const Dimensions dims(o.m, o.n);
    Lattice x = o.lattice.empty() ? Lattice::standard(dims) : read_lattice_file(o.lattice);
    if (x.dims() != dims) throw ValidationError("--lattice: file dimensions differ from --m/--n");
    const Matrix s = shift_matrix(o, dims);
    if (!s.isZero(0)) x = act(horospherical(dims, s), x);
    if (o.push != 0.0) x = reduced_lattice(act(diagonal_flow(dims, o.push), x));
    return x;
}

std::vector<int> grades(const Opts& o, const Dimensions& dims) {
    if (o.i > 0) {
        if (o.i >= dims.d()) throw ValidationError("--i must lie in 1..d-1");
        return {o.i};
    }
    std::vector<int> out;
    for (int k = 1; k < dims.d(); ++k) out.push_back(k);
    return out;
}

// Independent substreams for the estimators inside one command.
class Streams {
public:
    explicit Streams(const Opts& o) : seed_(o.seed), base_(o.stream << 20) {}
    RngSpec next() { return {seed_, base_ + k_++}; }

private:
    std::uint64_t seed_, base_, k_ = 0;
};

std::string fmt(double v) { return text(v); }

int cmd_flow(const Opts& o, Run& run, std::ostream& out) {
    const Dimensions dims(o.m, o.n);
    if (!(o.t > 0)) throw ValidationError("--t must be positive");
    if (o.steps < 0) throw ValidationError("--steps must be >= 0");
    const HeightFunction h = default_height(dims, o.t, o.c0);
    const Matrix g = diagonal_flow(dims, o.t);
    std::ostringstream csv;
    csv << std::setprecision(17) << "step,time,tilde_alpha";
    for (int k = 1; k < dims.d(); ++k) csv << ",alpha_" << k;
    csv << ",lambda_1\n";
    Lattice y = reduced_lattice(base_lattice(o));
    for (int l = 1; l <= o.steps; ++l) {
        y = reduced_lattice(act(g, y));
        const AlphaProfile p = alpha_profile(y);
        csv << l << ',' << o.t * l << ',' << tilde_alpha(p, h);
        for (int k = 1; k < dims.d(); ++k) csv << ',' << p.values[static_cast<std::size_t>(k)];
        csv << ',' << minkowski_minima(y, 1).lambda[0] << '\n';
    }
    run.write("flow.csv", csv.str());
    out << csv.str();
    return kExitOk;
}

int cmd_alpha(const Opts& o, Run& run, std::ostream& out) {
    const Dimensions dims(o.m, o.n);
    const Lattice x = base_lattice(o);
    const AlphaProfile p = alpha_profile(x);
    const SuccessiveMinima sm = minkowski_minima(x);
    const double ta = tilde_alpha(p, default_height(dims, o.t, o.c0));
    const json j = {{"m", dims.m()},   {"n", dims.n()},           {"alpha", p.values},
                    {"lambda", sm.lambda}, {"c_x", c_of_x(dims, p)}, {"tilde_alpha", ta}};
    run.write_json("alpha.json", j);
    for (int k = 0; k <= dims.d(); ++k) out << "alpha_" << k << " = " << fmt(p.values[static_cast<std::size_t>(k)]) << "\n";
    out << "tilde_alpha = " << fmt(ta) << "\n";
    return kExitOk;
}

int cmd_height(const Opts& o, Run& run, std::ostream& out) {
    const Dimensions dims(o.m, o.n);
    const double omega = o.omega > 0 ? o.omega : wedge_operator_norm_max(dims, o.t);
    const HeightFunction h = build_height(beta_profile(dims), o.a, o.a_prime, omega);
    run.write_json("height.json", h.to_json());
    out << "I={";
    for (std::size_t k = 0; k < h.strict.size(); ++k) out << (k ? "," : "") << h.strict[k];
    out << "}\n";
    out << "epsilon = 2^-" << h.epsilon_log2 << " = " << fmt(h.epsilon) << "\n";
    for (int k = 1; k < h.d; ++k) {
        const double w = h.weights[static_cast<std::size_t>(k)];
        out << "omega_" << k << " = " << fmt(w);
        if (w == h.epsilon) out << " = epsilon";
        out << "\n";
    }
    out << "C0 = " << fmt(h.C0) << "\n";
    return kExitOk;
}

json verify_prop31(const Opts& o, bool& pass, std::ostream& out) {
    const Dimensions dims(o.m, o.n);
    const double t = o.t > 0 ? o.t : 3.0;
    const std::uint64_t n = o.samples ? o.samples : 100000;
    const auto betas = beta_exponents(dims);
    const double scale = t * std::exp(-dims.mn() * t);
    Streams streams(o);
    json rows = json::array();
    for (int i : grades(o, dims)) {
        const double beta = o.beta > 0 ? o.beta : betas[static_cast<std::size_t>(i - 1)];
        for (int k = 0; k < o.vectors; ++k) {
            Engine eng = make_engine(streams.next(), 0);
            const Decomposable v(sample_gaussian(dims.d(), i, eng));
            const EstimatorResult est = estimate_K_integral(dims, v, t, beta, n, streams.next());
            const double norm_beta = std::pow(v.norm(), beta);
            const double bound = o.c * scale / norm_beta;
            const CheckStatus st = judge_inequality(est, bound);
            pass = pass && st != CheckStatus::fail;
            rows.push_back({{"i", i},
                            {"beta", beta},
                            {"norm", v.norm()},
                            {"estimate", est.to_json()},
                            {"bound", bound},
                            {"implied_c", est.mean * norm_beta / scale},
                            {"status", to_string(st)}});
            out << "i=" << i << " beta=" << fmt(beta) << " implied_c=" << fmt(est.mean * norm_beta / scale) << " "
                << to_string(st) << "\n";
        }
    }
    return {{"t", t}, {"c", o.c}, {"samples", n}, {"rows", rows}};
}

json verify_tails(const Opts& o, bool& pass, std::ostream& out) {
    const int i = o.i > 0 ? o.i : 1;
    const std::uint64_t n = o.samples ? o.samples : 1000000;
    const TailReport r = tail_moment_diagnostics(o.d, i, n, {o.seed, o.stream});
    const double target = -(o.d - i + 1);
    pass = std::abs(r.slope - target) <= 0.1;
    out << "slope = " << fmt(r.slope) << " +- " << fmt(r.slope_std_error) << " (target " << target << ") "
        << (pass ? "pass" : "fail") << "\n";
    json j = r.to_json();
    j["target_slope"] = target;
    j["tolerance"] = 0.1;
    return j;
}

json verify_lemma35(const Opts& o, bool& pass, std::ostream& out) {
    const Dimensions dims(o.m, o.n);
    const double t = o.t > 0 ? o.t : 2.0;
    const double beta = o.beta > 0 ? o.beta : 1.0;
    const int i = o.i > 0 ? o.i : 1;
    if (i >= dims.d()) throw ValidationError("--i must lie in 1..d-1");
    const std::uint64_t n = o.samples ? o.samples : 100000;
    Streams streams(o);
    Engine eng = make_engine(streams.next(), 0);
    const Decomposable raw(sample_gaussian(dims.d(), i, eng));
    const Decomposable w = raw.scaled(1.0 / raw.norm());
    const RngSpec rng = streams.next(); // common random numbers across s0
    const Matrix dir = Matrix::Constant(dims.m(), dims.n(), 1.0 / std::sqrt(static_cast<double>(dims.mn())));
    const double base = compare_U_K_integrals(dims, w, t, beta, Matrix::Zero(dims.m(), dims.n()), n, rng).ratio;
    json rows = json::array();
    for (double c : {-2.0, -0.75, 0.0, 1.0, 2.0, 4.0}) {
        const UKComparison cmp = compare_U_K_integrals(dims, w, t, beta, c * dir, n, rng);
        const bool ok = cmp.ratio <= o.ratio_bound * base;
        pass = pass && ok;
        json row = cmp.to_json();
        row["s0_norm"] = c;
        row["pass"] = ok;
        rows.push_back(row);
        out << "s0=" << fmt(c) << " ratio=" << fmt(cmp.ratio) << (ok ? " pass" : " fail") << "\n";
    }
    return {{"t", t}, {"beta", beta}, {"i", i}, {"base_ratio", base}, {"ratio_bound", o.ratio_bound}, {"rows", rows}};
}

json report_list(const std::vector<CheckReport>& reports, bool& pass, std::ostream& out) {
    json rows = json::array();
    for (const auto& r : reports) {
        pass = pass && r.status != CheckStatus::fail;
        rows.push_back(r.to_json());
        out << r.estimator << " estimate=" << fmt(r.estimate.mean) << " bound=" << fmt(r.bound) << " "
            << to_string(r.status) << "\n";
    }
    return rows;
}

json verify_cor36(const Opts& o, bool& pass, std::ostream& out) {
    const Dimensions dims(o.m, o.n);
    const double t = o.t > 0 ? o.t : 3.0;
    const std::uint64_t n = o.samples ? o.samples : 20000;
    const Lattice x = base_lattice(o);
    Streams streams(o);
    std::vector<CheckReport> reports;
    for (int i : grades(o, dims)) reports.push_back(verify_alpha_contraction(x, i, t, o.omega, o.c0, n, streams.next()));
    return {{"t", t}, {"reports", report_list(reports, pass, out)}};
}

json verify_cor42(const Opts& o, bool& pass, std::ostream& out) {
    const Dimensions dims(o.m, o.n);
    const double t = o.t > 0 ? o.t : 3.0;
    const std::uint64_t n = o.samples ? o.samples : 20000;
    const HeightFunction h = default_height(dims, t, o.c0);
    Streams streams(o);
    json j = {{"t", t}, {"c", o.c}};
    double m_tilde = o.m_tilde;
    if (m_tilde < 0) {
        const auto calibration = sample_lattices(dims, o.calibration_lattices, o.spread, streams.next());
        const ThresholdEstimate th = estimate_threshold(calibration, h, t, o.c, o.calibration_samples, streams.next());
        m_tilde = th.m_tilde;
        j["calibration"] = {{"lattices", o.calibration_lattices},
                            {"samples", o.calibration_samples},
                            {"m_tilde", m_tilde},
                            {"worst_failure", th.worst_failure}};
    }
    j["m_tilde"] = m_tilde;
    out << "m_tilde = " << fmt(m_tilde) << "\n";

    std::vector<Lattice> xs;
    if (o.lattices > 0) {
        for (int batch = 0; batch < 20 && static_cast<int>(xs.size()) < o.lattices; ++batch) {
            for (const Lattice& x : sample_lattices(dims, 4 * o.lattices, o.spread, streams.next())) {
                if (static_cast<int>(xs.size()) < o.lattices && tilde_alpha(x, h) > m_tilde) xs.push_back(x);
            }
        }
        if (static_cast<int>(xs.size()) < o.lattices)
            throw ResourceError("cor42: too few sampled lattices above the threshold");
    } else {
        xs.push_back(base_lattice(o));
    }
    std::vector<CheckReport> reports;
    for (const Lattice& x : xs) reports.push_back(verify_tilde_contraction(x, h, t, o.c, m_tilde, n, streams.next()));
    j["reports"] = report_list(reports, pass, out);
    return j;
}

json verify_prop51(const Opts& o, bool& pass, std::ostream& out) {
    const Dimensions dims(o.m, o.n);
    const double t = o.t > 0 ? o.t : 2.0;
    const std::uint64_t n = o.samples ? o.samples : 20000;
    const HeightFunction h = default_height(dims, t, o.c0);
    const double constant = o.constant > 0 ? o.constant : iterate_default_constant(dims);
    Streams streams(o);
    const CheckReport r = iterate_contraction(base_lattice(o), h, t, o.N, o.M, o.c, constant, n, streams.next());
    return {{"t", t}, {"constant", constant}, {"reports", report_list({r}, pass, out)}};
}

int cmd_verify(const Opts& o, Run& run, std::ostream& out) {
    static const std::map<std::string, json (*)(const Opts&, bool&, std::ostream&)> suites = {
        {"prop31", verify_prop31}, {"tails", verify_tails}, {"lemma35", verify_lemma35},
        {"cor36", verify_cor36},   {"cor42", verify_cor42}, {"prop51", verify_prop51}};
    bool pass = true;
    json j = suites.at(o.suite)(o, pass, out);
    j["suite"] = o.suite;
    j["pass"] = pass;
    run.write_json("verify-" + o.suite + ".json", j);
    out << o.suite << ": " << (pass ? "pass" : "fail") << "\n";
    return pass ? kExitOk : kExitStatistical;
}

int cmd_classify(const Opts& o, Run& run, std::ostream& out) {
    const Dimensions dims(o.m, o.n);
    const TargetMatrix s(dims, parse_entries(o.s, dims));
    const OnAverageVerdict v = classify_on_average(s, o.eps, o.levels);
    json j = v.to_json();
    j["target"] = s.to_json();
    if (o.dani) {
        std::vector<double> grid;
        for (int k = 0; k <= o.t_max; ++k) grid.push_back(k);
        const DaniReport r = dani_crosscheck(s, grid, o.levels);
        j["dani"] = r.to_json();
        out << "dani: approx=" << r.approx_flag << " flow=" << r.flow_flag << " consistent=" << r.consistent << "\n";
    }
    run.write_json("classify.json", j);
    std::ostringstream csv;
    v.profile.write_csv(csv);
    run.write("profile.csv", csv.str());
    out << j["verdict"].get<std::string>() << " fraction=" << fmt(v.fraction) << " trailing=" << fmt(v.trailing_fraction)
        << "\n";
    return kExitOk;
}

EscapeConfig escape_config(const Opts& o) {
    EscapeConfig cfg;
    cfg.dims = Dimensions(o.m, o.n);
    cfg.t = o.t;
    cfg.N = o.N;
    cfg.delta = o.delta;
    cfg.M = o.M;
    cfg.resolution = o.resolution;
    cfg.mc_samples = o.mc_samples;
    cfg.rng = {o.seed, o.stream};
    cfg.validate();
    return cfg;
}

int cmd_survey(const Opts& o, Run& run, std::ostream& out) {
    const EscapeConfig cfg = escape_config(o);
    const CellSurvey sv = survey(base_lattice(o), cfg);
    std::ostringstream csv;
    write_survey_csv(csv, {sv});
    run.write("survey.csv", csv.str());
    run.write_json("survey.json", {{"config", cfg.to_json()}, {"survey", sv.to_json()}});
    out << sv.mode << " occupied=" << fmt(sv.occupied) << " total=" << fmt(sv.total) << " bound=" << fmt(sv.bound)
        << " slack=" << fmt(sv.slack) << " " << (sv.pass ? "pass" : "fail") << "\n";
    return sv.pass ? kExitOk : kExitStatistical;
}

int cmd_dimension(const Opts& o, Run& run, std::ostream& out) {
    const EscapeConfig cfg = escape_config(o);
    const DimensionEstimate est = dimension_estimate(base_lattice(o), cfg, o.ladder);
    std::ostringstream csv;
    est.write_csv(csv);
    run.write("dimension.csv", csv.str());
    run.write_json("dimension.json", {{"config", cfg.to_json()}, {"estimate", est.to_json()}});
    if (est.empty) out << "empty escape set\n";
    else out << "fitted_dim = " << fmt(est.fitted_dim) << " (raw slope " << fmt(est.raw_slope) << ")\n";
    out << "theory = " << fmt(est.theory) << "\n";
    return kExitOk;
}

int cmd_bound(const Opts& o, Run& run, std::ostream& out) {
    const Dimensions dims(o.m, o.n);
    const ExactEntry delta = parse_entry(o.delta_text);
    if (!delta.exact_rational()) throw ValidationError("--delta must be an exact rational");
    const DimensionBound b = theoretical_bound(dims, delta.num, delta.den);
    run.write_json("bound.json", b.to_json());
    out << b.num << "/" << b.den << " = " << fmt(b.value) << "\n";
    return kExitOk;
}

int cmd_replay(const Opts& o, std::ostream& out, std::ostream& err) {
    std::ifstream in(o.manifest);
    if (!in) throw ValidationError("replay: cannot read " + o.manifest);
    json manifest;
    try {
        in >> manifest;
    } catch (const json::exception& e) {
        throw ValidationError(std::string("replay: bad manifest: ") + e.what());
    }
    const fs::path src = fs::path(o.manifest).parent_path();
    const fs::path dir = o.output_dir.empty() ? src / "replay" : fs::path(o.output_dir);

    std::vector<std::string> args = manifest.at("command").get<std::vector<std::string>>();
    for (const auto& [name, value] : manifest.at("params").items()) {
        const std::string v = value.get<std::string>();
        if (v.empty()) continue;
        args.push_back("--" + name);
        args.push_back(v);
    }
    args.insert(args.end(), {"--output-dir", dir.string(), "--threads", std::to_string(o.threads)});
    std::ostringstream inner;
    const int code = run(args, inner, err);
    if (code == kExitValidation || code == kExitResource || code == kExitOther) return code;

    json files = json::object();
    bool identical = true;
    for (const auto& [name, digest] : manifest.at("outputs").items()) {
        const fs::path p = dir / name;
        const std::string actual = fs::exists(p) ? sha256_file(p.string()) : "";
        const bool match = actual == digest.get<std::string>();
        identical = identical && match;
        files[name] = {{"expected", digest}, {"actual", actual}, {"match", match}};
        out << name << ": " << (match ? "identical" : "differs") << "\n";
    }
    std::ofstream(dir / "replay.json") << json{{"source", o.manifest}, {"files", files}, {"identical", identical}}.dump(2)
                                       << "\n";
    out << (identical ? "replay identical" : "replay differs") << "\n";
    return identical ? kExitOk : kExitStatistical;
}

// Holds the option storage; CLI11 binds options by reference, so it never moves.
struct Parser {
    CLI::App app{"Diagonal flow experiments on the space of unimodular lattices", "latflow"};
    std::map<std::string, Opts> opts;
    std::map<std::string, Registry> regs;

    Parser() {
        app.require_subcommand(1);
        app.set_version_flag("--version", version());

        auto command = [&](const std::string& name, const std::string& desc) {
            CLI::App* sub = app.add_subcommand(name, desc);
            Opts& o = opts[name];
            Registry& r = regs[name];
            r.add(sub, "seed", o.seed, "RNG seed")->envname("LATFLOW_SEED");
            r.add(sub, "stream", o.stream, "RNG stream");
            sub->add_option("--threads", o.threads, "worker threads")->check(CLI::PositiveNumber)->capture_default_str();
            sub->add_option("--output-dir", o.output_dir, "artifact directory")->capture_default_str();
            sub->add_option("--config", o.config, "key=value configuration file; flags given on the command line win");
            return sub;
        };
        auto dims_opts = [&](CLI::App* sub, Opts& o, Registry& r) {
            r.add(sub, "m", o.m, "rows of s");
            r.add(sub, "n", o.n, "columns of s");
        };
        auto lattice_opts = [&](CLI::App* sub, Opts& o, Registry& r) {
            dims_opts(sub, o, r);
            r.add(sub, "s", o.s, "entries of s, comma separated row-major (p/q, decimals, golden, sqrt2, ...)");
            r.add(sub, "lattice", o.lattice, "basis file; Z^d when empty");
            r.add(sub, "push", o.push, "start from g_push u_s L");
        };

        {
            CLI::App* sub = command("flow", "simulate g_{tl} u_s x and print tilde_alpha, alpha_i, lambda_1 per step");
            Opts& o = opts["flow"];
            Registry& r = regs["flow"];
            lattice_opts(sub, o, r);
            r.add(sub, "t", o.t, "time step");
            r.add(sub, "steps", o.steps, "number of steps");
            r.add(sub, "c0", o.c0, "height constant");
        }
        {
            CLI::App* sub = command("alpha", "alpha_i and successive minima of a lattice");
            Opts& o = opts["alpha"];
            Registry& r = regs["alpha"];
            lattice_opts(sub, o, r);
            r.add(sub, "t", o.t, "time of the height used for tilde_alpha");
            r.add(sub, "c0", o.c0, "height constant");
        }
        {
            CLI::App* sub = command("height", "build the composite height function");
            Opts& o = opts["height"];
            Registry& r = regs["height"];
            dims_opts(sub, o, r);
            r.add(sub, "a", o.a, "contraction rate a");
            r.add(sub, "a-prime", o.a_prime, "target rate a' > a");
            r.add(sub, "omega", o.omega, "operator norm bound; 0 uses the flow at --t");
            r.add(sub, "t", o.t, "flow time for the default omega");
        }
        {
            CLI::App* sub = command("verify", "Monte Carlo verification suites");
            Opts& o = opts["verify"];
            Registry& r = regs["verify"];
            o.t = 0.0;
            o.M = 4.0;
            sub->add_option("suite", o.suite, "prop31, tails, lemma35, cor36, cor42 or prop51")
                ->required()
                ->check(CLI::IsMember({"prop31", "tails", "lemma35", "cor36", "cor42", "prop51"}));
            lattice_opts(sub, o, r);
            r.add(sub, "t", o.t, "flow time; 0 uses the suite default");
            r.add(sub, "samples", o.samples, "samples per estimate; 0 uses the suite default");
            r.add(sub, "d", o.d, "dimension (tails)");
            r.add(sub, "i", o.i, "grade; 0 means all");
            r.add(sub, "beta", o.beta, "exponent; 0 uses beta_i");
            r.add(sub, "c", o.c, "contraction constant");
            r.add(sub, "c0", o.c0, "height constant");
            r.add(sub, "omega", o.omega, "weight omega (cor36); 0 uses the flow norm");
            r.add(sub, "m-tilde", o.m_tilde, "threshold (cor42); negative calibrates");
            r.add(sub, "calibration-lattices", o.calibration_lattices, "calibration lattices (cor42)");
            r.add(sub, "calibration-samples", o.calibration_samples, "samples per calibration lattice (cor42)");
            r.add(sub, "lattices", o.lattices, "sampled lattices above the threshold (cor42); 0 uses --lattice/--s");
            r.add(sub, "spread", o.spread, "log spread of sampled lattices");
            r.add(sub, "vectors", o.vectors, "random decomposables per grade (prop31)");
            r.add(sub, "ratio-bound", o.ratio_bound, "allowed ratio growth (lemma35)");
            r.add(sub, "N", o.N, "iterations (prop51)");
            r.add(sub, "M", o.M, "height threshold (prop51)");
            r.add(sub, "constant", o.constant, "density constant (prop51); 0 uses the default");
        }
        {
            CLI::App* sub = command("classify", "singular-on-average classification of s");
            Opts& o = opts["classify"];
            Registry& r = regs["classify"];
            dims_opts(sub, o, r);
            r.add(sub, "s", o.s, "entries of s, comma separated row-major");
            r.add(sub, "eps", o.eps, "approximation threshold");
            r.add(sub, "levels", o.levels, "levels ell = 1..levels");
            r.add(sub, "dani", o.dani, "add the flow cross-check");
            r.add(sub, "t-max", o.t_max, "last time of the cross-check grid");
        }
        for (const std::string name : {"survey", "dimension"}) {
            CLI::App* sub = command(name, name == "survey" ? "covering count of the escape set"
                                                           : "box-dimension fit over a ladder of N");
            Opts& o = opts[name];
            Registry& r = regs[name];
            o.M = 10.0;
            lattice_opts(sub, o, r);
            r.add(sub, "t", o.t, "time step");
            if (name == "survey") r.add(sub, "N", o.N, "number of steps");
            r.add(sub, "delta", o.delta, "escape proportion");
            r.add(sub, "M", o.M, "height threshold; inf keeps every point");
            if (name == "survey") r.add(sub, "resolution", o.resolution, "cell side; 0 uses e^{-(m+n)tN}");
            r.add(sub, "mc-samples", o.mc_samples, "Monte Carlo probes beyond the full-grid limit");
            if (name == "dimension") r.add(sub, "ladder", o.ladder, "values of N")->delimiter(',');
        }
        {
            CLI::App* sub = command("bound", "theoretical dimension bound mn - delta mn/(m+n)");
            Opts& o = opts["bound"];
            Registry& r = regs["bound"];
            dims_opts(sub, o, r);
            r.add(sub, "delta", o.delta_text, "delta as p/q");
        }
        CLI::App* replay = app.add_subcommand("replay", "re-run a manifest and compare output digests");
        Opts& ro = opts["replay"];
        replay->add_option("manifest", ro.manifest, "manifest.json")->required();
        replay->add_option("--output-dir", ro.output_dir, "directory for the re-run; default <manifest dir>/replay");
        replay->add_option("--threads", ro.threads, "worker threads")->check(CLI::PositiveNumber);
        ro.output_dir.clear();
    }

    void parse(const std::vector<std::string>& args) {
        std::vector<std::string> rev(args.rbegin(), args.rend());
        app.parse(rev);
    }

    CLI::App* command() const { return app.get_subcommands().front(); }
};

// Config keys not already given on the command line, as extra arguments.
std::vector<std::string> config_arguments(const CLI::App& sub, const std::string& path) {
    std::vector<std::string> extra;
    for (const CLI::ConfigItem& item : CLI::ConfigINI().from_file(path)) {
        if (item.name == "++" || item.name == "--") continue; // section markers
        if (!item.parents.empty() && item.parents.front() != sub.get_name()) continue;
        const CLI::Option* opt = sub.get_option_no_throw("--" + item.name);
        if (opt == nullptr) throw CLI::ConfigError::Extras(item.fullname());
        if (opt->count() > 0) continue;
        std::string value;
        for (std::size_t k = 0; k < item.inputs.size(); ++k) value += (k ? "," : "") + item.inputs[k];
        extra.push_back("--" + item.name);
        extra.push_back(value);
    }
    return extra;
}

} // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    auto parser = std::make_unique<Parser>();
    try {
        parser->parse(args);
        const CLI::App* sub = parser->command();
        const std::string path = parser->opts[sub->get_name()].config;
        if (!path.empty()) {
            std::vector<std::string> full = args;
            const auto extra = config_arguments(*sub, path);
            full.insert(full.end(), extra.begin(), extra.end());
            auto second = std::make_unique<Parser>();
            second->parse(full);
            parser = std::move(second);
        }
    } catch (const CLI::ParseError& e) {
        const int code = parser->app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitValidation;
    }

    CLI::App* sub = parser->command();
    const std::string name = sub->get_name();
    Opts& o = parser->opts[name];
    auto& regs = parser->regs;
    try {
        set_worker_threads(o.threads);
        if (name == "replay") return cmd_replay(o, out, err);
        std::vector<std::string> cmd{name};
        if (name == "verify") cmd.push_back(o.suite);
        Run run(cmd, regs[name].resolved(), o);
        int code = kExitOk;
        if (name == "flow") code = cmd_flow(o, run, out);
        else if (name == "alpha") code = cmd_alpha(o, run, out);
        else if (name == "height") code = cmd_height(o, run, out);
        else if (name == "verify") code = cmd_verify(o, run, out);
        else if (name == "classify") code = cmd_classify(o, run, out);
        else if (name == "survey") code = cmd_survey(o, run, out);
        else if (name == "dimension") code = cmd_dimension(o, run, out);
        else if (name == "bound") code = cmd_bound(o, run, out);
        run.finish(code);
        return code;
    } catch (const ValidationError& e) {
        err << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const ResourceError& e) {
        err << "resource limit: " << e.what() << "\n";
        return kExitResource;
    } catch (const StatisticalError& e) {
        err << "statistical failure: " << e.what() << "\n";
        return kExitStatistical;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitOther;
    }
}

} // namespace latflow::cli
