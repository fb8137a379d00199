#include "latflow/cli.hpp"

#include <doctest.h>
#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <unistd.h>

namespace fs = std::filesystem;
using latflow::cli::run;
using nlohmann::json;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("latflow_cli_" + std::to_string(::getpid())) / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

struct Result {
    int code;
    std::string out, err;
};

Result call(std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = run(args, out, err);
    return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

json load(const fs::path& p) { return json::parse(slurp(p)); }

std::vector<std::vector<double>> read_csv(const fs::path& p) {
    std::ifstream in(p);
    std::string line;
    std::getline(in, line);
    std::vector<std::vector<double>> rows;
    while (std::getline(in, line)) {
        std::vector<double> row;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
        rows.push_back(row);
    }
    return rows;
}

// lambda_1(g_T u_s Z^2) by a direct scan over q.
double scan_lambda1(double s, double T) {
    double best = std::exp(T);
    for (long q = 1; std::exp(-T) * q <= best; ++q) {
        const double r = s * q - std::nearbyint(s * q);
        best = std::min(best, std::hypot(std::exp(T) * r, std::exp(-T) * q));
    }
    return best;
}

} // namespace

TEST_CASE("sha256 of known inputs") {
    const fs::path dir = scratch("sha");
    std::ofstream(dir / "abc") << "abc";
    std::ofstream(dir / "empty");
    CHECK(latflow::cli::sha256_file((dir / "abc").string()) ==
          "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    CHECK(latflow::cli::sha256_file((dir / "empty").string()) ==
          "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}

TEST_CASE("flow csv") {
    const fs::path dir = scratch("flow");
    const Result r = call({"flow", "--m", "1", "--n", "1", "--s", "1/2", "--t", "1", "--steps", "10", "--output-dir",
                           dir.string()});
    REQUIRE(r.code == 0);
    const auto rows = read_csv(dir / "flow.csv");
    REQUIRE(rows.size() == 10);
    for (std::size_t k = 0; k < rows.size(); ++k) {
        CHECK(rows[k][0] == k + 1);
        CHECK(rows[k][4] == doctest::Approx(scan_lambda1(0.5, k + 1.0)).epsilon(1e-9));
        CHECK(rows[k][3] == doctest::Approx(1.0 / rows[k][4]).epsilon(1e-9)); // d = 2: alpha_1 = 1 / lambda_1
        CHECK(rows[k][2] == doctest::Approx(2.0 + rows[k][3]).epsilon(1e-12));
        if (k > 0) CHECK(rows[k][2] > rows[k - 1][2]);
    }
    CHECK(slurp(dir / "flow.csv").find("1,1,3.3591409142295223,") != std::string::npos);

    const fs::path empty = scratch("flow0");
    REQUIRE(call({"flow", "--s", "0", "--steps", "0", "--output-dir", empty.string()}).code == 0);
    CHECK(slurp(empty / "flow.csv") == "step,time,tilde_alpha,alpha_1,lambda_1\n");
}

TEST_CASE("exit codes") {
    const fs::path dir = scratch("codes");
    CHECK(call({"flow", "--m", "0", "--output-dir", dir.string()}).code == 2);
    CHECK(call({"verify", "nosuch"}).code == 2);
    CHECK(call({"flow", "--no-such-flag"}).code == 2);
    CHECK(call({}).code == 2);
    CHECK(call({"--help"}).code == 0);
    CHECK(call({"bound", "--delta", "golden", "--output-dir", dir.string()}).code == 2);
    CHECK(call({"survey", "--resolution", "1e-9", "--output-dir", dir.string()}).code == 3);

    const fs::path fail = scratch("fail");
    const Result r = call({"verify", "prop31", "--c", "0.01", "--samples", "2000", "--output-dir", fail.string()});
    CHECK(r.code == 4);
    const json report = load(fail / "verify-prop31.json");
    CHECK(report["pass"] == false);
    CHECK(load(fail / "manifest.json")["exit_code"] == 4);
}

TEST_CASE("examples") {
    const fs::path dir = scratch("examples");
    const Result h = call({"height", "--m", "2", "--n", "1", "--a", "0.1", "--a-prime", "0.2", "--output-dir",
                           (dir / "h").string()});
    REQUIRE(h.code == 0);
    CHECK(h.out.find("I={0,2,3}") != std::string::npos);
    CHECK(h.out.find("= epsilon") != std::string::npos);
    CHECK(h.out.find("omega_1 = ") < h.out.find("= epsilon"));
    CHECK(h.out.find("= epsilon") < h.out.find("omega_2"));

    const Result c = call({"classify", "--s", "golden", "--eps", "0.1", "--levels", "20", "--output-dir",
                           (dir / "c").string()});
    REQUIRE(c.code == 0);
    CHECK(load(dir / "c" / "classify.json")["verdict"] == "not-singular-on-average");
    CHECK(read_csv(dir / "c" / "profile.csv").size() == 20);

    const Result b = call({"bound", "--m", "2", "--n", "1", "--output-dir", (dir / "b").string()});
    CHECK(b.out.rfind("4/3", 0) == 0);

    const Result s = call({"survey", "--m", "1", "--n", "1", "--t", "2", "--N", "3", "--delta", "0.333",
                           "--output-dir", (dir / "s").string()});
    CHECK(s.code == 0);
    const json sv = load(dir / "s" / "survey.json")["survey"];
    CHECK(sv["pass"] == true);
    CHECK(sv["occupied"].get<double>() <= sv["bound"].get<double>());

    const Result v = call({"verify", "prop31", "--m", "1", "--n", "1", "--t", "3", "--samples", "100000", "--seed",
                           "7", "--output-dir", (dir / "v").string()});
    CHECK(v.code == 0);
}

TEST_CASE("manifest replay") {
    const fs::path dir = scratch("replay");
    REQUIRE(call({"verify", "prop31", "--m", "2", "--n", "1", "--samples", "3000", "--seed", "11", "--output-dir",
                  (dir / "a").string()})
                .code == 0);
    const json m = load(dir / "a" / "manifest.json");
    CHECK(m["command"] == json::array({"verify", "prop31"}));
    CHECK(m["params"]["seed"] == "11");
    CHECK(m["params"]["m"] == "2");
    CHECK(m["outputs"]["verify-prop31.json"] ==
          latflow::cli::sha256_file((dir / "a" / "verify-prop31.json").string()));

    const Result r = call({"replay", (dir / "a" / "manifest.json").string(), "--output-dir", (dir / "b").string(),
                           "--threads", "3"});
    CHECK(r.code == 0);
    CHECK(load(dir / "b" / "replay.json")["identical"] == true);
    CHECK(slurp(dir / "a" / "verify-prop31.json") == slurp(dir / "b" / "verify-prop31.json"));

    json tampered = m;
    tampered["outputs"]["verify-prop31.json"] = std::string(64, '0');
    std::ofstream(dir / "tampered.json") << tampered.dump();
    CHECK(call({"replay", (dir / "tampered.json").string(), "--output-dir", (dir / "c").string()}).code == 4);
    CHECK(call({"replay", (dir / "missing.json").string()}).code == 2);
}

TEST_CASE("configuration precedence") {
    const fs::path dir = scratch("config");
    std::ofstream(dir / "run.ini") << "t = 2\nsteps = 3\ns = 1/3\n";
    REQUIRE(call({"flow", "--config", (dir / "run.ini").string(), "--steps", "2", "--output-dir", (dir / "a").string()})
                .code == 0);
    const json p = load(dir / "a" / "manifest.json")["params"];
    CHECK(p["t"] == "2");
    CHECK(p["s"] == "1/3");
    CHECK(p["steps"] == "2");
    CHECK(read_csv(dir / "a" / "flow.csv").size() == 2);

    std::ofstream(dir / "bad.ini") << "no_such_key = 1\n";
    CHECK(call({"flow", "--config", (dir / "bad.ini").string()}).code == 2);

    ::setenv("LATFLOW_SEED", "99", 1);
    call({"bound", "--output-dir", (dir / "env").string()});
    call({"bound", "--seed", "5", "--output-dir", (dir / "flag").string()});
    ::unsetenv("LATFLOW_SEED");
    CHECK(load(dir / "env" / "manifest.json")["seed"] == 99);
    CHECK(load(dir / "flag" / "manifest.json")["seed"] == 5);
}
