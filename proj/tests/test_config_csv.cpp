#include "nliv/config.hpp"
#include "nliv/csv.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <fstream>
#include <sstream>

using namespace nliv;

namespace {

std::string temp_path(const std::string& name) {
    return std::string("/tmp/nliv_test_") + name;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Config parse_string(const std::string& text) {
    std::istringstream in(text);
    return Config::parse(in);
}

}  // namespace

TEST_CASE("Config: sections, comments, whitespace, typed getters") {
    const Config cfg = parse_string(
        "top = 1\n"
        "# a comment\n"
        "  [ mc ]  \n"
        "n = 500   # trailing comment\n"
        "q_alpha =   0.9\n"
        "penalty= h1\n"
        "flag = true\n"
        "\n"
        "[run]\n"
        "seed = 42\n");
    CHECK(cfg.get_int("top", 0) == 1);
    CHECK(cfg.get_int("mc.n", 0) == 500);
    CHECK(cfg.get_double("mc.q_alpha", 0.0) == Catch::Approx(0.9));
    CHECK(cfg.get_string("mc.penalty", "") == "h1");
    CHECK(cfg.get_bool("mc.flag", false));
    CHECK(cfg.get_int("run.seed", 0) == 42);
    CHECK(cfg.has("mc.n"));
    CHECK_FALSE(cfg.has("mc.missing"));
    CHECK(cfg.get_int("mc.missing", 7) == 7);
    CHECK(cfg.entries().size() == 6);
}

TEST_CASE("Config: parse errors carry line numbers") {
    try {
        parse_string("a = 1\nno equals sign here\n");
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    }
    try {
        parse_string("[unterminated\n");
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("line 1") != std::string::npos);
    }
    CHECK_THROWS_AS(parse_string(" = value\n"), ConfigError);
}

TEST_CASE("Config: type errors name the field and the offending value") {
    const Config cfg = parse_string("[mc]\nn = lots\nq = 0.9x\nb = maybe\n");
    try {
        cfg.get_int("mc.n", 0);
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("mc.n") != std::string::npos);
        CHECK(msg.find("lots") != std::string::npos);
    }
    CHECK_THROWS_AS(cfg.get_double("mc.q", 0.0), ConfigError);
    CHECK_THROWS_AS(cfg.get_bool("mc.b", false), ConfigError);
}

TEST_CASE("Config::load: missing file") {
    CHECK_THROWS_AS(Config::load("/tmp/nliv_no_such_config_file.cfg"), ConfigError);
}

TEST_CASE("CsvWriter: schema comment, header, LF endings, width check") {
    const std::string path = temp_path("writer.csv");
    {
        CsvWriter w(path, "demo v1", {"a", "b"});
        w.row({"1", "2"});
        w.row({csv_num(0.5), csv_num(1e-3)});
        CHECK_THROWS_AS(w.row({"only-one"}), std::invalid_argument);
    }
    const std::string text = slurp(path);
    CHECK(text == "# schema: demo v1\na,b\n1,2\n0.5,0.001\n");
    CHECK(text.find('\r') == std::string::npos);
    std::remove(path.c_str());
}

TEST_CASE("csv_num renders with '.' decimal point and 12 significant digits") {
    CHECK(csv_num(1.0) == "1");
    CHECK(csv_num(0.25) == "0.25");
    CHECK(csv_num(-3.5e-7) == "-3.5e-07");
    CHECK(csv_num(1.0 / 3.0) == "0.333333333333");
}

TEST_CASE("sample CSV round-trip preserves the observations") {
    Sample s;
    s.records = {{0.1, -0.2, 0.3}, {1.5e-4, 0.0, 0.99}, {-2.0, 0.5, 0.5}};
    const std::string path = temp_path("sample.csv");
    write_sample_csv(path, s);
    const std::string text = slurp(path);
    CHECK(text.rfind("# schema: observations v1\ny,x,z\n", 0) == 0);
    const Sample back = read_sample_csv(path);
    REQUIRE(back.n() == 3);
    for (int i = 0; i < 3; ++i) {
        CHECK(back.records[i].y == Catch::Approx(s.records[i].y).margin(1e-12));
        CHECK(back.records[i].x == Catch::Approx(s.records[i].x).margin(1e-12));
        CHECK(back.records[i].z == Catch::Approx(s.records[i].z).margin(1e-12));
    }
    std::remove(path.c_str());
}

TEST_CASE("read_sample_csv: malformed inputs report the line") {
    const std::string path = temp_path("bad.csv");

    const auto write_text = [&](const std::string& text) {
        std::ofstream out(path, std::ios::binary);
        out << text;
    };

    write_text("y,x,z\n0.1,0.2\n");
    try {
        read_sample_csv(path);
        FAIL("expected failure");
    } catch (const std::runtime_error& e) {
        CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    }

    write_text("y,x,z\n0.1,abc,0.3\n");
    try {
        read_sample_csv(path);
        FAIL("expected failure");
    } catch (const std::runtime_error& e) {
        const std::string msg = e.what();
        CHECK(msg.find("line 2") != std::string::npos);
        CHECK(msg.find("abc") != std::string::npos);
    }

    write_text("y,x,z\n0.1,0.2,0.3,0.4\n");
    CHECK_THROWS_AS(read_sample_csv(path), std::runtime_error);

    write_text("wrong,header,row\n0.1,0.2,0.3\n");
    CHECK_THROWS_AS(read_sample_csv(path), std::runtime_error);

    write_text("y,x,z\n");
    CHECK_THROWS_AS(read_sample_csv(path), std::runtime_error);

    write_text("");
    CHECK_THROWS_AS(read_sample_csv(path), std::runtime_error);

    std::remove(path.c_str());
    CHECK_THROWS_AS(read_sample_csv("/tmp/nliv_no_such_data.csv"), std::runtime_error);

    // comments and CRLF data lines are tolerated
    write_text("# schema: observations v1\ny,x,z\r\n0.1,0.2,0.3\r\n");
    const Sample ok = read_sample_csv(path);
    CHECK(ok.n() == 1);
    std::remove(path.c_str());
}
