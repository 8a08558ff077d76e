#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <thread>

#include "tsexam/gateway.hpp"

using namespace tsexam;
using namespace tsexam::gateway;

namespace {

struct FakeTransport : Transport {
    std::vector<HttpResponse> script;
    std::vector<std::string> urls, bodies;
    std::vector<std::vector<std::pair<std::string, std::string>>> headers;

    HttpResponse post(const std::string& url, const std::vector<std::pair<std::string, std::string>>& h,
                      const std::string& body) override {
        urls.push_back(url);
        headers.push_back(h);
        bodies.push_back(body);
        const std::size_t k = std::min(urls.size() - 1, script.size() - 1);
        return script[k];
    }
};

std::string chat_body(const std::string& text) {
    return json{{"choices", {{{"message", {{"role", "assistant"}, {"content", text}}}}}}}.dump();
}

ModelRef http_model() {
    setenv("TSEXAM_API_KEY_UNIT", "secret-key", 1);
    return model_from_json(json{{"provider", "http_compatible"}, {"model_id", "m-1"}, {"endpoint", "https://api.test/v1"},
                                {"credential", "unit"}},
                           "remote");
}

ModelRef mock_model(std::vector<MockRule> rules, std::uint64_t seed = 0) {
    ModelRef m;
    m.model_id = "mock";
    m.mock = std::make_shared<MockModel>(std::move(rules), seed);
    return m;
}

struct Recorded {
    std::vector<double> sleeps;
    GatewayOptions options() {
        GatewayOptions o;
        o.sleep = [this](double s) { sleeps.push_back(s); };
        return o;
    }
};

std::vector<ModelMessage> ask(const std::string& text) { return {{Role::user, text, {}}}; }

std::uint32_t be32(const std::string& s, std::size_t at) {
    return std::uint32_t(std::uint8_t(s[at])) << 24 | std::uint32_t(std::uint8_t(s[at + 1])) << 16 |
           std::uint32_t(std::uint8_t(s[at + 2])) << 8 | std::uint32_t(std::uint8_t(s[at + 3]));
}

}  // namespace

TEST_CASE("mock rules") {
    MockModel m({{"capital", {"Paris", "Rome"}, MockMode::cycle},
                 {"count", {"1", "2"}, MockMode::sequence},
                 {"*", {"a", "b", "c"}, MockMode::random}},
                7);
    CHECK(m.reply("the capital?") == "Paris");
    CHECK(m.reply("capital again") == "Rome");
    CHECK(m.reply("capital") == "Paris");
    CHECK(m.reply("count") == "1");
    CHECK(m.reply("count") == "2");
    CHECK(m.reply("count") == "2");
    const auto r = m.reply("anything");
    CHECK(m.reply("anything") == r);
    CHECK(m.calls() == 8);
    m.reset();
    CHECK(m.calls() == 0);
    CHECK(m.reply("capital") == "Paris");

    std::set<std::string> seen;
    for (int i = 0; i < 50; ++i) seen.insert(m.reply("prompt " + std::to_string(i)));
    CHECK(seen.size() == 3);

    MockModel strict({{"only", {"x"}, MockMode::cycle}});
    CHECK_THROWS_AS(strict.reply("other"), GatewayError);
    CHECK_THROWS_AS(MockModel({{"*", {}, MockMode::cycle}}), InvalidParameter);
}

TEST_CASE("model references from config objects") {
    const auto m = model_from_json(json{{"script", {{{"pattern", "*"}, {"reply", "ok"}}}}, {"seed", 3}}, "judge");
    CHECK(m.provider == Provider::mock);
    CHECK(m.model_id == "judge");
    REQUIRE(m.mock);
    CHECK(m.mock->reply("hi") == "ok");
    CHECK(http_model().credentials == "TSEXAM_API_KEY_UNIT");
    try {
        model_from_json(json{{"provider", "mock"}, {"temperature", 0}}, "gen");
        FAIL("expected InvalidParameter");
    } catch (const InvalidParameter& e) {
        CHECK(e.field() == "gen.temperature");
    }
    CHECK_THROWS_AS(model_from_json(json{{"provider", "http_compatible"}, {"credential", "x"}}, "r"), InvalidParameter);
    CHECK_THROWS_AS(model_from_json(json{{"provider", "http_compatible"}, {"endpoint", "https://x"}}, "r"),
                    InvalidParameter);
    CHECK_THROWS_AS(model_from_json(json{{"provider", "carrier_pigeon"}}, "r"), InvalidParameter);
}

TEST_CASE("mock chat through the gateway") {
    Recorded rec;
    Gateway gw(rec.options());
    const auto m = mock_model({{"*", {std::string(kMockTransientFailure), "recovered"}, MockMode::sequence}});
    CHECK(gw.chat(m, ask("q")) == "recovered");
    CHECK(rec.sleeps == std::vector<double>{1.0});
    const auto auth = mock_model({{"*", {std::string(kMockAuthFailure)}, MockMode::cycle}});
    CHECK_THROWS_AS(gw.chat(auth, ask("q")), AuthError);
    CHECK(rec.sleeps.size() == 1);
    CHECK_THROWS_AS(gw.chat(m, {}), InvalidParameter);
    CHECK(gw.embed(m, {"a b", "c"}).at(0) == mock_embedding("a b"));
}

TEST_CASE("http chat request and response") {
    auto t = std::make_shared<FakeTransport>();
    t->script = {{200, chat_body("hello"), ""}};
    Recorded rec;
    Gateway gw(rec.options(), t);
    ModelMessage with_image{Role::user, "look", {std::string("\x89PNG", 4)}};
    CHECK(gw.chat(http_model(), {{Role::system, "be brief", {}}, with_image}) == "hello");
    REQUIRE(t->urls.size() == 1);
    CHECK(t->urls[0] == "https://api.test/v1/chat/completions");
    const auto body = json::parse(t->bodies[0]);
    CHECK(body.at("model") == "m-1");
    CHECK(body.at("messages").at(0).at("content") == "be brief");
    CHECK(body.at("messages").at(1).at("content").at(1).at("image_url").at("url") ==
          "data:image/png;base64," + base64_encode(std::string("\x89PNG", 4)));
    bool bearer = false;
    for (const auto& [k, v] : t->headers[0]) bearer |= k == "Authorization" && v == "Bearer secret-key";
    CHECK(bearer);
}

TEST_CASE("retries back off on transient failures") {
    auto t = std::make_shared<FakeTransport>();
    t->script = {{503, "busy", ""}, {0, "", "connection refused"}, {200, chat_body("done"), ""}};
    Recorded rec;
    Gateway gw(rec.options(), t);
    CHECK(gw.chat(http_model(), ask("q")) == "done");
    CHECK(rec.sleeps == std::vector<double>{1.0, 2.0});

    t->urls.clear();
    t->script = {{429, "slow down", ""}};
    rec.sleeps.clear();
    try {
        gw.chat(http_model(), ask("q"));
        FAIL("expected RetryExhausted");
    } catch (const RetryExhausted& e) {
        CHECK(e.attempts() == 4);
    }
    CHECK(t->urls.size() == 4);
    CHECK(rec.sleeps == std::vector<double>{1.0, 2.0, 4.0});

    RetryPolicy capped;
    capped.max_attempts = 6;
    capped.max_backoff_s = 3.0;
    rec.sleeps.clear();
    CHECK_THROWS_AS(gw.chat(http_model(), ask("q"), capped), RetryExhausted);
    CHECK(rec.sleeps == std::vector<double>{1.0, 2.0, 3.0, 3.0, 3.0});
}

TEST_CASE("permanent failures are not retried") {
    auto t = std::make_shared<FakeTransport>();
    Recorded rec;
    Gateway gw(rec.options(), t);
    t->script = {{401, "no", ""}};
    CHECK_THROWS_AS(gw.chat(http_model(), ask("q")), AuthError);
    t->script = {{400, "bad request", ""}};
    CHECK_THROWS_AS(gw.chat(http_model(), ask("q")), GatewayError);
    t->script = {{413, "too big", ""}};
    CHECK_THROWS_AS(gw.chat(http_model(), ask("q")), PayloadTooLarge);
    t->script = {{200, "not json", ""}};
    CHECK_THROWS_AS(gw.chat(http_model(), ask("q")), GatewayError);
    CHECK(t->urls.size() == 4);
    CHECK(rec.sleeps.empty());

    RetryPolicy tiny;
    tiny.max_payload_bytes = 10;
    CHECK_THROWS_AS(gw.chat(http_model(), ask("a long prompt"), tiny), PayloadTooLarge);
    CHECK(t->urls.size() == 4);
}

TEST_CASE("missing credentials fail before any request") {
    auto t = std::make_shared<FakeTransport>();
    t->script = {{200, chat_body("x"), ""}};
    Gateway gw({}, t);
    auto m = http_model();
    unsetenv("TSEXAM_API_KEY_UNIT");
    CHECK_THROWS_AS(gw.chat(m, ask("q")), AuthError);
    CHECK(t->urls.empty());
}

TEST_CASE("http embeddings honor the response index") {
    auto t = std::make_shared<FakeTransport>();
    t->script = {{200, json{{"data", {{{"index", 1}, {"embedding", {0.0, 1.0}}}, {{"index", 0}, {"embedding", {1.0, 0.0}}}}}}.dump(), ""}};
    Gateway gw({}, t);
    const auto e = gw.embed(http_model(), {"a", "b"});
    CHECK(e == std::vector<std::vector<double>>{{1.0, 0.0}, {0.0, 1.0}});
    CHECK(t->urls[0] == "https://api.test/v1/embeddings");
}

TEST_CASE("audit log records each call without secrets") {
    const auto path = std::filesystem::temp_directory_path() / "tsexam_unit_audit.ndjson";
    std::filesystem::remove(path);
    auto t = std::make_shared<FakeTransport>();
    t->script = {{200, chat_body("ok"), ""}};
    {
        GatewayOptions o;
        o.audit_log = path;
        Gateway gw(o, t);
        gw.chat(http_model(), ask("q1"));
        gw.chat(mock_model({{"*", {"m"}, MockMode::cycle}}), ask("q2"));
    }
    std::ifstream in(path);
    std::string line;
    std::vector<json> records;
    while (std::getline(in, line)) {
        CHECK(line.find("secret-key") == std::string::npos);
        records.push_back(json::parse(line));
    }
    REQUIRE(records.size() == 2);
    CHECK(records[0].at("model") == "m-1");
    CHECK(records[0].at("status") == "ok");
    CHECK(records[0].at("request_sha256").get<std::string>().size() == 64);
    CHECK(records[1].at("provider") == "mock");
}

TEST_CASE("concurrency cap is respected") {
    struct Slow : Transport {
        std::atomic<int> now{0}, peak{0};
        HttpResponse post(const std::string&, const std::vector<std::pair<std::string, std::string>>&,
                          const std::string&) override {
            const int n = ++now;
            int p = peak.load();
            while (n > p && !peak.compare_exchange_weak(p, n)) {
            }
            std::this_thread::sleep_for(std::chrono::milliseconds(20));
            --now;
            return {200, chat_body("x"), ""};
        }
    };
    auto t = std::make_shared<Slow>();
    GatewayOptions o;
    o.max_in_flight = 2;
    Gateway gw(o, t);
    const auto m = http_model();
    std::vector<std::thread> threads;
    for (int i = 0; i < 6; ++i) threads.emplace_back([&] { gw.chat(m, ask("q")); });
    for (auto& th : threads) th.join();
    CHECK(t->peak.load() <= 2);
    CHECK(t->peak.load() >= 1);
}

TEST_CASE("text serialization rounds half to even on the shortest decimal form") {
    CHECK(format_decimal(1.0, 3) == "1.000");
    CHECK(format_decimal(0.0005, 3) == "0.000");
    CHECK(format_decimal(0.0015, 3) == "0.002");
    CHECK(format_decimal(0.0025, 3) == "0.002");
    CHECK(format_decimal(2.675, 2) == "2.68");
    CHECK(format_decimal(-1.23456, 3) == "-1.235");
    CHECK(format_decimal(-0.0001, 3) == "0.000");
    CHECK(format_decimal(-0.0, 2) == "0.00");
    CHECK(format_decimal(999.9996, 3) == "1000.000");
    CHECK(format_decimal(12.5, 0) == "12");
    CHECK(format_decimal(13.5, 0) == "14");
    CHECK(format_decimal(1e20, 0) == "100000000000000000000");
    CHECK(format_decimal(1.5e-7, 8) == "0.00000015");
    CHECK_THROWS_AS(format_decimal(1.0, -1), InvalidParameter);
    TimeSeries s;
    s.values = {1.23456, -2.0, 0.1};
    CHECK(serialize_text(s) == "1.235,-2.000,0.100");
    CHECK(serialize_text(s, 1) == "1.2,-2.0,0.1");
}

TEST_CASE("plots are deterministic PNGs sized by dpi") {
    TimeSeries a, b;
    for (int i = 0; i < 100; ++i) {
        a.values.push_back(std::sin(i * 0.2));
        b.values.push_back(i * 0.01);
    }
    const auto png = render_plot({a}, 50);
    CHECK(png.substr(1, 3) == "PNG");
    CHECK(png.substr(12, 4) == "IHDR");
    CHECK(be32(png, 16) == 500);
    CHECK(be32(png, 20) == 150);
    CHECK(render_plot({a}, 50) == png);
    const auto two = render_plot({a, b}, 100);
    CHECK(be32(two, 16) == 1000);
    CHECK(be32(two, 20) == 600);
    CHECK(render_plot({b}, 50) != png);
    TimeSeries flat, one;
    flat.values = std::vector<double>(10, 2.0);
    one.values = {5.0};
    CHECK_NOTHROW(render_plot({flat}, 20));
    CHECK_NOTHROW(render_plot({one}, 20));
    CHECK_THROWS_AS(render_plot({}, 50), InvalidParameter);
    CHECK_THROWS_AS(render_plot({a}, 0), InvalidParameter);
    TimeSeries bad;
    bad.values = {1.0, std::nan("")};
    CHECK_THROWS_AS(render_plot({bad}, 50), InvalidParameter);
}

TEST_CASE("encoding helpers") {
    CHECK(base64_encode("") == "");
    CHECK(base64_encode("f") == "Zg==");
    CHECK(base64_encode("foobar") == "Zm9vYmFy");
    CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    const auto e = mock_embedding("Rising trend, rising!");
    CHECK(e.size() == kMockEmbeddingDim);
    double norm = 0;
    for (double x : e) norm += x * x;
    CHECK(norm == doctest::Approx(1.0));
    CHECK(mock_embedding("rising trend") == mock_embedding("RISING   trend"));
}
