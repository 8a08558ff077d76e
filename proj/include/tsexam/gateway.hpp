#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "tsexam/error.hpp"
#include "tsexam/time_series.hpp"

namespace tsexam::gateway {

enum class Provider { http_compatible, mock };

std::string to_string(Provider p);
Provider provider_from_string(const std::string& s);

enum class MockMode { cycle, sequence, random };

/// One scripted rule: the first rule whose pattern occurs in the last user message answers.
/// "*" matches everything.
struct MockRule {
    std::string pattern = "*";
    std::vector<std::string> replies;
    MockMode mode = MockMode::cycle;
};

/// Reply string that makes the mock fail the call instead of answering.
inline constexpr std::string_view kMockTransientFailure = "@fail:transient";
inline constexpr std::string_view kMockAuthFailure = "@fail:auth";

/// Deterministic scripted model. Counters are per rule, so scripted sequences replay in call order.
class MockModel {
public:
    explicit MockModel(std::vector<MockRule> rules, std::uint64_t seed = 0);

    std::string reply(const std::string& prompt);
    void reset();
    const std::vector<MockRule>& rules() const noexcept { return rules_; }
    std::size_t calls() const;

private:
    std::vector<MockRule> rules_;
    std::uint64_t seed_;
    mutable std::mutex mutex_;
    std::vector<std::size_t> counters_;
    std::size_t calls_ = 0;
};

struct ModelRef {
    Provider provider = Provider::mock;
    std::string model_id;
    std::string endpoint;        // base URL for http_compatible, e.g. https://host/v1
    std::string credentials;     // name of the environment variable holding the API key
    std::shared_ptr<MockModel> mock;

    /// Validates the invariants; throws InvalidParameter.
    void check() const;
};

/// Builds a model reference from a config object: {"provider", "model_id", "endpoint", "credential", "script", "seed"}.
ModelRef model_from_json(const json& j, const std::string& name);

enum class Role { system, user, assistant };
std::string to_string(Role r);

struct ModelMessage {
    Role role = Role::user;
    std::string text;
    std::vector<std::string> images;  // PNG bytes
};

struct RetryPolicy {
    int max_attempts = 4;
    double initial_backoff_s = 1.0;
    double multiplier = 2.0;
    double max_backoff_s = 30.0;
    std::size_t max_payload_bytes = 20u << 20;
};

class GatewayError : public Error {
public:
    using Error::Error;
};

/// Missing or rejected credentials. Never retried.
class AuthError : public GatewayError {
public:
    using GatewayError::GatewayError;
};

class RetryExhausted : public GatewayError {
public:
    RetryExhausted(int attempts, const std::string& last_error)
        : GatewayError("gave up after " + std::to_string(attempts) + " attempt(s): " + last_error), attempts_(attempts) {}
    int attempts() const noexcept { return attempts_; }

private:
    int attempts_;
};

class PayloadTooLarge : public GatewayError {
public:
    using GatewayError::GatewayError;
};

struct HttpResponse {
    int status = 0;  // 0: transport failure (connection refused, timeout)
    std::string body;
    std::string error;
};

class Transport {
public:
    virtual ~Transport() = default;
    virtual HttpResponse post(const std::string& url, const std::vector<std::pair<std::string, std::string>>& headers,
                              const std::string& body) = 0;
};

std::shared_ptr<Transport> make_http_transport(std::chrono::seconds timeout = std::chrono::seconds(120));

struct GatewayOptions {
    std::size_t max_in_flight = 4;
    double min_interval_s = 0.0;  // per model, between request starts
    std::optional<std::filesystem::path> audit_log;
    std::function<void(double)> sleep;  // defaults to std::this_thread::sleep_for
};

/// Thread-safe access to chat and embedding models.
class Gateway {
public:
    explicit Gateway(GatewayOptions options = {}, std::shared_ptr<Transport> transport = nullptr);
    ~Gateway();
    Gateway(const Gateway&) = delete;
    Gateway& operator=(const Gateway&) = delete;

    std::string chat(const ModelRef& model, const std::vector<ModelMessage>& messages, const RetryPolicy& retry = {});
    std::vector<std::vector<double>> embed(const ModelRef& model, const std::vector<std::string>& texts,
                                           const RetryPolicy& retry = {});

private:
    struct State;
    std::string request(const ModelRef& model, const std::string& kind, const std::string& path, const json& body,
                        const RetryPolicy& retry, const std::function<std::string()>& mock_call);
    std::unique_ptr<State> state_;
};

/// Dimension of mock embeddings.
inline constexpr std::size_t kMockEmbeddingDim = 64;
std::vector<double> mock_embedding(const std::string& text);

/// Renders one subplot per series (10x3 inches each) as an RGB PNG.
std::string render_plot(const std::vector<TimeSeries>& series, int dpi = 50);

/// Comma-separated values rounded half-even on their shortest decimal representation.
std::string serialize_text(const TimeSeries& series, int decimals = 3);
std::string format_decimal(double value, int decimals);

std::string base64_encode(const std::string& bytes);
std::string sha256_hex(const std::string& bytes);

}  // namespace tsexam::gateway
