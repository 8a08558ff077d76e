#include "tsexam/gateway.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <condition_variable>
#include <cstdlib>
#include <fstream>
#include <thread>

#include "tsexam/rng.hpp"

namespace tsexam::gateway {

std::string to_string(Provider p) { return p == Provider::mock ? "mock" : "http_compatible"; }

Provider provider_from_string(const std::string& s) {
    if (s == "mock") return Provider::mock;
    if (s == "http_compatible" || s == "http") return Provider::http_compatible;
    throw InvalidParameter("provider", "unknown provider '" + s + "' (expected http_compatible or mock)");
}

std::string to_string(Role r) {
    switch (r) {
        case Role::system: return "system";
        case Role::user: return "user";
        case Role::assistant: return "assistant";
    }
    return "user";
}

MockModel::MockModel(std::vector<MockRule> rules, std::uint64_t seed)
    : rules_(std::move(rules)), seed_(seed), counters_(rules_.size(), 0) {
    for (std::size_t i = 0; i < rules_.size(); ++i) {
        if (rules_[i].replies.empty())
            throw InvalidParameter("script[" + std::to_string(i) + "].replies", "at least one reply required");
    }
}

std::string MockModel::reply(const std::string& prompt) {
    std::lock_guard lock(mutex_);
    ++calls_;
    for (std::size_t i = 0; i < rules_.size(); ++i) {
        const auto& rule = rules_[i];
        if (rule.pattern != "*" && prompt.find(rule.pattern) == std::string::npos) continue;
        const std::size_t n = rule.replies.size();
        const std::size_t k = counters_[i]++;
        switch (rule.mode) {
            case MockMode::cycle: return rule.replies[k % n];
            case MockMode::sequence: return rule.replies[std::min(k, n - 1)];
            case MockMode::random: {
                // Keyed on the prompt, so the answer does not depend on call order.
                Rng rng(derive_seed(seed_, prompt));
                return rule.replies[rng.below(n)];
            }
        }
    }
    throw GatewayError("mock model: no scripted rule matches the prompt");
}

void MockModel::reset() {
    std::lock_guard lock(mutex_);
    std::fill(counters_.begin(), counters_.end(), 0);
    calls_ = 0;
}

std::size_t MockModel::calls() const {
    std::lock_guard lock(mutex_);
    return calls_;
}

void ModelRef::check() const {
    if (model_id.empty()) throw InvalidParameter("model_id", "must be non-empty");
    if (provider == Provider::http_compatible) {
        if (endpoint.empty()) throw InvalidParameter("endpoint", "required for http_compatible model '" + model_id + "'");
        if (credentials.empty())
            throw InvalidParameter("credential", "required for http_compatible model '" + model_id + "'");
    }
}

ModelRef model_from_json(const json& j, const std::string& name) {
    static const std::vector<std::string> known{"provider", "model_id", "endpoint", "credential", "script", "seed"};
    if (!j.is_object()) throw InvalidParameter(name, "model entry must be an object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (std::find(known.begin(), known.end(), it.key()) == known.end())
            throw InvalidParameter(name + "." + it.key(), "unknown key");
    }
    ModelRef m;
    try {
        m.provider = provider_from_string(j.value("provider", std::string("mock")));
        m.model_id = j.value("model_id", name);
        m.endpoint = j.value("endpoint", std::string());
        if (j.contains("credential")) {
            std::string cred = j["credential"].get<std::string>();
            std::string upper;
            for (char c : cred) upper += std::isalnum(static_cast<unsigned char>(c)) ? static_cast<char>(std::toupper(static_cast<unsigned char>(c))) : '_';
            m.credentials = "TSEXAM_API_KEY_" + upper;
        }
        if (m.provider == Provider::mock && j.contains("script")) {
            std::vector<MockRule> rules;
            const auto& script = j["script"];
            if (!script.is_array()) throw InvalidParameter(name + ".script", "must be a list of rules");
            for (const auto& r : script) {
                MockRule rule;
                rule.pattern = r.value("pattern", std::string("*"));
                if (r.contains("reply")) rule.replies.push_back(r["reply"].get<std::string>());
                if (r.contains("replies")) {
                    for (const auto& x : r["replies"]) rule.replies.push_back(x.get<std::string>());
                }
                const auto mode = r.value("mode", std::string("cycle"));
                if (mode == "cycle") {
                    rule.mode = MockMode::cycle;
                } else if (mode == "sequence") {
                    rule.mode = MockMode::sequence;
                } else if (mode == "random") {
                    rule.mode = MockMode::random;
                } else {
                    throw InvalidParameter(name + ".script.mode", "unknown mode '" + mode + "'");
                }
                rules.push_back(std::move(rule));
            }
            m.mock = std::make_shared<MockModel>(std::move(rules), j.value("seed", std::uint64_t{0}));
        }
    } catch (const json::exception& e) {
        throw InvalidParameter(name, e.what());
    }
    if (m.provider == Provider::http_compatible) {
        if (m.endpoint.empty()) throw InvalidParameter(name + ".endpoint", "required for http_compatible models");
        if (m.credentials.empty()) throw InvalidParameter(name + ".credential", "required for http_compatible models");
    }
    return m;
}

// --- gateway ------------------------------------------------------------------------------

namespace {

class TransientError : public GatewayError {
public:
    using GatewayError::GatewayError;
};

json message_json(const ModelMessage& m) {
    if (m.images.empty()) return {{"role", to_string(m.role)}, {"content", m.text}};
    json parts = json::array();
    parts.push_back({{"type", "text"}, {"text", m.text}});
    for (const auto& png : m.images)
        parts.push_back({{"type", "image_url"}, {"image_url", {{"url", "data:image/png;base64," + base64_encode(png)}}}});
    return {{"role", to_string(m.role)}, {"content", parts}};
}

std::string content_text(const json& content) {
    if (content.is_string()) return content.get<std::string>();
    std::string out;
    if (content.is_array()) {
        for (const auto& part : content) {
            if (part.is_object() && part.value("type", "") == "text") out += part.value("text", "");
        }
    }
    return out;
}

}  // namespace

struct Gateway::State {
    GatewayOptions options;
    std::shared_ptr<Transport> transport;
    std::mutex mutex;
    std::condition_variable cv;
    std::size_t in_flight = 0;
    std::map<std::string, std::chrono::steady_clock::time_point> last_start;
    std::mutex log_mutex;
    std::ofstream log;
};

Gateway::Gateway(GatewayOptions options, std::shared_ptr<Transport> transport) : state_(std::make_unique<State>()) {
    if (options.max_in_flight == 0) throw InvalidParameter("max_in_flight", "must be at least 1");
    if (!options.sleep)
        options.sleep = [](double s) { std::this_thread::sleep_for(std::chrono::duration<double>(s)); };
    state_->options = std::move(options);
    state_->transport = transport ? std::move(transport) : make_http_transport();
    if (state_->options.audit_log) {
        state_->log.open(*state_->options.audit_log, std::ios::app);
        if (!state_->log) throw GatewayError(state_->options.audit_log->string() + ": cannot open audit log");
    }
}

Gateway::~Gateway() = default;

std::string Gateway::request(const ModelRef& model, const std::string& kind, const std::string& path, const json& body,
                             const RetryPolicy& retry, const std::function<std::string()>& mock_call) {
    model.check();
    if (retry.max_attempts < 1) throw InvalidParameter("max_attempts", "must be at least 1");
    const std::string payload = body.dump();
    if (payload.size() > retry.max_payload_bytes)
        throw PayloadTooLarge("request of " + std::to_string(payload.size()) + " bytes exceeds the limit of " +
                              std::to_string(retry.max_payload_bytes));

    std::string key;
    if (model.provider == Provider::http_compatible) {
        const char* value = std::getenv(model.credentials.c_str());
        if (!value || !*value)
            throw AuthError("environment variable " + model.credentials + " is not set (needed by model '" +
                            model.model_id + "')");
        key = value;
    }

    const auto started = std::chrono::steady_clock::now();
    int attempts = 0;
    std::string status = "ok";
    std::string result;
    double backoff = retry.initial_backoff_s;
    auto audit = [&] {
        if (!state_->log.is_open()) return;
        const auto ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
        json rec{{"model", model.model_id},   {"provider", to_string(model.provider)}, {"kind", kind},
                 {"request_sha256", sha256_hex(payload)}, {"attempts", attempts}, {"latency_ms", ms},
                 {"status", status}};
        std::lock_guard lock(state_->log_mutex);
        state_->log << rec.dump() << '\n';
        state_->log.flush();
    };

    std::string last_error;
    while (attempts < retry.max_attempts) {
        ++attempts;
        {
            std::unique_lock lock(state_->mutex);
            state_->cv.wait(lock, [&] { return state_->in_flight < state_->options.max_in_flight; });
            ++state_->in_flight;
            if (state_->options.min_interval_s > 0) {
                auto& last = state_->last_start[model.model_id];
                const auto now = std::chrono::steady_clock::now();
                const double wait =
                    state_->options.min_interval_s - std::chrono::duration<double>(now - last).count();
                if (wait > 0 && last.time_since_epoch().count() != 0) {
                    lock.unlock();
                    state_->options.sleep(wait);
                    lock.lock();
                }
                last = std::chrono::steady_clock::now();
            }
        }
        bool released = false;
        auto release = [&] {
            if (released) return;
            released = true;
            std::lock_guard lock(state_->mutex);
            --state_->in_flight;
            state_->cv.notify_one();
        };

        try {
            if (model.provider == Provider::mock) {
                result = mock_call();
                release();
                audit();
                return result;
            }
            const auto resp = state_->transport->post(
                model.endpoint + path, {{"Authorization", "Bearer " + key}, {"Content-Type", "application/json"}},
                payload);
            release();
            if (resp.status == 200) {
                audit();
                return resp.body;
            }
            if (resp.status == 401 || resp.status == 403)
                throw AuthError("model '" + model.model_id + "' rejected credentials (HTTP " +
                                std::to_string(resp.status) + ")");
            if (resp.status == 413) throw PayloadTooLarge("model '" + model.model_id + "' rejected the payload size");
            const bool transient = resp.status == 0 || resp.status == 408 || resp.status == 429 || resp.status >= 500;
            const std::string what = resp.status == 0 ? resp.error : "HTTP " + std::to_string(resp.status) + ": " +
                                                                         resp.body.substr(0, 300);
            if (!transient) throw GatewayError("model '" + model.model_id + "': " + what);
            last_error = what;
        } catch (const TransientError& e) {
            release();
            last_error = e.what();
        } catch (const GatewayError& e) {
            release();
            status = e.what();
            audit();
            throw;
        } catch (...) {
            release();
            status = "error";
            audit();
            throw;
        }
        if (attempts < retry.max_attempts) {
            state_->options.sleep(std::min(backoff, retry.max_backoff_s));
            backoff *= retry.multiplier;
        }
    }
    status = "retries exhausted: " + last_error;
    audit();
    throw RetryExhausted(attempts, last_error);
}

std::string Gateway::chat(const ModelRef& model, const std::vector<ModelMessage>& messages, const RetryPolicy& retry) {
    if (messages.empty()) throw InvalidParameter("messages", "at least one message required");
    json body{{"model", model.model_id}, {"messages", json::array()}};
    for (const auto& m : messages) {
        if (!m.images.empty() && m.role != Role::user)
            throw InvalidParameter("messages", "images are only allowed on user messages");
        body["messages"].push_back(message_json(m));
    }
    std::string prompt;
    for (auto it = messages.rbegin(); it != messages.rend(); ++it) {
        if (it->role == Role::user) {
            prompt = it->text;
            break;
        }
    }
    const auto mock_call = [&]() -> std::string {
        if (!model.mock) throw GatewayError("mock model '" + model.model_id + "' has no script");
        std::string r = model.mock->reply(prompt);
        if (r == kMockTransientFailure) throw TransientError("scripted transient failure");
        if (r == kMockAuthFailure) throw AuthError("scripted authentication failure");
        return r;
    };
    const std::string raw = request(model, "chat", "/chat/completions", body, retry, mock_call);
    if (model.provider == Provider::mock) return raw;
    try {
        const json j = json::parse(raw);
        return content_text(j.at("choices").at(0).at("message").at("content"));
    } catch (const json::exception& e) {
        throw GatewayError("model '" + model.model_id + "' returned a malformed response: " + e.what());
    }
}

std::vector<std::vector<double>> Gateway::embed(const ModelRef& model, const std::vector<std::string>& texts,
                                                const RetryPolicy& retry) {
    if (texts.empty()) throw InvalidParameter("texts", "at least one text required");
    std::vector<std::vector<double>> out;
    if (model.provider == Provider::mock) {
        request(model, "embed", "/embeddings", {{"model", model.model_id}, {"input", texts}}, retry,
                [] { return std::string(); });
        for (const auto& t : texts) out.push_back(mock_embedding(t));
        return out;
    }
    const std::string raw =
        request(model, "embed", "/embeddings", {{"model", model.model_id}, {"input", texts}}, retry, nullptr);
    try {
        const json j = json::parse(raw);
        const auto& data = j.at("data");
        out.resize(texts.size());
        for (std::size_t i = 0; i < data.size(); ++i) {
            const std::size_t index = data[i].value("index", i);
            if (index >= out.size()) throw GatewayError("embedding index out of range");
            out[index] = data[i].at("embedding").get<std::vector<double>>();
        }
    } catch (const json::exception& e) {
        throw GatewayError("model '" + model.model_id + "' returned a malformed embedding response: " + e.what());
    }
    for (const auto& v : out) {
        if (v.empty() || v.size() != out.front().size())
            throw GatewayError("model '" + model.model_id + "' returned embeddings of inconsistent dimension");
    }
    return out;
}

std::vector<double> mock_embedding(const std::string& text) {
    std::vector<double> v(kMockEmbeddingDim, 0.0);
    std::string word;
    auto flush = [&] {
        if (word.empty()) return;
        const std::uint64_t h = fnv1a64(word);
        v[h % kMockEmbeddingDim] += (h >> 63) ? -1.0 : 1.0;
        word.clear();
    };
    for (char c : text) {
        if (std::isalnum(static_cast<unsigned char>(c))) {
            word += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        } else {
            flush();
        }
    }
    flush();
    double norm = 0.0;
    for (double x : v) norm += x * x;
    if (norm > 0) {
        norm = std::sqrt(norm);
        for (double& x : v) x /= norm;
    }
    return v;
}

// --- text serialization -------------------------------------------------------------------

std::string format_decimal(double value, int decimals) {
    if (decimals < 0 || decimals > 30) throw InvalidParameter("decimals", "must be in [0, 30]");
    if (std::isnan(value)) return "nan";
    if (std::isinf(value)) return value < 0 ? "-inf" : "inf";

    // Shortest round-trip digits, then decimal rounding on those digits.
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, value, std::chars_format::scientific);
    const std::string sci(buf, res.ptr);
    const bool negative = sci.front() == '-';
    const auto epos = sci.find('e');
    std::string digits;
    for (std::size_t i = negative ? 1 : 0; i < epos; ++i) {
        if (sci[i] != '.') digits += sci[i];
    }
    const int exponent = std::stoi(sci.substr(epos + 1));

    const long shift = static_cast<long>(exponent) - static_cast<long>(digits.size() - 1) + decimals;
    std::string integer;
    std::string fraction;
    if (shift >= 0) {
        integer = digits + std::string(static_cast<std::size_t>(shift), '0');
    } else {
        const long cut = static_cast<long>(digits.size()) + shift;
        if (cut <= 0) {
            integer = "0";
            fraction = std::string(static_cast<std::size_t>(-cut), '0') + digits;
        } else {
            integer = digits.substr(0, static_cast<std::size_t>(cut));
            fraction = digits.substr(static_cast<std::size_t>(cut));
        }
    }
    bool round_up = false;
    if (!fraction.empty()) {
        const char first = fraction.front();
        const bool rest_zero = fraction.find_first_not_of('0', 1) == std::string::npos;
        if (first > '5' || (first == '5' && !rest_zero)) {
            round_up = true;
        } else if (first == '5') {
            round_up = (integer.back() - '0') % 2 == 1;
        }
    }
    if (round_up) {
        int i = static_cast<int>(integer.size()) - 1;
        while (i >= 0 && integer[static_cast<std::size_t>(i)] == '9') integer[static_cast<std::size_t>(i--)] = '0';
        if (i < 0) {
            integer.insert(integer.begin(), '1');
        } else {
            ++integer[static_cast<std::size_t>(i)];
        }
    }
    if (integer.size() < static_cast<std::size_t>(decimals) + 1)
        integer.insert(0, static_cast<std::size_t>(decimals) + 1 - integer.size(), '0');
    const std::size_t int_len = integer.size() - static_cast<std::size_t>(decimals);
    std::size_t lead = 0;
    while (lead + 1 < int_len && integer[lead] == '0') ++lead;
    std::string out = integer.substr(lead, int_len - lead);
    if (decimals > 0) out += "." + integer.substr(int_len);
    // Negative zero after rounding prints unsigned.
    if (negative && out.find_first_not_of("0.") != std::string::npos) out.insert(0, "-");
    return out;
}

std::string serialize_text(const TimeSeries& series, int decimals) {
    std::string out;
    for (std::size_t i = 0; i < series.values.size(); ++i) {
        if (i) out += ',';
        out += format_decimal(series.values[i], decimals);
    }
    return out;
}

std::string base64_encode(const std::string& bytes) {
    std::string out(4 * ((bytes.size() + 2) / 3) + 1, '\0');
    const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                  reinterpret_cast<const unsigned char*>(bytes.data()), static_cast<int>(bytes.size()));
    out.resize(static_cast<std::size_t>(n));
    return out;
}

std::string sha256_hex(const std::string& bytes) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr);
    static const char* hex = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out += hex[md[i] >> 4];
        out += hex[md[i] & 15];
    }
    return out;
}

}  // namespace tsexam::gateway
