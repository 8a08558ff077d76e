#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include "tsexam/gateway.hpp"

namespace tsexam::gateway {

namespace {

class HttpTransport : public Transport {
public:
    explicit HttpTransport(std::chrono::seconds timeout) : timeout_(timeout) {}

    HttpResponse post(const std::string& url, const std::vector<std::pair<std::string, std::string>>& headers,
                      const std::string& body) override {
        const auto scheme_end = url.find("://");
        if (scheme_end == std::string::npos) return {0, "", "malformed URL '" + url + "'"};
        const auto path_start = url.find('/', scheme_end + 3);
        const std::string origin = path_start == std::string::npos ? url : url.substr(0, path_start);
        const std::string path = path_start == std::string::npos ? "/" : url.substr(path_start);

        httplib::Client client(origin);
        client.set_connection_timeout(timeout_);
        client.set_read_timeout(timeout_);
        client.set_write_timeout(timeout_);
        httplib::Headers h;
        std::string content_type = "application/json";
        for (const auto& [k, v] : headers) {
            if (k == "Content-Type") {
                content_type = v;
            } else {
                h.emplace(k, v);
            }
        }
        auto res = client.Post(path, h, body, content_type);
        if (!res) return {0, "", "request to " + origin + " failed: " + httplib::to_string(res.error())};
        return {res->status, res->body, ""};
    }

private:
    std::chrono::seconds timeout_;
};

}  // namespace

std::shared_ptr<Transport> make_http_transport(std::chrono::seconds timeout) {
    return std::make_shared<HttpTransport>(timeout);
}

}  // namespace tsexam::gateway
