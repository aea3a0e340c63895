#include "topicseg/embed.hpp"

#include <chrono>
#include <stdexcept>
#include <thread>

#include <httplib.h>
#include <json.hpp>

using nlohmann::json;

namespace topicseg {

namespace {

struct ParsedUrl {
    std::string host_port;  // scheme://host:port
    std::string base_path;  // path prefix, no trailing slash
};

ParsedUrl split_url(const std::string& url) {
    auto scheme_end = url.find("://");
    size_t path_start =
        url.find('/', scheme_end == std::string::npos ? 0 : scheme_end + 3);
    if (path_start == std::string::npos) return {url, ""};
    std::string path = url.substr(path_start);
    while (!path.empty() && path.back() == '/') path.pop_back();
    return {url.substr(0, path_start), path};
}

}  // namespace

std::vector<Eigen::VectorXd> remote_encode_batch(const std::vector<std::string>& texts,
                                                 const EncoderSpec& spec) {
    if (texts.empty()) return {};
    if (spec.endpoint.empty()) throw std::runtime_error("remote encoder has no endpoint");
    if (spec.batch > 0 && static_cast<int>(texts.size()) > spec.batch) {
        // split into chunks; sequential requests keep result order
        std::vector<Eigen::VectorXd> all;
        all.reserve(texts.size());
        for (size_t off = 0; off < texts.size(); off += static_cast<size_t>(spec.batch)) {
            size_t end = std::min(texts.size(), off + static_cast<size_t>(spec.batch));
            std::vector<std::string> chunk(texts.begin() + static_cast<std::ptrdiff_t>(off),
                                           texts.begin() + static_cast<std::ptrdiff_t>(end));
            auto part = remote_encode_batch(chunk, spec);
            all.insert(all.end(), part.begin(), part.end());
        }
        return all;
    }

    ParsedUrl url = split_url(spec.endpoint);
    json request;
    request["texts"] = texts;
    const std::string body = request.dump();

    std::string last_error;
    int attempts = spec.retries < 0 ? 1 : spec.retries + 1;
    for (int attempt = 0; attempt < attempts; ++attempt) {
        if (attempt > 0) {
            auto backoff = std::chrono::milliseconds(100LL << (attempt - 1));
            std::this_thread::sleep_for(backoff);
        }
        httplib::Client client(url.host_port);
        client.set_connection_timeout(0, spec.timeout_ms * 1000LL);
        client.set_read_timeout(0, spec.timeout_ms * 1000LL);
        auto res = client.Post(url.base_path + "/encode", body, "application/json");
        if (!res) {
            last_error = "transport error: " + httplib::to_string(res.error());
            continue;
        }
        if (res->status < 200 || res->status >= 300) {
            last_error = "HTTP status " + std::to_string(res->status);
            continue;
        }
        json response;
        try {
            response = json::parse(res->body);
        } catch (const json::exception& e) {
            throw std::runtime_error(std::string("encoder protocol error: bad JSON: ") + e.what());
        }
        if (!response.contains("vectors") || !response["vectors"].is_array()) {
            throw std::runtime_error("encoder protocol error: missing 'vectors'");
        }
        const auto& vecs = response["vectors"];
        if (vecs.size() != texts.size()) {
            throw std::runtime_error("encoder protocol error: sent " +
                                     std::to_string(texts.size()) + " texts, got " +
                                     std::to_string(vecs.size()) + " vectors");
        }
        std::vector<Eigen::VectorXd> out;
        out.reserve(vecs.size());
        Eigen::Index dim = -1;
        for (const auto& jv : vecs) {
            auto values = jv.get<std::vector<double>>();
            Eigen::VectorXd v = Eigen::Map<Eigen::VectorXd>(
                values.data(), static_cast<Eigen::Index>(values.size()));
            if (dim < 0) dim = v.size();
            if (v.size() != dim) {
                throw std::runtime_error("encoder protocol error: inconsistent dimensions");
            }
            out.push_back(std::move(v));
        }
        if (response.contains("dim") && dim >= 0 &&
            response["dim"].get<Eigen::Index>() != dim) {
            throw std::runtime_error("encoder protocol error: declared dim mismatch");
        }
        return out;
    }
    throw std::runtime_error("remote encoder failed after " + std::to_string(attempts) +
                             " attempt(s): " + last_error);
}

}  // namespace topicseg
