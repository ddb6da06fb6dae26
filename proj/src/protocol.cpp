#include "wsiseg/protocol.hpp"

#include "wsiseg/errors.hpp"

#include <json.hpp>
#include <openssl/evp.h>

#include <cmath>

namespace wsiseg::protocol {

using nlohmann::json;

std::string base64_encode(std::span<const std::uint8_t> bytes) {
    std::string out(4 * ((bytes.size() + 2) / 3), '\0');
    const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), bytes.data(),
                                  static_cast<int>(bytes.size()));
    out.resize(static_cast<std::size_t>(n));
    return out;
}

std::vector<std::uint8_t> base64_decode(std::string_view text) {
    if (text.size() % 4 != 0) throw ProtocolError("base64 payload length is not a multiple of 4");
    std::vector<std::uint8_t> out(3 * (text.size() / 4));
    if (text.empty()) return out;
    const int n = EVP_DecodeBlock(out.data(), reinterpret_cast<const unsigned char*>(text.data()),
                                  static_cast<int>(text.size()));
    if (n < 0) throw ProtocolError("invalid base64 payload");
    // EVP_DecodeBlock counts padding as zero bytes
    std::size_t pad = 0;
    if (text.back() == '=') ++pad;
    if (text.size() >= 2 && text[text.size() - 2] == '=') ++pad;
    out.resize(static_cast<std::size_t>(n) - pad);
    return out;
}

std::string encode(const Request& r) {
    json j = {{"id", r.id}, {"op", r.op}, {"shape", r.shape}};
    if (!r.pixels_b64.empty()) j["pixels_b64"] = r.pixels_b64;
    if (!r.input_path.empty()) j["input_path"] = r.input_path;
    if (!r.output_path.empty()) j["output_path"] = r.output_path;
    return j.dump();
}

std::string encode(const Response& r) {
    json j = {{"id", r.id}};
    if (r.p) j["p"] = *r.p;
    if (r.f) j["f"] = *r.f;
    if (r.done) j["done"] = true;
    if (r.error) j["error"] = *r.error;
    return j.dump();
}

namespace {

json parse_object(std::string_view line) {
    json j;
    try {
        j = json::parse(line);
    } catch (const json::exception& e) {
        throw ProtocolError(std::string("malformed message: ") + e.what());
    }
    if (!j.is_object()) throw ProtocolError("message is not a JSON object");
    if (!j.contains("id") || !j["id"].is_number_integer()) throw ProtocolError("message lacks an integer id");
    return j;
}

}  // namespace

Request decode_request(std::string_view line) {
    const json j = parse_object(line);
    Request r;
    r.id = j["id"].get<std::int64_t>();
    if (!j.contains("op") || !j["op"].is_string()) throw ProtocolError("request lacks an op");
    r.op = j["op"].get<std::string>();
    if (r.op != "classify" && r.op != "features" && r.op != "refine") throw ProtocolError("unknown op '" + r.op + "'");
    try {
        r.shape = j.at("shape").get<std::vector<int>>();
        if (j.contains("pixels_b64")) r.pixels_b64 = j["pixels_b64"].get<std::string>();
        if (j.contains("input_path")) r.input_path = j["input_path"].get<std::string>();
        if (j.contains("output_path")) r.output_path = j["output_path"].get<std::string>();
    } catch (const json::exception& e) {
        throw ProtocolError(std::string("malformed request: ") + e.what());
    }
    return r;
}

Response decode_response(std::string_view line) {
    const json j = parse_object(line);
    Response r;
    r.id = j["id"].get<std::int64_t>();
    int payloads = 0;
    if (j.contains("p")) {
        ++payloads;
        // NaN/Inf cannot be written as JSON numbers; a null or string here is a protocol violation
        if (!j["p"].is_number()) throw ProtocolError("response " + std::to_string(r.id) + ": p is not a number");
        r.p = j["p"].get<double>();
    }
    if (j.contains("f")) {
        ++payloads;
        if (!j["f"].is_array()) throw ProtocolError("response " + std::to_string(r.id) + ": f is not an array");
        std::vector<double> f;
        for (const json& v : j["f"]) {
            if (!v.is_number()) throw ProtocolError("response " + std::to_string(r.id) + ": non-numeric feature");
            f.push_back(v.get<double>());
        }
        r.f = std::move(f);
    }
    if (j.contains("done")) {
        ++payloads;
        if (!j["done"].is_boolean()) throw ProtocolError("response " + std::to_string(r.id) + ": done is not boolean");
        r.done = j["done"].get<bool>();
    }
    if (j.contains("error")) {
        ++payloads;
        r.error = j["error"].is_string() ? j["error"].get<std::string>() : j["error"].dump();
    }
    if (payloads != 1) throw ProtocolError("response " + std::to_string(r.id) + " must carry exactly one payload");
    return r;
}

}  // namespace wsiseg::protocol
