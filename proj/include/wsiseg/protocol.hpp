#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace wsiseg::protocol {

// Line-delimited JSON spoken with external backends over the child's stdin/stdout.
//
//   classify  -> {"id":n,"op":"classify","shape":[224,224,3],"pixels_b64":"..."}
//             <- {"id":n,"p":0.73}
//   features  -> {"id":n,"op":"features","shape":[224,224,3],"pixels_b64":"..."}
//             <- {"id":n,"f":[...]}
//   refine    -> {"id":n,"op":"refine","shape":[H,W,4],"input_path":"...","output_path":"..."}
//             <- {"id":n,"done":true}   (raster written to output_path as H*W little-endian float32)
//   any op    <- {"id":n,"error":"message"}
//
// Pixels are row-major interleaved RGB bytes, base64 encoded.

struct Request {
    std::int64_t id = 0;
    std::string op;
    std::vector<int> shape;
    std::string pixels_b64;
    std::string input_path;
    std::string output_path;

    friend bool operator==(const Request&, const Request&) = default;
};

struct Response {
    std::int64_t id = 0;
    std::optional<double> p;
    std::optional<std::vector<double>> f;
    bool done = false;
    std::optional<std::string> error;

    friend bool operator==(const Response&, const Response&) = default;
};

std::string encode(const Request& request);
std::string encode(const Response& response);

// Both throw ProtocolError on anything that is not a well-formed message.
Request decode_request(std::string_view line);
Response decode_response(std::string_view line);

std::string base64_encode(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> base64_decode(std::string_view text);  // throws ProtocolError

}  // namespace wsiseg::protocol
