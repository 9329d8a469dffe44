#pragma once

// Internal nlohmann adapters; public headers stay JSON-library-free.

#include <json.hpp>

#include "mmfusion/tensor.hpp"

namespace mmfusion {

inline void to_json(nlohmann::json& j, const Tensor& t) {
  j = nlohmann::json{{"shape", t.shape()}, {"data", t.values()}};
}

inline void from_json(const nlohmann::json& j, Tensor& t) {
  t = Tensor(j.at("shape").get<std::vector<std::size_t>>(),
             j.at("data").get<std::vector<double>>());
}

}  // namespace mmfusion
