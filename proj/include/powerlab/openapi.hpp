#pragma once

// OpenAPI 3.1 description generated from the endpoint registry and the
// parameter catalog.

#include "powerlab/api.hpp"

namespace powerlab::api {

/// JSON Schema of one parameter from the catalog.
Json field_schema(std::string_view name, const std::optional<std::string>& default_text = std::nullopt);

/// Strict request schema of a computation endpoint.
Json request_schema(TestId test);

Json openapi_document();

}  // namespace powerlab::api
