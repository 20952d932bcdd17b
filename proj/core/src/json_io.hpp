// SPDX-License-Identifier: Apache-2.0

// Internal JSON helpers shared between translation units. Not installed.

#pragma once

#include <string>

#include "erprm/reasoning_tree.hpp"
#include "json.hpp"

namespace erprm::json_io {

using Json = nlohmann::ordered_json;

Json tree_node_to_json(const ReasoningTree& tree, NodeId id);
TreeSpec tree_spec_from_json(const Json& node, const std::string& where);

Json tree_document(const ReasoningTree& tree);
ReasoningTree tree_from_document(const Json& doc, const std::string& where);

/// Throws DataError naming `where` when `key` is absent.
const Json& require(const Json& obj, const char* key, const std::string& where);

/// Single-line canonical dump used for every JSON Lines output.
std::string dump_line(const Json& value);

}  // namespace erprm::json_io
