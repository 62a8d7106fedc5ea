#pragma once

#include <string>
#include <string_view>
#include <variant>

#include "forge/jsonl.hpp"

namespace forge {

/// An instruction-tuning example. Fields are stored trimmed; `input` may be
/// empty, `instruction` and `output` may not.
struct Task {
    std::string instruction;
    std::string input;
    std::string output;

    friend bool operator==(const Task&, const Task&) = default;
};

/// Throws std::invalid_argument when instruction or output is blank.
void validate(const Task& task);

inline constexpr std::string_view kInstructionMarker = "#instruction#:";
inline constexpr std::string_view kInputMarker = "#input#:";
inline constexpr std::string_view kOutputMarker = "#output#:";

/// Canonical form: "#instruction#: P\n#input#: I\n#output#: O". An empty input
/// renders as a bare "#input#:" line.
std::string serialize(const Task& task);

enum class ParseDefect {
    missing_instruction,
    missing_input,
    missing_output,
    duplicate_marker,
    out_of_order,
    empty_instruction,
    empty_output,
};

std::string_view to_string(ParseDefect defect);

struct ParseError {
    ParseDefect defect;
    std::string detail;
};

using ParseResult = std::variant<Task, ParseError>;

/// Extracts the three field markers, which must each start a line and appear
/// exactly once, in order. Text before the first marker is ignored.
ParseResult parse_task(std::string_view completion);

inline bool parsed_ok(const ParseResult& r) { return std::holds_alternative<Task>(r); }

json to_json(const Task& task);
Task task_from_json(const json& j);

}  // namespace forge
