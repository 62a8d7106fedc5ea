#include "forge/task.hpp"

#include <array>
#include <stdexcept>
#include <vector>

#include "forge/text.hpp"

namespace forge {

void validate(const Task& task) {
    if (is_blank(task.instruction)) throw std::invalid_argument("task instruction is empty");
    if (is_blank(task.output)) throw std::invalid_argument("task output is empty");
}

std::string serialize(const Task& task) {
    std::string out;
    out.reserve(task.instruction.size() + task.input.size() + task.output.size() + 40);
    out += kInstructionMarker;
    out += ' ';
    out += task.instruction;
    out += '\n';
    out += kInputMarker;
    if (!task.input.empty()) {
        out += ' ';
        out += task.input;
    }
    out += '\n';
    out += kOutputMarker;
    out += ' ';
    out += task.output;
    return out;
}

std::string_view to_string(ParseDefect defect) {
    switch (defect) {
        case ParseDefect::missing_instruction: return "missing_instruction";
        case ParseDefect::missing_input: return "missing_input";
        case ParseDefect::missing_output: return "missing_output";
        case ParseDefect::duplicate_marker: return "duplicate_marker";
        case ParseDefect::out_of_order: return "out_of_order";
        case ParseDefect::empty_instruction: return "empty_instruction";
        case ParseDefect::empty_output: return "empty_output";
    }
    return "unknown";
}

namespace {

std::vector<std::size_t> line_start_hits(std::string_view text, std::string_view marker) {
    std::vector<std::size_t> hits;
    std::size_t pos = text.find(marker);
    while (pos != std::string_view::npos) {
        if (pos == 0 || text[pos - 1] == '\n') hits.push_back(pos);
        pos = text.find(marker, pos + 1);
    }
    return hits;
}

// The field value spans from after the marker up to the newline that precedes
// the next marker (or the end of text).
std::string field(std::string_view text, std::size_t marker_pos, std::size_t marker_len, std::size_t next) {
    std::size_t begin = marker_pos + marker_len;
    std::size_t end = next;
    if (end > begin && end < text.size() && text[end - 1] == '\n') --end;
    return trim(text.substr(begin, end - begin));
}

}  // namespace

ParseResult parse_task(std::string_view completion) {
    std::string normalized;
    normalized.reserve(completion.size());
    for (std::size_t i = 0; i < completion.size(); ++i) {
        if (completion[i] == '\r' && i + 1 < completion.size() && completion[i + 1] == '\n') continue;
        normalized.push_back(completion[i]);
    }
    const std::string_view text = normalized;

    const std::array<std::string_view, 3> markers = {kInstructionMarker, kInputMarker, kOutputMarker};
    const std::array<ParseDefect, 3> missing = {ParseDefect::missing_instruction, ParseDefect::missing_input,
                                                ParseDefect::missing_output};
    std::array<std::size_t, 3> pos{};
    for (std::size_t k = 0; k < 3; ++k) {
        auto hits = line_start_hits(text, markers[k]);
        if (hits.empty()) {
            return ParseError{missing[k], "no line starting with " + std::string(markers[k])};
        }
        if (hits.size() > 1) {
            return ParseError{ParseDefect::duplicate_marker,
                              std::string(markers[k]) + " appears " + std::to_string(hits.size()) + " times"};
        }
        pos[k] = hits.front();
    }
    if (!(pos[0] < pos[1] && pos[1] < pos[2])) {
        return ParseError{ParseDefect::out_of_order, "markers must appear as instruction, input, output"};
    }

    Task task;
    task.instruction = field(text, pos[0], markers[0].size(), pos[1]);
    task.input = field(text, pos[1], markers[1].size(), pos[2]);
    task.output = field(text, pos[2], markers[2].size(), text.size());
    if (task.instruction.empty()) return ParseError{ParseDefect::empty_instruction, "instruction is blank"};
    if (task.output.empty()) return ParseError{ParseDefect::empty_output, "output is blank"};
    return task;
}

json to_json(const Task& task) {
    return json{{"instruction", task.instruction}, {"input", task.input}, {"output", task.output}};
}

Task task_from_json(const json& j) {
    Task t;
    t.instruction = j.at("instruction").get<std::string>();
    t.input = j.value("input", std::string{});
    t.output = j.at("output").get<std::string>();
    return t;
}

}  // namespace forge
