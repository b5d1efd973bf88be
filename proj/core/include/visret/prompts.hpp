#pragma once

#include "visret/corpus.hpp"

#include <optional>
#include <string>
#include <string_view>

namespace visret::prompts {

/// Fixed prefix wrapped around the rephrased query to form the final T2I
/// generation instruction.
inline constexpr std::string_view kT2IInstructionPrefix = "Generate a small image of the ";

/// Marker the VQA reader is instructed to emit before its conclusion.
inline constexpr std::string_view kAnswerMarker = "### Answer:";

/// Rephrase prompt template for the given benchmark kind, with {question}
/// (and {entity} for the multi-entity variant) placeholders intact.
std::string_view rephrase_template(DatasetKind kind);

/// System prompt for the VQA reader; the multi-entity variant differs.
std::string_view vqa_system_prompt(DatasetKind kind);

/// Judge rubric template with {question}, {reference_answer} and
/// {model_answer} placeholders intact.
std::string_view judge_template();

std::string build_rephrase_prompt(DatasetKind kind, const std::string& question,
                                  const std::optional<std::string>& entity_name);

std::string build_judge_prompt(const std::string& question, const std::string& reference,
                               const std::string& answer);

/// Replaces every occurrence of placeholder in text.
std::string substitute(std::string text, std::string_view placeholder,
                       std::string_view value);

} // namespace visret::prompts
