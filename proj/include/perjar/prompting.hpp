#pragma once

#include "perjar/corpus.hpp"
#include "perjar/retrieval.hpp"

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace perjar {

class ModelBackend;

/// Version of the checked-in templates under templates/<version>/.
std::string_view template_version() noexcept;

enum class PromptStrategy { vanilla, metadata, profile, nearest_annotator, nearest_abstract };
enum class TaskKind { familiarity, definition_needs, background_needs, example_needs };

inline constexpr PromptStrategy kAllPromptStrategies[] = {PromptStrategy::vanilla, PromptStrategy::metadata, PromptStrategy::profile,
                                                          PromptStrategy::nearest_annotator, PromptStrategy::nearest_abstract};
inline constexpr TaskKind kAllTasks[] = {TaskKind::familiarity, TaskKind::definition_needs, TaskKind::background_needs,
                                         TaskKind::example_needs};

std::string_view to_string(PromptStrategy s) noexcept;
std::string_view to_string(TaskKind t) noexcept;
PromptStrategy parse_prompt_strategy(std::string_view s);
TaskKind parse_task_kind(std::string_view s);

/// Gold label of an annotation for the task, if the annotation carries one.
std::optional<Label> task_label(const TermAnnotation& a, TaskKind task);

/// One instruction-tuning record.
struct AlpacaExample {
    std::string instruction;
    std::string input;
    std::optional<std::string> response;

    bool operator==(const AlpacaExample&) const = default;
};

struct RelatedData {
    std::string text;
};

struct PromptContext {
    const Annotator& annotator;
    const AbstractDoc& abstract_doc;
    std::vector<std::string> entities;
    RelatedData related;
};

/// Retrieval results a nearest-* strategy needs; unused fields stay empty.
struct RetrievalOutputs {
    std::optional<std::vector<LabeledTerm>> nearest_annotator;
    std::optional<std::vector<LabeledTerm>> nearest_abstract;
};

std::string_view render_instruction(TaskKind task);

RelatedData render_related_data(PromptStrategy strategy, const Annotator& annotator, const AbstractDoc& abstract_doc,
                                const RetrievalOutputs& retrieval);

std::string render_input(TaskKind task, std::span<const std::string> entities, const AbstractDoc& abstract_doc, const RelatedData& related);

/// "[a, b, c]". Throws std::invalid_argument on a non-binary label.
std::string serialize_label_list(std::span<const Label> labels);

/// "[t1, t2]" with original casing.
std::string serialize_entity_list(std::span<const std::string> entities);

AlpacaExample assemble_example(TaskKind task, PromptStrategy strategy, const PromptContext& ctx,
                               std::optional<std::span<const Label>> labels = std::nullopt);

/// Full Alpaca prompt text. Without a response the text ends right after
/// the "### Response:" header, ready for generation.
std::string format_alpaca_prompt(const AlpacaExample& example);

/// Inverse of format_alpaca_prompt for well-formed prompts.
std::optional<AlpacaExample> parse_alpaca_prompt(std::string_view prompt);

/// Instruction sent when asking a backend for a researcher profile.
std::string_view profile_request_instruction();
AlpacaExample profile_request(const Annotator& annotator);

/// Asks the backend for a profile (temperature 0) unless one is cached on
/// the annotator; stores the generated text verbatim.
const std::string& generate_profile(ModelBackend& backend, Annotator& annotator);

/// Substitutes {name} placeholders in one pass; inserted values are not rescanned.
std::string fill_template(std::string_view tmpl, std::span<const std::pair<std::string_view, std::string>> values);

/// Shortest round-trip decimal for a real (340.0 -> "340").
std::string format_number(double value);

}  // namespace perjar
