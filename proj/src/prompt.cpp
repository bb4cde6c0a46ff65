#include "porte/prompt.hpp"

#include <cmath>
#include <vector>

#include "porte/errors.hpp"

namespace porte {

std::string to_string(PromptType t) {
    switch (t) {
        case PromptType::gender_extract: return "gender_extract";
        case PromptType::gender_remove: return "gender_remove";
        case PromptType::order: return "order";
        case PromptType::relative_length: return "relative_length";
    }
    throw ArgumentError("invalid prompt type");
}

PromptType prompt_type_from_string(const std::string& s) {
    if (s == "gender_extract") return PromptType::gender_extract;
    if (s == "gender_remove") return PromptType::gender_remove;
    if (s == "order") return PromptType::order;
    if (s == "relative_length") return PromptType::relative_length;
    throw ArgumentError("unrecognized prompt type '" + s + "'");
}

AttributeSet derive_attributes(const RenderedMixture& rendered, const MixturePlan& plan) {
    const bool target_is_first = plan.target_role == TargetRole::first;

    AttributeSet attrs;
    attrs.target_gender = target_is_first ? plan.first_utt.gender : plan.second_utt.gender;
    attrs.other_gender = target_is_first ? plan.second_utt.gender : plan.first_utt.gender;
    attrs.gender_contrast = attrs.target_gender != attrs.other_gender;

    const double start_gap = std::abs(rendered.t_start_second - rendered.t_start_first);
    attrs.order_defined = start_gap >= kOrderAmbiguitySeconds;

    const double len_first = rendered.t_end_first - rendered.t_start_first;
    const double len_second = rendered.t_end_second - rendered.t_start_second;
    const double len_target = target_is_first ? len_first : len_second;
    const double len_other = target_is_first ? len_second : len_first;
    attrs.length_contrast = std::abs(len_target - len_other) >= kLengthContrastSeconds;
    attrs.target_is_shorter = len_target < len_other;
    return attrs;
}

PromptAnnotation render_prompt(const AttributeSet& attrs, TargetRole target_role, Rng& rng) {
    std::vector<PromptType> applicable;
    if (attrs.gender_contrast) {
        applicable.push_back(PromptType::gender_extract);
        applicable.push_back(PromptType::gender_remove);
    }
    if (attrs.order_defined) applicable.push_back(PromptType::order);
    if (attrs.length_contrast) applicable.push_back(PromptType::relative_length);
    if (applicable.empty()) {
        throw UnpromptableError(
            "no prompt type applies: same gender, simultaneous start, near-equal lengths");
    }

    PromptAnnotation ann;
    ann.prompt_type = applicable[rng.uniform_index(applicable.size())];
    ann.target_role = target_role;
    switch (ann.prompt_type) {
        case PromptType::gender_extract:
            ann.text = "Extract only the " + to_string(attrs.target_gender) +
                       " voice from this audio.";
            break;
        case PromptType::gender_remove:
            ann.text = "Please remove the " + to_string(attrs.other_gender) +
                       " voice from this audio.";
            break;
        case PromptType::order:
            ann.text = "Extract the voice of the speaker who spoke " + to_string(target_role) + ".";
            break;
        case PromptType::relative_length:
            ann.text = std::string("Extract the speech that contains a ") +
                       (attrs.target_is_shorter ? "shorter" : "longer") + " duration of speech.";
            break;
    }
    return ann;
}

}  // namespace porte
