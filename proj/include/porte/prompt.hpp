#pragma once

#include <string>

#include "porte/mixgen.hpp"
#include "porte/rng.hpp"

namespace porte {

enum class PromptType { gender_extract, gender_remove, order, relative_length };

std::string to_string(PromptType t);
PromptType prompt_type_from_string(const std::string& s);

// Mixture-observable facts a prompt may be built from.
struct AttributeSet {
    bool gender_contrast = false;  // the two speakers differ in gender
    bool order_defined = false;    // start times differ by at least 50 ms
    bool length_contrast = false;  // durations differ by at least 0.5 s
    Gender target_gender = Gender::male;
    Gender other_gender = Gender::male;
    bool target_is_shorter = false;

    bool any_applicable() const { return gender_contrast || order_defined || length_contrast; }
};

struct PromptAnnotation {
    PromptType prompt_type = PromptType::gender_extract;
    std::string text;
    TargetRole target_role = TargetRole::first;
};

constexpr double kOrderAmbiguitySeconds = 0.050;
constexpr double kLengthContrastSeconds = 0.5;

AttributeSet derive_attributes(const RenderedMixture& rendered, const MixturePlan& plan);

// Picks a prompt type uniformly among the applicable ones and fills the
// template slots from the attributes. For the remove phrasing the named
// gender is the non-target speaker's. Throws UnpromptableError when no
// type applies; callers resample the plan.
PromptAnnotation render_prompt(const AttributeSet& attrs, TargetRole target_role, Rng& rng);

}  // namespace porte
