#pragma once

// The instruction sent with every question, both to remote models and as
// the prompt field of synthesized chains. Bump the version on any edit.

namespace pts {

inline constexpr const char* kPromptVersion = "pts-system-v1";

inline constexpr const char* kSystemPrompt =
    "You will see an image of flat colored shapes on a white background, followed by a "
    "question about their sizes. Work the problem out inside <think></think>, then give "
    "only the final number inside <answer></answer>.";

}  // namespace pts
