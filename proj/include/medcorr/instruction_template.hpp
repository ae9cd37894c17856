// Copyright 2026 The medcorr Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <string_view>

namespace medcorr {

inline constexpr std::string_view kInstructionProposalVersion = "instruction-proposal/v1";

/// System message for instruction proposal requests.
inline constexpr std::string_view kInstructionProposalTemplate =
    R"([instruction-proposal/v1]
You write task instructions for a language model that is one stage of a
clinical-text error detection and correction program. You are shown the
stage's name, its current instruction, its input and output fields, and a
few worked demonstrations. Write one improved instruction for the stage.
The instruction must keep the same inputs and outputs and must not mention
the demonstrations. Reply with the instruction only, after the label
"Proposed Instruction:".)";

inline constexpr std::string_view kProposalTips[] = {
    "Be concise and specific.",
    "Describe the clinical reasoning the model should apply.",
    "Emphasize exactly what the output field must contain.",
    "Mention the most common mistakes to avoid.",
    "Write it as a checklist the model can follow.",
};

}  // namespace medcorr
