"""Mode-specific prompt templates.

Both modes share the same instruction text. Short-CoT mode additionally
prefills the assistant turn with an empty think block, which steers the
reasoning model into answering without an explicit long deliberation. The
long-CoT prompt ends at the assistant tag and lets the model open its own
think block.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from ..core import Query, ReasoningMode

INSTRUCTION = "{question}\nPlease reason step by step, and put your final answer within \\boxed{{}}."
SC_PREFILL = "<think>\n\n</think>\n\n"

# DeepSeek-R1-Distill chat tags; override via ChatFormat for other backbones.
USER_TAG = "<｜User｜>"
ASSISTANT_TAG = "<｜Assistant｜>"

_EMPTY_THINK = re.compile(r"<think>\s*</think>")


@dataclass(frozen=True)
class ChatFormat:
    user_prefix: str = USER_TAG
    assistant_prefix: str = ASSISTANT_TAG


@dataclass(frozen=True)
class PromptTemplate:
    mode: ReasoningMode
    system_preamble: str = ""
    assistant_prefill: str = ""
    instruction: str = INSTRUCTION
    chat: ChatFormat = ChatFormat()

    def __post_init__(self):
        if self.mode is ReasoningMode.SC and not _EMPTY_THINK.search(self.assistant_prefill):
            raise ValueError("short-CoT prefill must contain an empty <think></think> block")
        if self.mode is ReasoningMode.LC and self.assistant_prefill:
            raise ValueError("long-CoT template must not prefill the assistant turn")

    def render(self, question: str) -> str:
        instruction = self.instruction.format(question=question)
        return (
            f"{self.system_preamble}{self.chat.user_prefix}{instruction}"
            f"{self.chat.assistant_prefix}{self.assistant_prefill}"
        )


SC_TEMPLATE = PromptTemplate(ReasoningMode.SC, assistant_prefill=SC_PREFILL)
LC_TEMPLATE = PromptTemplate(ReasoningMode.LC)
DEFAULT_TEMPLATES = {ReasoningMode.SC: SC_TEMPLATE, ReasoningMode.LC: LC_TEMPLATE}


@dataclass(frozen=True)
class RenderedPrompt:
    text: str
    mode: ReasoningMode
    question: str
    query_id: str = ""


def render_prompt(
    query: Query,
    mode: ReasoningMode,
    templates: dict[ReasoningMode, PromptTemplate] = DEFAULT_TEMPLATES,
) -> RenderedPrompt:
    return RenderedPrompt(templates[mode].render(query.text), mode, query.text, query.id)


def detect_mode(prompt_text: str) -> ReasoningMode:
    """Infer the mode a prompt induces from its trailing prefill."""
    tail = prompt_text.rstrip()
    return ReasoningMode.SC if tail.endswith("</think>") and _EMPTY_THINK.search(tail[-64:]) else ReasoningMode.LC
