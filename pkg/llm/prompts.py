"""Prompt templates for URL extraction and threat-intelligence summaries.

The template texts are constants so a given (code, style) pair always renders
to the same bytes.
"""
from dataclasses import dataclass
from enum import Enum
from typing import Dict, List, Optional

from llm.errors import PromptTooLarge

CODE_SLOT = "{CODE}"

Message = Dict[str, str]


class PromptStyle(str, Enum):
    """Chat framing expected by the target model family."""
    SYSTEM_USER = "system-user"
    INST_SYS = "inst-sys"


@dataclass(frozen=True)
class PromptTemplate:
    """A system text plus a user text with a single ``{CODE}`` slot.

    Attributes:
        style: Framing used by ``render``
        system_text: Instructions placed in the system role (or ``<<SYS>>`` block)
        user_text_with_code_slot: User request containing ``CODE_SLOT`` once
    """
    style: PromptStyle
    system_text: str
    user_text_with_code_slot: str

    def __post_init__(self):
        if self.user_text_with_code_slot.count(CODE_SLOT) != 1:
            raise ValueError("user text must contain exactly one code slot")

    def render(self, code: str) -> List[Message]:
        """Messages for ``code`` in this template's framing."""
        fenced = "```\n" + code + "\n```"
        user = self.user_text_with_code_slot.replace(CODE_SLOT, fenced)
        if self.style == PromptStyle.INST_SYS:
            text = f"[INST]\n<<SYS>>\n{self.system_text}\n<</SYS>>\n{user}\n[/INST]"
            return [{"role": "user", "content": text}]
        return [
            {"role": "system", "content": self.system_text},
            {"role": "user", "content": user},
        ]


# ---------------------------------------------------------------------------
# Template texts
# ---------------------------------------------------------------------------

DEOBF_SYSTEM_TEXT = (
    "You are a malware analyst. Your job is to find URLs in obfuscated code. "
    "Follow the instructions. Do not provide any explanations. Encode your responses as JSON."
)

DEOBF_INST_SYSTEM_TEXT = (
    "Follow the instructions. Do not provide any explanations. Encode your responses as JSON. "
    "Your responses must start with ```json and end with ```."
)

DEOBF_USER_TEXT = (
    "Simplify the attached powershell code before the loop. Remove the code after the loop. "
    "There are some lines with dead code, many strings are broken down to shorter ones. "
    "Process the resulting strings using concatenation and replacements, making the necessary "
    "evaluations. You will often find short strings adjacent with the plus sign, concatenate "
    "them. Then look for additions of parentheses with strings. Concatenate them too. Replace "
    "unicode characters. Now try to deobfuscate the code. There are URLs concatenated in a "
    "string which must be split with the same character, e.g., *,@. All URLS start with http "
    "or https. Return the URLs that you will find in the longest string after the operation "
    "within a json without any additional text. If you don't find URLs, return the longest "
    "string using the key kk in the returned json removing space characters and split it "
    "using * or @. The code is: " + CODE_SLOT
)

CTI_SYSTEM_TEXT = (
    "You are a malware analyst. Your job is to understand what a malicious powershell script "
    "does. Do not provide any explanations. Encode your responses as JSON."
)

CTI_USER_TEXT = (
    "Suppress all output and return only a JSON which contains the description of what the "
    "following powershell script does and the mitre att&ck methods that it uses. For each "
    "method return only the ID and the name. The code is: " + CODE_SLOT
)

# Rounds of the oversize-input reduction
STRIP_COMMENTS_USER_TEXT = (
    "Remove all comments from the attached powershell code. Do not change anything else. "
    "Return only the code without any additional text. The code is: " + CODE_SLOT
)

SHORTEN_NAMES_USER_TEXT = (
    "Rename every variable in the attached powershell code to a short name such as $v1, $v2 "
    "and so on, using the same new name for every use of a variable. Do not change anything "
    "else. Return only the code without any additional text. The code is: " + CODE_SLOT
)

REWRITE_SYSTEM_TEXT = (
    "You are a malware analyst. Follow the instructions. Do not provide any explanations."
)

DEOBF_TEMPLATES = {
    PromptStyle.SYSTEM_USER: PromptTemplate(PromptStyle.SYSTEM_USER, DEOBF_SYSTEM_TEXT, DEOBF_USER_TEXT),
    PromptStyle.INST_SYS: PromptTemplate(PromptStyle.INST_SYS, DEOBF_INST_SYSTEM_TEXT, DEOBF_USER_TEXT),
}
CTI_TEMPLATE = PromptTemplate(PromptStyle.SYSTEM_USER, CTI_SYSTEM_TEXT, CTI_USER_TEXT)
STRIP_COMMENTS_TEMPLATE = PromptTemplate(PromptStyle.SYSTEM_USER, REWRITE_SYSTEM_TEXT, STRIP_COMMENTS_USER_TEXT)
SHORTEN_NAMES_TEMPLATE = PromptTemplate(PromptStyle.SYSTEM_USER, REWRITE_SYSTEM_TEXT, SHORTEN_NAMES_USER_TEXT)


def prompt_size(messages: List[Message]) -> int:
    """Characters sent; the budget treats four characters as one token."""
    return sum(len(m["content"]) for m in messages)


def build_deobf_prompt(code: str, style=PromptStyle.SYSTEM_USER,
                       max_chars: Optional[int] = None) -> List[Message]:
    """Render the URL-extraction prompt for ``code``.

    Args:
        code: PowerShell source, non-empty
        style: ``PromptStyle`` or its string value
        max_chars: Budget for the rendered prompt; None disables the check

    Returns:
        Chat messages

    Raises:
        ValueError: If ``code`` is empty
        PromptTooLarge: If the rendered prompt exceeds ``max_chars``
    """
    return _build(DEOBF_TEMPLATES[PromptStyle(style)], code, max_chars)


def build_cti_prompt(code: str, max_chars: Optional[int] = None) -> List[Message]:
    """Render the threat-intelligence prompt for ``code``."""
    return _build(CTI_TEMPLATE, code, max_chars)


def _build(template: PromptTemplate, code: str, max_chars: Optional[int]) -> List[Message]:
    if not code or not code.strip():
        raise ValueError("code must be non-empty")
    messages = template.render(code)
    size = prompt_size(messages)
    if max_chars is not None and size > max_chars:
        raise PromptTooLarge(size, max_chars)
    return messages
