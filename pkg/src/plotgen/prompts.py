"""Prompt builders for every stage of the plot pipeline.

All builders are pure string constructors.  Their wording is frozen: the
checked-in golden files under ``plotgen/golden`` are the normative output
for fixture inputs, and tests compare byte-for-byte.  Do not reword
casually — downstream models were prompted with exactly these texts.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

SUB_INDENT = "    "

_TOP_OUTLINE_INSTRUCTION = (
    "Outline the main plot points of the story using no more than 4 points, "
    "generating one point at a time. IMPORTANT: Please make sure that the story "
    "has a clear end at or before Point 4."
)
_SUB_FIRST_INSTRUCTION = (
    "List the main events that occur under this heading using no more than 4 "
    "points, starting from the beginning, generating one or two points without "
    "repeating the content of the suffix and stop."
)
_SUB_CONTINUE_INSTRUCTION = (
    "List the main events that occur under this heading using no more than 4 "
    "points, generating one or two points without repeating the content of the "
    "suffix and stop."
)
_PORTRAIT_INSTRUCTION = (
    "Use ONLY one short sentence for the following description relevant to the "
    "story, focusing on relationship between characters, occupation and "
    "experience instead of appearance. Only ONE sentence is allowed!"
)

SETTING_STEM = "The story is set in"


@dataclass(frozen=True)
class OutlineContext:
    """Pipeline state the outline builders render from.

    ``current_top_index`` is 1-based and 0 while the top level itself is
    being generated; ``characters_block`` is the numbered name+portrait
    block built by :func:`characters_block`.
    """

    premise: str
    setting: str
    characters_block: str
    existing_top_points: tuple[str, ...] = ()
    current_top_index: int = 0
    existing_sub_points_under_current: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if not 0 <= self.current_top_index <= len(self.existing_top_points):
            raise ValueError(
                f"current_top_index {self.current_top_index} outside "
                f"0..{len(self.existing_top_points)}"
            )


def characters_block(characters: Sequence[tuple[str, str]]) -> str:
    """Numbered names+portraits block substituted into outline prompts."""
    return "\n".join(
        f"{i}. {name}: {portrait}" for i, (name, portrait) in enumerate(characters, 1)
    )


def premise_prompt() -> str:
    return (
        "Write a premise for a short story in one paragraph with two to three "
        "sentences.\n\nPremise:"
    )


def setting_prompt(premise: str) -> str:
    if not premise:
        raise ValueError("premise must be non-empty")
    return (
        f"Premise: {premise}\n\n"
        f"Describe the setting of the story.\n\n"
        f"{SETTING_STEM}"
    )


def _character_list_header(premise: str, setting: str) -> list[str]:
    return [
        f"Premise: {premise}",
        "",
        f"Setting: {setting}",
        "",
        "List the names and details of all major characters.",
        "",
    ]


def character_name_prompt(
    premise: str, setting: str, previous: Sequence[tuple[str, str]]
) -> str:
    """Prompt for the next character's full name; ``previous`` holds the
    completed (name, portrait) entries."""
    parts = _character_list_header(premise, setting)
    for i, (name, portrait) in enumerate(previous, 1):
        parts += [f"{i}.", "", f"Full Name: {name}", "", f"Character Portrait: {portrait}", ""]
    parts += [f"{len(previous) + 1}.", "", "Full Name:"]
    return "\n".join(parts)


def character_portrait_prompt(
    premise: str, setting: str, previous: Sequence[tuple[str, str]], name: str
) -> str:
    """Prompt for the current character's one-sentence portrait, ending with
    the ``NAME is`` stem the completion continues."""
    parts = _character_list_header(premise, setting)
    for i, (prev_name, portrait) in enumerate(previous, 1):
        parts += [f"{i}.", "", f"Full Name: {prev_name}", "", f"Character Portrait: {portrait}", ""]
    parts += [
        f"{len(previous) + 1}.",
        "",
        f"Full Name: {name}",
        "",
        _PORTRAIT_INSTRUCTION,
        "",
        f"Character Portrait: {name} is",
    ]
    return "\n".join(parts)


def top_outline_prompt(ctx: OutlineContext) -> str:
    """Prompt for the next top-level outline point, ending with its number."""
    if ctx.current_top_index != 0:
        raise ValueError("top-level generation requires current_top_index == 0")
    parts = [
        f"Premise: {ctx.premise}",
        "",
        f"Setting: {ctx.setting}",
        "",
        f"Characters: {ctx.characters_block}",
        "",
        _TOP_OUTLINE_INSTRUCTION,
        "",
    ]
    for i, point in enumerate(ctx.existing_top_points, 1):
        parts += [f"{i}. {point}", ""]
    parts.append(f"{len(ctx.existing_top_points) + 1}.")
    return "\n".join(parts)


def sub_outline_prefix(ctx: OutlineContext) -> str:
    """Completion prefix for expanding the current top point: the outline so
    far, the expansion instruction, any finished sub-points, and the next
    sub-label stem."""
    if ctx.current_top_index < 1:
        raise ValueError("expansion requires current_top_index >= 1")
    done = ctx.existing_sub_points_under_current
    instruction = _SUB_CONTINUE_INSTRUCTION if done else _SUB_FIRST_INSTRUCTION
    parts = [
        f"Premise: {ctx.premise}",
        "",
        f"Setting: {ctx.setting}",
        "",
        f"Characters: {ctx.characters_block}",
        "",
        "Outline:",
        "",
    ]
    for i, point in enumerate(ctx.existing_top_points[: ctx.current_top_index], 1):
        parts += [f"{i}. {point}", ""]
    parts += [instruction, ""]
    for j, sub in enumerate(done):
        parts += [f"{SUB_INDENT}{chr(ord('a') + j)}. {sub}", ""]
    parts.append(f"{SUB_INDENT}{chr(ord('a') + len(done))}.")
    return "\n".join(parts)


def sub_outline_suffix(ctx: OutlineContext) -> str:
    """Subsequent top points demoted to the letters continuing the prefix
    stem; empty when expanding the final top point."""
    if ctx.current_top_index < 1:
        raise ValueError("expansion requires current_top_index >= 1")
    demoted = ctx.existing_top_points[ctx.current_top_index:]
    first_letter = len(ctx.existing_sub_points_under_current) + 1
    return "\n\n".join(
        f"{SUB_INDENT}{chr(ord('a') + first_letter + off)}. {point}"
        for off, point in enumerate(demoted)
    )


def completion_wrapper(prefix: str, suffix: str) -> str:
    """Wrap a (prefix, suffix) completion task for a chat model: instruction
    header, then the suffix block, then the prefix block, so the reply
    continues the prefix."""
    if not prefix:
        raise ValueError("prefix must be non-empty")
    if not suffix:
        raise ValueError("suffix must be non-empty")
    return (
        "Imagine you are a text completion robot. Give the output of the following "
        "task with the given suffix and prompt. Please follow the instructions below.\n"
        "\n"
        "Instructions: Your output should not contain the content of the suffix. "
        "Only use the suffix as complementary information. The output should mainly "
        "be based on the prompt. Now the suffix begins.\n"
        "\n"
        "Suffix:\n"
        "\n"
        f"{suffix}\n"
        "\n"
        "End of Suffix\n"
        "\n"
        "Now the prompt begins.\n"
        "\n"
        "Prompt:\n"
        "\n"
        f"{prefix}"
    )


def scene_annotation_prompt(ctx: OutlineContext, item_text: str) -> str:
    """Ask for an outline item's scene and involved characters.

    The pipeline's source prompts do not cover these annotations, so this
    one is our own (and the whole annotation pass is optional); the reply is
    parsed with the same tail-annotation grammar as plot text.
    """
    return (
        f"Premise: {ctx.premise}\n"
        "\n"
        f"Setting: {ctx.setting}\n"
        "\n"
        f"Characters: {ctx.characters_block}\n"
        "\n"
        f"Outline point: {item_text}\n"
        "\n"
        "Name the scene where this outline point takes place and list the "
        "characters involved in it, answering on one line in exactly this format:\n"
        "\n"
        "Scene: SCENE Characters: FIRST CHARACTER, SECOND CHARACTER"
    )
