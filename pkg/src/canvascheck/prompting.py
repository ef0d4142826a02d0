"""Prompt templates and chat-message assembly for each strategy.

Templates live as UTF-8 resources under ``canvascheck/templates`` and are
rendered by substituting the single ``{README}`` placeholder. Rendering is
pure: identical inputs produce identical bytes.

A strategy is realized as an ordered message sequence. Single-message
strategies send one user turn carrying the rendered text plus the test
screenshot. The two reference-screenshot strategies send three turns: a
user turn with the rendered text and the bug-free screenshot (plus asset
images when assets are part of the context), a fixed assistant turn, and
a final user turn with the follow-up question and the test screenshot.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from enum import Enum
from importlib import resources
from pathlib import Path

from .dataset import AppRecord, BugLabel, GraphicsType, ScreenshotRecord


class PromptError(Exception):
    """A strategy cannot be applied to the given app or screenshot."""


class PromptStrategy(Enum):
    NO_CONTEXT = "no-context"
    README = "readme"
    README_PLUS_BUG_DESCRIPTIONS = "readme-plus-bug-descriptions"
    ALL_CONTEXT_EXCEPT_ASSETS = "all-context-except-assets"
    ALL_CONTEXT = "all-context"
    README_GOOD = "readme-good"
    README_BAD = "readme-bad"

    @property
    def cli_name(self) -> str:
        return self.value

    @classmethod
    def from_cli_name(cls, name: str) -> "PromptStrategy":
        for strategy in cls:
            if strategy.value == name:
                return strategy
        known = ", ".join(s.value for s in cls)
        raise PromptError(f"unknown strategy {name!r} (known: {known})")

    @property
    def uses_reference_screenshot(self) -> bool:
        return self in (
            PromptStrategy.ALL_CONTEXT_EXCEPT_ASSETS,
            PromptStrategy.ALL_CONTEXT,
        )

    @property
    def is_ablation(self) -> bool:
        return self in (PromptStrategy.README_GOOD, PromptStrategy.README_BAD)


#: Core strategies evaluated on the full corpus (ablations excluded).
CORE_STRATEGIES = (
    PromptStrategy.NO_CONTEXT,
    PromptStrategy.README,
    PromptStrategy.README_PLUS_BUG_DESCRIPTIONS,
    PromptStrategy.ALL_CONTEXT_EXCEPT_ASSETS,
    PromptStrategy.ALL_CONTEXT,
)

_TEMPLATE_FILES = {
    PromptStrategy.NO_CONTEXT: "no_context.txt",
    PromptStrategy.README: "readme.txt",
    PromptStrategy.README_PLUS_BUG_DESCRIPTIONS: "readme_bug_descriptions.txt",
    PromptStrategy.ALL_CONTEXT_EXCEPT_ASSETS: "all_context_except_assets.txt",
    PromptStrategy.ALL_CONTEXT: "all_context.txt",
    # ablation strategies reuse the README template with substituted text
    PromptStrategy.README_GOOD: "readme.txt",
    PromptStrategy.README_BAD: "readme.txt",
}

README_PLACEHOLDER = "{README}"


def _resource(name: str) -> str:
    return (
        resources.files("canvascheck")
        .joinpath("templates")
        .joinpath(name)
        .read_text(encoding="utf-8")
    )


def template_text(strategy: PromptStrategy) -> str:
    """The raw (unrendered) template resource for a strategy."""
    return _resource(_TEMPLATE_FILES[strategy])


def mocked_assistant_text() -> str:
    return _resource("mocked_response.txt")


def followup_text() -> str:
    return _resource("followup.txt")


def extraction_instruction_text() -> str:
    return _resource("extraction_instruction.txt")


def render_template(strategy: PromptStrategy, readme: str) -> str:
    """Render a strategy's template with the README substituted in."""
    return template_text(strategy).replace(README_PLACEHOLDER, readme)


@dataclass(frozen=True)
class TextPart:
    text: str


@dataclass(frozen=True)
class ImagePart:
    path: Path
    media_type: str = "image/png"


Part = TextPart | ImagePart


@dataclass(frozen=True)
class ChatMessage:
    role: str
    parts: tuple[Part, ...]

    def __post_init__(self) -> None:
        if self.role not in ("user", "assistant"):
            raise PromptError(f"invalid message role {self.role!r}")
        if self.role == "assistant":
            if len(self.parts) != 1 or not isinstance(self.parts[0], TextPart):
                raise PromptError(
                    "assistant messages must contain exactly one text part"
                )

    @property
    def image_parts(self) -> list[ImagePart]:
        return [p for p in self.parts if isinstance(p, ImagePart)]


@dataclass(frozen=True)
class PromptBundle:
    strategy: PromptStrategy
    app_id: str
    screenshot: ScreenshotRecord
    messages: tuple[ChatMessage, ...]

    def digest(self) -> str:
        """Stable content digest over roles, texts, and image bytes."""
        payload = []
        for message in self.messages:
            parts = []
            for part in message.parts:
                if isinstance(part, TextPart):
                    parts.append({"text": part.text})
                else:
                    image_hash = hashlib.sha256(part.path.read_bytes()).hexdigest()
                    parts.append({"image": image_hash, "media_type": part.media_type})
            payload.append({"role": message.role, "parts": parts})
        canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def _readme_for(strategy: PromptStrategy, app: AppRecord) -> str:
    if strategy is PromptStrategy.README_GOOD:
        if app.readme_good is None:
            raise PromptError(f"app {app.app_id!r} has no ablation README (good)")
        return app.readme_good
    if strategy is PromptStrategy.README_BAD:
        if app.readme_bad is None:
            raise PromptError(f"app {app.app_id!r} has no ablation README (bad)")
        return app.readme_bad
    return app.combined_readme()


def _check_image(path: Path) -> Path:
    if not path.is_file():
        raise PromptError(f"image not found: {path}")
    return path


def build_messages(
    strategy: PromptStrategy,
    app: AppRecord,
    test: ScreenshotRecord,
    bugfree: ScreenshotRecord | None = None,
) -> PromptBundle:
    """Assemble the ordered message sequence for one (strategy, screenshot)."""
    if test.app_id != app.app_id:
        raise PromptError(
            f"screenshot {test.screenshot_id!r} does not belong to app {app.app_id!r}"
        )

    if strategy is PromptStrategy.ALL_CONTEXT:
        if app.graphics_type is not GraphicsType.ASSET_BASED:
            raise PromptError(
                f"strategy {strategy.cli_name} requires asset-based graphics; "
                f"app {app.app_id!r} is procedural"
            )
        if not app.asset_image_paths:
            raise PromptError(f"app {app.app_id!r} has no image assets")

    rendered = render_template(strategy, _readme_for(strategy, app))

    if not strategy.uses_reference_screenshot:
        messages = (
            ChatMessage(
                role="user",
                parts=(TextPart(rendered), ImagePart(_check_image(test.image_path))),
            ),
        )
        return PromptBundle(strategy, app.app_id, test, messages)

    if bugfree is None:
        raise PromptError(
            f"strategy {strategy.cli_name} requires a bug-free reference screenshot"
        )
    if bugfree.label is not BugLabel.BUG_FREE:
        raise PromptError(
            f"reference screenshot {bugfree.screenshot_id!r} is not bug-free"
        )
    if bugfree.app_id != app.app_id:
        raise PromptError(
            f"reference screenshot {bugfree.screenshot_id!r} belongs to a different app"
        )

    first_parts: list[Part] = [TextPart(rendered), ImagePart(_check_image(bugfree.image_path))]
    if strategy is PromptStrategy.ALL_CONTEXT:
        first_parts.extend(
            ImagePart(_check_image(p)) for p in app.asset_image_paths
        )

    messages = (
        ChatMessage(role="user", parts=tuple(first_parts)),
        ChatMessage(role="assistant", parts=(TextPart(mocked_assistant_text()),)),
        ChatMessage(
            role="user",
            parts=(
                TextPart(followup_text()),
                ImagePart(_check_image(test.image_path)),
            ),
        ),
    )
    return PromptBundle(strategy, app.app_id, test, messages)


def is_applicable(strategy: PromptStrategy, app: AppRecord) -> tuple[bool, str]:
    """Whether a strategy can run against an app, with a reason when not."""
    if strategy is PromptStrategy.ALL_CONTEXT:
        if app.graphics_type is not GraphicsType.ASSET_BASED:
            return False, "app uses procedural graphics"
        if not app.asset_image_paths:
            return False, "app has no image assets"
    if strategy.is_ablation and not app.has_ablation_readmes:
        return False, "app has no ablation READMEs"
    return True, ""
