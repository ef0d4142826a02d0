"""Dataset loading, addressing, and validation.

The corpus is described by a single JSON manifest at the dataset root.
All relative paths in the manifest resolve against the manifest's own
directory, so a dataset directory can be moved or shipped as a fixture
without editing the manifest.

Ground-truth labels are encoded in screenshot filenames as
``<app_id>__<label>.png`` with label tokens ``bugfree``, ``state``,
``rendering``, ``layout``, and ``appearance``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

from PIL import Image, UnidentifiedImageError

DEFAULT_CAPTURE = (1280, 720)

FILENAME_SEPARATOR = "__"


class DatasetError(Exception):
    """A manifest or dataset file could not be loaded or parsed."""


class BugLabel(Enum):
    BUG_FREE = "bugfree"
    STATE = "state"
    RENDERING = "rendering"
    LAYOUT = "layout"
    APPEARANCE = "appearance"

    @property
    def token(self) -> str:
        return self.value

    @classmethod
    def from_token(cls, token: str) -> "BugLabel":
        for label in cls:
            if label.value == token:
                return label
        raise DatasetError(f"unknown bug label token: {token!r}")


#: The four injected bug types, in taxonomy order (excludes BUG_FREE).
INJECTED_LABELS = (
    BugLabel.STATE,
    BugLabel.RENDERING,
    BugLabel.LAYOUT,
    BugLabel.APPEARANCE,
)


class GraphicsType(Enum):
    ASSET_BASED = "asset_based"
    PROCEDURAL = "procedural"


class AppType(Enum):
    GAME = "game"
    DATA_VISUALIZATION = "data_visualization"
    VISUAL_EDITOR = "visual_editor"
    ANIMATION = "animation"


@dataclass(frozen=True)
class AppRecord:
    app_id: str
    display_name: str
    readme_texts: tuple[str, ...]
    graphics_type: GraphicsType
    app_type: AppType
    asset_image_paths: tuple[Path, ...] = ()
    readme_good: str | None = None
    readme_bad: str | None = None

    def combined_readme(self) -> str:
        """All README documents joined with one blank line between them."""
        return "\n\n".join(t.rstrip("\n") for t in self.readme_texts)

    @property
    def has_ablation_readmes(self) -> bool:
        return self.readme_good is not None and self.readme_bad is not None


@dataclass(frozen=True)
class ScreenshotRecord:
    app_id: str
    label: BugLabel
    image_path: Path
    width_px: int
    height_px: int
    cor_path: Path | None = None

    @property
    def screenshot_id(self) -> str:
        """Filename stem, e.g. ``hexfriend__layout``; unique per dataset."""
        return self.image_path.stem


@dataclass(frozen=True)
class Violation:
    record: str
    rule: str
    detail: str

    def __str__(self) -> str:
        return f"{self.record}: {self.rule}: {self.detail}"


@dataclass(frozen=True)
class Dataset:
    apps: dict[str, AppRecord]
    screenshots: tuple[ScreenshotRecord, ...]
    capture: tuple[int, int] = DEFAULT_CAPTURE
    root: Path | None = None

    def screenshots_for(self, app_id: str) -> list[ScreenshotRecord]:
        return [s for s in self.screenshots if s.app_id == app_id]

    def bugfree_screenshot(self, app_id: str) -> ScreenshotRecord | None:
        for shot in self.screenshots_for(app_id):
            if shot.label is BugLabel.BUG_FREE:
                return shot
        return None


def label_from_filename(name: str) -> BugLabel:
    """Parse the ground-truth label out of a screenshot filename."""
    stem = name[: -len(".png")] if name.endswith(".png") else name
    if FILENAME_SEPARATOR not in stem:
        raise DatasetError(
            f"screenshot filename {name!r} has no {FILENAME_SEPARATOR!r} separator"
        )
    _, token = stem.rsplit(FILENAME_SEPARATOR, 1)
    return BugLabel.from_token(token)


def filename_for(app_id: str, label: BugLabel) -> str:
    return f"{app_id}{FILENAME_SEPARATOR}{label.token}.png"


def _read_text(path: Path, context: str) -> str:
    try:
        return path.read_text(encoding="utf-8")
    except OSError as exc:
        raise DatasetError(f"{context}: cannot read {path}: {exc}") from exc


def _png_size(path: Path, context: str) -> tuple[int, int]:
    try:
        with Image.open(path) as img:
            if img.format != "PNG":
                raise DatasetError(f"{context}: {path} is not a PNG (format={img.format})")
            return img.size
    except (OSError, UnidentifiedImageError) as exc:
        raise DatasetError(f"{context}: unreadable image {path}: {exc}") from exc


def _parse_app(entry: dict, base: Path) -> AppRecord:
    try:
        app_id = entry["app_id"]
        graphics = GraphicsType(entry["graphics_type"])
        app_type = AppType(entry["app_type"])
    except KeyError as exc:
        raise DatasetError(f"app entry missing required field {exc}") from exc
    except ValueError as exc:
        raise DatasetError(f"app {entry.get('app_id', '?')!r}: {exc}") from exc

    context = f"app {app_id!r}"
    readme_texts = tuple(
        _read_text(base / p, context) for p in entry.get("readme_paths", [])
    )
    asset_paths = tuple(base / p for p in entry.get("asset_paths", []))
    for p in asset_paths:
        _png_size(p, context)

    readme_good = None
    readme_bad = None
    if "readme_good_path" in entry:
        readme_good = _read_text(base / entry["readme_good_path"], context)
    if "readme_bad_path" in entry:
        readme_bad = _read_text(base / entry["readme_bad_path"], context)

    return AppRecord(
        app_id=app_id,
        display_name=entry.get("display_name", app_id),
        readme_texts=readme_texts,
        graphics_type=graphics,
        app_type=app_type,
        asset_image_paths=asset_paths,
        readme_good=readme_good,
        readme_bad=readme_bad,
    )


def load_manifest(path: str | Path) -> Dataset:
    """Load a dataset manifest and resolve all referenced files.

    Raises DatasetError naming the offending record for missing files,
    malformed entries, dangling app references, or unreadable images.
    """
    path = Path(path)
    if not path.is_file():
        raise DatasetError(f"manifest not found: {path}")
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise DatasetError(f"malformed manifest {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise DatasetError(f"malformed manifest {path}: top level must be an object")

    base = path.parent
    apps: dict[str, AppRecord] = {}
    for entry in doc.get("apps", []):
        app = _parse_app(entry, base)
        if app.app_id in apps:
            raise DatasetError(f"duplicate app_id {app.app_id!r} in manifest")
        apps[app.app_id] = app

    capture = DEFAULT_CAPTURE
    if "capture" in doc:
        capture = (int(doc["capture"]["width"]), int(doc["capture"]["height"]))

    screenshots: list[ScreenshotRecord] = []
    for entry in doc.get("screenshots", []):
        try:
            app_id = entry["app_id"]
            file_name = entry["file"]
        except KeyError as exc:
            raise DatasetError(f"screenshot entry missing required field {exc}") from exc
        if app_id not in apps:
            raise DatasetError(
                f"screenshot {file_name!r} references unknown app_id {app_id!r}"
            )
        image_path = base / file_name
        context = f"screenshot {file_name!r}"
        width, height = _png_size(image_path, context)
        label = label_from_filename(image_path.name)
        cor_path = None
        if "cor" in entry:
            cor_path = base / entry["cor"]
            if not cor_path.is_file():
                raise DatasetError(f"{context}: COR dump not found: {cor_path}")
        screenshots.append(
            ScreenshotRecord(
                app_id=app_id,
                label=label,
                image_path=image_path,
                width_px=width,
                height_px=height,
                cor_path=cor_path,
            )
        )

    return Dataset(
        apps=apps, screenshots=tuple(screenshots), capture=capture, root=base
    )


def validate_dataset(dataset: Dataset) -> list[Violation]:
    """Check dataset invariants; returns one Violation per broken rule.

    Violations are data, not failures: an empty list means the dataset is
    structurally complete.
    """
    violations: list[Violation] = []

    for app in dataset.apps.values():
        record = f"app {app.app_id!r}"
        if app.graphics_type is GraphicsType.ASSET_BASED and not app.asset_image_paths:
            violations.append(
                Violation(record, "assets", "asset-based app has an empty asset list")
            )
        if app.graphics_type is GraphicsType.PROCEDURAL and app.asset_image_paths:
            violations.append(
                Violation(record, "assets", "procedural app lists image assets")
            )
        if (app.readme_good is None) != (app.readme_bad is None):
            violations.append(
                Violation(
                    record,
                    "ablation-readmes",
                    "readme_good and readme_bad must both be present or both absent",
                )
            )

    for shot in dataset.screenshots:
        record = f"screenshot {shot.screenshot_id!r}"
        if shot.app_id not in dataset.apps:
            violations.append(
                Violation(record, "app-reference", f"unknown app_id {shot.app_id!r}")
            )
        if (shot.width_px, shot.height_px) != dataset.capture:
            violations.append(
                Violation(
                    record,
                    "capture-size",
                    f"expected {dataset.capture[0]}x{dataset.capture[1]}, "
                    f"got {shot.width_px}x{shot.height_px}",
                )
            )

    for app_id in dataset.apps:
        seen: dict[BugLabel, int] = {}
        for shot in dataset.screenshots_for(app_id):
            seen[shot.label] = seen.get(shot.label, 0) + 1
        missing = [label.token for label in BugLabel if label not in seen]
        duplicated = [label.token for label, n in seen.items() if n > 1]
        if missing:
            violations.append(
                Violation(
                    f"app {app_id!r}",
                    "incomplete-label-set",
                    f"missing screenshots for labels: {', '.join(missing)}",
                )
            )
        if duplicated:
            violations.append(
                Violation(
                    f"app {app_id!r}",
                    "duplicate-label",
                    f"more than one screenshot for labels: {', '.join(duplicated)}",
                )
            )

    return violations
