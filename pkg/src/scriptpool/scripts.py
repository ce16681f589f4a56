"""Writing-script identification from Unicode block membership.

Scripts are small integers (stable, one per boundary predictor). Three are
built in -- Latin, Cyrillic, Indic (Brahmic) -- and a registry lets callers
add more by listing the Unicode block ranges their letters occupy. ASCII
whitespace, digits and punctuation are script-neutral.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import AmbiguousScriptError, UnknownScriptError

ScriptId = int

LATIN: ScriptId = 0
CYRILLIC: ScriptId = 1
INDIC: ScriptId = 2

# Letter block ranges per built-in script (inclusive codepoint bounds).
# ASCII letters count toward Latin; the Indic entry covers the Brahmic
# blocks used here (Devanagari, Bengali, Telugu).
_LATIN_BLOCKS = [
    (0x0041, 0x005A), (0x0061, 0x007A),  # Basic Latin letters
    (0x00C0, 0x00FF),                    # Latin-1 Supplement letters
    (0x0100, 0x024F),                    # Latin Extended-A/B
]
_CYRILLIC_BLOCKS = [
    (0x0400, 0x04FF), (0x0500, 0x052F),
]
_INDIC_BLOCKS = [
    (0x0900, 0x097F),  # Devanagari
    (0x0980, 0x09FF),  # Bengali
    (0x0C00, 0x0C7F),  # Telugu
]

# Fraction of letters allowed to belong to a runner-up script before the
# text is rejected as mixed.
_SECONDARY_LIMIT = 0.10


@dataclass
class ScriptRegistry:
    """Ordered table of scripts and the codepoint blocks that define them."""

    names: list[str] = field(default_factory=lambda: ["latin", "cyrillic", "indic"])
    blocks: list[list[tuple[int, int]]] = field(
        default_factory=lambda: [list(_LATIN_BLOCKS), list(_CYRILLIC_BLOCKS), list(_INDIC_BLOCKS)]
    )

    def register(self, name: str, blocks: list[tuple[int, int]]) -> ScriptId:
        if name in self.names:
            raise ValueError(f"script {name!r} already registered")
        self.names.append(name)
        self.blocks.append(list(blocks))
        return len(self.names) - 1

    def __len__(self) -> int:
        return len(self.names)

    def name_of(self, script: ScriptId) -> str:
        return self.names[script]

    def id_of(self, name: str) -> ScriptId:
        try:
            return self.names.index(name.lower())
        except ValueError:
            raise UnknownScriptError(f"no script named {name!r}") from None

    def script_of_codepoint(self, cp: int) -> ScriptId | None:
        """Script owning a letter codepoint, None if unclaimed."""
        for sid, ranges in enumerate(self.blocks):
            for lo, hi in ranges:
                if lo <= cp <= hi:
                    return sid
        return None


DEFAULT_REGISTRY = ScriptRegistry()


def _is_neutral(cp: int) -> bool:
    # ASCII that is not a letter: whitespace, digits, punctuation, controls.
    return cp < 0x80 and not (0x41 <= cp <= 0x5A or 0x61 <= cp <= 0x7A)


def detect_script(text: str, registry: ScriptRegistry = DEFAULT_REGISTRY) -> ScriptId:
    """Classify text by the script covering the majority of its letters.

    Raises UnknownScriptError for codepoints outside every configured block
    (or text with no letters at all), and AmbiguousScriptError when a second
    script ties the winner or claims more than 10% of the letters.
    """
    if not text:
        raise ValueError("empty text")
    counts = [0] * len(registry)
    for ch in text:
        cp = ord(ch)
        if _is_neutral(cp):
            continue
        sid = registry.script_of_codepoint(cp)
        if sid is None:
            raise UnknownScriptError(f"codepoint U+{cp:04X} ({ch!r}) outside configured scripts")
        counts[sid] += 1
    total = sum(counts)
    if total == 0:
        raise UnknownScriptError("text has no letter codepoints to classify")
    order = sorted(range(len(counts)), key=lambda s: counts[s], reverse=True)
    winner, second = order[0], order[1] if len(order) > 1 else None
    if second is not None and counts[second] > 0:
        if counts[second] == counts[winner]:
            raise AmbiguousScriptError(
                f"scripts {registry.name_of(winner)} and {registry.name_of(second)} tie"
            )
        if counts[second] > _SECONDARY_LIMIT * total:
            raise AmbiguousScriptError(
                f"{counts[second]}/{total} letters belong to secondary script "
                f"{registry.name_of(second)}"
            )
    return winner
