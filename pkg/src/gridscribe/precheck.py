"""Static pre-execution scan of generated MATLAB/MATPOWER code.

Two checks run before anything reaches the interpreter: option-name typos
in ``mpoption`` calls are repaired by fuzzy matching against a convention
catalog, and ``define_constants;`` is prepended when named index constants
are used without it. A lightweight lexer masks string literals and ``%``
comments so neither check fires inside them; a full MATLAB grammar is
deliberately out of scope.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path

from . import assets

OPTION_TYPO_FIXED = "option_typo_fixed"
CONSTANTS_INJECTED = "constants_injected"
HINT = "hint"

DEFINE_CONSTANTS = "define_constants"

_IDENT_RE = re.compile(r"[A-Za-z_]\w*")
_MPOPTION_RE = re.compile(r"\bmpoption\s*\(")
_TRANSPOSE_PREDECESSORS = set(")]}'.") | set("ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789_")


@dataclass(frozen=True)
class Finding:
    kind: str
    line: int
    message: str
    before: str = ""
    after: str = ""


@dataclass(frozen=True)
class PrecheckReport:
    corrected_code: str
    findings: tuple[Finding, ...]

    @property
    def hints(self) -> tuple[str, ...]:
        return tuple(f.message for f in self.findings if f.kind == HINT)


@dataclass(frozen=True)
class ConventionCatalog:
    option_names: frozenset[str]
    constant_names: frozenset[str]

    @classmethod
    def from_file(cls, path: str | Path) -> "ConventionCatalog":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(
            option_names=frozenset(data["option_names"]),
            constant_names=frozenset(data["constant_names"]),
        )

    @classmethod
    def bundled(cls) -> "ConventionCatalog":
        data = assets.read_json("matpower_catalog.json")
        return cls(
            option_names=frozenset(data["option_names"]),
            constant_names=frozenset(data["constant_names"]),
        )


def levenshtein(a: str, b: str) -> int:
    """Classic dynamic-programming edit distance (case-sensitive)."""
    if not a:
        return len(b)
    if not b:
        return len(a)
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        cur = [i]
        for j, cb in enumerate(b, start=1):
            cost = 0 if ca == cb else 1
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + cost))
        prev = cur
    return prev[-1]


def mask_strings_and_comments(code: str) -> str:
    """Copy of the code with string and comment contents blanked out.

    Delimiters survive so offsets line up with the original. A single
    quote is a transpose (not a string opener) when it directly follows an
    identifier character or a closing bracket.
    """
    out = list(code)
    i = 0
    n = len(code)
    while i < n:
        ch = code[i]
        if ch == "%":
            j = i
            while j < n and code[j] != "\n":
                out[j] = " "
                j += 1
            i = j
        elif ch == '"' or (ch == "'" and (i == 0 or code[i - 1] not in _TRANSPOSE_PREDECESSORS)):
            quote = ch
            j = i + 1
            while j < n:
                if code[j] == quote:
                    if j + 1 < n and code[j + 1] == quote:  # doubled-quote escape
                        out[j] = " "
                        out[j + 1] = " "
                        j += 2
                        continue
                    break
                if code[j] == "\n":  # unterminated on this line; stop masking
                    break
                out[j] = " "
                j += 1
            i = j + 1
        else:
            i += 1
    return "".join(out)


def _line_of(code: str, offset: int) -> int:
    return code.count("\n", 0, offset) + 1


def _split_call_args(code: str, masked: str, open_paren: int) -> tuple[list[tuple[int, int]], int]:
    """Top-level argument spans of a call whose '(' sits at open_paren.

    Returns (spans, close_paren_index); spans are (start, end) into the
    original code. Uses the masked copy so quoted commas don't split.
    """
    depth = 0
    args: list[tuple[int, int]] = []
    start = open_paren + 1
    i = open_paren
    while i < len(code):
        ch = masked[i]
        if ch in "([{":
            depth += 1
        elif ch in ")]}":
            depth -= 1
            if depth == 0:
                if i > start or args:
                    args.append((start, i))
                return args, i
        elif ch == "," and depth == 1:
            args.append((start, i))
            start = i + 1
        i += 1
    return args, len(code)  # unbalanced call: treat rest as one arg


_STRING_LITERAL_RE = re.compile(r"^\s*'([^']*)'\s*$")


def scan_options(code: str, catalog: ConventionCatalog) -> tuple[str, list[Finding]]:
    """Repair option-name typos in mpoption calls.

    Only option-name positions are checked: with a leading string
    argument those are positions 1, 3, 5, ...; with a leading options
    struct they shift to 2, 4, 6, ... (MATPOWER's name/value pairing).
    A literal not in the catalog is replaced by its nearest entry when
    the Levenshtein distance is <= 2 and < half its length (ties pick the
    lexicographically smallest); otherwise it is reported as a hint.
    """
    findings: list[Finding] = []
    replacements: list[tuple[int, int, str]] = []
    masked = mask_strings_and_comments(code)

    for call in _MPOPTION_RE.finditer(masked):
        open_paren = call.end() - 1
        args, _ = _split_call_args(code, masked, open_paren)
        if not args:
            continue
        first_is_string = bool(_STRING_LITERAL_RE.match(code[args[0][0] : args[0][1]]))
        name_positions = range(0, len(args), 2) if first_is_string else range(1, len(args), 2)
        for pos in name_positions:
            a_start, a_end = args[pos]
            m = _STRING_LITERAL_RE.match(code[a_start:a_end])
            if not m:
                continue
            literal = m.group(1)
            if literal in catalog.option_names:
                continue
            line = _line_of(code, a_start)
            best = sorted(
                catalog.option_names,
                key=lambda name: (levenshtein(literal, name), name),
            )[0]
            dist = levenshtein(literal, best)
            if dist <= 2 and dist < len(literal) / 2:
                lit_start = a_start + code[a_start:a_end].index("'") + 1
                replacements.append((lit_start, lit_start + len(literal), best))
                findings.append(
                    Finding(
                        kind=OPTION_TYPO_FIXED,
                        line=line,
                        message=f"option '{literal}' corrected to '{best}' (edit distance {dist})",
                        before=literal,
                        after=best,
                    )
                )
            else:
                findings.append(
                    Finding(kind=HINT, line=line, message=f"unknown option '{literal}'")
                )

    corrected = code
    for start, end, text in sorted(replacements, reverse=True):
        corrected = corrected[:start] + text + corrected[end:]
    return corrected, findings


def inject_constants(code: str, catalog: ConventionCatalog) -> tuple[str, list[Finding]]:
    """Prepend ``define_constants;`` when named index constants are used
    before any define_constants statement. String and comment contents
    never trigger the injection."""
    masked = mask_strings_and_comments(code)
    first_use: int | None = None
    used: list[str] = []
    define_at: int | None = None
    for m in _IDENT_RE.finditer(masked):
        name = m.group(0)
        if name == DEFINE_CONSTANTS and define_at is None:
            define_at = m.start()
        elif name in catalog.constant_names:
            if first_use is None:
                first_use = m.start()
            if name not in used:
                used.append(name)
    if first_use is None:
        return code, []
    if define_at is not None and define_at < first_use:
        return code, []
    finding = Finding(
        kind=CONSTANTS_INJECTED,
        line=1,
        message=(
            "injected define_constants; for "
            + ", ".join(used[:5])
            + (" ..." if len(used) > 5 else "")
        ),
        after=DEFINE_CONSTANTS + ";",
    )
    return f"{DEFINE_CONSTANTS};\n{code}", [finding]


def precheck(code: str, catalog: ConventionCatalog | None = None) -> PrecheckReport:
    """Run both checks; the result is idempotent: re-running on the
    corrected code yields zero findings."""
    cat = catalog or ConventionCatalog.bundled()
    corrected, option_findings = scan_options(code, cat)
    corrected, constant_findings = inject_constants(corrected, cat)
    return PrecheckReport(
        corrected_code=corrected,
        findings=tuple(option_findings + constant_findings),
    )
