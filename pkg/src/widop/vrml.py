"""VRML 2.0 scene export for annotated bounding boxes.

Every individual carrying a box becomes one Transform/Shape/Box node,
colored by its most specific domain class.  Output is deterministic:
individuals appear in lexicographic order and numbers use %.6g.
"""

from __future__ import annotations

from .geometry import Box3
from .kb import KnowledgeBase

Color = tuple[float, float, float]

DEFAULT_COLOR: Color = (0.7, 0.7, 0.7)

_PALETTE: dict[str, Color] = {
    "Mast": (0.55, 0.27, 0.07),
    "BigMast": (0.65, 0.16, 0.16),
    "NormalMast": (0.82, 0.41, 0.12),
    "Signals": (0.0, 0.55, 0.0),
    "MainSignal": (0.0, 0.8, 0.0),
    "DistantSignal": (0.6, 0.8, 0.2),
    "SecondarySignal": (0.13, 0.55, 0.13),
    "Vorsignalbake": (0.2, 0.8, 0.6),
    "Breakpoint_table": (0.0, 0.6, 0.5),
    "Chess_board": (0.5, 0.9, 0.3),
    "Schaltanlage": (0.25, 0.41, 0.88),
    "Schalthaus": (0.12, 0.56, 1.0),
    "SchaltSchrank": (0.0, 0.75, 1.0),
}


def default_colormap() -> dict[str, Color]:
    return dict(_PALETTE)


def load_colormap(path) -> dict[str, Color]:
    """Read 'Class = r g b' lines; '#' starts a comment."""
    out: dict[str, Color] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'Class = r g b'")
            name, _, rest = line.partition("=")
            parts = rest.split()
            if len(parts) != 3:
                raise ValueError(f"{path}:{lineno}: expected 3 color components")
            try:
                rgb = tuple(float(p) for p in parts)
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from exc
            if not all(0.0 <= c <= 1.0 for c in rgb):
                raise ValueError(f"{path}:{lineno}: components must lie in [0, 1]")
            out[name.strip()] = rgb
    return out


def _num(value: float) -> str:
    return f"{value:.6g}"


def export_vrml(kb: KnowledgeBase, colormap: dict[str, Color] | None = None) -> str:
    """Render every box-carrying individual as a colored VRML box."""
    colors = colormap if colormap is not None else default_colormap()
    under = "DomainConcept" if kb.has_concept("DomainConcept") else None
    lines = ["#VRML V2.0 utf8", ""]
    for ind, geom in kb.geometry_items():
        if not isinstance(geom, Box3):
            continue
        cls = kb.most_specific_class(ind, under=under)
        color = colors.get(cls, DEFAULT_COLOR) if cls is not None else DEFAULT_COLOR
        cx, cy, cz = geom.centroid
        # Box size fields must stay strictly positive, so flat boxes get a
        # 1 mm slab thickness.
        ex, ey, ez = (max(e, 0.001) for e in geom.extents)
        lines.extend([
            f"# {ind}" + (f" ({cls})" if cls else ""),
            "Transform {",
            f"  translation {_num(cx)} {_num(cy)} {_num(cz)}",
            "  children [",
            "    Shape {",
            "      appearance Appearance {",
            "        material Material {",
            f"          diffuseColor {_num(color[0])} {_num(color[1])} {_num(color[2])}",
            "        }",
            "      }",
            f"      geometry Box {{ size {_num(ex)} {_num(ey)} {_num(ez)} }}",
            "    }",
            "  ]",
            "}",
            "",
        ])
    return "\n".join(lines)


def validate_vrml(text: str) -> list[str]:
    """Structural diagnostics for a VRML document; empty means clean.

    Checks the header, brace/bracket balance outside comments, and that
    every translation/size line carries three finite numbers.
    """
    problems: list[str] = []
    lines = text.splitlines()
    if not lines or lines[0].strip() != "#VRML V2.0 utf8":
        problems.append("missing '#VRML V2.0 utf8' header line")
    depth_brace = 0
    depth_bracket = 0
    for lineno, line in enumerate(lines, start=1):
        code = line.split("#", 1)[0]
        for ch in code:
            if ch == "{":
                depth_brace += 1
            elif ch == "}":
                depth_brace -= 1
                if depth_brace < 0:
                    problems.append(f"line {lineno}: unmatched '}}'")
                    depth_brace = 0
            elif ch == "[":
                depth_bracket += 1
            elif ch == "]":
                depth_bracket -= 1
                if depth_bracket < 0:
                    problems.append(f"line {lineno}: unmatched ']'")
                    depth_bracket = 0
        stripped = code.strip()
        for keyword, count in (("translation", 3), ("diffuseColor", 3)):
            if stripped.startswith(keyword):
                fields = stripped.split()[1:]
                if len(fields) != count or not all(_is_number(f) for f in fields):
                    problems.append(f"line {lineno}: {keyword} needs "
                                    f"{count} numbers")
        if "size" in stripped.split():
            tokens = stripped.split()
            fields = tokens[tokens.index("size") + 1:][:3]
            if (len(fields) != 3 or not all(_is_number(f) for f in fields)
                    or any(float(f) <= 0.0 for f in fields)):
                problems.append(f"line {lineno}: size needs 3 positive numbers")
    if depth_brace != 0:
        problems.append(f"unbalanced braces (depth {depth_brace} at end)")
    if depth_bracket != 0:
        problems.append(f"unbalanced brackets (depth {depth_bracket} at end)")
    return problems


def _is_number(text: str) -> bool:
    try:
        value = float(text)
    except ValueError:
        return False
    return value == value and abs(value) != float("inf")
