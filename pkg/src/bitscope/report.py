"""Range and accuracy tables: text for the terminal, CSV and figures for files.

``table1`` lists per-part value ranges from a profile.  ``table3`` and
``table4`` list per-part configurations with their relative accuracy, taken
from an evaluation sweep or an exploration report; ``table3`` keeps the rows
that use only floating-point families, ``table4`` the rows with at least one
fixed-point (or binary) part.
"""

from __future__ import annotations

import csv
import io
from pathlib import Path
from typing import Optional

from .errors import DataError
from .profiler import RangeProfile, required_exponent_bits, required_integral_bits

STYLES = ("table1", "table3", "table4")
FLOAT_FAMILIES = ("FL", "I")


def _r2(x: float) -> float:
    return round(float(x), 2) + 0.0


def range_rows(profile: RangeProfile) -> list:
    rows = []
    for p in profile.parts:
        lo, hi = p.range
        row = {"part": p.name, "min": _r2(lo), "max": _r2(hi),
               "integral_bits": required_integral_bits(lo, hi) if lo <= hi else 0,
               "exponent_bits": required_exponent_bits(lo, hi) if lo <= hi else 2}
        for cat in ("w", "b", "a"):
            r = getattr(p, cat)
            if r[0] <= r[1]:
                row[f"{cat}_min"], row[f"{cat}_max"] = _r2(r[0]), _r2(r[1])
        rows.append(row)
    return rows


def _family(notation: str) -> str:
    return notation.split("(")[0] if "(" in notation else notation.split(";")[0]


def _row(names, configs, acc, baseline, source, selected=False) -> dict:
    rel = 100.0 * acc / baseline if baseline else float("nan")
    return {"configs": list(configs), "accuracy": round(float(acc), 4),
            "relative_pct": _r2(rel), "source": source, "selected": bool(selected)}


def accuracy_rows(doc: dict) -> tuple:
    """(part names, rows) from a sweep document or an exploration report."""
    try:
        kind = doc.get("kind")
        names = list(doc["plan"]["names"])
        base = float(doc["baseline_accuracy"])
        rows = []
        if kind == "sweep":
            for r in doc["rows"]:
                rows.append(_row(names, r["configs"], r["accuracy"], base, "sweep"))
        elif kind == "exploration-report":
            full = "FL(8,23)"
            p1 = doc["pass1"]["configs"]
            p2 = doc["pass2"]["configs"] if doc.get("pass2") else None
            for part in doc["parts"]:
                p = part["part"]
                for t in part["pass1"]["trials"]:
                    cfg = p1[:p] + [t["config"]] + [full] * (len(names) - p - 1)
                    rows.append(_row(names, cfg, t["accuracy"], base, f"pass1:{names[p]}"))
                if p2 is not None and "pass2" in part:
                    for t in part["pass2"]["trials"]:
                        cfg = p2[:p] + [t["config"]] + p1[p + 1:]
                        rows.append(_row(names, cfg, t["accuracy"], base, f"pass2:{names[p]}"))
            final = [c["notation"] for c in doc["final"]["configs"]]
            rows.append(_row(names, final, doc["final"]["accuracy"], base, "final", selected=True))
        else:
            raise DataError(f"expected a sweep or exploration report, got kind={kind!r}")
        return names, rows
    except (KeyError, TypeError, ValueError, AttributeError) as exc:
        raise DataError(f"malformed report input: {exc}") from None


def filter_rows(rows: list, style: str) -> list:
    def floaty(r):
        return all(_family(c) in FLOAT_FAMILIES for c in r["configs"])
    if style == "table3":
        return [r for r in rows if floaty(r)]
    return [r for r in rows if not floaty(r)]


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.2f}"
    return "" if v is None else str(v)


def text_table(headers: list, rows: list) -> str:
    cells = [[_fmt(v) for v in r] for r in rows]
    widths = [max([len(h)] + [len(c[k]) for c in cells]) for k, h in enumerate(headers)]
    line = "  ".join(h.ljust(w) for h, w in zip(headers, widths))
    out = [line, "  ".join("-" * w for w in widths)]
    out += ["  ".join(c.ljust(w) for c, w in zip(r, widths)) for r in cells]
    return "\n".join(out) + "\n"


def csv_text(headers: list, rows: list) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(headers)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue()


def build(style: str, doc: dict) -> dict:
    """Headers, table rows and the JSON payload of one report style."""
    if style not in STYLES:
        raise DataError(f"unknown style {style!r}; choose from {', '.join(STYLES)}")
    if style == "table1":
        prof = RangeProfile.from_dict(doc)
        rows = range_rows(prof)
        headers = ["part", "min", "max", "w_min", "w_max", "b_min", "b_max", "a_min", "a_max",
                   "integral_bits", "exponent_bits"]
        table = [[r.get(h) for h in headers] for r in rows]
        return {"headers": headers, "table": table, "json": {"style": style, "rows": rows}}
    names, rows = accuracy_rows(doc)
    rows = filter_rows(rows, style)
    headers = names + ["relative_accuracy", "source"]
    table = [r["configs"] + [f"{r['relative_pct']:.2f}%", r["source"] + (" *" if r["selected"] else "")]
             for r in rows]
    return {"headers": headers, "table": table, "json": {"style": style, "parts": names, "rows": rows},
            "names": names, "rows": rows}


def render(style: str, doc: dict, out_dir: Optional[Path] = None) -> dict:
    """Build a report; with ``out_dir`` also write ``<style>.csv`` and ``<style>.png``."""
    rep = build(style, doc)
    rep["text"] = text_table(rep["headers"], rep["table"])
    if out_dir is not None:
        from . import plotting
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / f"{style}.csv").write_text(csv_text(rep["headers"], rep["table"]))
        fig = out_dir / f"{style}.png"
        if style == "table1":
            plotting.plot_ranges(rep["json"]["rows"], fig)
        else:
            title = "Floating-point configurations" if style == "table3" else "Fixed-point configurations"
            plotting.plot_accuracy(rep["rows"], list(range(len(rep["names"]))), fig, title)
        rep["files"] = [str(out_dir / f"{style}.csv"), str(fig)]
    return rep
