"""Analysis reports: JSON documents and their text rendering."""

from __future__ import annotations

import json
from importlib import resources
from typing import Optional

from .concrete import OracleVerdict
from .engine import AnalysisConfig, SecureUpTo, UnknownStatus, Verdict

SCHEMA_VERSION = "1.0"


def load_schema() -> dict:
    with resources.files("relse").joinpath("schema/report.schema.json").open(encoding="utf-8") as fh:
        return json.load(fh)


def validate_report(doc: dict) -> None:
    """Raise jsonschema.ValidationError unless ``doc`` matches the schema."""
    import jsonschema

    jsonschema.validate(doc, load_schema())


def verdict_json(v: Verdict) -> dict:
    st = v.status
    out = {"status": st.name}
    if isinstance(st, SecureUpTo):
        out.update(k=st.k, exhaustive=st.exhaustive)
    elif isinstance(st, UnknownStatus):
        out["reason"] = st.reason
    return out


def oracle_json(o: OracleVerdict, agrees: Optional[bool] = None) -> dict:
    return {
        "status": o.status,
        "k": o.k,
        "bits": o.bits,
        "runs": o.runs,
        "witness": o.witness.to_json() if o.witness else None,
        "agrees": agrees,
    }


def analysis_report(program: str, cfg: AnalysisConfig, v: Verdict,
                    oracle: Optional[dict] = None) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "kind": "analysis",
        "program": program,
        "config": cfg.to_json(),
        "verdict": verdict_json(v),
        "violations": [x.to_json() for x in v.violations],
        "metrics": v.stats.to_json(),
        "oracle": oracle,
    }


def oracle_report(program: str, o: OracleVerdict, engine: Optional[Verdict] = None,
                  agrees: Optional[bool] = None) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "kind": "oracle",
        "program": program,
        "oracle": oracle_json(o, agrees),
        "engine": verdict_json(engine) if engine is not None else None,
    }


def oracle_batch_report(docs: list[dict]) -> dict:
    return {"schema_version": SCHEMA_VERSION, "kind": "oracle-batch", "reports": docs}


def bench_report(corpus: str, programs: int, rows: list[dict]) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "kind": "bench",
        "corpus": corpus,
        "programs": programs,
        "rows": rows,
    }


# -- text ---------------------------------------------------------------------

def metrics_line(m: dict) -> str:
    return (f"#I={m['instrs']} #I/s={m['instrs_per_sec']:.0f} #Q={m['queries_total']} "
            f"Qe={m['queries_explore']} Qi={m['queries_insecurity']} "
            f"T={m['time_total']:.3f}s timeouts={m['timeouts']}")


def render_analysis(doc: dict) -> str:
    v = doc["verdict"]
    cfg = doc["config"]
    head = f"{doc['program']}: {v['status'].upper()} (mode {cfg['mode']}"
    if v["status"] == "secure":
        head += f", up to k={v['k']}" + (", all paths halted" if v.get("exhaustive") else "")
    elif v["status"] == "unknown":
        head += f", {v['reason']}"
    lines = [head + ")"]
    for x in doc["violations"]:
        where = f"  violation: {x['kind']} at {x['loc']}"
        if x["packed"]:
            where += f" (block {', '.join(map(str, x['block_locs']))})"
        where += "" if x["validated"] else "  [REPLAY FAILED]"
        lines.append(where)
        vals = " ".join(f"{k}={b['value']}" for k, b in sorted(x["model"].items()))
        lines.append(f"    model: {vals}" if vals else "    model: (empty)")
    lines.append("  " + metrics_line(doc["metrics"]))
    if doc.get("oracle"):
        o = doc["oracle"]
        lines.append(f"  oracle: {o['status']} (k={o['k']}, {o['bits']} bits), agrees={o['agrees']}")
    return "\n".join(lines)


def render_oracle(doc: dict) -> str:
    o = doc["oracle"]
    lines = [f"{doc['program']}: {o['status']} up to k={o['k']} ({o['bits']} bits per input, {o['runs']} runs)"]
    w = o["witness"]
    if w:
        lines.append(f"  low inputs: {w['low']}")
        lines.append(f"  secrets: {w['high_a']} vs {w['high_b']}")
        i = w["divergence"]
        a = w["leak_a"][i] if i < len(w["leak_a"]) else "(end)"
        b = w["leak_b"][i] if i < len(w["leak_b"]) else "(end)"
        lines.append(f"  first divergence at observation {i}: {a} vs {b}")
    if doc.get("engine"):
        lines.append(f"  engine: {doc['engine']['status']}, agrees={o['agrees']}")
    return "\n".join(lines)


BENCH_COLUMNS = ("mode", "#I", "#I/s", "#Q", "Qe", "Qi", "T", "timeouts", "secure", "insecure", "unknown")


def render_bench(doc: dict) -> str:
    rows = [BENCH_COLUMNS]
    for r in doc["rows"]:
        rows.append((r["mode"], str(r["instrs"]), f"{r['instrs_per_sec']:.0f}", str(r["queries_total"]),
                     str(r["queries_explore"]), str(r["queries_insecurity"]), f"{r['time_total']:.2f}",
                     str(r["timeouts"]), str(r["secure"]), str(r["insecure"]), str(r["unknown"])))
    widths = [max(len(row[i]) for row in rows) for i in range(len(BENCH_COLUMNS))]
    lines = ["  ".join(c.rjust(w) for c, w in zip(row, widths)) for row in rows]
    for r in doc["rows"]:
        for m in r["mismatches"]:
            lines.append(f"MISMATCH [{r['mode']}] {m}")
    return "\n".join(lines)

