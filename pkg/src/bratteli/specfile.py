"""Ingest and emit the JSON diagram description used by the CLI.

One document describes one diagram through exactly one construction path
(dense stationary matrix, explicit sparse triplets, band rule, or
substitution rule), plus optional blocks for an edge order, a Markov
system, and a cell-kernel chain.  Unknown fields are rejected --
misspellings should fail loudly, not silently change the analysis.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

from . import cells as cl
from . import diagram as dg
from . import substitution as sb


class SpecError(Exception):
    pass


_TOP_FIELDS = {"matrix", "triplets", "band", "substitution", "depth",
               "window", "windows", "order", "markov", "kernels"}
_SUB_FIELDS = {"rules", "name", "k", "offsets_word", "alphabet", "exceptions"}
_MARKOV_FIELDS = {"q0", "edges", "from_tail_invariant", "normalization"}
_KERNEL_FIELDS = {"nu0", "chain"}
_NAMED_SUBSTITUTIONS = {
    "fibonacci": sb.fibonacci,
    "odometer": sb.odometer,
    "drunkard_walk": sb.drunkard_walk,
    "nat_length_two": sb.nat_length_two,
}


@dataclass(frozen=True)
class ParsedSpec:
    diagram: dg.Diagram
    order: dg.EdgeOrder | None
    substitution: sb.Substitution | None
    markov: dict | None
    kernels: tuple | None          # (spaces, kernels) or None
    canonical: dict = field(compare=False)


def _require(cond: bool, msg: str):
    if not cond:
        raise SpecError(msg)


def _check_fields(block: dict, allowed: set, where: str):
    unknown = set(block) - allowed
    _require(not unknown, f"unknown field(s) in {where}: {sorted(unknown)}")


def _as_window(value, where: str) -> dg.Window:
    _require(isinstance(value, (list, tuple)) and len(value) in (2, 3)
             and all(isinstance(x, int) for x in value),
             f"{where} must be [lo, hi] or [lo, hi, step]")
    return dg.window_of(tuple(value))


def _parse_substitution(block) -> sb.Substitution:
    _require(isinstance(block, dict), "substitution must be an object")
    _check_fields(block, _SUB_FIELDS, "substitution")
    if "name" in block:
        _require(set(block) <= {"name", "k"}, "named substitutions take only 'k'")
        name = block["name"]
        _require(name in _NAMED_SUBSTITUTIONS,
                 f"unknown substitution name {name!r}")
        if name == "odometer":
            return _NAMED_SUBSTITUTIONS[name](int(block.get("k", 2)))
        _require("k" not in block, f"{name!r} takes no 'k'")
        return _NAMED_SUBSTITUTIONS[name]()
    if "rules" in block:
        _require(set(block) == {"rules"}, "word rules take no other fields")
        rules = block["rules"]
        _require(isinstance(rules, dict) and rules
                 and all(isinstance(k, str) and isinstance(v, str)
                         for k, v in rules.items()),
                 "rules must map letters to words")
        return sb.from_strings(rules)
    _require("offsets_word" in block, "substitution needs rules, a name, or "
             "an offsets_word")
    exceptions = {int(k): tuple(v) for k, v in
                  block.get("exceptions", {}).items()}
    return sb.band_rule(tuple(block["offsets_word"]),
                        alphabet=block.get("alphabet", "int"),
                        exceptions=exceptions)


def parse_spec(doc: dict, depth_override: int | None = None) -> ParsedSpec:
    """Validate a spec document and construct everything it describes.

    Diagram-structure violations (zero rows, window mismatches, ...)
    propagate as DiagramError subclasses so callers can report them by
    kind; schema problems raise SpecError.
    """
    _require(isinstance(doc, dict), "spec must be a JSON object")
    _check_fields(doc, _TOP_FIELDS, "spec")
    paths = [k for k in ("matrix", "triplets", "band", "substitution")
             if k in doc]
    _require(len(paths) == 1,
             f"spec must use exactly one construction, found {paths}")
    kind = paths[0]
    depth = depth_override if depth_override is not None else doc.get("depth")
    subst = None

    if kind == "triplets":
        _require(depth_override is None,
                 "--depth cannot override an explicit triplet diagram")
        _require("windows" in doc, "triplets need per-level windows")
        wins = [_as_window(w, "windows[]") for w in doc["windows"]]
        _require(len(wins) >= 2, "windows must cover levels 0..depth")
        by_level: dict[int, dict] = {}
        for t in doc["triplets"]:
            _require(isinstance(t, (list, tuple)) and len(t) == 4
                     and all(isinstance(x, int) for x in t),
                     "triplets are [level, target, source, multiplicity]")
            lvl, tgt, src, mult = t
            _require(0 <= lvl < len(wins) - 1, f"triplet level {lvl} out of range")
            by_level.setdefault(lvl, {})
            by_level[lvl][(tgt, src)] = by_level[lvl].get((tgt, src), 0) + mult
        mats = [dg.IncidenceMatrix(lvl, by_level.get(lvl, {}),
                                   wins[lvl + 1], wins[lvl])
                for lvl in range(len(wins) - 1)]
        diagram = dg.validate(mats)
    else:
        _require(isinstance(depth, int) and depth >= 1,
                 "depth must be a positive integer")
        _require("windows" not in doc, "'windows' only applies to triplets")
        if kind == "matrix":
            win = (_as_window(doc["window"], "window")
                   if "window" in doc else None)
            diagram = dg.stationary_diagram(doc["matrix"], depth, win)
        elif kind == "band":
            _require("window" in doc, "band rules need a window")
            band = {int(k): int(v) for k, v in doc["band"].items()}
            diagram = dg.band_diagram(band, depth,
                                      _as_window(doc["window"], "window"))
        else:
            subst = _parse_substitution(doc["substitution"])
            win = (_as_window(doc["window"], "window")
                   if "window" in doc else None)
            if subst.words and win is None:
                diagram = dg.stationary_diagram(
                    sb.substitution_matrix(subst), depth)
            else:
                _require(win is not None,
                         "band-rule substitutions need a window")
                diagram = dg.stationary_diagram(
                    sb.substitution_matrix(subst, win), depth)

    order_name = doc.get("order", "natural")
    if order_name == "natural":
        order = dg.natural_order(diagram)
    elif order_name == "reading":
        _require(subst is not None,
                 "reading order requires a substitution construction")
        order = sb.reading_order(subst, diagram.F(0))
        dg.check_order(diagram, order)
    else:
        raise SpecError(f"unknown order {order_name!r}")

    markov = None
    if "markov" in doc:
        blk = doc["markov"]
        _require(isinstance(blk, dict), "markov must be an object")
        _check_fields(blk, _MARKOV_FIELDS, "markov")
        if blk.get("from_tail_invariant"):
            _require(set(blk) <= {"from_tail_invariant", "normalization"},
                     "induced markov blocks take only a normalization")
            markov = {"from_tail_invariant": True,
                      "normalization": blk.get("normalization", "probability")}
        else:
            _require("q0" in blk and "edges" in blk,
                     "explicit markov blocks need q0 and edges")
            edges = []
            for e in blk["edges"]:
                _require(isinstance(e, (list, tuple)) and len(e) == 4,
                         "markov edges are [level, source, target, p]")
                edges.append((int(e[0]), int(e[1]), int(e[2]),
                              tuple(float(x) for x in e[3])
                              if isinstance(e[3], (list, tuple))
                              else float(e[3])))
            markov = {"q0": tuple(float(x) for x in blk["q0"]),
                      "edges": tuple(edges)}

    kernels = None
    if "kernels" in doc:
        blk = doc["kernels"]
        _require(isinstance(blk, dict), "kernels must be an object")
        _check_fields(blk, _KERNEL_FIELDS, "kernels")
        _require("nu0" in blk and "chain" in blk,
                 "kernel blocks need nu0 and chain")
        space = cl.CellSpace(tuple(float(x) for x in blk["nu0"]))
        spaces = [space]
        ks = []
        for i, mat in enumerate(blk["chain"]):
            k = cl.kernel_from([[float(x) for x in row] for row in mat])
            _require(k.shape[0] == spaces[-1].m,
                     f"kernel {i} rows do not match the previous space")
            _require(k.is_probability(),
                     f"kernel {i} rows must be probabilities")
            ks.append(k)
            spaces.append(cl.CellSpace(
                tuple(spaces[-1].nu(False) @ k.array(False))))
        kernels = (tuple(spaces), tuple(ks))

    return ParsedSpec(diagram, order, subst, markov, kernels,
                      canonical=emit_canonical(doc))


def emit_canonical(doc: dict) -> dict:
    """Normalized copy of a spec document: sorted keys, band offsets as
    decimal strings, windows as 3-lists.  Parsing the emitted form yields
    the same structures as parsing the original."""
    out = {}
    for key in sorted(doc):
        val = doc[key]
        if key == "band":
            out[key] = {str(int(k)): int(v)
                        for k, v in sorted(val.items(), key=lambda kv: int(kv[0]))}
        elif key == "window":
            w = dg.window_of(tuple(val))
            out[key] = [w.lo, w.hi, w.step]
        elif key == "windows":
            out[key] = [[dg.window_of(tuple(v)).lo, dg.window_of(tuple(v)).hi,
                         dg.window_of(tuple(v)).step] for v in val]
        else:
            out[key] = val
    return out


def load_spec(path: str, depth_override: int | None = None) -> ParsedSpec:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as e:
            raise SpecError(f"not valid JSON: {e}") from e
    return parse_spec(doc, depth_override)
