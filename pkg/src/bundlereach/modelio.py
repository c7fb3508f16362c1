"""Model files in, flowpipes and parameter sets out.

Model file grammar (``#`` and ``//`` start comments)::

    file      := stmt*
    stmt      := 'model' NAME ';'
               | 'var' NAME (',' NAME)* ';'
               | 'param' NAME ['in' interval] ';'
               | 'paramset' '{' (ineq ';')* '}'
               | 'dynamics' '{' (NAME "'" '=' expr ';')* '}'
               | 'init' 'box' '{' (NAME 'in' interval ';')* '}'
               | 'init' 'bundle' '{' bundle_item* '}'
               | 'spec' formula ';'
               | 'option' ('steps' INT | 'out' STRING | 'project' NAME ',' NAME | 'fan' INT) ';'
    interval  := '[' number ',' number ']'
    ineq      := expr ('<=' | '>=') expr            -- affine in the parameters
    bundle_item := 'directions' '{' (vector ';')* '}'
                 | 'offsets' '{' (interval ';')* '}'   -- bounds of L_i x, one per direction
                 | 'box' '{' (NAME 'in' interval ';')* '}'  -- offsets taken from a box
                 | 'templates' '{' (intvector ';')* '}'
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .expr import (ExprParser, ParseError, TokenStream, format_number, format_polynomial, parse_int,
                   parse_number, tokenize)
from .geometry import (Box, Bundle, DegenerateTemplateError, LinearSystem, LinearSystemSet, box_to_bundle,
                       bundle_from_box_offsets)
from .reachability import Flowpipe, Model
from .stl import Formula, format_formula, parse_formula_tokens

DEFAULT_FAN = 32


@dataclass
class ProblemOptions:
    steps: int | None = None
    out: str | None = None
    project: tuple[str, str] | None = None
    fan: int = DEFAULT_FAN


@dataclass
class ProblemSpec:
    model: Model
    initial_set: Bundle
    param_set: LinearSystem
    spec: Formula | None = None
    options: ProblemOptions = field(default_factory=ProblemOptions)


class _ModelParser:
    def __init__(self, text: str):
        self.ts = TokenStream(tokenize(text))
        self.name = "model"
        self.state_vars: list[str] = []
        self.params: list[str] = []
        self.param_rows: list[tuple[np.ndarray, float]] = []
        self.param_boxes: list[tuple[int, float, float]] = []
        self.dynamics: dict[str, tuple] = {}
        self.init: Bundle | None = None
        self.init_tok = None
        self.spec: Formula | None = None
        self.options = ProblemOptions()
        self.params_closed = False

    def parse(self) -> ProblemSpec:
        ts = self.ts
        while ts.peek.kind != "EOF":
            tok = ts.peek
            if tok.kind != "NAME":
                ts.error(f"expected a statement keyword, found {ts.describe(tok)}")
            handler = getattr(self, f"_stmt_{tok.text}", None)
            if handler is None:
                ts.error(f"unknown statement {tok.text!r}")
            ts.next()
            handler(tok)
        return self._finish()

    def _declared(self, name: str) -> bool:
        return name in self.state_vars or name in self.params

    def _new_name(self):
        tok = self.ts.expect_kind("NAME", "a name")
        if self._declared(tok.text):
            self.ts.error(f"{tok.text!r} is already declared", tok)
        return tok

    def _stmt_model(self, _):
        self.name = self.ts.expect_kind("NAME", "a model name").text
        self.ts.expect(";")

    def _stmt_var(self, kw):
        if self.dynamics or self.init is not None:
            self.ts.error("variables must be declared before dynamics and initial sets", kw)
        self.state_vars.append(self._new_name().text)
        while self.ts.accept(","):
            self.state_vars.append(self._new_name().text)
        self.ts.expect(";")

    def _stmt_param(self, kw):
        if self.params_closed:
            self.ts.error("parameters must be declared before dynamics and paramset blocks", kw)
        tok = self._new_name()
        self.params.append(tok.text)
        if self.ts.accept("in"):
            lo, hi = self._interval()
            self.param_boxes.append((len(self.params) - 1, lo, hi))
        self.ts.expect(";")

    def _interval(self) -> tuple[float, float]:
        ts = self.ts
        start = ts.expect("[")
        lo = parse_number(ts)
        ts.expect(",")
        hi = parse_number(ts)
        ts.expect("]")
        if lo > hi:
            ts.error(f"malformed interval [{lo}, {hi}]: lower bound exceeds upper bound", start)
        return lo, hi

    def _stmt_paramset(self, _):
        self._close_params()
        ts = self.ts
        exprs = ExprParser(self.params)
        ts.expect("{")
        while not ts.accept("}"):
            lhs = exprs.parse(ts)
            op = ts.peek
            if op.text not in ("<=", ">="):
                ts.error(f"expected '<=' or '>=', found {ts.describe(op)}")
            ts.next()
            rhs = exprs.parse(ts)
            g = lhs - rhs if op.text == "<=" else rhs - lhs
            if g.total_degree() > 1:
                ts.error("parameter constraints must be affine", op)
            row = np.zeros(len(self.params))
            for idx, c in g.terms:
                if sum(idx) == 1:
                    row[idx.index(1)] = c.constant
            const = g.coefficient((0,) * len(self.params)).constant
            self.param_rows.append((row, -const))
            ts.expect(";")

    def _close_params(self):
        if not self.params_closed:
            self.params_closed = True
            rows = []
            for k, lo, hi in self.param_boxes:
                e = np.zeros(len(self.params))
                e[k] = 1.0
                rows.append((e, hi))
                rows.append((-e, -lo))
            self.param_rows = rows + self.param_rows

    def _stmt_dynamics(self, _):
        self._close_params()
        ts = self.ts
        exprs = ExprParser(self.state_vars, self.params)
        ts.expect("{")
        while not ts.accept("}"):
            tok = ts.expect_kind("NAME", "a state variable")
            if tok.text not in self.state_vars:
                ts.error(f"unknown identifier {tok.text!r}", tok)
            if tok.text in self.dynamics:
                ts.error(f"dynamics of {tok.text!r} given twice", tok)
            ts.expect("'")
            ts.expect("=")
            self.dynamics[tok.text] = (exprs.parse(ts), tok)
            ts.expect(";")

    def _box_block(self) -> Box:
        ts = self.ts
        start = ts.expect("{")
        bounds: dict[str, tuple[float, float]] = {}
        while not ts.accept("}"):
            tok = ts.expect_kind("NAME", "a state variable")
            if tok.text not in self.state_vars:
                ts.error(f"unknown identifier {tok.text!r}", tok)
            if tok.text in bounds:
                ts.error(f"bounds of {tok.text!r} given twice", tok)
            ts.expect("in")
            bounds[tok.text] = self._interval()
            ts.expect(";")
        missing = [v for v in self.state_vars if v not in bounds]
        if missing:
            ts.error(f"box is missing bounds for {', '.join(missing)}", start)
        return Box([bounds[v][0] for v in self.state_vars], [bounds[v][1] for v in self.state_vars])

    def _vector(self, integer: bool = False) -> list:
        ts = self.ts
        ts.expect("[")
        vals = [parse_int(ts) if integer else parse_number(ts)]
        while ts.accept(","):
            vals.append(parse_int(ts) if integer else parse_number(ts))
        ts.expect("]")
        return vals

    def _stmt_init(self, kw):
        ts = self.ts
        if self.init is not None:
            ts.error("initial set given twice", kw)
        if not self.state_vars:
            ts.error("variables must be declared before the initial set", kw)
        self.init_tok = kw
        if ts.accept("box"):
            self.init = box_to_bundle(self._box_block())
            return
        if not ts.accept("bundle"):
            ts.error(f"expected 'box' or 'bundle', found {ts.describe(ts.peek)}")
        n = len(self.state_vars)
        directions = offsets = templates = box = None
        ts.expect("{")
        while not ts.accept("}"):
            item = ts.expect_kind("NAME", "'directions', 'offsets', 'box' or 'templates'")
            if item.text == "box":
                box = self._box_block()
                continue
            if item.text not in ("directions", "offsets", "templates"):
                ts.error(f"unknown bundle item {item.text!r}", item)
            ts.expect("{")
            rows = []
            while not ts.accept("}"):
                if item.text == "offsets":
                    rows.append(self._interval())
                else:
                    vec_tok = ts.peek
                    rows.append(self._vector(integer=item.text == "templates"))
                    if item.text == "directions" and len(rows[-1]) != n:
                        ts.error(f"direction needs {n} entries, got {len(rows[-1])}", vec_tok)
                ts.expect(";")
            if item.text == "directions":
                directions = rows
            elif item.text == "offsets":
                offsets = rows
            else:
                templates = rows
        if directions is None or templates is None:
            ts.error("bundle needs 'directions' and 'templates'", kw)
        if (offsets is None) == (box is None):
            ts.error("bundle needs exactly one of 'offsets' or 'box'", kw)
        try:
            if box is not None:
                self.init = bundle_from_box_offsets(directions, templates, box)
            else:
                if len(offsets) != len(directions):
                    ts.error(f"{len(directions)} directions but {len(offsets)} offsets", kw)
                lo = np.array([o[0] for o in offsets])
                hi = np.array([o[1] for o in offsets])
                self.init = Bundle(directions, hi, -lo, templates)
        except DegenerateTemplateError as exc:
            ts.error(f"singular template: {exc}", kw)
        except ValueError as exc:
            if isinstance(exc, ParseError):
                raise
            ts.error(str(exc), kw)

    def _stmt_spec(self, kw):
        if self.spec is not None:
            self.ts.error("specification given twice", kw)
        if not self.state_vars:
            self.ts.error("variables must be declared before the specification", kw)
        self.spec = parse_formula_tokens(self.ts, self.state_vars)
        self.ts.expect(";")

    def _stmt_option(self, _):
        ts = self.ts
        key = ts.expect_kind("NAME", "an option name")
        if key.text == "steps":
            self.options.steps = parse_int(ts)
        elif key.text == "fan":
            fan = parse_int(ts)
            if fan < 3:
                ts.error("projection fan needs at least 3 directions", key)
            self.options.fan = fan
        elif key.text == "out":
            self.options.out = ts.expect_kind("STR", "a quoted path").text[1:-1]
        elif key.text == "project":
            a = ts.expect_kind("NAME", "a variable name")
            ts.expect(",")
            b = ts.expect_kind("NAME", "a variable name")
            for tok in (a, b):
                if tok.text not in self.state_vars:
                    ts.error(f"unknown identifier {tok.text!r}", tok)
            self.options.project = (a.text, b.text)
        else:
            ts.error(f"unknown option {key.text!r}", key)
        ts.expect(";")

    def _finish(self) -> ProblemSpec:
        self._close_params()
        ts = self.ts
        if not self.state_vars:
            ts.error("no state variables declared")
        missing = [v for v in self.state_vars if v not in self.dynamics]
        if missing:
            ts.error(f"missing dynamics for {', '.join(missing)}")
        if self.init is None:
            ts.error("no initial set given")
        model = Model(self.name, tuple(self.state_vars), tuple(self.params),
                      tuple(self.dynamics[v][0] for v in self.state_vars))
        m = len(self.params)
        if self.param_rows:
            P = LinearSystem(np.array([r for r, _ in self.param_rows]).reshape(-1, m),
                             np.array([b for _, b in self.param_rows]))
        else:
            P = LinearSystem.trivial(m)
        if P.is_empty:
            raise ParseError("parameter set is empty")
        return ProblemSpec(model, self.init, P, self.spec, self.options)


def parse_model_file(text: str) -> ProblemSpec:
    return _ModelParser(text).parse()


def load_model_file(path) -> ProblemSpec:
    return parse_model_file(Path(path).read_text())


def _fmt_vector(v) -> str:
    return "[" + ", ".join(format_number(x) for x in v) + "]"


def format_problem(problem: ProblemSpec) -> str:
    """Model-file text that parses back to an equal :class:`ProblemSpec`."""
    model = problem.model
    xs, ps = model.state_vars, model.param_vars
    out = [f"model {model.name};", f"var {', '.join(xs)};"]
    out += [f"param {p};" for p in ps]
    P = problem.param_set
    if P.num_constraints:
        out.append("paramset {")
        for row, rhs in zip(P.A, P.b):
            terms = [f"{format_number(c)}*{ps[j]}" for j, c in enumerate(row) if c]
            out.append(f"  {' + '.join(terms) or '0.0'} <= {format_number(rhs)};")
        out.append("}")
    out.append("dynamics {")
    for name, f in zip(xs, model.dynamics):
        out.append(f"  {name}' = {format_polynomial(f, xs, ps)};")
    out.append("}")
    X = problem.initial_set
    n = X.dim
    if X.templates == (tuple(range(n)),) and np.array_equal(X.directions, np.eye(n)):
        out.append("init box {")
        for k, name in enumerate(xs):
            out.append(f"  {name} in [{format_number(-X.lower[k])}, {format_number(X.upper[k])}];")
        out.append("}")
    else:
        out.append("init bundle {")
        out.append("  directions { " + " ".join(_fmt_vector(r) + ";" for r in X.directions) + " }")
        out.append("  offsets { " + " ".join(
            f"[{format_number(-lo)}, {format_number(hi)}];" for lo, hi in zip(X.lower, X.upper)) + " }")
        out.append("  templates { " + " ".join(
            "[" + ", ".join(str(i) for i in t) + "];" for t in X.templates) + " }")
        out.append("}")
    if problem.spec is not None:
        out.append(f"spec {format_formula(problem.spec, xs)};")
    opts = problem.options
    if opts.steps is not None:
        out.append(f"option steps {opts.steps};")
    if opts.out is not None:
        out.append(f'option out "{opts.out}";')
    if opts.project is not None:
        out.append(f"option project {opts.project[0]}, {opts.project[1]};")
    if opts.fan != DEFAULT_FAN:
        out.append(f"option fan {opts.fan};")
    return "\n".join(out) + "\n"


# JSON output


def _num(x: float) -> str:
    x = float(x)
    if not math.isfinite(x):
        raise ValueError(f"cannot serialise non-finite number {x}")
    if x == 0.0:
        return "0"
    return format(x, ".17g")


def _encode(obj, indent: int = 0) -> str:
    pad = "  " * (indent + 1)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(k)}: {_encode(v, indent + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + "  " * indent + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        seq = list(obj)
        if not seq:
            return "[]"
        if all(not isinstance(v, (dict, list, tuple, np.ndarray)) for v in seq):
            return "[" + ", ".join(_encode(v) for v in seq) + "]"
        return "[\n" + ",\n".join(pad + _encode(v, indent + 1) for v in seq) + "\n" + "  " * indent + "]"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _num(obj)
    if obj is None:
        return "null"
    return json.dumps(obj)


def _write_text(path, text: str) -> None:
    path = Path(path)
    try:
        path.write_text(text)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc


def flowpipe_to_dict(fp: Flowpipe) -> dict:
    X0 = fp.steps[0]
    model = fp.model
    return {
        "model": model.name if model is not None else "",
        "variables": list(model.state_vars) if model is not None else [],
        "directions": X0.directions,
        "templates": [list(t) for t in X0.templates],
        "steps": [{"upper": b.upper, "lower": b.lower} for b in fp.steps],
    }


def write_flowpipe(fp: Flowpipe, path) -> None:
    _write_text(path, _encode(flowpipe_to_dict(fp)) + "\n")


@dataclass
class FlowpipeRecord:
    model: str
    variables: list[str]
    steps: list[Bundle]


def read_flowpipe(path) -> FlowpipeRecord:
    data = json.loads(Path(path).read_text())
    L = np.array(data["directions"], dtype=float)
    templates = [tuple(t) for t in data["templates"]]
    steps = [Bundle(L, s["upper"], s["lower"], templates) for s in data["steps"]]
    return FlowpipeRecord(data["model"], data.get("variables", []), steps)


def param_sets_to_dict(s: LinearSystemSet) -> dict:
    return {"members": [{"A": m.A, "b": m.b} for m in s]}


def write_param_sets(s: LinearSystemSet, path) -> None:
    _write_text(path, _encode(param_sets_to_dict(s)) + "\n")


def read_param_sets(path, dim: int | None = None) -> LinearSystemSet:
    data = json.loads(Path(path).read_text())
    members = [LinearSystem(np.array(m["A"], dtype=float).reshape(len(m["b"]), -1), m["b"])
               for m in data["members"]]
    if not members and dim is None:
        dim = 0
    return LinearSystemSet(members, dim=dim)


# projections


def _parallelotope_support(bundle: Bundle):
    v = bundle.template_parallelotope(0).to_generator_form()
    return lambda d: float(d @ v.base + np.clip(d @ v.generators, 0, None).sum())


def _lp_support(system: LinearSystem):
    def support(d):
        out = system.maximize(d)
        if not out.optimal:
            raise ValueError(f"projection LP failed with status {out.status}")
        return out.value
    return support


def _clip(poly: list, normal: np.ndarray, h: float) -> list:
    eps = 1e-12 * (1.0 + abs(h))
    out = []
    k = len(poly)
    for i in range(k):
        cur, nxt = poly[i], poly[(i + 1) % k]
        fc, fn = normal @ cur - h, normal @ nxt - h
        if fc <= eps:
            out.append(cur)
        if (fc < -eps and fn > eps) or (fc > eps and fn < -eps):
            t = fc / (fc - fn)
            out.append(cur + t * (nxt - cur))
    return out


def _fan_polygon(support, n: int, axes: tuple[int, int], fan: int) -> np.ndarray:
    a, b = axes

    def lift(u, w):
        d = np.zeros(n)
        d[a] += u
        d[b] += w
        return d

    xlo, xhi = -support(lift(-1.0, 0.0)), support(lift(1.0, 0.0))
    ylo, yhi = -support(lift(0.0, -1.0)), support(lift(0.0, 1.0))
    poly = [np.array(p, dtype=float) for p in ((xlo, ylo), (xhi, ylo), (xhi, yhi), (xlo, yhi))]
    for k in range(fan):
        theta = 2 * math.pi * k / fan
        nrm = np.array([math.cos(theta), math.sin(theta)])
        nrm[np.abs(nrm) < 1e-15] = 0.0
        poly = _clip(poly, nrm, support(lift(*nrm)))
        if not poly:
            break
    scale = 1e-12 * (1.0 + max(abs(xlo), abs(xhi), abs(ylo), abs(yhi)))
    dedup: list = []
    for p in poly:
        if not dedup or np.max(np.abs(p - dedup[-1])) > scale:
            dedup.append(p)
    if len(dedup) > 1 and np.max(np.abs(dedup[0] - dedup[-1])) <= scale:
        dedup.pop()
    return np.array(dedup).reshape(-1, 2)


def project_bundle(bundle: Bundle, axes: tuple[int, int], fan: int = DEFAULT_FAN) -> np.ndarray:
    """Polygon bounding the projection of ``bundle`` on two coordinates.

    The support value along each of ``fan`` evenly spaced directions comes
    from an LP over the bundle; the polygon is the intersection of the
    resulting half-planes, listed counter-clockwise. It contains the exact
    projection and touches it along every fan direction.
    """
    if len(bundle.templates) == 1 and bundle.num_directions == bundle.dim:
        support = _parallelotope_support(bundle)
    else:
        support = _lp_support(bundle.to_linear_system())
    return _fan_polygon(support, bundle.dim, axes, fan)


def project_system(system: LinearSystem, axes: tuple[int, int], fan: int = DEFAULT_FAN) -> np.ndarray:
    """Same as :func:`project_bundle` for a bounded polytope ``A x <= b``."""
    return _fan_polygon(_lp_support(system), system.dim, axes, fan)


def projection_rows(steps: Sequence[Bundle], axes: tuple[int, int], fan: int = DEFAULT_FAN):
    for k, bundle in enumerate(steps):
        for j, (x, y) in enumerate(project_bundle(bundle, axes, fan)):
            yield k, j, x, y


PLOT_SCRIPT = '''"""Plot 2D flowpipe projections written as step,vertex_index,x,y rows."""
import csv
import sys
from collections import defaultdict

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
from matplotlib.patches import Polygon

csv_path = sys.argv[1] if len(sys.argv) > 1 else {csv_name!r}
png_path = sys.argv[2] if len(sys.argv) > 2 else csv_path.rsplit(".", 1)[0] + ".png"

polys = defaultdict(list)
with open(csv_path, newline="") as fh:
    for row in csv.DictReader(fh):
        polys[int(row["step"])].append((float(row["x"]), float(row["y"])))

fig, ax = plt.subplots(figsize=(5, 4))
for step in sorted(polys):
    ax.add_patch(Polygon(polys[step], closed=True, facecolor="0.8", edgecolor="0.2", linewidth=0.4))
ax.autoscale_view()
ax.set_xlabel({xlabel!r})
ax.set_ylabel({ylabel!r})
fig.tight_layout()
fig.savefig(png_path, dpi=150)
'''


def write_projection(fp: Flowpipe | FlowpipeRecord, axes: tuple[str, str], path,
                     fan: int = DEFAULT_FAN) -> Path:
    """Write the projection CSV to ``path`` and a plotting script next to it; returns the script path."""
    names = list(fp.model.state_vars) if isinstance(fp, Flowpipe) else list(fp.variables)
    for ax in axes:
        if ax not in names:
            raise ValueError(f"unknown axis {ax!r}; variables are {', '.join(names)}")
    idx = (names.index(axes[0]), names.index(axes[1]))
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["step", "vertex_index", "x", "y"])
    for k, j, x, y in projection_rows(fp.steps, idx, fan):
        writer.writerow([k, j, _num(x), _num(y)])
    path = Path(path)
    _write_text(path, buf.getvalue())
    script = path.with_name(path.stem + "_plot.py")
    _write_text(script, PLOT_SCRIPT.format(csv_name=path.name, xlabel=axes[0], ylabel=axes[1]))
    return script


def read_projection(path) -> dict[int, np.ndarray]:
    polys: dict[int, list] = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            polys.setdefault(int(row["step"]), []).append((float(row["x"]), float(row["y"])))
    return {k: np.array(v) for k, v in polys.items()}
