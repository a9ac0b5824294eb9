"""Command-line entry point.

Every subcommand reads its inputs, writes its outputs into ``--out`` and
records a ``manifest.json`` there holding the parameters, the seed and the
SHA-256 digests of every input and output.  Outputs depend only on the
inputs, the parameters and the seed.

Exit codes: 0 success, 2 usage error, 3 input I/O error, 4 solver or
conditioning failure, 5 infeasible constraints (cyclic occlusion).
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import art as art_mod
from . import depthorder, descr, flatland, infoforest, io as aio, occflow, texture, timewarp, track
from .art import TopologyError
from .depthorder import CyclicOcclusion
from .detect import FlatPatch, Frame, detect_blobs, detect_harris, region_frames, segment_tree
from .imgcore import InvalidArgument, build_scale_space
from .occflow import SolverFailure
from .timewarp import IllConditioned

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_SOLVER, EXIT_INFEASIBLE = 0, 2, 3, 4, 5


class InputError(Exception):
    """An input file is missing or malformed."""


class UsageError(Exception):
    pass


def _jsonable(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not serializable: {type(o).__name__}")


def dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, default=_jsonable) + "\n"


def sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


class Run:
    """Output directory bookkeeping for one invocation."""

    def __init__(self, args):
        self.args = args
        self.out = Path(args.out)
        self.inputs = []
        self.outputs = []

    def input(self, path, loader):
        p = Path(path)
        try:
            value = loader(p)
            digest = sha256(p)
        except (OSError, ValueError, KeyError, IndexError, json.JSONDecodeError) as err:
            raise InputError(f"{path}: {err}") from err
        self.inputs.append({"path": str(path), "sha256": digest})
        return value

    def _path(self, name):
        self.out.mkdir(parents=True, exist_ok=True)
        self.outputs.append(name)
        return self.out / name

    def text(self, name, content: str):
        self._path(name).write_text(content, encoding="utf-8", newline="\n")

    def json(self, name, obj):
        self.text(name, dumps(obj))

    def call(self, name, writer, *a):
        writer(self._path(name), *a)

    def manifest(self, seed):
        params = {k: v for k, v in sorted(vars(self.args).items())
                  if k not in ("out", "func", "seed", "command")}
        doc = {"tool": "artifact", "version": __version__, "subcommand": self.args.command,
               "params": params, "seed": seed, "inputs": self.inputs,
               "outputs": {n: sha256(self.out / n) for n in sorted(set(self.outputs))}}
        self.out.mkdir(parents=True, exist_ok=True)
        (self.out / "manifest.json").write_text(dumps(doc), encoding="utf-8", newline="\n")
        return hashlib.sha256(dumps(doc).encode()).hexdigest()


# --- loaders -------------------------------------------------------------------

def _image(p):
    return aio.read_image(p)


def _json(p):
    return json.loads(p.read_text(encoding="utf-8"))


def _series(p):
    a = np.loadtxt(p, delimiter=",", ndmin=2, comments="#")
    if a.size == 0:
        raise ValueError("empty series")
    return a


def _samples_csv(p):
    with open(p, newline="", encoding="utf-8") as f:
        rows = list(csv.reader(f))
    if len(rows) < 2:
        raise ValueError("need a header and at least one row")
    header = [h.strip() for h in rows[0]]
    if "c" not in header:
        raise ValueError("missing label column 'c'")
    data = np.array([[float(v) for v in r] for r in rows[1:] if r], dtype=np.float64)
    feats = [i for i, h in enumerate(header) if h not in ("c", "y")]
    if not feats:
        raise ValueError("no feature columns")
    y = data[:, header.index("y")] if "y" in header else data[:, feats[0]]
    return y, data[:, feats], data[:, header.index("c")].astype(int), [header[i] for i in feats]


def _tracks(p):
    recs = [json.loads(line) for line in p.read_text(encoding="utf-8").splitlines() if line.strip()]
    for r in recs:
        for k in ("track_id", "t", "x", "y", "sigma", "theta", "status"):
            if k not in r:
                raise ValueError(f"track record lacks {k!r}")
    return recs


def _model(p):
    d = _json(p)
    return timewarp.LtiModel(np.array(d["A"], float), np.array(d["B"], float),
                             np.array(d["C"], float),
                             None if d.get("x0") is None else np.array(d["x0"], float),
                             None if d.get("D") is None else np.array(d["D"], float))


def _art_or_image(p, sigma):
    if p.suffix.lower() == ".json":
        d = _json(p)
        return d["encoding"], d
    a = art_mod.build_art(aio.read_image(p), sigma)
    return a.encoding, a.to_json()


# --- subcommands ---------------------------------------------------------------

def cmd_flow(run, args):
    a = run.input(args.frame_a, _image)
    b = run.input(args.frame_b, _image)
    prob = occflow.FlowProblem(a, b, lam=args.lam, mu=args.mu, n_levels=args.levels,
                               warps_per_level=args.warps)
    sol = occflow.solve(prob)
    run.call("flow.flo", aio.write_flo, sol.v)
    run.call("mask.pgm", aio.write_mask, sol.mask)
    run.json("flow.json", {"tau_e": sol.tau_e, "occluded_pixels": int(sol.mask.sum())})


def _detect(img, args):
    if args.kind == "Harris":
        return detect_harris(img, args.sigma0, 2 * args.sigma0, thresh=args.contrast)
    if args.kind == "SuperpixelCentroid":
        tree = segment_tree(img, args.sigma_stop)
        return region_frames(tree.stable - 1)
    ss = build_scale_space(img, args.sigma0, args.steps, args.levels)
    return detect_blobs(ss, args.kind, args.contrast)


def cmd_detect(run, args):
    img = run.input(args.image, _image)
    run.json("frames.json", [f.to_json() for f in _detect(img, args)])


def cmd_track(run, args):
    imgs = [run.input(p, _image) for p in args.images]
    cfg = track.TSTConfig(sigma0=args.sigma0, steps_per_octave=args.steps, n_levels=args.levels,
                          kind=args.kind, contrast_thresh=args.contrast)
    tracks = track.track_sequence(imgs, cfg)
    lines = [json.dumps(r, sort_keys=True, default=_jsonable) for t in tracks for r in t.records()]
    run.text("tracks.jsonl", "".join(line + "\n" for line in lines))
    print(f"{sum(t.status == 'live' for t in tracks)} live / {len(tracks)} tracks")


def cmd_art(run, args):
    img = run.input(args.image, _image)
    a = art_mod.build_art(img, args.sigma)
    art_mod.check_invariants(a)
    run.json("art.json", a.to_json())


def cmd_art_diff(run, args):
    ea, da = run.input(args.a, lambda p: _art_or_image(p, args.sigma))
    eb, db = run.input(args.b, lambda p: _art_or_image(p, args.sigma))
    equal = ea == eb
    first = next((i for i, (x, y) in enumerate(zip(ea, eb)) if x != y), min(len(ea), len(eb)))
    na, nb = len(da["nodes"]), len(db["nodes"])
    ka = {k: sum(n["kind"] == k for n in da["nodes"]) for k in ("min", "saddle", "max")}
    kb = {k: sum(n["kind"] == k for n in db["nodes"]) for k in ("min", "saddle", "max")}
    summary = {"nodes": [na, nb], "edges": [len(da["edges"]), len(db["edges"])],
               "kind_delta": {k: kb[k] - ka[k] for k in ka},
               "first_difference": None if equal else first}
    run.json("art_diff.json", {"equal": equal, "summary": summary})
    print("equal" if equal else "unequal")


def cmd_describe(run, args):
    imgs = [run.input(p, _image) for p in args.images]
    recs = run.input(args.tracks, _tracks)
    by_track = {}
    for r in recs:
        if r["status"] == "live" and 0 <= r["t"] < len(imgs):
            by_track.setdefault(r["track_id"], []).append(r)
    out = []
    for tid in sorted(by_track):
        patches = []
        for r in sorted(by_track[tid], key=lambda r: r["t"]):
            f = Frame(x=r["x"], y=r["y"], sigma=r["sigma"], kind="LoG", theta=r["theta"])
            try:
                patches.append(descr.extract_patch(imgs[r["t"]], f))
            except (FlatPatch, InvalidArgument):
                continue
        if patches:
            out.append({"track_id": tid, "template": descr.best_template(patches).to_json("L2"),
                        "time_hog": descr.time_hog(patches).to_json(args.metric)})
    run.text("descriptors.jsonl", "".join(json.dumps(o, sort_keys=True, default=_jsonable) + "\n"
                                          for o in out))


def cmd_texture(run, args):
    img = run.input(args.image, _image)
    if args.window:
        x, y, w, h = args.window
        if w < 1 or h < 1 or x < 0 or y < 0 or y + h > img.shape[0] or x + w > img.shape[1]:
            raise UsageError("window outside the image")
        img = img[y:y + h, x:x + w]
    model = texture.infer_neighborhood(img, args.beta, args.candidates, args.Q)
    doc = model.to_json()
    if args.sigma is not None:
        doc["class"] = texture.texture_or_structure(img, args.sigma)
    run.json("texture.json", doc)


def cmd_segment(run, args):
    img = run.input(args.image, _image)
    tree = segment_tree(img, args.sigma_stop, args.gap_min)
    run.call("labels.pgm", aio.write_labels, tree.stable)
    frames = region_frames(tree.stable - 1)
    run.json("regions.json", [dict(f.to_json(), label=i + 1) for i, f in enumerate(frames)])


def cmd_depth(run, args):
    labels = run.input(args.labels, aio.read_pgm_raw)
    img = run.input(args.image, _image)
    flow = run.input(args.flow, aio.read_flo)
    cons = run.input(args.constraints, _json)
    try:
        cons = [(int(a), int(b)) for a, b in cons]
    except (TypeError, ValueError) as err:
        raise InputError(f"{args.constraints}: constraints must be [occluded, occluder] pairs") from err
    graph = depthorder.build_region_graph(labels, img, flow, args.alpha, args.beta, args.eps)
    lab = depthorder.depth_order(graph, cons)
    run.json("labeling.json", lab.to_json())


def cmd_dtw(run, args):
    x = run.input(args.x, _series)
    y = run.input(args.y, _series)
    cost, path = timewarp.dtw(x, y)
    run.json("dtw.json", {"cost": cost, "path": [list(map(int, p)) for p in path]})
    print(repr(float(cost)))


def cmd_twdc(run, args):
    x = run.input(args.x, _series)
    y = run.input(args.y, _series)
    model = run.input(args.model, _model)
    res = timewarp.twdc(x, y, model, lam=args.lam, mu=args.mu, n_outer=args.n_outer,
                        ridge=args.ridge)
    run.json("twdc.json", {"cost": res.cost, "trace": list(res.trace),
                           "u0": None if res.u0 is None else np.asarray(res.u0).tolist()})
    print(repr(float(res.cost)))


def cmd_forest(run, args):
    y, F, c, names = run.input(args.samples, _samples_csv)
    data = infoforest.Data.make(y, F, c)
    tree = infoforest.grow(data, args.tau, args.max_depth, args.bins, args.symmetric)
    run.json("tree.json", {"features": names, "tree": tree})


def cmd_flatland(run, args):
    cfg = run.input(args.config, lambda p: flatland.parse_config(p.read_text(encoding="utf-8")))
    pair, sensor, scales, n_mc, seed, budget = flatland.build(cfg)
    if args.seed is not None:
        seed = args.seed
    run.seed = seed
    rows = io.StringIO()
    w = csv.writer(rows, lineterminator="\n")
    w.writerow(["s", "R", "CI_low", "CI_high"])
    for s, e in flatland.passive_curve(pair, sensor, scales, n_mc, seed):
        w.writerow([repr(s), repr(e.value), repr(e.ci[0]), repr(e.ci[1])])
    run.text("passive.csv", rows.getvalue())
    e = flatland.active_error(pair, sensor, budget, n_mc, seed)
    rows = io.StringIO()
    w = csv.writer(rows, lineterminator="\n")
    w.writerow(["s", "n_trans", "n_rep", "R", "CI_low", "CI_high"])
    w.writerow([repr(budget[0]), budget[1], budget[2], repr(e.value), repr(e.ci[0]), repr(e.ci[1])])
    run.text("active.csv", rows.getvalue())


# --- parser --------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _ints(s):
    return [int(v) for v in s.split(",") if v.strip()]


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="artifact", description=__doc__.split("\n\n")[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def cmd(name, func, help_, **kw):
        s = sub.add_parser(name, help=help_, description=help_, **kw)
        s.add_argument("--out", default="out", help="output directory (default: out)")
        s.add_argument("--seed", type=int, default=None, help="master seed (default: 0)")
        s.set_defaults(func=func)
        return s

    def detector_opts(s):
        s.add_argument("--kind", default="LoG", choices=["LoG", "DoG", "Hessian", "Harris",
                                                         "SuperpixelCentroid"])
        s.add_argument("--sigma0", type=float, default=1.0)
        s.add_argument("--steps", type=int, default=3, help="scale levels per octave")
        s.add_argument("--levels", type=int, default=10)
        s.add_argument("--contrast", type=float, default=0.1, help="response threshold")

    s = cmd("flow", cmd_flow, "occlusion-aware optical flow of a frame pair")
    s.add_argument("frame_a")
    s.add_argument("frame_b")
    s.add_argument("--lambda", dest="lam", type=float, default=1e-4)
    s.add_argument("--mu", type=float, default=0.005)
    s.add_argument("--levels", type=int, default=3)
    s.add_argument("--warps", type=int, default=10)

    s = cmd("detect", cmd_detect, "co-variant frames of an image as JSON")
    s.add_argument("image")
    detector_opts(s)
    s.add_argument("--sigma-stop", type=float, default=0.1, help="superpixel merge threshold")

    s = cmd("track", cmd_track, "track frames through an image sequence (JSON lines)")
    s.add_argument("images", nargs="+")
    detector_opts(s)

    s = cmd("art", cmd_art, "attributed Reeb tree of an image")
    s.add_argument("image")
    s.add_argument("--sigma", type=float, default=0.0)

    s = cmd("art-diff", cmd_art_diff, "compare the ARTs of two images or ART JSON files")
    s.add_argument("a")
    s.add_argument("b")
    s.add_argument("--sigma", type=float, default=0.0)

    s = cmd("describe", cmd_describe, "template and time-HOG descriptors of tracks")
    s.add_argument("images", nargs="+")
    s.add_argument("--tracks", required=True)
    s.add_argument("--metric", default="chi2", choices=["L2", "chi2"])

    s = cmd("texture", cmd_texture, "Markov neighbourhood of a texture window")
    s.add_argument("image")
    s.add_argument("--window", type=int, nargs=4, metavar=("X", "Y", "W", "H"))
    s.add_argument("--beta", type=float, default=10.0)
    s.add_argument("--candidates", type=_ints, default=[0, 1, 2, 3], help="square half-widths")
    s.add_argument("--Q", type=int, default=texture.Q_DEFAULT)
    s.add_argument("--sigma", type=float, default=None, help="also classify texture/structure")

    s = cmd("segment", cmd_segment, "segmentation tree: stable-region label PGM and regions")
    s.add_argument("image")
    s.add_argument("--sigma-stop", type=float, default=0.1)
    s.add_argument("--gap-min", type=float, default=0.0)

    s = cmd("depth", cmd_depth, "depth ordering of regions from occlusion constraints")
    s.add_argument("labels", help="label PGM")
    s.add_argument("image")
    s.add_argument("flow", help=".flo file")
    s.add_argument("constraints", help="JSON list of [occluded, occluder] pairs")
    s.add_argument("--alpha", type=float, default=1.0)
    s.add_argument("--beta", type=float, default=1.0)
    s.add_argument("--eps", type=float, default=1.0)

    s = cmd("dtw", cmd_dtw, "dynamic time warping of two CSV series")
    s.add_argument("x")
    s.add_argument("y")

    s = cmd("twdc", cmd_twdc, "time warping under dynamic constraints",
            epilog="model JSON keys: A, B, C and optional x0, D")
    s.add_argument("x")
    s.add_argument("y")
    s.add_argument("--model", required=True)
    s.add_argument("--lambda", dest="lam", type=float, default=1.0)
    s.add_argument("--mu", type=float, default=1.0)
    s.add_argument("--n-outer", type=int, default=5)
    s.add_argument("--ridge", type=float, default=1e-3)

    s = cmd("forest", cmd_forest, "grow one information-forest tree",
            epilog="samples CSV: header row; column c holds 0/1 labels, optional column y the "
                   "observation (else the first feature); every other column is a feature")
    s.add_argument("samples")
    s.add_argument("--tau", type=float, default=0.5)
    s.add_argument("--max-depth", type=int, default=8)
    s.add_argument("--bins", type=int, default=infoforest.DEFAULT_BINS)
    s.add_argument("--symmetric", action="store_true")

    keys = ", ".join(f"{k} (default {v})" for k, v in flatland.DEFAULTS.items())
    s = cmd("flatland", cmd_flatland, "passive and active flatland recognition error",
            epilog=f"config file: 'key = value' lines, '#' comments. Keys: {keys}. "
                   "--seed overrides the config seed.")
    s.add_argument("config")
    return p


def run(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as err:
        print(err, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as err:  # --help / --version
        return int(err.code or 0)
    r = Run(args)
    r.seed = 0 if args.seed is None else args.seed
    try:
        args.func(r, args)
        r.manifest(r.seed)
    except InputError as err:
        print(f"input error: {err}", file=sys.stderr)
        return EXIT_IO
    except CyclicOcclusion as err:
        print(f"{err}", file=sys.stderr)
        print(json.dumps({"cycle": err.cycle}, default=_jsonable), file=sys.stderr)
        return EXIT_INFEASIBLE
    except (SolverFailure, IllConditioned, TopologyError, np.linalg.LinAlgError, RuntimeError) as err:
        print(f"solver failure: {err}", file=sys.stderr)
        return EXIT_SOLVER
    except (UsageError, ValueError) as err:
        print(f"usage error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as err:
        print(f"I/O error: {err}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


def main() -> None:
    sys.exit(run())


__all__ = ["run", "main", "build_parser", "EXIT_OK", "EXIT_USAGE", "EXIT_IO", "EXIT_SOLVER",
           "EXIT_INFEASIBLE"]
