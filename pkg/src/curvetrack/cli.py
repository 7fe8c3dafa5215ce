"""Command-line pipeline: ``curvetrack synth | flow | track | eval | compare``.

Exit codes: 0 success, 2 configuration or parameter error, 3 degenerate input
or filter degeneracy, 4 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import glob
import json
import logging
import sys
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import ConfigError, CurveTrackError, DecodeError, ParameterError
from .eval import score_sequence, write_scores_csv
from .filter import FilterConfig, StepDiagnostics
from .flow import FlowParams, horn_schunck
from .grid import ScalarField, load_image, load_labels, read_scalar, save_image, save_labels, write_ctf
from .levelset import extract_contour, rasterize_contours, sdf_from_mask, write_contours_csv
from .pipeline import deterministic_config, locate_markers, track_sequence
from .sde import SdeParams
from .synth import (DEFAULT_MODEL, ClassModel, DeformationSpec, diapir_benchmark, generate_sequence,
                    translate_benchmark)

__all__ = ["RunConfig", "load_run_config", "track", "compare_modes", "synth", "evaluate", "main"]

log = logging.getLogger("curvetrack")

EXIT_OK, EXIT_CONFIG, EXIT_DEGENERATE, EXIT_IO = 0, 2, 3, 4


# ---------------------------------------------------------------------------
# configuration


def _read_json(path) -> dict:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as e:
        raise DecodeError(f"{path}: cannot read ({e.strerror or e})") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON ({e})") from e
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    return doc


def _build(cls, d, what):
    if d is None:
        return cls()
    if not isinstance(d, dict):
        raise ConfigError(f"'{what}' must be an object")
    try:
        return cls(**d)
    except TypeError as e:
        raise ConfigError(f"'{what}': {e}") from None
    except ParameterError as e:
        raise ConfigError(f"'{what}': {e}") from None


@dataclass(frozen=True)
class RenderOptions:
    contour_value: float = 1.0
    marker_value: float = 0.0
    markers: tuple = ()


@dataclass(frozen=True)
class RunConfig:
    """Everything ``track`` needs; built from one JSON document.

    ``frames`` is a list of image paths, resolved from a glob pattern or a
    synth manifest. Relative paths are taken from the config file's directory.
    """

    frames: tuple
    initial_mask: Path
    inside_class: int = 1
    flow: FlowParams = field(default_factory=FlowParams)
    filter: FilterConfig = field(default_factory=FilterConfig)
    out: Path | None = None
    workers: int = 1
    render: RenderOptions = field(default_factory=RenderOptions)
    truth: Path | None = None

    def __post_init__(self):
        if self.workers < 1:
            raise ConfigError(f"worker count must be >= 1, got {self.workers}")
        if len(self.frames) < 2:
            raise ConfigError(f"need at least 2 frames, found {len(self.frames)}")
        for p in (*self.frames, self.initial_mask):
            if not Path(p).is_file():
                raise ConfigError(f"referenced file does not exist: {p}")
        if self.truth is not None and not Path(self.truth).is_file():
            raise ConfigError(f"truth manifest does not exist: {self.truth}")


def _resolve_frames(doc, base: Path):
    if "manifest" in doc:
        man_path = base / doc["manifest"]
        man = _read_json(man_path)
        try:
            names = man["frames"]
        except KeyError:
            raise ConfigError(f"{man_path}: manifest has no 'frames' list") from None
        root = man_path.parent
        return tuple(root / n for n in names), man
    frames = doc.get("frames")
    if isinstance(frames, str):
        found = sorted(glob.glob(str(base / frames)))
        if not found:
            raise ConfigError(f"frame pattern {frames!r} matched no files")
        return tuple(Path(f) for f in found), None
    if isinstance(frames, list):
        return tuple(base / f for f in frames), None
    raise ConfigError("config needs 'frames' (glob or list) or 'manifest'")


def load_run_config(path, seed: int | None = None, workers: int | None = None, out=None) -> RunConfig:
    """Parse a run config; command-line overrides win over file values."""
    path = Path(path)
    doc = _read_json(path)
    base = path.parent
    frames, man = _resolve_frames(doc, base)
    if "initial_mask" in doc:
        mask = base / doc["initial_mask"]
    elif man is not None and man.get("truth"):
        mask = (base / doc["manifest"]).parent / man["truth"][0]
    else:
        raise ConfigError("config needs 'initial_mask'")
    truth = None
    if "truth" in doc:
        truth = base / doc["truth"]
    elif man is not None and man.get("truth"):
        truth = base / doc["manifest"]
    inside = doc.get("inside_class", man.get("inside_class", 1) if man else 1)

    filt = dict(doc.get("filter") or {})
    sde = _build(SdeParams, doc.get("sde"), "sde")
    if seed is not None:
        filt["master_seed"] = seed
    filt["sde"] = sde
    fcfg = _build(FilterConfig, filt, "filter")
    render = dict(doc.get("render") or {})
    render["markers"] = tuple(tuple(float(c) for c in m) for m in render.get("markers", ()))
    out_dir = out if out is not None else doc.get("out")
    try:
        return RunConfig(
            frames=frames,
            initial_mask=mask,
            inside_class=int(inside),
            flow=_build(FlowParams, doc.get("flow"), "flow"),
            filter=fcfg,
            out=Path(out_dir) if out_dir is not None else None,
            workers=int(workers if workers is not None else doc.get("workers", 1)),
            render=_build(RenderOptions, render, "render"),
            truth=truth,
        )
    except (TypeError, ValueError) as e:
        if isinstance(e, ConfigError):
            raise
        raise ConfigError(str(e)) from None


def _config_summary(cfg: RunConfig) -> dict:
    d = {
        "frames": [str(p) for p in cfg.frames],
        "initial_mask": str(cfg.initial_mask),
        "inside_class": cfg.inside_class,
        "flow": asdict(cfg.flow),
        "filter": asdict(cfg.filter),
        "workers": cfg.workers,
        "render": asdict(cfg.render),
    }
    return d


# ---------------------------------------------------------------------------
# track


def _mkdir(path: Path) -> Path:
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise DecodeError(f"{path}: cannot create directory ({e.strerror or e})") from e
    return path


def _load_inputs(cfg: RunConfig):
    images = [load_image(p) for p in cfg.frames]
    shape = images[0].shape
    for p, im in zip(cfg.frames, images):
        if im.shape != shape:
            raise ParameterError(f"{p}: frame size {im.shape} differs from {shape}")
    mask = load_labels(cfg.initial_mask)
    if mask.shape != shape:
        raise ParameterError(f"initial mask {mask.shape} does not match frames {shape}")
    return images, sdf_from_mask(mask, cfg.inside_class)


def _overlay(image: ScalarField, contours, markers, opts: RenderOptions) -> np.ndarray:
    out = image.values.copy()
    out[rasterize_contours(contours, image.shape)] = opts.contour_value
    h, w = image.shape
    for x, y in markers:
        ix, iy = int(round(x)), int(round(y))
        if 0 <= ix < w and 0 <= iy < h:
            out[max(iy - 1, 0):iy + 2, max(ix - 1, 0):ix + 2] = opts.marker_value
    return out


def track(cfg: RunConfig, out: Path | None = None) -> dict:
    """Run the tracker and write per-frame artifacts under ``out``.

    Layout: ``contours/contour_NNN.csv``, ``phi/phi_NNN.ctf``,
    ``overlay/overlay_NNN.pgm``, ``markers.csv``, ``diagnostics.csv`` and
    ``manifest.json``. Returns the manifest.
    """
    out = Path(out or cfg.out or "track_out")
    images, phi0 = _load_inputs(cfg)
    for sub in ("contours", "phi", "overlay"):
        _mkdir(out / sub)
    markers = np.asarray(cfg.render.markers, dtype=np.float64).reshape(-1, 2)
    entries = []
    marker_rows = []
    diag_rows = []

    def write_frame(rec):
        t = rec.frame
        contours = extract_contour(rec.phi)
        pos = locate_markers(rec.psi, markers) if len(markers) else np.empty((0, 2))
        names = {
            "contour": f"contours/contour_{t:03d}.csv",
            "phi": f"phi/phi_{t:03d}.ctf",
            "overlay": f"overlay/overlay_{t:03d}.pgm",
        }
        try:
            write_contours_csv(contours, out / names["contour"])
            write_ctf(rec.phi, out / names["phi"])
            save_image(_overlay(images[t], contours, pos, cfg.render), out / names["overlay"])
        except OSError as e:
            raise DecodeError(f"{out}: cannot write frame {t} ({e.strerror or e})") from e
        entries.append({"frame": t, **names})
        for k, (x, y) in enumerate(pos):
            marker_rows.append([t, k, f"{x:.6f}", f"{y:.6f}"])
        if rec.diagnostics is not None:
            diag_rows.append(rec.diagnostics.row())
            d = rec.diagnostics
            log.info("frame %d  ess %.1f  max loglik %.3g  resampled %s  %.0f ms",
                     t, d.ess, d.max_log_likelihood, d.resampled, d.wall_ms)

    track_sequence(images, phi0, cfg.filter, cfg.flow, cfg.workers, on_frame=write_frame)
    try:
        with open(out / "markers.csv", "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["frame", "marker", "x", "y"])
            wr.writerows(marker_rows)
        with open(out / "diagnostics.csv", "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(StepDiagnostics.FIELDS)
            wr.writerows(diag_rows)
        manifest = {"frames": entries, "config": _config_summary(cfg), "shape": list(phi0.shape)}
        (out / "manifest.json").write_text(json.dumps(manifest, indent=2))
    except OSError as e:
        raise DecodeError(f"{out}: cannot write outputs ({e.strerror or e})") from e
    return manifest


# ---------------------------------------------------------------------------
# evaluation


def _truth_fields(manifest_path: Path, inside_class: int | None = None):
    man = _read_json(manifest_path)
    try:
        names = man["truth"]
    except KeyError:
        raise ConfigError(f"{manifest_path}: manifest has no 'truth' list") from None
    cls = inside_class if inside_class is not None else man.get("inside_class", 1)
    root = manifest_path.parent
    return {t: sdf_from_mask(load_labels(root / n), cls) for t, n in enumerate(names)}


def _manifest_path(p) -> Path:
    p = Path(p)
    return p / "manifest.json" if p.is_dir() else p


def evaluate(estimate, truth, band: float = 3.0, out=None, inside_class: int | None = None) -> dict:
    """Score a ``track`` output against a ``synth`` manifest over tracked frames (``t >= 1``)."""
    est_man_path = _manifest_path(estimate)
    est = _read_json(est_man_path)
    truth_phi = _truth_fields(_manifest_path(truth), inside_class)
    frames, est_phi, tru_phi = [], [], []
    for e in est.get("frames", []):
        t = int(e["frame"])
        if t >= 1 and t in truth_phi:
            frames.append(t)
            est_phi.append(read_scalar(est_man_path.parent / e["phi"]))
            tru_phi.append(truth_phi[t])
    if not frames:
        raise ConfigError("estimate and truth share no tracked frames")
    score = score_sequence(est_phi, tru_phi, band, frames)
    summary = score.summary()
    if out is not None:
        out = Path(out)
        try:
            if out.parent != Path(""):
                _mkdir(out.parent)
            write_scores_csv(score, out)
            out.with_suffix(".summary.json").write_text(json.dumps(summary, indent=2))
        except OSError as e:
            raise DecodeError(f"{out}: cannot write report ({e.strerror or e})") from e
    return summary


def compare_modes(cfg: RunConfig, out=None, band: float = 3.0) -> dict:
    """Track deterministically (no noise, one particle) and stochastically; report accumulated RMSE of each."""
    if cfg.truth is None:
        raise ConfigError("compare needs a ground-truth manifest ('truth' or a synth 'manifest')")
    out = Path(out or cfg.out or "compare_out")
    report = {}
    for mode, fcfg in (("deterministic", deterministic_config(cfg.filter)), ("stochastic", cfg.filter)):
        track(replace(cfg, filter=fcfg), out / mode)
        report[mode] = evaluate(out / mode, cfg.truth, band, out / f"{mode}.csv", cfg.inside_class)
    det = report["deterministic"]["accumulated_rmse"]
    sto = report["stochastic"]["accumulated_rmse"]
    report["ratio"] = det / sto if sto > 0 else float("inf")
    try:
        (out / "compare.json").write_text(json.dumps(report, indent=2))
    except OSError as e:
        raise DecodeError(f"{out}: cannot write report ({e.strerror or e})") from e
    return report


# ---------------------------------------------------------------------------
# synth


_BENCHMARKS = {"diapir": diapir_benchmark, "translate": translate_benchmark}


def synth(doc: dict, out, base: Path = Path(".")) -> dict:
    """Generate a sequence from a synth config; writes frames, truth masks and ``manifest.json``.

    The config names either a ``benchmark`` (with optional keyword overrides
    in ``benchmark_args``) or an ``initial_mask`` plus a ``deformation``.
    """
    out = _mkdir(Path(out))
    if "benchmark" in doc:
        maker = _BENCHMARKS.get(doc["benchmark"])
        if maker is None:
            raise ConfigError(f"unknown benchmark {doc['benchmark']!r}; choose from {sorted(_BENCHMARKS)}")
        try:
            mask, spec = maker(**(doc.get("benchmark_args") or {}))
        except TypeError as e:
            raise ConfigError(f"benchmark_args: {e}") from None
    else:
        if "initial_mask" not in doc or "deformation" not in doc:
            raise ConfigError("synth config needs 'benchmark' or both 'initial_mask' and 'deformation'")
        mask = load_labels(base / doc["initial_mask"])
        spec = DeformationSpec.from_dict(doc["deformation"])
    model = ClassModel.from_dict(doc["model"]) if "model" in doc else DEFAULT_MODEL
    seed = int(doc.get("seed", 0))
    gamma = float(doc.get("gamma", 2.0))
    images, truth = generate_sequence(mask, spec, model, seed, gamma)
    frames, masks = [], []
    try:
        for t, (im, lab) in enumerate(zip(images, truth)):
            f, m = f"frame_{t:03d}.pgm", f"truth_{t:03d}.pgm"
            save_image(im, out / f, bits=16)
            save_labels(lab, out / m)
            frames.append(f)
            masks.append(m)
        manifest = {"frames": frames, "truth": masks, "spec": spec.to_dict(), "model": model.to_dict(),
                    "seed": seed, "gamma": gamma, "inside_class": int(doc.get("inside_class", 1))}
        (out / "manifest.json").write_text(json.dumps(manifest, indent=2))
    except OSError as e:
        raise DecodeError(f"{out}: cannot write sequence ({e.strerror or e})") from e
    return manifest


# ---------------------------------------------------------------------------
# entry point


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="curvetrack", description="Stochastic level-set curve tracking.")
    p.add_argument("-v", "--verbose", action="store_true", help="log per-frame diagnostics")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="generate a synthetic sequence with ground truth")
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int)

    f = sub.add_parser("flow", help="Horn-Schunck flow between two frames")
    f.add_argument("--prev", required=True)
    f.add_argument("--next", required=True)
    f.add_argument("--alpha", type=float, default=FlowParams.alpha)
    f.add_argument("--iterations", type=int, default=FlowParams.max_iterations)
    f.add_argument("--tolerance", type=float, default=FlowParams.tolerance)
    f.add_argument("--out", required=True)
    f.add_argument("--magnitude", help="also write |w| as a PGM scaled to its maximum")

    t = sub.add_parser("track", help="track the initial mask through a sequence")
    t.add_argument("--config", required=True)
    t.add_argument("--seed", type=int)
    t.add_argument("--workers", type=int)
    t.add_argument("--out")

    e = sub.add_parser("eval", help="score a track run against ground truth")
    e.add_argument("--estimate", required=True)
    e.add_argument("--truth", required=True)
    e.add_argument("--band", type=float, default=3.0)
    e.add_argument("--out", required=True)

    c = sub.add_parser("compare", help="deterministic vs stochastic accumulated error")
    c.add_argument("--config", required=True)
    c.add_argument("--seed", type=int)
    c.add_argument("--workers", type=int)
    c.add_argument("--out")
    return p


def _run(args) -> None:
    if args.command == "synth":
        doc = _read_json(args.config)
        if args.seed is not None:
            doc["seed"] = args.seed
        man = synth(doc, args.out, Path(args.config).parent)
        print(f"wrote {len(man['frames'])} frames to {args.out}")
    elif args.command == "flow":
        params = _build(FlowParams, {"alpha": args.alpha, "max_iterations": args.iterations,
                                     "tolerance": args.tolerance}, "flow")
        a, b = load_image(args.prev), load_image(args.next)
        w = horn_schunck(a, b, params)
        mag = w.magnitude()
        try:
            write_ctf(w, args.out)
            if args.magnitude:
                peak = float(mag.max())
                save_image(ScalarField(mag / peak if peak > 0 else mag), args.magnitude)
        except OSError as e:
            raise DecodeError(f"{args.out}: cannot write ({e.strerror or e})") from e
        print(f"mean |w| = {float(mag.mean()):.4f} px/frame")
    elif args.command == "track":
        cfg = load_run_config(args.config, args.seed, args.workers, args.out)
        man = track(cfg)
        print(f"tracked {len(man['frames'])} frames into {cfg.out or 'track_out'}")
    elif args.command == "eval":
        summary = evaluate(args.estimate, args.truth, args.band, args.out)
        print(json.dumps(summary))
    elif args.command == "compare":
        cfg = load_run_config(args.config, args.seed, args.workers, args.out)
        report = compare_modes(cfg)
        print(json.dumps({"deterministic": report["deterministic"]["accumulated_rmse"],
                          "stochastic": report["stochastic"]["accumulated_rmse"],
                          "ratio": report["ratio"]}))


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        _run(args)
    except CurveTrackError as e:
        print(f"curvetrack: error: {e}", file=sys.stderr)
        return e.exit_code
    except OSError as e:
        print(f"curvetrack: I/O error: {e}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
