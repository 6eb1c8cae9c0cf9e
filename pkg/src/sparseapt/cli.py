"""Command-line interface: ``sparseapt {train,baseline,compress,eval,inspect,kmeans}``.

Every run is driven by a JSON config file plus flag overrides (flags win).
Errors go to stderr as ``sparseapt-error: <kind>: <message>`` with a nonzero
exit status.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import data, kmeans1d
from .compression import (
    accounting,
    compression_rate,
    decode,
    encode,
    encode_dense,
    max_compression_rate,
    payload_compression_rate,
    quantize_tied,
    snap_quantize,
    sparsity_stats,
)
from .compression.modelfile import KIND_DENSE, DecodedModel
from .nn import NetworkSpec, ParamVector, error_rate
from .trainer import AptConfig, random_tying_baseline, run_apt

ERROR_PREFIX = "sparseapt-error"
METRIC_COLUMNS = (
    "step", "phase", "data_loss", "j", "l1", "total", "train_error",
    "val_loss", "val_error", "inertia", "change_ratio", "nonzero_fraction",
)


class CliError(Exception):
    def __init__(self, kind: str, message: str):
        super().__init__(message)
        self.kind = kind


@dataclass
class RunConfig:
    dataset: str = "digits"  # digits | blobs | mnist | npz
    data_path: str | None = None  # IDX directory (mnist) or .npz cache (npz)
    validation_fraction: float = 0.1
    split_seed: int = 0
    hidden: list[int] = field(default_factory=lambda: [64, 32])
    include_bias: bool = True
    blob_classes: int = 4
    blob_per_class: int = 250
    blob_dim: int = 8
    blob_separation: float = 3.0
    report: str = "csv"
    apt: AptConfig = field(default_factory=AptConfig)

    def to_dict(self) -> dict:
        out = {f.name: getattr(self, f.name) for f in dataclasses.fields(self) if f.name != "apt"}
        out["hidden"] = list(self.hidden)
        out.update(self.apt.to_dict())
        return out


RUN_KEYS = {f.name for f in dataclasses.fields(RunConfig)} - {"apt"}
APT_KEYS = {f.name for f in dataclasses.fields(AptConfig)}


def build_config(raw: dict) -> RunConfig:
    unknown = sorted(set(raw) - RUN_KEYS - APT_KEYS)
    if unknown:
        raise CliError("config", f"unknown keys: {', '.join(unknown)}")
    try:
        apt = AptConfig(**{k: v for k, v in raw.items() if k in APT_KEYS})
        cfg = RunConfig(**{k: v for k, v in raw.items() if k in RUN_KEYS}, apt=apt)
    except (TypeError, ValueError) as exc:
        raise CliError("config", str(exc)) from exc
    if cfg.dataset not in ("digits", "blobs", "mnist", "npz"):
        raise CliError("config", f"unknown dataset {cfg.dataset!r}")
    if cfg.report not in ("csv", "jsonl"):
        raise CliError("config", f"report must be csv or jsonl, got {cfg.report!r}")
    cfg.hidden = [int(h) for h in cfg.hidden]
    return cfg


def load_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise CliError("io", f"cannot read config {path}: {exc.strerror}") from exc
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CliError("config", f"{path}:{exc.lineno}: {exc.msg}") from exc
    if not isinstance(raw, dict):
        raise CliError("config", f"{path}: top level must be an object")
    return raw


# flag dest -> config key
FLAG_KEYS = {
    "seed": "seed",
    "k": "k",
    "lambda1": "lambda1",
    "lambda2": "lambda2",
    "kmeans_period": "kmeans_period",
    "soft_iters": "soft_budget",
    "hard_iters": "hard_budget",
    "optimizer": "optimizer",
    "tie_biases": "tie_biases",
    "report": "report",
}


def resolve_config(args) -> RunConfig:
    raw = load_config(args.config)
    for dest, key in FLAG_KEYS.items():
        v = getattr(args, dest, None)
        if v is not None:
            raw[key] = (v == "on") if dest == "tie_biases" else v
    return build_config(raw)


@dataclass
class Task:
    train: data.Dataset
    val: data.Dataset | None
    test: data.Dataset | None

    @property
    def eval_set(self) -> data.Dataset:
        return self.test if self.test is not None else self.val


def _find(directory: Path, stem: str) -> Path:
    for name in (stem, stem + ".gz"):
        if (directory / name).exists():
            return directory / name
    raise CliError("data", f"{stem}[.gz] not found in {directory}")


def load_task(cfg: RunConfig) -> Task:
    if cfg.dataset == "digits":
        full = data.load_digits_dataset()
    elif cfg.dataset == "blobs":
        full = data.synthetic_blobs(cfg.blob_classes, cfg.blob_per_class, cfg.blob_dim, cfg.blob_separation, cfg.split_seed)
    elif cfg.dataset == "npz":
        if not cfg.data_path:
            raise CliError("config", "dataset npz needs data_path")
        full = data.load_dataset(cfg.data_path)
    else:
        if not cfg.data_path:
            raise CliError("config", "dataset mnist needs data_path (directory of IDX files)")
        d = Path(cfg.data_path)
        full = data.load_idx(_find(d, "train-images-idx3-ubyte"), _find(d, "train-labels-idx1-ubyte"))
        test = data.load_idx(_find(d, "t10k-images-idx3-ubyte"), _find(d, "t10k-labels-idx1-ubyte"))
        train, val = data.split(full, cfg.validation_fraction, cfg.split_seed)
        return Task(train, val if len(val) else None, data.normalize(test, train.normalization))
    train, val = data.split(full, cfg.validation_fraction, cfg.split_seed)
    return Task(train, val if len(val) else None, None)


def network_spec(cfg: RunConfig, task: Task) -> NetworkSpec:
    n_classes = max(task.train.n_classes, task.eval_set.n_classes if task.eval_set is not None else 0)
    return NetworkSpec((task.train.n_features, *cfg.hidden, n_classes), include_bias=cfg.include_bias)


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_rows(path: Path, rows: list[dict], columns: list[str], fmt: str) -> None:
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r[c]) for c in columns])
        path.write_text(buf.getvalue())
    else:
        lines = []
        for r in rows:
            clean = {c: (None if isinstance(r[c], float) and math.isnan(r[c]) else r[c]) for c in columns}
            lines.append(json.dumps(clean))
        path.write_text("".join(line + "\n" for line in lines))


def read_rows(path: Path) -> list[dict]:
    text = path.read_text()
    if path.suffix == ".jsonl":
        rows = [json.loads(line) for line in text.splitlines() if line.strip()]
        return [{k: (float("nan") if v is None else v) for k, v in r.items()} for r in rows]
    rows = list(csv.DictReader(io.StringIO(text)))
    out = []
    for r in rows:
        out.append({k: (v if k == "phase" else float(v)) for k, v in r.items()})
    return out


def _out_dir(args) -> Path:
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise CliError("io", f"cannot create output directory {out}: {exc.strerror}") from exc
    return out


def cmd_train(args, baseline: bool = False) -> int:
    cfg = resolve_config(args)
    out = _out_dir(args)
    task = load_task(cfg)
    spec = network_spec(cfg, task)
    runner = random_tying_baseline if baseline else run_apt
    result = runner(spec, task.train, task.val, cfg.apt, keep_soft_end=True)

    columns = list(METRIC_COLUMNS) + [f"center_{i}" for i in range(cfg.apt.k)]
    ext = "csv" if cfg.report == "csv" else "jsonl"
    write_rows(out / f"metrics.{ext}", result.metrics, columns, cfg.report)
    (out / "config.json").write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n")
    zero = result.zero_cluster_id is not None
    (out / "model.sapt").write_bytes(encode_dense(result.params, cfg.apt.k, zero, cfg.apt.tie_biases).data)
    (out / "soft_end.sapt").write_bytes(encode_dense(result.soft_end_params, cfg.apt.k, False, cfg.apt.tie_biases).data)

    final = result.metrics[-1]
    summary = {"val_error": final["val_error"], "nonzero_fraction": final["nonzero_fraction"]}
    if task.test is not None:
        summary["test_error"] = error_rate(spec, result.params, task.test.features, task.test.labels)
    for key, v in summary.items():
        print(f"{key},{_fmt(v)}")
    return 0


def _read_model(path: str) -> DecodedModel:
    try:
        blob = Path(path).read_bytes()
    except OSError as exc:
        raise CliError("io", f"cannot read model {path}: {exc.strerror}") from exc
    try:
        return decode(blob)
    except ValueError as exc:
        raise CliError("model", f"{path}: {exc}") from exc


def _eval_error(args, params: ParamVector) -> float | None:
    if args.config is None:
        return None
    cfg = resolve_config(args)
    ds = load_task(cfg).eval_set
    if ds is None:
        return None
    return error_rate(params.spec, params, ds.features, ds.labels)


def cmd_compress(args) -> int:
    model = _read_model(args.model)
    params = model.params
    if model.kind != KIND_DENSE:
        raise CliError("model", f"{args.model} is already encoded")
    k = args.k if args.k is not None else model.k
    if k < 1:
        raise CliError("usage", "model file does not record K; pass --k")
    tie = model.tie_biases
    if args.snap:
        q = snap_quantize(params, k, args.bits, tie, zero_cluster=model.zero_cluster_flag)
    else:
        try:
            q = quantize_tied(params, args.bits, tie, max_k=k)
        except ValueError as exc:
            raise CliError("model", f"{exc}; pass --snap to cluster a dense model first") from exc
        if not q.exact:
            raise CliError("model", f"tied values are not representable at {args.bits} bits; pass --snap")
    zero = q.zero_cluster() if model.zero_cluster_flag else None
    enc = encode(q, zero, args.offset_bits, huffman_offsets=not args.raw_offsets)
    try:
        Path(args.out).write_bytes(enc.data)
    except OSError as exc:
        raise CliError("io", f"cannot write {args.out}: {exc.strerror}") from exc

    stats = sparsity_stats(q)
    n = params.spec.n_params
    report = [
        ("n_params", n),
        ("k", k),
        ("bits", args.bits),
        ("sparse", int(enc.packed.sparse)),
        ("nonzero_percent", 100.0 * stats.nonzero_fraction),
        ("codebook_rate", compression_rate(n, args.bits, k)),
        ("max_compression_rate", max_compression_rate(enc, args.bits)),
        ("payload_compression_rate", payload_compression_rate(enc, args.bits)),
        ("file_bytes", len(enc.data)),
    ]
    err = _eval_error(args, q.dequantize())
    if err is not None:
        report.insert(4, ("error_percent", 100.0 * err))
    report += [(f"bits_{name}", bits) for name, bits in accounting(enc)]
    _emit_report(report, args.report or "csv")
    return 0


def _emit_report(items, fmt: str) -> None:
    if fmt == "csv":
        print("key,value")
        for key, v in items:
            print(f"{key},{_fmt(v)}")
    else:
        print(json.dumps(dict(items)))


def cmd_eval(args) -> int:
    model = _read_model(args.model)
    if args.config is None:
        raise CliError("usage", "eval needs --config to locate the dataset")
    err = _eval_error(args, model.params)
    print(f"error,{_fmt(err)}")
    return 0


def cmd_inspect(args) -> int:
    out = _out_dir(args)
    path = Path(args.input)
    if not path.exists():
        raise CliError("io", f"{path} does not exist")
    from . import plots

    if path.suffix in (".csv", ".jsonl"):
        rows = read_rows(path)
        if not rows:
            raise CliError("metrics", f"{path} has no rows")
        centers = sorted((c for c in rows[0] if c.startswith("center_")), key=lambda c: int(c[7:]))
        steps = np.array([r["step"] for r in rows])
        mat = np.array([[r[c] for c in centers] for r in rows])
        phases = [r["phase"] for r in rows]
        write_rows(out / "centers.csv",
                   [{"step": int(r["step"]), "phase": r["phase"], **{c: r[c] for c in centers}} for r in rows],
                   ["step", "phase", *centers], "csv")
        write_rows(out / "change_ratio.csv",
                   [{"step": int(r["step"]), "phase": r["phase"], "change_ratio": r["change_ratio"]} for r in rows],
                   ["step", "phase", "change_ratio"], "csv")
        if not args.no_plots:
            plots.center_trajectories(steps, mat, phases, out / "centers.png")
            plots.change_ratio(steps, np.array([r["change_ratio"] for r in rows]), out / "change_ratio.png")
        return 0

    model = _read_model(str(path))
    values = model.params.values
    counts, edges = np.histogram(values, bins=args.bins)
    write_rows(out / "histogram.csv",
               [{"left": float(a), "right": float(b), "count": int(c)} for a, b, c in zip(edges[:-1], edges[1:], counts)],
               ["left", "right", "count"], "csv")
    stats = sparsity_stats(model.params)
    layer_rows = [
        {"layer": ls.layer, "rows": ls.shape[0], "cols": ls.shape[1], "nonzero": ls.nonzero,
         "zero_rows": ls.zero_rows, "zero_cols": ls.zero_cols,
         "row_sparsity": ls.row_sparsity, "col_sparsity": ls.col_sparsity}
        for ls in stats.layers
    ]
    write_rows(out / "sparsity.csv", layer_rows,
               ["layer", "rows", "cols", "nonzero", "zero_rows", "zero_cols", "row_sparsity", "col_sparsity"], "csv")
    if not args.no_plots:
        plots.histogram(edges, counts, out / "histogram.png")
        plots.sparsity_bars([r["layer"] for r in layer_rows], [r["row_sparsity"] for r in layer_rows],
                            [r["col_sparsity"] for r in layer_rows], out / "sparsity.png")
    return 0


def parse_values(text: str, source: str = "<input>") -> np.ndarray:
    """One or more reals per line (comma or whitespace separated); '#' starts a comment."""
    vals = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0]
        for tok in line.replace(",", " ").split():
            try:
                v = float(tok)
            except ValueError:
                raise CliError("parse", f"{source}:{lineno}: cannot parse {tok!r} as a number") from None
            if not math.isfinite(v):
                raise CliError("parse", f"{source}:{lineno}: non-finite value {tok!r}")
            vals.append(v)
    if not vals:
        raise CliError("parse", f"{source}: no values")
    return np.array(vals)


def cmd_kmeans(args) -> int:
    if args.values == "-":
        text, source = sys.stdin.read(), "<stdin>"
    else:
        try:
            text, source = Path(args.values).read_text(), args.values
        except OSError as exc:
            raise CliError("io", f"cannot read {args.values}: {exc.strerror}") from exc
    x = parse_values(text, source)
    k = args.k if args.k is not None else 2
    n_distinct = np.unique(x).size
    if k < 1 or k > n_distinct:
        raise CliError("usage", f"k={k} must be between 1 and the number of distinct values ({n_distinct})")
    view = kmeans1d.build_sorted_view(x)
    if args.exact:
        cl = kmeans1d.kmeans_dp_exact(view, k)
    else:
        lo, hi = float(x.min()), float(x.max())
        cl = kmeans1d.kmeans_fast(x, kmeans1d.init_centers_uniform(lo, hi, k), max_iters=args.max_iters, view=view)
    items = [("centers", [float(c) for c in cl.centers]),
             ("assignments", [int(a) for a in cl.assignments]),
             ("inertia", float(cl.inertia))]
    if (args.report or "csv") == "csv":
        print("centers," + ",".join(repr(c) for c in items[0][1]))
        print("assignments," + ",".join(str(a) for a in items[1][1]))
        print(f"inertia,{items[2][1]!r}")
    else:
        print(json.dumps(dict(items)))
    return 0


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    p.add_argument("--k", type=int)
    p.add_argument("--lambda1", type=float)
    p.add_argument("--lambda2", type=float)
    p.add_argument("--kmeans-period", type=int)
    p.add_argument("--soft-iters", type=int)
    p.add_argument("--hard-iters", type=int)
    p.add_argument("--optimizer", choices=["sgd", "adadelta"])
    p.add_argument("--tie-biases", choices=["on", "off"])
    p.add_argument("--report", choices=["csv", "jsonl"])


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(2, f"{ERROR_PREFIX}: usage: {message}\n")


def make_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sparseapt")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    for name in ("train", "baseline"):
        p = sub.add_parser(name)
        _add_train_flags(p)
        p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("compress")
    p.add_argument("model")
    _add_train_flags(p)
    p.add_argument("--out", required=True, help="encoded model file")
    p.add_argument("--bits", type=int, choices=[16, 32], default=32)
    p.add_argument("--offset-bits", type=int, default=8)
    p.add_argument("--raw-offsets", action="store_true", help="store offsets at fixed width instead of Huffman")
    p.add_argument("--snap", action="store_true", help="cluster a dense model with kmeans_fast first")

    p = sub.add_parser("eval")
    p.add_argument("model")
    _add_train_flags(p)

    p = sub.add_parser("inspect")
    p.add_argument("input", help="model file or metrics file (.csv / .jsonl)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--bins", type=int, default=100)
    p.add_argument("--no-plots", action="store_true")

    p = sub.add_parser("kmeans")
    p.add_argument("values", help="file of reals, or - for stdin")
    p.add_argument("--k", type=int)
    p.add_argument("--exact", action="store_true")
    p.add_argument("--max-iters", type=int, default=100)
    p.add_argument("--report", choices=["csv", "jsonl"])
    return parser


COMMANDS = {
    "train": cmd_train,
    "baseline": lambda a: cmd_train(a, baseline=True),
    "compress": cmd_compress,
    "eval": cmd_eval,
    "inspect": cmd_inspect,
    "kmeans": cmd_kmeans,
}


def main(argv: list[str] | None = None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    if args.verbose:
        import logging

        logging.basicConfig(level=logging.INFO, stream=sys.stderr)
    try:
        return COMMANDS[args.command](args)
    except CliError as exc:
        print(f"{ERROR_PREFIX}: {exc.kind}: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError) as exc:
        print(f"{ERROR_PREFIX}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
