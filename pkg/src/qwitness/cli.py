"""Command-line interface.

Subcommands:
  train   optimize one system at a fixed qubit count
  stage   transfer-learning schedule over a growing qubit count
  plot    turn a run directory into CSV/SVG summaries
  eval    evaluate a trained checkpoint's witness on a stored state

Exit codes: 0 success, 2 invalid configuration (reported with the offending
line number, nothing written), 3 runtime failure, 4 training stalled (no
accepted update in the final fifth of the epochs).
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time

import numpy as np

from . import seeding
from .circuit import Backend, run_circuit, weights_from_json
from .dynamics import (
    EvolutionConfig,
    evolve,
    fourier_basis,
    params_from_json,
    qubit_pairs,
)
from .models import (
    CIRCUIT_HYPER,
    HAMILTONIAN_HYPER,
    CircuitModel,
    HamiltonianModel,
    init_circuit_weights,
    init_hamiltonian_params,
)
from .optim import OPTIMIZERS, run_training
from .qstate import estimate_from_value, sample_witness, state_from_json, witness_expectation
from .training import (
    DEFAULT_STAGE_EPOCHS,
    StagePlan,
    atomic_write_text,
    epoch_csv_text,
    make_training_set,
    run_stage_plan,
    _parse_cell,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3
EXIT_STALLED = 4

BACKEND_MODES = ("exact", "shots")
MODEL_KINDS = ("hamiltonian", "circuit")


class ConfigError(Exception):
    """Invalid configuration; the message names the source line or option."""


def _key_line(text: str, key: str) -> str:
    for ln, line in enumerate(text.splitlines(), 1):
        if f'"{key}"' in line:
            return f"line {ln}"
    return f'key "{key}"'


def _load_config(path: str | None) -> tuple[dict, str]:
    if path is None:
        return {}, ""
    try:
        text = open(path).read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config line {exc.lineno}: {exc.msg}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config line 1: top level must be a JSON object")
    return data, text


class _Config:
    """Merged file + flag configuration with per-field validation."""

    def __init__(self, data: dict, text: str, args: argparse.Namespace, fields: dict):
        self._data = dict(data)
        self._text = text
        self._args = args
        self._fields = fields
        unknown = set(self._data) - set(fields)
        if unknown:
            key = sorted(unknown)[0]
            raise ConfigError(f"config {_key_line(text, key)}: unknown key {key!r}")

    def _where(self, key: str, from_flag: bool) -> str:
        if from_flag:
            return f"option --{key.replace('_', '-')}"
        return f"config {_key_line(self._text, key)}"

    def get(self, key: str):
        flag = getattr(self._args, key, None)
        from_flag = flag is not None
        value = flag if from_flag else self._data.get(key, self._fields[key][1])
        kind, _default, check, why = self._fields[key]
        if value is None:
            raise ConfigError(f"missing required setting {key!r} (config key or --{key.replace('_', '-')})")
        if kind is float and isinstance(value, int) and not isinstance(value, bool):
            value = float(value)
        if not isinstance(value, kind) or isinstance(value, bool) and kind is not bool:
            raise ConfigError(f"{self._where(key, from_flag)}: {key} must be {kind.__name__}")
        if check is not None and not check(value):
            raise ConfigError(f"{self._where(key, from_flag)}: {key} {why}")
        return value

    def get_hyper(self, model_kind: str) -> dict:
        defaults = HAMILTONIAN_HYPER if model_kind == "hamiltonian" else CIRCUIT_HYPER
        merged = {cls: dict(vals) for cls, vals in defaults.items()}
        override = self._data.get("hyper", {})
        where = f"config {_key_line(self._text, 'hyper')}"
        if not isinstance(override, dict):
            raise ConfigError(f"{where}: hyper must be an object")
        for cls, vals in override.items():
            if cls not in merged:
                raise ConfigError(f"{where}: unknown parameter class {cls!r} for {model_kind} model")
            if not isinstance(vals, dict):
                raise ConfigError(f"{where}: hyper[{cls!r}] must be an object")
            for name, value in vals.items():
                if name not in ("init", "perturbation", "rate"):
                    raise ConfigError(f"{where}: unknown hyperparameter {name!r}")
                if isinstance(value, bool) or not isinstance(value, (int, float)) or value < 0:
                    raise ConfigError(f"{where}: hyper[{cls!r}][{name!r}] must be a number >= 0")
                merged[cls][name] = float(value)
        return merged


# field: (type, default, predicate, reason)
_COMMON_FIELDS = {
    "seed": (int, None, lambda v: v >= 0, "must be >= 0"),
    "model": (str, "hamiltonian", lambda v: v in MODEL_KINDS, f"must be one of {MODEL_KINDS}"),
    "optimizer": (str, "lm", lambda v: v in OPTIMIZERS, f"must be one of {OPTIMIZERS}"),
    "backend": (str, "exact", lambda v: v in BACKEND_MODES, f"must be one of {BACKEND_MODES}"),
    "shots": (int, 1024, lambda v: v >= 1, "must be >= 1"),
    "t_f_ns": (float, 200.0, lambda v: v > 0, "must be > 0"),
    "n_steps": (int, 400, lambda v: v >= 1, "must be >= 1"),
    "n_segments": (int, 4, lambda v: v >= 1, "must be >= 1"),
    "harmonics": (int, 3, lambda v: v >= 0, "must be >= 0"),
    "rnp": (float, 0.0, lambda v: 0.0 <= v <= 1.0, "must be in [0, 1]"),
    "workers": (int, 1, lambda v: v >= 1, "must be >= 1"),
    "hyper": (dict, {}, None, ""),
    "out": (str, None, None, ""),
}
_TRAIN_FIELDS = dict(
    _COMMON_FIELDS,
    n_qubits=(int, 2, lambda v: 2 <= v <= 12, "must be in [2, 12]"),
    epochs=(int, 20, lambda v: v >= 1, "must be >= 1"),
)
_STAGE_FIELDS = dict(
    _COMMON_FIELDS,
    qubits=(list, None, None, ""),
    epochs=(list, None, None, ""),
)


def _resolved_json(settings: dict) -> str:
    return json.dumps(settings, indent=2, sort_keys=True) + "\n"


def _build_model(kind: str, n_qubits: int, seed: int, hyper: dict, t_f: float,
                 n_steps: int, harmonics: int, n_segments: int):
    rng = seeding.derive_rng(seed, seeding.INIT, n_qubits)
    if kind == "hamiltonian":
        params = init_hamiltonian_params(n_qubits, rng, t_f=t_f, harmonics=harmonics, hyper=hyper)
        return HamiltonianModel(params, EvolutionConfig(n_steps=n_steps), hyper=hyper)
    weights = init_circuit_weights(n_qubits, rng, n_segments=n_segments, t_f=t_f, hyper=hyper)
    return CircuitModel(weights, hyper=hyper, t_f=t_f)


def _make_backend(mode: str, shots: int, seed: int) -> Backend:
    if mode == "exact":
        return Backend(mode="exact")
    return Backend(mode="shots", shots=shots, seed=seed)


def _stalled(records: list[dict]) -> bool:
    epochs = [r for r in records if r["epoch"] >= 1]
    if not epochs:
        return False
    tail = epochs[-max(1, math.ceil(0.2 * len(epochs))):]
    return all(not r["accepted"] for r in tail)


def _print_record(rec: dict) -> None:
    lam = "" if rec["lambda"] is None else f" lambda={rec['lambda']:.3e}"
    flag = "accepted" if rec["accepted"] else "rejected"
    print(f"epoch {rec['epoch']:4d}  rms={rec['rms']:.6f}{lam}  {flag}", flush=True)


def cmd_train(args: argparse.Namespace) -> int:
    data, text = _load_config(args.config)
    cfg = _Config(data, text, args, _TRAIN_FIELDS)
    seed = cfg.get("seed")
    n_qubits = cfg.get("n_qubits")
    model_kind = cfg.get("model")
    optimizer = cfg.get("optimizer")
    backend_mode = cfg.get("backend")
    shots = cfg.get("shots")
    epochs = cfg.get("epochs")
    t_f = cfg.get("t_f_ns")
    n_steps = cfg.get("n_steps")
    n_segments = cfg.get("n_segments")
    harmonics = cfg.get("harmonics")
    cfg.get("rnp")  # readout-noise placeholder: validated, not yet used
    workers = cfg.get("workers")
    hyper = cfg.get_hyper(model_kind)
    out = args.out if args.out is not None else cfg._data.get("out")
    if out is None:
        raise ConfigError("missing required setting 'out' (config key or --out)")

    resolved = {
        "seed": seed, "n_qubits": n_qubits, "model": model_kind, "optimizer": optimizer,
        "backend": backend_mode, "shots": shots, "epochs": epochs, "t_f_ns": t_f,
        "n_steps": n_steps, "n_segments": n_segments, "harmonics": harmonics,
        "rnp": cfg.get("rnp"), "workers": workers, "hyper": hyper,
    }

    os.makedirs(out, exist_ok=True)
    atomic_write_text(os.path.join(out, "resolved_config.json"), _resolved_json(resolved))

    ckpt_path = os.path.join(out, "checkpoint.json")
    csv_path = os.path.join(out, "epochs.csv")
    records: list[dict] = []
    first_epoch = 1
    model = _build_model(model_kind, n_qubits, seed, hyper, t_f, n_steps, harmonics, n_segments)
    if args.resume and os.path.exists(ckpt_path) and os.path.exists(csv_path):
        ckpt = open(ckpt_path).read()
        params = params_from_json(ckpt) if model_kind == "hamiltonian" else weights_from_json(ckpt)
        if model_kind == "hamiltonian":
            model = HamiltonianModel(params, EvolutionConfig(n_steps=n_steps), hyper=hyper)
        else:
            model = CircuitModel(params, hyper=hyper, t_f=t_f)
        with open(csv_path) as fh:
            lines = fh.read().splitlines()
        cols = lines[0].split(",")
        for line in lines[1:]:
            records.append(dict(zip(cols, (_parse_cell(c) for c in line.split(",")))))
        first_epoch = max(r["epoch"] for r in records) + 1 if records else 1

    training_set = make_training_set(n_qubits)
    backend = _make_backend(backend_mode, shots, seed)

    def on_record(rec: dict) -> None:
        records.append(rec)
        atomic_write_text(csv_path, epoch_csv_text(records))
        atomic_write_text(ckpt_path, model.checkpoint_text())
        _print_record(rec)

    t0 = time.perf_counter()
    remaining = epochs - (first_epoch - 1)
    if remaining > 0:
        run_training(
            model, training_set, optimizer, remaining, backend,
            hyper=hyper, n_workers=workers, on_record=on_record, first_epoch=first_epoch,
        )
    wall_ms = 1000.0 * (time.perf_counter() - t0)
    if not records:
        raise RuntimeError("no epochs were recorded")
    summary = {
        "seed": seed,
        "start_rms": records[0]["rms"],
        "finish_rms": records[-1]["rms"],
        "epochs_run": max(r["epoch"] for r in records),
        "wall_ms": wall_ms,
    }
    atomic_write_text(os.path.join(out, "summary.json"), json.dumps(summary, indent=2) + "\n")
    print(f"finished: rms {summary['start_rms']:.6f} -> {summary['finish_rms']:.6f} "
          f"({summary['epochs_run']} epochs)")
    if _stalled(records):
        print("stalled: no accepted update in the final fifth of the epochs", file=sys.stderr)
        return EXIT_STALLED
    return EXIT_OK


def cmd_stage(args: argparse.Namespace) -> int:
    data, text = _load_config(args.config)
    cfg = _Config(data, text, args, _STAGE_FIELDS)
    seed = cfg.get("seed")
    model_kind = cfg.get("model")
    optimizer = cfg.get("optimizer")
    backend_mode = cfg.get("backend")
    shots = cfg.get("shots")
    t_f = cfg.get("t_f_ns")
    n_steps = cfg.get("n_steps")
    n_segments = cfg.get("n_segments")
    harmonics = cfg.get("harmonics")
    cfg.get("rnp")
    workers = cfg.get("workers")
    hyper = cfg.get_hyper(model_kind)
    out = args.out if args.out is not None else data.get("out")
    if out is None:
        raise ConfigError("missing required setting 'out' (config key or --out)")

    if args.qubits is not None:
        if args.qubits < 2:
            raise ConfigError("option --qubits: must be >= 2 for a stage run")
        qubits = list(range(2, args.qubits + 1))
    else:
        qubits = data.get("qubits")
        if qubits is None:
            raise ConfigError("missing required setting 'qubits' (config key or --qubits)")
        where = f"config {_key_line(text, 'qubits')}"
        if (not isinstance(qubits, list) or not qubits
                or not all(isinstance(q, int) and not isinstance(q, bool) for q in qubits)):
            raise ConfigError(f"{where}: qubits must be a nonempty list of integers")
    epochs = data.get("epochs")
    if epochs is None:
        if len(qubits) > len(DEFAULT_STAGE_EPOCHS):
            raise ConfigError(f"config: no default epoch schedule for {len(qubits)} stages; set 'epochs'")
        epochs = list(DEFAULT_STAGE_EPOCHS[: len(qubits)])
    else:
        where = f"config {_key_line(text, 'epochs')}"
        if (not isinstance(epochs, list)
                or not all(isinstance(e, int) and not isinstance(e, bool) and e >= 1 for e in epochs)):
            raise ConfigError(f"{where}: epochs must be a list of integers >= 1")
    if max(qubits) > 12:
        raise ConfigError("config: stages beyond 12 qubits are not supported")

    try:
        plan = StagePlan(
            qubits=tuple(qubits), epochs=tuple(epochs), optimizer=optimizer,
            model_kind=model_kind, backend_mode=backend_mode, shots=shots, seed=seed,
            t_f=t_f, n_steps=n_steps, harmonics=harmonics, n_segments=n_segments,
            hyper=hyper, n_workers=workers,
        )
    except ValueError as exc:
        raise ConfigError(f"config: {exc}") from exc

    resolved = {
        "seed": seed, "qubits": qubits, "epochs": epochs, "model": model_kind,
        "optimizer": optimizer, "backend": backend_mode, "shots": shots, "t_f_ns": t_f,
        "n_steps": n_steps, "n_segments": n_segments, "harmonics": harmonics,
        "rnp": cfg.get("rnp"), "workers": workers, "hyper": hyper,
    }
    os.makedirs(out, exist_ok=True)
    atomic_write_text(os.path.join(out, "resolved_config.json"), _resolved_json(resolved))

    stage_records = run_stage_plan(plan, out_dir=out, resume=args.resume)
    for rec in stage_records:
        print(f"stage {rec['n_qubits']:2d} qubits  pairs={rec['n_pairs']:3d}  "
              f"epochs={rec['epochs']:3d}  rms {rec['start_rms']:.6f} -> {rec['finish_rms']:.6f}")

    stalled = False
    for n_qubits in plan.qubits:
        path = os.path.join(out, f"stage_{n_qubits}", "epochs.csv")
        if not os.path.exists(path):
            continue
        with open(path) as fh:
            lines = fh.read().splitlines()
        cols = lines[0].split(",")
        recs = [dict(zip(cols, (_parse_cell(c) for c in line.split(",")))) for line in lines[1:]]
        if _stalled(recs):
            stalled = True
    if stalled:
        print("stalled: a stage made no accepted update in its final fifth", file=sys.stderr)
        return EXIT_STALLED
    return EXIT_OK


def _load_checkpoint(path: str):
    """Return ("hamiltonian", HamiltonianParams) or ("circuit", CircuitWeights)."""
    text = open(path).read()
    data = json.loads(text)
    if "angles" in data:
        return "circuit", weights_from_json(text)
    if "K" in data:
        return "hamiltonian", params_from_json(text)
    raise ValueError(f"{path} is not a recognized checkpoint")


def cmd_eval(args: argparse.Namespace) -> int:
    kind, params = _load_checkpoint(args.checkpoint)
    state = state_from_json(open(args.state).read())
    alpha, beta = args.pair
    if args.backend == "shots" and args.seed is None:
        raise ConfigError("option --seed: required when --backend shots")
    if args.shots < 1:
        raise ConfigError("option --shots: must be >= 1")
    if kind == "hamiltonian":
        if state.n_qubits != params.n_qubits:
            raise ValueError(f"state has {state.n_qubits} qubits, checkpoint {params.n_qubits}")
        traj = evolve(state, params, EvolutionConfig(n_steps=args.n_steps))
        if args.backend == "exact":
            est = estimate_from_value(witness_expectation(traj.final, alpha, beta))
        else:
            est = sample_witness(traj.final, alpha, beta, args.shots,
                                 seeding.derive_seed(args.seed, seeding.RESIDUAL, 0))
    else:
        backend = _make_backend(args.backend, args.shots, args.seed if args.seed is not None else 0)
        est = run_circuit(params, state, alpha, beta, backend)
    print(json.dumps({"value": est.value, "std_err": est.std_err, "shots": est.shots}))
    return EXIT_OK


def _read_csv_records(path: str) -> list[dict]:
    with open(path) as fh:
        lines = fh.read().splitlines()
    cols = lines[0].split(",")
    return [dict(zip(cols, (_parse_cell(c) for c in line.split(",")))) for line in lines[1:]]


def _write_xy_csv(path: str, header: tuple[str, ...], rows: list[tuple]) -> None:
    lines = [",".join(header)]
    lines += [",".join(repr(float(v)) if isinstance(v, float) else str(v) for v in row) for row in rows]
    atomic_write_text(path, "\n".join(lines) + "\n")


def _save_plot(path: str, xs, series: dict, xlabel: str, ylabel: str, logy: bool = False) -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 4))
    for label, ys in series.items():
        ax.plot(xs, ys, label=label)
    if logy:
        ax.set_yscale("log")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if len(series) > 1:
        ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def cmd_plot(args: argparse.Namespace) -> int:
    run_dir = args.run
    out_dir = args.out if args.out is not None else run_dir
    csv_path = os.path.join(run_dir, "epochs.csv")
    if not os.path.exists(csv_path):
        raise FileNotFoundError(f"{csv_path} not found; point --run at a train output directory")
    os.makedirs(out_dir, exist_ok=True)
    records = _read_csv_records(csv_path)

    epochs = [r["epoch"] for r in records]
    rms = [r["rms"] for r in records]
    _write_xy_csv(os.path.join(out_dir, "rms.csv"), ("epoch", "rms"), list(zip(epochs, rms)))
    _save_plot(os.path.join(out_dir, "rms.svg"), epochs, {"rms": rms}, "epoch", "rms error")

    lam_rows = [(r["epoch"], r["lambda"]) for r in records if r["lambda"] is not None]
    if lam_rows:
        _write_xy_csv(os.path.join(out_dir, "lambda.csv"), ("epoch", "lambda"), lam_rows)
        _save_plot(os.path.join(out_dir, "lambda.svg"), [r[0] for r in lam_rows],
                   {"lambda": [r[1] for r in lam_rows]}, "epoch", "damping", logy=True)

    ckpt_path = os.path.join(run_dir, "checkpoint.json")
    if os.path.exists(ckpt_path):
        kind, params = _load_checkpoint(ckpt_path)
        if kind == "hamiltonian":
            times = np.linspace(0.0, params.t_f, 200)
            names = ([f"K{q}" for q in range(params.n_qubits)]
                     + [f"eps{q}" for q in range(params.n_qubits)]
                     + [f"zeta{i}_{j}" for i, j in qubit_pairs(params.n_qubits)])
            values = fourier_basis(times, params.t_f, params.harmonics) @ params.coefficient_matrix().T
            series = {name: values[:, c] for c, name in enumerate(names)}
            rows = [tuple([float(t)] + [float(v) for v in values[i]]) for i, t in enumerate(times)]
            _write_xy_csv(os.path.join(out_dir, "controls.csv"), tuple(["t_ns"] + names), rows)
            _save_plot(os.path.join(out_dir, "controls.svg"), times, series,
                       "t (ns)", "control (rad/ns)")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qwitness",
        description="Train simulated quantum systems to witness pairwise entanglement.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", help="JSON configuration file")
        p.add_argument("--seed", type=int, help="master seed (overrides config)")
        p.add_argument("--out", help="output directory for artifacts")
        p.add_argument("--resume", action="store_true", help="continue from existing checkpoints")
        p.add_argument("--optimizer", choices=OPTIMIZERS, help="training method")
        p.add_argument("--backend", choices=BACKEND_MODES, help="measurement backend")
        p.add_argument("--shots", type=int, help="shots per measured expectation")

    p_train = sub.add_parser("train", help="train at a fixed qubit count")
    add_common(p_train)
    p_train.add_argument("--qubits", type=int, dest="n_qubits", help="number of qubits")
    p_train.set_defaults(func=cmd_train)

    p_stage = sub.add_parser("stage", help="transfer-learning over growing qubit counts")
    add_common(p_stage)
    p_stage.add_argument("--qubits", type=int, help="final qubit count (stages run 2..N)")
    p_stage.set_defaults(func=cmd_stage)

    p_plot = sub.add_parser("plot", help="render CSV/SVG summaries of a run")
    p_plot.add_argument("--run", required=True, help="train output directory")
    p_plot.add_argument("--out", help="where to write plots (default: the run directory)")
    p_plot.set_defaults(func=cmd_plot)

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint's witness on a state")
    p_eval.add_argument("--checkpoint", required=True, help="checkpoint JSON")
    p_eval.add_argument("--state", required=True, help="state JSON")
    p_eval.add_argument("--pair", required=True, type=int, nargs=2, metavar=("A", "B"))
    p_eval.add_argument("--backend", choices=BACKEND_MODES, default="exact")
    p_eval.add_argument("--shots", type=int, default=1024)
    p_eval.add_argument("--seed", type=int)
    p_eval.add_argument("--n-steps", type=int, default=400, dest="n_steps")
    p_eval.set_defaults(func=cmd_eval)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - the CLI boundary maps failures to exit 3
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
