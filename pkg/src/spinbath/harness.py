"""Configuration files, run manifests, CSV output and engine comparison."""
from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .dynamics import Dynamics
from .model import N_SYS, ModelConfig

ALIASES = {"lambda": "lam", "hbar_omega_eg": "omega_eg", "n_sample": "sample_every"}
QUANTITIES = ("rho00", "rho11", "re_rho01", "im_rho01")


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(message if line is None else f"line {line}: {message}")


def _field_types() -> dict[str, str]:
    return {f.name: str(f.type) for f in fields(ModelConfig)}


def _convert(key: str, raw: str, kind: str):
    if raw.lower() in ("none", "") and "None" in kind:
        return None
    if kind.startswith("int"):
        v = float(raw)
        if v != int(v):
            raise ValueError(f"{key} needs an integer, got {raw!r}")
        return int(v)
    if kind.startswith("float"):
        return float(raw)
    return raw


def parse_config_text(text: str) -> ModelConfig:
    """``key = value`` lines, ``#`` comments.  Missing keys keep their defaults."""
    types = _field_types()
    values: dict[str, object] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"expected 'key = value', got {line.strip()!r}", lineno)
        key, raw = (s.strip() for s in body.split("=", 1))
        key = ALIASES.get(key, key)
        if key not in types:
            raise ConfigError(f"unknown key {key!r}", lineno)
        if key in values:
            raise ConfigError(f"duplicate key {key!r}", lineno)
        try:
            values[key] = _convert(key, raw, types[key])
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {exc}", lineno) from None
    try:
        return ModelConfig(**values)
    except ValueError as exc:
        raise ConfigError(f"invalid configuration: {exc}") from None


def parse_config(path) -> ModelConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file {path} not found")
    return parse_config_text(path.read_text(encoding="utf-8"))


def format_config(cfg: ModelConfig) -> str:
    """Inverse of ``parse_config_text``: every field on its own line."""
    return "".join(f"{k} = {_fmt(v)}\n" for k, v in cfg.as_dict().items())


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


@dataclass
class RunManifest:
    config: dict
    engine: str
    seed: int
    version: str = __version__
    outputs: list[str] = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    @classmethod
    def for_run(cls, cfg: ModelConfig, engine: str, **extra) -> "RunManifest":
        return cls(cfg.as_dict(), engine, cfg.seed, extra=extra)

    def lines(self) -> list[str]:
        out = [f"engine = {self.engine}", f"version = {self.version}", f"seed = {self.seed}"]
        out += [f"config.{k} = {_fmt(v)}" for k, v in self.config.items()]
        out += [f"extra.{k} = {json.dumps(_plain(v))}" for k, v in sorted(self.extra.items())]
        out += [f"output = {p}" for p in self.outputs]
        return out

    def model_config(self) -> ModelConfig:
        return ModelConfig(**self.config)

    @classmethod
    def from_lines(cls, lines: Sequence[str]) -> "RunManifest":
        types = _field_types()
        config, extra, outputs = {}, {}, []
        head = {}
        for line in lines:
            key, raw = (s.strip() for s in line.split("=", 1))
            if key.startswith("config."):
                name = key[len("config."):]
                config[name] = _convert(name, raw, types[name])
            elif key.startswith("extra."):
                extra[key[len("extra."):]] = json.loads(raw)
            elif key == "output":
                outputs.append(raw)
            else:
                head[key] = raw
        return cls(config, head.get("engine", ""), int(head.get("seed", 0)),
                   head.get("version", ""), outputs, extra)


def _plain(v):
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, (np.floating, np.integer, np.bool_)):
        return v.item()
    if isinstance(v, dict):
        return {k: _plain(x) for k, x in v.items()}
    return v


def dynamics_columns(n_qubits: int = N_SYS) -> list[str]:
    cols = ["t"]
    for i in range(n_qubits):
        cols += [f"q{i}_{q}" for q in QUANTITIES]
    return cols + ["min_eig", "trace", "hermiticity"]


def write_csv(path, header: Sequence[str], rows: np.ndarray, manifest: RunManifest | None = None) -> Path:
    """Comma-separated table with the manifest as ``#`` comment lines on top."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    rows = np.atleast_2d(np.asarray(rows, dtype=float))
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        if manifest is not None:
            if str(path) not in manifest.outputs:
                manifest.outputs.append(str(path))
            for line in manifest.lines():
                fh.write(f"# {line}\n")
        fh.write(",".join(header) + "\n")
        for r in rows:
            fh.write(",".join("%.17g" % v for v in r) + "\n")
    return path


def read_csv(path) -> tuple[RunManifest | None, list[str], np.ndarray]:
    path = Path(path)
    comments, header, data = [], None, []
    with path.open(encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if line.startswith("#"):
                comments.append(line[1:].strip())
            elif header is None:
                header = line.split(",")
            elif line:
                data.append([float(x) for x in line.split(",")])
    if header is None:
        raise ValueError(f"{path}: no header row")
    manifest = RunManifest.from_lines(comments) if comments else None
    return manifest, header, np.array(data, dtype=float).reshape(-1, len(header))


def write_dynamics(path, dyn: Dynamics, manifest: RunManifest) -> Path:
    obs = dyn.observables()
    rows = np.column_stack([dyn.times, obs.reshape(len(dyn.times), -1),
                            dyn.min_eig, dyn.trace, dyn.hermiticity_error])
    manifest.extra.setdefault("certification", dyn.certify())
    return write_csv(path, dynamics_columns(obs.shape[1]), rows, manifest)


@dataclass
class Series:
    """Sampled marginal observables, shape ``(n_t, n_qubits, 4)``."""

    times: np.ndarray
    obs: np.ndarray

    @classmethod
    def of(cls, x) -> "Series":
        if isinstance(x, Series):
            return x
        if isinstance(x, Dynamics):
            return cls(x.times, x.observables())
        raise TypeError(f"cannot compare {type(x).__name__}")


def read_dynamics(path) -> tuple[Series, RunManifest | None]:
    manifest, header, data = read_csv(path)
    if not header or header[0] != "t":
        raise ValueError(f"{path}: not a dynamics table")
    qcols = [c for c in header if c.startswith("q")]
    nq = len(qcols) // len(QUANTITIES)
    idx = [header.index(f"q{i}_{q}") for i in range(nq) for q in QUANTITIES]
    obs = data[:, idx].reshape(len(data), nq, len(QUANTITIES))
    return Series(data[:, 0], obs), manifest


@dataclass(frozen=True)
class DeviationReport:
    """``|a - b|`` statistics: ``max_norm[i]`` and ``time_avg[i]`` per marginal ``i``.

    ``time_avg`` is the mean over samples of the largest deviation among the
    four observables of that marginal.
    """

    max_norm: np.ndarray
    time_avg: np.ndarray
    per_quantity_max: np.ndarray  # (n_qubits, 4)

    @property
    def max_deviation(self) -> float:
        return float(np.max(self.max_norm))

    @property
    def mean_deviation(self) -> float:
        """Time-averaged deviation, worst marginal."""
        return float(np.max(self.time_avg))


def compare_runs(a, b, *, time_tol: float = 1e-9) -> DeviationReport:
    sa, sb = Series.of(a), Series.of(b)
    if sa.obs.shape != sb.obs.shape:
        raise ValueError(f"sample grids differ: {sa.obs.shape} vs {sb.obs.shape}")
    if np.max(np.abs(sa.times - sb.times), initial=0.0) > time_tol:
        raise ValueError("sample times differ")
    d = np.abs(sa.obs - sb.obs)
    return DeviationReport(d.max(axis=(0, 2)), d.max(axis=2).mean(axis=0), d.max(axis=0))


@dataclass
class ConvergenceRow:
    n_s: int
    report: DeviationReport
    exact_cert: dict
    master_cert: dict
    exact: Series
    master: Series


CONVERGENCE_COLUMNS = ("n_s", "time_avg_dev", "max_dev", "exact_ok", "master_ok")


def _convergence_job(args):
    from .exact import run_exact
    from .master import prepare_master, run_master

    cfg, n_s, out_dir = args
    cfg = ModelConfig(**{**cfg.as_dict(), "n_s": n_s})
    ex = run_exact(cfg).dynamics
    mcfg = prepare_master(cfg)
    ma = run_master(mcfg, positivity_fail=None)
    if out_dir is not None:
        write_dynamics(Path(out_dir) / f"exact_ns{n_s}.csv", ex, RunManifest.for_run(cfg, "exact"))
        write_dynamics(Path(out_dir) / f"master_ns{n_s}.csv", ma,
                       RunManifest.for_run(cfg, "master", **_master_extra(mcfg)))
    return (n_s, Series.of(ex), ex.certify(), Series.of(ma), ma.certify())


def _master_extra(mcfg) -> dict:
    return {"sigma_x_mean": mcfg.sigma_x_mean, "c": mcfg.c, "p": mcfg.kernel.p, "q": mcfg.kernel.q}


def convergence_table(cfg: ModelConfig, ns_values: Sequence[int], *, jobs: int = 1,
                      out_dir=None) -> list[ConvergenceRow]:
    """Exact vs master deviation for each bath size.

    Each ``n_s`` is an independent job: the exact ensemble for that bath and
    the master equation built from the same bath's statistics.  Rows come back
    in the order of ``ns_values`` whatever the completion order.
    """
    tasks = [(cfg, int(n), out_dir) for n in ns_values]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_convergence_job, tasks))
    else:
        results = [_convergence_job(t) for t in tasks]
    rows = []
    for n_s, ex, ex_cert, ma, ma_cert in results:
        rows.append(ConvergenceRow(n_s, compare_runs(ex, ma), ex_cert, ma_cert, ex, ma))
    return rows


def convergence_rows(rows: Sequence[ConvergenceRow]) -> np.ndarray:
    return np.array([[r.n_s, r.report.mean_deviation, r.report.max_deviation,
                      float(all(r.exact_cert.values())), float(all(r.master_cert.values()))]
                     for r in rows], dtype=float).reshape(-1, len(CONVERGENCE_COLUMNS))


def is_monotone_nonincreasing(values: Sequence[float]) -> bool:
    v = np.asarray(values, dtype=float)
    return bool(np.all(np.diff(v) <= 0))
