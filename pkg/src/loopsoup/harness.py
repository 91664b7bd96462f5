"""Named experiments with flat key=value configuration and CSV/JSON output.

A configuration file holds one ``key = value`` pair per line; ``#`` starts
a comment. Keys common to every experiment:

``experiment``  one of :data:`EXPERIMENTS`
``seed``        master seed (integer)
``reps``        replica count (positive integer)
``d``, ``beta``, ``mu``   model parameters

Every other key is experiment specific; :data:`DEFAULTS` lists them with
their default values, which reproduce the acceptance settings. ``run``
writes ``<experiment>.csv`` (one row per replica or sub-measurement, the
column order is that of the first row) and ``<experiment>.json`` (summary,
criterion pass/fail, configuration and its hash).
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import os
import time
from dataclasses import dataclass, field

import numpy as np

from . import conditioned, interlacements, stats, thermo
from .kernels import ModelParams, green_function
from .lattice import named_shape
from .rng import stream
from .soup import LatticeBox, sample_soup, mean_density, exceedance_probability

EXPERIMENTS = ("thermo", "soup", "conditioned", "capacity", "interlace", "theorem1", "bigjump", "hitting")


class ConfigError(ValueError):
    """Invalid or incomplete experiment configuration."""


_COMMON = {"seed": "0", "reps": "10000", "d": "3", "beta": "1.0", "mu": "0.0"}

DEFAULTS: dict[str, dict[str, str]] = {
    "thermo": {"reps": "1", "tail_n": "10000", "rel_tol_rho_c": "1e-6", "tail_tol": "0.03",
               "z_sides": "16,24", "z_rho_eps": "1.0", "z_tol": "0.10"},
    "soup": {"mode": "density", "N": "10", "mu": "-0.2", "boundary": "free", "j_max": "",
             "sigmas": "3", "sides": "8,16", "rho_eps": "0.5", "ratio_tol": "0.25", "reps": "10000"},
    "conditioned": {"mode": "compare", "N": "6", "rho_eps": "1.0", "grid_side": "1", "K": "point",
                    "p_min": "0.01", "dispersion_low": "0.9", "dispersion_high": "1.1",
                    "mean_tol": "0.05", "tilt_fraction": "0.3"},
    "capacity": {"K": "point|ball:1", "domain_radius": "12", "n_walks": "100000",
                 "escape_radius": "10", "point_tol": "0.005", "sigmas": "3", "reps": "1"},
    "interlace": {"K": "point|ball:1", "u": "0.5,1", "sigmas": "3"},
    "theorem1": {"N": "16", "rho_eps": "0.5", "grid_side": "3", "K": "ball:1", "tau": "10",
                 "p_min": "0.01"},
    "bigjump": {"alpha": "1.5", "n": "10000", "b": "2", "reps": "1000000", "low": "0.9",
                "high": "1.1"},
    "hitting": {"x": "20,0,0", "window": "", "reps": "1000000", "ratio_tol": "0.10"},
}


def _format(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


@dataclass
class ExperimentConfig:
    """Flat configuration; ``values`` holds every key except ``experiment`` and ``out``."""

    experiment: str
    values: dict = field(default_factory=dict)
    out: str | None = None

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}; choose from {', '.join(EXPERIMENTS)}")
        merged = dict(_COMMON)
        merged.update(DEFAULTS[self.experiment])
        unknown = sorted(set(self.values) - set(merged))
        if unknown:
            raise ConfigError(f"unknown key(s) for {self.experiment}: {', '.join(unknown)}")
        merged.update({k: _format(v) for k, v in self.values.items()})
        self.values = merged

    # typed access
    def get(self, key: str) -> str:
        if key not in self.values:
            raise ConfigError(f"missing key {key!r}")
        return self.values[key]

    def int(self, key: str) -> int:
        try:
            return int(self.get(key))
        except ValueError as exc:
            raise ConfigError(f"{key} must be an integer") from exc

    def float(self, key: str) -> float:
        try:
            return float(self.get(key))
        except ValueError as exc:
            raise ConfigError(f"{key} must be a number") from exc

    def floats(self, key: str) -> list[float]:
        try:
            return [float(v) for v in self.get(key).split(",") if v.strip()]
        except ValueError as exc:
            raise ConfigError(f"{key} must be a comma-separated list of numbers") from exc

    @property
    def seed(self) -> int:
        return self.int("seed")

    @property
    def reps(self) -> int:
        return self.int("reps")

    def params(self) -> ModelParams:
        try:
            return ModelParams(self.int("d"), self.float("beta"), self.float("mu"))
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    # serialisation
    def to_text(self) -> str:
        lines = [f"experiment = {self.experiment}"]
        lines += [f"{k} = {self.values[k]}" for k in sorted(self.values)]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str, out: str | None = None) -> "ExperimentConfig":
        values = {}
        for n, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {n}: expected key = value")
            k, v = (s.strip() for s in line.split("=", 1))
            if not k:
                raise ConfigError(f"line {n}: empty key")
            values[k] = v
        if "experiment" not in values:
            raise ConfigError("the configuration must name an experiment")
        exp = values.pop("experiment")
        out = values.pop("out", out)
        return cls(exp, values, out)

    @classmethod
    def load(cls, path: str) -> "ExperimentConfig":
        with open(path) as fh:
            return cls.from_text(fh.read())

    def with_values(self, **kw) -> "ExperimentConfig":
        v = dict(self.values)
        v.update({k: _format(x) for k, x in kw.items()})
        return ExperimentConfig(self.experiment, v, self.out)

    def hash(self) -> str:
        return hashlib.sha256(self.to_text().encode()).hexdigest()[:16]


@dataclass
class ResultRecord:
    experiment: str
    config_hash: str
    rows: list
    summary: dict
    criteria: dict
    metadata: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(self.criteria.values())

    def to_json(self) -> dict:
        return {"experiment": self.experiment, "config_hash": self.config_hash,
                "summary": self.summary, "criteria": self.criteria, "passed": self.passed,
                "metadata": self.metadata}


# ---------------------------------------------------------------- experiments


def _thermo(cfg: ExperimentConfig):
    p = cfg.params().with_mu(0.0)
    direct = thermo.critical_density(p, tol=1e-10, method="direct")
    acc = thermo.critical_density(p, method="accelerated")
    rel = abs(direct - acc) / acc
    n = cfg.int("tail_n")
    tail_ratio = thermo.tail_mass(p, 2 * n) / thermo.tail_mass(p, n)
    target = 2.0 ** (-p.d / 2)
    sides = [int(s) for s in cfg.floats("z_sides")]
    eps = cfg.float("z_rho_eps")
    scaled = [thermo.long_loop_mass(p, s ** p.d, eps) * (s ** p.d) ** (p.d / 2 - 1) for s in sides]
    rows = [{"quantity": "rho_c_direct", "value": direct}, {"quantity": "rho_c_accelerated", "value": acc},
            {"quantity": "c2", "value": thermo.loop_mass_per_site(p)},
            {"quantity": "tail_ratio", "value": tail_ratio}]
    rows += [{"quantity": f"Z_scaled_N{s}", "value": z} for s, z in zip(sides, scaled)]
    summary = {"rho_c": acc, "rho_c_relative_difference": rel, "tail_ratio": tail_ratio,
               "tail_ratio_target": target, "Z_scaled": scaled, "tail_constant": thermo.tail_constant(p)}
    criteria = {"rho_c_agreement": rel < cfg.float("rel_tol_rho_c"),
                "tail_scaling": abs(tail_ratio / target - 1) < cfg.float("tail_tol"),
                "long_loop_mass_scaling": abs(scaled[1] / scaled[0] - 1) < cfg.float("z_tol")}
    return rows, summary, criteria


def _soup(cfg: ExperimentConfig):
    p = cfg.params()
    mode = cfg.get("mode")
    reps = cfg.reps
    if mode == "density":
        N = cfg.int("N")
        box = LatticeBox(N, p.d, cfg.get("boundary"))
        j_max = cfg.int("j_max") if cfg.get("j_max") else None
        if p.mu == 0 and j_max is None:
            j_max = 10_000
        x = np.empty(reps)
        counts = np.empty(reps, dtype=np.int64)
        for i in range(reps):
            s = sample_soup(box, p, stream(cfg.seed, "soup", i), j_max)
            x[i] = mean_density(s)
            counts[i] = len(s)
        m, se = stats.mean_with_error(x)
        tail = s.tail_density
        # at mu = 0 the cut-off tail is known exactly and removed from the target
        target = thermo.rho(p) - (tail if p.mu == 0 else 0.0)
        rows = [{"replica": i, "mean_density": x[i], "loops": int(counts[i])} for i in range(reps)]
        z = (m - target) / se
        summary = {"mean": m, "stderr": se, "rho": target, "z": z, "tail_density": tail,
                   "mean_loops": float(counts.mean())}
        criteria = {"density_identity": abs(m - target) <= cfg.float("sigmas") * se}
        return rows, summary, criteria
    if mode == "exceedance":
        if p.mu != 0:
            raise ConfigError("exceedance mode runs at mu = 0")
        eps = cfg.float("rho_eps")
        rho = thermo.critical_density(p) + eps
        sides = [int(s) for s in cfg.floats("sides")]
        est = [exceedance_probability(LatticeBox(N, p.d), p, rho, reps, stream(cfg.seed, "exceed", N))
               for N in sides]
        ratio = est[0].value / est[1].value if est[1].value > 0 else math.inf
        ratio_se = ratio * math.sqrt(sum((e.stderr / e.value) ** 2 for e in est)) if est[1].value > 0 else math.inf
        scale = (sides[1] / sides[0]) ** (p.d * (p.d / 2 - 1))
        rows = [{"N": N, "probability": e.value, "stderr": e.stderr} for N, e in zip(sides, est)]
        summary = {"ratio": ratio, "ratio_stderr": ratio_se, "target": scale,
                   "probabilities": [e.value for e in est]}
        criteria = {"exceedance_feasible": all(e.value > 1e-3 for e in est),
                    "exceedance_scaling": abs(ratio / scale - 1) < cfg.float("ratio_tol")}
        return rows, summary, criteria
    raise ConfigError(f"unknown soup mode {mode!r}")


def _conditioned(cfg: ExperimentConfig):
    p = cfg.params()
    mode = cfg.get("mode")
    N = cfg.int("N")
    reps = cfg.reps
    eps = cfg.float("rho_eps")
    x0 = np.zeros(p.d, np.int64)
    if mode in ("compare", "rejection", "decomposed"):
        p0 = p.with_mu(0.0)
        box = LatticeBox(N, p.d)
        rows, a, b = [], None, None
        if mode in ("compare", "rejection"):
            rho = thermo.critical_density(p0) + eps
            samples, dens, screened = conditioned.rejection_conditioned_batch(
                box, p0, rho, reps, stream(cfg.seed, "rejection"))
            a = np.array([s.loops.local_time_at(x0).sum() for s in samples])
            rows += [{"sampler": "rejection", "replica": i, "local_time_origin": a[i], "density": dens[i]}
                     for i in range(reps)]
        if mode in ("compare", "decomposed"):
            ccfg = conditioned.ConditionedConfig(N, eps, p.d, grid_side=1)
            rng = stream(cfg.seed, "decomposed")
            law = conditioned.LongWindingLaw.build(
                p0, thermo.long_loop_threshold(p0, ccfg.volume, eps))
            b = np.empty(reps)
            for i in range(reps):
                s = conditioned.decomposed_conditioned_sample(ccfg, p0, rng, law=law)
                b[i] = s.soups[0].loops.local_time_at(x0).sum() + s.long_loops.local_time_at(x0).sum()
            rows += [{"sampler": "decomposed", "replica": i, "local_time_origin": b[i], "density": ""}
                     for i in range(reps)]
        summary, criteria = {}, {}
        if a is not None:
            summary["rejection_mean"] = float(a.mean())
            summary["mean_attempts"] = screened / reps
        if b is not None:
            summary["decomposed_mean"] = float(b.mean())
        if mode == "compare":
            ks = stats.ks_two_sample(a, b)
            summary.update({"ks_statistic": ks.statistic, "ks_pvalue": ks.pvalue})
            criteria["decomposition_ks"] = ks.pvalue > cfg.float("p_min")
        return rows, summary, criteria
    if mode == "poissonized":
        ccfg = conditioned.ConditionedConfig(N, eps, p.d, grid_side=cfg.int("grid_side"))
        K = _shape_list(cfg, p.d)[0][1]
        counts = conditioned.long_loop_hit_counts(ccfg, p, K, reps, stream(cfg.seed, "poissonized"))
        disp = stats.poisson_dispersion(counts)
        rows = [{"replica": i, "long_loops_hitting_K": int(c)} for i, c in enumerate(counts)]
        summary = {"mean": disp.mean, "variance": disp.var, "dispersion": disp.index,
                   "poisson_band": [disp.ci_low, disp.ci_high]}
        criteria = {"poisson_dispersion": cfg.float("dispersion_low") <= disp.index <= cfg.float("dispersion_high")}
        return rows, summary, criteria
    if mode == "tilting":
        if p.mu >= 0:
            raise ConfigError("tilting mode needs mu < 0")
        box = LatticeBox(N, p.d)
        frac = cfg.float("tilt_fraction")
        eps_sub = frac * (thermo.critical_density(p) - thermo.rho(p))
        rep = conditioned.tilting_check(box, p, eps_sub, stream(cfg.seed, "tilting"), n_samples=reps)
        rows = [{"quantity": k, "value": v} for k, v in (
            ("target_density", rep.target_density), ("tilted_mu", rep.tilted_mu),
            ("conditioned_mean", rep.conditioned_mean), ("tilted_mean", rep.tilted_mean))]
        summary = {"target_density": rep.target_density, "tilted_mu": rep.tilted_mu,
                   "conditioned_mean": rep.conditioned_mean, "conditioned_stderr": rep.conditioned_stderr,
                   "tilted_mean": rep.tilted_mean, "relative_difference": rep.relative_difference,
                   "mean_attempts": rep.mean_attempts}
        criteria = {"tilting_mean": rep.relative_difference < cfg.float("mean_tol")}
        return rows, summary, criteria
    raise ConfigError(f"unknown conditioned mode {mode!r}")


def _shape_list(cfg: ExperimentConfig, d: int):
    """``K`` holds one shape, or several separated by ``|``."""
    try:
        return [(s.strip(), named_shape(s, d)) for s in cfg.get("K").split("|") if s.strip()]
    except (ValueError, IndexError) as exc:
        raise ConfigError(f"cannot parse K: {exc}") from exc


def _capacity(cfg: ExperimentConfig):
    p = cfg.params()
    rows, summary, criteria = [], {}, {}
    for name, K in _shape_list(cfg, p.d):
        sol = interlacements.equilibrium_solve(K, p, cfg.float("domain_radius"))
        mc = interlacements.equilibrium_mc(K, p, cfg.int("n_walks"), cfg.float("escape_radius"),
                                           stream(cfg.seed, "capacity", name))
        diff = abs(sol.capacity - mc.capacity)
        bar = cfg.float("sigmas") * math.hypot(sol.error, mc.error)
        rows.append({"K": name, "sites": len(K), "cap_solve": sol.capacity, "err_solve": sol.error,
                     "cap_mc": mc.capacity, "err_mc": mc.error})
        summary[name] = {"solve": sol.capacity, "mc": mc.capacity, "difference": diff, "bar": bar}
        criteria[f"capacity_agreement[{name}]"] = diff <= bar
        if len(K) == 1:
            oracle = 1.0 / green_function(p)
            rel = abs(sol.escape[0] / oracle - 1)
            summary["point_escape"] = float(sol.escape[0])
            summary["point_escape_oracle"] = oracle
            criteria["point_escape"] = rel < cfg.float("point_tol")
    return rows, summary, criteria


def _interlace(cfg: ExperimentConfig):
    p = cfg.params()
    rows, summary, criteria = [], {}, {}
    for name, K in _shape_list(cfg, p.d):
        eq = interlacements.equilibrium_solve(K, p)
        for u in cfg.floats("u"):
            rng = stream(cfg.seed, "interlace", name, int(round(1000 * u)))
            rep = interlacements.avoidance_check(K, u, p, cfg.reps, rng, eq=eq)
            rows.append({"K": name, "u": u, "empty_fraction": rep.empirical, "expected": rep.expected,
                         "stderr": rep.stderr})
            summary[f"{name}@u={u}"] = {"empirical": rep.empirical, "expected": rep.expected,
                                        "z": rep.z_score}
            criteria[f"avoidance[{name},u={u}]"] = abs(rep.z_score) <= cfg.float("sigmas")
    return rows, summary, criteria


def _theorem1(cfg: ExperimentConfig):
    p = cfg.params()
    ccfg = conditioned.ConditionedConfig(cfg.int("N"), cfg.float("rho_eps"), p.d, cfg.int("grid_side"))
    K = _shape_list(cfg, p.d)[0][1]
    cmp = interlacements.long_loop_vs_interlacement(ccfg, K, p, stream(cfg.seed, "theorem1"),
                                                    n_loops=cfg.reps, tau=cfg.float("tau"))
    rows = [{"source": "long_loops", "entry": int(e), "visited": int(v), "d_k": dk, "local_time": lt}
            for e, v, dk, lt in zip(cmp.loops.entry, cmp.loops.visited, cmp.loops.d_k, cmp.loops.local_time)]
    rows += [{"source": "interlacement", "entry": int(e), "visited": int(v), "d_k": dk, "local_time": lt}
             for e, v, dk, lt in zip(cmp.interlacement.entry, cmp.interlacement.visited,
                                     cmp.interlacement.d_k, cmp.interlacement.local_time)]
    summary = {"entry_chi2": tuple(cmp.entry_chi2), "visited_ks": tuple(cmp.visited_ks),
               "d_k_ks": tuple(cmp.d_k_ks), "local_time_ks": tuple(cmp.local_time_ks),
               "loops_generated": cmp.loops_generated, "level_u": ccfg.rho_eps}
    pmin = cfg.float("p_min")
    criteria = {"entry_chi2": cmp.entry_chi2.pvalue > pmin, "visited_ks": cmp.visited_ks.pvalue > pmin}
    return rows, summary, criteria


def _bigjump(cfg: ExperimentConfig):
    rep = conditioned.big_jump_check(stream(cfg.seed, "bigjump"), cfg.float("alpha"), cfg.int("n"),
                                     cfg.float("b"), cfg.reps)
    rows = [{"ratio": rep.ratio, "stderr": rep.stderr, "exceed_prob": rep.exceed_prob,
             "single_tail": rep.single_tail}]
    summary = {"ratio": rep.ratio, "stderr": rep.stderr, "trials": rep.trials}
    criteria = {"big_jump": cfg.float("low") <= rep.ratio <= cfg.float("high")}
    return rows, summary, criteria


def _hitting(cfg: ExperimentConfig):
    p = cfg.params()
    x = np.array([int(v) for v in cfg.get("x").split(",")])
    r = float(np.linalg.norm(x))
    window = cfg.floats("window") if cfg.get("window") else [r * r / 2, 2 * r * r]
    K = np.zeros((1, p.d), np.int64)
    rep = interlacements.hitting_asymptotics_check(K, K[0], x, tuple(window), cfg.reps, p,
                                                   stream(cfg.seed, "hitting"))
    rows = [{"x": cfg.get("x"), "t1": window[0], "t2": window[1], "estimate": rep.estimate,
             "prediction": rep.prediction, "ratio": rep.ratio, "stderr": rep.stderr}]
    summary = {"ratio": rep.ratio, "stderr": rep.stderr}
    criteria = {"hitting_ratio": abs(rep.ratio - 1) < cfg.float("ratio_tol")}
    return rows, summary, criteria


_RUNNERS = {"thermo": _thermo, "soup": _soup, "conditioned": _conditioned, "capacity": _capacity,
            "interlace": _interlace, "theorem1": _theorem1, "bigjump": _bigjump, "hitting": _hitting}


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else str(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def write_outputs(record: ResultRecord, cfg: ExperimentConfig, out: str) -> tuple[str, str]:
    os.makedirs(out, exist_ok=True)
    csv_path = os.path.join(out, f"{record.experiment}.csv")
    json_path = os.path.join(out, f"{record.experiment}.json")
    with open(csv_path, "w", newline="") as fh:
        if record.rows:
            cols = list(record.rows[0])
            for row in record.rows[1:]:
                cols += [c for c in row if c not in cols]
            w = csv.DictWriter(fh, fieldnames=cols)
            w.writeheader()
            w.writerows(record.rows)
    with open(json_path, "w") as fh:
        payload = record.to_json()
        payload["config"] = dict(cfg.values, experiment=cfg.experiment)
        json.dump(_jsonable(payload), fh, indent=2, sort_keys=True)
    return csv_path, json_path


def run(cfg: ExperimentConfig, out: str | None = None) -> ResultRecord:
    """Run the configured experiment; write CSV and JSON when an output directory is given."""
    if cfg.reps < 1:
        raise ConfigError("reps must be positive")
    cfg.params()
    t0 = time.time()
    rows, summary, criteria = _RUNNERS[cfg.experiment](cfg)
    record = ResultRecord(cfg.experiment, cfg.hash(), rows, _jsonable(summary),
                          {k: bool(v) for k, v in criteria.items()},
                          {"wall_seconds": time.time() - t0})
    out = out or cfg.out
    if out:
        write_outputs(record, cfg, out)
    return record
