"""Config-driven experiment runner.

    gwg sample   --config ising-sample --out results/ising
    gwg train    --config PATH.toml --out DIR --seed 3
    gwg ais      --config ais-ising10 --out DIR
    gwg verify   --config verify-theorem1 --out DIR
    gwg plotdata --out DIR            (aggregates a results directory)

``--config`` takes a TOML file or the name of a bundled preset. Exit codes:
0 success, 2 configuration or input error, 3 numerical fault.
"""
from __future__ import annotations

import argparse
import copy
import glob
import math
import os
import sys
import zlib
from concurrent.futures import ProcessPoolExecutor
from importlib import resources

import numpy as np

from . import io as gio
from .ais import AnnealSchedule, ais_log_z, ais_repeated
from .analysis import (log_partition, verify_balancing,
                       verify_normalizer_bounds, verify_theorem1)
from .core import ENUMERATION_CAP, SamplerFault, make_rng
from .diagnostics import cost_report, ess, log_mmd
from .models import FactorizedBase, IsingModel, PottsModel
from .relaxations import RHMC, RMALA, RelaxConfig
from .samplers import (GWG, Gibbs, HammingBall, LocallyBalanced, RbmBlockGibbs,
                       fhmm_time_blocks, gibbs_sweep, run_chain)
from .testkit import random_model
from .training import (TrainConfig, coupling_strength, ising_gibbs_sweeps, pcd_train,
                       plm_train, recall_curve)

try:  # pragma: no cover - depends on interpreter version
    import tomllib
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib

SCHEMA = 1
KINDS = ("sample", "train", "ais", "verify")


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------- schema

_MODEL_KEYS = {
    "ising-lattice": {"n", "theta", "spin"},
    "ising-er": {"D", "theta", "mean_degree", "weight_std", "binary", "spin", "seed"},
    "rbm": {"D", "H", "seed"},
    "potts": {"D", "K", "scale", "seed"},
    "potts-planted": {"D", "K", "n_pairs", "strength", "seed"},
    "fhmm": {"L", "K", "sigma2", "alpha", "beta", "seed"},
    "cubic": {"D", "scale", "cubic_scale", "seed"},
    "file": {"path"},
}
_SAMPLER_KEYS = {
    "gwg": {"n_draws"},
    "lb": {"tau", "radius"},
    "gibbs": {"block_size", "random_scan"},
    "hb": {"block_size", "ball_radius", "fhmm_blocks"},
    "rbm-block-gibbs": set(),
    "rmala": {"epsilon", "lam"},
    "rhmc": {"epsilon", "lam", "leapfrog_steps"},
}
_SECTION_KEYS = {
    "sample": {"steps", "chains", "mmd_every", "reference", "reference_samples",
               "reference_steps"},
    "train": {"method", "n_data", "data_sweeps", "data_path", "contacts_path", "lr",
              "batch_size", "mcmc_steps", "l1", "iterations", "buffer_size",
              "checkpoint_every", "learn_bias", "exclude"},
    "ais": {"T", "chains", "reps", "schedule", "transitions", "base", "tolerance"},
    "verify": {"families", "n_models", "D", "radius", "balancing_tau"},
}
_TOP_KEYS = {"schema", "kind", "description", "seeds", "timing", "model", "samplers",
             "sample", "train", "ais", "verify"}


def _check_keys(table, allowed, where):
    if not isinstance(table, dict):
        raise ConfigError(f"{where} must be a table")
    extra = set(table) - set(allowed)
    if extra:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(sorted(extra))}")


def validate_config(cfg: dict) -> dict:
    """Fail fast on unknown keys, missing fields and unresolvable specs."""
    _check_keys(cfg, _TOP_KEYS, "config")
    if cfg.get("schema") != SCHEMA:
        raise ConfigError(f"schema must be {SCHEMA}")
    kind = cfg.get("kind")
    if kind not in KINDS:
        raise ConfigError(f"kind must be one of {KINDS}")
    seeds = cfg.get("seeds")
    if not isinstance(seeds, list) or not seeds or not all(
            isinstance(s, int) and not isinstance(s, bool) and s >= 0 for s in seeds):
        raise ConfigError("seeds must be a non-empty list of non-negative integers")
    if kind != "verify":
        model = cfg.get("model")
        if not isinstance(model, dict) or model.get("family") not in _MODEL_KEYS:
            raise ConfigError(f"model.family must be one of {sorted(_MODEL_KEYS)}")
        _check_keys(model, _MODEL_KEYS[model["family"]] | {"family"}, "model")
    samplers = cfg.get("samplers", [])
    if kind in ("sample", "train", "ais") and not samplers:
        raise ConfigError("at least one [[samplers]] entry is required")
    for s in samplers:
        _sampler_from_spec(s)
    ref = cfg.get(kind, {}).get("reference") if kind == "sample" else None
    if ref is not None:
        _sampler_from_spec(ref)
    section = cfg.get(kind, {})
    _check_keys(section, _SECTION_KEYS[kind], kind)
    return cfg


def load_config(source: str) -> dict:
    """Parse a TOML file, or a bundled preset when ``source`` names one."""
    if os.path.exists(source):
        with open(source, "rb") as fh:
            text = fh.read()
    else:
        name = source if source.endswith(".toml") else source + ".toml"
        try:
            text = resources.files("gwg").joinpath("presets", name).read_bytes()
        except (FileNotFoundError, OSError):
            raise ConfigError(f"no config file or preset named {source!r}") from None
    try:
        cfg = tomllib.loads(text.decode("utf-8"))
    except tomllib.TOMLDecodeError as err:
        raise ConfigError(f"invalid TOML: {err}") from None
    return validate_config(cfg)


def list_presets():
    return sorted(p.name[:-5] for p in resources.files("gwg").joinpath("presets").iterdir()
                  if p.name.endswith(".toml"))


# ---------------------------------------------------------------- builders

def build_model(spec: dict, seed: int):
    fam = spec["family"]
    ms = int(spec.get("seed", seed))
    if fam == "ising-lattice":
        return IsingModel.lattice(int(spec["n"]), float(spec["theta"]),
                                  spin=bool(spec.get("spin", False)))
    if fam == "ising-er":
        m = random_model("ising-er", int(spec["D"]), ms,
                         mean_degree=spec.get("mean_degree", 4.0),
                         weight_std=spec.get("weight_std", 0.5))
        J = (m.J != 0).astype(float) if spec.get("binary", False) else m.J
        return IsingModel(J, float(spec.get("theta", 1.0)), spin=bool(spec.get("spin", False)))
    if fam == "rbm":
        return random_model("rbm", int(spec["D"]), ms, H=int(spec.get("H", 10)))
    if fam == "potts":
        return random_model("potts", int(spec["D"]), ms, K=int(spec.get("K", 3)),
                            scale=spec.get("scale", 0.3))
    if fam == "potts-planted":
        return random_model("potts-planted", int(spec["D"]), ms, K=int(spec.get("K", 3)),
                            n_pairs=int(spec.get("n_pairs", 1)),
                            strength=float(spec.get("strength", 1.0)))
    if fam == "fhmm":
        K = int(spec.get("K", 10))
        return random_model("fhmm", int(spec["L"]) * K, ms, K=K,
                            sigma2=spec.get("sigma2", 0.5), alpha=spec.get("alpha", 0.1),
                            beta=spec.get("beta", 0.95))
    if fam == "cubic":
        return random_model("cubic", int(spec["D"]), ms, scale=spec.get("scale", 0.3),
                            cubic_scale=spec.get("cubic_scale", 0.2))
    if fam == "file":
        return gio.load_model(spec["path"])
    raise ConfigError(f"unknown model family {fam!r}")


def _sampler_from_spec(spec: dict, model=None):
    if not isinstance(spec, dict) or spec.get("kind") not in _SAMPLER_KEYS:
        raise ConfigError(f"sampler kind must be one of {sorted(_SAMPLER_KEYS)}")
    k = spec["kind"]
    _check_keys(spec, _SAMPLER_KEYS[k] | {"kind"}, f"sampler {k}")
    try:
        if k == "gwg":
            return GWG(int(spec.get("n_draws", 1)))
        if k == "lb":
            return LocallyBalanced(float(spec.get("tau", 2.0)), int(spec.get("radius", 1)))
        if k == "gibbs":
            return Gibbs(int(spec.get("block_size", 1)), bool(spec.get("random_scan", False)))
        if k == "hb":
            blocks = None
            if spec.get("fhmm_blocks", False) and model is not None:
                blocks = fhmm_time_blocks(model.L, model.K)
            return HammingBall(int(spec.get("block_size", 10)), int(spec.get("ball_radius", 1)),
                               blocks)
        if k == "rbm-block-gibbs":
            return RbmBlockGibbs()
        cfg = RelaxConfig(float(spec.get("lam", 1.0)), float(spec.get("epsilon", 0.1)),
                          int(spec.get("leapfrog_steps", 5)))
        return RMALA(cfg) if k == "rmala" else RHMC(cfg)
    except (TypeError, ValueError) as err:
        raise ConfigError(f"invalid sampler spec {spec}: {err}") from None


def _stream(name: str) -> int:
    return zlib.crc32(name.encode("utf-8"))


def _fan_out(fn, jobs, workers):
    if workers <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, jobs))


TRACE_HEADER = ["step", "stat", "energy", "accepted", "cum_evals", "seconds"]


def _write_trace(out, name, seed, trace, chash):
    for n in range(trace.n_chains):
        gio.write_csv(os.path.join(out, f"trace_{name}_s{seed}_c{n}.csv"), TRACE_HEADER,
                      trace.rows(n), chash)


# ---------------------------------------------------------------- sample

def _reference_samples(model, ref, n, steps, seed):
    rng = make_rng(seed, _stream("reference:" + ref.name))
    x0 = rng.integers(model.arity, size=(n, model.dim))
    state, _ = run_chain(model, ref, x0, steps, rng, timing=False)
    return ref.discrete(state)


def _sample_job(job):
    cfg, si, seed, out, chash = job
    model = build_model(cfg["model"], seed)
    spec = cfg["samplers"][si]
    sampler = _sampler_from_spec(spec, model)
    sec = cfg.get("sample", {})
    steps, chains = int(sec.get("steps", 1000)), int(sec.get("chains", 1))
    timing = bool(cfg.get("timing", True))
    init_rng = make_rng(seed, 1)
    x_ref = init_rng.integers(model.arity, size=model.dim)
    x0 = init_rng.integers(model.arity, size=(chains, model.dim))
    rng = make_rng(seed, _stream(sampler.name))
    mmd_rows = []
    ref = sec.get("reference")
    every = int(sec.get("mmd_every", 0)) if ref is not None else 0
    if every and steps:
        refs = _reference_samples(model, _sampler_from_spec(ref, model),
                                  int(sec.get("reference_samples", 500)),
                                  int(sec.get("reference_steps", 1000)), seed)
    traces, state, done = [], x0, 0
    fault = None
    try:
        while done < steps:
            n = min(every, steps - done) if every else steps - done
            state, tr = run_chain(model, sampler, sampler.discrete(state) if done else state,
                                  n, rng, x_ref=x_ref, t0=done, timing=timing)
            traces.append(tr)
            done += n
            if every:
                mmd_rows.append((sampler.name, seed, done, log_mmd(sampler.discrete(state), refs)))
    except SamplerFault as err:
        traces.append(getattr(err, "partial_trace", None))
        fault = str(err)
    trace = _concat([t for t in traces if t is not None], chains)
    _write_trace(out, sampler.name, seed, trace, chash)
    ess_rows, summary = [], {"sampler": sampler.name, "seed": seed, "steps": len(trace),
                             "fault": fault}
    if len(trace):
        rep = cost_report(trace)
        summary.update(rep)
        for n in range(trace.n_chains):
            try:
                e = ess(trace.stat[:, n])
            except ValueError:
                e = float("nan")
            ess_rows.append((sampler.name, seed, n, e,
                             float(np.log10(e)) if e > 0 else float("nan"),
                             float(trace.accept[:, n].mean())))
    if every and steps and fault is None and seed == cfg["seeds"][0] and si == 0:
        half = len(refs) // 2
        summary["target_log_mmd"] = log_mmd(refs[:half], refs[half:])
    return summary, ess_rows, mmd_rows, fault


def _concat(traces, chains):
    from .diagnostics import ChainTrace
    if not traces:
        z = np.zeros((0, chains))
        return ChainTrace(z, z, z.astype(bool), np.zeros(0, np.int64), np.zeros(0, np.int64),
                          np.zeros(0))
    off_m = off_g = 0
    parts = []
    for t in traces:
        parts.append((t.stat, t.energy, t.accept, t.cum_model_evals + off_m,
                      t.cum_grad_evals + off_g, t.seconds))
        if len(t):
            off_m, off_g = parts[-1][3][-1], parts[-1][4][-1]
    cols = list(zip(*parts))
    return ChainTrace(*[np.concatenate(c) for c in cols])


def run_sample(cfg: dict, out: str, workers: int = 1) -> dict:
    chash = gio.config_hash(cfg)
    os.makedirs(out, exist_ok=True)
    jobs = [(cfg, si, seed, out, chash) for si in range(len(cfg["samplers"]))
            for seed in cfg["seeds"]]
    results = _fan_out(_sample_job, jobs, workers)
    ess_rows = [r for res in results for r in res[1]]
    mmd_rows = [r for res in results for r in res[2]]
    gio.write_csv(os.path.join(out, "ess.csv"),
                  ["sampler", "seed", "chain", "ess", "log10_ess", "acceptance"], ess_rows, chash)
    if mmd_rows:
        gio.write_csv(os.path.join(out, "mmd.csv"), ["sampler", "seed", "step", "log10_mmd"],
                      mmd_rows, chash)
    summary = {"kind": "sample", "runs": [r[0] for r in results]}
    faults = [r[3] for r in results if r[3]]
    summary["faults"] = faults
    gio.write_json(os.path.join(out, "summary.json"), summary, chash)
    if faults:
        raise SamplerFault("; ".join(faults))
    return summary


# ---------------------------------------------------------------- train

def _train_data(cfg, truth, seed):
    sec = cfg.get("train", {})
    if "data_path" in sec:
        return gio.read_int_matrix(sec["data_path"])
    n = int(sec.get("n_data", 2000))
    sweeps = int(sec.get("data_sweeps", 100))
    rng = make_rng(seed, 7)
    if isinstance(truth, IsingModel):
        return ising_gibbs_sweeps(truth, n, sweeps, rng)
    x = rng.integers(truth.arity, size=(n, truth.dim))
    for _ in range(sweeps):
        x, _ = gibbs_sweep(truth, x, rng)
    return x


def _zero_like(truth):
    D = truth.dim
    if isinstance(truth, IsingModel):
        return IsingModel(np.zeros((D, D)), 1.0, spin=truth.spin)
    if isinstance(truth, PottsModel):
        K = truth.arity
        return PottsModel(np.zeros((D, D, K, K)), np.zeros((D, K)))
    raise ConfigError("training supports Ising and Potts models")


def _train_job(job):
    cfg, si, seed, out, chash = job
    truth = build_model(cfg["model"], seed)
    sec = cfg.get("train", {})
    tc = TrainConfig(**{k: sec[k] for k in ("lr", "batch_size", "mcmc_steps", "l1",
                                            "iterations", "buffer_size", "checkpoint_every",
                                            "learn_bias") if k in sec})
    data = _train_data(cfg, truth, seed)
    method = sec.get("method", "pcd")
    spec = cfg["samplers"][si]
    sampler = _sampler_from_spec(spec, truth)
    name = "plm" if method == "plm" else sampler.name
    rng = make_rng(seed, _stream("train:" + name))
    init = _zero_like(truth)
    if method == "plm":
        res = plm_train(init, data, tc)
    elif method == "pcd":
        J_true = truth.theta * truth.J if isinstance(truth, IsingModel) else None
        res = pcd_train(init, data, sampler, tc, rng, J_true=J_true)
    else:
        raise ConfigError("train.method must be 'pcd' or 'plm'")
    gio.write_csv(os.path.join(out, f"history_{name}_s{seed}.csv"),
                  ["iteration", "loss", "rmse", "grad_norm"],
                  [(h["iteration"], h["loss"], h["rmse"], h["grad_norm"]) for h in res.history],
                  chash)
    gio.save_model(res.model, os.path.join(out, f"model_{name}_s{seed}.json"))
    summary = {"sampler": name, "seed": seed, "final": res.history[-1],
               "initial": res.history[0]}
    if isinstance(truth, PottsModel):
        contacts = (gio.read_contact_map(sec["contacts_path"]) if "contacts_path" in sec
                    else coupling_strength(truth.J) > 0)
        curve = recall_curve(coupling_strength(res.model.J), contacts,
                             exclude=int(sec.get("exclude", 0)))
        gio.write_csv(os.path.join(out, f"recall_{name}_s{seed}.csv"), ["rank", "recall"],
                      curve, chash)
        i, j = np.nonzero(np.triu(contacts, k=1))
        n_c = int(((j - i) > int(sec.get("exclude", 0))).sum())
        summary["recall_at_n_contacts"] = curve[min(n_c, len(curve)) - 1][1]
    return summary


def run_train(cfg: dict, out: str, workers: int = 1) -> dict:
    chash = gio.config_hash(cfg)
    os.makedirs(out, exist_ok=True)
    sec = cfg.get("train", {})
    samplers = range(1 if sec.get("method") == "plm" else len(cfg["samplers"]))
    jobs = [(cfg, si, seed, out, chash) for si in samplers for seed in cfg["seeds"]]
    runs = _fan_out(_train_job, jobs, workers)
    summary = {"kind": "train", "runs": runs}
    gio.write_json(os.path.join(out, "summary.json"), summary, chash)
    return summary


# ---------------------------------------------------------------- ais

def _ais_job(job):
    cfg, seed, out, chash = job
    model = build_model(cfg["model"], seed)
    sec = cfg.get("ais", {})
    sampler = _sampler_from_spec(cfg["samplers"][0], model)
    Ts = sec.get("T", [100, 1000, 10000])
    Ts = [Ts] if isinstance(Ts, int) else list(Ts)
    chains, reps = int(sec.get("chains", 64)), int(sec.get("reps", 1))
    if sec.get("base", "uniform") != "uniform":
        raise ConfigError("ais.base must be 'uniform'")
    base = FactorizedBase.uniform(model.dim, model.arity)
    make = {"linear": AnnealSchedule.linear, "sigmoid": AnnealSchedule.sigmoid}
    sched = sec.get("schedule", "linear")
    if sched not in make:
        raise ConfigError("ais.schedule must be 'linear' or 'sigmoid'")
    exact = log_partition(model) if model.arity**model.dim <= ENUMERATION_CAP else None
    rows, ests = [], {}
    for T in Ts:
        rng = make_rng(seed, _stream(f"ais:{T}"))
        est = ais_repeated(model, base, make[sched](int(T)), sampler, chains, reps, rng,
                           int(sec.get("transitions", 1)))
        ests[int(T)] = est
        gio.write_csv(os.path.join(out, f"estimates_T{T}_s{seed}.csv"), ["rep", "log_z"],
                      list(enumerate(est)), chash)
        rows.append((int(T), seed, float(est.mean()),
                     float(est.std(ddof=1)) if reps > 1 else float("nan"),
                     float(est.var(ddof=1)) if reps > 1 else float("nan"),
                     exact if exact is not None else float("nan")))
    # per-chain log-weights for the largest schedule, first repetition
    Tmax = max(Ts)
    _, logw = ais_log_z(model, base, make[sched](int(Tmax)), sampler, chains,
                        make_rng(seed, _stream(f"ais:{Tmax}")), int(sec.get("transitions", 1)))
    gio.write_csv(os.path.join(out, f"logw_T{Tmax}_s{seed}.csv"), ["chain", "log_w"],
                  list(enumerate(logw)), chash)
    tol = float(sec.get("tolerance", 0.1))
    final = float(ests[int(Tmax)][0])
    res = {"seed": seed, "log_z": final, "exact_log_z": exact}
    if exact is not None:
        res["abs_error"] = abs(final - exact)
        res["passed"] = bool(abs(final - exact) <= tol)
    return res, rows


def run_ais(cfg: dict, out: str, workers: int = 1) -> dict:
    chash = gio.config_hash(cfg)
    os.makedirs(out, exist_ok=True)
    results = _fan_out(_ais_job, [(cfg, s, out, chash) for s in cfg["seeds"]], workers)
    gio.write_csv(os.path.join(out, "convergence.csv"),
                  ["T", "seed", "mean", "std", "var", "exact_log_z"],
                  [r for res in results for r in res[1]], chash)
    summary = {"kind": "ais", "runs": [r[0] for r in results]}
    gio.write_json(os.path.join(out, "summary.json"), summary, chash)
    return summary


# ---------------------------------------------------------------- verify

def _verify_job(job):
    cfg, fam, i, chash = job
    sec = cfg.get("verify", {})
    D = int(sec.get("D", 8))
    seed = cfg["seeds"][0] + i
    if fam == "fhmm":
        model = random_model("fhmm", D, seed, K=2)
    elif fam == "potts":
        model = random_model("potts", max(2, D // 3), seed, K=3)
    else:
        model = random_model(fam, D, seed)
    rep = verify_theorem1(model, int(sec.get("radius", 1)), seed=seed)
    nb = verify_normalizer_bounds(model, int(sec.get("radius", 1)))
    bal = verify_balancing(model, 1, float(sec.get("balancing_tau", 2.0)))
    rep.update({"family": fam, "seed": seed, "normalizer_ok": nb["passed"],
                "balancing_error": bal["identity_error"], "balancing_ok": bal["passed"]})
    rep["passed"] = bool(rep["passed"] and nb["passed"] and bal["passed"])
    return rep


def run_verify(cfg: dict, out: str, workers: int = 1) -> dict:
    chash = gio.config_hash(cfg)
    os.makedirs(out, exist_ok=True)
    sec = cfg.get("verify", {})
    fams = sec.get("families", ["cubic", "ising-er", "rbm", "fhmm"])
    for f in fams:
        if f not in ("cubic", "ising-er", "rbm", "fhmm", "potts", "ising-lattice"):
            raise ConfigError(f"unsupported verify family {f!r}")
    n = int(sec.get("n_models", 5))
    jobs = [(cfg, f, i, chash) for f in fams for i in range(n)]
    reports = _fan_out(_verify_job, jobs, workers)
    cols = ["family", "seed", "dim", "L", "L_source", "c", "gap_grad", "gap_lb", "var_grad",
            "var_bound", "gap_ok", "var_ok", "kernel_ok", "normalizer_ok", "balancing_ok",
            "passed"]
    gio.write_csv(os.path.join(out, "theorem1.csv"), cols,
                  [[r[c] for c in cols] for r in reports], chash)
    summary = {"kind": "verify", "instances": reports,
               "all_passed": bool(all(r["passed"] for r in reports))}
    gio.write_json(os.path.join(out, "theorem1_report.json"), summary, chash)
    return summary


# ---------------------------------------------------------------- plot data

def _num(s):
    try:
        return float(s)
    except ValueError:
        return float("nan")


def _stderr(v):
    v = np.asarray([a for a in v if math.isfinite(a)])
    return float(v.std(ddof=1) / np.sqrt(len(v))) if len(v) > 1 else float("nan")


def emit_plotdata(results: str, out: str | None = None) -> list:
    """Aggregate a results directory into per-figure tables; returns the written paths.

    All tables are computed before any is written, so missing or malformed inputs
    leave no partial output.
    """
    out = results if out is None else out
    if not os.path.isdir(results):
        raise ConfigError(f"results directory {results!r} does not exist")
    tables = {}
    chash = None

    def read(path):
        nonlocal chash
        h, header, rows = gio.read_csv(path)
        chash = chash or h
        return header, rows

    p = os.path.join(results, "ess.csv")
    if os.path.exists(p):
        header, rows = read(p)
        by = {}
        for r in rows:
            by.setdefault(r[0], []).append(_num(r[header.index("ess")]))
        out_rows = []
        for name in sorted(by):
            v = np.asarray([a for a in by[name] if math.isfinite(a) and a > 0])
            if len(v) == 0:
                continue
            lv = np.log10(v)
            q1, q3 = np.percentile(lv, [25, 75])
            iqr = q3 - q1
            outl = int(((lv < q1 - 1.5 * iqr) | (lv > q3 + 1.5 * iqr)).sum())
            out_rows.append((name, len(v), float(np.median(lv)),
                             float(lv.std(ddof=1)) if len(v) > 1 else float("nan"),
                             float(q1), float(q3), outl))
        tables["plot_log_ess.csv"] = (["sampler", "n", "median_log10_ess", "std_log10_ess",
                                       "q1", "q3", "n_outliers"], out_rows)
    p = os.path.join(results, "mmd.csv")
    if os.path.exists(p):
        header, rows = read(p)
        names = sorted({r[0] for r in rows})
        steps = sorted({int(r[2]) for r in rows})
        cols = ["step"] + [c for n in names for c in (n, n + "_stderr")]
        grid = []
        for s in steps:
            row = [s]
            for n in names:
                v = [_num(r[3]) for r in rows if r[0] == n and int(r[2]) == s]
                v = [a for a in v if math.isfinite(a)]
                row += [float(np.mean(v)) if v else float("nan"), _stderr(v)]
            grid.append(row)
        tables["plot_log_mmd.csv"] = (cols, grid)
    hist = sorted(glob.glob(os.path.join(results, "history_*_s*.csv")))
    if hist:
        series = {}
        for path in hist:
            name = os.path.basename(path)[len("history_"):].rsplit("_s", 1)[0]
            header, rows = read(path)
            for r in rows:
                it, rm = int(r[0]), _num(r[2])
                if math.isfinite(rm) and rm > 0:
                    series.setdefault(name, {}).setdefault(it, []).append(np.log10(rm))
        if series:
            names = sorted(series)
            its = sorted({i for s in series.values() for i in s})
            cols = ["iteration"] + [c for n in names for c in (n, n + "_stderr")]
            grid = []
            for i in its:
                row = [i]
                for n in names:
                    v = series[n].get(i, [])
                    row += [float(np.mean(v)) if v else float("nan"), _stderr(v)]
                grid.append(row)
            tables["plot_log_rmse.csv"] = (cols, grid)
    rec = sorted(glob.glob(os.path.join(results, "recall_*_s*.csv")))
    if rec:
        rows_out = []
        for path in rec:
            name, seed = os.path.basename(path)[len("recall_"):-4].rsplit("_s", 1)
            header, rows = read(path)
            rows_out += [(name, int(seed), int(r[0]), r[1]) for r in rows]
        tables["plot_recall.csv"] = (["sampler", "seed", "rank", "recall"], rows_out)
    p = os.path.join(results, "convergence.csv")
    if os.path.exists(p):
        header, rows = read(p)
        tables["plot_ais.csv"] = (["T", "seed", "mean", "std", "exact_log_z"],
                                  [(int(r[0]), int(r[1]), r[2], r[3], r[5]) for r in rows])
    if not tables:
        raise ConfigError(f"no result tables found in {results!r}")
    os.makedirs(out, exist_ok=True)
    paths = []
    for fname, (header, rows) in sorted(tables.items()):
        path = os.path.join(out, fname)
        gio.write_csv(path, header, rows, chash)
        paths.append(path)
    return paths


# ---------------------------------------------------------------- entry point

RUNNERS = {"sample": run_sample, "train": run_train, "ais": run_ais, "verify": run_verify}


def _parser():
    p = argparse.ArgumentParser(prog="gwg", description=__doc__.split("\n")[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name in KINDS:
        s = sub.add_parser(name, help=f"run a {name} experiment")
        s.add_argument("--config", required=True, help="TOML file or bundled preset name")
        s.add_argument("--out", required=True, help="output directory")
        s.add_argument("--seed", type=int, action="append",
                       help="override the config's seeds (repeatable)")
        s.add_argument("--workers", type=int, default=1)
    s = sub.add_parser("plotdata", help="aggregate a results directory into plot tables")
    s.add_argument("--out", required=True, help="results directory")
    s.add_argument("--to", default=None, help="write tables elsewhere")
    sub.add_parser("presets", help="list bundled presets")
    return p


def main(argv=None) -> int:
    try:
        args = _parser().parse_args(argv)
    except SystemExit as err:
        return 0 if err.code == 0 else 2
    try:
        if args.command == "presets":
            print("\n".join(list_presets()))
            return 0
        if args.command == "plotdata":
            for path in emit_plotdata(args.out, args.to):
                print(path)
            return 0
        cfg = load_config(args.config)
        if args.seed:
            cfg = copy.deepcopy(cfg)
            cfg["seeds"] = list(args.seed)
            validate_config(cfg)
        if cfg["kind"] != args.command:
            raise ConfigError(f"config kind {cfg['kind']!r} does not match '{args.command}'")
        if args.workers < 1:
            raise ConfigError("--workers must be >= 1")
        RUNNERS[args.command](cfg, args.out, args.workers)
        return 0
    except (SamplerFault, FloatingPointError) as err:
        print(f"numerical fault: {err}", file=sys.stderr)
        return 3
    except (ValueError, KeyError, OSError) as err:
        # ConfigError, malformed model or data files, unreadable paths
        print(f"config error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
