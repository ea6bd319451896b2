"""Training and evaluation of the DPD against a frozen PA, plus sweeps.

Training uses direct learning: the loss ``|pa(dpd(x)) - G x|^2`` is
back-propagated through the (frozen, differentiable) GMP into the TCN.
"""

from __future__ import annotations

import csv
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .activations import ALL_KINDS, ActivationKind
from .autodiff import AdamState, adam_step
from .errors import ConfigError, DivergenceError, NonFiniteError
from .metrics import AcprPlan, MetricsReport, acpr_from_psd, am_curves, evm_db, nmse_db, psd_welch
from .pa import PaChain
from .signals import ComplexSignal, OfdmConfig, SymbolGrid, demodulate_ofdm, generate_ofdm
from .tcn import (
    TcnArch,
    TcnModel,
    backward,
    count_params,
    extract_features,
    forward,
    init_model,
    iq_rows,
    predistort,
    solve_width_for_budget,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Stimulus:
    """A drive signal, optionally with the OFDM frame that produced it."""

    signal: ComplexSignal
    ofdm: OfdmConfig | None = None
    symbols: SymbolGrid | None = None
    occupied_bw_hz: float | None = None

    @classmethod
    def from_ofdm(cls, cfg: OfdmConfig) -> "Stimulus":
        sig, grid = generate_ofdm(cfg)
        return cls(sig, cfg, grid, cfg.occupied_bw_hz)

    @property
    def bandwidth(self) -> float:
        if self.occupied_bw_hz is not None:
            return self.occupied_bw_hz
        if self.ofdm is not None:
            return self.ofdm.occupied_bw_hz
        raise ConfigError("stimulus has no occupied bandwidth; ACPR bands are undefined")


def ofdm_splits(cfg: OfdmConfig) -> dict[str, Stimulus]:
    """Train/val/test frames from consecutive seeds of one configuration."""
    return {name: Stimulus.from_ofdm(replace(cfg, seed=cfg.seed + i))
            for i, name in enumerate(("train", "val", "test"))}


@dataclass(frozen=True)
class MetricsConfig:
    nfft: int = 1024
    overlap: float = 0.5
    window: str = "hann"
    guard_hz: float = 0.0


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 500
    segment_length: int = 512
    # 0 picks the valid interior length, so interiors tile without overlap
    segment_hop: int = 0
    batch_size: int = 16
    lr: float = 5e-3
    lr_decay: float = 0.5
    lr_patience: int = 20
    min_lr: float = 1e-5
    seed: int = 0
    target_gain: float = 1.0
    loss: str = "mse"
    report_every: int = 50

    def __post_init__(self):
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")
        if self.batch_size < 1 or self.segment_length < 1:
            raise ConfigError("batch size and segment length must be positive")
        if self.segment_hop < 0:
            raise ConfigError("segment_hop must be >= 0")
        if self.loss != "mse":
            raise ConfigError("only the I/Q MSE loss is supported")


@dataclass
class ExperimentRecord:
    arch: dict
    pa: dict
    train: dict
    history: list[dict] = field(default_factory=list)
    final: dict[str, MetricsReport] = field(default_factory=dict)
    wall_clock_s: float = 0.0
    seed: int = 0
    n_params: int = 0

    def manifest(self) -> dict:
        return {
            "arch": self.arch,
            "pa": self.pa,
            "train": self.train,
            "seed": self.seed,
            "n_params": self.n_params,
            "wall_clock_s": self.wall_clock_s,
            "epochs_recorded": len(self.history),
            "final": {k: v.scalars() for k, v in self.final.items()},
        }


def arch_descriptor(arch: TcnArch) -> dict:
    d = asdict(arch)
    d["activation"] = arch.activation.label
    d["hidden_channels"] = list(arch.widths)
    d["features"] = list(arch.features)
    return d


def pa_descriptor(pa: PaChain) -> dict:
    if pa.model is None:
        return {"kind": "identity", "g_in": pa.g_in, "gain": pa.gain}
    s = pa.model.structure
    return {"kind": "gmp", "orders": list(s.orders), "memory": s.memory, "lags": list(s.lags),
            "g_in": pa.g_in, "gain": pa.gain}


# --- evaluation -------------------------------------------------------------------

def evaluate_chain(
    dpd: TcnModel | None,
    pa: PaChain,
    stimulus: Stimulus,
    metrics: MetricsConfig = MetricsConfig(),
    target_gain: float | None = None,
    with_evm: bool = True,
    with_curves: bool = True,
) -> MetricsReport:
    """x -> dpd -> pa, scored against the linear target ``G x``.

    NMSE compares against ``G x``; PSD and ACPR are taken on the PA output;
    EVM demodulates the PA output against the transmitted symbols when the
    stimulus carries them.
    """
    g = pa.gain if target_gain is None else target_gain
    x = stimulus.signal
    u = predistort(dpd, x)
    y = pa(u)
    target = x.samples * g
    nmse = nmse_db(target, y.samples)
    mse = float(np.mean(np.abs(y.samples - target) ** 2))
    plan = AcprPlan.adjacent(stimulus.bandwidth, metrics.guard_hz)
    plan.check_nyquist(x.sample_rate_hz)
    psd = psd_welch(y, metrics.nfft, metrics.overlap, metrics.window)
    left, right = acpr_from_psd(psd, plan)
    evm = None
    if with_evm and stimulus.ofdm is not None and stimulus.symbols is not None:
        rx = demodulate_ofdm(y, stimulus.ofdm, gain_correct=False,
                             time_scale=stimulus.symbols.time_scale)
        evm = evm_db(stimulus.symbols, rx, gain_correct=True)
    curves = am_curves(x, y) if with_curves else None
    meta = {"mse": mse, "nfft": metrics.nfft, "overlap": metrics.overlap,
            "window": metrics.window, "bandwidth_hz": stimulus.bandwidth,
            "sample_rate_hz": x.sample_rate_hz, "n_samples": len(x)}
    return MetricsReport(nmse, left, right, evm, psd=psd, am=curves, meta=meta)


# --- training -----------------------------------------------------------------------

def _margins(arch: TcnArch, pa: PaChain) -> tuple[int, int]:
    rf = arch.receptive_field
    if arch.padding_mode == "causal":
        return rf - 1 + pa.history, pa.lookahead
    half = (rf - 1) // 2
    return half + pa.history, half + pa.lookahead


def _segment_starts(total: int, length: int, stride: int) -> list[int]:
    starts = list(range(0, total - length + 1, stride))
    if starts[-1] + length < total:
        starts.append(total - length)
    return starts


def _chain_loss_and_grads(model: TcnModel, pa: PaChain, feats, raw, gain, lo, hi):
    out, cache = forward(model, feats, raw, keep=True)
    yr, yi = pa.apply_iq(out[:, 0], out[:, 1])
    er = (yr - gain * raw[:, 0])[:, lo:hi]
    ei = (yi - gain * raw[:, 1])[:, lo:hi]
    n = er.size
    loss = float((np.sum(er * er) + np.sum(ei * ei)) / n)
    gyr = np.zeros_like(yr)
    gyi = np.zeros_like(yi)
    gyr[:, lo:hi] = 2.0 * er / n
    gyi[:, lo:hi] = 2.0 * ei / n
    gur, gui = pa.backward_iq(out[:, 0], out[:, 1], gyr, gyi)
    grads = backward(model, cache, np.stack([gur, gui], axis=1))
    return loss, grads


def chain_loss(model: TcnModel, pa: PaChain, x: ComplexSignal, gain: float = 1.0,
               margins: tuple[int, int] = (0, 0)):
    """Training loss and gradients on one whole sequence (used for grad checks)."""
    feats = extract_features(x, model.arch.features)[None]
    raw = iq_rows(x)[None]
    lo, hi = margins[0], len(x) - margins[1]
    return _chain_loss_and_grads(model, pa, feats, raw, gain, lo, hi)


def train_dpd(
    pa: PaChain,
    stimulus: Stimulus,
    arch: TcnArch,
    cfg: TrainConfig = TrainConfig(),
    val: Stimulus | None = None,
    metrics: MetricsConfig = MetricsConfig(),
) -> tuple[TcnModel, ExperimentRecord]:
    """Fit a TCN predistorter in front of a frozen PA.

    Deterministic for a given ``cfg.seed``: weight init and segment order are
    both drawn from it. Validation metrics are recorded every epoch via
    :func:`evaluate_chain` on ``val`` (the training stimulus if omitted).
    """
    t0 = time.perf_counter()
    val = val or stimulus
    x = stimulus.signal
    L = cfg.segment_length
    rf = arch.receptive_field
    left, right = _margins(arch, pa)
    if L < rf:
        raise ConfigError(f"segment length {L} is shorter than the receptive field {rf}")
    if L <= left + right:
        raise ConfigError(f"segment length {L} leaves no samples after margins {left}+{right}")
    if len(x) < L:
        raise ConfigError(f"stimulus ({len(x)} samples) is shorter than one segment ({L})")

    model = init_model(arch, seed=cfg.seed)
    feats_all = extract_features(x, arch.features)
    raw_all = iq_rows(x)
    starts = _segment_starts(len(x), L, cfg.segment_hop or L - left - right)
    seg_feats = np.stack([feats_all[:, s:s + L] for s in starts])
    seg_raw = np.stack([raw_all[:, s:s + L] for s in starts])
    rng = np.random.default_rng(cfg.seed)

    state = AdamState.init(model.params, lr=cfg.lr)
    record = ExperimentRecord(
        arch=arch_descriptor(arch), pa=pa_descriptor(pa), train=asdict(cfg),
        seed=cfg.seed, n_params=count_params(model),
    )
    best_val = np.inf
    stale = 0
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(len(starts))
        losses = []
        for b in range(0, len(order), cfg.batch_size):
            idx = order[b:b + cfg.batch_size]
            # overflow here is caught below as divergence
            with np.errstate(over="ignore", invalid="ignore"):
                loss, grads = _chain_loss_and_grads(
                    model, pa, seg_feats[idx], seg_raw[idx], cfg.target_gain, left, L - right)
            if not np.isfinite(loss):
                raise DivergenceError(epoch, epoch - 1)
            try:
                params, state = adam_step(model.params, grads, state)
            except NonFiniteError:
                raise DivergenceError(epoch, epoch - 1) from None
            model = TcnModel(arch, params)
            losses.append(loss)

        rep = evaluate_chain(model, pa, val, metrics, cfg.target_gain,
                             with_evm=False, with_curves=False)
        val_loss = rep.meta["mse"]
        if not np.isfinite(val_loss):
            raise DivergenceError(epoch, epoch - 1)
        record.history.append({
            "epoch": epoch,
            "train_loss": float(np.mean(losses)),
            "val_loss": val_loss,
            "val_nmse_db": rep.nmse_db,
            "val_acpr_left_dbc": rep.acpr_left_dbc,
            "val_acpr_right_dbc": rep.acpr_right_dbc,
            "lr": state.lr,
        })
        if val_loss < best_val * (1.0 - 1e-4):
            best_val, stale = val_loss, 0
        else:
            stale += 1
            if stale > cfg.lr_patience:
                state = replace(state, lr=max(state.lr * cfg.lr_decay, cfg.min_lr))
                stale = 0
        if cfg.report_every and epoch % cfg.report_every == 0:
            h = record.history[-1]
            log.info("epoch %d loss %.3e val NMSE %.2f dB ACPR %.2f/%.2f dBc lr %.1e",
                     epoch, h["train_loss"], h["val_nmse_db"], h["val_acpr_left_dbc"],
                     h["val_acpr_right_dbc"], h["lr"])

    record.final["val"] = evaluate_chain(model, pa, val, metrics, cfg.target_gain)
    record.wall_clock_s = time.perf_counter() - t0
    return model, record


# --- sweeps ---------------------------------------------------------------------

@dataclass(frozen=True)
class _Cell:
    key: tuple
    pa: PaChain
    stimulus: Stimulus
    val: Stimulus | None
    test: Stimulus | None
    arch: TcnArch
    cfg: TrainConfig
    metrics: MetricsConfig


def _run_cell(cell: _Cell):
    model, rec = train_dpd(cell.pa, cell.stimulus, cell.arch, cell.cfg, cell.val, cell.metrics)
    target = cell.test or cell.val or cell.stimulus
    rep = evaluate_chain(model, cell.pa, target, cell.metrics, cell.cfg.target_gain,
                         with_curves=False)
    train_loss = rec.history[-1]["train_loss"] if rec.history else float("nan")
    return cell.key, rep.scalars(), train_loss, rec.n_params


def _run_cells(cells: list[_Cell], n_jobs: int) -> dict:
    if n_jobs > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as ex:
            results = list(ex.map(_run_cell, cells))
    else:
        results = [_run_cell(c) for c in cells]
    return {r[0]: r[1:] for r in results}


def _stats(values) -> tuple[float, float]:
    v = np.array([np.nan if x is None else x for x in values], dtype=np.float64)
    return float(np.mean(v)), float(np.std(v))


def sweep_activations(
    kinds,
    seeds,
    base_arch: TcnArch,
    pa: PaChain,
    cfg: TrainConfig,
    stimulus: Stimulus,
    val: Stimulus | None = None,
    test: Stimulus | None = None,
    metrics: MetricsConfig = MetricsConfig(),
    n_jobs: int = 1,
) -> list[dict]:
    """One row per activation: mean/std over seeds of NMSE and mean-L/R ACPR.

    Seeds reseed the weight init and segment order; the stimulus is fixed.
    Rows come back in sweep-table ID order regardless of execution order.
    """
    kinds = [ActivationKind.parse(k) for k in (kinds or ALL_KINDS)]
    seeds = list(seeds)
    cells = [
        _Cell((k.value, s), pa, stimulus, val, test, replace(base_arch, activation=k),
              replace(cfg, seed=s), metrics)
        for k in kinds for s in seeds
    ]
    res = _run_cells(cells, n_jobs)
    rows = []
    for k in sorted(kinds, key=lambda k: k.value):
        per = [res[(k.value, s)] for s in seeds]
        nmse = [p[0]["nmse_db"] for p in per]
        acpr = [0.5 * (p[0]["acpr_left_dbc"] + p[0]["acpr_right_dbc"]) for p in per]
        evm = [p[0]["evm_db"] for p in per]
        rows.append({
            "id": k.value,
            "activation": k.label,
            "n_params": per[0][2],
            "n_seeds": len(seeds),
            "nmse_mean_db": _stats(nmse)[0],
            "nmse_std_db": _stats(nmse)[1],
            "acpr_mean_dbc": _stats(acpr)[0],
            "acpr_std_dbc": _stats(acpr)[1],
            "evm_mean_db": _stats(evm)[0],
            "evm_std_db": _stats(evm)[1],
            "train_loss_mean": _stats([p[1] for p in per])[0],
        })
    return rows


def sweep_budgets(
    budgets,
    seeds,
    arch_template: TcnArch,
    pa: PaChain,
    cfg: TrainConfig,
    stimulus: Stimulus,
    val: Stimulus | None = None,
    test: Stimulus | None = None,
    metrics: MetricsConfig = MetricsConfig(),
    n_jobs: int = 1,
) -> list[dict]:
    """Per parameter budget: solved widths, exact count, mean/std/best metrics."""
    budgets = list(budgets)
    seeds = list(seeds)
    solutions = {b: solve_width_for_budget(b, arch_template) for b in budgets}
    cells = [
        _Cell((b, s), pa, stimulus, val, test, solutions[b].apply(arch_template),
              replace(cfg, seed=s), metrics)
        for b in budgets for s in seeds
    ]
    res = _run_cells(cells, n_jobs)
    rows = []
    for b in sorted(budgets):
        sol = solutions[b]
        per = [res[(b, s)] for s in seeds]
        row = {"budget": b, "width": sol.width,
               "widths": " ".join(str(w) for w in sol.widths), "n_params": sol.count,
               "n_seeds": len(seeds)}
        for key, name, best in (("nmse_db", "nmse", min), ("acpr_left_dbc", "acpr_left", min),
                                ("acpr_right_dbc", "acpr_right", min), ("evm_db", "evm", min)):
            vals = [p[0][key] for p in per]
            row[f"{name}_mean"], row[f"{name}_std"] = _stats(vals)
            clean = [v for v in vals if v is not None]
            row[f"{name}_best"] = best(clean) if clean else float("nan")
        row["train_loss_mean"] = _stats([p[1] for p in per])[0]
        rows.append(row)
    return rows


def write_table(rows: list[dict], path) -> None:
    path = Path(path)
    if not rows:
        path.write_text("")
        return
    with path.open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})


def read_table(path) -> list[dict]:
    with Path(path).open(newline="") as fh:
        return list(csv.DictReader(fh))
