"""Monte Carlo experiment engine for the packet detector.

A Scenario bundles everything one detection-probability curve needs:
the waveform recipe, a channel profile, optional interference and CFO,
the detector settings, and the trial budget.  run_point scores one SNR
point (signal trials plus a separate noise-only false-alarm count) and
run_curve sweeps the scenario's SNR grid, persisting each finished
point so an interrupted sweep resumes where it stopped and writing the
curve as CSV next to a text copy of the scenario.

Reproducibility contract: every random draw in a trial comes from a
seed sequence keyed on (root_seed, SNR point key, stream tag, trial
index).  The key depends only on scenario content, never on execution
order or worker count, so a curve's CSV bytes are identical whether it
runs serially, in a process pool, or resumed across interruptions.
"""

from __future__ import annotations

import concurrent.futures
import hashlib
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .channel import (
    ChannelRealization,
    DelaySpreadProfile,
    InterferenceConfig,
    add_interference,
    apply_cfo,
    apply_channel,
    assemble_stream,
    effective_taps,
    generate_multipath,
    noise_psd_from_eta,
)
from .channelizer import (
    CascadeDetector,
    ChannelizerConfig,
    config_from_waveform,
    synthesis_state,
)
from .detector import (
    DetectionConfig,
    ideal_band_split,
    theory_pd,
    threshold,
)
from .numerics import ComplexSignal
from .waveform import (
    WaveformConfig,
    composite_pulse,
    design_prototype_filter,
    generate_preamble,
    make_spreading_code,
    make_waveform_config,
)

__all__ = [
    "WaveformSpec",
    "Scenario",
    "CurvePoint",
    "wilson_interval",
    "eta_for_target_pd",
    "run_point",
    "run_curve",
    "measure_false_alarm",
    "curve_csv_path",
    "scenario_to_text",
    "scenario_from_text",
    "save_scenario",
    "load_scenario",
    "preset",
    "preset_names",
]

_Z95 = 1.959963984540054

# stream tags for the per-trial seed key
_TAG_SIGNAL = 1
_TAG_NOISE = 2


@dataclass(frozen=True)
class WaveformSpec:
    """Recipe for a waveform: scalars only, so it travels in config files.

    build() expands it through the standard constructors; two equal
    specs always build bit-identical waveforms.
    """

    num_subbands: int
    preamble_length: int
    symbol_duration_s: float
    span_symbols: int = 8
    rolloff: float = 0.25
    sign_seed: int = 0
    symbol_seed: int = 0

    def build(self) -> WaveformConfig:
        return make_waveform_config(
            self.num_subbands,
            self.preamble_length,
            self.symbol_duration_s,
            span_symbols=self.span_symbols,
            rolloff=self.rolloff,
            sign_seed=self.sign_seed,
            symbol_seed=self.symbol_seed,
        )

    @property
    def sample_rate_hz(self) -> float:
        return self.num_subbands / self.symbol_duration_s

    @property
    def preamble_duration_s(self) -> float:
        return self.preamble_length * self.symbol_duration_s


@dataclass(frozen=True)
class Scenario:
    """One experiment: a waveform in a channel, swept over SNR.

    mode selects the receiver: "srb" runs one cascade over the full
    band, "mrb" splits the stream into detector.radios contiguous
    sub-bands and sums the per-radio statistics.  known_noise pins each
    trial's whitener to the true noise level (the calibrated detector
    the theory curves describe); with it off the receiver estimates
    band powers from its own trailing window.  start_jitter_span is the
    number of admissible packet-start residues modulo a symbol: the
    scored window grid advances one symbol per hop with detector.p
    delay branches each, so starts are drawn on that lattice, which is
    the timing uncertainty the architecture itself absorbs.
    """

    name: str
    waveform: WaveformSpec
    channel_profile: DelaySpreadProfile | None
    interference: InterferenceConfig | None
    snr_sweep_db: tuple[float, ...]
    detector: DetectionConfig
    trials_per_point: int
    root_seed: int
    cfo_enabled: bool = False
    cfo_range_hz: float = 0.0
    cfo_grid_points: int = 1
    mode: str = "srb"
    known_noise: bool = True
    noise_windows: int = 4096
    start_jitter_span: int = 1
    metadata: tuple[tuple[str, str], ...] = ()

    def __post_init__(self):
        object.__setattr__(
            self, "snr_sweep_db", tuple(float(v) for v in self.snr_sweep_db)
        )
        object.__setattr__(
            self,
            "metadata",
            tuple((str(k), str(v)) for k, v in self.metadata),
        )
        if not self.name or any(c in self.name for c in "/\\ \t\n"):
            raise ValueError("name must be a nonempty token usable in file names")
        if not self.snr_sweep_db:
            raise ValueError("snr_sweep_db must be nonempty")
        if self.trials_per_point < 1:
            raise ValueError("trials_per_point must be >= 1")
        if self.noise_windows < 1:
            raise ValueError("noise_windows must be >= 1")
        if self.mode not in ("srb", "mrb"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.mode == "mrb":
            if self.detector.radios < 2:
                raise ValueError("mrb mode needs detector.radios >= 2")
            if self.waveform.num_subbands % self.detector.radios != 0:
                raise ValueError("radio count must divide the subband count")
        if self.cfo_enabled:
            if not self.cfo_range_hz > 0.0:
                raise ValueError("cfo range must be positive when enabled")
            if self.cfo_grid_points < 1:
                raise ValueError("cfo grid needs at least one point")
        if not 1 <= self.start_jitter_span <= self.detector.p:
            raise ValueError("start_jitter_span must be in [1, detector.p]")

    @property
    def cfo_grid_hz(self) -> np.ndarray:
        if not self.cfo_enabled or self.cfo_grid_points == 1:
            return np.zeros(1)
        return np.linspace(-self.cfo_range_hz, self.cfo_range_hz, self.cfo_grid_points)

    @property
    def effective_j_grid(self) -> int:
        return self.cfo_grid_points if self.cfo_enabled else 1


@dataclass(frozen=True)
class CurvePoint:
    """One SNR point of a detection curve, empirical next to theory."""

    eta_db: float
    p_d_empirical: float
    p_d_theory: float
    p_fa_empirical: float
    trials: int
    wilson_low: float
    wilson_high: float

    def __post_init__(self):
        for label in ("p_d_empirical", "p_d_theory", "p_fa_empirical"):
            v = getattr(self, label)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{label} must be a probability, got {v}")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if not self.wilson_low <= self.p_d_empirical <= self.wilson_high:
            raise ValueError("confidence interval must contain the estimate")

    @property
    def wilson_ci(self) -> tuple[float, float]:
        return (self.wilson_low, self.wilson_high)


_CSV_COLUMNS = (
    "eta_db",
    "p_d_empirical",
    "p_d_theory",
    "p_fa_empirical",
    "trials",
    "wilson_low",
    "wilson_high",
)


def wilson_interval(successes: int, trials: int, z: float = _Z95) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if not 0 <= successes <= trials:
        raise ValueError("successes must be in [0, trials]")
    phat = successes / trials
    denom = 1.0 + z * z / trials
    center = (phat + z * z / (2.0 * trials)) / denom
    half = (
        z
        * math.sqrt(phat * (1.0 - phat) / trials + z * z / (4.0 * trials * trials))
        / denom
    )
    return (max(0.0, center - half), min(1.0, center + half))


def eta_for_target_pd(
    p_fa: float,
    p: int,
    target_pd: float,
    preamble_length: int,
    num_subbands: int,
    j_grid: int = 1,
) -> float:
    """Chip SNR in dB where the chi-squared theory curve hits target_pd.

    Bisection on the exact noncentral law, not the deflection
    approximation, so placements like "the point where P_D = 0.5" land
    on the same curve run_point reports as p_d_theory.
    """
    if not 0.0 < target_pd < 1.0:
        raise ValueError("target_pd must be in (0, 1)")

    def pd_at(eta_db: float) -> float:
        lam = 2.0 * preamble_length * num_subbands * 10.0 ** (eta_db / 10.0)
        return theory_pd(p_fa, p, lam, j_grid)

    lo, hi = -90.0, 40.0
    if pd_at(lo) > target_pd or pd_at(hi) < target_pd:
        raise ValueError("target_pd out of reach for this configuration")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if pd_at(mid) < target_pd:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


# ---------------------------------------------------------------------------
# per-process build cache


@dataclass(frozen=True)
class _Bundle:
    """Everything a trial reuses; built once per scenario per process."""

    wf: WaveformConfig
    cfg: ChannelizerConfig
    tx: ComplexSignal
    rho: ComplexSignal
    radio_cfgs: tuple[ChannelizerConfig, ...]
    thr: float
    lead_symbols_lo: int
    trail_samples: int
    grid_hz: np.ndarray = field(repr=False)


_BUNDLES: dict[Scenario, _Bundle] = {}


def _radio_waveform(wf: WaveformConfig, radios: int, m: int) -> WaveformConfig:
    """K-band waveform radio m sees after an ideal band split.

    The sliced code keeps the sign sequence of bands [mK, (m+1)K); the
    quadrature stagger restarts at the radio's first band, which drops
    a constant phase per radio.  The detector statistics are magnitude
    based, so that phase never matters.
    """
    k = wf.num_subbands // radios
    signs = wf.code.signs[m * k : (m + 1) * k]
    return WaveformConfig(
        num_subbands=k,
        preamble_length=wf.preamble_length,
        symbol_duration_s=wf.symbol_duration_s,
        prototype=design_prototype_filter(
            k, wf.prototype.span_symbols, wf.prototype.rolloff
        ),
        code=make_spreading_code(k, signs=signs),
        preamble_symbols=wf.preamble_symbols,
    )


def _tracked_min_anchor(cfg: ChannelizerConfig) -> int:
    # mirror of the cascade's own warm-up rule: first anchor whose
    # oldest contributing hop has a full strictly-past power window
    delay = (synthesis_state(cfg).interp.size - 1) // 2
    first = (cfg.fifo_capacity - 1) * cfg.hop + delay + 1
    return -(-first // cfg.num_subbands) * cfg.num_subbands


def _bundle(scenario: Scenario) -> _Bundle:
    cached = _BUNDLES.get(scenario)
    if cached is not None:
        return cached
    wf = scenario.waveform.build()
    det = scenario.detector
    radio_cfgs: tuple[ChannelizerConfig, ...] = ()
    if scenario.mode == "mrb":
        radio_cfgs = tuple(
            config_from_waveform(
                _radio_waveform(wf, det.radios, m), branch_count=det.taps_per_radio
            )
            for m in range(det.radios)
        )
        cfg = config_from_waveform(wf, branch_count=det.p)
        warmup = max(_tracked_min_anchor(c) for c in radio_cfgs) * det.radios
    else:
        cfg = config_from_waveform(wf, branch_count=det.p)
        warmup = _tracked_min_anchor(cfg)
    l = wf.num_subbands
    # lead is drawn past the tracked warm-up even in calibrated runs so
    # matched-seed comparisons of the two whitening modes stay aligned
    lead_lo = warmup // l + 2
    trail = 2 * wf.prototype.span_symbols * l + 2 * l
    built = _Bundle(
        wf=wf,
        cfg=cfg,
        tx=generate_preamble(wf),
        rho=composite_pulse(wf),
        radio_cfgs=radio_cfgs,
        thr=threshold(det.p_fa, det.p, scenario.effective_j_grid),
        lead_symbols_lo=lead_lo,
        trail_samples=trail,
        grid_hz=scenario.cfo_grid_hz,
    )
    if len(_BUNDLES) >= 8:
        _BUNDLES.clear()
    _BUNDLES[scenario] = built
    return built


# ---------------------------------------------------------------------------
# seeding


def _eta_key(eta_db: float) -> int:
    # micro-dB resolution, folded to an unsigned 64-bit word
    return int(round(eta_db * 1e6)) & 0xFFFFFFFFFFFFFFFF


def _trial_rng(scenario: Scenario, eta_db: float, tag: int, index: int):
    seq = np.random.SeedSequence(
        entropy=[
            scenario.root_seed & 0xFFFFFFFFFFFFFFFF,
            _eta_key(eta_db),
            tag,
            index,
        ]
    )
    return np.random.default_rng(seq)


def _draw_seed(rng) -> int:
    return int(rng.integers(0, 2**63 - 1))


# ---------------------------------------------------------------------------
# single-stream scoring


def _override_profiles(scenario: Scenario, noise_psd: float):
    """Whitener pins for (srb cfg, radio cfgs): None means tracked."""
    if not scenario.known_noise:
        return None, None
    l = scenario.waveform.num_subbands
    m = scenario.detector.radios
    srb = np.full(l, noise_psd)
    radios = np.full(l // m, noise_psd / m) if scenario.mode == "mrb" else None
    return srb, radios


def _stats_single(
    x: np.ndarray, bundle: _Bundle, scenario: Scenario, noise_psd: float
) -> tuple[np.ndarray, np.ndarray]:
    """(full-rate anchors, statistics) for one already-derotated stream."""
    srb_override, radio_override = _override_profiles(scenario, noise_psd)
    if scenario.mode == "srb":
        det = CascadeDetector(bundle.cfg, power_override=srb_override)
        return det.push(x)
    radios = scenario.detector.radios
    l = bundle.wf.num_subbands
    pad = (-x.size) % l
    if pad:
        x = np.concatenate([x, np.zeros(pad, dtype=np.complex128)])
    subs = ideal_band_split(x, l, radios)
    anchor_sets = []
    stat_sets = []
    for cfg_m, sub in zip(bundle.radio_cfgs, subs):
        det = CascadeDetector(cfg_m, power_override=radio_override)
        anchors_m, stats_m = det.push(sub)
        anchor_sets.append(anchors_m)
        stat_sets.append(stats_m)
    count = min(a.size for a in anchor_sets)
    combined = np.sum([s[:count] for s in stat_sets], axis=0)
    return anchor_sets[0][:count] * radios, combined


def _stats_over_grid(
    stream: ComplexSignal, bundle: _Bundle, scenario: Scenario, noise_psd: float
) -> tuple[np.ndarray, np.ndarray]:
    """Per-window max of the statistic across the CFO candidate grid."""
    anchors = None
    best = None
    for df in bundle.grid_hz:
        x = stream if df == 0.0 else apply_cfo(stream, -df)
        a, s = _stats_single(x.samples, bundle, scenario, noise_psd)
        if best is None:
            anchors, best = a, s
        else:
            n = min(best.size, s.size)
            anchors, best = anchors[:n], np.maximum(best[:n], s[:n])
    return anchors, best


# ---------------------------------------------------------------------------
# trials


def _unit_channel() -> ChannelRealization:
    return ChannelRealization(delays_s=np.zeros(1), gains=np.ones(1))


def _calibration_taps(scenario: Scenario, channel: ChannelRealization, bundle: _Bundle):
    """Effective taps used to set the trial's noise level from eta.

    The tap window covers the channel's spread plus a margin, not just
    the detector's p hypotheses, so eta measures the energy the channel
    actually delivers.  A detector whose p undershoots the true spread
    then pays the lost energy as a visible curve shift instead of the
    calibration quietly renormalizing it away.
    """
    wf = bundle.wf
    p_cal = scenario.detector.p
    prof = scenario.channel_profile
    if prof is not None:
        spread = math.ceil(prof.target_95pct_duration_ns * 1e-9 * wf.sample_rate_hz)
        p_cal = min(
            wf.prototype.span_symbols * wf.num_subbands, p_cal + spread + 16
        )
    return effective_taps(channel, bundle.rho, p_cal, 1.0 / wf.sample_rate_hz)


def _signal_trial(scenario: Scenario, eta_db: float, trial: int) -> bool:
    bundle = _bundle(scenario)
    wf = bundle.wf
    det = scenario.detector
    rng = _trial_rng(scenario, eta_db, _TAG_SIGNAL, trial)

    if scenario.channel_profile is not None:
        channel = generate_multipath(scenario.channel_profile, seed=_draw_seed(rng))
        rx = apply_channel(bundle.tx, channel)
    else:
        channel = _unit_channel()
        rx = bundle.tx
    theta = _calibration_taps(scenario, channel, bundle)
    n0 = noise_psd_from_eta(eta_db, theta, wf.num_subbands)

    l = wf.num_subbands
    lead_symbols = int(rng.integers(bundle.lead_symbols_lo, bundle.lead_symbols_lo + 32))
    jitter = int(rng.integers(0, scenario.start_jitter_span))
    lead = lead_symbols * l + jitter
    # assemble_stream takes the per-sample noise variance of the stream,
    # which is N0/L for a matched-filter-plane level N0
    stream, k0 = assemble_stream(
        rx, lead, bundle.trail_samples, noise_psd=n0 / l, seed=_draw_seed(rng)
    )
    if scenario.interference is not None:
        stream = add_interference(
            stream, scenario.interference, n0 / l, seed=_draw_seed(rng)
        )
    if scenario.cfo_enabled:
        df = float(rng.uniform(-scenario.cfo_range_hz, scenario.cfo_range_hz))
        stream = apply_cfo(stream, df)

    anchors, stats = _stats_over_grid(stream, bundle, scenario, n0)
    if anchors is None or anchors.size == 0:
        return False
    hits = (stats > bundle.thr) & (np.abs(anchors - k0) <= det.p + l)
    return bool(np.any(hits))


def _noise_trial(scenario: Scenario, eta_db: float, index: int) -> tuple[int, int]:
    """(threshold crossings, scored windows) over one noise-only stream."""
    bundle = _bundle(scenario)
    wf = bundle.wf
    l = wf.num_subbands
    rng = _trial_rng(scenario, eta_db, _TAG_NOISE, index)
    theta = effective_taps(
        _unit_channel(), bundle.rho, scenario.detector.p, 1.0 / wf.sample_rate_hz
    )
    n0 = noise_psd_from_eta(eta_db, theta, l)
    warmup = bundle.lead_symbols_lo * l
    windows_here = min(scenario.noise_windows, 512)
    length = warmup + windows_here * l + wf.preamble_length * l + bundle.trail_samples
    stream, _ = assemble_stream(
        None,
        0,
        length,
        noise_psd=n0 / l,
        seed=_draw_seed(rng),
        sample_rate_hz=wf.sample_rate_hz,
    )
    if scenario.interference is not None:
        stream = add_interference(
            stream, scenario.interference, n0 / l, seed=_draw_seed(rng)
        )
    anchors, stats = _stats_over_grid(stream, bundle, scenario, n0)
    if anchors is None:
        return 0, 0
    return int(np.count_nonzero(stats > bundle.thr)), int(stats.size)


def _signal_task(args) -> int:
    scenario, eta_db, trial = args
    return 1 if _signal_trial(scenario, eta_db, trial) else 0


def _noise_task(args) -> tuple[int, int]:
    scenario, eta_db, index = args
    return _noise_trial(scenario, eta_db, index)


def _map_tasks(fn, items, workers: int):
    if workers <= 0:
        return [fn(item) for item in items]
    with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
        chunk = max(1, len(items) // (workers * 4))
        return list(pool.map(fn, items, chunksize=chunk))


# ---------------------------------------------------------------------------
# points and curves


def measure_false_alarm(
    scenario: Scenario,
    eta_db: float | None = None,
    min_windows: int | None = None,
    workers: int = 0,
) -> tuple[int, int]:
    """Count (crossings, windows) over noise-only streams.

    Streams are drawn and scored until at least min_windows windows
    (default: the scenario's noise_windows) have been seen.  The count
    is exact: each stream reports how many windows it actually scored.
    """
    target = scenario.noise_windows if min_windows is None else int(min_windows)
    if target < 1:
        raise ValueError("need at least one noise window")
    eta = scenario.snr_sweep_db[0] if eta_db is None else float(eta_db)
    # windows per stream is known only after scoring; probe one stream
    probe_cross, probe_windows = _noise_trial(scenario, eta, 0)
    if probe_windows == 0:
        raise RuntimeError("noise stream produced no scored windows")
    remaining = target - probe_windows
    extra = max(0, -(-remaining // probe_windows))
    results = _map_tasks(
        _noise_task, [(scenario, eta, 1 + i) for i in range(extra)], workers
    )
    crossings = probe_cross + sum(c for c, _ in results)
    windows = probe_windows + sum(w for _, w in results)
    return crossings, windows


def run_point(scenario: Scenario, eta_db: float, workers: int = 0) -> CurvePoint:
    """Score one SNR point: signal trials, noise-only windows, theory.

    A trial counts as a detection when some window statistic crosses
    the threshold and that window's anchor lies within p + L samples of
    the true packet start.  False alarms are counted on separate
    noise-only streams at the same settings.
    """
    if scenario.trials_per_point < 1:
        raise ValueError("trials_per_point must be >= 1")
    det = scenario.detector
    wf = scenario.waveform
    trials = scenario.trials_per_point
    detections = sum(
        _map_tasks(
            _signal_task,
            [(scenario, eta_db, t) for t in range(trials)],
            workers,
        )
    )
    crossings, windows = measure_false_alarm(scenario, eta_db, workers=workers)
    lam = 2.0 * wf.preamble_length * wf.num_subbands * 10.0 ** (eta_db / 10.0)
    low, high = wilson_interval(detections, trials)
    return CurvePoint(
        eta_db=float(eta_db),
        p_d_empirical=detections / trials,
        p_d_theory=theory_pd(det.p_fa, det.p, lam, scenario.effective_j_grid),
        p_fa_empirical=crossings / windows,
        trials=trials,
        wilson_low=low,
        wilson_high=high,
    )


def _fingerprint(scenario: Scenario) -> str:
    return hashlib.sha256(scenario_to_text(scenario).encode()).hexdigest()[:16]


def _write_text(path: str, text: str) -> None:
    tmp = path + ".tmp"
    try:
        with open(tmp, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


def _point_state_path(out_dir: str, scenario: Scenario, index: int) -> str:
    return os.path.join(out_dir, f"{scenario.name}.point{index:03d}.txt")


def curve_csv_path(scenario: Scenario, out_dir: str) -> str:
    return os.path.join(out_dir, f"{scenario.name}.csv")


def _point_to_text(point: CurvePoint, fingerprint: str) -> str:
    lines = [f"fingerprint = {fingerprint}"]
    for name in _CSV_COLUMNS:
        lines.append(f"{name} = {getattr(point, name)!r}")
    return "\n".join(lines) + "\n"


def _point_from_text(text: str, path: str) -> tuple[CurvePoint, str]:
    values: dict[str, str] = {}
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, _, raw = line.partition("=")
        values[key.strip()] = raw.strip()
    try:
        point = CurvePoint(
            eta_db=float(values["eta_db"]),
            p_d_empirical=float(values["p_d_empirical"]),
            p_d_theory=float(values["p_d_theory"]),
            p_fa_empirical=float(values["p_fa_empirical"]),
            trials=int(values["trials"]),
            wilson_low=float(values["wilson_low"]),
            wilson_high=float(values["wilson_high"]),
        )
        return point, values["fingerprint"]
    except (KeyError, ValueError) as exc:
        raise ValueError(f"corrupt point state in {path}: {exc}") from exc


def _csv_text(points: list[CurvePoint]) -> str:
    lines = [",".join(_CSV_COLUMNS)]
    for pt in points:
        lines.append(",".join(repr(getattr(pt, name)) for name in _CSV_COLUMNS))
    return "\n".join(lines) + "\n"


def run_curve(scenario: Scenario, out_dir: str, workers: int = 0) -> list[CurvePoint]:
    """Sweep the scenario's SNR grid and write the curve as CSV.

    Each finished point is persisted to its own state file before the
    next one starts; rerunning the same scenario skips finished points
    and rebuilds the CSV, so interrupted sweeps resume cheaply.  State
    files carry a scenario fingerprint and are refused when they do not
    match, rather than silently mixing experiments.
    """
    try:
        os.makedirs(out_dir, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out_dir}: {exc}") from exc
    fingerprint = _fingerprint(scenario)
    _write_text(
        os.path.join(out_dir, f"{scenario.name}.scenario.txt"),
        scenario_to_text(scenario),
    )
    points: list[CurvePoint] = []
    for index, eta_db in enumerate(scenario.snr_sweep_db):
        state_path = _point_state_path(out_dir, scenario, index)
        if os.path.exists(state_path):
            try:
                with open(state_path) as fh:
                    text = fh.read()
            except OSError as exc:
                raise OSError(f"cannot read point state {state_path}: {exc}") from exc
            point, stored = _point_from_text(text, state_path)
            if stored != fingerprint:
                raise ValueError(
                    f"point state {state_path} belongs to a different scenario "
                    f"(fingerprint {stored}, expected {fingerprint})"
                )
            if _eta_key(point.eta_db) != _eta_key(eta_db):
                raise ValueError(
                    f"point state {state_path} is for eta {point.eta_db} dB, "
                    f"expected {eta_db} dB"
                )
        else:
            point = run_point(scenario, eta_db, workers=workers)
            _write_text(state_path, _point_to_text(point, fingerprint))
        points.append(point)
    _write_text(curve_csv_path(scenario, out_dir), _csv_text(points))
    return points


# ---------------------------------------------------------------------------
# scenario files


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def scenario_to_text(scenario: Scenario) -> str:
    """Serialize to the key=value scenario file format."""
    wf = scenario.waveform
    det = scenario.detector
    lines = [
        f"name = {scenario.name}",
        f"mode = {scenario.mode}",
        f"root_seed = {scenario.root_seed}",
        f"trials_per_point = {scenario.trials_per_point}",
        f"noise_windows = {scenario.noise_windows}",
        f"known_noise = {_format_value(scenario.known_noise)}",
        f"start_jitter_span = {scenario.start_jitter_span}",
        "snr_sweep_db = " + ", ".join(repr(v) for v in scenario.snr_sweep_db),
        f"waveform.num_subbands = {wf.num_subbands}",
        f"waveform.preamble_length = {wf.preamble_length}",
        f"waveform.symbol_duration_s = {wf.symbol_duration_s!r}",
        f"waveform.span_symbols = {wf.span_symbols}",
        f"waveform.rolloff = {wf.rolloff!r}",
        f"waveform.sign_seed = {wf.sign_seed}",
        f"waveform.symbol_seed = {wf.symbol_seed}",
        f"detector.p = {det.p}",
        f"detector.p_fa = {det.p_fa!r}",
        f"detector.j_grid = {det.j_grid}",
        f"detector.radios = {det.radios}",
        f"cfo.enabled = {_format_value(scenario.cfo_enabled)}",
        f"cfo.range_hz = {scenario.cfo_range_hz!r}",
        f"cfo.grid_points = {scenario.cfo_grid_points}",
    ]
    prof = scenario.channel_profile
    if prof is None:
        lines.append("channel.environment = none")
    else:
        lines.extend(
            [
                f"channel.environment = {prof.environment}",
                f"channel.los = {_format_value(prof.los)}",
                f"channel.target_95pct_duration_ns = {prof.target_95pct_duration_ns!r}",
                f"channel.decay_constant_ns = {prof.decay_constant_ns!r}",
                f"channel.tap_spacing_ns = {prof.tap_spacing_ns!r}",
            ]
        )
    intf = scenario.interference
    if intf is None:
        lines.append("interference.present = false")
    else:
        lines.extend(
            [
                "interference.present = true",
                f"interference.count = {intf.count}",
                f"interference.bandwidth_hz = {intf.bandwidth_hz!r}",
                "interference.psd_above_noise_db = "
                + ", ".join(repr(float(v)) for v in intf.psd_above_noise_db_range),
                "interference.band_edges_hz = "
                + ", ".join(repr(float(v)) for v in intf.band_edges_hz),
            ]
        )
    for key, value in scenario.metadata:
        lines.append(f"meta.{key} = {value}")
    return "\n".join(lines) + "\n"


def _parse_pairs(text: str) -> dict[str, str]:
    pairs: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        key, sep, raw = stripped.partition("=")
        if not sep:
            raise ValueError(f"line {lineno}: expected key = value, got {line!r}")
        pairs[key.strip()] = raw.strip()
    return pairs


def _parse_bool(raw: str, key: str) -> bool:
    if raw == "true":
        return True
    if raw == "false":
        return False
    raise ValueError(f"{key} must be true or false, got {raw!r}")


_KNOWN_KEYS = {
    "name",
    "mode",
    "root_seed",
    "trials_per_point",
    "noise_windows",
    "known_noise",
    "start_jitter_span",
    "snr_sweep_db",
    "waveform.num_subbands",
    "waveform.preamble_length",
    "waveform.symbol_duration_s",
    "waveform.span_symbols",
    "waveform.rolloff",
    "waveform.sign_seed",
    "waveform.symbol_seed",
    "detector.p",
    "detector.p_fa",
    "detector.j_grid",
    "detector.radios",
    "cfo.enabled",
    "cfo.range_hz",
    "cfo.grid_points",
    "channel.environment",
    "channel.los",
    "channel.target_95pct_duration_ns",
    "channel.decay_constant_ns",
    "channel.tap_spacing_ns",
    "interference.present",
    "interference.count",
    "interference.bandwidth_hz",
    "interference.psd_above_noise_db",
    "interference.band_edges_hz",
}


def scenario_from_text(text: str) -> Scenario:
    """Parse the key=value scenario format; unknown keys are errors."""
    pairs = _parse_pairs(text)
    unknown = [
        k for k in pairs if k not in _KNOWN_KEYS and not k.startswith("meta.")
    ]
    if unknown:
        raise ValueError(f"unknown scenario keys: {', '.join(sorted(unknown))}")
    try:
        waveform = WaveformSpec(
            num_subbands=int(pairs["waveform.num_subbands"]),
            preamble_length=int(pairs["waveform.preamble_length"]),
            symbol_duration_s=float(pairs["waveform.symbol_duration_s"]),
            span_symbols=int(pairs.get("waveform.span_symbols", "8")),
            rolloff=float(pairs.get("waveform.rolloff", "0.25")),
            sign_seed=int(pairs.get("waveform.sign_seed", "0")),
            symbol_seed=int(pairs.get("waveform.symbol_seed", "0")),
        )
        detector = DetectionConfig(
            p=int(pairs["detector.p"]),
            p_fa=float(pairs["detector.p_fa"]),
            j_grid=int(pairs.get("detector.j_grid", "1")),
            radios=int(pairs.get("detector.radios", "1")),
        )
        environment = pairs.get("channel.environment", "none")
        if environment == "none":
            profile = None
        else:
            profile = DelaySpreadProfile(
                environment=environment,
                los=_parse_bool(pairs["channel.los"], "channel.los"),
                target_95pct_duration_ns=float(
                    pairs["channel.target_95pct_duration_ns"]
                ),
                decay_constant_ns=float(pairs["channel.decay_constant_ns"]),
                tap_spacing_ns=float(pairs.get("channel.tap_spacing_ns", "2.0")),
            )
        if _parse_bool(pairs.get("interference.present", "false"), "interference.present"):
            psd = tuple(
                float(v) for v in pairs["interference.psd_above_noise_db"].split(",")
            )
            edges = tuple(
                float(v) for v in pairs["interference.band_edges_hz"].split(",")
            )
            interference = InterferenceConfig(
                count=int(pairs["interference.count"]),
                bandwidth_hz=float(pairs["interference.bandwidth_hz"]),
                psd_above_noise_db_range=psd,
                band_edges_hz=edges,
            )
        else:
            interference = None
        sweep = tuple(float(v) for v in pairs["snr_sweep_db"].split(","))
        metadata = tuple(
            (k[len("meta.") :], v) for k, v in pairs.items() if k.startswith("meta.")
        )
        return Scenario(
            name=pairs["name"],
            waveform=waveform,
            channel_profile=profile,
            interference=interference,
            snr_sweep_db=sweep,
            detector=detector,
            trials_per_point=int(pairs["trials_per_point"]),
            root_seed=int(pairs["root_seed"]),
            cfo_enabled=_parse_bool(pairs.get("cfo.enabled", "false"), "cfo.enabled"),
            cfo_range_hz=float(pairs.get("cfo.range_hz", "0.0")),
            cfo_grid_points=int(pairs.get("cfo.grid_points", "1")),
            mode=pairs.get("mode", "srb"),
            known_noise=_parse_bool(pairs.get("known_noise", "true"), "known_noise"),
            noise_windows=int(pairs.get("noise_windows", "4096")),
            start_jitter_span=int(pairs.get("start_jitter_span", "1")),
            metadata=metadata,
        )
    except KeyError as exc:
        raise ValueError(f"scenario file is missing key {exc.args[0]!r}") from exc


def save_scenario(scenario: Scenario, path: str) -> None:
    _write_text(path, scenario_to_text(scenario))


def load_scenario(path: str) -> Scenario:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise OSError(f"cannot read scenario file {path}: {exc}") from exc
    return scenario_from_text(text)


# ---------------------------------------------------------------------------
# presets


def _placed_sweep(
    p_fa: float, p: int, n: int, l: int, targets: tuple[float, ...]
) -> tuple[float, ...]:
    return tuple(
        round(eta_for_target_pd(p_fa, p, t, n, l), 3) for t in targets
    )


def _desk() -> Scenario:
    fs = 500e6
    spec = WaveformSpec(
        num_subbands=64,
        preamble_length=32,
        symbol_duration_s=64 / fs,
        sign_seed=2,
        symbol_seed=7,
    )
    det = DetectionConfig(p=4, p_fa=1e-2)
    sweep = _placed_sweep(
        det.p_fa, det.p, spec.preamble_length, spec.num_subbands,
        (0.05, 0.1, 0.25, 0.5, 0.75, 0.9, 0.99),
    )
    return Scenario(
        name="desk",
        waveform=spec,
        channel_profile=None,
        interference=None,
        snr_sweep_db=sweep,
        detector=det,
        trials_per_point=600,
        root_seed=20260814,
        noise_windows=8192,
        metadata=(
            ("sample_rate_hz", repr(fs)),
            ("subcarrier_spacing_hz", repr(fs / spec.num_subbands)),
            ("preamble_duration_s", repr(spec.preamble_duration_s)),
        ),
    )


def _narrowband() -> Scenario:
    fs = 500e6
    l = 1024
    t_b = l / fs
    duration = 2e-3
    n = round(duration / t_b)
    # 80 ns delay spread at 2 ns chips
    p = 40
    spec = WaveformSpec(
        num_subbands=l,
        preamble_length=n,
        symbol_duration_s=t_b,
        sign_seed=11,
        symbol_seed=12,
    )
    det = DetectionConfig(p=p, p_fa=1e-8, radios=4)
    sweep = _placed_sweep(det.p_fa, det.p, n, l, (0.1, 0.3, 0.5, 0.7, 0.9, 0.99))
    return Scenario(
        name="narrowband",
        waveform=spec,
        channel_profile=DelaySpreadProfile(
            environment="custom",
            los=False,
            target_95pct_duration_ns=80.0,
            decay_constant_ns=27.0,
        ),
        interference=None,
        snr_sweep_db=sweep,
        detector=det,
        trials_per_point=1000,
        root_seed=20260814,
        metadata=(
            ("sample_rate_hz", repr(fs)),
            ("subcarrier_spacing_hz", repr(fs / l)),
            ("requested_preamble_duration_s", repr(duration)),
            ("preamble_length_from_duration", str(n)),
            ("delay_spread_ns", "80.0"),
        ),
    )


def _wideband(short: bool) -> Scenario:
    fs = 1280e6
    l = 4096
    t_b = l / fs
    duration = 0.2e-3 if short else 2e-3
    n = round(duration / t_b)
    # 80 ns delay spread at 0.78 ns chips, rounded up to a radio multiple
    p = 104
    spec = WaveformSpec(
        num_subbands=l,
        preamble_length=n,
        symbol_duration_s=t_b,
        sign_seed=21,
        symbol_seed=22,
    )
    det = DetectionConfig(p=p, p_fa=1e-8, radios=8)
    sweep = _placed_sweep(det.p_fa, det.p, n, l, (0.1, 0.3, 0.5, 0.7, 0.9, 0.99))
    return Scenario(
        name="wideband_short" if short else "wideband",
        waveform=spec,
        channel_profile=DelaySpreadProfile(
            environment="custom",
            los=False,
            target_95pct_duration_ns=80.0,
            decay_constant_ns=27.0,
        ),
        interference=None,
        snr_sweep_db=sweep,
        detector=det,
        trials_per_point=1000,
        root_seed=20260814,
        mode="mrb",
        metadata=(
            ("sample_rate_hz", repr(fs)),
            ("subcarrier_spacing_hz", repr(fs / l)),
            ("radio_bands", "8"),
            ("requested_preamble_duration_s", repr(duration)),
            ("preamble_length_from_duration", str(n)),
            ("delay_spread_ns", "80.0"),
        ),
    )


_PRESETS = {
    "desk": _desk,
    "narrowband": _narrowband,
    "wideband": lambda: _wideband(short=False),
    "wideband_short": lambda: _wideband(short=True),
}


def preset_names() -> tuple[str, ...]:
    return tuple(sorted(_PRESETS))


def preset(name: str) -> Scenario:
    """Named scenario: desk, narrowband, wideband, or wideband_short.

    desk is sized to run a full curve on one core in minutes.  The
    narrowband and wideband presets describe the paper-scale systems;
    building one only computes its configuration (including the
    preamble length implied by the requested duration, recorded in the
    metadata), it does not start any trials.
    """
    try:
        factory = _PRESETS[name]
    except KeyError:
        raise ValueError(
            f"unknown preset {name!r}; available: {', '.join(preset_names())}"
        ) from None
    return factory()
