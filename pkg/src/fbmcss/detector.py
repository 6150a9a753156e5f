"""Statistical decision layer for the score-test packet detector.

Under the null the scaled statistic follows a central chi-squared law
with 2p degrees of freedom; under a packet with effective channel taps
theta it is noncentral with lambda = 2*beta*theta^H theta.  Everything
here is pure computation on small dense objects: thresholds, the exact
statistic (oracle), the banded low-complexity form, multi-radio-band
combining, theory curves, and Fisher-information checks that justify
the beta*I approximation the fast path rests on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .numerics import (
    chi2_tail_inv,
    gaussian_q,
    gaussian_q_inv,
    noncentral_chi2_tail,
)

__all__ = [
    "DetectionConfig",
    "TestStatistic",
    "TheoryPoint",
    "FimReport",
    "compute_beta",
    "threshold",
    "rao_exact",
    "rao_low_complexity",
    "mrb_combine",
    "noncentrality_srb",
    "noncentrality_mrb",
    "theory_pd",
    "deflection_pd",
    "required_eta_db",
    "cfo_grid_span_hz",
    "cfo_grid",
    "cfo_grid_search",
    "fim_matrix",
    "fim_approx_report",
    "mrb_fim_report",
    "ideal_band_split",
    "theory_curve",
]


@dataclass(frozen=True)
class DetectionConfig:
    """Decision-layer shape: taps p, false-alarm target, CFO grid, radios."""

    p: int
    p_fa: float
    j_grid: int = 1
    radios: int = 1

    def __post_init__(self):
        if self.p < 1:
            raise ValueError("p must be >= 1")
        if not 0.0 < self.p_fa < 1.0:
            raise ValueError("p_fa must be in (0, 1)")
        if self.j_grid < 1:
            raise ValueError("j_grid must be >= 1")
        if self.radios < 1:
            raise ValueError("radios must be >= 1")
        if self.radios > 1 and self.p % self.radios != 0:
            raise ValueError("p must be divisible by the radio count")

    @property
    def taps_per_radio(self) -> int:
        return self.p // self.radios

    def bands_per_radio(self, num_subbands: int) -> int:
        if num_subbands % self.radios != 0:
            raise ValueError("num_subbands must be divisible by the radio count")
        return num_subbands // self.radios


@dataclass(frozen=True)
class TestStatistic:
    value: float
    cfo_bin: int = 0
    window_index: int = 0

    def __post_init__(self):
        if self.value < 0.0:
            raise ValueError("statistic must be >= 0")


@dataclass(frozen=True)
class TheoryPoint:
    eta_db: float
    noncentrality: float
    p_d: float


@dataclass(frozen=True)
class FimReport:
    beta: float
    max_diag_deviation: float
    max_offdiag_ratio: float
    block_inverse_max_dev: float = 0.0


def _phi_array(phi_hat) -> np.ndarray:
    """Accept a BandPowerEstimate or any positive array of band PSDs."""
    values = getattr(phi_hat, "phi_hat", phi_hat)
    phi = np.asarray(values, dtype=np.float64)
    if phi.size == 0:
        raise ValueError("phi must be nonempty")
    if np.any(phi <= 0.0) or not np.all(np.isfinite(phi)):
        raise ValueError("phi entries must be positive and finite")
    return phi


def compute_beta(phi_hat, preamble_length: int, num_subbands: int) -> float:
    """beta = (N/L) * sum_k 1/Phi[k]; the statistic's scale constant.

    A band with huge Phi contributes nearly nothing: interference in
    that band costs its share of processing gain and nothing else.
    """
    phi = _phi_array(phi_hat)
    if phi.size != num_subbands:
        raise ValueError("phi length must equal num_subbands")
    if preamble_length < 1:
        raise ValueError("preamble_length must be >= 1")
    return preamble_length / num_subbands * float(np.sum(1.0 / phi))


def threshold(p_fa: float, p: int, j_grid: int = 1) -> float:
    """Detection threshold for the 2p-degree chi-squared null law.

    With a J-point CFO grid the per-candidate false-alarm target shrinks
    so the max over the grid meets the overall target: exact form
    1-(1-P_FA)^(1/J), or the small-P_FA form P_FA/J below 1e-3 where the
    exact form is numerically pointless.
    """
    if not 0.0 < p_fa < 1.0:
        raise ValueError("p_fa must be in (0, 1)")
    if p < 1:
        raise ValueError("p must be >= 1")
    if j_grid < 1:
        raise ValueError("j_grid must be >= 1")
    if j_grid == 1:
        per_bin = p_fa
    elif p_fa < 1e-3:
        per_bin = p_fa / j_grid
    else:
        per_bin = 1.0 - (1.0 - p_fa) ** (1.0 / j_grid)
    return chi2_tail_inv(2 * p, per_bin)


def rao_exact(y: np.ndarray, h: np.ndarray, c_w: np.ndarray) -> float:
    """Dense oracle: T = 2 y^H C^-1 H (H^H C^-1 H)^-1 H^H C^-1 y.

    Desk-scale use only; raises on singular covariance.
    """
    y = np.asarray(y, dtype=np.complex128).ravel()
    h = np.asarray(h, dtype=np.complex128)
    c_w = np.asarray(c_w, dtype=np.complex128)
    if h.shape[0] != y.size or c_w.shape != (y.size, y.size):
        raise ValueError("inconsistent dimensions")
    ci_y = np.linalg.solve(c_w, y)
    ci_h = np.linalg.solve(c_w, h)
    u = h.conj().T @ ci_y
    m = h.conj().T @ ci_h
    v = np.linalg.solve(m, u)
    return float(2.0 * np.real(np.vdot(u, v)))


def _band_of_block(num_subbands: int) -> np.ndarray:
    """Which analysis band owns DFT-bin block m (blocks of N bins).

    Band k is centered at (2k - L - 1)/(2L) cycles/sample, so its
    support is exactly bins [mN, (m+1)N) with k = (m + L/2 + 1) mod L.
    """
    l = num_subbands
    return (np.arange(l) + l // 2 + 1) % l


def rao_low_complexity(y: np.ndarray, h: np.ndarray, phi_hat, beta: float) -> float:
    """Banded-whitening reference: T = (2/beta) ||H^H C^-1 y||^2.

    The inverse covariance is applied in the frequency domain as a
    per-band division: DFT, divide each bin by its band's Phi, inverse
    DFT.  Exact for circulant per-band-flat covariances; for white
    noise it reduces to the exact statistic.
    """
    if beta <= 0.0:
        raise ValueError("beta must be positive")
    y = np.asarray(y, dtype=np.complex128).ravel()
    phi = _phi_array(phi_hat)
    l = phi.size
    if y.size % l != 0:
        raise ValueError("window length must be a multiple of the band count")
    n = y.size // l
    spectrum = np.fft.fft(y, norm="ortho")
    per_bin = np.repeat(phi[_band_of_block(l)], n)
    whitened = np.fft.ifft(spectrum / per_bin, norm="ortho")
    u = np.asarray(h, dtype=np.complex128).conj().T @ whitened
    return float(2.0 / beta * np.sum(np.abs(u) ** 2))


def mrb_combine(per_radio_statistics) -> float:
    """Sum of per-radio statistics (each already scaled by its 2/beta_m)."""
    stats = list(per_radio_statistics)
    if not stats:
        raise ValueError("need at least one per-radio statistic")
    return float(sum(stats))


def noncentrality_srb(theta, phi, preamble_length: int, num_subbands: int) -> float:
    """lambda = (2N/L) theta^H theta sum_k 1/Phi[k] (= 2 beta theta^H theta)."""
    t = np.asarray(getattr(theta, "theta", theta), dtype=np.complex128)
    energy = float(np.sum(np.abs(t) ** 2))
    if energy == 0.0:
        return 0.0
    return 2.0 * energy * compute_beta(phi, preamble_length, num_subbands)


def noncentrality_mrb(theta_m, phi_m, preamble_length: int, bands_per_radio: int) -> float:
    """lambda = (2N/K) sum_m theta_m^H theta_m sum_k 1/Phi_m[k]."""
    thetas = list(theta_m)
    phis = list(phi_m)
    if len(thetas) != len(phis) or not thetas:
        raise ValueError("need matching nonempty tap and PSD lists")
    total = 0.0
    for t, phi in zip(thetas, phis):
        total += noncentrality_srb(t, phi, preamble_length, bands_per_radio)
    return total


def theory_pd(p_fa: float, p: int, noncentrality: float, j_grid: int = 1) -> float:
    """Detection probability of the 2p-dof noncentral chi-squared law."""
    if noncentrality < 0.0:
        raise ValueError("noncentrality must be >= 0")
    gamma = threshold(p_fa, p, j_grid)
    return noncentral_chi2_tail(2 * p, noncentrality, gamma)


def deflection_pd(p_fa: float, d2: float) -> float:
    """Gaussian-approximation P_D = Q(Q^-1(P_FA) - sqrt(d2))."""
    if d2 < 0.0:
        raise ValueError("deflection must be >= 0")
    return gaussian_q(gaussian_q_inv(p_fa) - math.sqrt(d2))


def required_eta_db(
    p_fa: float,
    p_d: float,
    p: int,
    preamble_length: int,
    num_subbands: int,
) -> float:
    """Chip SNR needed for a target (P_FA, P_D), deflection approximation.

    Inverts d2 = (N L eta)^2 / p.  Doubling p costs a factor sqrt(2) in
    eta: the 1.505 dB delay-spread penalty per doubling.
    """
    if not 0.0 < p_d < 1.0:
        raise ValueError("p_d must be in (0, 1)")
    gap = gaussian_q_inv(p_fa) - gaussian_q_inv(p_d)
    if gap <= 0.0:
        raise ValueError("p_d must exceed p_fa")
    eta = gap * math.sqrt(p) / (preamble_length * num_subbands)
    return 10.0 * math.log10(eta)


def fim_matrix(h: np.ndarray, c_w: np.ndarray) -> np.ndarray:
    """Exact Fisher information H^H C^-1 H for the linear model."""
    h = np.asarray(h, dtype=np.complex128)
    c_w = np.asarray(c_w, dtype=np.complex128)
    return h.conj().T @ np.linalg.solve(c_w, h)


def _band_psd_from_cov(c_w: np.ndarray, num_subbands: int) -> np.ndarray:
    """Per-band PSD read off the covariance's DFT-domain diagonal."""
    nl = c_w.shape[0]
    n = nl // num_subbands
    f = np.fft.fft(np.eye(nl), axis=0, norm="ortho")
    diag = np.real(np.diag(f @ c_w @ f.conj().T))
    blocks = diag.reshape(num_subbands, n).mean(axis=1)
    phi = np.empty(num_subbands)
    phi[_band_of_block(num_subbands)] = blocks
    return phi


def fim_approx_report(
    h: np.ndarray,
    c_w: np.ndarray,
    preamble_length: int,
    num_subbands: int,
) -> FimReport:
    """Measure how close the exact FIM is to beta * I_p.

    beta comes from the per-band PSD implied by the covariance, so the
    report answers: how much does replacing the exact information
    matrix by the scalar beta cost for this noise?
    """
    fim = fim_matrix(h, c_w)
    phi = _band_psd_from_cov(np.asarray(c_w), num_subbands)
    beta = compute_beta(phi, preamble_length, num_subbands)
    diag = np.real(np.diag(fim))
    max_diag_dev = float(np.max(np.abs(diag - beta)) / beta)
    off = fim - np.diag(np.diag(fim))
    max_off = float(np.max(np.abs(off)) / beta)
    return FimReport(
        beta=beta,
        max_diag_deviation=max_diag_dev,
        max_offdiag_ratio=max_off,
    )


def mrb_fim_report(
    h_blocks,
    c_blocks,
    preamble_length: int,
    bands_per_radio: int,
) -> FimReport:
    """Joint-FIM check for independent radio observations.

    The stacked model has block-diagonal H and covariance, so the joint
    FIM and its inverse are block diagonal.  block_inverse_max_dev is
    the worst per-entry gap between the inverse of the assembled joint
    FIM and the block diagonal of per-block inverses (a structural
    identity, so it should sit at rounding level); diag and off-diag
    figures measure each block against its own beta_m.
    """
    hs = list(h_blocks)
    cs = list(c_blocks)
    if len(hs) != len(cs) or not hs:
        raise ValueError("need matching nonempty block lists")
    fims = [fim_matrix(h, c) for h, c in zip(hs, cs)]
    betas = [
        compute_beta(
            _band_psd_from_cov(np.asarray(c), bands_per_radio),
            preamble_length,
            bands_per_radio,
        )
        for c in cs
    ]
    sizes = [f.shape[0] for f in fims]
    p = sum(sizes)
    joint = np.zeros((p, p), dtype=np.complex128)
    per_block_inv = np.zeros((p, p), dtype=np.complex128)
    start = 0
    for f, q in zip(fims, sizes):
        sl = slice(start, start + q)
        joint[sl, sl] = f
        per_block_inv[sl, sl] = np.linalg.inv(f)
        start += q
    inv = np.linalg.inv(joint)
    scale = np.repeat(1.0 / np.asarray(betas), sizes)
    block_dev = float(np.max(np.abs(inv - per_block_inv) / scale[:, None]))
    diag_dev = max(
        float(np.max(np.abs(np.real(np.diag(f)) - b))) / b for f, b in zip(fims, betas)
    )
    max_off = max(
        float(np.max(np.abs(f - np.diag(np.diag(f))))) / b if f.shape[0] > 1 else 0.0
        for f, b in zip(fims, betas)
    )
    return FimReport(
        beta=float(np.mean(betas)),
        max_diag_deviation=diag_dev,
        max_offdiag_ratio=max_off,
        block_inverse_max_dev=block_dev,
    )


def ideal_band_split(y: np.ndarray, num_subbands: int, radios: int) -> list[np.ndarray]:
    """Partition a window into per-radio reduced-rate windows, losslessly.

    Radio m owns the K = L/M consecutive bands starting at m*K.  Bins
    are moved so each band lands where a K-band analysis expects it;
    total energy is preserved exactly.  This is the dense stand-in for
    a perfect mix/filter/decimate radio front end.
    """
    y = np.asarray(y, dtype=np.complex128).ravel()
    l = num_subbands
    if l % radios != 0:
        raise ValueError("num_subbands must be divisible by the radio count")
    if y.size % l != 0:
        raise ValueError("window length must be a multiple of the band count")
    n = y.size // l
    k = l // radios
    spectrum = np.fft.fft(y, norm="ortho")
    src_block = (np.arange(l) - l // 2 - 1) % l
    dst_block = (np.arange(k) - k // 2 - 1) % k
    outs = []
    for m in range(radios):
        sub = np.zeros(n * k, dtype=np.complex128)
        for j in range(k):
            src = src_block[m * k + j] * n
            dst = dst_block[j] * n
            sub[dst : dst + n] = spectrum[src : src + n]
        outs.append(np.fft.ifft(sub, norm="ortho"))
    return outs


def cfo_grid_span_hz(preamble_duration_s: float, max_loss_db: float = 1.0) -> float:
    """Grid spacing for a worst-case coherent-correlation straddle loss.

    An offset df sustained over the whole preamble scales the coherent
    sum by |sinc-like Dirichlet factor|; solving for the offset that
    costs `max_loss_db` and doubling it (worst case is mid-bin) gives
    the spacing.  For 1 dB this is about 0.5124/preamble_duration.
    """
    if preamble_duration_s <= 0.0:
        raise ValueError("preamble duration must be positive")
    if max_loss_db <= 0.0:
        raise ValueError("max_loss_db must be positive")
    target = 10.0 ** (-max_loss_db / 20.0)
    lo, hi = 0.0, math.pi  # half-offset phase across the preamble
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        value = math.sin(mid) / mid if mid > 0.0 else 1.0
        if value > target:
            lo = mid
        else:
            hi = mid
    u = 0.5 * (lo + hi)
    # u = pi * (df/2) * duration at the worst-case half-spacing offset
    return 2.0 * u / (math.pi * preamble_duration_s)


def cfo_grid(range_hz: float, preamble_duration_s: float, max_loss_db: float = 1.0) -> np.ndarray:
    """Uniform candidate offsets covering [-range, +range]."""
    if range_hz < 0.0:
        raise ValueError("range_hz must be >= 0")
    if range_hz == 0.0:
        return np.zeros(1)
    spacing = cfo_grid_span_hz(preamble_duration_s, max_loss_db)
    count = max(2, int(math.ceil(2.0 * range_hz / spacing)) + 1)
    return np.linspace(-range_hz, range_hz, count)


def cfo_grid_search(stream, cfg, grid, power_override=None) -> TestStatistic:
    """Run the detection pipeline per CFO candidate, keep the best peak.

    Candidates are independent; the max is taken with deterministic
    tie-breaking on the lowest grid index.  Thresholding the returned
    value must use j_grid = len(grid).
    """
    from .channelizer import peak_statistic  # deferred: breaks an import cycle
    from .channel import apply_cfo

    offsets = np.atleast_1d(np.asarray(grid, dtype=np.float64))
    if offsets.size == 0:
        raise ValueError("grid must be nonempty")
    best: TestStatistic | None = None
    for bin_index, df in enumerate(offsets):
        derotated = apply_cfo(stream, -float(df))
        value, window_index = peak_statistic(derotated, cfg, power_override)
        if best is None or value > best.value:
            best = TestStatistic(value=value, cfo_bin=bin_index, window_index=window_index)
    return best


def theory_curve(
    eta_db_values,
    preamble_length: int,
    num_subbands: int,
    p: int,
    p_fa: float,
    j_grid: int = 1,
) -> list[TheoryPoint]:
    """Chi-squared theory P_D across an SNR sweep (white-noise lambda)."""
    points = []
    for eta_db in eta_db_values:
        lam = 2.0 * preamble_length * num_subbands * 10.0 ** (eta_db / 10.0)
        points.append(
            TheoryPoint(
                eta_db=float(eta_db),
                noncentrality=lam,
                p_d=theory_pd(p_fa, p, lam, j_grid),
            )
        )
    return points
