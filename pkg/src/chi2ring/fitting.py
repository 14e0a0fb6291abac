"""
Parameter estimation from transmission and conversion spectra.

Rates are fitted as logarithms (keeping them positive) and the cooperativity
as the square of a free real number (keeping it non-negative while allowing
it to reach zero). Frequencies are handled as offsets from the grid center
and every rate is normalized by a scale guessed from the data, so the
optimizer always works on O(1) numbers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping, Sequence

import numpy as np

from . import lm
from .model import Branch, Direction, DriveField, SystemConfig, calibrate_g, rad_to_ghz
from .spectra import (
    FeatureError,
    FrequencyGrid,
    Spectrum,
    extract_noit_features,
    peak_fwhm,
    sweep_conversion,
    sweep_noit,
)

SCHEMA_VERSION = 1

# parameters reported in rad/s (also emitted in GHz in JSON)
_RATE_NAMES = {"kappa0", "kappa1", "kappa", "kappa_b0", "kappa_b1", "kappa_b", "kappa_c",
               "center", "two_photon_offset", "fwhm"}


@dataclass(frozen=True)
class NoiseSpec:
    """Multiplicative Gaussian noise: ``value * (1 + level * N(0, 1))``."""

    level: float = 0.0
    seed: int | np.random.SeedSequence | None = 0

    def __post_init__(self) -> None:
        if self.level < 0:
            raise ValueError(f"noise level must be non-negative, got {self.level}")


@dataclass(frozen=True)
class FitResult:
    model: str
    estimates: dict[str, float]
    stderr: dict[str, float]
    rss: float
    status: str
    iterations: int
    fixed: tuple[str, ...] = ()
    n_points: int = 0
    flags: tuple[str, ...] = ()
    message: str = ""
    cost_history: list[float] = field(default_factory=list, repr=False)

    @property
    def converged(self) -> bool:
        return self.status == lm.CONVERGED

    def __getitem__(self, name: str) -> float:
        return self.estimates[name]

    def to_dict(self) -> dict[str, Any]:
        ghz = {k: rad_to_ghz(v) for k, v in self.estimates.items() if k in _RATE_NAMES}
        ghz_err = {k: rad_to_ghz(v) for k, v in self.stderr.items() if k in _RATE_NAMES}
        return {
            "schema_version": SCHEMA_VERSION,
            "model": self.model,
            "status": self.status,
            "iterations": self.iterations,
            "rss": self.rss,
            "n_points": self.n_points,
            "estimates": dict(self.estimates),
            "stderr": dict(self.stderr),
            "estimates_over_2pi_ghz": ghz,
            "stderr_over_2pi_ghz": ghz_err,
            "fixed": list(self.fixed),
            "flags": list(self.flags),
            "message": self.message,
        }


@dataclass(frozen=True)
class SlopeFit:
    """Cooperativity vs drive power, through the origin and with a free intercept."""

    slope: float
    stderr: float
    slope_free: float
    intercept: float
    slope_free_stderr: float
    intercept_stderr: float
    n_points: int


# ---------------------------------------------------------------------------
# parameter transforms


@dataclass(frozen=True)
class _Param:
    name: str
    kind: str  # "log" | "square" | "linear"
    unit: float = 1.0

    def internal(self, value: float) -> float:
        if self.kind == "log":
            return math.log(value / self.unit)
        if self.kind == "square":
            return math.sqrt(max(value, 0.0))
        return value / self.unit

    def physical(self, theta: float) -> float:
        if self.kind == "log":
            return self.unit * math.exp(theta)
        if self.kind == "square":
            return theta * theta
        return self.unit * theta

    def derivative(self, theta: float) -> float:
        if self.kind == "log":
            return self.unit * math.exp(theta)
        if self.kind == "square":
            return 2.0 * theta
        return self.unit


def _run(model_name: str, model: Callable[[dict[str, float], np.ndarray], np.ndarray],
         x: np.ndarray, y: np.ndarray, params: Sequence[_Param], guess: Mapping[str, float],
         fixed: Mapping[str, float], center_origin: float, max_iter: int = 200) -> FitResult:
    free = [p for p in params if p.name not in fixed]
    values = {p.name: float(fixed.get(p.name, guess[p.name])) for p in params}

    def unpack(theta: np.ndarray) -> dict[str, float]:
        v = dict(values)
        for p, t in zip(free, theta):
            v[p.name] = p.physical(t)
        return v

    def residual(theta: np.ndarray) -> np.ndarray:
        try:
            return model(unpack(theta), x) - y
        except OverflowError:
            # wild trial step; an infinite cost makes the optimizer reject it
            return np.full(y.shape, np.inf)

    theta0 = np.array([p.internal(values[p.name]) for p in free])
    res = lm.levenberg_marquardt(residual, theta0, max_iter=max_iter)
    est = unpack(res.x)
    cov = lm.covariance(res)
    stderr = {p.name: 0.0 for p in params if p.name in fixed}
    for i, p in enumerate(free):
        var = cov[i, i] if cov.size else np.nan
        stderr[p.name] = float(abs(p.derivative(res.x[i])) * math.sqrt(var)) if var >= 0 else float("nan")
    if "center" in est:
        est["center"] += center_origin
    return FitResult(model_name, est, stderr, res.rss, res.status, res.iterations,
                     tuple(p.name for p in params if p.name in fixed), int(y.size),
                     cost_history=res.cost_history)


def _prepare(spectrum: Spectrum, fixed: Mapping[str, float] | None):
    x = spectrum.grid.offsets
    y = spectrum.values
    fixed = dict(fixed or {})
    if "center" in fixed:
        fixed["center"] = fixed["center"] - spectrum.grid.center
    return x, y, fixed


def _edge_level(y: np.ndarray) -> float:
    n = max(1, y.size // 50)
    return float(max(np.mean(y[:n]), np.mean(y[-n:])))


def _dip_guess(x: np.ndarray, y: np.ndarray, scale: float):
    """Center, half-width and depth of a transmission dip."""
    depth = 1.0 - float(np.min(y)) / scale
    try:
        width = peak_fwhm(x, -y)
    except FeatureError:
        width = 0.2 * (x[-1] - x[0])
    weight = np.clip(scale - y, 0.0, None)
    center = float(np.sum(weight * x) / np.sum(weight)) if np.sum(weight) > 0 else float(x[np.argmin(y)])
    return center, 0.5 * width, depth


def _undercoupled_ratio(depth: float) -> float:
    """kappa1/kappa from on-resonance depth ``1 - (1 - 2r)^2``, taking r <= 1/2."""
    depth = min(max(depth, 1e-6), 1.0)
    return 0.5 * (1.0 - math.sqrt(1.0 - depth))


def _flat_result(model: str, names: Sequence[str], values: Mapping[str, float],
                 n: int, message: str) -> FitResult:
    est = {k: float(values.get(k, float("nan"))) for k in names}
    return FitResult(model, est, {k: float("nan") for k in names}, 0.0, lm.SINGULAR, 0,
                     n_points=n, flags=("flat",), message=message)


# ---------------------------------------------------------------------------
# Lorentzian


def lorentzian_model(p: Mapping[str, float], x: np.ndarray) -> np.ndarray:
    kappa = p["kappa0"] + p["kappa1"]
    delta = p["center"] - x
    t = 1.0 - 2.0 * p["kappa1"] / (1j * delta + kappa)
    return p["scale"] * np.abs(t) ** 2 + p["baseline"]


def fit_lorentzian(spectrum: Spectrum, guess: Mapping[str, float] | None = None,
                   fixed: Mapping[str, float] | None = None) -> FitResult:
    """
    Fit ``scale * |1 - 2 kappa1 / (i delta + kappa)|^2 + baseline``.

    The data cannot distinguish under- from over-coupling; the automatic
    guess starts on the under-coupled side (``kappa1 < kappa0``). The
    baseline is held at 0 unless given a starting value in ``guess``.
    """
    x, y, fixed = _prepare(spectrum, fixed)
    if y.size < 8:
        raise ValueError("Lorentzian fit needs at least 8 points")
    scale = _edge_level(y)
    center, hw, depth = _dip_guess(x, y, scale)
    names = ("kappa0", "kappa1", "center", "scale", "baseline")
    if depth <= 1e-9 or hw <= 0:
        return _flat_result("lorentzian", names + ("kappa",), {"scale": scale, "baseline": 0.0},
                            y.size, "no dip found: spectrum is flat")
    r = _undercoupled_ratio(depth)
    auto = {"kappa0": (1 - r) * hw, "kappa1": r * hw, "center": center,
            "scale": scale, "baseline": 0.0}
    if guess:
        auto.update(guess)
        if "center" in guess:
            auto["center"] = guess["center"] - spectrum.grid.center
    if not guess or "baseline" not in guess:
        fixed.setdefault("baseline", 0.0)
    unit = hw
    params = [_Param("kappa0", "log", unit), _Param("kappa1", "log", unit),
              _Param("center", "linear", unit), _Param("scale", "log"),
              _Param("baseline", "linear")]
    result = _run("lorentzian", lorentzian_model, x, y, params, auto, fixed, spectrum.grid.center)
    result.estimates["kappa"] = result.estimates["kappa0"] + result.estimates["kappa1"]
    e = result.stderr
    result.stderr["kappa"] = math.hypot(e["kappa0"], e["kappa1"])
    return result


def linear_loss_params(fit: FitResult) -> dict[str, float]:
    """Map a Lorentzian fit of mode b onto the parameter names used by ``fit_noit``."""
    return {"kappa_b0": fit["kappa0"], "kappa_b1": fit["kappa1"]}


# ---------------------------------------------------------------------------
# transparency (NOIT)


def noit_model(p: Mapping[str, float], x: np.ndarray) -> np.ndarray:
    kb = p["kappa_b0"] + p["kappa_b1"]
    kc = p["kappa_c"]
    delta_b = p["center"] - x
    delta_c = delta_b + p["two_photon_offset"]
    g2 = p["C"] * kb * kc
    t = 1.0 + 2.0 * p["kappa_b1"] / (-1j * delta_b - kb + g2 / (-1j * delta_c - kc))
    return p["scale"] * np.abs(t) ** 2 + p["baseline"]


_NOIT_NAMES = ("kappa_b0", "kappa_b1", "kappa_c", "C", "center", "two_photon_offset",
               "scale", "baseline")


def _noit_guess(x: np.ndarray, y: np.ndarray, fixed: Mapping[str, float]) -> dict[str, float]:
    scale = fixed.get("scale", _edge_level(y))
    center, hw, depth = _dip_guess(x, y, scale)
    center = fixed.get("center", center)
    if "kappa_b0" in fixed and "kappa_b1" in fixed:
        kb1 = fixed["kappa_b1"]
        kb = fixed["kappa_b0"] + kb1
    else:
        r = _undercoupled_ratio(depth)
        kb = hw
        kb1 = fixed.get("kappa_b1", r * kb)
        kb = max(kb, kb1 * 1.01)
    ratio = 2.0 * kb1 / kb
    near = np.abs(x - center) <= 0.02 * kb + 1.5 * abs(x[1] - x[0])
    t_center = float(np.mean(y[near])) / scale
    c0 = ratio / max(1.0 - math.sqrt(max(t_center, 0.0)), 1e-6) - 1.0 if ratio < 1 else 0.1
    c0 = min(max(c0, 1e-3), 10.0)
    kc = kb / 4.0
    feats = extract_noit_features(Spectrum(FrequencyGrid.from_omega(x), y, Branch.NOIT))
    if not feats.flat and math.isfinite(feats.peak_width) and feats.peak_width > 0:
        kc = min(max(0.5 * feats.peak_width / (1.0 + c0), kb / 50.0), kb)
    return {"kappa_b0": kb - kb1, "kappa_b1": kb1, "kappa_c": kc, "C": c0, "center": center,
            "two_photon_offset": 0.0, "scale": scale, "baseline": 0.0}


def fit_noit(spectrum: Spectrum, fixed: Mapping[str, float] | None = None,
             guess: Mapping[str, float] | None = None) -> FitResult:
    """
    Fit the transparency transmission of mode b.

    Free parameters are ``kappa_b0, kappa_b1, kappa_c, C, center,
    two_photon_offset, scale`` (``baseline`` is held at 0 by default); any
    subset may be frozen through ``fixed``, e.g. the linear losses taken from
    an undriven Lorentzian fit (see ``linear_loss_params``). ``center`` is the
    absolute mode-b resonance and ``two_photon_offset`` is ``delta_c - delta_b``.
    """
    x, y, fixed = _prepare(spectrum, fixed)
    if y.size < 8:
        raise ValueError("NOIT fit needs at least 8 points")
    fixed.setdefault("baseline", 0.0)
    auto = _noit_guess(x, y, fixed)
    if guess:
        auto.update(guess)
        if "center" in guess:
            auto["center"] = guess["center"] - spectrum.grid.center
    unit = auto["kappa_b0"] + auto["kappa_b1"]
    params = [_Param("kappa_b0", "log", unit), _Param("kappa_b1", "log", unit),
              _Param("kappa_c", "log", unit), _Param("C", "square"),
              _Param("center", "linear", unit), _Param("two_photon_offset", "linear", unit),
              _Param("scale", "log"), _Param("baseline", "linear")]
    result = _run("noit", noit_model, x, y, params, auto, fixed, spectrum.grid.center)
    if not guess and "kappa_c" not in fixed:
        # a weak window hides kappa_c; retry from a few widths and keep the best
        for frac in (0.125, 0.25, 0.5):
            trial = _run("noit", noit_model, x, y, params, {**auto, "kappa_c": frac * unit},
                         fixed, spectrum.grid.center)
            if trial.rss < result.rss:
                result = trial
    est, err = result.estimates, result.stderr
    est["kappa_b"] = est["kappa_b0"] + est["kappa_b1"]
    err["kappa_b"] = math.hypot(err["kappa_b0"], err["kappa_b1"])
    est["G_mag"] = math.sqrt(est["C"] * est["kappa_b"] * est["kappa_c"])
    return result


# ---------------------------------------------------------------------------
# frequency conversion


def conversion_model(p: Mapping[str, float], x: np.ndarray) -> np.ndarray:
    delta_c = p["center"] - x
    delta_b = delta_c + p["two_photon_offset"]
    lorentz = (1.0 + 1j * delta_b / p["kappa_b"]) * (1.0 + 1j * delta_c / p["kappa_c"]) + p["C"]
    return p["coupling_product"] * 4.0 * p["C"] / np.abs(lorentz) ** 2 + p["baseline"]


def reduced_conversion_model(p: Mapping[str, float], x: np.ndarray) -> np.ndarray:
    """Peak-normalized conversion lineshape ``A / |1 + i alpha d - beta d^2|^2``."""
    d = p["center"] - x
    return p["peak_efficiency"] / np.abs(1.0 + 1j * p["alpha"] * d - p["beta"] * d * d) ** 2


def reduced_fwhm(alpha: float, beta: float) -> float:
    """Full width where ``|1 + i alpha d - beta d^2|^2 = 2``."""
    b2 = beta * beta
    lin = alpha * alpha - 2.0 * beta
    root = math.sqrt(lin * lin + 4.0 * b2)
    # positive root of b2 u^2 + lin u - 1 = 0, u = d^2, in cancellation-free form
    u = 2.0 / (lin + root) if lin >= 0 else (root - lin) / (2.0 * b2)
    return 2.0 * math.sqrt(u)


def _small_root_cooperativity(q: float) -> float:
    """Smaller solution C <= 1 of ``4C/(1+C)^2 = q``."""
    q = min(max(q, 1e-12), 1.0)
    return (2.0 - q - 2.0 * math.sqrt(1.0 - q)) / q


def fit_conversion(spectrum: Spectrum, fixed: Mapping[str, float] | None = None,
                   guess: Mapping[str, float] | None = None) -> FitResult:
    """
    Fit an external-conversion spectrum.

    A single conversion spectrum fixes only the peak efficiency and two shape
    numbers, so ``C`` and the coupling-ratio product are separable only when
    at least one of ``coupling_product``, ``kappa_b`` or ``kappa_c`` is frozen.
    Without any of them the fit falls back to the reduced lineshape
    ``A / |1 + i alpha d - beta d^2|^2`` (with ``alpha = (1/kappa_b + 1/kappa_c)/(1+C)``,
    ``beta = 1/(kappa_b kappa_c (1+C))``), reports the peak efficiency and
    FWHM, and flags the result ``degenerate``.
    """
    x, y, fixed = _prepare(spectrum, fixed)
    if y.size < 8:
        raise ValueError("conversion fit needs at least 8 points")
    peak = float(np.max(y))
    if not peak > 1e-15:
        est = {"C": 0.0, "kappa_b": fixed.get("kappa_b", float("nan")),
               "kappa_c": fixed.get("kappa_c", float("nan")),
               "coupling_product": fixed.get("coupling_product", float("nan")),
               "center": float("nan"), "two_photon_offset": float("nan"),
               "baseline": 0.0, "peak_efficiency": 0.0}
        return FitResult("conversion", est, {k: float("nan") for k in est}, float(y @ y),
                         lm.CONVERGED, 0, tuple(fixed), int(y.size), ("flat",),
                         "no converted signal: C = 0")
    center = float(x[np.argmax(y)])
    try:
        width = peak_fwhm(x, y)
    except FeatureError:
        width = 0.2 * (x[-1] - x[0])

    if not {"coupling_product", "kappa_b", "kappa_c"} & fixed.keys():
        return _fit_reduced_conversion(spectrum, x, y, peak, center, width, guess)

    fixed.setdefault("baseline", 0.0)
    kb = fixed.get("kappa_b")
    kc = fixed.get("kappa_c")
    if kb is not None and kc is not None:
        c0 = 0.5 * width * (1.0 / kb + 1.0 / kc) - 1.0
        c0 = min(max(c0, 1e-3), 10.0)
    elif "coupling_product" in fixed:
        c0 = _small_root_cooperativity(peak / fixed["coupling_product"])
    else:
        c0 = 0.5
    if kc is None and kb is None:
        kc = 0.5 * width / (1.0 + c0)
        kb = 4.0 * kc
    elif kc is None:
        kc = max(1.0 / max(2.0 * (1.0 + c0) / width - 1.0 / kb, 1e-30), 1e-3 * kb)
    elif kb is None:
        kb = max(1.0 / max(2.0 * (1.0 + c0) / width - 1.0 / kc, 1e-30), 1e-3 * kc)
    product = fixed.get("coupling_product", min(peak * (1.0 + c0) ** 2 / (4.0 * c0), 1.0))
    auto = {"kappa_b": kb, "kappa_c": kc, "C": c0, "coupling_product": product,
            "center": center, "two_photon_offset": 0.0, "baseline": 0.0}
    if guess:
        auto.update(guess)
        if "center" in guess:
            auto["center"] = guess["center"] - spectrum.grid.center
    unit = auto["kappa_c"]
    params = [_Param("kappa_b", "log", unit), _Param("kappa_c", "log", unit),
              _Param("C", "square"), _Param("coupling_product", "log"),
              _Param("center", "linear", unit), _Param("two_photon_offset", "linear", unit),
              _Param("baseline", "linear")]
    result = _run("conversion", conversion_model, x, y, params, auto, fixed, spectrum.grid.center)
    est = result.estimates
    est["peak_efficiency"] = est["coupling_product"] * 4.0 * est["C"] / (1.0 + est["C"]) ** 2
    return result


def _fit_reduced_conversion(spectrum: Spectrum, x, y, peak, center, width,
                            guess: Mapping[str, float] | None) -> FitResult:
    unit = 0.5 * width
    params = [_Param("peak_efficiency", "log"), _Param("alpha", "log", 1.0 / unit),
              _Param("beta", "log", 1.0 / unit**2), _Param("center", "linear", unit)]
    result = None
    # the alpha/beta valley is shallow: start from a few beta/alpha^2 ratios, keep the best
    for ratio in (0.25, 0.05, 1.0):
        auto = {"peak_efficiency": peak, "alpha": 1.0 / unit, "beta": ratio / unit**2,
                "center": center}
        if guess:
            auto.update(guess)
            if "center" in guess:
                auto["center"] = guess["center"] - spectrum.grid.center
        trial = _run("conversion-reduced", reduced_conversion_model, x, y, params, auto, {},
                     spectrum.grid.center)
        if result is None or trial.rss < result.rss:
            result = trial
        if guess:
            break
    est = result.estimates
    est["fwhm"] = reduced_fwhm(est["alpha"], est["beta"])
    return FitResult(result.model, est, result.stderr, result.rss, result.status,
                     result.iterations, result.fixed, result.n_points, ("degenerate",),
                     "C and the coupling-ratio product are not separately identifiable from one "
                     "conversion spectrum; freeze coupling_product, kappa_b or kappa_c",
                     result.cost_history)


# ---------------------------------------------------------------------------
# cooperativity vs power


def fit_cooperativity_slope(points: Sequence[tuple[float, float]]) -> SlopeFit:
    """Ordinary least squares of ``C`` against drive power ``P`` [W]."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    p, c = pts[:, 0], pts[:, 1]
    if p.size < 2 or np.unique(p).size < 2:
        raise ValueError("need at least two distinct drive powers")
    n = p.size
    sxx = float(p @ p)
    slope = float(p @ c) / sxx
    res0 = c - slope * p
    stderr = math.sqrt(float(res0 @ res0) / (n - 1) / sxx)
    pm, cm = p.mean(), c.mean()
    sxx_c = float((p - pm) @ (p - pm))
    slope_free = float((p - pm) @ (c - cm)) / sxx_c
    intercept = cm - slope_free * pm
    if n > 2:
        res1 = c - intercept - slope_free * p
        s2 = float(res1 @ res1) / (n - 2)
        slope_free_stderr = math.sqrt(s2 / sxx_c)
        intercept_stderr = math.sqrt(s2 * (1.0 / n + pm * pm / sxx_c))
    else:
        slope_free_stderr = intercept_stderr = float("nan")
    return SlopeFit(slope, stderr, slope_free, float(intercept), slope_free_stderr,
                    intercept_stderr, n)


# ---------------------------------------------------------------------------
# synthetic data


def add_noise(spectrum: Spectrum, noise: NoiseSpec) -> Spectrum:
    if noise.level == 0:
        return spectrum
    rng = np.random.default_rng(noise.seed)
    values = spectrum.values * (1.0 + noise.level * rng.standard_normal(spectrum.values.size))
    meta = dict(spectrum.metadata)
    meta["noise_level"] = noise.level
    return spectrum.replace_values(values, metadata=meta)


def synthesize_spectrum(system: SystemConfig, drive: DriveField, grid: FrequencyGrid,
                        branch: Branch | str = Branch.NOIT, noise: NoiseSpec = NoiseSpec(),
                        probe_direction: Direction | str | None = None) -> Spectrum:
    """Forward-model spectrum with seeded multiplicative Gaussian noise."""
    branch = Branch.parse(branch)
    if branch is Branch.NOIT:
        direction = drive.direction if probe_direction is None else probe_direction
        clean = sweep_noit(system, drive, grid, direction)
    else:
        clean = sweep_conversion(system, drive, grid, probe_direction)
    return add_noise(clean, noise)


@dataclass(frozen=True)
class PipelineResult:
    slope: SlopeFit
    powers: np.ndarray
    cooperativities: np.ndarray
    fits: list[FitResult] = field(repr=False)


def cooperativity_pipeline(system: SystemConfig, unit_power_cooperativity: float,
                           powers: Sequence[float], grid: FrequencyGrid, noise_level: float,
                           seed: int, drive: DriveField | None = None) -> PipelineResult:
    """
    Calibrate ``g``, simulate noisy transparency spectra at each power, fit
    them and regress ``C`` against power.

    The linear losses of mode b are measured first from an undriven spectrum
    and frozen in the driven fits. Each spectrum draws from its own child
    stream of ``seed``.
    """
    if drive is None:
        drive = DriveField.on_resonance(system, 1e-3)
    ref = drive if drive.power > 0 else drive.with_power(1e-3)
    system = system.with_g(calibrate_g(system, unit_power_cooperativity, ref))
    streams = np.random.SeedSequence(seed).spawn(len(powers) + 1)
    cold = synthesize_spectrum(system, drive.with_power(0.0), grid, Branch.NOIT,
                               NoiseSpec(noise_level, streams[0]))
    linear = linear_loss_params(fit_lorentzian(cold))
    fits = []
    for p, stream in zip(powers, streams[1:]):
        spec = synthesize_spectrum(system, drive.with_power(float(p)), grid, Branch.NOIT,
                                   NoiseSpec(noise_level, stream))
        fits.append(fit_noit(spec, fixed=linear))
    cs = np.array([f["C"] for f in fits])
    ps = np.asarray(powers, dtype=float)
    return PipelineResult(fit_cooperativity_slope(list(zip(ps, cs))), ps, cs, fits)
