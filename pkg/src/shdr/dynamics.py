"""Synthetic skew-product systems: a driver forcing an ensemble of responses.

Every replica draws its parameters and noise from its own RNG stream,
derived from the master seed and the replica index, so results do not depend
on generation order.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional

import numpy as np
from scipy.ndimage import gaussian_filter1d

from . import _kernels
from .ensemble import DriverSignal, ResponseEnsemble
from .errors import ArgumentRange, ConstantSeries, DivergedTrajectory

LOGISTIC_R = {"period2": 3.2, "period4": 3.5, "period8": 3.55, "chaotic": 3.9}
LOGISTIC_PERIOD = {"period2": 2, "period4": 4, "period8": 8, "chaotic": None}

LORENZ = (10.0, 28.0, 8.0 / 3.0)
ROSSLER = (0.2, 0.2, 5.7)
COUPLING_SCALES = ("speed", "rate", "amplitude")

# stream tags for SeedSequence spawning
_DRIVER, _REPLICA, _NOISE, _FILTER = 0, 1, 2, 3


def rng_for(seed: int, *key: int) -> np.random.Generator:
    """Independent generator for ``(seed, *key)``; order of creation does not matter."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, key)]))


@dataclass(frozen=True)
class SkewSystemConfig:
    """Everything needed to regenerate a synthetic dataset bit-for-bit.

    ``snr`` is var(clean)/var(noise) for observation noise (``inf`` for none).
    ``dt`` is the integration step and ``stride`` the number of steps per
    stored sample (continuous systems only).
    """

    driver: str = "logistic"
    response: str = "logistic"
    n_responses: int = 10
    coupling: float = 0.5
    snr: float = math.inf
    t_points: int = 3000
    dt: float = 0.01
    stride: int = 10
    seed: int = 0
    measurement_filter: str = "identity"
    filter_width: tuple = (2.0, 20.0)
    jitter: float = 0.2
    response_r: tuple = (3.7, 4.0)
    observe: str = "x"
    transient: int = 1000
    driver_params: Optional[tuple] = None
    response_params: Optional[tuple] = None
    gyre: tuple = (0.1, 0.25, 2 * math.pi / 10)
    coupling_scale: str = "speed"

    def __post_init__(self):
        if self.n_responses < 1:
            raise ArgumentRange("n_responses must be >= 1")
        if self.coupling < 0:
            raise ArgumentRange("coupling must be >= 0")
        if not self.snr > 0:
            raise ArgumentRange("snr must be positive (inf for noiseless)")
        if not self.dt > 0 or self.stride < 1:
            raise ArgumentRange("dt must be positive and stride >= 1")
        if self.coupling_scale not in COUPLING_SCALES:
            raise ArgumentRange(f"coupling_scale must be one of {COUPLING_SCALES}")
        if self.measurement_filter not in ("identity", "random_gaussian"):
            raise ArgumentRange(f"unknown measurement filter {self.measurement_filter!r}")

    def replace(self, **changes) -> "SkewSystemConfig":
        return dataclasses.replace(self, **changes)

    def as_dict(self) -> dict:
        out = dataclasses.asdict(self)
        for key, value in out.items():
            if isinstance(value, float) and math.isinf(value):
                out[key] = "inf"
            elif isinstance(value, tuple):
                out[key] = list(value)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "SkewSystemConfig":
        names = {f.name: f for f in dataclasses.fields(cls)}
        kwargs = {}
        for key, value in data.items():
            if key not in names:
                raise ArgumentRange(f"unknown config key {key!r}")
            default = names[key].default
            if isinstance(value, str) and value.lower() in ("inf", "infinity"):
                value = math.inf
            elif isinstance(default, tuple) or (key.endswith("_params") and value is not None):
                value = tuple(float(v) for v in (value.split(",") if isinstance(value, str) else value))
            elif isinstance(default, bool):
                value = str(value).lower() in ("1", "true", "yes")
            elif isinstance(default, int) and not isinstance(default, bool):
                value = int(value)
            elif isinstance(default, float):
                value = float(value)
            kwargs[key] = value
        return cls(**kwargs)


@dataclass(frozen=True)
class SkewDataset:
    driver_truth: DriverSignal
    responses: ResponseEnsemble
    config: dict
    driver_values: np.ndarray = field(default=None, compare=False)
    driver_state: np.ndarray = field(default=None, compare=False)
    clean_responses: np.ndarray = field(default=None, compare=False)

    def coarse_truth(self, period: int) -> np.ndarray:
        """Phase labels merged onto a lower period (phase mod period)."""
        if self.driver_truth.mode != "discrete":
            raise ValueError("coarse-graining needs a periodic (discrete) driver")
        return np.asarray(self.driver_truth.values) % period


# ---------------------------------------------------------------------------
# integration


def rk4_step(f, t, y, dt):
    k1 = f(t, y)
    k2 = f(t + dt / 2, y + dt / 2 * k1)
    k3 = f(t + dt / 2, y + dt / 2 * k2)
    k4 = f(t + dt, y + dt * k3)
    return y + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)


def integrate(f, y0, dt, n_samples, stride=1, t0=0.0, transient=0):
    """Fixed-step RK4; returns ``n_samples`` states spaced ``stride`` steps apart.

    ``transient`` steps are integrated and discarded first. The state may
    have any shape, so replicas can be stacked along a leading axis.
    """
    y = np.array(y0, dtype=float)
    t = t0
    for _ in range(transient):
        y = rk4_step(f, t, y, dt)
        t += dt
    out = np.empty((n_samples,) + y.shape)
    for i in range(n_samples):
        out[i] = y
        for _ in range(stride):
            y = rk4_step(f, t, y, dt)
            t += dt
        if not np.all(np.isfinite(y)):
            raise DivergedTrajectory(f"non-finite state at sample {i}")
    return out


def rossler(a=0.2, b=0.2, c=5.7):
    def f(t, s):
        x, y, z = s[..., 0], s[..., 1], s[..., 2]
        return np.stack([-y - z, x + a * y, b + z * (x - c)], axis=-1)
    return f


def lorenz(sigma=10.0, rho=28.0, beta=8.0 / 3.0):
    def f(t, s):
        x, y, z = s[..., 0], s[..., 1], s[..., 2]
        return np.stack([sigma * (y - x), x * (rho - z) - y, x * y - beta * z], axis=-1)
    return f


def largest_lyapunov(f, y0, dt=0.01, n_steps=200_000, renorm=10, d0=1e-8, transient=10_000):
    """Largest Lyapunov exponent by the two-trajectory (Benettin) method."""
    y = integrate(f, y0, dt, 1, transient=transient)[0]
    direction = np.ones_like(y) / np.sqrt(y.size)
    z = y + d0 * direction
    total = 0.0
    t = 0.0
    n_renorm = n_steps // renorm
    for _ in range(n_renorm):
        for _ in range(renorm):
            y = rk4_step(f, t, y, dt)
            z = rk4_step(f, t, z, dt)
            t += dt
        sep = np.linalg.norm(z - y)
        total += math.log(sep / d0)
        z = y + (z - y) * (d0 / sep)
    return total / (n_renorm * renorm * dt)


def dominant_period(x, sample_dt=1.0) -> float:
    """Period of the largest non-DC peak of the power spectrum."""
    x = np.asarray(x, dtype=float)
    x = x - x.mean()
    power = np.abs(np.fft.rfft(x * np.hanning(len(x)))) ** 2
    freqs = np.fft.rfftfreq(len(x), d=sample_dt)
    k = 1 + int(np.argmax(power[1:]))
    return 1.0 / freqs[k]


def rms(x) -> float:
    x = np.asarray(x, dtype=float)
    return float(np.sqrt(np.mean(x ** 2)))


def amplitude_coupling_scale(driver_series, response_series) -> float:
    """Ratio rms(response) / rms(driver)."""
    driver_series = np.asarray(driver_series, dtype=float)
    response_series = np.asarray(response_series, dtype=float)
    if np.ptp(driver_series) == 0 or np.ptp(response_series) == 0:
        raise ConstantSeries("amplitude scaling needs nonconstant series")
    return rms(response_series) / rms(driver_series)


def _skew_integrate(state0, ross, sig, rho, beta, c_eff, kappa, dt, n_samples, stride, n_transient):
    out, ok = _kernels.rossler_lorenz_rk4(
        np.asarray(state0, dtype=float), *map(float, ross),
        np.atleast_1d(np.asarray(sig, dtype=float)), np.atleast_1d(np.asarray(rho, dtype=float)),
        np.atleast_1d(np.asarray(beta, dtype=float)), float(c_eff), float(kappa), float(dt),
        int(n_samples), int(stride), int(n_transient),
    )
    if not ok:
        raise DivergedTrajectory("non-finite state in Rössler-Lorenz integration")
    return out


def rossler_trajectory(n_samples: int, sample_dt: float = 0.05, dt: float = 0.01,
                       transient: float = 200.0, params=ROSSLER, state0=(1.0, 1.0, 0.0)):
    """Compiled RK4 Rössler run sampled every ``sample_dt`` (a multiple of ``dt``)."""
    stride = int(round(sample_dt / dt))
    if stride < 1 or not math.isclose(stride * dt, sample_dt, rel_tol=1e-9):
        raise ArgumentRange("sample_dt must be a positive multiple of dt")
    state = np.asarray(state0, dtype=float).reshape(1, 3)
    empty = np.empty(0)
    out = _skew_integrate(state, params, empty, empty, empty, 0.0, 1.0, dt,
                          n_samples, stride, int(round(transient / dt)))
    return out[:, 0]


@lru_cache(maxsize=None)
def _reference_scales(dt: float, rule: str = "speed"):
    """Rössler/Lorenz timescale ratio and coupling scale from decoupled canonical runs.

    The coupling scale is rms(response quantity) / rms(Rössler x), where the
    response quantity is the Lorenz speed |f| (``speed``), the Lorenz x
    velocity (``rate``), or Lorenz x itself (``amplitude``), all in Lorenz time.
    """
    if rule not in COUPLING_SCALES:
        raise ArgumentRange(f"coupling_scale must be one of {COUPLING_SCALES}")
    n = 2 ** 14
    state = np.array([[1.0, 1.0, 0.0], [1.0, 1.0, 20.0]])
    ross = _skew_integrate(state, ROSSLER, *LORENZ, 0.0, 1.0, dt, n, 10, 20_000)[:, 0]
    lor = _skew_integrate(state, ROSSLER, *LORENZ, 0.0, 1.0, dt / 10, n, 10, 20_000)[:, 1]
    # Lorenz z has a clean oscillation peak; x switches lobes and smears the spectrum
    period_r = dominant_period(ross[:, 0], 10 * dt)
    period_l = dominant_period(lor[:, 2], dt)
    velocity = lorenz()(0.0, lor)
    response = {
        "speed": np.linalg.norm(velocity, axis=1),
        "rate": velocity[:, 0],
        "amplitude": lor[:, 0],
    }[rule]
    return period_r / period_l, amplitude_coupling_scale(ross[:, 0], response)


def lorenz_time_scale(dt: float = 0.01) -> float:
    """Factor by which Lorenz time is slowed to match Rössler's dominant period."""
    return _reference_scales(dt)[0]


# ---------------------------------------------------------------------------
# observation


def _observe(clean, cfg: SkewSystemConfig):
    """Apply measurement filters and observation noise to a (T, N) clean array."""
    out = np.array(clean, dtype=float)
    if cfg.measurement_filter == "random_gaussian":
        lo, hi = cfg.filter_width
        for k in range(out.shape[1]):
            width = rng_for(cfg.seed, _FILTER, k).uniform(lo, hi)
            out[:, k] = gaussian_filter1d(out[:, k], width, mode="reflect")
    if math.isfinite(cfg.snr):
        for k in range(out.shape[1]):
            sd = out[:, k].std() / math.sqrt(cfg.snr)
            out[:, k] = out[:, k] + rng_for(cfg.seed, _NOISE, k).normal(0.0, sd, out.shape[0])
    return out


# ---------------------------------------------------------------------------
# generators


def logistic_orbit(r, z0, n, transient=0):
    z = float(z0)
    for _ in range(transient):
        z = r * z * (1 - z)
    out = np.empty(n)
    for i in range(n):
        out[i] = z
        z = r * z * (1 - z)
    return out


def gen_logistic_skew(regime: str, cfg: SkewSystemConfig) -> SkewDataset:
    """Logistic-map driver forcing logistic-map responses.

    ``y_{n+1} = (1 - c) r_k y_n (1 - y_n) + c z_n``. Ground truth is the
    phase within the period for periodic regimes and ``z_n`` otherwise.
    """
    if regime not in LOGISTIC_R:
        raise ArgumentRange(f"unknown regime {regime!r}; choose from {sorted(LOGISTIC_R)}")
    if cfg.t_points < 100:
        raise ArgumentRange("t_points must be >= 100")
    r = LOGISTIC_R[regime]
    total = cfg.transient + cfg.t_points
    z0 = rng_for(cfg.seed, _DRIVER).uniform(0.2, 0.8)
    z = logistic_orbit(r, z0, total)
    c = cfg.coupling
    y = np.empty((total, cfg.n_responses))
    rs = np.empty(cfg.n_responses)
    for k in range(cfg.n_responses):
        g = rng_for(cfg.seed, _REPLICA, k)
        rs[k] = g.uniform(*cfg.response_r)
        y[0, k] = g.uniform(0.2, 0.8)
    for n in range(total - 1):
        y[n + 1] = (1 - c) * rs * y[n] * (1 - y[n]) + c * z[n]
        if np.abs(y[n + 1]).max() > 10:
            raise DivergedTrajectory(f"response left the unit interval at step {n + 1}")
    z, y = z[cfg.transient:], y[cfg.transient:]
    period = LOGISTIC_PERIOD[regime]
    if period is None:
        truth = DriverSignal(z, "continuous", 0)
    else:
        truth = DriverSignal(np.arange(cfg.t_points) % period, "discrete", 0)
    meta = cfg.as_dict() | {"regime": regime, "driver_r": r, "response_r_values": rs.tolist()}
    observed = _observe(y, cfg)
    return SkewDataset(truth, ResponseEnsemble(observed), meta, z, z[:, None], y)


def gen_rossler_lorenz(cfg: SkewSystemConfig) -> SkewDataset:
    """Rössler driver forcing jittered Lorenz replicas through their x equation.

    Lorenz time is slowed by the dominant-period ratio so both systems
    oscillate on similar timescales. The coupling term ``c * A_rel * z_x``
    is added to the Lorenz x equation in Lorenz time, with ``A_rel`` the rms
    ratio of the decoupled systems.
    """
    a, b, cc = cfg.driver_params or ROSSLER
    base = np.array(cfg.response_params or LORENZ)
    kappa, a_rel = _reference_scales(cfg.dt, cfg.coupling_scale)
    n_rep = cfg.n_responses
    g = rng_for(cfg.seed, _DRIVER)
    s0 = np.array([g.uniform(-5, 5), g.uniform(-5, 5), g.uniform(0, 1)])
    params = np.empty((n_rep, 3))
    y0 = np.empty((n_rep, 3))
    observe = np.empty(n_rep, dtype=np.int64)
    for k in range(n_rep):
        gk = rng_for(cfg.seed, _REPLICA, k)
        params[k] = base * (1 + gk.uniform(-cfg.jitter, cfg.jitter, 3))
        y0[k] = [gk.uniform(-10, 10), gk.uniform(-10, 10), gk.uniform(10, 30)]
        observe[k] = gk.integers(0, 3) if cfg.observe == "random" else "xyz".index(cfg.observe)
    state0 = np.vstack([s0, y0])
    n_transient = int(round(200.0 / cfg.dt))
    traj = _skew_integrate(state0, (a, b, cc), params[:, 0], params[:, 1], params[:, 2],
                           cfg.coupling * a_rel, kappa, cfg.dt, cfg.t_points, cfg.stride,
                           n_transient)
    driver = traj[:, 0, :]
    clean = traj[:, 1:, :][np.arange(cfg.t_points)[:, None], np.arange(n_rep)[None, :], observe[None, :]]
    observed = _observe(clean, cfg)
    meta = cfg.as_dict() | {
        "lorenz_time_scale": kappa,
        "amplitude_scale": a_rel,
        "response_param_values": params.tolist(),
        "observed_coordinate": observe.tolist(),
        "sample_dt": cfg.dt * cfg.stride,
    }
    truth = DriverSignal(driver[:, 0], "continuous", 0)
    ens = ResponseEnsemble(observed, sample_period=cfg.dt * cfg.stride)
    return SkewDataset(truth, ens, meta, driver[:, 0], driver, clean)


def double_gyre_velocity(A=0.1, eps=0.25, omega=2 * math.pi / 10):
    def f(t, s):
        x, y = s[..., 0], s[..., 1]
        a = eps * math.sin(omega * t)
        b = 1 - 2 * a
        fx = a * x ** 2 + b * x
        dfx = 2 * a * x + b
        u = -math.pi * A * np.sin(math.pi * fx) * np.cos(math.pi * y)
        v = math.pi * A * np.cos(math.pi * fx) * np.sin(math.pi * y) * dfx
        return np.stack([u, v], axis=-1)
    return f


def _reflect(x, lo, hi):
    span = hi - lo
    x = np.mod(x - lo, 2 * span)
    return lo + np.where(x > span, 2 * span - x, x)


def gen_double_gyre(cfg: SkewSystemConfig) -> SkewDataset:
    """Diffusing tracers in the time-periodic double gyre on [0,2]x[0,1].

    Tracers take an RK4 advection step plus a Brownian kick with
    diffusivity ``A / snr`` and reflect at the walls. Responses are the
    distances of each tracer from the domain centre; the driver is
    ``sin(omega t)``.
    """
    A, eps, omega = cfg.gyre
    vel = double_gyre_velocity(A, eps, omega)
    diffusivity = 0.0 if math.isinf(cfg.snr) else A / cfg.snr
    n = cfg.n_responses
    pos = np.empty((n, 2))
    kicks = []
    for k in range(n):
        gk = rng_for(cfg.seed, _REPLICA, k)
        pos[k] = [gk.uniform(0, 2), gk.uniform(0, 1)]
        kicks.append(rng_for(cfg.seed, _NOISE, k))
    dt = cfg.dt
    n_transient = cfg.transient
    total_steps = n_transient + cfg.t_points * cfg.stride
    scale = math.sqrt(2 * diffusivity * dt)
    noise = np.stack([kg.normal(0.0, 1.0, (total_steps, 2)) for kg in kicks], axis=1) * scale
    out = np.empty((cfg.t_points, n, 2))
    times = np.empty(cfg.t_points)
    t = 0.0
    i_out = 0
    for step in range(total_steps):
        if step >= n_transient and (step - n_transient) % cfg.stride == 0:
            out[i_out] = pos
            times[i_out] = t
            i_out += 1
        pos = rk4_step(vel, t, pos, dt) + noise[step]
        pos[:, 0] = _reflect(pos[:, 0], 0.0, 2.0)
        pos[:, 1] = _reflect(pos[:, 1], 0.0, 1.0)
        t += dt
    radial = np.hypot(out[..., 0] - 1.0, out[..., 1] - 0.5)
    driver = np.sin(omega * times)
    meta = cfg.as_dict() | {"diffusivity": diffusivity, "sample_dt": dt * cfg.stride}
    snr_free = cfg.replace(snr=math.inf)  # tracer noise is dynamical, not observational
    observed = _observe(radial, snr_free)
    ens = ResponseEnsemble(observed, sample_period=dt * cfg.stride)
    truth = DriverSignal(driver, "continuous", 0)
    return SkewDataset(truth, ens, meta, driver, out, radial)


def simulate(cfg: SkewSystemConfig, regime: str = "period2") -> SkewDataset:
    """Dispatch on the configured driver/response pair."""
    if cfg.driver == "logistic":
        return gen_logistic_skew(regime, cfg)
    if cfg.driver == "rossler":
        return gen_rossler_lorenz(cfg)
    if cfg.driver == "sine" and cfg.response == "tracer":
        return gen_double_gyre(cfg)
    raise ArgumentRange(f"unsupported driver/response pair {cfg.driver}/{cfg.response}")
