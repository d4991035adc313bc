"""Two-hop reflected-channel simulator and its on-grid sparse dictionary.

The physical layout is transmitter -> reflecting surface -> receiver.
Both hops are few-path ray channels on uniform linear arrays; the surface
applies a per-element phase/gain vector theta that changes across
measurement blocks.  Estimation targets the columnwise-Kronecker cascade
of the two hops, which admits an exact factorization
``g = g_L (x) conj(g_M) (x) g_B`` over a triple angular grid, so the
sensing matrix is a Kronecker product of three small dictionaries.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict

import numpy as np

from .errors import ConfigError
from .kron import (
    KronOperator,
    SteeringMatrix,
    default_grid,
    steering_matrix,
)
from . import _io


@dataclass
class SystemConfig:
    """Array sizes, grid resolution, and trial-level constants.

    B   receiver antennas
    M   transmitter antennas
    L   reflecting elements
    N   grid points per angular dimension
    K_I number of surface configurations
    K_P pilot symbols per configuration
    P_MS / P_BS  path counts of the two hops
    """

    B: int = 16
    M: int = 6
    L: int = 256
    N: int = 18
    K_I: int = 4
    K_P: int = 6
    P_MS: int = 2
    P_BS: int = 2
    sigma2: float = 1e-2
    delta: float = 0.5
    seed: int = 0
    theta_scale: float | None = None   # None -> 1/sqrt(N)

    @property
    def K(self) -> int:
        return self.K_I * self.K_P

    def validate(self) -> "SystemConfig":
        for name in ("B", "M", "L", "N", "K_I", "K_P", "P_MS", "P_BS"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or v < 1:
                raise ConfigError(f"{name} must be a positive integer, got {v!r}")
        if self.P_MS > self.N or self.P_BS > self.N:
            raise ConfigError(
                f"path counts (P_MS={self.P_MS}, P_BS={self.P_BS}) cannot "
                f"exceed the grid size N={self.N}"
            )
        if not self.sigma2 > 0:
            raise ConfigError(f"sigma2 must be positive, got {self.sigma2}")
        if not self.delta > 0:
            raise ConfigError(f"delta must be positive, got {self.delta}")
        if self.theta_scale is not None and not self.theta_scale > 0:
            raise ConfigError(f"theta_scale must be positive, got {self.theta_scale}")
        return self

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, obj: dict) -> "SystemConfig":
        return cls(**obj).validate()


@dataclass
class GroundTruth:
    """Realized channels plus their exact sparse-grid representation."""

    h_ms: np.ndarray        # (L, M) transmitter -> surface
    h_bs: np.ndarray        # (B, L) surface -> receiver
    g_la: np.ndarray        # (N,) surface-arrival gains (scaled)
    g_ld: np.ndarray        # (N,) surface-departure selector
    g_m: np.ndarray         # (N,) transmitter-departure selector
    g_b: np.ndarray         # (N,) receiver-arrival gains (scaled)
    g_l: np.ndarray         # (N,) reduced surface factor (circular bins)
    g: np.ndarray           # (N^3,) full sparse vector
    support: np.ndarray     # sorted nonzero indices of g
    gains_ms: np.ndarray    # (P_MS,) raw path gains
    gains_bs: np.ndarray    # (P_BS,)
    aoa_irs: np.ndarray     # (P_MS,) grid indices, arrivals at the surface
    aod_ms: int             # single departure index at the transmitter
    aoa_bs: np.ndarray      # (P_BS,) arrivals at the receiver
    aod_irs: int            # single departure index at the surface


@dataclass
class MeasurementSet:
    """Pilots, surface configurations, and the stacked received data."""

    x: np.ndarray           # (M, K_P) pilot matrix
    theta: np.ndarray       # (L, K_I) surface configurations, one per column
    ybar: np.ndarray        # (B*K_P, K_I) vectorized block per configuration
    y_tilde: np.ndarray     # (B*K_P*K_I,) fully stacked measurement
    y_clean: np.ndarray     # (B*K_P*K_I,) noise-free counterpart
    noise: np.ndarray       # (B*K_P*K_I,)
    sigma2: float
    snr_db: float | None = None


@dataclass
class Dictionary:
    """Grid dictionaries for the Kronecker measurement operator."""

    phi_l: np.ndarray       # (K_I, N) surface-configuration dictionary
    phi_m: np.ndarray       # (K_P, N) pilot-side dictionary
    phi_b: np.ndarray       # (B, N) receive-array dictionary
    phi_a: np.ndarray       # (L, N) reduced surface response columns
    a_l: SteeringMatrix
    a_m: SteeringMatrix
    a_b: SteeringMatrix

    @property
    def operator(self) -> KronOperator:
        return KronOperator((self.phi_l, self.phi_m, self.phi_b))

    @property
    def recon_operator(self) -> KronOperator:
        return KronOperator((self.phi_a, self.a_m.entries.conj(), self.phi_b))


def _scatter(values: np.ndarray, idx: np.ndarray, n: int) -> np.ndarray:
    out = np.zeros(n, dtype=complex)
    out[idx] = values
    return out


def synth_channels(cfg: SystemConfig, rng: np.random.Generator) -> GroundTruth:
    """Draw both hop channels with on-grid angles and CN(0,1) path gains.

    Arrival angles are distinct per hop; each hop has a single departure
    angle, which is what makes the cascade exactly grid-sparse with
    P_MS * P_BS active entries.
    """
    cfg.validate()
    grid = default_grid(cfg.N)
    a_l = steering_matrix(cfg.L, grid, cfg.delta)
    a_m = steering_matrix(cfg.M, grid, cfg.delta)
    a_b = steering_matrix(cfg.B, grid, cfg.delta)

    aoa_irs = np.sort(rng.choice(cfg.N, size=cfg.P_MS, replace=False))
    aod_ms = int(rng.integers(cfg.N))
    aoa_bs = np.sort(rng.choice(cfg.N, size=cfg.P_BS, replace=False))
    aod_irs = int(rng.integers(cfg.N))

    gains_ms = (rng.standard_normal(cfg.P_MS) + 1j * rng.standard_normal(cfg.P_MS)) / np.sqrt(2)
    gains_bs = (rng.standard_normal(cfg.P_BS) + 1j * rng.standard_normal(cfg.P_BS)) / np.sqrt(2)

    g_la = np.sqrt(cfg.L * cfg.M / cfg.P_MS) * _scatter(gains_ms, aoa_irs, cfg.N)
    g_m = _scatter(np.ones(1), np.array([aod_ms]), cfg.N)
    g_b = np.sqrt(cfg.B * cfg.L / cfg.P_BS) * _scatter(gains_bs, aoa_bs, cfg.N)
    g_ld = _scatter(np.ones(1), np.array([aod_irs]), cfg.N)

    h_ms = np.outer(a_l.entries @ g_la, a_m.entries[:, aod_ms].conj())
    h_bs = np.outer(a_b.entries @ g_b, a_l.entries[:, aod_irs].conj())

    # Products of same-row steering entries depend only on the grid-index
    # difference mod N, so the surface factor collapses to N circular bins:
    # g_l[j] = sum_m g_la[(m - j) mod N] * conj(g_ld[m]).
    m_idx = np.arange(cfg.N)
    g_l = np.array([
        np.sum(g_la[(m_idx - j) % cfg.N] * g_ld.conj()[m_idx]) for j in range(cfg.N)
    ])

    g = np.kron(g_l, np.kron(g_m.conj(), g_b))
    support = np.flatnonzero(g)

    return GroundTruth(
        h_ms=h_ms, h_bs=h_bs,
        g_la=g_la, g_ld=g_ld, g_m=g_m, g_b=g_b, g_l=g_l, g=g,
        support=support,
        gains_ms=gains_ms, gains_bs=gains_bs,
        aoa_irs=aoa_irs, aod_ms=aod_ms, aoa_bs=aoa_bs, aod_irs=aod_irs,
    )


def _clean_measurement(cfg, truth, x, theta):
    """Noise-free stacked measurement from the physical matrices."""
    y_all = np.empty((cfg.K_I, cfg.B, cfg.K_P), dtype=complex)
    for k in range(cfg.K_I):
        y_all[k] = truth.h_bs @ (theta[:, k][:, None] * (truth.h_ms @ x))
    # flat index order: configuration slowest, pilot middle, antenna fastest
    return y_all.transpose(0, 2, 1).reshape(-1)


def snr_to_sigma2(cfg: SystemConfig, truth: GroundTruth, x: np.ndarray,
                  theta: np.ndarray, snr_db: float) -> float:
    """Noise variance giving the requested per-sample SNR for this trial."""
    y_clean = _clean_measurement(cfg, truth, x, theta)
    e_signal = float(np.vdot(y_clean, y_clean).real) / y_clean.size
    if e_signal == 0.0:
        raise ConfigError("clean measurement has zero energy; SNR undefined")
    return e_signal / 10.0 ** (snr_db / 10.0)


def gen_measurements(cfg: SystemConfig, truth: GroundTruth,
                     rng: np.random.Generator,
                     snr_db: float | None = None) -> MeasurementSet:
    """Draw pilots, surface configurations, and noisy received blocks.

    Pilot entries are +-1/sqrt(M); surface entries +-theta_scale
    (default 1/sqrt(N)).  If snr_db is given the noise variance is set
    from the realized clean-signal energy, otherwise cfg.sigma2 is used.
    """
    cfg.validate()
    x = (2.0 * rng.integers(0, 2, size=(cfg.M, cfg.K_P)) - 1.0) / np.sqrt(cfg.M)
    scale = cfg.theta_scale if cfg.theta_scale is not None else 1.0 / np.sqrt(cfg.N)
    theta = (2.0 * rng.integers(0, 2, size=(cfg.L, cfg.K_I)) - 1.0) * scale

    y_clean = _clean_measurement(cfg, truth, x, theta)
    if snr_db is None:
        sigma2 = float(cfg.sigma2)
    else:
        e_signal = float(np.vdot(y_clean, y_clean).real) / y_clean.size
        sigma2 = e_signal / 10.0 ** (snr_db / 10.0)

    n = y_clean.size
    noise = np.sqrt(sigma2 / 2.0) * (rng.standard_normal(n) + 1j * rng.standard_normal(n))
    y_tilde = y_clean + noise
    ybar = y_tilde.reshape(cfg.K_I, cfg.K_P * cfg.B).T

    return MeasurementSet(x=x, theta=theta, ybar=ybar, y_tilde=y_tilde,
                          y_clean=y_clean, noise=noise, sigma2=sigma2,
                          snr_db=snr_db)


def build_dictionary(cfg: SystemConfig, x: np.ndarray, theta: np.ndarray) -> Dictionary:
    """Assemble the three Kronecker factors for given pilots and configs.

    The surface factor uses the reduced column set: products
    a_L[l, n] * conj(a_L[l, m]) repeat along (n - m) mod N on the default
    cosine-uniform grid, so only N distinct columns remain; phi_a holds
    them and phi_l = theta^T phi_a.
    """
    cfg.validate()
    x = np.asarray(x)
    theta = np.asarray(theta)
    if x.shape != (cfg.M, cfg.K_P):
        raise ConfigError(f"x has shape {x.shape}, expected {(cfg.M, cfg.K_P)}")
    if theta.shape != (cfg.L, cfg.K_I):
        raise ConfigError(f"theta has shape {theta.shape}, expected {(cfg.L, cfg.K_I)}")

    grid = default_grid(cfg.N)
    a_l = steering_matrix(cfg.L, grid, cfg.delta)
    a_m = steering_matrix(cfg.M, grid, cfg.delta)
    a_b = steering_matrix(cfg.B, grid, cfg.delta)

    phi_a = a_l.entries[:, [0]] * a_l.entries.conj()
    phi_l = theta.T @ phi_a
    phi_m = x.T @ a_m.entries.conj()
    phi_b = a_b.entries

    return Dictionary(phi_l=phi_l, phi_m=phi_m, phi_b=phi_b, phi_a=phi_a,
                      a_l=a_l, a_m=a_m, a_b=a_b)


def reconstruct_cascade(dic: Dictionary, g_hat: np.ndarray) -> np.ndarray:
    """Map a grid-domain estimate to the (M*B, L) cascaded channel.

    Column l of the result is kron(h_ms^T[:, l], h_bs[:, l]); applying a
    surface vector theta to it (cascade_at) yields the effective B x M
    channel for that configuration.
    """
    flat = dic.recon_operator.apply(np.asarray(g_hat))
    l_dim = dic.phi_a.shape[0]
    return flat.reshape(l_dim, -1).T


def cascade_at(cascade: np.ndarray, theta_k: np.ndarray, b_dim: int) -> np.ndarray:
    """Effective receiver x transmitter channel for one surface vector."""
    vec = cascade @ theta_k
    return vec.reshape(-1, b_dim).T


def true_cascade(truth: GroundTruth) -> np.ndarray:
    """Khatri-Rao cascade of the realized channels, (M*B, L)."""
    h_ms_t = truth.h_ms.T
    m, l_dim = h_ms_t.shape
    b = truth.h_bs.shape[0]
    return (h_ms_t[:, None, :] * truth.h_bs[None, :, :]).reshape(m * b, l_dim)


def save_problem(path, cfg: SystemConfig, truth: GroundTruth, meas: MeasurementSet):
    """Write one synthesized trial (config, truth, measurements) as JSON."""
    obj = {
        "format": "kronsbl-problem-v1",
        "system": cfg.to_json(),
        "truth": {
            "h_ms": _io.arr_to_json(truth.h_ms),
            "h_bs": _io.arr_to_json(truth.h_bs),
            "g_la": _io.arr_to_json(truth.g_la),
            "g_ld": _io.arr_to_json(truth.g_ld),
            "g_m": _io.arr_to_json(truth.g_m),
            "g_b": _io.arr_to_json(truth.g_b),
            "g_l": _io.arr_to_json(truth.g_l),
            "g": _io.arr_to_json(truth.g),
            "gains_ms": _io.arr_to_json(truth.gains_ms),
            "gains_bs": _io.arr_to_json(truth.gains_bs),
            "aoa_irs": truth.aoa_irs.tolist(),
            "aod_ms": truth.aod_ms,
            "aoa_bs": truth.aoa_bs.tolist(),
            "aod_irs": truth.aod_irs,
        },
        "measurements": {
            "x": _io.arr_to_json(meas.x),
            "theta": _io.arr_to_json(meas.theta),
            "y_tilde": _io.arr_to_json(meas.y_tilde),
            "y_clean": _io.arr_to_json(meas.y_clean),
            "noise": _io.arr_to_json(meas.noise),
            "sigma2": meas.sigma2,
            "snr_db": meas.snr_db,
        },
    }
    _io.dump_json(path, obj)


def load_problem(path):
    obj = _io.load_json(path)
    if obj.get("format") != "kronsbl-problem-v1":
        raise ConfigError(f"unrecognized problem file format in {path}")
    cfg = SystemConfig.from_json(obj["system"])
    t = obj["truth"]
    g = _io.arr_from_json(t["g"])
    truth = GroundTruth(
        h_ms=_io.arr_from_json(t["h_ms"]),
        h_bs=_io.arr_from_json(t["h_bs"]),
        g_la=_io.arr_from_json(t["g_la"]),
        g_ld=_io.arr_from_json(t["g_ld"]),
        g_m=_io.arr_from_json(t["g_m"]),
        g_b=_io.arr_from_json(t["g_b"]),
        g_l=_io.arr_from_json(t["g_l"]),
        g=g,
        support=np.flatnonzero(g),
        gains_ms=_io.arr_from_json(t["gains_ms"]),
        gains_bs=_io.arr_from_json(t["gains_bs"]),
        aoa_irs=np.array(t["aoa_irs"], dtype=int),
        aod_ms=int(t["aod_ms"]),
        aoa_bs=np.array(t["aoa_bs"], dtype=int),
        aod_irs=int(t["aod_irs"]),
    )
    m = obj["measurements"]
    y_tilde = _io.arr_from_json(m["y_tilde"])
    ybar = y_tilde.reshape(cfg.K_I, cfg.K_P * cfg.B).T
    meas = MeasurementSet(
        x=_io.arr_from_json(m["x"]),
        theta=_io.arr_from_json(m["theta"]),
        ybar=ybar,
        y_tilde=y_tilde,
        y_clean=_io.arr_from_json(m["y_clean"]),
        noise=_io.arr_from_json(m["noise"]),
        sigma2=float(m["sigma2"]),
        snr_db=m["snr_db"],
    )
    return cfg, truth, meas
