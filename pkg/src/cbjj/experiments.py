"""Declarative experiments: band structure, phase densities, detection-efficiency sweeps.

A config is a YAML (or JSON) mapping; every key is optional except ``kind``::

    kind: eff_vs_freq
    circuit: {I_c: 2.0e-6, C_J: 1.5e-12, Z_0: 50, omega_bare: 4.398e10, C_out: 5.0e-15}
    bias: [0.92]                    # or {start: 0.85, stop: 0.94, num: 10}
    basis: {n_phi: 512, n_fock: 8, trim_above: 300}
    cap: {strength: 200, power: 2, onset_margin: 0}
    friction: {model: off, rate: 0}
    drive: {beta: 1.0, omega_out: auto-resonant}   # omega_out in GHz otherwise
    frequencies: {start: 2.38, stop: 2.58, num: 11}  # GHz, eff_vs_freq only
    betas: [0, 0.25, 0.5, 1]        # eff_vs_beta only
    eval_time: reference            # or a time in ns
    t_final: 110
    dt: 0.001
    sample_every: 0.1

Files are written in GHz (ordinary frequency) and ns.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import yaml
from scipy.optimize import curve_fit

from . import __version__
from .circuit import CircuitParams, ParameterError, derive_circuit
from .dynamics import (CapConfig, FrictionConfig, detection_run, efficiency, ground_state,
                       rabi_time, write_record)
from .hamiltonian import GHZ, CBJJModel, kerr_matrix
from .spectral import (external_coupling, lowest_band_bound, phase_distribution,
                       single_mode_validity, solve_spectrum)

KINDS = ("spectrum_sweep", "phase_dist", "dynamics", "eff_vs_beta", "eff_vs_I",
         "eff_vs_freq", "kerr_table", "validity_check")

TWO_PI = 2 * np.pi


class ConfigError(ValueError):
    pass


class FitError(RuntimeError):
    pass


def _float_list(spec, name) -> list[float]:
    if spec is None:
        return []
    if isinstance(spec, (int, float)):
        return [float(spec)]
    if isinstance(spec, dict):
        try:
            vals = np.linspace(float(spec["start"]), float(spec["stop"]), int(spec["num"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"{name}: range needs start, stop, num") from exc
        return [float(v) for v in vals]
    try:
        return [float(v) for v in spec]
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name}: expected a number, list or range") from exc


@dataclass
class ExperimentConfig:
    kind: str
    circuit: CircuitParams = field(default_factory=CircuitParams)
    bias: list = field(default_factory=lambda: [0.92])
    n_phi: int = 512
    n_fock: int = 8
    box_length: float = 2.5 * np.pi
    box_margin: float = 0.25 * np.pi
    trim_above: float | None = None
    n_states: int = 40
    cap: CapConfig = field(default_factory=CapConfig)
    friction: FrictionConfig = field(default_factory=FrictionConfig)
    beta: float = 1.0
    omega_out: str | float = "auto-resonant"
    frequencies: list = field(default_factory=list)
    betas: list = field(default_factory=list)
    eval_time: str | float = "reference"
    reference_bias: float = 0.92
    kerr_modes: list = field(default_factory=lambda: [0, 1, 2])
    t_final: float = 110.0
    dt: float = 1e-3
    sample_every: float = 0.1
    out: str = "results"
    raw: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        if not isinstance(d, dict):
            raise ConfigError("config must be a mapping")
        kind = d.get("kind")
        if kind not in KINDS:
            raise ConfigError(f"kind must be one of {KINDS}, got {kind!r}")
        known = {"kind", "circuit", "bias", "basis", "n_states", "cap", "friction", "drive",
                 "frequencies", "betas", "eval_time", "reference_bias", "kerr_modes",
                 "t_final", "dt", "sample_every", "out"}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            circuit = CircuitParams(**(d.get("circuit") or {}))
            basis = d.get("basis") or {}
            bad = set(basis) - {"n_phi", "n_fock", "box_length", "box_margin", "trim_above"}
            if bad:
                raise ConfigError(f"unknown basis keys: {sorted(bad)}")
            cap = CapConfig(**(d.get("cap") or {}))
            friction = FrictionConfig(**(d.get("friction") or {}))
        except (TypeError, ParameterError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
        drive = d.get("drive") or {}
        omega_out = drive.get("omega_out", "auto-resonant")
        if isinstance(omega_out, str) and omega_out != "auto-resonant":
            raise ConfigError("drive.omega_out must be 'auto-resonant' or a frequency in GHz")
        bias = _float_list(d.get("bias", [0.92]), "bias")
        if not bias:
            raise ConfigError("bias list is empty")
        if any(not 0 <= I < 1 for I in bias):
            raise ConfigError("bias values must satisfy 0 <= I < 1")
        # dynamics-heavy kinds default to a trimmed grid
        trim_default = 300.0 if kind in ("dynamics", "eff_vs_beta", "eff_vs_I", "eff_vs_freq") else None
        cfg = cls(
            kind=kind, circuit=circuit, bias=bias,
            n_phi=int(basis.get("n_phi", 512)), n_fock=int(basis.get("n_fock", 8)),
            box_length=float(basis.get("box_length", 2.5 * np.pi)),
            box_margin=float(basis.get("box_margin", 0.25 * np.pi)),
            trim_above=basis.get("trim_above", trim_default),
            n_states=int(d.get("n_states", 40)), cap=cap, friction=friction,
            beta=float(drive.get("beta", 1.0)), omega_out=omega_out,
            frequencies=_float_list(d.get("frequencies"), "frequencies"),
            betas=_float_list(d.get("betas"), "betas"),
            eval_time=d.get("eval_time", "reference"),
            reference_bias=float(d.get("reference_bias", 0.92)),
            kerr_modes=[int(j) for j in d.get("kerr_modes", [0, 1, 2])],
            t_final=float(d.get("t_final", 110.0)), dt=float(d.get("dt", 1e-3)),
            sample_every=float(d.get("sample_every", 0.1)), out=str(d.get("out", "results")),
            raw=dict(d),
        )
        if kind == "eff_vs_freq" and not cfg.frequencies:
            raise ConfigError("eff_vs_freq needs a non-empty 'frequencies' list")
        if kind == "eff_vs_beta" and not cfg.betas:
            raise ConfigError("eff_vs_beta needs a non-empty 'betas' list")
        if cfg.dt <= 0 or cfg.t_final <= 0:
            raise ConfigError("dt and t_final must be positive")
        return cfg

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            with open(path) as fh:
                d = yaml.safe_load(fh)
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(d)

    def model(self, I: float) -> CBJJModel:
        return CBJJModel(params=self.circuit, I=I, n_phi=self.n_phi, n_fock=self.n_fock,
                         box_length=self.box_length, box_margin=self.box_margin,
                         trim_above=self.trim_above)

    def echo(self) -> dict:
        d = dataclasses.asdict(self)
        d.pop("raw")
        d["circuit"] = dataclasses.asdict(self.circuit)
        return d


@dataclass
class RunResult:
    files: list
    failures: int = 0
    summary: dict = field(default_factory=dict)


# --------------------------------------------------------------------------
# output helpers
# --------------------------------------------------------------------------

def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "nan" if not np.isfinite(v) else f"{v:.10g}"
    return str(v)


def write_table(path, header, rows, meta: dict):
    """CSV with a header row and a ``.json`` metadata sidecar."""
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])
    with open(os.path.splitext(path)[0] + ".json", "w") as fh:
        json.dump(_jsonable(meta), fh, indent=2, sort_keys=True)


def _jsonable(o):
    if isinstance(o, dict):
        return {str(k): _jsonable(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_jsonable(v) for v in o]
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    if isinstance(o, complex):
        return [o.real, o.imag]
    if isinstance(o, float) and not np.isfinite(o):
        return None
    return o


def _meta(cfg: ExperimentConfig, **extra) -> dict:
    m = dict(code_version=__version__, package="cbjj", config=cfg.echo(),
             units="frequencies in GHz (ordinary, not angular), times in ns")
    m.update(extra)
    return m


def _map(fn, items, threads: int):
    """Order-preserving map, over a process pool when ``threads > 1``."""
    if threads > 1 and len(items) > 1:
        with ProcessPoolExecutor(max_workers=threads) as ex:
            return list(ex.map(fn, items))
    return [fn(x) for x in items]


# --------------------------------------------------------------------------
# spectra
# --------------------------------------------------------------------------

def _spectrum_point(args):
    cfg, I = args
    try:
        pairs = solve_spectrum(cfg.model(I), cfg.n_states)
        return I, pairs, None
    except Exception as exc:  # noqa: BLE001 - a failed point is reported, not raised
        return I, None, f"{type(exc).__name__}: {exc}"


def run_spectrum_sweep(cfg: ExperimentConfig, out: str, threads: int = 1) -> RunResult:
    """Band table: one row per eigenstate with <a^dag a> <= 3, per bias."""
    results = _map(_spectrum_point, [(cfg, I) for I in cfg.bias], threads)
    rows, failures, census = [], 0, {}
    for I, pairs, err in results:
        if err is not None:
            failures += 1
            rows.append([I, -1, np.nan, np.nan, 0, -1, np.nan, "failed: " + err])
            continue
        census[f"{I:.6g}"] = len(lowest_band_bound(pairs))
        k = 0
        for p in pairs:
            if p.mean_photon > 3:
                continue
            rows.append([I, k, p.energy_ghz, p.mean_photon, p.bound_flag, p.band,
                         p.in_well_weight, "ok"])
            k += 1
    path = os.path.join(out, "bands.csv")
    write_table(path, ["I", "state_index", "energy_GHz", "mean_photon", "bound_flag", "band",
                       "in_well_weight", "status"], rows,
                _meta(cfg, bound_lowest_band=census, failures=failures,
                      band_rule="band = rounded occupation of the upper normal mode"))
    return RunResult([path], failures, dict(bound_lowest_band=census))


def run_phase_dist(cfg: ExperimentConfig, out: str, threads: int = 1) -> RunResult:
    """Reduced phase density of the two lowest bound states at the first bias."""
    I = cfg.bias[0]
    model = cfg.model(I)
    pairs = solve_spectrum(model, cfg.n_states)
    bound = sorted((p for p in pairs if p.bound_flag), key=lambda p: p.energy)[:2]
    if not bound:
        raise RuntimeError(f"no bound states at I={I}")
    cols = [phase_distribution(p.state, model.basis) for p in bound]
    phi = cols[0][0]
    rows = [[phi[k]] + [c[1][k] for c in cols] for k in range(len(phi))]
    path = os.path.join(out, f"phase_dist_I{I:.4f}.csv")
    write_table(path, ["phi"] + [f"P_{k}" for k in range(len(cols))], rows,
                _meta(cfg, I=I, energies_GHz=[p.energy_ghz for p in bound]))
    return RunResult([path])


# --------------------------------------------------------------------------
# dynamics
# --------------------------------------------------------------------------

def resonant_frequency(model: CBJJModel, n_states: int = 40) -> float:
    """(E_1 - E_0) of the two lowest bound states in rad/ns."""
    pairs = solve_spectrum(model, n_states)
    bound = sorted((p for p in pairs if p.bound_flag), key=lambda p: p.energy)
    if len(bound) < 2:
        raise RuntimeError(f"fewer than two bound states at I={model.I}")
    return bound[1].energy - bound[0].energy


def _omega_out(cfg: ExperimentConfig, model: CBJJModel) -> float:
    if cfg.omega_out == "auto-resonant":
        return resonant_frequency(model, cfg.n_states)
    return TWO_PI * float(cfg.omega_out)


def _run(cfg: ExperimentConfig, I: float, beta: float, omega: float, t_final=None):
    model = cfg.model(I)
    return detection_run(model, beta, omega, t_final=t_final or cfg.t_final, dt=cfg.dt,
                         cap=cfg.cap, friction=cfg.friction, sample_every=cfg.sample_every)


def _eff_point(args):
    cfg, I, beta, omega, t_eval = args
    try:
        if omega is None:
            omega = resonant_frequency(cfg.model(I), cfg.n_states)
        sig = _run(cfg, I, beta, omega)
        dark = _run(cfg, I, 0.0, omega)
        xi, xi_max, t_max = efficiency(sig, dark)
        xi_eval = float(np.interp(t_eval, sig.times, xi)) if t_eval is not None else np.nan
        return dict(I=I, beta=beta, omega=omega, xi_max=xi_max, t_max=t_max, xi_eval=xi_eval,
                    P_end=float(sig.switching_prob[-1]), error=None)
    except Exception as exc:  # noqa: BLE001
        return dict(I=I, beta=beta, omega=omega, xi_max=np.nan, t_max=np.nan, xi_eval=np.nan,
                    P_end=np.nan, error=f"{type(exc).__name__}: {exc}")


def run_dynamics(cfg: ExperimentConfig, out: str, threads: int = 1) -> RunResult:
    """Signal and dark propagation at the first bias, plus the efficiency curve."""
    I = cfg.bias[0]
    model = cfg.model(I)
    omega = _omega_out(cfg, model)
    recs = _map(lambda b: _run(cfg, I, b, omega), [cfg.beta, 0.0], 1)
    sig, dark = recs
    xi, xi_max, t_max = efficiency(sig, dark)
    files = []
    extra = dict(I=I, omega_out_GHz=omega / TWO_PI, code_version=__version__,
                 config=_jsonable(cfg.echo()))
    for name, rec in (("signal", sig), ("dark", dark)):
        path = os.path.join(out, f"propagation_{name}.csv")
        os.makedirs(out, exist_ok=True)
        write_record(rec, path, extra)
        files.append(path)
    path = os.path.join(out, "efficiency.csv")
    write_table(path, ["t_ns", "xi"], list(zip(sig.times, xi)),
                _meta(cfg, I=I, xi_max=xi_max, t_max_ns=t_max, omega_out_GHz=omega / TWO_PI))
    files.append(path)
    return RunResult(files, 0, dict(xi_max=xi_max, t_max=t_max,
                                    P_end=float(sig.switching_prob[-1])))


def reference_time(cfg: ExperimentConfig) -> float:
    """t_max of the auto-resonant reference run at ``reference_bias``."""
    if cfg.eval_time != "reference":
        return float(cfg.eval_time)
    I = cfg.reference_bias
    res = _eff_point((cfg, I, cfg.beta, None, None))
    if res["error"]:
        raise RuntimeError("reference run failed: " + res["error"])
    return res["t_max"]


def _eff_rows(results):
    rows, failures = [], 0
    for r in results:
        status = "ok" if r["error"] is None else "failed: " + r["error"]
        failures += r["error"] is not None
        omega = r["omega"] if r["omega"] is not None else np.nan
        rows.append([r["I"], r["beta"], omega / TWO_PI, r["xi_max"], r["t_max"], r["xi_eval"],
                     status])
    return rows, failures


_EFF_HEADER = ["I", "beta", "omega_out_GHz", "xi_max", "t_max_ns", "xi_at_eval", "status"]


def run_eff_vs_beta(cfg: ExperimentConfig, out: str, threads: int = 1) -> RunResult:
    I = cfg.bias[0]
    omega = _omega_out(cfg, cfg.model(I))
    res = _map(_eff_point, [(cfg, I, b, omega, None) for b in cfg.betas], threads)
    rows, failures = _eff_rows(res)
    path = os.path.join(out, "eff_vs_beta.csv")
    write_table(path, _EFF_HEADER, rows, _meta(cfg, failures=failures))
    return RunResult([path], failures)


def run_eff_vs_I(cfg: ExperimentConfig, out: str, threads: int = 1) -> RunResult:
    """Auto-resonant: xi_max and t_max per bias. Fixed omega_out: xi at the reference time too."""
    t_eval = None
    fixed = cfg.omega_out != "auto-resonant"
    if fixed:
        t_eval = reference_time(cfg)
    omega = TWO_PI * float(cfg.omega_out) if fixed else None
    res = _map(_eff_point, [(cfg, I, cfg.beta, omega, t_eval) for I in cfg.bias], threads)
    rows, failures = _eff_rows(res)
    path = os.path.join(out, "eff_vs_I.csv")
    write_table(path, _EFF_HEADER, rows, _meta(cfg, failures=failures, eval_time_ns=t_eval))
    return RunResult([path], failures)


def run_eff_vs_freq(cfg: ExperimentConfig, out: str, threads: int = 1) -> RunResult:
    """xi at the reference time versus drive frequency, with a Lorentzian fit."""
    I = cfg.bias[0]
    t_eval = reference_time(cfg)
    res = _map(_eff_point, [(cfg, I, cfg.beta, TWO_PI * f, t_eval) for f in cfg.frequencies],
               threads)
    rows, failures = _eff_rows(res)
    ok = [r for r in res if r["error"] is None]
    fit = None
    try:
        fit = fit_linewidth([r["omega"] / TWO_PI for r in ok], [r["xi_eval"] for r in ok])
    except FitError as exc:
        fit = dict(error=str(exc))
    path = os.path.join(out, "eff_vs_freq.csv")
    write_table(path, _EFF_HEADER, rows,
                _meta(cfg, failures=failures, eval_time_ns=t_eval, lorentzian_fit=fit,
                      band_above_0p9_MHz=band_width([r["omega"] / TWO_PI for r in ok],
                                                    [r["xi_eval"] for r in ok], 0.9) * 1e3))
    return RunResult([path], failures, dict(fit=fit, t_eval=t_eval))


# --------------------------------------------------------------------------
# static tables
# --------------------------------------------------------------------------

def run_kerr_table(cfg: ExperimentConfig, out: str, threads: int = 1) -> RunResult:
    derived = derive_circuit(cfg.circuit)
    rows = []
    for I in cfg.bias:
        K = kerr_matrix(derived, I, cfg.kerr_modes)
        for a, i in enumerate(cfg.kerr_modes):
            for b, j in enumerate(cfg.kerr_modes):
                rows.append([I, i, j, K[a, b] / (TWO_PI * GHZ)])
    path = os.path.join(out, "kerr.csv")
    write_table(path, ["I", "i", "j", "kappa_GHz"], rows, _meta(cfg))
    return RunResult([path])


def run_validity_check(cfg: ExperimentConfig, out: str, threads: int = 1) -> RunResult:
    rows, failures, last = [], 0, {}
    for I in cfg.bias:
        try:
            v = single_mode_validity(cfg.model(I), cfg.n_states)
            last = v
            rows.append([I, v["g_1a1b_ghz"], v["delta_1a1b_ghz"], v["ratio_1a1b"],
                         v["g_01b_ghz"], v["delta_01b_ghz"], v["ratio_01b"],
                         v["est_population"], "ok"])
        except Exception as exc:  # noqa: BLE001
            failures += 1
            rows.append([I] + [np.nan] * 7 + [f"failed: {type(exc).__name__}: {exc}"])
    path = os.path.join(out, "validity.csv")
    write_table(path, ["I", "g_1a1b_GHz", "delta_1a1b_GHz", "ratio_1a1b", "g_01b_GHz",
                       "delta_01b_GHz", "ratio_01b", "est_population", "status"], rows,
                _meta(cfg, failures=failures,
                      note="direct mode-mode coupling omitted from g (no explicit form available)"))
    return RunResult([path], failures, last)


RUNNERS = dict(spectrum_sweep=run_spectrum_sweep, phase_dist=run_phase_dist,
               dynamics=run_dynamics, eff_vs_beta=run_eff_vs_beta, eff_vs_I=run_eff_vs_I,
               eff_vs_freq=run_eff_vs_freq, kerr_table=run_kerr_table,
               validity_check=run_validity_check)


def run(cfg: ExperimentConfig, out: str | None = None, threads: int = 1) -> RunResult:
    return RUNNERS[cfg.kind](cfg, out or cfg.out, threads)


# --------------------------------------------------------------------------
# analysis helpers
# --------------------------------------------------------------------------

def lorentzian(f, amp, f0, fwhm, offset):
    return amp / (1 + ((f - f0) / (0.5 * fwhm)) ** 2) + offset


def fit_linewidth(freqs, values) -> dict:
    """Least-squares Lorentzian fit of a peaked sweep.

    ``freqs`` in GHz (ordinary). Returns the FWHM in GHz, the angular width
    ``delta_omega`` in rad/ns and ``T1 = 1/delta_omega`` in ns.

    Raises
    ------
    FitError
        If the data show no peak or the fit does not converge to one.
    """
    f = np.asarray(freqs, dtype=float)
    y = np.asarray(values, dtype=float)
    if len(f) < 4 or len(f) != len(y) or not np.all(np.isfinite(y)):
        raise FitError("need at least four finite points")
    span = y.max() - y.min()
    if span <= 1e-12 * max(1.0, abs(y).max()):
        raise FitError("flat data: no peak to fit")
    k = int(np.argmax(y))
    half = y.min() + 0.5 * span
    above = f[y >= half]
    w0 = max(above.max() - above.min(), np.min(np.diff(np.sort(f))))
    p0 = [span, f[k], w0, y.min()]
    try:
        popt, _ = curve_fit(lorentzian, f, y, p0=p0, maxfev=20000)
    except (RuntimeError, ValueError) as exc:
        raise FitError(f"Lorentzian fit failed: {exc}") from exc
    amp, f0, fwhm, off = popt
    fwhm = abs(fwhm)
    if amp <= 0 or not np.isfinite(fwhm) or fwhm == 0:
        raise FitError("fit did not converge to a peak")
    d_omega = TWO_PI * fwhm
    return dict(fwhm_GHz=float(fwhm), delta_omega_rad_per_ns=float(d_omega),
                T1_ns=float(1 / d_omega), f0_GHz=float(f0), amplitude=float(amp),
                offset=float(off))


def band_width(freqs, values, level: float) -> float:
    """Width (same unit as ``freqs``) of the contiguous region around the peak with value > level.

    Edges are located by linear interpolation; 0 if the peak is below ``level``.
    """
    f = np.asarray(freqs, dtype=float)
    y = np.asarray(values, dtype=float)
    if len(f) == 0:
        return 0.0
    o = np.argsort(f)
    f, y = f[o], y[o]
    k = int(np.argmax(y))
    if y[k] <= level:
        return 0.0
    lo = k
    while lo > 0 and y[lo - 1] > level:
        lo -= 1
    hi = k
    while hi < len(f) - 1 and y[hi + 1] > level:
        hi += 1
    left = f[lo] if lo == 0 else np.interp(level, [y[lo - 1], y[lo]], [f[lo - 1], f[lo]])
    right = f[hi] if hi == len(f) - 1 else np.interp(level, [y[hi + 1], y[hi]], [f[hi + 1], f[hi]])
    return float(right - left)


def coupling_summary(model: CBJJModel, n_states: int = 40) -> dict:
    """|Omega| and the Rabi time at the resonant drive frequency."""
    pairs = solve_spectrum(model, n_states)
    c = external_coupling(model, pairs)
    Om = abs(c.Omega)
    return dict(Omega_MHz=Om / TWO_PI / 1e6, rabi_time_ns=rabi_time(Om) * 1e9,
                omega_out_GHz=c.omega_out / TWO_PI / 1e9, beta1=c.beta1, beta2=c.beta2,
                alpha=c.alpha)
