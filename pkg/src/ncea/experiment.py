"""Experiment configs, per-SNR model management and BLER curve files."""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .archive import load_model, save_model
from .baselines import PamScheme, build_im_codebook, oma_im, oma_pam
from .montecarlo import DEFAULT_CHUNK, simulate_errors, wilson_interval
from .nc_ea import train_nc_ea
from .nc_eama import train_eama
from .training import TrainConfig

log = logging.getLogger(__name__)

SCHEMES = ("nc-ea-dnn", "nc-ea-ml", "nc-ofdm-im", "pam-med", "eama-ul", "eama-dl", "oma-im", "oma-pam")
LEARNED = ("nc-ea-dnn", "nc-ea-ml", "eama-ul", "eama-dl")
REQUIRED = {
    "nc-ea-dnn": ("N", "M"),
    "nc-ea-ml": ("N", "M"),
    "nc-ofdm-im": ("N", "K"),
    "pam-med": ("N", "D"),
    "eama-ul": ("J", "N", "M"),
    "eama-dl": ("J", "N", "M"),
    "oma-im": ("J", "N", "K"),
    "oma-pam": ("J", "N", "D"),
}
CSV_HEADER = ["scheme", "J", "N", "M", "K", "D", "L", "ebn0_db", "blocks", "errors", "bler", "ci_low", "ci_high", "user"]


class ConfigError(ValueError):
    """Invalid or incomplete experiment configuration."""


class MissingModelError(FileNotFoundError):
    """A learned scheme needs a model that is not on disk and training is off."""


@dataclass
class ExperimentConfig:
    """One experiment; ``scheme`` may list several schemes for a sweep.

    Field names follow the config-file keys (``J``, ``N``, ``M``, ``K``, ``D``,
    ``L``, ``ebn0_db``, ...). ``restarts=None`` means 3 for single-user models
    and 1 per lambda for multiuser ones.
    """

    scheme: tuple[str, ...]
    J: int = 1
    N: int | None = None
    M: int | None = None
    K: int | None = None
    D: int | None = None
    L: tuple[int, ...] = (1,)
    ebn0_db: tuple[float, ...] = ()
    blocks: int = 100_000
    seed: int = 0
    restarts: int | None = None
    lam: float | str = "grid"
    hidden: tuple[int, ...] | None = None
    epochs: int = 1000
    train_size: int = 20_000
    batch_size: int = 128
    lr: float = 1e-3
    max_train_ant: int = 16
    workers: int = 1
    chunk: int = DEFAULT_CHUNK
    model_dir: str = "models"
    out_dir: str = "results"
    train: bool = False
    plot: bool = False
    extra: dict = field(default_factory=dict, repr=False)

    def validate(self) -> "ExperimentConfig":
        if not self.scheme:
            raise ConfigError("no scheme given")
        for s in self.scheme:
            if s not in SCHEMES:
                raise ConfigError(f"unknown scheme {s!r}; choose from {', '.join(SCHEMES)}")
            missing = [k for k in REQUIRED[s] if getattr(self, k) is None]
            if missing:
                raise ConfigError(f"scheme {s} needs {', '.join(missing)}")
        if not self.ebn0_db:
            raise ConfigError("the Eb/N0 grid is empty")
        if not self.L or min(self.L) < 1:
            raise ConfigError("L must list positive antenna counts")
        if self.blocks < 1 or self.J < 1:
            raise ConfigError("blocks and J must be >= 1")
        if self.lam != "grid" and (not isinstance(self.lam, float) or self.lam < 0):
            raise ConfigError("lam must be 'grid' or a nonnegative number")
        return self

    def train_config(self, scheme: str) -> TrainConfig:
        restarts = self.restarts or (1 if scheme.startswith("eama") else 3)
        try:
            return TrainConfig(self.epochs, self.batch_size, self.train_size, self.lr, restarts=restarts,
                               max_train_ant=self.max_train_ant)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None


_INT_KEYS = {"J", "N", "M", "K", "D", "blocks", "seed", "restarts", "epochs", "train_size", "batch_size",
             "max_train_ant", "workers", "chunk"}
_ALIASES = {"snr": "ebn0_db", "ebn0": "ebn0_db", "j": "J", "n": "N", "m": "M", "k": "K", "d": "D", "l": "L"}


def parse_grid(text: str) -> tuple[float, ...]:
    """``"0:20:5"`` (inclusive) or ``"0,5,10"``."""
    text = text.strip()
    try:
        if ":" in text:
            start, stop, step = (float(v) for v in text.split(":"))
            if step <= 0:
                raise ConfigError("grid step must be positive")
            count = int(math.floor((stop - start) / step + 1e-9)) + 1
            return tuple(round(start + i * step, 10) for i in range(max(count, 0)))
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise ConfigError(f"cannot parse grid {text!r}") from None


def _bool(text) -> bool:
    if isinstance(text, bool):
        return text
    value = str(text).strip().lower()
    if value in ("1", "true", "yes", "on"):
        return True
    if value in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


def _convert(key: str, value):
    if value is None or not isinstance(value, str):
        return value
    try:
        if key in _INT_KEYS:
            return int(value)
        if key == "L":
            return tuple(int(v) for v in value.split(",") if v.strip())
        if key == "hidden":
            return tuple(int(v) for v in value.split(",") if v.strip()) or None
        if key == "ebn0_db":
            return parse_grid(value)
        if key == "scheme":
            return tuple(v.strip() for v in value.split(",") if v.strip())
        if key == "lam":
            return "grid" if value.strip() == "grid" else float(value)
        if key == "lr":
            return float(value)
        if key in ("train", "plot"):
            return _bool(value)
    except ValueError:
        raise ConfigError(f"bad value for {key}: {value!r}") from None
    return value.strip()


def read_config_file(path) -> dict:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    values = {}
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    for num, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{num}: expected key=value, got {raw!r}")
        key, value = (p.strip() for p in line.split("=", 1))
        values[_ALIASES.get(key, key)] = value
    return values


def make_config(values: dict) -> ExperimentConfig:
    names = {f.name for f in dataclasses.fields(ExperimentConfig)} - {"extra"}
    unknown = set(values) - names
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    if "scheme" not in values:
        raise ConfigError("config needs a scheme")
    kwargs = {k: _convert(k, v) for k, v in values.items() if v is not None}
    return ExperimentConfig(**kwargs).validate()


def load_config(path=None, overrides: dict | None = None) -> ExperimentConfig:
    """File values first, then non-None ``overrides`` (e.g. CLI flags)."""
    values = read_config_file(path) if path else {}
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return make_config(values)


# ---- models ---------------------------------------------------------------


def _family(scheme: str) -> str:
    return "nc-ea" if scheme.startswith("nc-ea") else scheme


def model_path(cfg: ExperimentConfig, scheme: str, n_ant: int, ebn0_db: float) -> Path:
    """Cache file of the model for one (scheme, L, SNR); DNN and ML share a model."""
    tc = cfg.train_config(scheme)
    n_tr = min(n_ant, tc.max_train_ant)
    mode = "avg" if n_ant > tc.max_train_ant else ""
    echo = repr((dataclasses.astuple(tc), cfg.lam if scheme.startswith("eama") else None, cfg.hidden))
    digest = hashlib.sha1(echo.encode()).hexdigest()[:10]
    j = f"J{cfg.J}-" if scheme.startswith("eama") else ""
    name = f"{_family(scheme)}-{j}N{cfg.N}-M{cfg.M}-L{n_tr}{mode}-{ebn0_db:g}dB-s{cfg.seed}-{digest}.model"
    return Path(cfg.model_dir) / name


def train_model(cfg: ExperimentConfig, scheme: str, n_ant: int, ebn0_db: float):
    tc = cfg.train_config(scheme)
    if scheme.startswith("nc-ea"):
        return train_nc_ea(cfg.N, cfg.M, n_ant, ebn0_db, tc, cfg.seed, hidden=cfg.hidden)
    direction = "uplink" if scheme == "eama-ul" else "downlink"
    return train_eama(direction, cfg.J, cfg.N, cfg.M, n_ant, ebn0_db, tc, cfg.seed, widths=cfg.hidden, lam=cfg.lam)


def get_model(cfg: ExperimentConfig, scheme: str, n_ant: int, ebn0_db: float):
    """Load the cached model, or train and cache it when ``cfg.train`` is set."""
    path = model_path(cfg, scheme, n_ant, ebn0_db)
    if path.exists():
        return load_model(path)
    if not cfg.train:
        raise MissingModelError(f"no trained model at {path}; rerun with --train to create it")
    log.info("training %s L=%d at %g dB -> %s", scheme, n_ant, ebn0_db, path)
    model = train_model(cfg, scheme, n_ant, ebn0_db)
    save_model(model, path)
    return load_model(path)  # use exactly what a later run will load


def build_scheme(cfg: ExperimentConfig, scheme: str, n_ant: int, ebn0_db: float):
    if scheme == "nc-ofdm-im":
        return build_im_codebook(cfg.N, cfg.K)
    if scheme == "pam-med":
        return PamScheme(cfg.N, cfg.D)
    if scheme == "oma-im":
        return oma_im(cfg.J, cfg.N, cfg.K)
    if scheme == "oma-pam":
        return oma_pam(cfg.J, cfg.N, cfg.D)
    model = get_model(cfg, scheme, n_ant, ebn0_db)
    if scheme == "nc-ea-ml":
        return model.with_decoder("ml")
    if scheme == "nc-ea-dnn":
        return model.with_decoder("dnn")
    return model


# ---- curves ---------------------------------------------------------------


@dataclass(frozen=True)
class CurvePoint:
    ebn0_db: float
    blocks: int
    errors: int
    user: str = "0"

    @property
    def bler(self) -> float:
        return self.errors / self.blocks

    @property
    def ci(self) -> tuple[float, float]:
        return wilson_interval(self.errors, self.blocks)


@dataclass
class BlerCurve:
    scheme: str
    n_ant: int
    params: dict
    points: list[CurvePoint] = field(default_factory=list)

    def series(self, user: str = "0") -> tuple[np.ndarray, np.ndarray]:
        pts = [p for p in self.points if p.user == user]
        return np.array([p.ebn0_db for p in pts]), np.array([p.bler for p in pts])


def _g(x) -> str:
    return "" if x is None else format(x, ".10g") if isinstance(x, float) else str(x)


def scheme_params(cfg: ExperimentConfig, scheme: str, system) -> dict:
    p = {"J": cfg.J if scheme in ("eama-ul", "eama-dl", "oma-im", "oma-pam") else 1, "N": cfg.N,
         "M": system.n_msg, "K": None, "D": None}
    if scheme in ("nc-ofdm-im", "oma-im"):
        p["K"] = cfg.K
    if scheme in ("pam-med", "oma-pam"):
        p["D"] = cfg.D
    return p


def evaluate_point(cfg: ExperimentConfig, system, n_ant: int, ebn0_db: float) -> list[CurvePoint]:
    errors = simulate_errors(system, ebn0_db, n_ant, cfg.blocks, cfg.seed, chunk=cfg.chunk, workers=cfg.workers)
    points = [CurvePoint(ebn0_db, cfg.blocks, int(e), str(j)) for j, e in enumerate(errors)]
    if len(points) > 1:
        points.append(CurvePoint(ebn0_db, cfg.blocks * len(points), int(np.sum(errors)), "all"))
    return points


def run_curve(cfg: ExperimentConfig, scheme: str, n_ant: int) -> BlerCurve:
    curve = None
    for db in cfg.ebn0_db:
        system = build_scheme(cfg, scheme, n_ant, db)
        if curve is None:
            curve = BlerCurve(scheme, n_ant, scheme_params(cfg, scheme, system))
        curve.points += evaluate_point(cfg, system, n_ant, db)
        log.info("%s L=%d %g dB: %s", scheme, n_ant, db, [p.bler for p in curve.points[-1:]])
    return curve


def write_curve_csv(curve: BlerCurve, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        p = curve.params
        for pt in curve.points:
            lo, hi = pt.ci
            w.writerow([curve.scheme, p["J"], _g(p["N"]), _g(p["M"]), _g(p["K"]), _g(p["D"]), curve.n_ant,
                        _g(float(pt.ebn0_db)), pt.blocks, pt.errors, _g(pt.bler), _g(lo), _g(hi), pt.user])
    return path


def read_curve_csv(path) -> list[dict]:
    with Path(path).open(newline="") as fh:
        return list(csv.DictReader(fh))


def run_experiment(cfg: ExperimentConfig) -> list[Path]:
    """Evaluate every (scheme, L) of ``cfg`` and write one CSV each (plus PNGs if ``cfg.plot``)."""
    cfg.validate()
    written = []
    for scheme in cfg.scheme:
        for n_ant in cfg.L:
            curve = run_curve(cfg, scheme, n_ant)
            path = write_curve_csv(curve, Path(cfg.out_dir) / f"{scheme}_L{n_ant}.csv")
            written.append(path)
            if cfg.plot:
                from .plotting import plot_bler_csv

                plot_bler_csv([path], path.with_suffix(".png"))
    if cfg.plot and len(written) > 1:
        from .plotting import plot_bler_csv

        plot_bler_csv(written, Path(cfg.out_dir) / "bler_all.png")
    return written


def snr_at_bler(ebn0_db, bler, target: float) -> float:
    """Eb/N0 where a BLER curve first falls to ``target``.

    Interpolates log10(BLER) linearly between the bracketing grid points.
    Returns ``-inf`` if the first point is already at or below ``target`` and
    ``inf`` if no point reaches it. Zero-error points count as reaching it.
    """
    x = np.asarray(ebn0_db, float)
    y = np.asarray(bler, float)
    if x.size == 0 or x.shape != y.shape:
        raise ValueError("need matching, nonempty SNR and BLER arrays")
    order = np.argsort(x)
    x, y = x[order], y[order]
    if y[0] <= target:
        return -math.inf
    for i in range(1, len(x)):
        if y[i] <= target:
            if y[i] == 0:
                return float(x[i])
            t = (math.log10(target) - math.log10(y[i - 1])) / (math.log10(y[i]) - math.log10(y[i - 1]))
            return float(x[i - 1] + t * (x[i] - x[i - 1]))
    return math.inf
