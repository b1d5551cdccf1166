"""TOML experiment/model configs and their validation.

Schema (see README for the full key reference):

    [model]      dim, mark_dim, mu, alpha | m, beta ("*" marks a decay with
                 no defined value, allowed only on zero-excitation edges)
    [mark]       kind = "none" | "dirichlet", alpha = [..]
    [bounds]     mu/alpha/beta/m = [lo, hi]
    [hyper]      q, gamma, a
    [experiment] horizons, trials, methods, base_seed, fix_beta, restarts
    [elastic_net] c, rho
"""

from __future__ import annotations

from dataclasses import dataclass, field
import numpy as np

try:
    import tomllib  # Python >= 3.11
except ModuleNotFoundError:  # pragma: no cover - depends on interpreter
    import tomli as tomllib

from .marks import DirichletMarks, MarkKernel, NoMarks
from .model import ModelError, ModelParams, ParamBounds, ScalarExpKernel
from .po import PoHyper

VALID_METHODS = ("qmle", "po", "elastic_net")


class ConfigError(ValueError):
    """Malformed or inconsistent configuration."""


@dataclass(frozen=True)
class ElasticNetConfig:
    c: float = 5e-4
    rho: float = 0.05

    def __post_init__(self):
        if self.c < 0 or not 0.0 <= self.rho <= 1.0:
            raise ConfigError("elastic net needs c >= 0 and rho in [0, 1]")


@dataclass(frozen=True)
class ExperimentConfig:
    params: ModelParams
    mark_kernel: MarkKernel
    horizons: tuple
    trials: int
    hyper: PoHyper
    methods: tuple
    base_seed: int = 0
    fix_beta: bool = False
    restarts: int = 0
    elastic_net: ElasticNetConfig = field(default_factory=ElasticNetConfig)
    max_expected_events: float = 1e7

    def __post_init__(self):
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        hs = tuple(float(t) for t in self.horizons)
        if not hs or any(t <= 0 for t in hs) or list(hs) != sorted(hs):
            raise ConfigError("horizons must be positive and ascending")
        object.__setattr__(self, "horizons", hs)
        ms = tuple(self.methods)
        if not ms or any(m not in VALID_METHODS for m in ms):
            raise ConfigError(f"methods must be a non-empty subset of {VALID_METHODS}")
        object.__setattr__(self, "methods", ms)
        if "elastic_net" in ms:
            if self.params.mark_dim:
                raise ConfigError("elastic net applies to unmarked models only")
            if not self.fix_beta:
                raise ConfigError("elastic net requires fix_beta = true (decays given)")
        if self.fix_beta and self.params.beta_nuisance is not None and np.any(
            self.params.beta_nuisance
        ):
            raise ConfigError('fix_beta needs every decay given numerically (no "*")')


def _as_matrix(raw, d, name) -> np.ndarray:
    arr = np.asarray(raw, float)
    if arr.shape != (d, d):
        raise ConfigError(f"{name} must be a {d}x{d} matrix")
    return arr


def parse_model(doc: dict) -> tuple[ModelParams, MarkKernel]:
    """Build the truth model and mark kernel from a parsed config dict."""
    try:
        model = doc["model"]
        d = int(model["dim"])
        mu = np.asarray(model["mu"], float)
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"missing or malformed [model] section: {exc}") from exc
    if mu.shape != (d,):
        raise ConfigError(f"mu must have {d} entries")
    mark_dim = int(model.get("mark_dim", 0))

    raw_beta = model.get("beta")
    if raw_beta is None:
        raise ConfigError("[model] needs a beta matrix")
    beta = np.empty((d, d))
    nuisance = np.zeros((d, d), bool)
    for i, row in enumerate(raw_beta):
        if len(row) != d or i >= d:
            raise ConfigError(f"beta must be a {d}x{d} matrix")
        for j, v in enumerate(row):
            if isinstance(v, str):
                if v.strip() != "*":
                    raise ConfigError(f"beta[{i}][{j}]: only '*' marks an undefined decay")
                nuisance[i, j] = True
                beta[i, j] = 1.0  # placeholder, never consumed
            else:
                beta[i, j] = float(v)
    if len(raw_beta) != d:
        raise ConfigError(f"beta must be a {d}x{d} matrix")

    bounds_raw = doc.get("bounds", {})
    defaults = ParamBounds()
    try:
        bounds = ParamBounds(
            mu=tuple(bounds_raw.get("mu", defaults.mu)),
            alpha=tuple(bounds_raw.get("alpha", defaults.alpha)),
            beta=tuple(bounds_raw.get("beta", defaults.beta)),
            m=tuple(bounds_raw.get("m", defaults.m)),
        )
    except (ModelError, TypeError) as exc:
        raise ConfigError(f"bad [bounds]: {exc}") from exc

    mark = doc.get("mark", {"kind": "none" if mark_dim == 0 else "dirichlet"})
    kind = mark.get("kind", "none")
    if kind == "none":
        if mark_dim:
            raise ConfigError("mark_dim > 0 needs a mark kernel")
        kernel_marks: MarkKernel = NoMarks()
    elif kind == "dirichlet":
        conc = np.asarray(mark.get("alpha", []), float)
        if conc.size != mark_dim:
            raise ConfigError("mark.alpha length must equal mark_dim")
        kernel_marks = DirichletMarks(conc)
    else:
        raise ConfigError(f"unknown mark kind {kind!r} (expected none|dirichlet)")

    try:
        if mark_dim:
            if "m" not in model:
                raise ConfigError("marked model needs the m weights")
            m = np.asarray(model["m"], float)
            if m.shape != (d, d, mark_dim):
                raise ConfigError(f"m must be {d}x{d}x{mark_dim}")
            params = ModelParams(
                mu=mu,
                kernel=ScalarExpKernel(beta=beta),
                mark_weights=m,
                beta_nuisance=nuisance if nuisance.any() else None,
                bounds=bounds,
            )
        else:
            if "alpha" not in model:
                raise ConfigError("unmarked model needs the alpha matrix")
            alpha = _as_matrix(model["alpha"], d, "alpha")
            params = ModelParams(
                mu=mu,
                kernel=ScalarExpKernel(beta=beta, alpha=alpha),
                beta_nuisance=nuisance if nuisance.any() else None,
                bounds=bounds,
            )
    except ModelError as exc:
        raise ConfigError(f"invalid model: {exc}") from exc
    return params, kernel_marks


def parse_config(doc: dict) -> ExperimentConfig:
    params, kernel = parse_model(doc)
    hyper_raw = doc.get("hyper", {})
    try:
        hyper = PoHyper(
            q=float(hyper_raw.get("q", 1.0)),
            gamma=float(hyper_raw.get("gamma", 1.0)),
            a=float(hyper_raw.get("a", 0.5)),
        )
    except ModelError as exc:
        raise ConfigError(f"bad [hyper]: {exc}") from exc
    exp = doc.get("experiment", {})
    en_raw = doc.get("elastic_net", {})
    en = ElasticNetConfig(
        c=float(en_raw.get("c", ElasticNetConfig.c)),
        rho=float(en_raw.get("rho", ElasticNetConfig.rho)),
    )
    return ExperimentConfig(
        params=params,
        mark_kernel=kernel,
        horizons=tuple(exp.get("horizons", (100.0, 500.0, 3000.0))),
        trials=int(exp.get("trials", 100)),
        hyper=hyper,
        methods=tuple(exp.get("methods", ("qmle", "po"))),
        base_seed=int(exp.get("base_seed", 0)),
        fix_beta=bool(exp.get("fix_beta", False)),
        restarts=int(exp.get("restarts", 0)),
        elastic_net=en,
        max_expected_events=float(exp.get("max_expected_events", 1e7)),
    )


def load_config(path) -> ExperimentConfig:
    with open(path, "rb") as fh:
        try:
            doc = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"cannot parse {path}: {exc}") from exc
    return parse_config(doc)


def _toml_scalar(v) -> str:
    if isinstance(v, str):
        return f'"{v}"'
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.17g}"


def model_to_toml(params: ModelParams, mark_kernel: MarkKernel) -> str:
    """Serialize a model back to the [model]/[mark]/[bounds] TOML sections.

    Decays flagged nuisance are written as the literal string "*".
    """
    if not isinstance(params.kernel, ScalarExpKernel):
        raise ModelError("TOML serialization covers scalar kernels")
    d = params.dim
    lines = ["[model]", f"dim = {d}"]
    if params.mark_dim:
        lines.append(f"mark_dim = {params.mark_dim}")
    lines.append("mu = [" + ", ".join(_toml_scalar(v) for v in params.mu) + "]")
    if params.mark_dim:
        rows = []
        for i in range(d):
            cells = [
                "[" + ", ".join(_toml_scalar(v) for v in params.mark_weights[i, j]) + "]"
                for j in range(d)
            ]
            rows.append("[" + ", ".join(cells) + "]")
        lines.append("m = [" + ", ".join(rows) + "]")
    else:
        rows = [
            "[" + ", ".join(_toml_scalar(v) for v in params.kernel.alpha[i]) + "]"
            for i in range(d)
        ]
        lines.append("alpha = [" + ", ".join(rows) + "]")
    mask = (
        params.beta_nuisance
        if params.beta_nuisance is not None
        else np.zeros((d, d), bool)
    )
    rows = []
    for i in range(d):
        cells = [
            '"*"' if mask[i, j] else _toml_scalar(params.kernel.beta[i, j])
            for j in range(d)
        ]
        rows.append("[" + ", ".join(cells) + "]")
    lines.append("beta = [" + ", ".join(rows) + "]")
    lines.append("")
    lines.append("[mark]")
    if isinstance(mark_kernel, DirichletMarks):
        lines.append('kind = "dirichlet"')
        lines.append(
            "alpha = [" + ", ".join(_toml_scalar(v) for v in mark_kernel.concentration) + "]"
        )
    else:
        lines.append('kind = "none"')
    b = params.bounds
    lines += [
        "",
        "[bounds]",
        f"mu = [{_toml_scalar(b.mu[0])}, {_toml_scalar(b.mu[1])}]",
        f"alpha = [{_toml_scalar(b.alpha[0])}, {_toml_scalar(b.alpha[1])}]",
        f"beta = [{_toml_scalar(b.beta[0])}, {_toml_scalar(b.beta[1])}]",
        f"m = [{_toml_scalar(b.m[0])}, {_toml_scalar(b.m[1])}]",
        "",
    ]
    return "\n".join(lines)
