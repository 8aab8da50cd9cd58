"""INI experiment configuration."""

from __future__ import annotations

import configparser
import hashlib
from dataclasses import dataclass, field
from pathlib import Path

from .balancing import DEFAULT_GRID, RKHS_LEVELS, VARIANCE_LEVELS
from .dtr import FitConfig

KNOWN_METHODS = (
    "CC-CFBL", "CC-ACFBL", "EE-ACFBL", "All-ACFBL", "All-CFBL",
    "CC-QL(I)", "CC-QL(C)", "EE-QL(I)", "EE-QL(C)", "All-QL(I)", "All-QL(C)",
    "CC-OWL(L)",
)

SCENARIO_DEFAULTS = {
    "SIM1": {"rule_features": {1: ["X1_2"]}, "u": {}, "z": {},
             "owl_propensity": "1 + X1_1 + X1_2 + X1_1^2 + X1_2^2"},
    "SIM2": {"rule_features": {1: ["X1_2"], 2: ["A1", "X2_2"]}, "u": {1: ["X1_2"]}, "z": {1: ["X1_1", "A1"]},
             "owl_propensity": None},
}
SCENARIO_DEFAULTS["SIM3"] = SCENARIO_DEFAULTS["SIM2"]


class ConfigError(ValueError):
    """Unusable configuration; the message names the offending section/field."""


def _list(text: str) -> list[str]:
    return [s.strip() for s in text.replace("\n", ",").split(",") if s.strip()]


def _floats(text: str, where: str) -> list[float]:
    try:
        return [float(s) for s in _list(text)]
    except ValueError as exc:
        raise ConfigError(f"{where}: expected comma-separated numbers ({exc})") from None


def _staged(section, prefix: str) -> dict[int, list[str]]:
    out = {}
    for key, val in section.items():
        if key.startswith(prefix + "."):
            try:
                t = int(key.split(".", 1)[1])
            except ValueError:
                raise ConfigError(f"[{section.name}] {key}: stage suffix must be an integer") from None
            out[t] = _list(val)
    return out


def _lam(text: str, where: str):
    text = text.strip()
    if text.lower() == "auto":
        return "auto"
    try:
        v = float(text)
    except ValueError:
        raise ConfigError(f"{where}: expected 'auto' or a number, got {text!r}") from None
    if v < 0:
        raise ConfigError(f"{where}: must be nonnegative")
    return v


@dataclass
class ExperimentConfig:
    scenario: str
    n: int
    replications: int
    seed: int
    eval_n: int
    eval_seed: int
    alpha_ax: float | None
    data_path: Path | None
    combiner: str
    id_column: str | None
    methods: list[str]
    fit: FitConfig
    q_formulas: dict[int, tuple[str, str]]
    owl_propensity: str | None
    out_dir: Path
    record_wall_time: bool
    source_hash: str
    source_path: Path | None = None
    extra: dict = field(default_factory=dict)

    def seed_schedule(self) -> list[int]:
        return [self.seed + r for r in range(self.replications)]


def parse_config(text: str, source_path: Path | None = None, base_dir: Path | None = None) -> ExperimentConfig:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string(text, source=str(source_path or "<config>"))
    except configparser.Error as exc:
        raise ConfigError(f"unparseable config: {exc}") from None
    if not cp.has_section("scenario"):
        raise ConfigError("missing [scenario] section")
    if not cp.has_section("methods"):
        raise ConfigError("missing [methods] section")
    sc = cp["scenario"]

    def get_int(section, key, default=None, minimum=None):
        if key not in section:
            if default is None:
                raise ConfigError(f"[{section.name}] {key}: required")
            return default
        try:
            v = int(section[key])
        except ValueError:
            raise ConfigError(f"[{section.name}] {key}: expected an integer, got {section[key]!r}") from None
        if minimum is not None and v < minimum:
            raise ConfigError(f"[{section.name}] {key}: must be >= {minimum}")
        return v

    name = sc.get("name", "").strip().upper()
    if name not in ("SIM1", "SIM2", "SIM3", "FILE"):
        raise ConfigError(f"[scenario] name: expected SIM1, SIM2, SIM3 or FILE, got {sc.get('name')!r}")
    base_dir = base_dir or (source_path.parent if source_path else Path.cwd())
    data_path = None
    if name == "FILE":
        if "data" not in sc:
            raise ConfigError("[scenario] data: required when name = FILE")
        data_path = Path(sc["data"])
        if not data_path.is_absolute():
            data_path = base_dir / data_path
    n = get_int(sc, "n", 0 if name == "FILE" else None, minimum=0 if name == "FILE" else 10)
    alpha = None
    if name == "SIM3":
        if "alpha_ax" not in sc:
            raise ConfigError("[scenario] alpha_ax: required for SIM3")
        alpha = _floats(sc["alpha_ax"], "[scenario] alpha_ax")[0]
    combiner = sc.get("combiner", "sum").strip()
    if combiner not in ("sum", "last", "max"):
        raise ConfigError(f"[scenario] combiner: unknown combiner {combiner!r}")

    methods = _list(cp["methods"].get("names", ""))
    if not methods:
        raise ConfigError("[methods] names: at least one method required")
    for m in methods:
        if m not in KNOWN_METHODS:
            raise ConfigError(f"[methods] names: unknown method {m!r} (known: {', '.join(KNOWN_METHODS)})")
        if name == "FILE" and m.startswith("All-"):
            raise ConfigError(f"[methods] names: {m} needs simulated complete data")
    defaults = SCENARIO_DEFAULTS.get(name, {"rule_features": {}, "u": {}, "z": {}, "owl_propensity": None})
    mt = cp["methods"]
    q_main = _staged(mt, "ql_main")
    q_blip = _staged(mt, "ql_blip")
    if set(q_main) != set(q_blip):
        raise ConfigError("[methods] ql_main.* and ql_blip.* must name the same stages")
    q_formulas = {t: (mt[f"ql_main.{t}"], mt[f"ql_blip.{t}"]) for t in q_main}
    owl = mt.get("owl_propensity", defaults["owl_propensity"])

    tn = cp["tuning"] if cp.has_section("tuning") else {}
    tname = "[tuning]"
    rkhs = _floats(tn["balance_rkhs"], f"{tname} balance_rkhs") if "balance_rkhs" in tn else list(RKHS_LEVELS)
    var = _floats(tn["balance_var"], f"{tname} balance_var") if "balance_var" in tn else list(VARIANCE_LEVELS)
    if any(v <= 0 for v in rkhs + var):
        raise ConfigError(f"{tname} balance grids must be positive")
    grid = tuple((a, b) for a in rkhs for b in var) if ("balance_rkhs" in tn or "balance_var" in tn) else DEFAULT_GRID
    fixed = {}
    for key in tn:
        if key.startswith("balance_lam."):
            vals = _floats(tn[key], f"{tname} {key}")
            if len(vals) != 2 or min(vals) <= 0:
                raise ConfigError(f"{tname} {key}: expected two positive numbers")
            fixed[int(key.split(".")[1])] = (vals[0], vals[1])
    feats = _staged(cp["tuning"], "rule_features") if cp.has_section("tuning") else {}
    feats = feats or dict(defaults["rule_features"])
    if not feats:
        raise ConfigError(f"{tname} rule_features.<stage>: required for file cohorts")
    ins = cp["instruments"] if cp.has_section("instruments") else {}
    u = _staged(cp["instruments"], "u") if ins else {}
    z = _staged(cp["instruments"], "z") if ins else {}
    family = ins.get("family", "linear").strip() if ins else "linear"
    if family not in ("linear", "power", "log"):
        raise ConfigError(f"[instruments] family: unknown family {family!r}")
    fit = FitConfig(
        rule_features=feats,
        balance_grid=grid,
        balance_lam=fixed,
        spline_lam=_lam(tn.get("spline_lambda", "auto"), f"{tname} spline_lambda"),
        rule_lam=_lam(tn.get("rule_lambda", "auto"), f"{tname} rule_lambda"),
        u_columns=u or dict(defaults["u"]),
        z_columns=z or dict(defaults["z"]),
        gamma_family=family,
        gamma0=_floats(ins.get("gamma0", "1.0"), "[instruments] gamma0")[0] if ins else 1.0,
        cv_seed=get_int(cp["tuning"], "cv_seed", 0) if cp.has_section("tuning") else 0,
    )
    out = cp["output"] if cp.has_section("output") else {}
    out_dir = Path(out.get("dir", "results")) if out else Path("results")
    if not out_dir.is_absolute():
        out_dir = base_dir / out_dir
    wall = out.get("record_wall_time", "false").strip().lower() if out else "false"
    if wall not in ("true", "false", "yes", "no", "1", "0"):
        raise ConfigError(f"[output] record_wall_time: expected true/false, got {wall!r}")
    return ExperimentConfig(
        scenario=name,
        n=n,
        replications=get_int(sc, "replications", 1, minimum=1),
        seed=get_int(sc, "seed", 0),
        eval_n=get_int(sc, "eval_n", 100_000, minimum=1),
        eval_seed=get_int(sc, "eval_seed", 2_000_003),
        alpha_ax=alpha,
        data_path=data_path,
        combiner=combiner,
        id_column=sc.get("id_column", "id").strip() or None,
        methods=methods,
        fit=fit,
        q_formulas=q_formulas,
        owl_propensity=owl,
        out_dir=out_dir,
        record_wall_time=wall in ("true", "yes", "1"),
        source_hash=hashlib.sha256(text.encode()).hexdigest(),
        source_path=source_path,
    )


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, source_path=path)
