"""Batch experiment runner: config parsing, geometry resolution, sweeps, CSV.

A configuration is a flat set of lowercase snake_case keys (unknown keys are
rejected).  Geometry rules map each wavenumber to a subdomain grid, a coarse
grid, and a fine mesh; the fine resolution is snapped to the nearest multiple
of both so the box partition and the nested coarse space exist, and the
values actually used are echoed into every output row.

Rows are grouped so that preconditioners sharing local factorizations (same
family kind and shift) reuse one setup; the CSV is written in configuration
order regardless.
"""

from __future__ import annotations

import io
import time
from dataclasses import dataclass, field

import numpy as np

from .decomp import build_decomposition, impedance_dof_sets
from .fem import Coefficients, assemble, build_edge_space, gaussian_source
from .krylov import KrylovConfig, gmres
from .mesh import build_cube_mesh
from .precond import PreconditionerSpec, setup, _local_kind

__all__ = [
    "ExperimentConfig",
    "PRESETS",
    "RunRecord",
    "config_from_preset",
    "parse_config_file",
    "run_table",
]


class ConfigError(ValueError):
    pass


# preconditioner label -> (family, levels, coarse_correction)
PRECONDITIONERS = {
    "as1": ("as", "one", "additive"),
    "as2": ("as", "two", "additive"),
    "as-h": ("as", "two", "hybrid"),
    "as-adef1": ("as", "two", "adef1"),
    "ras1": ("ras", "one", "additive"),
    "ras2": ("ras", "two", "additive"),
    "hras": ("ras", "two", "hybrid"),
    "adef1": ("ras", "two", "adef1"),
    "impras1": ("impras", "one", "additive"),
    "impras2": ("impras", "two", "additive"),
    "imphras": ("impras", "two", "hybrid"),
    "impadef1": ("impras", "two", "adef1"),
}


def _parse_float_list(text):
    return [float(x) for x in str(text).split(",") if x != ""]


def _parse_int_list(text):
    return [int(x) for x in str(text).split(",") if x != ""]


def _parse_str_list(text):
    return [x.strip() for x in str(text).split(",") if x.strip()]


def _parse_bool(text):
    t = str(text).strip().lower()
    if t in ("true", "1", "yes"):
        return True
    if t in ("false", "0", "no"):
        return False
    raise ConfigError(f"expected a boolean, got {text!r}")


# key -> (parser, default)
KNOWN_KEYS = {
    "k_list": (_parse_float_list, [3.0, 4.0, 5.0, 6.0, 7.0, 8.0]),
    "xi_prob": (str, "k2"),
    "xi_prec": (str, "k2"),
    "bc": (str, "pec"),
    "fine_rule": (str, "list"),
    "fine_g": (float, 10.0),
    "fine_c": (float, 1.0),
    "fine_list": (_parse_int_list, [10, 10, 12, 12, 12, 12]),
    "coarse_rule": (str, "list"),
    "coarse_alpha": (float, 1.0),
    "coarse_c": (float, 0.5),
    "coarse_g": (float, 3.0),
    "coarse_list": (_parse_int_list, [2, 2, 3, 3, 4, 4]),
    "sub_rule": (str, "list"),
    "sub_alpha": (float, 1.0),
    "sub_c": (float, 1.0),
    "sub_list": (_parse_int_list, [5, 5, 6, 6, 6, 6]),
    "overlap_layers": (int, 2),
    "preconditioners": (_parse_str_list, ["as2", "as1"]),
    "hybrid_matrix": (str, "prob"),
    "gmres_tol": (float, 1e-6),
    "gmres_maxit": (int, 200),
    "gmres_weight": (str, "identity"),
    "gmres_side": (str, "right"),
    "initial_guess": (str, "random"),
    "heterogeneity": (str, "none"),
    "incl_box": (_parse_float_list, [0.25, 0.75, 0.25, 0.75, 0.25, 0.75]),
    "incl_eps": (float, 1.0),
    "incl_mu": (float, 1.0),
    "incl_sigma_over_k": (float, 0.0),
    "bg_eps": (float, 1.0),
    "bg_mu": (float, 1.0),
    "bg_sigma_over_k": (float, 0.0),
    "out": (str, ""),
    "seed": (int, 3),
    "times": (_parse_bool, True),
    "lu_cap": (int, 4000),
}


@dataclass
class ExperimentConfig:
    values: dict

    def __getattr__(self, key):
        try:
            return self.values[key]
        except KeyError:
            raise AttributeError(key)


def _build_config(raw: dict) -> ExperimentConfig:
    values = {key: default for key, (_, default) in KNOWN_KEYS.items()}
    for key, val in raw.items():
        if key not in KNOWN_KEYS:
            raise ConfigError(f"unknown configuration key {key!r}")
        parser = KNOWN_KEYS[key][0]
        # presets carry typed values; file/CLI values arrive as strings
        values[key] = parser(val) if isinstance(val, str) else val
    cfg = ExperimentConfig(values=values)
    _validate(cfg)
    return cfg


def _validate(cfg: ExperimentConfig):
    if cfg.bc not in ("pec", "impedance"):
        raise ConfigError(f"bc must be pec or impedance, got {cfg.bc!r}")
    for label in cfg.preconditioners:
        if label not in PRECONDITIONERS:
            raise ConfigError(f"unknown preconditioner {label!r}")
    for rule, options in [
        ("fine_rule", ("gpw", "pow32", "list")),
        ("coarse_rule", ("alpha", "gpw", "list", "none")),
        ("sub_rule", ("alpha", "list")),
    ]:
        if cfg.values[rule] not in options:
            raise ConfigError(f"{rule} must be one of {options}")
    if cfg.heterogeneity not in ("none", "inclusion"):
        raise ConfigError(f"heterogeneity must be none or inclusion")
    if len(cfg.incl_box) != 6:
        raise ConfigError("incl_box needs six numbers: x0,x1,y0,y1,z0,z1")


def parse_config_file(path: str) -> dict:
    raw = {}
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, val = line.split("=", 1)
            raw[key.strip()] = val.strip()
    return raw


# ---------------------------------------------------------------------------
# presets


PRESETS = {
    # conducting boundary, strong absorption, generous overlap; the subdomain
    # grid tracks the wavenumber up to the dense-factor memory cap
    "table1": {},
    # minimal overlap
    "table2": {"overlap_layers": 1},
    # low absorption
    "table3": {"xi_prob": "k", "xi_prec": "k"},
    # weighted residual minimization
    "table4": {"gmres_weight": "dk"},
    # partition-of-unity and coarse-correction variants
    "table6": {"preconditioners": ["as2", "ras1", "ras2", "hras", "adef1"]},
    # heterogeneous cube: metallic walls, conductive background, and a
    # non-conductive slab inclusion spanning the domain
    "medimax-cube": {
        "k_list": [5.0],
        "bc": "pec",
        "xi_prob": "zero",
        "xi_prec": "zero",
        "fine_list": [16],
        "sub_list": [16],
        "coarse_list": [8],
        "overlap_layers": 1,
        "preconditioners": ["imphras", "impras1"],
        "heterogeneity": "inclusion",
        "incl_box": [0.0, 1.0, 0.0, 1.0, 0.25, 0.75],
        "incl_sigma_over_k": 0.0,
        "bg_sigma_over_k": 1.0,
        "initial_guess": "random",
        "seed": 7,
        "lu_cap": 5000,
    },
}


def config_from_preset(preset: str | None = None, file_raw: dict | None = None, overrides: dict | None = None) -> ExperimentConfig:
    if preset is not None and preset not in PRESETS and preset != "abs-error":
        raise ConfigError(f"unknown preset {preset!r}; available: {sorted(PRESETS)} + ['abs-error']")
    raw = {}
    if preset is not None and preset != "abs-error":
        raw.update(PRESETS[preset])
    if file_raw:
        raw.update(file_raw)
    if overrides:
        raw.update(overrides)
    return _build_config(raw)


# ---------------------------------------------------------------------------
# geometry resolution


def _resolve_xi(rule: str, k: float) -> float:
    if rule == "k2":
        return k * k
    if rule == "k":
        return k
    if rule == "zero":
        return 0.0
    return float(rule)


def _per_k(lst, idx, what):
    if idx >= len(lst):
        raise ConfigError(f"{what} list is shorter than k_list")
    return lst[idx]


@dataclass
class CaseGeometry:
    k: float
    n: int
    p_axis: int
    n_coarse: int  # 0 when no coarse space
    layers: int


def resolve_geometry(cfg: ExperimentConfig, k: float, idx: int) -> CaseGeometry:
    # subdomain grid
    if cfg.sub_rule == "list":
        p = int(_per_k(cfg.sub_list, idx, "sub_list"))
    else:
        p = max(1, round(cfg.sub_c * k**cfg.sub_alpha))

    # coarse grid
    needs_coarse = any(PRECONDITIONERS[l][1] == "two" for l in cfg.preconditioners)
    if cfg.coarse_rule == "none":
        if needs_coarse:
            raise ConfigError("two-level preconditioners require a coarse rule")
        nc = 0
    elif cfg.coarse_rule == "list":
        nc = int(_per_k(cfg.coarse_list, idx, "coarse_list"))
    elif cfg.coarse_rule == "gpw":
        nc = max(1, round(cfg.coarse_g * k / (2.0 * np.pi)))
    else:  # alpha
        nc = max(1, round(cfg.coarse_c * k**cfg.coarse_alpha))

    # fine grid target, snapped to the nearest admissible resolution
    if cfg.fine_rule == "list":
        target = int(_per_k(cfg.fine_list, idx, "fine_list"))
    elif cfg.fine_rule == "gpw":
        target = cfg.fine_g * k / (2.0 * np.pi)
    else:  # pow32
        target = cfg.fine_c * k**1.5
    step = int(np.lcm(p, nc)) if nc else p
    n = max(step, step * round(target / step))

    return CaseGeometry(k=k, n=n, p_axis=p, n_coarse=nc, layers=cfg.overlap_layers)


# ---------------------------------------------------------------------------
# run records


CSV_HEADER = (
    "k,n,n_sub,n_cs,xi_prob,xi_prec,preconditioner,iterations,converged,"
    "setup_time_s,gmres_time_s,final_relative_residual,seed,h,h_coarse,h_sub,layers"
)


@dataclass
class RunRecord:
    k: float
    n: int
    n_sub: int
    n_cs: int
    xi_prob: float
    xi_prec: float
    preconditioner: str
    iterations: int
    converged: bool
    setup_time_s: float
    gmres_time_s: float
    final_relative_residual: float
    seed: int
    h: float
    h_coarse: float
    h_sub: float
    layers: int

    def csv_row(self, times: bool = True) -> str:
        setup = self.setup_time_s if times else 0.0
        solve = self.gmres_time_s if times else 0.0
        return (
            f"{self.k:.10g},{self.n},{self.n_sub},{self.n_cs},"
            f"{self.xi_prob:.10g},{self.xi_prec:.10g},{self.preconditioner},"
            f"{self.iterations},{int(self.converged)},"
            f"{setup:.6f},{solve:.6f},{self.final_relative_residual:.6e},"
            f"{self.seed},{self.h:.10g},{self.h_coarse:.10g},{self.h_sub:.10g},{self.layers}"
        )


def _coefficients(cfg: ExperimentConfig, mesh, k: float, xi: float) -> Coefficients:
    if cfg.heterogeneity == "none":
        if cfg.bg_eps == 1.0 and cfg.bg_mu == 1.0 and cfg.bg_sigma_over_k == 0.0:
            return Coefficients(k=k, xi=xi)
        nt = mesh.n_tets
        return Coefficients(
            k=k,
            xi=xi,
            eps=np.full(nt, cfg.bg_eps),
            mu=np.full(nt, cfg.bg_mu),
            sigma=np.full(nt, cfg.bg_sigma_over_k * k),
        )
    nt = mesh.n_tets
    eps = np.full(nt, cfg.bg_eps)
    mu = np.full(nt, cfg.bg_mu)
    sigma = np.full(nt, cfg.bg_sigma_over_k * k)
    x0, x1, y0, y1, z0, z1 = cfg.incl_box
    b = mesh.barycenters()
    inside = (
        (b[:, 0] >= x0) & (b[:, 0] <= x1)
        & (b[:, 1] >= y0) & (b[:, 1] <= y1)
        & (b[:, 2] >= z0) & (b[:, 2] <= z1)
    )
    eps[inside] = cfg.incl_eps
    mu[inside] = cfg.incl_mu
    sigma[inside] = cfg.incl_sigma_over_k * k
    return Coefficients(k=k, xi=xi, eps=eps, mu=mu, sigma=sigma)


def _sizing_precheck(cfg: ExperimentConfig, space, decomp, needs_impedance: bool):
    """Refuse runs whose dense blocks would exceed the factor cap."""
    sizes = [len(d) for d in decomp.dofs]
    if needs_impedance:
        sizes += [len(d) for d in impedance_dof_sets(space, decomp.elements)]
    if decomp.coarse is not None:
        sizes.append(decomp.coarse.space.ndof)
    worst = max(sizes)
    if worst > cfg.lu_cap:
        raise ConfigError(
            f"infeasible: largest dense block has {worst} rows "
            f"(~{worst * worst * 16 / 1e6:.0f} MB) but lu_cap={cfg.lu_cap}; "
            f"reduce the overlap/subdomain size or raise lu_cap"
        )


def run_table(cfg: ExperimentConfig, out=None):
    """Run every (k, preconditioner) cell; returns records and CSV text."""
    records = {}
    for idx, k in enumerate(cfg.k_list):
        geo = resolve_geometry(cfg, k, idx)
        xi_prob = _resolve_xi(cfg.xi_prob, k)
        xi_prec = _resolve_xi(cfg.xi_prec, k)

        mesh = build_cube_mesh(geo.n)
        space = build_edge_space(mesh, cfg.bc)
        coeffs = _coefficients(cfg, mesh, k, xi_prob)
        problem = assemble(space, coeffs, source=gaussian_source)
        coarse_space = (
            build_edge_space(build_cube_mesh(geo.n_coarse), cfg.bc) if geo.n_coarse else None
        )
        decomp = build_decomposition(space, geo.p_axis, geo.layers, coarse_space=coarse_space)
        needs_imp = any(PRECONDITIONERS[l][0] == "impras" for l in cfg.preconditioners)
        _sizing_precheck(cfg, space, decomp, needs_imp)

        # group rows by shared factorizations
        groups = {}
        for label in cfg.preconditioners:
            family, levels, corr = PRECONDITIONERS[label]
            spec = PreconditionerSpec(
                family=family,
                levels=levels,
                coarse_correction=corr,
                xi_prec=xi_prec,
                side=cfg.gmres_side,
                hybrid_matrix=cfg.hybrid_matrix,
            )
            groups.setdefault(_local_kind(spec), []).append((label, spec))

        weight = problem.Dk if cfg.gmres_weight == "dk" else None
        for kind, rows in groups.items():
            # set up once per kind, with a coarse factor if any row needs it
            anchor = next((s for _, s in rows if s.levels == "two"), rows[0][1])
            state = setup(problem, decomp, anchor, lu_cap=cfg.lu_cap)
            for label, spec in rows:
                st = state if spec == anchor else state.variant(spec)
                kcfg = KrylovConfig(
                    tol=cfg.gmres_tol,
                    maxit=cfg.gmres_maxit,
                    weight=weight,
                    side=cfg.gmres_side,
                    initial_guess=cfg.initial_guess,
                    seed=cfg.seed,
                )
                report = gmres(problem.A, problem.rhs, precond=st.apply, config=kcfg)
                final_rel = float(report.residual_history[-1])
                records[(k, label)] = RunRecord(
                    k=k,
                    n=space.ndof,
                    n_sub=decomp.n_subdomains,
                    n_cs=coarse_space.ndof if coarse_space is not None else 0,
                    xi_prob=xi_prob,
                    xi_prec=xi_prec,
                    preconditioner=label,
                    iterations=report.iterations,
                    converged=report.converged,
                    setup_time_s=state.setup_time_s,
                    gmres_time_s=report.gmres_time_s,
                    final_relative_residual=final_rel,
                    seed=cfg.seed,
                    h=mesh.h,
                    h_coarse=coarse_space.mesh.h if coarse_space is not None else 0.0,
                    h_sub=decomp.H_sub,
                    layers=geo.layers,
                )
            del state

    # rows in configuration order
    ordered = [
        records[(k, label)]
        for k in cfg.k_list
        for label in cfg.preconditioners
        if (k, label) in records
    ]
    buf = io.StringIO()
    buf.write(CSV_HEADER + "\n")
    for rec in ordered:
        buf.write(rec.csv_row(times=cfg.times) + "\n")
    csv_text = buf.getvalue()
    if out or cfg.out:
        path = out or cfg.out
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.write(csv_text)
    return ordered, csv_text
