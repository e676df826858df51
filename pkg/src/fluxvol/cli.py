"""Command-line front end.

Subcommands:

* ``volume``       -- one volume computation (any method, any interval),
                      CSV profile + JSON metadata sidecar.
* ``table``        -- reproduce the benchmark comparison tables (volume
                      and relative-error columns; runtimes reported but
                      never asserted).
* ``diagnostics``  -- per-region CSV of return times T(Psi), running
                      averages <T>_N, and harmonic-average convergence
                      1/rho_hat vs the subdivision order q.
* ``check``        -- run the invariant suite (conservation laws, chart
                      round-trips, commutators, grid convergence).

Configuration is a flat ``key = value`` text file; command-line flags
override file values.  Exit codes: 0 success, 1 configuration error,
2 numerical failure in asserted mode.
"""

import argparse
import json
import math
import sys
import time

import numpy as np

from . import __version__, surfaces, tracer, volume
from .coords import adapted_of_symplectic
from .fields import AxisymmetricField, HelicalField
from .surfaces import Region

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 1, 2

_CONFIG_KEYS = {
    "field": str, "C": float, "r0": float,
    "eps": float, "w1": float, "w2": float, "B0": float, "R0": float,
    "m": int, "n_mode": int, "zeta": float,
    "method": str, "region": str,
    "psi": float, "psi1": float, "psi2": float,
    "n": int, "n1": int, "n2": int, "ng": int,
    "center1": float, "center2": float, "half1": float, "half2": float,
    "q": int, "n_avg": int,
    "rel_tol": float, "abs_tol": float,
    "out": str, "seed": int, "reference": bool,
}


class ConfigError(Exception):
    pass


def parse_config_file(path):
    cfg = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, val = (s.strip() for s in line.split("=", 1))
            if key not in _CONFIG_KEYS:
                raise ConfigError(f"{path}:{lineno}: unknown key '{key}'")
            typ = _CONFIG_KEYS[key]
            try:
                cfg[key] = (val.lower() in ("1", "true", "yes")) if typ is bool else typ(val)
            except ValueError:
                raise ConfigError(f"{path}:{lineno}: bad value for '{key}': {val!r}")
    return cfg


def serialize_config(cfg):
    return "".join(f"{k} = {cfg[k]}\n" for k in sorted(cfg))


def build_field(cfg):
    kind = cfg.get("field", "helical")
    if kind == "axisym":
        return AxisymmetricField(C=cfg.get("C", 1.0), r0=cfg.get("r0", 0.95))
    if kind == "helical":
        return HelicalField(w1=cfg.get("w1", 0.25), w2=cfg.get("w2", 1.0),
                            B0=cfg.get("B0", 1.0), R0=cfg.get("R0", 2.0),
                            m=cfg.get("m", 2), n=cfg.get("n_mode", 1),
                            eps=cfg.get("eps", 0.007), zeta=cfg.get("zeta", 0.0))
    raise ConfigError(f"unknown field '{kind}' (expected axisym or helical)")


def _region_of(name):
    try:
        return Region(name)
    except ValueError:
        raise ConfigError(f"unknown region '{name}'")


def _fmt(x):
    if x is None or (isinstance(x, float) and not math.isfinite(x)):
        return "nan"
    return f"{x:.17g}"


def write_csv(path, header, rows):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(v if isinstance(v, str) else _fmt(v) for v in row) + "\n")


def write_meta(path, meta):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")


# ---------------------------------------------------------------------------
# volume
# ---------------------------------------------------------------------------

def cmd_volume(cfg):
    field = build_field(cfg)
    method = cfg.get("method")
    if method not in ("grid", "contour", "thm1", "thm3p", "thm4"):
        raise ConfigError(f"unknown or missing method '{method}'")
    psi1 = cfg.get("psi1", 0.0)
    psi2 = cfg.get("psi2", cfg.get("psi"))
    if psi2 is None:
        raise ConfigError("missing key 'psi2' (or 'psi')")
    region = _region_of(cfg["region"]) if "region" in cfg else None
    out = cfg.get("out", "volume")
    t0 = time.time()

    crit = None
    if field.chart == "adapted":
        crit = surfaces.find_critical_points(field)
        if region is None and method != "grid":
            raise ConfigError("helical ladder methods need a 'region'")
        if region is Region.ISLAND:
            psi1 = max(psi1, crit.psi_o) if psi1 else crit.psi_o

    if psi1 == psi2:
        print(f"V = 0 (empty Psi interval) method={method}")
        write_csv(out + ".csv", ["method", "region", "Psi", "dVdPsi", "V_cum"],
                  [(method, region.value if region else "all", psi2, float("nan"), 0.0)])
        write_meta(out + ".json", dict(config=cfg, V=0.0, warning="empty interval",
                                       version=__version__))
        return EXIT_OK

    if method == "grid":
        default_ext = (0.9, 0.9) if field.chart == "cylindrical" else (0.9, 0.8)
        default_ctr = (1.0, 0.0) if field.chart == "cylindrical" else (0.0, 0.0)
        grid = volume.GridSpec(
            center=(cfg.get("center1", default_ctr[0]), cfg.get("center2", default_ctr[1])),
            half_extents=(cfg.get("half1", default_ext[0]), cfg.get("half2", default_ext[1])),
            counts=(cfg.get("n1", 300), cfg.get("n2", cfg.get("n1", 300))))
        V = volume.volume_grid(field, psi1, psi2, grid, region=region, crit=crit)
        rows = [(method, region.value if region else "all", psi2, float("nan"), V)]
        meta = dict(config=cfg, grid=dict(center=grid.center, half_extents=grid.half_extents,
                                          counts=grid.counts), V=V)
    else:
        prof = volume.profile(field, method, psi1, psi2, cfg.get("n", 100),
                              region=region, crit=crit,
                              q=cfg.get("q", 6), n_avg=cfg.get("n_avg", 10),
                              N_g=cfg.get("ng", 100),
                              rel_tol=cfg.get("rel_tol", 1e-10),
                              abs_tol=cfg.get("abs_tol", 1e-12))
        V = prof.total
        rows = [(prof.method, prof.region, P, dv, vc)
                for P, dv, vc in zip(prof.Psi, prof.dVdPsi, prof.V_cum)]
        meta = dict(config=cfg, V=V, profile_meta=prof.meta)

    meta.update(runtime_s=time.time() - t0, version=__version__)
    write_csv(out + ".csv", ["method", "region", "Psi", "dVdPsi", "V_cum"], rows)
    write_meta(out + ".json", meta)
    line = f"V = {V:.6f}  method={method}"
    if cfg.get("reference") and field.chart == "cylindrical":
        ve = field.exact_volume(abs(psi2))
        line += f"  exact={ve:.6f}  rel_err={abs(V - ve) / ve:.2e}"
    print(line)
    return EXIT_OK


# ---------------------------------------------------------------------------
# tables
# ---------------------------------------------------------------------------

TABLE1_ROWS = [
    # (R1, Psi, methods: (label, N1, N2 or None))
    (1.2, 0.020, [("grid", 300, 300), ("contour", 50, 50), ("thm1", 20, None)]),
    (1.4, 0.080, [("grid", 200, 200), ("contour", 50, 50), ("thm1", 20, None)]),
    (1.6, 0.180, [("grid", 200, 200), ("contour", 50, 50), ("thm1", 20, None)]),
    (1.8, 0.320, [("grid", 200, 200), ("contour", 50, 50), ("thm1", 20, None)]),
]


def table2_intervals(field, crit):
    """The six benchmark intervals, bounded by the surfaces through the
    quoted section points (the tabulated Psi values are rounded labels)."""
    P = field.psi_label_section
    sep_anchor = float(P(0.66345, 0.0))
    return [
        dict(name="inner_small", region=Region.INNER, psi1=0.0, psi2=float(P(0.150, 0.0))),
        dict(name="inner_large", region=Region.INNER, psi1=0.0, psi2=float(P(0.320, 0.0))),
        dict(name="island_small", region=Region.ISLAND, psi1=crit.psi_o, psi2=float(P(0.550, 0.0))),
        dict(name="island_large", region=Region.ISLAND, psi1=crit.psi_o, psi2=float(P(0.662, 0.0))),
        dict(name="outer_small", region=Region.OUTER, psi1=sep_anchor, psi2=float(P(0.670, 0.0))),
        dict(name="outer_large", region=Region.OUTER, psi1=sep_anchor, psi2=float(P(0.780, 0.0))),
    ]


TABLE2_GRIDS = {
    Region.INNER: dict(half_extents=(0.335, 0.47), counts=(300, 300)),
    Region.ISLAND: dict(half_extents=(0.9, 0.8), counts=(500, 500)),
    Region.OUTER: dict(half_extents=(0.9, 0.8), counts=(600, 600)),
}
TABLE2_NG = {  # (N_psi, N_g) of the contour method per interval name
    "inner_small": (100, 100), "inner_large": (100, 100),
    "island_small": (100, 100), "island_large": (100, 150),
    "outer_small": (100, 100), "outer_large": (100, 100),
}


def run_table1(out=None, rel_tol=1e-10):
    field = AxisymmetricField()
    rows = []
    for R1, Psi, methods in TABLE1_ROWS:
        Ve = field.exact_volume(Psi)
        for label, N1, N2 in methods:
            t0 = time.time()
            if label == "grid":
                grid = volume.GridSpec(center=(1.0, 0.0), half_extents=(0.9, 0.9),
                                       counts=(N1, N2))
                V = volume.volume_grid(field, 0.0, Psi, grid)
            elif label == "contour":
                V = volume.profile(field, "contour", 0.0, Psi, N1, N_g=N2,
                                   rel_tol=rel_tol).total
            else:
                V = volume.profile(field, "thm1", 0.0, Psi, N1, rel_tol=rel_tol).total
            rows.append((label, R1, Psi, Ve, N1, N2 if N2 else float("nan"), V,
                         abs(V - Ve) / Ve, time.time() - t0))
    header = ["method", "R1", "Psi", "V_exact", "N1", "N2", "V0", "rel_err", "runtime_s"]
    if out:
        write_csv(out + ".csv", header, rows)
        write_meta(out + ".json", dict(table="table1", version=__version__))
    return header, rows


def run_table2(out=None, rel_tol=1e-9, n_ref=400):
    field = HelicalField()
    crit = surfaces.find_critical_points(field)
    rows = []
    for spec in table2_intervals(field, crit):
        name, region = spec["name"], spec["region"]
        psi1, psi2 = spec["psi1"], spec["psi2"]
        t0 = time.time()
        v_star = volume.profile(field, "thm3p", psi1, psi2, n_ref, region=region,
                                crit=crit, rel_tol=rel_tol).total
        t_star = time.time() - t0
        results = []
        gs = TABLE2_GRIDS[region]
        t0 = time.time()
        grid = volume.GridSpec(center=(0.0, 0.0), **gs)
        results.append(("grid", gs["counts"][0], gs["counts"][1],
                        volume.volume_grid(field, psi1, psi2, grid, region=region,
                                           crit=crit), time.time() - t0))
        n_psi, n_g = TABLE2_NG[name]
        t0 = time.time()
        results.append(("contour", n_psi, n_g,
                        volume.profile(field, "contour", psi1, psi2, n_psi,
                                       region=region, crit=crit, N_g=n_g,
                                       rel_tol=rel_tol).total, time.time() - t0))
        t0 = time.time()
        results.append(("thm3p", 100, None,
                        volume.profile(field, "thm3p", psi1, psi2, 100, region=region,
                                       crit=crit, rel_tol=rel_tol).total, time.time() - t0))
        t0 = time.time()
        results.append(("thm4", 100, None,
                        volume.profile(field, "thm4", psi1, psi2, 100, region=region,
                                       crit=crit, rel_tol=rel_tol).total, time.time() - t0))
        for label, N1, N2, V, dt in results:
            rows.append((name, label, psi1, psi2, N1, N2 if N2 else float("nan"),
                         V, v_star, abs(V - v_star) / v_star, dt))
        rows.append((name, "thm3p_ref", psi1, psi2, n_ref, float("nan"),
                     v_star, v_star, 0.0, t_star))
    header = ["interval", "method", "Psi1", "Psi2", "N1", "N2", "V0", "V_star",
              "rel_err_vs_Vstar", "runtime_s"]
    if out:
        write_csv(out + ".csv", header, rows)
        write_meta(out + ".json", dict(table="table2", version=__version__,
                                       note="runtime column informational only"))
    return header, rows


def cmd_table(cfg, which):
    out = cfg.get("out", which)
    if which == "table1":
        header, rows = run_table1(out=out)
    elif which == "table2":
        header, rows = run_table2(out=out)
    else:
        raise ConfigError(f"unknown table '{which}'")
    width = max(len(h) for h in header)
    print(",".join(header))
    for row in rows:
        print(",".join(v if isinstance(v, str) else f"{v:.6f}" for v in row))
    return EXIT_OK


# ---------------------------------------------------------------------------
# diagnostics
# ---------------------------------------------------------------------------

def cmd_diagnostics(cfg):
    field = build_field(cfg)
    if field.chart != "adapted":
        raise ConfigError("diagnostics are defined for the helical field")
    crit = surfaces.find_critical_points(field)
    n = cfg.get("n", 12)
    out = cfg.get("out", "diagnostics")
    avg_counts = (1, 10, 20, 30)
    q_values = (4, 5, 6, 7)
    margin = 0.04  # fraction of each region interval kept away from its ends

    spans = {
        Region.INNER: (crit.psi_sep, 0.0),
        Region.ISLAND: (crit.psi_o, crit.psi_sep),
        Region.OUTER: (crit.psi_sep, float(field.psi_label_section(0.78, 0.0))),
    }
    rows = []
    for region, (lo, hi) in spans.items():
        w = hi - lo
        ladder = np.linspace(lo + margin * w, hi - margin * w, n)
        for P in ladder:
            row = [region.value, float(P)]
            try:
                pt = volume._seed_point(field, P, region, crit)
                gens = surfaces.lattice_generators(field, pt)
                row.append(gens.T2[1])
                spec = tracer.TraceSpec(field=field, x0=pt, rhs="B",
                                        max_crossings=8 * max(avg_counts))
                events = tracer.uline_crossings(spec, n_valid=max(avg_counts))
                valid_t = [ev.t for ev in events if ev.valid]
                for N in avg_counts:
                    row.append(valid_t[N - 1] / N)
                for qv in q_values:
                    rho_hat = surfaces.harmonic_average_rho(field, pt, gens, q=qv)
                    row.append(1.0 / rho_hat)
            except tracer.MaxTimeExceeded:
                row.extend([float("nan")] * (1 + len(avg_counts) + len(q_values)))
            rows.append(tuple(row))
    header = (["region", "Psi", "T"]
              + [f"T_avg_{N}" for N in avg_counts]
              + [f"inv_rho_hat_q{qv}" for qv in q_values])
    write_csv(out + ".csv", header, rows)
    write_meta(out + ".json", dict(config=cfg, version=__version__))
    print(f"wrote {out}.csv ({len(rows)} rows)")
    return EXIT_OK


# ---------------------------------------------------------------------------
# invariant suite
# ---------------------------------------------------------------------------

def _fd_partial(f, p, i, h):
    pp = np.array(p, dtype=float)
    pm = pp.copy()
    pp[i] += h
    pm[i] -= h
    return (np.asarray(f(pp)) - np.asarray(f(pm))) / (2.0 * h)


def _div_B_residual(field, pts, h=1e-6):
    """max |div(sqrt|g| B)| / (sqrt|g| |B|) by centered differences."""
    worst = 0.0
    for p in pts.T:
        div = 0.0
        for i in range(3):
            div += _fd_partial(lambda x: field.sqrt_g(x) * field.b_contra(x)[i], p, i, h)
        scale = field.sqrt_g(p) * np.linalg.norm(field.b_contra(p))
        worst = max(worst, abs(div) / scale)
    return worst


def _commutator_residual(field, pts, h=1e-6):
    """max |[u, v]| components by centered differences (v = B/rho)."""
    worst = 0.0
    for p in pts.T:
        u = field.u_contra(p)
        for i in range(3):
            # u has constant components, so [u,v]^i = u^j d_j v^i
            grad = np.array([_fd_partial(lambda x: field.v_contra(x)[i], p, j, h)
                             for j in range(3)])
            worst = max(worst, abs(float(u @ grad)))
    return worst


def _random_helical_points(field, rng, n, psi_hi=0.3):
    psi = rng.uniform(0.01, psi_hi, n)
    vth = rng.uniform(-math.pi, math.pi, n)
    phi = rng.uniform(-math.pi, math.pi, n)
    return np.stack([psi, vth, phi])


def _random_axisym_points(field, rng, n):
    rad = rng.uniform(0.05, 0.8 * field.r0, n)
    ang = rng.uniform(-math.pi, math.pi, n)
    phi = rng.uniform(-math.pi, math.pi, n)
    return np.stack([1.0 + rad * np.cos(ang), phi, rad * np.sin(ang)])


def run_checks(seed=12345, verbose=True):
    """Invariant suite behind ``check``; returns list of (name, ok, detail)."""
    rng = np.random.default_rng(seed)
    hel = HelicalField()
    ax = AxisymmetricField()
    results = []

    def record(name, value, bound):
        ok = value <= bound
        results.append((name, ok, f"{value:.3e} <= {bound:.0e}"))
        if verbose:
            print(f"[{'PASS' if ok else 'FAIL'}] {name}: {value:.3e} (bound {bound:.0e})")

    # chart round-trips
    from . import coords
    psi = rng.uniform(1e-4, 0.9 * hel.B0 * hel.R0**2, 1000)
    vth = rng.uniform(-math.pi, math.pi, 1000)
    phi = rng.uniform(-math.pi, math.pi, 1000)
    R, ph, z = coords.cyl_of_adapted(psi, vth, phi, hel.B0, hel.R0)
    psi2, vth2, _ = coords.adapted_of_cyl(R, ph, z, hel.B0, hel.R0)
    err = np.max(np.abs(psi2 - psi) / np.maximum(np.abs(psi), 1e-3))
    err = max(err, np.max(np.abs(np.angle(np.exp(1j * (vth2 - vth))))))
    y, zz = coords.symplectic_of_adapted(psi, vth, hel.B0)
    psi3, vth3 = coords.adapted_of_symplectic(y, zz, hel.B0)
    err = max(err, np.max(np.abs(psi3 - psi) / np.maximum(psi, 1e-3)))
    record("chart round-trips", float(err), 1e-12)

    # divergence-free (both models)
    record("div B (helical)", _div_B_residual(hel, _random_helical_points(hel, rng, 300)), 1e-6)
    record("div B (axisym)", _div_B_residual(ax, _random_axisym_points(ax, rng, 300)), 1e-6)

    # Lie-commutation of u with the scaled field
    record("[u, B/rho] (helical)", _commutator_residual(hel, _random_helical_points(hel, rng, 200)), 1e-6)

    # flux-label conservation along traced lines (10 transits)
    worst = 0.0
    for y0 in (0.12, 0.25, 0.72):
        psi0, vth0 = adapted_of_symplectic(y0, 0.0, hel.B0)
        spec = tracer.TraceSpec(field=hel, x0=(psi0, vth0, 0.0), rhs="B")
        worst = max(worst, tracer.psi_drift(spec, 10.0 * 4.0 * math.pi))
    record("Psi drift per 10 transits", worst, 1e-7)

    # u-line-start invariance of the return time
    crit = surfaces.find_critical_points(hel)
    worst = 0.0
    for region, Psi in ((Region.INNER, -0.0103), (Region.OUTER, -0.0153)):
        cont = surfaces.extract_contour(hel, Psi, region, 16, crit=crit)
        ts = []
        for idx in (0, 5, 11):
            yy, zz = cont.loops[0][idx]
            p0, v0 = adapted_of_symplectic(yy, zz, hel.B0)
            spec = tracer.TraceSpec(field=hel, x0=(p0, v0, 0.0), rhs="v")
            ts.append(tracer.return_to_uline(spec).t)
        worst = max(worst, (max(ts) - min(ts)) / min(ts))
    record("T start-invariance", worst, 1e-6)

    # grid-method convergence exponent (axisymmetric, doubling ladder)
    Psi_t = 0.18
    sizes = (40, 80, 160, 320)
    errs = []
    for N in sizes:
        g = volume.GridSpec(center=(1.0, 0.0), half_extents=(0.9, 0.9), counts=(N, N))
        V = volume.volume_grid(ax, 0.0, Psi_t, g)
        errs.append(abs(V - ax.exact_volume(Psi_t)) / ax.exact_volume(Psi_t))
    slope = -np.polyfit(np.log([N * N for N in sizes]), np.log(errs), 1)[0]
    ok = slope >= 0.6
    results.append(("grid convergence exponent", ok, f"{slope:.3f} >= 0.6"))
    if verbose:
        print(f"[{'PASS' if ok else 'FAIL'}] grid convergence exponent: {slope:.3f} (>= 0.6)")

    return results


def cmd_check(cfg):
    results = run_checks(seed=cfg.get("seed", 12345))
    n_fail = sum(1 for _, ok, _ in results if not ok)
    print(f"{len(results) - n_fail}/{len(results)} checks passed")
    return EXIT_OK if n_fail == 0 else EXIT_NUMERICAL


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def _merge_config(args):
    cfg = {}
    if args.config:
        cfg.update(parse_config_file(args.config))
    for key in _CONFIG_KEYS:
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    return cfg


def main(argv=None):
    parser = argparse.ArgumentParser(prog="fluxvol",
                                     description="flux-surface volume computations")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", help="key = value configuration file")
        p.add_argument("--field", choices=("axisym", "helical"))
        p.add_argument("--eps", type=float)
        p.add_argument("--C", type=float)
        p.add_argument("--out")
        p.add_argument("--seed", type=int)

    pv = sub.add_parser("volume", help="one volume computation")
    add_common(pv)
    pv.add_argument("--method", choices=("grid", "contour", "thm1", "thm3p", "thm4"))
    pv.add_argument("--region", choices=tuple(r.value for r in Region))
    pv.add_argument("--psi", type=float, help="outer Psi bound (anchor at the region reference)")
    pv.add_argument("--psi1", type=float)
    pv.add_argument("--psi2", type=float)
    pv.add_argument("--n", type=int, help="Psi-ladder size")
    pv.add_argument("--n1", type=int)
    pv.add_argument("--n2", type=int)
    pv.add_argument("--ng", type=int, help="contour nodes per loop")
    pv.add_argument("--q", type=int)
    pv.add_argument("--n-avg", dest="n_avg", type=int)
    pv.add_argument("--rel-tol", dest="rel_tol", type=float)
    pv.add_argument("--abs-tol", dest="abs_tol", type=float)
    pv.add_argument("--reference", action="store_true", default=None,
                    help="print relative error vs the analytic volume (axisym)")

    pt = sub.add_parser("table", help="reproduce a benchmark table")
    add_common(pt)
    pt.add_argument("which", choices=("table1", "table2"))

    pd = sub.add_parser("diagnostics", help="return-time / harmonic-average data")
    add_common(pd)
    pd.add_argument("--n", type=int, help="Psi samples per region")

    pc = sub.add_parser("check", help="run the invariant suite")
    add_common(pc)

    args = parser.parse_args(argv)
    try:
        cfg = _merge_config(args)
        if args.command == "volume":
            return cmd_volume(cfg)
        if args.command == "table":
            return cmd_table(cfg, args.which)
        if args.command == "diagnostics":
            return cmd_diagnostics(cfg)
        if args.command == "check":
            return cmd_check(cfg)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except tracer.TraceError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
